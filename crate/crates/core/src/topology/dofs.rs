use std::collections::HashMap;

use super::{BoundaryKind, MultiPatchDomain, Side, SideKind};
use crate::error::{check_len, Error, Result};
use crate::spline::{basis_and_derivative, UnivariateSpace};

/// Local index of an eliminated (Dirichlet) dof.
pub const ELIMINATED: u32 = u32::MAX;

/// Position of a patch-local tensor index along one direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EntityState {
    Lo,
    Mid,
    Hi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PieceKind {
    Vertex,
    Edge,
    Face,
    Interior,
}

/// One set of the dof partition, described in the tensor indexing of its
/// lowest-indexed adjacent patch.
#[derive(Debug, Clone, PartialEq)]
pub struct Piece {
    pub kind: PieceKind,
    pub patch: usize,
    pub states: [EntityState; 3],
    /// Global dofs in tensor order of `patch` (first free direction fastest).
    pub dofs: Vec<u32>,
    /// Free parameter directions of `patch` along the piece.
    pub dirs: Vec<usize>,
    /// Elements of `patch` along each of `dirs`.
    pub elements: Vec<usize>,
    /// Grid size of `patch`: `1 / max_i n_i`.
    pub h: f64,
}

impl Piece {
    /// Extent of the piece dof grid along each free direction.
    pub fn shape(&self, degree: usize) -> Vec<usize> {
        self.elements.iter().map(|&n| n + degree - 2).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PieceDecomposition {
    pub pieces: Vec<Piece>,
}

impl PieceDecomposition {
    pub fn count(&self, kind: PieceKind) -> usize {
        self.pieces.iter().filter(|p| p.kind == kind).count()
    }
}

/// Patch-local tensor indices to global dof numbers on one level.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMapper {
    dim: usize,
    degree: usize,
    elements: Vec<[usize; 3]>,
    local_to_global: Vec<Vec<u32>>,
    num_dofs: usize,
    patch_offsets: Vec<usize>,
    patch_lists: Vec<u32>,
    canonical: Vec<(u32, u32)>,
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

fn tensor_index(idx: &[usize; 3], dims: &[usize; 3]) -> usize {
    idx[0] + dims[0] * (idx[1] + dims[1] * idx[2])
}

fn tensor_coords(mut l: usize, dims: &[usize; 3]) -> [usize; 3] {
    let i = l % dims[0];
    l /= dims[0];
    let j = l % dims[1];
    [i, j, l / dims[1]]
}

impl DofMapper {
    /// Builds the mapper for `level` with degree `degree`, identifying
    /// interface dofs through the stored orientations and eliminating dofs on
    /// Dirichlet sides.
    pub fn build(domain: &MultiPatchDomain, level: usize, degree: usize) -> Result<Self> {
        if degree == 0 {
            return Err(Error::Config("degree must be at least 1".into()));
        }
        let dim = domain.dim();
        let k = domain.num_patches();
        let elements: Vec<[usize; 3]> = (0..k).map(|i| domain.elements(i, level)).collect();
        let dims: Vec<[usize; 3]> = elements
            .iter()
            .map(|n| {
                let mut d = [1; 3];
                for i in 0..dim {
                    d[i] = n[i] + degree;
                }
                d
            })
            .collect();
        let mut offsets = vec![0usize; k + 1];
        for i in 0..k {
            offsets[i + 1] = offsets[i] + dims[i].iter().product::<usize>();
        }
        let total = offsets[k];
        let mut uf = UnionFind::new(total);

        for itf in domain.interfaces() {
            let (pa, sa, pb, sb) = (itf.patch_a, itf.side_a, itf.patch_b, itf.side_b);
            let ta = sa.tangents(dim);
            let tb = sb.tangents(dim);
            let ext_a: Vec<usize> = ta.iter().map(|&t| dims[pa][t]).collect();
            let ext_b: Vec<usize> = tb.iter().map(|&t| dims[pb][t]).collect();
            if itf.orientation.permute_dims(&ext_a) != ext_b {
                return Err(Error::NonMatching(format!(
                    "discretizations of patches {pa} and {pb} differ on their interface"
                )));
            }
            let count: usize = ext_a.iter().product();
            for c in 0..count {
                let ab = if dim == 2 {
                    vec![c]
                } else {
                    vec![c % ext_a[0], c / ext_a[0]]
                };
                let uv = itf.orientation.map_indices(&ab, &ext_b);
                let mut ia = [0; 3];
                ia[sa.dir] = if sa.upper { dims[pa][sa.dir] - 1 } else { 0 };
                for (m, &t) in ta.iter().enumerate() {
                    ia[t] = ab[m];
                }
                let mut ib = [0; 3];
                ib[sb.dir] = if sb.upper { dims[pb][sb.dir] - 1 } else { 0 };
                for (m, &t) in tb.iter().enumerate() {
                    ib[t] = uv[m];
                }
                uf.union(
                    offsets[pa] + tensor_index(&ia, &dims[pa]),
                    offsets[pb] + tensor_index(&ib, &dims[pb]),
                );
            }
        }

        let mut dirichlet = vec![false; total];
        for p in 0..k {
            let size = offsets[p + 1] - offsets[p];
            for l in 0..size {
                let idx = tensor_coords(l, &dims[p]);
                let on_d = (0..2 * dim).any(|s| {
                    let side = Side::from_index(s);
                    let at = if side.upper { dims[p][side.dir] - 1 } else { 0 };
                    idx[side.dir] == at
                        && domain.side_kind(p, side) == SideKind::Boundary(BoundaryKind::Dirichlet)
                });
                if on_d {
                    let r = uf.find(offsets[p] + l);
                    dirichlet[r] = true;
                }
            }
        }

        let mut class_id = vec![ELIMINATED; total];
        let mut num_dofs = 0usize;
        let mut local_to_global = Vec::with_capacity(k);
        let mut canonical = Vec::new();
        let mut lists: Vec<Vec<u32>> = Vec::new();
        for p in 0..k {
            let size = offsets[p + 1] - offsets[p];
            let mut map = vec![ELIMINATED; size];
            for (l, slot) in map.iter_mut().enumerate() {
                let r = uf.find(offsets[p] + l);
                if dirichlet[r] {
                    continue;
                }
                if class_id[r] == ELIMINATED {
                    class_id[r] = num_dofs as u32;
                    num_dofs += 1;
                    canonical.push((p as u32, l as u32));
                    lists.push(Vec::new());
                }
                let g = class_id[r];
                *slot = g;
                let list = &mut lists[g as usize];
                if list.last() != Some(&(p as u32)) {
                    list.push(p as u32);
                }
            }
            local_to_global.push(map);
        }
        let mut patch_offsets = Vec::with_capacity(num_dofs + 1);
        patch_offsets.push(0);
        let mut patch_lists = Vec::new();
        for l in lists {
            patch_lists.extend(l);
            patch_offsets.push(patch_lists.len());
        }
        Ok(Self {
            dim,
            degree,
            elements,
            local_to_global,
            num_dofs,
            patch_offsets,
            patch_lists,
            canonical,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn num_dofs(&self) -> usize {
        self.num_dofs
    }

    pub fn num_patches(&self) -> usize {
        self.elements.len()
    }

    pub fn elements(&self, patch: usize) -> [usize; 3] {
        self.elements[patch]
    }

    /// Local tensor extents (`n + p` per direction, 1 beyond `dim`).
    pub fn local_dims(&self, patch: usize) -> [usize; 3] {
        let mut d = [1; 3];
        for i in 0..self.dim {
            d[i] = self.elements[patch][i] + self.degree;
        }
        d
    }

    pub fn local_size(&self, patch: usize) -> usize {
        self.local_to_global[patch].len()
    }

    /// Global dof per local tensor index, `ELIMINATED` for Dirichlet dofs.
    pub fn local_to_global(&self, patch: usize) -> &[u32] {
        &self.local_to_global[patch]
    }

    /// Patches whose closure supports the global dof, ascending.
    pub fn dof_patches(&self, dof: usize) -> &[u32] {
        &self.patch_lists[self.patch_offsets[dof]..self.patch_offsets[dof + 1]]
    }

    /// Lowest patch holding the dof and its local index there.
    pub fn canonical(&self, dof: usize) -> (usize, usize) {
        let (p, l) = self.canonical[dof];
        (p as usize, l as usize)
    }

    /// Free-ended univariate spaces of `patch`.
    pub fn spaces(&self, patch: usize) -> Vec<UnivariateSpace> {
        (0..self.dim)
            .map(|i| UnivariateSpace::new(self.degree, self.elements[patch][i]).expect("valid space"))
            .collect()
    }

    pub fn h(&self, patch: usize) -> f64 {
        let n = self.elements[patch][..self.dim].iter().copied().max().unwrap_or(1);
        1.0 / n as f64
    }

    /// Values of the global function with coefficients `coeffs` at parameter
    /// point `xhat` of `patch`.
    pub fn eval_function(&self, patch: usize, coeffs: &[f64], xhat: &[f64]) -> Result<f64> {
        check_len(self.num_dofs, coeffs.len())?;
        check_len(self.dim, xhat.len())?;
        let dims = self.local_dims(patch);
        let mut firsts = [0usize; 3];
        let mut vals: [Vec<f64>; 3] = [vec![1.0], vec![1.0], vec![1.0]];
        for k in 0..self.dim {
            let x = xhat[k];
            if !(0.0..=1.0).contains(&x) {
                return Err(Error::Domain(format!("parameter point {xhat:?} outside [0,1]^d")));
            }
            let n = self.elements[patch][k];
            let e = ((x * n as f64).floor() as usize).min(n - 1);
            firsts[k] = e;
            vals[k] = basis_and_derivative(self.degree, n, e, x).0;
        }
        let map = &self.local_to_global[patch];
        let mut sum = 0.0;
        for (c, vc) in vals[2].iter().enumerate() {
            for (b, vb) in vals[1].iter().enumerate() {
                for (a, va) in vals[0].iter().enumerate() {
                    let idx = [firsts[0] + a, firsts[1] + b, firsts[2] + c];
                    let g = map[tensor_index(&idx, &dims)];
                    if g != ELIMINATED {
                        sum += coeffs[g as usize] * va * vb * vc;
                    }
                }
            }
        }
        Ok(sum)
    }

    /// Partition of the global dofs into vertex, edge, face and interior
    /// pieces, by the position of each dof in its lowest adjacent patch.
    pub fn pieces(&self) -> PieceDecomposition {
        let mut index: HashMap<(usize, [EntityState; 3]), usize> = HashMap::new();
        let mut pieces: Vec<Piece> = Vec::new();
        for g in 0..self.num_dofs {
            let (patch, l) = self.canonical(g);
            let dims = self.local_dims(patch);
            let idx = tensor_coords(l, &dims);
            let mut states = [EntityState::Mid; 3];
            for k in 0..self.dim {
                states[k] = if idx[k] == 0 {
                    EntityState::Lo
                } else if idx[k] == dims[k] - 1 {
                    EntityState::Hi
                } else {
                    EntityState::Mid
                };
            }
            let slot = *index.entry((patch, states)).or_insert_with(|| {
                let dirs: Vec<usize> = (0..self.dim).filter(|&k| states[k] == EntityState::Mid).collect();
                let kind = match (dirs.len(), self.dim) {
                    (0, _) => PieceKind::Vertex,
                    (1, _) => PieceKind::Edge,
                    (2, 3) => PieceKind::Face,
                    _ => PieceKind::Interior,
                };
                pieces.push(Piece {
                    kind,
                    patch,
                    states,
                    dofs: Vec::new(),
                    elements: dirs.iter().map(|&k| self.elements[patch][k]).collect(),
                    dirs,
                    h: self.h(patch),
                });
                pieces.len() - 1
            });
            pieces[slot].dofs.push(g as u32);
        }
        PieceDecomposition { pieces }
    }
}
