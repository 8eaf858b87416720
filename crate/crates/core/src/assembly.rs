//! Patch-local Galerkin assembly through the geometry pullback. The global
//! stiffness matrix exists only as the sum of patch blocks.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{check_len, Result};
use crate::linalg::CsrMatrix;
use crate::spline::{ElementTable, UnivariateSpace};
use crate::topology::{DofMapper, GeometryMap, MultiPatchDomain, SourceTerm};

const ELIMINATED: u32 = u32::MAX;

struct PatchQuadrature {
    dim: usize,
    degree: usize,
    tables: Vec<ElementTable>,
    dims: [usize; 3],
    elements: [usize; 3],
}

impl PatchQuadrature {
    fn new(spaces: &[UnivariateSpace]) -> Self {
        let dim = spaces.len();
        let degree = spaces[0].degree();
        let mut dims = [1; 3];
        let mut elements = [1; 3];
        let tables = spaces
            .iter()
            .enumerate()
            .map(|(k, s)| {
                dims[k] = s.full_dim();
                elements[k] = s.elements();
                ElementTable::new(s.degree(), s.elements(), s.degree() + 1)
            })
            .collect();
        Self {
            dim,
            degree,
            tables,
            dims,
            elements,
        }
    }

    fn nq(&self) -> usize {
        (self.degree + 1).pow(self.dim as u32)
    }

    fn element_count(&self) -> usize {
        self.elements.iter().product()
    }

    fn element(&self, e: usize) -> [usize; 3] {
        let n = &self.elements;
        [e % n[0], (e / n[0]) % n[1], e / (n[0] * n[1])]
    }

    /// Splits a flat per-element index into per-direction indices.
    fn split(&self, flat: usize) -> [usize; 3] {
        let m = self.degree + 1;
        let mut out = [0; 3];
        let mut r = flat;
        for slot in out.iter_mut().take(self.dim) {
            *slot = r % m;
            r /= m;
        }
        out
    }

    fn local_index(&self, el: &[usize; 3], a: &[usize; 3]) -> usize {
        let i = [el[0] + a[0], el[1] + a[1], el[2] + a[2]];
        i[0] + self.dims[0] * (i[1] + self.dims[1] * i[2])
    }

    fn point(&self, el: &[usize; 3], q: &[usize; 3]) -> ([f64; 3], f64) {
        let mut x = [0.0; 3];
        let mut w = 1.0;
        for k in 0..self.dim {
            x[k] = self.tables[k].point(el[k], q[k]);
            w *= self.tables[k].weight(el[k], q[k]);
        }
        (x, w)
    }

    /// Value and gradient of local basis function `a` at quadrature point `q`.
    fn basis(&self, el: &[usize; 3], q: &[usize; 3], a: &[usize; 3]) -> (f64, [f64; 3]) {
        let mut v = [1.0; 3];
        let mut d = [0.0; 3];
        for k in 0..self.dim {
            v[k] = self.tables[k].values(el[k], q[k])[a[k]];
            d[k] = self.tables[k].derivs(el[k], q[k])[a[k]];
        }
        let val = v[0] * v[1] * v[2];
        let mut grad = [0.0; 3];
        for k in 0..self.dim {
            let mut g = d[k];
            for m in 0..self.dim {
                if m != k {
                    g *= v[m];
                }
            }
            grad[k] = g;
        }
        (val, grad)
    }
}

/// Stiffness block of one patch over its full local tensor index set
/// (Dirichlet dofs included), by an element loop with dense element matrices.
pub fn assemble_patch_stiffness(geometry: &GeometryMap, spaces: &[UnivariateSpace]) -> Result<CsrMatrix> {
    let quad = PatchQuadrature::new(spaces);
    let d = quad.dim;
    let p = quad.degree;
    let nb = quad.nq();
    let nq = quad.nq();
    let dims = quad.dims;
    let size: usize = dims.iter().product();

    // each row couples with a box of at most (2p+1)^d columns
    let w = 2 * p + 1;
    let box_size = w.pow(d as u32);
    let mut dense = vec![0.0; size * box_size];

    let mut grads = DMatrix::<f64>::zeros(d * nq, nb);
    let mut flux = DMatrix::<f64>::zeros(d * nq, nb);
    let mut local = DMatrix::<f64>::zeros(nb, nb);
    let a_idx: Vec<[usize; 3]> = (0..nb).map(|a| quad.split(a)).collect();

    for e in 0..quad.element_count() {
        let el = quad.element(e);
        for qf in 0..nq {
            let q = quad.split(qf);
            let (x, wq) = quad.point(&el, &q);
            let jac = geometry.jacobian(&x[..d])?;
            let c = jac.pullback_coefficients();
            for (a, ai) in a_idx.iter().enumerate() {
                let (_, g) = quad.basis(&el, &q, ai);
                for i in 0..d {
                    grads[(qf * d + i, a)] = g[i];
                    let mut s = 0.0;
                    for j in 0..d {
                        s += c[i][j] * g[j];
                    }
                    flux[(qf * d + i, a)] = wq * s;
                }
            }
        }
        local.gemm_tr(1.0, &grads, &flux, 0.0);
        for (a, ai) in a_idx.iter().enumerate() {
            let row = quad.local_index(&el, ai);
            for (b, bi) in a_idx.iter().enumerate() {
                // column offset inside the row's coupling box
                let mut off = 0;
                let mut stride = 1;
                for k in 0..d {
                    off += (bi[k] + p - ai[k]) * stride;
                    stride *= w;
                }
                dense[row * box_size + off] += local[(a, b)];
            }
        }
    }

    let mut row_ptr = Vec::with_capacity(size + 1);
    let mut col_idx = Vec::new();
    let mut values = Vec::new();
    row_ptr.push(0);
    for row in 0..size {
        let ri = [row % dims[0], (row / dims[0]) % dims[1], row / (dims[0] * dims[1])];
        for off in 0..box_size {
            let oi = [off % w, (off / w) % w, off / (w * w)];
            let mut col = [0usize; 3];
            let mut inside = true;
            for k in 0..3 {
                let o = if k < d { oi[k] as isize - p as isize } else { 0 };
                let c = ri[k] as isize + o;
                if c < 0 || c >= dims[k] as isize {
                    inside = false;
                    break;
                }
                col[k] = c as usize;
            }
            if !inside {
                continue;
            }
            let v = dense[row * box_size + off];
            if v != 0.0 {
                col_idx.push((col[0] + dims[0] * (col[1] + dims[1] * col[2])) as u32);
                values.push(v);
            }
        }
        row_ptr.push(col_idx.len());
    }
    Ok(CsrMatrix::from_parts(size, size, row_ptr, col_idx, values))
}

/// `∫ f(G(x̂)) B̂_i(x̂) |det J(x̂)| dx̂` for every local tensor basis function.
pub fn assemble_patch_rhs(
    geometry: &GeometryMap,
    spaces: &[UnivariateSpace],
    f: &dyn Fn(&[f64]) -> f64,
) -> Result<Vec<f64>> {
    let quad = PatchQuadrature::new(spaces);
    let d = quad.dim;
    let nb = quad.nq();
    let size: usize = quad.dims.iter().product();
    let mut out = vec![0.0; size];
    let a_idx: Vec<[usize; 3]> = (0..nb).map(|a| quad.split(a)).collect();
    for e in 0..quad.element_count() {
        let el = quad.element(e);
        for qf in 0..quad.nq() {
            let q = quad.split(qf);
            let (x, wq) = quad.point(&el, &q);
            let (phys, jac) = geometry.eval_with_jacobian(&x[..d])?;
            let fw = f(&phys[..d]) * jac.det.abs() * wq;
            if fw == 0.0 {
                continue;
            }
            for ai in &a_idx {
                let (v, _) = quad.basis(&el, &q, ai);
                out[quad.local_index(&el, ai)] += fw * v;
            }
        }
    }
    Ok(out)
}

/// `y = Σ_k E_kᵀ A_k E_k x`, where `maps[k]` sends local indices of block `k`
/// to positions in `x` and `y` (`u32::MAX` for eliminated dofs). Blocks are
/// processed in the given order.
pub fn apply_blocks<'a>(
    parts: impl Iterator<Item = (&'a CsrMatrix, &'a [u32])>,
    x: &[f64],
    y: &mut [f64],
) {
    y.iter_mut().for_each(|v| *v = 0.0);
    let mut xl = Vec::new();
    for (block, map) in parts {
        xl.clear();
        xl.extend(map.iter().map(|&g| if g == ELIMINATED { 0.0 } else { x[g as usize] }));
        let rp = block.row_ptr();
        let ci = block.col_idx();
        let vals = block.values();
        for (row, &g) in map.iter().enumerate() {
            if g == ELIMINATED {
                continue;
            }
            let mut acc = 0.0;
            for k in rp[row]..rp[row + 1] {
                acc += vals[k] * xl[ci[k] as usize];
            }
            y[g as usize] += acc;
        }
    }
}

/// Removes rows and columns of eliminated dofs from a full local block.
fn strip_eliminated(block: &CsrMatrix, map: &[u32]) -> Result<CsrMatrix> {
    let mut row_ptr = vec![0];
    let mut col_idx = Vec::new();
    let mut values = Vec::new();
    for (row, &g) in map.iter().enumerate() {
        if g != ELIMINATED {
            for (c, v) in block.row(row) {
                if map[c] != ELIMINATED {
                    col_idx.push(c as u32);
                    values.push(v);
                }
            }
        }
        row_ptr.push(col_idx.len());
    }
    Ok(CsrMatrix::from_parts(block.nrows(), block.ncols(), row_ptr, col_idx, values))
}

/// Stiffness operator of one level, stored as patch blocks in local indexing.
#[derive(Debug, Clone)]
pub struct SparseOperator {
    mapper: Arc<DofMapper>,
    blocks: Vec<CsrMatrix>,
}

impl SparseOperator {
    pub fn assemble(domain: &MultiPatchDomain, mapper: Arc<DofMapper>) -> Result<Self> {
        let blocks = (0..domain.num_patches())
            .map(|k| patch_block(domain, &mapper, k))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { mapper, blocks })
    }

    pub fn from_blocks(mapper: Arc<DofMapper>, blocks: Vec<CsrMatrix>) -> Result<Self> {
        check_len(mapper.num_patches(), blocks.len())?;
        for (k, b) in blocks.iter().enumerate() {
            check_len(mapper.local_size(k), b.nrows())?;
        }
        Ok(Self { mapper, blocks })
    }

    pub fn mapper(&self) -> &Arc<DofMapper> {
        &self.mapper
    }

    pub fn blocks(&self) -> &[CsrMatrix] {
        &self.blocks
    }

    pub fn dim(&self) -> usize {
        self.mapper.num_dofs()
    }

    /// Stored entries summed over all blocks.
    pub fn nnz(&self) -> usize {
        self.blocks.iter().map(|b| b.nnz()).sum()
    }

    /// `y = A x` (overwrites `y`).
    pub fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        check_len(self.dim(), x.len())?;
        check_len(self.dim(), y.len())?;
        apply_blocks(
            self.blocks
                .iter()
                .enumerate()
                .map(|(k, b)| (b, self.mapper.local_to_global(k))),
            x,
            y,
        );
        Ok(())
    }

    /// The explicitly summed global matrix.
    pub fn to_global(&self) -> CsrMatrix {
        let mut trip = Vec::with_capacity(self.nnz());
        for (k, b) in self.blocks.iter().enumerate() {
            let map = self.mapper.local_to_global(k);
            for row in 0..b.nrows() {
                for (c, v) in b.row(row) {
                    trip.push((map[row] as usize, map[c] as usize, v));
                }
            }
        }
        CsrMatrix::from_triplets(self.dim(), self.dim(), &trip)
    }
}

/// Stiffness block of one patch in its local tensor numbering, with rows and
/// columns of eliminated dofs left empty.
pub fn patch_block(domain: &MultiPatchDomain, mapper: &DofMapper, patch: usize) -> Result<CsrMatrix> {
    let full = assemble_patch_stiffness(domain.patch(patch), &mapper.spaces(patch))?;
    strip_eliminated(&full, mapper.local_to_global(patch))
}

/// Load vector in global numbering, summed over patches in ascending order.
pub fn assemble_rhs(domain: &MultiPatchDomain, mapper: &DofMapper, source: SourceTerm) -> Result<Vec<f64>> {
    let mut f = vec![0.0; mapper.num_dofs()];
    for k in 0..domain.num_patches() {
        let local = patch_rhs(domain, mapper, source, k)?;
        scatter_add(&local, mapper.local_to_global(k), &mut f);
    }
    Ok(f)
}

/// Load contribution of one patch in its local tensor numbering.
pub fn patch_rhs(domain: &MultiPatchDomain, mapper: &DofMapper, source: SourceTerm, patch: usize) -> Result<Vec<f64>> {
    if source == SourceTerm::Zero {
        return Ok(vec![0.0; mapper.local_size(patch)]);
    }
    assemble_patch_rhs(domain.patch(patch), &mapper.spaces(patch), &|x| source.eval(x))
}

/// `out[map[l]] += local[l]` for non-eliminated `l`.
pub fn scatter_add(local: &[f64], map: &[u32], out: &mut [f64]) {
    for (&v, &g) in local.iter().zip(map) {
        if g != ELIMINATED {
            out[g as usize] += v;
        }
    }
}
