//! Additive Schwarz smoother over the vertex, edge, face and interior pieces.
//!
//! The piece operators are
//!
//! * vertex: the scalar `(h/p)^(d-2)`,
//! * edge: `(h/p)^(d-1) K + (h/p)^(d-3) M` on the edge's interior spline space,
//! * face (3D): `(h/p) (K⊗M + M⊗K + (p/h)^2 M⊗M)`,
//! * interior: `K̂ + σ M̂` with the parameter-domain tensor stiffness and mass,
//!
//! where face and interior operators are inverted exactly by fast
//! diagonalization. The damping `τ` is left to the caller.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{check_len, Error, Result};
use crate::linalg::{BandedCholesky, BandedSymMatrix};
use crate::spline::{gen_eig, GenEigDecomposition, UnivariateSpace};
use crate::topology::{PieceDecomposition, PieceKind};

/// Default `σ = h^{-2} / SIGMA_SCALE` for the interior operators.
pub const DEFAULT_SIGMA_SCALE: f64 = 0.2;

pub fn vertex_scale(h: f64, p: usize, d: usize) -> f64 {
    (h / p as f64).powi(d as i32 - 2)
}

/// Coefficients `(a, b)` of the edge operator `a K + b M`.
pub fn edge_coefficients(h: f64, p: usize, d: usize) -> (f64, f64) {
    let r = h / p as f64;
    (r.powi(d as i32 - 1), r.powi(d as i32 - 3))
}

pub fn interior_sigma(h: f64, sigma_scale: f64) -> f64 {
    1.0 / (h * h * sigma_scale)
}

/// Exact inverse of `s (Σ_k K_k ⊗ Π_{j≠k} M_j + shift Π_k M_k)` through
/// per-direction generalized eigendecompositions.
#[derive(Debug, Clone)]
pub struct TensorSolver {
    shape: Vec<usize>,
    eigs: Vec<Arc<GenEigDecomposition>>,
    inv_diag: Vec<f64>,
}

impl TensorSolver {
    pub fn new(eigs: Vec<Arc<GenEigDecomposition>>, scale: f64, shift: f64) -> Self {
        let shape: Vec<usize> = eigs.iter().map(|e| e.dim()).collect();
        let size: usize = shape.iter().product();
        let mut inv_diag = Vec::with_capacity(size);
        for flat in 0..size {
            let mut r = flat;
            let mut s = shift;
            for (k, e) in eigs.iter().enumerate() {
                s += e.values[r % shape[k]];
                r /= shape[k];
            }
            inv_diag.push(1.0 / (scale * s));
        }
        Self { shape, eigs, inv_diag }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn inv_diag(&self) -> &[f64] {
        &self.inv_diag
    }

    /// Solves in place; `x` is laid out first direction fastest.
    pub fn solve_in_place(&self, x: &mut [f64], work: &mut Vec<f64>) {
        for (k, e) in self.eigs.iter().enumerate() {
            mode_product(x, &self.shape, k, &e.vectors, true, work);
        }
        for (v, d) in x.iter_mut().zip(&self.inv_diag) {
            *v *= d;
        }
        for (k, e) in self.eigs.iter().enumerate() {
            mode_product(x, &self.shape, k, &e.vectors, false, work);
        }
    }
}

/// Multiplies every fiber of `x` along axis `k` by `m` (or `mᵀ`).
fn mode_product(x: &mut [f64], shape: &[usize], k: usize, m: &DMatrix<f64>, transpose: bool, work: &mut Vec<f64>) {
    let n = shape[k];
    let inner: usize = shape[..k].iter().product();
    let outer: usize = shape[k + 1..].iter().product();
    work.resize(2 * n, 0.0);
    let (fiber, out) = work.split_at_mut(n);
    for o in 0..outer {
        for i in 0..inner {
            let base = i + o * inner * n;
            for (j, f) in fiber.iter_mut().enumerate() {
                *f = x[base + j * inner];
            }
            for (r, y) in out.iter_mut().enumerate() {
                let mut s = 0.0;
                if transpose {
                    let col = m.column(r);
                    for (c, f) in fiber.iter().enumerate() {
                        s += col[c] * f;
                    }
                } else {
                    for (c, f) in fiber.iter().enumerate() {
                        s += m[(r, c)] * f;
                    }
                }
                *y = s;
            }
            for (j, y) in out.iter().enumerate() {
                x[base + j * inner] = *y;
            }
        }
    }
}

#[derive(Debug, Clone)]
pub enum PieceSolver {
    /// Division by the stored scalar.
    Scalar(f64),
    Banded(BandedCholesky),
    Tensor(TensorSolver),
}

/// One term `P_T L_T^{-1} P_Tᵀ` of the additive smoother.
#[derive(Debug, Clone)]
pub struct PieceSmoother {
    pub kind: PieceKind,
    pub dofs: Vec<u32>,
    pub solver: Arc<PieceSolver>,
}

impl PieceSmoother {
    pub fn vertex(dof: u32, h: f64, p: usize, d: usize) -> Self {
        Self {
            kind: PieceKind::Vertex,
            dofs: vec![dof],
            solver: Arc::new(PieceSolver::Scalar(vertex_scale(h, p, d))),
        }
    }

    /// `elements` is the element count of the patch along the edge.
    pub fn edge(dofs: Vec<u32>, elements: usize, h: f64, p: usize, d: usize) -> Result<Self> {
        let s = UnivariateSpace::new(p, elements)?.interior();
        check_len(s.dim(), dofs.len())?;
        let (a, b) = edge_coefficients(h, p, d);
        let l = s.stiffness().linear_combination(a, &s.mass(), b);
        Ok(Self {
            kind: PieceKind::Edge,
            dofs,
            solver: Arc::new(PieceSolver::Banded(l.cholesky()?)),
        })
    }

    pub fn face(dofs: Vec<u32>, eigs: [Arc<GenEigDecomposition>; 2], h: f64, p: usize) -> Result<Self> {
        let r = h / p as f64;
        let solver = TensorSolver::new(eigs.to_vec(), r, 1.0 / (r * r));
        check_len(solver.inv_diag.len(), dofs.len())?;
        Ok(Self {
            kind: PieceKind::Face,
            dofs,
            solver: Arc::new(PieceSolver::Tensor(solver)),
        })
    }

    pub fn interior(dofs: Vec<u32>, eigs: Vec<Arc<GenEigDecomposition>>, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::Config(format!("interior shift σ must be positive, got {sigma}")));
        }
        let solver = TensorSolver::new(eigs, 1.0, sigma);
        check_len(solver.inv_diag.len(), dofs.len())?;
        Ok(Self {
            kind: PieceKind::Interior,
            dofs,
            solver: Arc::new(PieceSolver::Tensor(solver)),
        })
    }

    /// Solves `L_T x = r` in place on the piece-local vector.
    pub fn solve_in_place(&self, x: &mut [f64], work: &mut Vec<f64>) {
        match self.solver.as_ref() {
            PieceSolver::Scalar(s) => x.iter_mut().for_each(|v| *v /= s),
            PieceSolver::Banded(c) => c.solve_in_place(x),
            PieceSolver::Tensor(t) => t.solve_in_place(x, work),
        }
    }

    /// The same piece with dof numbers translated by `f`.
    pub fn remapped(&self, f: impl Fn(u32) -> u32) -> Self {
        Self {
            kind: self.kind,
            dofs: self.dofs.iter().map(|&g| f(g)).collect(),
            solver: Arc::clone(&self.solver),
        }
    }
}

/// `L^{-1} = Σ_T P_T L_T^{-1} P_Tᵀ` over a partition of the dofs.
#[derive(Debug, Clone)]
pub struct HybridSmoother {
    dim: usize,
    pieces: Vec<PieceSmoother>,
}

/// Cache of generalized eigendecompositions of the interior univariate
/// spaces, keyed by `(elements, degree)`.
#[derive(Debug, Default)]
pub struct EigCache {
    map: HashMap<(usize, usize), Arc<GenEigDecomposition>>,
}

impl EigCache {
    pub fn get(&mut self, elements: usize, p: usize) -> Result<Arc<GenEigDecomposition>> {
        if let Some(e) = self.map.get(&(elements, p)) {
            return Ok(Arc::clone(e));
        }
        let s = UnivariateSpace::new(p, elements)?.interior();
        let e = Arc::new(gen_eig(&s.stiffness(), &s.mass())?);
        self.map.insert((elements, p), Arc::clone(&e));
        Ok(e)
    }
}

impl HybridSmoother {
    /// Builds all piece smoothers of one level. Empty pieces are skipped.
    pub fn build(
        decomposition: &PieceDecomposition,
        num_dofs: usize,
        p: usize,
        d: usize,
        sigma_scale: f64,
    ) -> Result<Self> {
        if !(sigma_scale > 0.0) {
            return Err(Error::Config(format!("sigma scale must be positive, got {sigma_scale}")));
        }
        let mut cache = EigCache::default();
        let mut pieces = Vec::with_capacity(decomposition.pieces.len());
        for piece in &decomposition.pieces {
            if piece.dofs.is_empty() {
                continue;
            }
            let h = piece.h;
            let smoother = match piece.kind {
                PieceKind::Vertex => PieceSmoother::vertex(piece.dofs[0], h, p, d),
                PieceKind::Edge => PieceSmoother::edge(piece.dofs.clone(), piece.elements[0], h, p, d)?,
                PieceKind::Face => PieceSmoother::face(
                    piece.dofs.clone(),
                    [cache.get(piece.elements[0], p)?, cache.get(piece.elements[1], p)?],
                    h,
                    p,
                )?,
                PieceKind::Interior => {
                    let eigs = piece
                        .elements
                        .iter()
                        .map(|&n| cache.get(n, p))
                        .collect::<Result<Vec<_>>>()?;
                    PieceSmoother::interior(piece.dofs.clone(), eigs, interior_sigma(h, sigma_scale))?
                }
            };
            pieces.push(smoother);
        }
        Self::from_pieces(num_dofs, pieces)
    }

    pub fn from_pieces(dim: usize, pieces: Vec<PieceSmoother>) -> Result<Self> {
        for piece in &pieces {
            if let Some(&g) = piece.dofs.iter().find(|&&g| g as usize >= dim) {
                return Err(Error::SizeMismatch {
                    expected: dim,
                    actual: g as usize + 1,
                });
            }
        }
        Ok(Self { dim, pieces })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn pieces(&self) -> &[PieceSmoother] {
        &self.pieces
    }

    /// `out = L^{-1} r` (not damped).
    pub fn apply(&self, r: &[f64], out: &mut [f64]) -> Result<()> {
        check_len(self.dim, r.len())?;
        check_len(self.dim, out.len())?;
        self.apply_unchecked(r, out);
        Ok(())
    }

    pub(crate) fn apply_unchecked(&self, r: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut local = Vec::new();
        let mut work = Vec::new();
        for piece in &self.pieces {
            local.clear();
            local.extend(piece.dofs.iter().map(|&g| r[g as usize]));
            piece.solve_in_place(&mut local, &mut work);
            for (&g, &v) in piece.dofs.iter().zip(&local) {
                out[g as usize] = v;
            }
        }
    }
}

/// Dense matrix of a banded symmetric operator applied on a tensor grid:
/// `Σ_k A_k ⊗ Π_{j≠k} B_j + shift Π_k B_k`. Used by tests as an oracle.
pub fn dense_tensor_sum(a: &[BandedSymMatrix], b: &[BandedSymMatrix], shift: f64) -> DMatrix<f64> {
    let kron = |ms: &[DMatrix<f64>]| {
        // first factor fastest
        let mut acc = ms[0].clone();
        for m in &ms[1..] {
            acc = m.kronecker(&acc);
        }
        acc
    };
    let ad: Vec<DMatrix<f64>> = a.iter().map(|m| m.to_dense()).collect();
    let bd: Vec<DMatrix<f64>> = b.iter().map(|m| m.to_dense()).collect();
    let mut total = shift * kron(&bd);
    for k in 0..a.len() {
        let factors: Vec<DMatrix<f64>> = (0..a.len())
            .map(|j| if j == k { ad[j].clone() } else { bd[j].clone() })
            .collect();
        total += kron(&factors);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space(p: usize, n: usize) -> UnivariateSpace {
        UnivariateSpace::new(p, n).unwrap().interior()
    }

    #[test]
    fn vertex_scalars() {
        assert_eq!(vertex_scale(0.25, 2, 2), 1.0);
        let v = PieceSmoother::vertex(0, 0.25, 2, 3);
        let mut x = [1.0];
        v.solve_in_place(&mut x, &mut Vec::new());
        assert_eq!(x[0], 8.0);
    }

    #[test]
    fn edge_solve_inverts_operator() {
        let (h, p) = (0.25, 2);
        let s = space(p, 4);
        let e = PieceSmoother::edge((0..s.dim() as u32).collect(), 4, h, p, 2).unwrap();
        let l = s.stiffness().linear_combination(h / 2.0, &s.mass(), 2.0 / h);
        let mut x = l.mul_vec(&[1.0, 0.0, 0.0, 0.0]);
        e.solve_in_place(&mut x, &mut Vec::new());
        assert!((x[0] - 1.0).abs() < 1e-12 && x[1..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn face_solve_is_exact() {
        let (h, p) = (0.25, 3);
        let sx = space(p, 4);
        let sy = space(p, 2);
        let mut cache = EigCache::default();
        let face = PieceSmoother::face(
            (0..(sx.dim() * sy.dim()) as u32).collect(),
            [cache.get(4, p).unwrap(), cache.get(2, p).unwrap()],
            h,
            p,
        )
        .unwrap();
        let r = h / p as f64;
        let l = r * dense_tensor_sum(&[sx.stiffness(), sy.stiffness()], &[sx.mass(), sy.mass()], 1.0 / (r * r));
        let x: Vec<f64> = (0..l.nrows()).map(|i| (1.3 * i as f64).cos()).collect();
        let mut y: Vec<f64> = (&l * nalgebra::DVector::from_vec(x.clone())).iter().copied().collect();
        face.solve_in_place(&mut y, &mut Vec::new());
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}
