//! Prolongation between consecutive levels of a multi-patch hierarchy.

use std::collections::BTreeMap;

use crate::error::{check_len, Error, Result};
use crate::linalg::CsrMatrix;
use crate::spline::UnivariateSpace;
use crate::topology::DofMapper;

const ELIMINATED: u32 = u32::MAX;

/// Tolerance for the agreement of interface rows computed from different
/// adjacent patches.
pub const RECONCILE_TOLERANCE: f64 = 1e-13;

/// Prolongation `P` (fine × coarse) and its transpose, both in global
/// numbering.
#[derive(Debug, Clone)]
pub struct TransferOperator {
    p: CsrMatrix,
    pt: CsrMatrix,
}

fn patch_row(
    patch: usize,
    local: usize,
    fine: &DofMapper,
    coarse: &DofMapper,
    factors: &[CsrMatrix],
) -> BTreeMap<u32, f64> {
    let dims = fine.local_dims(patch);
    let idx = [local % dims[0], (local / dims[0]) % dims[1], local / (dims[0] * dims[1])];
    let cdims = coarse.local_dims(patch);
    let cmap = coarse.local_to_global(patch);
    let d = fine.dim();
    let rows: Vec<Vec<(usize, f64)>> = (0..3)
        .map(|k| if k < d { factors[k].row(idx[k]).collect() } else { vec![(0, 1.0)] })
        .collect();
    let mut out = BTreeMap::new();
    for &(j2, v2) in &rows[2] {
        for &(j1, v1) in &rows[1] {
            for &(j0, v0) in &rows[0] {
                let g = cmap[j0 + cdims[0] * (j1 + cdims[1] * j2)];
                if g != ELIMINATED {
                    *out.entry(g).or_insert(0.0) += v0 * v1 * v2;
                }
            }
        }
    }
    out
}

impl TransferOperator {
    /// Builds `P` from tensor products of univariate two-scale matrices of
    /// each fine dof's lowest adjacent patch, checking that every other
    /// adjacent patch yields the same row.
    pub fn build(coarse: &DofMapper, fine: &DofMapper) -> Result<Self> {
        let rows: Vec<u32> = (0..fine.num_dofs() as u32).collect();
        let p = Self::build_rows(coarse, fine, &rows)?;
        let pt = p.transpose();
        Ok(Self { p, pt })
    }

    /// The rows of `P` for the fine dofs `rows`, in that order, with global
    /// coarse column numbers.
    pub fn build_rows(coarse: &DofMapper, fine: &DofMapper, rows: &[u32]) -> Result<CsrMatrix> {
        if coarse.num_patches() != fine.num_patches() || coarse.degree() != fine.degree() {
            return Err(Error::Config("transfer levels differ in patches or degree".into()));
        }
        let d = fine.dim();
        let mut factors: Vec<Vec<CsrMatrix>> = Vec::with_capacity(fine.num_patches());
        for k in 0..fine.num_patches() {
            let (nc, nf) = (coarse.elements(k), fine.elements(k));
            let mut fk = Vec::with_capacity(d);
            for i in 0..d {
                if nf[i] != 2 * nc[i] {
                    return Err(Error::Config(format!(
                        "patch {k}: fine level is not a dyadic refinement of the coarse level"
                    )));
                }
                fk.push(UnivariateSpace::new(coarse.degree(), nc[i])?.two_scale());
            }
            factors.push(fk);
        }
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for &g in rows {
            let g = g as usize;
            let (patch, local) = fine.canonical(g);
            let row = patch_row(patch, local, fine, coarse, &factors[patch]);
            for &other in fine.dof_patches(g) {
                let other = other as usize;
                if other == patch {
                    continue;
                }
                let l = fine
                    .local_to_global(other)
                    .iter()
                    .position(|&x| x == g as u32)
                    .expect("dof listed for patch");
                let alt = patch_row(other, l, fine, coarse, &factors[other]);
                let agree = row.len() == alt.len()
                    && row
                        .iter()
                        .zip(&alt)
                        .all(|((c1, v1), (c2, v2))| c1 == c2 && (v1 - v2).abs() <= RECONCILE_TOLERANCE);
                if !agree {
                    return Err(Error::NonMatching(format!(
                        "prolongation rows of fine dof {g} differ between patches {patch} and {other}"
                    )));
                }
            }
            for (c, v) in row {
                if v != 0.0 {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Ok(CsrMatrix::from_parts(rows.len(), coarse.num_dofs(), row_ptr, col_idx, values))
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.p
    }

    pub fn transpose_matrix(&self) -> &CsrMatrix {
        &self.pt
    }

    pub fn fine_dim(&self) -> usize {
        self.p.nrows()
    }

    pub fn coarse_dim(&self) -> usize {
        self.p.ncols()
    }

    /// `fine = P coarse`
    pub fn prolongate(&self, coarse: &[f64], fine: &mut [f64]) -> Result<()> {
        check_len(self.coarse_dim(), coarse.len())?;
        check_len(self.fine_dim(), fine.len())?;
        self.p.mul_vec(coarse, fine);
        Ok(())
    }

    /// `coarse = Pᵀ fine`
    pub fn restrict(&self, fine: &[f64], coarse: &mut [f64]) -> Result<()> {
        check_len(self.fine_dim(), fine.len())?;
        check_len(self.coarse_dim(), coarse.len())?;
        self.pt.mul_vec(fine, coarse);
        Ok(())
    }
}
