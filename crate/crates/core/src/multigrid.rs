//! Multigrid cycle, coarse direct solve and the preconditioned conjugate
//! gradient driver.
//!
//! Both the cycle and PCG are written once against [`CycleSpace`] and
//! [`KrylovSpace`], whose two vector types mirror the accumulated and
//! distributed storage of the rank-parallel layer. The serial hierarchy
//! implements them with plain vectors for both.

use std::sync::Arc;

use crate::assembly::SparseOperator;
use crate::error::{check_len, Error, Result};
use crate::linalg::{dot, DirectSolver};
use crate::smoother::{HybridSmoother, DEFAULT_SIGMA_SCALE};
use crate::topology::{DofMapper, MultiPatchDomain};
use crate::transfer::TransferOperator;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CycleKind {
    V,
    W,
}

impl CycleKind {
    pub fn mu(&self) -> usize {
        match self {
            CycleKind::V => 1,
            CycleKind::W => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleParams {
    pub cycle: CycleKind,
    /// Pre- and post-smoothing steps each.
    pub nu: usize,
    pub tau: f64,
    /// Also damp the coarse-grid correction by `tau`.
    pub damp_coarse: bool,
}

impl Default for CycleParams {
    fn default() -> Self {
        Self {
            cycle: CycleKind::V,
            nu: 1,
            tau: 0.25,
            damp_coarse: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcgParams {
    pub tol: f64,
    pub max_iterations: usize,
}

impl Default for PcgParams {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iterations: 500,
        }
    }
}

/// Wall-clock seconds spent per phase.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Timings {
    pub setup: f64,
    pub assemble: f64,
    pub solve: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SolveReport {
    pub iterations: usize,
    /// Residual 2-norms, starting with the initial residual.
    pub residuals: Vec<f64>,
    pub timings: Timings,
}

impl SolveReport {
    pub fn relative_residual(&self) -> f64 {
        match (self.residuals.first(), self.residuals.last()) {
            (Some(&r0), Some(&r)) if r0 > 0.0 => r / r0,
            _ => 0.0,
        }
    }
}

/// Level operations of one multigrid hierarchy. `Acc` holds true values of
/// the dofs, `Dist` holds additive contributions.
pub trait CycleSpace {
    type Acc;
    type Dist: Clone;

    /// Index of the finest level.
    fn finest(&self) -> usize;
    fn zero_acc(&self, level: usize) -> Self::Acc;
    /// `f - A_ℓ u`
    fn residual(&self, level: usize, f: &Self::Dist, u: &Self::Acc) -> Result<Self::Dist>;
    /// `u += tau L_ℓ^{-1} r`
    fn smooth(&self, level: usize, u: &mut Self::Acc, r: &Self::Dist, tau: f64) -> Result<()>;
    /// `P_ℓᵀ r` on level `ℓ - 1`.
    fn restrict(&self, level: usize, r: &Self::Dist) -> Result<Self::Dist>;
    /// `u += scale P_ℓ c`
    fn prolongate_add(&self, level: usize, u: &mut Self::Acc, c: &Self::Acc, scale: f64) -> Result<()>;
    /// `A_0^{-1} r`
    fn coarse_solve(&self, r: &Self::Dist) -> Result<Self::Acc>;
}

/// Finest-level operations needed by PCG.
pub trait KrylovSpace: CycleSpace {
    fn apply(&self, u: &Self::Acc) -> Result<Self::Dist>;
    fn accumulate(&self, r: &Self::Dist) -> Result<Self::Acc>;
    fn dot(&self, u: &Self::Acc, r: &Self::Dist) -> Result<f64>;
    fn axpy_acc(&self, alpha: f64, x: &Self::Acc, y: &mut Self::Acc);
    fn axpy_dist(&self, alpha: f64, x: &Self::Dist, y: &mut Self::Dist);
    /// `y = x + beta y`
    fn xpby_acc(&self, x: &Self::Acc, beta: f64, y: &mut Self::Acc);
}

/// One cycle on `level` updating `u` for right-hand side `f`. `zero_start`
/// declares `u = 0` on entry, which saves the first residual evaluation.
pub fn mg_cycle<S: CycleSpace>(
    space: &S,
    params: &CycleParams,
    level: usize,
    u: &mut S::Acc,
    f: &S::Dist,
    zero_start: bool,
) -> Result<()> {
    if level == 0 {
        *u = space.coarse_solve(f)?;
        return Ok(());
    }
    let mut known_zero = zero_start;
    for _ in 0..params.nu {
        let r = if known_zero { f.clone() } else { space.residual(level, f, u)? };
        space.smooth(level, u, &r, params.tau)?;
        known_zero = false;
    }
    let r = if known_zero { f.clone() } else { space.residual(level, f, u)? };
    let rc = space.restrict(level, &r)?;
    let c = if level == 1 {
        space.coarse_solve(&rc)?
    } else {
        let mut c = space.zero_acc(level - 1);
        for i in 0..params.cycle.mu() {
            mg_cycle(space, params, level - 1, &mut c, &rc, i == 0)?;
        }
        c
    };
    let scale = if params.damp_coarse { params.tau } else { 1.0 };
    space.prolongate_add(level, u, &c, scale)?;
    for _ in 0..params.nu {
        let r = space.residual(level, f, u)?;
        space.smooth(level, u, &r, params.tau)?;
    }
    Ok(())
}

/// The preconditioner: one cycle on the finest level from a zero start.
pub fn precondition<S: CycleSpace>(space: &S, params: &CycleParams, r: &S::Dist) -> Result<S::Acc> {
    let level = space.finest();
    let mut z = space.zero_acc(level);
    mg_cycle(space, params, level, &mut z, r, true)?;
    Ok(z)
}

/// Conjugate gradients preconditioned by one cycle, from a zero initial
/// guess, stopped when `‖r_k‖₂ ≤ tol ‖r_0‖₂`.
pub fn pcg<S: KrylovSpace>(
    space: &S,
    cycle: &CycleParams,
    pcg: &PcgParams,
    f: &S::Dist,
) -> Result<(S::Acc, SolveReport)> {
    let level = space.finest();
    let mut u = space.zero_acc(level);
    let mut r = f.clone();
    let norm = |r: &S::Dist| -> Result<f64> {
        let ra = space.accumulate(r)?;
        Ok(space.dot(&ra, r)?.max(0.0).sqrt())
    };
    let r0 = norm(&r)?;
    let mut report = SolveReport {
        residuals: vec![r0],
        ..Default::default()
    };
    if r0 == 0.0 {
        return Ok((u, report));
    }
    let mut z = precondition(space, cycle, &r)?;
    let mut p = space.zero_acc(level);
    space.xpby_acc(&z, 0.0, &mut p);
    let mut rz = space.dot(&z, &r)?;
    for k in 1..=pcg.max_iterations {
        let q = space.apply(&p)?;
        let pq = space.dot(&p, &q)?;
        if !(pq > 0.0) {
            return Err(Error::Definiteness(format!("pᵀAp = {pq:e} in iteration {k}")));
        }
        let alpha = rz / pq;
        space.axpy_acc(alpha, &p, &mut u);
        space.axpy_dist(-alpha, &q, &mut r);
        let rn = norm(&r)?;
        report.residuals.push(rn);
        report.iterations = k;
        if rn <= pcg.tol * r0 {
            return Ok((u, report));
        }
        z = precondition(space, cycle, &r)?;
        let rz_new = space.dot(&z, &r)?;
        let beta = rz_new / rz;
        rz = rz_new;
        space.xpby_acc(&z, beta, &mut p);
    }
    Err(Error::Divergence {
        iterations: pcg.max_iterations,
        relative_residual: report.relative_residual(),
    })
}

/// Per-level data of the serial hierarchy.
#[derive(Debug, Clone)]
pub struct Level {
    pub mapper: Arc<DofMapper>,
    pub operator: SparseOperator,
    pub smoother: HybridSmoother,
    /// Prolongation from the next coarser level (absent on level 0).
    pub transfer: Option<TransferOperator>,
}

#[derive(Debug, Clone)]
pub struct MultigridHierarchy {
    levels: Vec<Level>,
    coarse: Arc<DirectSolver>,
    params: CycleParams,
}

/// Dof mappers of levels `0..=levels`.
pub fn build_mappers(domain: &MultiPatchDomain, levels: usize, degree: usize) -> Result<Vec<Arc<DofMapper>>> {
    (0..=levels)
        .map(|l| DofMapper::build(domain, l, degree).map(Arc::new))
        .collect()
}

/// Prolongations `P_1 ..= P_L`.
pub fn build_transfers(mappers: &[Arc<DofMapper>]) -> Result<Vec<TransferOperator>> {
    mappers
        .windows(2)
        .map(|w| TransferOperator::build(&w[0], &w[1]))
        .collect()
}

pub fn assemble_operators(domain: &MultiPatchDomain, mappers: &[Arc<DofMapper>]) -> Result<Vec<SparseOperator>> {
    mappers
        .iter()
        .map(|m| SparseOperator::assemble(domain, Arc::clone(m)))
        .collect()
}

pub fn build_smoothers(mappers: &[Arc<DofMapper>], sigma_scale: f64) -> Result<Vec<HybridSmoother>> {
    mappers
        .iter()
        .map(|m| HybridSmoother::build(&m.pieces(), m.num_dofs(), m.degree(), m.dim(), sigma_scale))
        .collect()
}

impl MultigridHierarchy {
    pub fn new(
        operators: Vec<SparseOperator>,
        transfers: Vec<TransferOperator>,
        smoothers: Vec<HybridSmoother>,
        params: CycleParams,
    ) -> Result<Self> {
        let n = operators.len();
        if n == 0 || smoothers.len() != n || transfers.len() + 1 != n {
            return Err(Error::Config("inconsistent hierarchy: one operator and smoother per level, one transfer per refinement".into()));
        }
        let coarse = Arc::new(DirectSolver::factor(&operators[0].to_global())?);
        Self::with_coarse(operators, transfers, smoothers, coarse, params)
    }

    pub fn with_coarse(
        operators: Vec<SparseOperator>,
        transfers: Vec<TransferOperator>,
        smoothers: Vec<HybridSmoother>,
        coarse: Arc<DirectSolver>,
        params: CycleParams,
    ) -> Result<Self> {
        if !(params.tau > 0.0) {
            return Err(Error::Config(format!("damping tau must be positive, got {}", params.tau)));
        }
        let mut levels = Vec::with_capacity(operators.len());
        let mut transfers = transfers.into_iter();
        for (l, (operator, smoother)) in operators.into_iter().zip(smoothers).enumerate() {
            let transfer = if l == 0 { None } else { transfers.next() };
            if let Some(t) = &transfer {
                check_len(operator.dim(), t.fine_dim())?;
            }
            check_len(operator.dim(), smoother.dim())?;
            levels.push(Level {
                mapper: Arc::clone(operator.mapper()),
                operator,
                smoother,
                transfer,
            });
        }
        check_len(levels[0].operator.dim(), coarse.dim())?;
        Ok(Self { levels, coarse, params })
    }

    /// Builds the full hierarchy for `levels` refinements of `domain`.
    pub fn build(
        domain: &MultiPatchDomain,
        levels: usize,
        degree: usize,
        sigma_scale: f64,
        params: CycleParams,
    ) -> Result<Self> {
        let mappers = build_mappers(domain, levels, degree)?;
        let transfers = build_transfers(&mappers)?;
        let operators = assemble_operators(domain, &mappers)?;
        let smoothers = build_smoothers(&mappers, sigma_scale)?;
        Self::new(operators, transfers, smoothers, params)
    }

    pub fn build_default(domain: &MultiPatchDomain, levels: usize, degree: usize) -> Result<Self> {
        Self::build(domain, levels, degree, DEFAULT_SIGMA_SCALE, CycleParams::default())
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn level(&self, l: usize) -> &Level {
        &self.levels[l]
    }

    pub fn params(&self) -> &CycleParams {
        &self.params
    }

    pub fn set_params(&mut self, params: CycleParams) {
        self.params = params;
    }

    pub fn coarse_solver(&self) -> &Arc<DirectSolver> {
        &self.coarse
    }

    pub fn finest_operator(&self) -> &SparseOperator {
        &self.levels.last().expect("nonempty hierarchy").operator
    }

    /// `u ← u + τ L^{-1}(f − A u)` on `level`.
    pub fn smooth_step(&self, level: usize, u: &mut [f64], f: &[f64]) -> Result<()> {
        let r = self.residual(level, &f.to_vec(), &u.to_vec())?;
        let mut uv = u.to_vec();
        self.smooth(level, &mut uv, &r, self.params.tau)?;
        u.copy_from_slice(&uv);
        Ok(())
    }

    /// One cycle on `level`, in place.
    pub fn cycle(&self, level: usize, u: &mut Vec<f64>, f: &[f64]) -> Result<()> {
        check_len(self.levels[level].operator.dim(), u.len())?;
        check_len(u.len(), f.len())?;
        mg_cycle(self, &self.params, level, u, &f.to_vec(), false)
    }

    /// PCG on the finest level.
    pub fn solve(&self, f: &[f64], pcg_params: &PcgParams) -> Result<(Vec<f64>, SolveReport)> {
        check_len(self.finest_operator().dim(), f.len())?;
        pcg(self, &self.params, pcg_params, &f.to_vec())
    }
}

impl CycleSpace for MultigridHierarchy {
    type Acc = Vec<f64>;
    type Dist = Vec<f64>;

    fn finest(&self) -> usize {
        self.levels.len() - 1
    }

    fn zero_acc(&self, level: usize) -> Vec<f64> {
        vec![0.0; self.levels[level].operator.dim()]
    }

    fn residual(&self, level: usize, f: &Vec<f64>, u: &Vec<f64>) -> Result<Vec<f64>> {
        let mut r = vec![0.0; f.len()];
        self.levels[level].operator.apply(u, &mut r)?;
        for (ri, fi) in r.iter_mut().zip(f) {
            *ri = fi - *ri;
        }
        Ok(r)
    }

    fn smooth(&self, level: usize, u: &mut Vec<f64>, r: &Vec<f64>, tau: f64) -> Result<()> {
        let mut c = vec![0.0; r.len()];
        self.levels[level].smoother.apply(r, &mut c)?;
        for (ui, ci) in u.iter_mut().zip(&c) {
            *ui += tau * ci;
        }
        Ok(())
    }

    fn restrict(&self, level: usize, r: &Vec<f64>) -> Result<Vec<f64>> {
        let t = self.levels[level].transfer.as_ref().expect("transfer above level 0");
        let mut rc = vec![0.0; t.coarse_dim()];
        t.restrict(r, &mut rc)?;
        Ok(rc)
    }

    fn prolongate_add(&self, level: usize, u: &mut Vec<f64>, c: &Vec<f64>, scale: f64) -> Result<()> {
        let t = self.levels[level].transfer.as_ref().expect("transfer above level 0");
        let mut w = vec![0.0; t.fine_dim()];
        t.prolongate(c, &mut w)?;
        for (ui, wi) in u.iter_mut().zip(&w) {
            *ui += scale * wi;
        }
        Ok(())
    }

    fn coarse_solve(&self, r: &Vec<f64>) -> Result<Vec<f64>> {
        check_len(self.coarse.dim(), r.len())?;
        Ok(self.coarse.solve(r))
    }
}

impl KrylovSpace for MultigridHierarchy {
    fn apply(&self, u: &Vec<f64>) -> Result<Vec<f64>> {
        let mut y = vec![0.0; u.len()];
        self.finest_operator().apply(u, &mut y)?;
        Ok(y)
    }

    fn accumulate(&self, r: &Vec<f64>) -> Result<Vec<f64>> {
        Ok(r.clone())
    }

    fn dot(&self, u: &Vec<f64>, r: &Vec<f64>) -> Result<f64> {
        Ok(dot(u, r))
    }

    fn axpy_acc(&self, alpha: f64, x: &Vec<f64>, y: &mut Vec<f64>) {
        crate::linalg::axpy(alpha, x, y);
    }

    fn axpy_dist(&self, alpha: f64, x: &Vec<f64>, y: &mut Vec<f64>) {
        crate::linalg::axpy(alpha, x, y);
    }

    fn xpby_acc(&self, x: &Vec<f64>, beta: f64, y: &mut Vec<f64>) {
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi = xi + beta * *yi;
        }
    }
}
