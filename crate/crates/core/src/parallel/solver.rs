//! Per-rank multigrid hierarchy over the owned patches and the parallel
//! PCG driver.
//!
//! Level operators map between the two vector forms as follows: `A` and
//! `Pᵀ` take distributed to distributed or accumulated to distributed
//! vectors, `P` keeps vectors accumulated, the smoother preserves the form
//! and the coarse solve gathers a distributed residual on every rank.
//! Applying `A` to a distributed vector does not compile:
//!
//! ```compile_fail
//! use patchmg::parallel::{DistributedVector, RankHierarchy};
//! fn f(h: &RankHierarchy<'_>, d: &DistributedVector) {
//!     let _ = h.apply_a(1, d);
//! }
//! ```
//!
//! and neither do dot products of two vectors of the same form:
//!
//! ```compile_fail
//! use patchmg::parallel::{parallel_dot, AccumulatedVector, Loopback};
//! let a = AccumulatedVector::zeros(2);
//! let _ = parallel_dot(&Loopback::new(), &a, &a);
//! ```
//!
//! ```compile_fail
//! use patchmg::parallel::{parallel_dot, DistributedVector, Loopback};
//! let d = DistributedVector::zeros(2);
//! let _ = parallel_dot(&Loopback::new(), &d, &d);
//! ```
//!
//! The legal pairings do:
//!
//! ```
//! use patchmg::parallel::{parallel_dot, AccumulatedVector, DistributedVector, Loopback};
//! let a = AccumulatedVector::from_values(vec![1.0, 2.0]);
//! let d = DistributedVector::from_values(vec![3.0, 4.0]);
//! assert_eq!(parallel_dot(&Loopback::new(), &a, &d).unwrap(), 11.0);
//! ```

use std::sync::Arc;
use std::time::Instant;

use super::comm::{make_tag, op, run_ranks, Backend, Communicator, MessageRecord};
use super::layout::{RankLayout, RankPartition};
use super::vector::{AccumulatedVector, DistributedVector, RankVector};
use crate::assembly::{apply_blocks, patch_block, patch_rhs};
use crate::error::{check_len, Error, Result};
use crate::linalg::{dot, CsrMatrix, DirectSolver};
use crate::multigrid::{mg_cycle, pcg, CycleParams, CycleSpace, KrylovSpace, PcgParams, SolveReport, Timings};
use crate::smoother::{HybridSmoother, DEFAULT_SIGMA_SCALE};
use crate::topology::{DofMapper, MultiPatchDomain, PieceDecomposition};
use crate::transfer::TransferOperator;

/// `Σ_r ⟨u_r, v_r⟩`, reduced in ascending rank order.
pub fn parallel_dot(comm: &dyn Communicator, u: &AccumulatedVector, v: &DistributedVector) -> Result<f64> {
    check_len(u.len(), v.len())?;
    comm.all_reduce_sum(dot(u.values(), v.values()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParallelOptions {
    pub levels: usize,
    pub degree: usize,
    pub sigma_scale: f64,
    pub cycle: CycleParams,
    pub pcg: PcgParams,
    /// Verify replicated entries of accumulated vectors before every
    /// operator application.
    pub check_consistency: bool,
}

impl Default for ParallelOptions {
    fn default() -> Self {
        Self {
            levels: 2,
            degree: 2,
            sigma_scale: DEFAULT_SIGMA_SCALE,
            cycle: CycleParams::default(),
            pcg: PcgParams::default(),
            check_consistency: false,
        }
    }
}

/// One level restricted to the patches of a rank.
#[derive(Debug, Clone)]
pub struct RankLevel {
    pub mapper: Arc<DofMapper>,
    pub layout: RankLayout,
    /// Stiffness block per owned patch, indexed through `layout.patch_map`.
    pub blocks: Vec<CsrMatrix>,
    pub smoother: HybridSmoother,
    /// Local rows of the prolongation from the next coarser level.
    pub transfer: Option<(CsrMatrix, CsrMatrix)>,
}

pub struct RankHierarchy<'c> {
    comm: &'c dyn Communicator,
    levels: Vec<RankLevel>,
    coarse: DirectSolver,
    /// Level-0 global dofs of every rank.
    coarse_dofs: Vec<Vec<u32>>,
    params: CycleParams,
    check_consistency: bool,
}

/// Piece smoothers of the pieces the rank holds, in rank-local numbering.
fn local_smoother(
    decomposition: &PieceDecomposition,
    mapper: &DofMapper,
    layout: &RankLayout,
    sigma_scale: f64,
) -> Result<HybridSmoother> {
    let mut mine = PieceDecomposition::default();
    for piece in &decomposition.pieces {
        let held = piece.dofs.iter().filter(|&&g| layout.local(g).is_some()).count();
        if held == 0 {
            continue;
        }
        if held != piece.dofs.len() {
            return Err(Error::Decomposition(format!(
                "a {:?} piece of patch {} is split between ranks",
                piece.kind, piece.patch
            )));
        }
        mine.pieces.push(piece.clone());
    }
    let global = HybridSmoother::build(&mine, mapper.num_dofs(), mapper.degree(), mapper.dim(), sigma_scale)?;
    let pieces = global
        .pieces()
        .iter()
        .map(|p| p.remapped(|g| layout.local(g).expect("held dof")))
        .collect();
    HybridSmoother::from_pieces(layout.len(), pieces)
}

/// Prolongation rows of the rank's fine dofs with rank-local columns.
fn local_transfer(
    coarse: &DofMapper,
    fine: &DofMapper,
    coarse_layout: &RankLayout,
    fine_layout: &RankLayout,
) -> Result<(CsrMatrix, CsrMatrix)> {
    let rows = TransferOperator::build_rows(coarse, fine, fine_layout.dofs())?;
    let mut trip = Vec::with_capacity(rows.nnz());
    for i in 0..rows.nrows() {
        for (c, v) in rows.row(i) {
            let lc = coarse_layout.local(c as u32).ok_or_else(|| {
                Error::Decomposition(format!(
                    "fine dof {} depends on coarse dof {c} outside rank {}",
                    fine_layout.dofs()[i],
                    fine_layout.rank()
                ))
            })?;
            trip.push((i, lc as usize, v));
        }
    }
    let p = CsrMatrix::from_triplets(fine_layout.len(), coarse_layout.len(), &trip);
    let pt = p.transpose();
    Ok((p, pt))
}

impl<'c> RankHierarchy<'c> {
    /// Builds the rank's share of the hierarchy and factors the gathered
    /// coarse matrix. Returns the hierarchy, the distributed finest load
    /// vector and the setup and assembly times.
    pub fn build(
        comm: &'c dyn Communicator,
        domain: &MultiPatchDomain,
        partition: &RankPartition,
        opts: &ParallelOptions,
    ) -> Result<(Self, DistributedVector, Timings)> {
        if partition.ranks() != comm.size() {
            return Err(Error::Config(format!(
                "partition has {} ranks, communicator {}",
                partition.ranks(),
                comm.size()
            )));
        }
        let rank = comm.rank();
        let mut timings = Timings::default();

        let t = Instant::now();
        let mappers = (0..=opts.levels)
            .map(|l| DofMapper::build(domain, l, opts.degree).map(Arc::new))
            .collect::<Result<Vec<_>>>()?;
        let layouts = mappers
            .iter()
            .map(|m| RankLayout::build(m, partition, rank))
            .collect::<Result<Vec<_>>>()?;
        let mut smoothers = Vec::with_capacity(mappers.len());
        for (m, layout) in mappers.iter().zip(&layouts) {
            smoothers.push(local_smoother(&m.pieces(), m, layout, opts.sigma_scale)?);
        }
        let mut transfers = vec![None];
        for l in 1..mappers.len() {
            transfers.push(Some(local_transfer(
                &mappers[l - 1],
                &mappers[l],
                &layouts[l - 1],
                &layouts[l],
            )?));
        }
        timings.setup += t.elapsed().as_secs_f64();

        let t = Instant::now();
        let mut blocks = Vec::with_capacity(mappers.len());
        for m in &mappers {
            blocks.push(
                partition
                    .owned(rank)
                    .iter()
                    .map(|&k| patch_block(domain, m, k))
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        let fine = mappers.last().expect("at least one level");
        let fine_layout = layouts.last().expect("at least one level");
        let mut f = vec![0.0; fine_layout.len()];
        for (i, &k) in partition.owned(rank).iter().enumerate() {
            let local = patch_rhs(domain, fine, domain.source(), k)?;
            for (&l, v) in fine_layout.patch_map(i).iter().zip(local) {
                if l != u32::MAX {
                    f[l as usize] += v;
                }
            }
        }
        timings.assemble += t.elapsed().as_secs_f64();

        let t = Instant::now();
        let levels: Vec<RankLevel> = mappers
            .into_iter()
            .zip(layouts)
            .zip(blocks)
            .zip(smoothers)
            .zip(transfers)
            .map(|((((mapper, layout), blocks), smoother), transfer)| RankLevel {
                mapper,
                layout,
                blocks,
                smoother,
                transfer,
            })
            .collect();
        let (coarse, coarse_dofs) = gather_coarse(comm, &levels[0], partition)?;
        timings.setup += t.elapsed().as_secs_f64();

        if !(opts.cycle.tau > 0.0) {
            return Err(Error::Config(format!("damping tau must be positive, got {}", opts.cycle.tau)));
        }
        Ok((
            Self {
                comm,
                levels,
                coarse,
                coarse_dofs,
                params: opts.cycle,
                check_consistency: opts.check_consistency,
            },
            DistributedVector::from_values(f),
            timings,
        ))
    }

    pub fn comm(&self) -> &dyn Communicator {
        self.comm
    }

    pub fn levels(&self) -> &[RankLevel] {
        &self.levels
    }

    pub fn layout(&self, level: usize) -> &RankLayout {
        &self.levels[level].layout
    }

    /// Stored entries of the rank's finest blocks.
    pub fn local_nnz(&self) -> usize {
        self.levels.last().map_or(0, |l| l.blocks.iter().map(|b| b.nnz()).sum())
    }

    fn pair_tag(&self, operation: u64, level: usize, other: usize) -> u64 {
        let (lo, hi) = (self.comm.rank().min(other), self.comm.rank().max(other));
        make_tag(operation, level, (lo * self.comm.size() + hi) as u64)
    }

    /// Σ: sums the contributions of all ranks holding each shared dof, in
    /// ascending rank order, exchanging only with neighbor ranks.
    pub fn accumulate_level(&self, level: usize, v: &DistributedVector) -> Result<AccumulatedVector> {
        let layout = &self.levels[level].layout;
        v.checked_len(layout.len())?;
        let x = v.values();
        for e in layout.exchanges() {
            let buf: Vec<f64> = e.local.iter().map(|&l| x[l as usize]).collect();
            self.comm.send(e.rank, self.pair_tag(op::ACCUMULATE, level, e.rank), &buf)?;
        }
        let received = layout
            .exchanges()
            .iter()
            .map(|e| {
                let buf = self.comm.recv(e.rank, self.pair_tag(op::ACCUMULATE, level, e.rank))?;
                check_len(e.local.len(), buf.len())?;
                Ok((e.rank, buf))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut out = x.to_vec();
        let me = self.comm.rank();
        for s in layout.shared_sums() {
            let value = |&(q, slot): &(usize, usize)| {
                if q == me {
                    x[slot]
                } else {
                    received.iter().find(|(r, _)| *r == q).expect("neighbor buffer").1[slot]
                }
            };
            let mut terms = s.terms.iter();
            let first = value(terms.next().expect("shared dof has terms"));
            out[s.local as usize] = terms.fold(first, |acc, t| acc + value(t));
        }
        Ok(AccumulatedVector::from_values(out))
    }

    /// Compares replicated entries with every neighbor bit for bit.
    pub fn check_replicas(&self, level: usize, u: &AccumulatedVector) -> Result<()> {
        let layout = &self.levels[level].layout;
        let x = u.values();
        for e in layout.exchanges() {
            let buf: Vec<f64> = e.local.iter().map(|&l| x[l as usize]).collect();
            self.comm.send(e.rank, self.pair_tag(op::CONSISTENCY, level, e.rank), &buf)?;
        }
        for e in layout.exchanges() {
            let theirs = self.comm.recv(e.rank, self.pair_tag(op::CONSISTENCY, level, e.rank))?;
            for (&l, t) in e.local.iter().zip(&theirs) {
                if x[l as usize].to_bits() != t.to_bits() {
                    return Err(Error::Consistency(format!(
                        "level {level}: dof {} differs between ranks {} and {} ({} vs {t})",
                        layout.dofs()[l as usize],
                        self.comm.rank(),
                        e.rank,
                        x[l as usize]
                    )));
                }
            }
        }
        Ok(())
    }

    /// `A_ℓ u` from the owned patch blocks, without communication.
    pub fn apply_a(&self, level: usize, u: &AccumulatedVector) -> Result<DistributedVector> {
        let lv = &self.levels[level];
        u.checked_len(lv.layout.len())?;
        if self.check_consistency {
            self.check_replicas(level, u)?;
        }
        let mut y = vec![0.0; u.len()];
        apply_blocks(
            lv.blocks.iter().enumerate().map(|(i, b)| (b, lv.layout.patch_map(i))),
            u.values(),
            &mut y,
        );
        Ok(DistributedVector::from_values(y))
    }

    /// `P_ℓ c` for accumulated `c`.
    pub fn apply_p(&self, level: usize, c: &AccumulatedVector) -> Result<AccumulatedVector> {
        let (p, _) = self.levels[level].transfer.as_ref().expect("transfer above level 0");
        c.checked_len(p.ncols())?;
        let mut w = vec![0.0; p.nrows()];
        p.mul_vec(c.values(), &mut w);
        Ok(AccumulatedVector::from_values(w))
    }

    /// `P_ℓᵀ r` for distributed `r`.
    pub fn apply_pt(&self, level: usize, r: &DistributedVector) -> Result<DistributedVector> {
        let (_, pt) = self.levels[level].transfer.as_ref().expect("transfer above level 0");
        r.checked_len(pt.ncols())?;
        let mut w = vec![0.0; pt.nrows()];
        pt.mul_vec(r.values(), &mut w);
        Ok(DistributedVector::from_values(w))
    }

    /// `L_ℓ^{-1} v`; both vector forms are preserved because every piece is
    /// held as a whole by each rank that holds any of its dofs.
    pub fn apply_smoother<V: RankVector>(&self, level: usize, v: &V) -> Result<V> {
        let s = &self.levels[level].smoother;
        let mut out = vec![0.0; v.values().len()];
        s.apply(v.values(), &mut out)?;
        Ok(V::from_values(out))
    }

    /// Gathers `r` on every rank, solves with the replicated coarse factor
    /// and keeps the rank's entries.
    pub fn coarse_gather_solve(&self, r: &DistributedVector) -> Result<AccumulatedVector> {
        Ok(AccumulatedVector::from_values(
            self.levels[0].layout.gather(&self.coarse_global_solve(r)?),
        ))
    }

    /// The full coarse solution as computed on this rank.
    pub fn coarse_global_solve(&self, r: &DistributedVector) -> Result<Vec<f64>> {
        r.checked_len(self.levels[0].layout.len())?;
        let parts = self.comm.all_gather(r.values())?;
        let mut global = vec![0.0; self.coarse.dim()];
        for (dofs, part) in self.coarse_dofs.iter().zip(&parts) {
            check_len(dofs.len(), part.len())?;
            for (&g, v) in dofs.iter().zip(part) {
                global[g as usize] += v;
            }
        }
        Ok(self.coarse.solve(&global))
    }

    /// PCG on the finest level.
    pub fn solve(&self, f: &DistributedVector, params: &PcgParams) -> Result<(AccumulatedVector, SolveReport)> {
        f.checked_len(self.layout(self.finest()).len())?;
        pcg(self, &self.params, params, f)
    }

    /// One cycle on `level`, in place.
    pub fn cycle(&self, level: usize, u: &mut AccumulatedVector, f: &DistributedVector) -> Result<()> {
        mg_cycle(self, &self.params, level, u, f, false)
    }
}

/// Assembles the global coarse matrix on every rank from the triplets of
/// all ranks, concatenated in rank order, and factors it.
fn gather_coarse(
    comm: &dyn Communicator,
    level: &RankLevel,
    partition: &RankPartition,
) -> Result<(DirectSolver, Vec<Vec<u32>>)> {
    let mut mine = Vec::new();
    for (i, b) in level.blocks.iter().enumerate() {
        let map = level.mapper.local_to_global(partition.owned(comm.rank())[i]);
        for row in 0..b.nrows() {
            for (c, v) in b.row(row) {
                mine.extend_from_slice(&[map[row] as f64, map[c] as f64, v]);
            }
        }
    }
    let parts = comm.all_gather(&mine)?;
    let trip: Vec<(usize, usize, f64)> = parts
        .iter()
        .flat_map(|p| p.chunks_exact(3).map(|t| (t[0] as usize, t[1] as usize, t[2])))
        .collect();
    let n = level.mapper.num_dofs();
    let a0 = CsrMatrix::from_triplets(n, n, &trip);
    let coarse = DirectSolver::factor(&a0)?;
    let coarse_dofs = (0..comm.size())
        .map(|r| RankLayout::build(&level.mapper, partition, r).map(|l| l.dofs().to_vec()))
        .collect::<Result<Vec<_>>>()?;
    Ok((coarse, coarse_dofs))
}

impl CycleSpace for RankHierarchy<'_> {
    type Acc = AccumulatedVector;
    type Dist = DistributedVector;

    fn finest(&self) -> usize {
        self.levels.len() - 1
    }

    fn zero_acc(&self, level: usize) -> AccumulatedVector {
        AccumulatedVector::zeros(self.levels[level].layout.len())
    }

    fn residual(&self, level: usize, f: &DistributedVector, u: &AccumulatedVector) -> Result<DistributedVector> {
        Ok(f - &self.apply_a(level, u)?)
    }

    fn smooth(&self, level: usize, u: &mut AccumulatedVector, r: &DistributedVector, tau: f64) -> Result<()> {
        let c = self.accumulate_level(level, &self.apply_smoother(level, r)?)?;
        u.axpy(tau, &c);
        Ok(())
    }

    fn restrict(&self, level: usize, r: &DistributedVector) -> Result<DistributedVector> {
        self.apply_pt(level, r)
    }

    fn prolongate_add(&self, level: usize, u: &mut AccumulatedVector, c: &AccumulatedVector, scale: f64) -> Result<()> {
        u.axpy(scale, &self.apply_p(level, c)?);
        Ok(())
    }

    fn coarse_solve(&self, r: &DistributedVector) -> Result<AccumulatedVector> {
        self.coarse_gather_solve(r)
    }
}

impl KrylovSpace for RankHierarchy<'_> {
    fn apply(&self, u: &AccumulatedVector) -> Result<DistributedVector> {
        self.apply_a(self.finest(), u)
    }

    fn accumulate(&self, r: &DistributedVector) -> Result<AccumulatedVector> {
        self.accumulate_level(self.finest(), r)
    }

    fn dot(&self, u: &AccumulatedVector, r: &DistributedVector) -> Result<f64> {
        parallel_dot(self.comm, u, r)
    }

    fn axpy_acc(&self, alpha: f64, x: &AccumulatedVector, y: &mut AccumulatedVector) {
        y.axpy(alpha, x);
    }

    fn axpy_dist(&self, alpha: f64, x: &DistributedVector, y: &mut DistributedVector) {
        y.axpy(alpha, x);
    }

    fn xpby_acc(&self, x: &AccumulatedVector, beta: f64, y: &mut AccumulatedVector) {
        y.xpby(x, beta);
    }
}

/// Result of one rank.
#[derive(Debug, Clone)]
pub struct RankOutcome {
    pub report: SolveReport,
    pub solution: AccumulatedVector,
    pub dofs: Vec<u32>,
    pub local_nnz: usize,
    pub log: Vec<MessageRecord>,
}

/// Combined result of a parallel solve.
#[derive(Debug, Clone)]
pub struct ParallelSolve {
    /// Report of rank 0 with phase times maximized over ranks.
    pub report: SolveReport,
    /// Finest-level solution in global numbering.
    pub solution: Vec<f64>,
    /// Stored entries summed over all rank blocks.
    pub nnz: usize,
    pub comm_bytes: usize,
    /// Messages sent per rank.
    pub logs: Vec<Vec<MessageRecord>>,
}

/// Runs PCG for the Poisson problem on `domain` with `ranks` ranks of
/// `backend`, patches assigned in contiguous blocks.
pub fn parallel_solve(
    backend: Backend,
    ranks: usize,
    domain: &MultiPatchDomain,
    opts: &ParallelOptions,
) -> Result<ParallelSolve> {
    let partition = RankPartition::contiguous(domain.num_patches(), ranks)?;
    let outcomes = run_ranks(backend, ranks, |comm| {
        let (h, f, timings) = RankHierarchy::build(comm, domain, &partition, opts)?;
        let t = Instant::now();
        let (u, mut report) = h.solve(&f, &opts.pcg)?;
        report.timings = Timings {
            solve: t.elapsed().as_secs_f64(),
            ..timings
        };
        Ok(RankOutcome {
            report,
            solution: u,
            dofs: h.layout(h.finest()).dofs().to_vec(),
            local_nnz: h.local_nnz(),
            log: comm.log(),
        })
    })?;
    let n = outcomes
        .iter()
        .flat_map(|o| o.dofs.iter())
        .map(|&g| g as usize + 1)
        .max()
        .unwrap_or(0);
    let mut solution = vec![0.0; n];
    for o in &outcomes {
        for (&g, &v) in o.dofs.iter().zip(o.solution.values()) {
            solution[g as usize] = v;
        }
    }
    let mut report = outcomes[0].report.clone();
    for o in &outcomes[1..] {
        report.timings.setup = report.timings.setup.max(o.report.timings.setup);
        report.timings.assemble = report.timings.assemble.max(o.report.timings.assemble);
        report.timings.solve = report.timings.solve.max(o.report.timings.solve);
    }
    Ok(ParallelSolve {
        report,
        solution,
        nnz: outcomes.iter().map(|o| o.local_nnz).sum(),
        comm_bytes: outcomes.iter().flat_map(|o| o.log.iter()).map(|m| m.bytes).sum(),
        logs: outcomes.into_iter().map(|o| o.log).collect(),
    })
}
