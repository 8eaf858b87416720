//! Quick invariant suite run by the `check` command.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::domains::make_unit_grid;
use crate::assembly::{assemble_patch_stiffness, assemble_rhs};
use crate::error::Result;
use crate::linalg::{dot, tensor_kron, CsrMatrix};
use crate::multigrid::{precondition, MultigridHierarchy};
use crate::parallel::{op, parallel_solve, run_ranks, tag_op, Backend, ParallelOptions, RankHierarchy, RankPartition};
use crate::parallel::{AccumulatedVector, DistributedVector};
use crate::spline::UnivariateSpace;
use crate::topology::GeometryMap;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

type Check = fn(u64) -> Result<(bool, String)>;

const CHECKS: &[(&str, Check)] = &[
    ("partition of unity", partition_of_unity),
    ("identity-geometry stiffness", identity_stiffness),
    ("galerkin coarse operator", galerkin),
    ("preconditioner symmetry", preconditioner_symmetry),
    ("accumulate sums contributions", accumulate_sum),
    ("dot counts shared dofs once", dot_splitting),
    ("ranks reproduce serial solve", serial_equivalence),
    ("accumulate talks only to neighbors", locality),
];

/// Runs every check; errors count as failures.
pub fn run_checks(seed: u64) -> Vec<CheckOutcome> {
    CHECKS
        .iter()
        .map(|&(name, f)| match f(seed) {
            Ok((passed, detail)) => CheckOutcome { name, passed, detail },
            Err(e) => CheckOutcome {
                name,
                passed: false,
                detail: e.to_string(),
            },
        })
        .collect()
}

fn max_abs_diff(a: &CsrMatrix, b: &CsrMatrix) -> f64 {
    (a.to_dense() - b.to_dense()).abs().max()
}

fn partition_of_unity(seed: u64) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for p in 1..=5 {
        for n in [1, 3, 7] {
            let s = UnivariateSpace::new(p, n)?;
            for _ in 0..20 {
                let b = s.eval_basis(rng.gen_range(0.0..=1.0), 0)?;
                worst = worst.max((b.values.iter().sum::<f64>() - 1.0).abs());
            }
        }
    }
    Ok((worst <= 1e-13, format!("max |Σ B_i - 1| = {worst:.2e}")))
}

fn identity_stiffness(_: u64) -> Result<(bool, String)> {
    let s = UnivariateSpace::new(3, 4)?;
    let g = GeometryMap::axis_box(&[0.0, 0.0], &[1.0, 1.0])?;
    let a = assemble_patch_stiffness(&g, &[s, s])?;
    let (k, m) = (s.stiffness().to_csr(), s.mass().to_csr());
    let km = tensor_kron(&[&k, &m]).to_dense() + tensor_kron(&[&m, &k]).to_dense();
    let err = (a.to_dense() - km).abs().max();
    Ok((err <= 1e-12, format!("max entry error {err:.2e}")))
}

fn galerkin(_: u64) -> Result<(bool, String)> {
    let domain = make_unit_grid(&[2, 1])?;
    let h = MultigridHierarchy::build_default(&domain, 1, 2)?;
    let p = h.level(1).transfer.as_ref().expect("transfer").matrix();
    let fine = h.level(1).operator.to_global();
    let coarse = h.level(0).operator.to_global();
    let galerkin = p.transpose().matmul(&fine).matmul(p);
    let err = max_abs_diff(&galerkin, &coarse) / coarse.to_dense().abs().max();
    Ok((err <= 1e-12, format!("relative error {err:.2e}")))
}

fn preconditioner_symmetry(seed: u64) -> Result<(bool, String)> {
    let domain = make_unit_grid(&[2, 2])?;
    let h = MultigridHierarchy::build_default(&domain, 2, 2)?;
    let n = h.finest_operator().dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let s: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let cr = precondition(&h, h.params(), &r)?;
    let cs = precondition(&h, h.params(), &s)?;
    let (a, b) = (dot(&cr, &s), dot(&r, &cs));
    let err = (a - b).abs() / a.abs().max(b.abs());
    Ok((err <= 1e-10, format!("⟨Cr,s⟩ = {a:.12e}, ⟨r,Cs⟩ = {b:.12e}")))
}

fn two_rank_values(weights: [f64; 2], acc_one: bool) -> Result<Vec<f64>> {
    let domain = make_unit_grid(&[2, 1])?;
    let part = RankPartition::contiguous(2, 2)?;
    let opts = ParallelOptions {
        levels: 1,
        ..Default::default()
    };
    run_ranks(Backend::InProc, 2, |comm| {
        let (h, _, _) = RankHierarchy::build(comm, &domain, &part, &opts)?;
        let layout = h.layout(1);
        let shared = &layout.exchanges()[0].local;
        let mut v = vec![0.0; layout.len()];
        v[shared[0] as usize] = weights[comm.rank()];
        let v = DistributedVector::from_values(v);
        if acc_one {
            let u = AccumulatedVector::from_values(vec![1.0; layout.len()]);
            crate::parallel::parallel_dot(comm, &u, &v)
        } else {
            Ok(h.accumulate_level(1, &v)?.values()[shared[0] as usize])
        }
    })
}

fn accumulate_sum(_: u64) -> Result<(bool, String)> {
    let v = two_rank_values([0.25, 0.75], false)?;
    Ok((v.iter().all(|&x| x == 1.0), format!("replicas {v:?}")))
}

fn dot_splitting(_: u64) -> Result<(bool, String)> {
    let v = two_rank_values([0.3, 0.7], true)?;
    Ok((v.iter().all(|&x| x == 0.3 + 0.7), format!("dot per rank {v:?}")))
}

fn serial_equivalence(_: u64) -> Result<(bool, String)> {
    let domain = make_unit_grid(&[2, 2])?;
    let opts = ParallelOptions::default();
    let h = MultigridHierarchy::build_default(&domain, opts.levels, opts.degree)?;
    let f = assemble_rhs(&domain, &h.level(opts.levels).mapper, domain.source())?;
    let (_, serial) = h.solve(&f, &opts.pcg)?;
    let one = parallel_solve(Backend::Loopback, 1, &domain, &opts)?;
    let four = parallel_solve(Backend::InProc, 4, &domain, &opts)?;
    let ok = one.report.residuals == serial.residuals && four.report.iterations <= serial.iterations + 1;
    Ok((
        ok,
        format!(
            "iterations serial {}, R=1 {}, R=4 {}",
            serial.iterations, one.report.iterations, four.report.iterations
        ),
    ))
}

fn locality(_: u64) -> Result<(bool, String)> {
    let domain = make_unit_grid(&[4, 1])?;
    let out = parallel_solve(Backend::InProc, 4, &domain, &ParallelOptions::default())?;
    let bad = out
        .logs
        .iter()
        .flatten()
        .filter(|m| tag_op(m.tag) == op::ACCUMULATE && m.from.abs_diff(m.to) != 1)
        .count();
    Ok((bad == 0, format!("{bad} accumulate messages between non-neighbors")))
}
