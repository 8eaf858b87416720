use patchmg::harness::{make_fichera, make_unit_grid};
use patchmg::multigrid::{CycleSpace, MultigridHierarchy};
use patchmg::parallel::{
    op, parallel_dot, parallel_solve, run_ranks, tag_op, AccumulatedVector, Backend, DistributedVector,
    ParallelOptions, RankHierarchy, RankPartition,
};
use patchmg::smoother::DEFAULT_SIGMA_SCALE;
use patchmg::topology::MultiPatchDomain;
use patchmg::Result;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn opts(levels: usize, degree: usize) -> ParallelOptions {
    ParallelOptions {
        levels,
        degree,
        check_consistency: true,
        ..Default::default()
    }
}

fn serial(domain: &MultiPatchDomain, o: &ParallelOptions) -> MultigridHierarchy {
    MultigridHierarchy::build(domain, o.levels, o.degree, DEFAULT_SIGMA_SCALE, o.cycle).unwrap()
}

fn random_vec(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Runs `body` on every rank with its part of the hierarchy.
fn on_ranks<T: Send>(
    domain: &MultiPatchDomain,
    ranks: usize,
    o: &ParallelOptions,
    body: impl Fn(&RankHierarchy<'_>) -> Result<T> + Sync,
) -> Vec<T> {
    let part = RankPartition::contiguous(domain.num_patches(), ranks).unwrap();
    run_ranks(Backend::InProc, ranks, |comm| {
        let (h, _, _) = RankHierarchy::build(comm, domain, &part, o)?;
        body(&h)
    })
    .unwrap()
}

/// Distributed form of a global vector: each shared value is credited to
/// the lowest rank holding it.
fn split_lowest(h: &RankHierarchy<'_>, level: usize, global: &[f64]) -> DistributedVector {
    let layout = h.layout(level);
    let me = h.comm().rank();
    let mapper = &h.levels()[level].mapper;
    let part = RankPartition::contiguous(mapper.num_patches(), h.comm().size()).unwrap();
    DistributedVector::from_values(
        layout
            .dofs()
            .iter()
            .map(|&g| {
                if part.dof_ranks(mapper, g as usize)[0] == me {
                    global[g as usize]
                } else {
                    0.0
                }
            })
            .collect(),
    )
}

fn gather(parts: &[(Vec<u32>, Vec<f64>)], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for (dofs, vals) in parts {
        for (&g, &v) in dofs.iter().zip(vals) {
            out[g as usize] = v;
        }
    }
    out
}

fn max_rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

#[test]
fn shared_contributions_accumulate_to_their_sum() {
    let domain = make_unit_grid(&[2, 1]).unwrap();
    let out = on_ranks(&domain, 2, &opts(1, 2), |h| {
        let layout = h.layout(1);
        let shared: Vec<u32> = layout.exchanges()[0].local.clone();
        let mut v = vec![0.0; layout.len()];
        for &l in &shared {
            v[l as usize] = if h.comm().rank() == 0 { 0.25 } else { 0.75 };
        }
        let acc = h.accumulate_level(1, &DistributedVector::from_values(v))?;
        Ok(shared.iter().map(|&l| acc.values()[l as usize]).collect::<Vec<_>>())
    });
    for vals in out {
        assert!(!vals.is_empty());
        assert!(vals.iter().all(|&v| v == 1.0));
    }
}

#[test]
fn shared_dof_counts_once_in_dot() {
    let domain = make_unit_grid(&[2, 1]).unwrap();
    let out = on_ranks(&domain, 2, &opts(1, 2), |h| {
        let layout = h.layout(1);
        let shared = &layout.exchanges()[0].local;
        let u = AccumulatedVector::from_values(vec![1.0; layout.len()]);
        let mut v = vec![0.0; layout.len()];
        let w = if h.comm().rank() == 0 { 0.3 } else { 0.7 };
        v[shared[0] as usize] = w;
        parallel_dot(h.comm(), &u, &DistributedVector::from_values(v))
    });
    assert_eq!(out[0], 0.3 + 0.7);
    assert_eq!(out[0].to_bits(), out[1].to_bits());
}

#[test]
fn accumulate_matches_serial_scatter_sum_bitwise() {
    let domain = make_unit_grid(&[4, 2]).unwrap();
    let o = opts(1, 2);
    let n = serial(&domain, &o).level(1).mapper.num_dofs();
    // contribution of rank r to dof g
    let contrib = |r: usize, g: u32| random_vec(1, 1000 * r as u64 + g as u64)[0];
    let parts = on_ranks(&domain, 4, &o, |h| {
        let layout = h.layout(1);
        let r = h.comm().rank();
        let v: Vec<f64> = layout.dofs().iter().map(|&g| contrib(r, g)).collect();
        let acc = h.accumulate_level(1, &DistributedVector::from_values(v))?;
        Ok((layout.dofs().to_vec(), acc.into_values()))
    });
    let mut oracle = vec![None::<f64>; n];
    for (r, (dofs, _)) in parts.iter().enumerate() {
        for &g in dofs {
            let c = contrib(r, g);
            oracle[g as usize] = Some(oracle[g as usize].map_or(c, |s| s + c));
        }
    }
    for (dofs, vals) in &parts {
        for (&g, v) in dofs.iter().zip(vals) {
            assert_eq!(v.to_bits(), oracle[g as usize].unwrap().to_bits());
        }
    }
}

#[test]
fn level_operators_match_serial_on_four_ranks() {
    let domain = make_unit_grid(&[4, 2]).unwrap();
    let o = opts(2, 2);
    let s = serial(&domain, &o);
    let n2 = s.level(2).mapper.num_dofs();
    let n1 = s.level(1).mapper.num_dofs();
    let n0 = s.level(0).mapper.num_dofs();
    let u = random_vec(n2, 1);
    let c = random_vec(n1, 2);
    let r0 = random_vec(n0, 3);

    let mut au = vec![0.0; n2];
    s.level(2).operator.apply(&u, &mut au).unwrap();
    let ptu = s.restrict(2, &u).unwrap();
    let pc = {
        let mut w = vec![0.0; n2];
        s.level(2).transfer.as_ref().unwrap().prolongate(&c, &mut w).unwrap();
        w
    };
    let mut lu = vec![0.0; n2];
    s.level(2).smoother.apply(&u, &mut lu).unwrap();
    let x0 = s.coarse_solve(&r0).unwrap();

    let parts = on_ranks(&domain, 4, &o, |h| {
        let acc = |l: usize, g: &[f64]| AccumulatedVector::from_values(h.layout(l).gather(g));
        let dist = |l: usize, g: &[f64]| split_lowest(h, l, g);
        let a = h.accumulate_level(2, &h.apply_a(2, &acc(2, &u))?)?;
        let pt = h.accumulate_level(1, &h.apply_pt(2, &dist(2, &u))?)?;
        let p = h.apply_p(2, &acc(1, &c))?;
        h.check_replicas(2, &p)?;
        let sm_acc = h.apply_smoother(2, &acc(2, &u))?;
        h.check_replicas(2, &sm_acc)?;
        let sm_dist = h.accumulate_level(2, &h.apply_smoother(2, &dist(2, &u))?)?;
        let full = h.coarse_global_solve(&dist(0, &r0))?;
        let x = h.coarse_gather_solve(&dist(0, &r0))?;
        let d2 = h.layout(2).dofs().to_vec();
        let d1 = h.layout(1).dofs().to_vec();
        let d0 = h.layout(0).dofs().to_vec();
        Ok((
            [
                (d2.clone(), a.into_values()),
                (d1, pt.into_values()),
                (d2.clone(), p.into_values()),
                (d2.clone(), sm_acc.into_values()),
                (d2, sm_dist.into_values()),
                (d0, x.into_values()),
            ],
            full,
        ))
    });
    let pick = |i: usize| parts.iter().map(|(p, _)| p[i].clone()).collect::<Vec<_>>();
    assert!(max_rel_diff(&gather(&pick(0), n2), &au) < 1e-13);
    assert!(max_rel_diff(&gather(&pick(1), n1), &ptu) < 1e-13);
    assert!(max_rel_diff(&gather(&pick(2), n2), &pc) < 1e-13);
    assert!(max_rel_diff(&gather(&pick(3), n2), &lu) < 1e-12);
    assert!(max_rel_diff(&gather(&pick(4), n2), &lu) < 1e-12);
    assert!(max_rel_diff(&gather(&pick(5), n0), &x0) < 1e-12);
    for (_, full) in &parts[1..] {
        assert!(full.iter().zip(&parts[0].1).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}

#[test]
fn accumulate_talks_only_to_neighbors() {
    let domain = make_unit_grid(&[4, 1]).unwrap();
    let out = parallel_solve(Backend::InProc, 4, &domain, &opts(2, 2)).unwrap();
    for (r, log) in out.logs.iter().enumerate() {
        for m in log.iter().filter(|m| tag_op(m.tag) == op::ACCUMULATE) {
            assert_eq!(m.from, r);
            assert_eq!(m.to.abs_diff(r), 1, "rank {r} sent to {}", m.to);
        }
    }
}

#[test]
fn one_rank_reproduces_serial() {
    let domain = make_unit_grid(&[2, 2]).unwrap();
    let o = ParallelOptions {
        check_consistency: false,
        ..opts(2, 3)
    };
    let s = serial(&domain, &o);
    let f = patchmg::assembly::assemble_rhs(&domain, &s.level(2).mapper, domain.source()).unwrap();
    let (_, reference) = s.solve(&f, &o.pcg).unwrap();
    for backend in [Backend::Loopback, Backend::InProc] {
        let par = parallel_solve(backend, 1, &domain, &o).unwrap();
        assert_eq!(par.report.iterations, reference.iterations);
        assert_eq!(par.report.residuals, reference.residuals);
    }
}

#[test]
fn ranks_match_serial_iterations_and_history() {
    let domain = make_fichera();
    let o = ParallelOptions {
        check_consistency: false,
        ..opts(1, 2)
    };
    let s = serial(&domain, &o);
    let f = patchmg::assembly::assemble_rhs(&domain, &s.level(1).mapper, domain.source()).unwrap();
    let (u, reference) = s.solve(&f, &o.pcg).unwrap();
    let first = parallel_solve(Backend::InProc, 4, &domain, &o).unwrap();
    for ranks in [2, 4, 7] {
        let par = parallel_solve(Backend::InProc, ranks, &domain, &o).unwrap();
        let it = par.report.iterations;
        assert!(it == reference.iterations || it == reference.iterations + 1);
        for (a, b) in par.report.residuals.iter().zip(&reference.residuals).take(5) {
            assert!((a - b).abs() <= 1e-10 * b.abs());
        }
        assert!(max_rel_diff(&par.solution, &u) < 1e-8);
        if ranks == 4 {
            // bitwise reproducible
            assert_eq!(par.report.residuals, first.report.residuals);
        }
    }
}

#[test]
fn dot_matches_serial_on_four_ranks() {
    let domain = make_unit_grid(&[4, 2]).unwrap();
    let o = opts(1, 2);
    let n = serial(&domain, &o).level(1).mapper.num_dofs();
    let (u, v) = (random_vec(n, 5), random_vec(n, 6));
    let reference: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
    let out = on_ranks(&domain, 4, &o, |h| {
        let a = AccumulatedVector::from_values(h.layout(1).gather(&u));
        parallel_dot(h.comm(), &a, &split_lowest(h, 1, &v))
    });
    assert!((out[0] - reference).abs() <= 1e-14 * n as f64);
    assert!(out.iter().all(|x| x.to_bits() == out[0].to_bits()));
}

#[test]
fn straddling_rank_count_is_rejected() {
    let domain = make_unit_grid(&[2, 1]).unwrap();
    assert!(parallel_solve(Backend::InProc, 3, &domain, &opts(1, 2)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn split_then_accumulate_round_trips(seed in 0u64..1000, weights in proptest::collection::vec(0u32..8, 4)) {
        let domain = make_unit_grid(&[4, 2]).unwrap();
        let o = opts(1, 2);
        let n = serial(&domain, &o).level(1).mapper.num_dofs();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // dyadic values so that every integer split sums exactly
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-512i32..512) as f64 / 64.0).collect();
        let parts = on_ranks(&domain, 4, &o, |h| {
            let layout = h.layout(1);
            let me = h.comm().rank();
            let mapper = &h.levels()[1].mapper;
            let part = RankPartition::contiguous(mapper.num_patches(), 4).unwrap();
            let vals: Vec<f64> = layout.dofs().iter().map(|&g| {
                let ranks = part.dof_ranks(mapper, g as usize);
                let w: Vec<f64> = ranks.iter().map(|&r| weights[r] as f64 + 1.0).collect();
                let total: f64 = w.iter().sum();
                let pos = ranks.iter().position(|&r| r == me).unwrap();
                let share = (v[g as usize] * 64.0 * w[pos] / total).floor() / 64.0;
                if pos + 1 == ranks.len() {
                    // remainder to the highest rank
                    let others: f64 = ranks[..pos].iter().enumerate().map(|(i, _)| (v[g as usize] * 64.0 * w[i] / total).floor() / 64.0).sum();
                    v[g as usize] - others
                } else {
                    share
                }
            }).collect();
            let acc = h.accumulate_level(1, &DistributedVector::from_values(vals))?;
            Ok((layout.dofs().to_vec(), acc.into_values()))
        });
        for (dofs, vals) in parts {
            for (&g, &x) in dofs.iter().zip(&vals) {
                prop_assert_eq!(x, v[g as usize]);
            }
        }
    }
}
