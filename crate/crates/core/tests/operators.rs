use std::sync::Arc;

use patchmg::assembly::SparseOperator;
use patchmg::harness::{make_fichera, make_lshape, make_unit_grid};
use patchmg::linalg::dot;
use patchmg::multigrid::{precondition, MultigridHierarchy};
use patchmg::spline::UnivariateSpace;
use patchmg::topology::{DofMapper, PieceKind};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_vec(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

proptest! {
    #[test]
    fn basis_is_a_partition_of_unity(p in 1usize..7, n in 1usize..9, x in 0.0f64..=1.0) {
        let b = UnivariateSpace::new(p, n).unwrap().eval_basis(x, 0).unwrap();
        prop_assert!((b.values.iter().sum::<f64>() - 1.0).abs() < 1e-13);
        prop_assert!(b.values.iter().all(|&v| v >= -1e-15));
    }

    #[test]
    fn derivatives_match_finite_differences(p in 2usize..6, n in 1usize..6, x in 0.05f64..0.95) {
        let s = UnivariateSpace::new(p, n).unwrap();
        let coeffs = random_vec((p * 100 + n) as u64, s.dim());
        let h = 1e-6;
        let d = s.eval_basis(x, 1).unwrap();
        let exact: f64 = d.values.iter().enumerate().map(|(k, v)| v * coeffs[d.first + k]).sum();
        let fd = (s.eval_spline(&coeffs, x + h).unwrap() - s.eval_spline(&coeffs, x - h).unwrap()) / (2.0 * h);
        // a knot inside (x-h, x+h) costs O(h |f''|) for C^1 splines
        let bound = 1e-4 * (n * n * p * p) as f64;
        prop_assert!((exact - fd).abs() <= bound, "{exact} vs {fd}");
    }

    #[test]
    fn univariate_galerkin(p in 1usize..7, n in 1usize..9) {
        let c = UnivariateSpace::new(p, n).unwrap();
        let t = c.two_scale();
        for (fine, coarse) in [
            (c.refined().stiffness().to_csr(), c.stiffness().to_dense()),
            (c.refined().mass().to_csr(), c.mass().to_dense()),
        ] {
            let g = t.transpose().matmul(&fine).matmul(&t).to_dense();
            prop_assert!((g - &coarse).abs().max() <= 1e-12 * coarse.abs().max());
        }
    }

    #[test]
    fn stiffness_is_symmetric_positive(seed in 0u64..1000, p in 1usize..4) {
        let domain = make_lshape();
        let mapper = Arc::new(DofMapper::build(&domain, 1, p).unwrap());
        let a = SparseOperator::assemble(&domain, Arc::clone(&mapper)).unwrap();
        let n = a.dim();
        let (x, y) = (random_vec(seed, n), random_vec(seed + 1, n));
        let (mut ax, mut ay) = (vec![0.0; n], vec![0.0; n]);
        a.apply(&x, &mut ax).unwrap();
        a.apply(&y, &mut ay).unwrap();
        prop_assert!((dot(&ax, &y) - dot(&x, &ay)).abs() <= 1e-12 * dot(&ax, &x).abs().max(1.0));
        prop_assert!(dot(&ax, &x) > 0.0);
    }
}

#[test]
fn pieces_partition_the_dofs() {
    for (domain, levels) in [(make_fichera(), 1), (make_lshape(), 2), (make_unit_grid(&[3, 2]).unwrap(), 2)] {
        for p in [2, 3] {
            let mapper = DofMapper::build(&domain, levels, p).unwrap();
            let mut seen = vec![0u8; mapper.num_dofs()];
            for piece in &mapper.pieces().pieces {
                for &g in &piece.dofs {
                    seen[g as usize] += 1;
                }
            }
            assert!(seen.iter().all(|&c| c == 1));
        }
    }
}

#[test]
fn fichera_has_faces_edges_and_vertices() {
    let mapper = DofMapper::build(&make_fichera(), 2, 3).unwrap();
    let pieces = mapper.pieces();
    assert_eq!(pieces.count(PieceKind::Interior), 7);
    // 9 interfaces and 12 Neumann sides
    assert_eq!(pieces.count(PieceKind::Face), 21);
    assert!(pieces.count(PieceKind::Edge) > 0);
    assert!(pieces.count(PieceKind::Vertex) > 0);
}

#[test]
fn split_preserves_the_geometry() {
    let base = make_lshape();
    let split = base.split_patches(2).unwrap();
    assert_eq!(split.num_patches(), 12);
    let area = |d: &patchmg::topology::MultiPatchDomain| -> f64 {
        // each sub-patch is an axis box, so |det J| is constant on it
        d.patches()
            .iter()
            .map(|g| g.jacobian(&[0.5, 0.5]).unwrap().det.abs())
            .sum()
    };
    assert!((area(&base) - 3.0).abs() < 1e-12);
    assert!((area(&split) - 3.0).abs() < 1e-12);
    for (k, g) in split.patches().iter().enumerate() {
        let x = g.eval(&[0.3, 0.7]).unwrap();
        let parent = &base.patches()[k / 4];
        let (i, j) = ((k % 4) % 2, (k % 4) / 2);
        let y = parent.eval(&[(i as f64 + 0.3) / 2.0, (j as f64 + 0.7) / 2.0]).unwrap();
        assert!((0..2).all(|c| (x[c] - y[c]).abs() < 1e-12));
    }
}

#[test]
fn preconditioner_is_symmetric() {
    for (domain, levels) in [(make_unit_grid(&[2, 2]).unwrap(), 2), (make_fichera(), 1)] {
        for p in [2, 4] {
            let h = MultigridHierarchy::build_default(&domain, levels, p).unwrap();
            let n = h.finest_operator().dim();
            let (r, s) = (random_vec(7, n), random_vec(8, n));
            let cr = precondition(&h, h.params(), &r).unwrap();
            let cs = precondition(&h, h.params(), &s).unwrap();
            let (a, b) = (dot(&cr, &s), dot(&r, &cs));
            assert!((a - b).abs() <= 1e-10 * a.abs().max(b.abs()), "{a} vs {b}");
            assert!(dot(&cr, &r) > 0.0);
        }
    }
}

#[test]
fn w_cycle_needs_no_more_iterations_than_v_cycle() {
    use patchmg::harness::{run_solve, DomainChoice, ExperimentConfig};
    use patchmg::multigrid::CycleKind;
    for (domain, levels) in [(DomainChoice::LShape, 3), (DomainChoice::Fichera, 2)] {
        let v = ExperimentConfig {
            domain,
            levels,
            ..Default::default()
        };
        let w = ExperimentConfig {
            cycle: CycleKind::W,
            ..v.clone()
        };
        let (iv, iw) = (run_solve(&v).unwrap().iters, run_solve(&w).unwrap().iters);
        assert!(iw <= iv + 2, "W {iw} vs V {iv}");
    }
}

#[test]
fn fichera_dof_counts_at_448_patches() {
    let domain = make_fichera().split_patches(4).unwrap();
    assert_eq!(domain.num_patches(), 448);
    assert_eq!(DofMapper::build(&domain, 3, 4).unwrap().num_dofs(), 596_288);
    assert_eq!(DofMapper::build(&domain, 4, 2).unwrap().num_dofs(), 2_201_024);
}
