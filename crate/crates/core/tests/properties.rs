//! Property tests for the invariants that hold across randomised inputs:
//! unitarity, gauge invariance, trajectory non-crossing, quadrature
//! monotonicity, typicality algebra and sampling determinism.

use std::sync::OnceLock;

use bohmlab_core::*;
use num_complex::Complex64;
use proptest::prelude::*;

fn grid512() -> Grid {
    Grid::line(-16.0, 16.0, 512).unwrap()
}

fn packet(center: f64, width: f64, momentum: f64) -> StateRecipe {
    StateRecipe::Gaussian {
        center: vec![center],
        width: vec![width],
        momentum: vec![momentum],
    }
}

fn potential_from_index(i: usize) -> Potential {
    match i % 4 {
        0 => Potential::Free,
        1 => Potential::Harmonic { omega: 1.0 },
        2 => Potential::Box {
            width: 16.0,
            wall_height: 50.0,
        },
        _ => Potential::DoubleWell {
            barrier_height: 2.0,
            separation: 6.0,
        },
    }
}

/// Shared free-Gaussian flow for the trajectory properties.
fn free_flow() -> &'static (EvolutionContext, VelocityTable, NodePolicy) {
    static FLOW: OnceLock<(EvolutionContext, VelocityTable, NodePolicy)> = OnceLock::new();
    FLOW.get_or_init(|| {
        let grid = grid512();
        let psi = make_state(&grid, &packet(0.0, 1.0, 0.3)).unwrap();
        let cfg = EvolutionConfig::natural(&grid, 0.002).unwrap();
        let ctx = EvolutionContext::new(&psi, &Potential::Free, &cfg, 2.0, 0.01).unwrap();
        let policy = NodePolicy::for_experiment(&ctx, 0.0, 2.0).unwrap();
        let table = VelocityTable::new(&ctx, policy.node_epsilon);
        (ctx, table, policy)
    })
}

fn ground_state_ctx() -> &'static EvolutionContext {
    static CTX: OnceLock<EvolutionContext> = OnceLock::new();
    CTX.get_or_init(|| {
        let grid = grid512();
        let psi = make_state(
            &grid,
            &StateRecipe::Eigenstate {
                potential: Potential::Harmonic { omega: 1.0 },
                n: vec![0],
            },
        )
        .unwrap();
        let cfg = EvolutionConfig::natural(&grid, 0.002).unwrap();
        EvolutionContext::new(&psi, &Potential::Harmonic { omega: 1.0 }, &cfg, 0.0, 1.0).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    // unitarity: any potential, any packet, any step count
    #[test]
    fn evolution_preserves_norm(
        pot_idx in 0usize..4,
        center in -4.0f64..4.0,
        width in 0.5f64..2.0,
        momentum in -3.0f64..3.0,
        steps in 1usize..200,
    ) {
        let grid = grid512();
        let psi = make_state(&grid, &packet(center, width, momentum)).unwrap();
        let cfg = EvolutionConfig::natural(&grid, 0.002).unwrap();
        let out = evolve(&psi, &potential_from_index(pot_idx), &cfg, steps as f64 * 0.002).unwrap();
        prop_assert!((out.norm_squared().sqrt() - 1.0).abs() < 1e-10);
    }

    // a global phase never changes the velocity field where it is resolved
    #[test]
    fn velocity_is_gauge_invariant(
        theta in 0.0f64..std::f64::consts::TAU,
        center in -2.0f64..2.0,
        momentum in -2.0f64..2.0,
    ) {
        let grid = grid512();
        let psi = make_state(&grid, &packet(center, 1.0, momentum)).unwrap();
        let eps = 1e-12 * psi.peak_density();
        let rotated = Wavefunction::normalized(
            grid.clone(),
            psi.amplitudes().iter().map(|a| a * Complex64::cis(theta)).collect(),
            psi.time(),
        )
        .unwrap();
        let f0 = velocity_field(&psi, &[1.0], 1.0, eps);
        let f1 = velocity_field(&rotated, &[1.0], 1.0, eps);
        let floor = 1e-4 * psi.peak_density();
        let density = psi.density();
        for (i, rho) in density.iter().enumerate() {
            if *rho > floor {
                prop_assert!((f0.component(0)[i] - f1.component(0)[i]).abs() < 1e-12);
            }
        }
    }

    // first-order flow uniqueness: 1d trajectories keep their order
    #[test]
    fn trajectories_never_cross(a in -2.5f64..2.4, gap in 0.01f64..2.0) {
        let (_, table, policy) = free_flow();
        let b = (a + gap).min(2.5);
        prop_assume!(b > a);
        let times: Vec<f64> = (0..=50).map(|i| i as f64 * 0.04).collect();
        let ta = integrate_trajectory(Point::new_1d(a), &times, table, policy).unwrap();
        let tb = integrate_trajectory(Point::new_1d(b), &times, table, policy).unwrap();
        for (sa, sb) in ta.samples().iter().zip(tb.samples()) {
            prop_assert!(sa.1.coord(0) < sb.1.coord(0));
        }
    }

    // quadrature is monotone under region inclusion
    #[test]
    fn sqm_measure_is_monotone(lo in -8.0f64..7.0, len in 0.1f64..4.0, grow in 0.1f64..4.0) {
        let ctx = ground_state_ctx();
        let inner = Perception {
            id: "inner".into(),
            t: 0.0,
            region: Region::intervals(&[(lo, lo + len)]).unwrap(),
            prior_weight: 1.0,
        };
        let outer = Perception {
            id: "outer".into(),
            t: 0.0,
            region: Region::intervals(&[(lo - grow, lo + len + grow)]).unwrap(),
            prior_weight: 1.0,
        };
        let mi = sqm_measure_density(&inner, ctx).unwrap();
        let mo = sqm_measure_density(&outer, ctx).unwrap();
        prop_assert!(mi <= mo + 1e-15);
        prop_assert!((0.0..=1.0).contains(&mi));
    }

    // typicality algebra on arbitrary weighted densities
    #[test]
    fn typicality_laws(
        m in prop::collection::vec(0.0f64..1.0, 1..12),
        scale in 0.01f64..100.0,
    ) {
        let weights = vec![1.0; m.len()];
        prop_assume!(m.iter().any(|v| *v > 0.0));
        let t = typicality_values(&weights, &m).unwrap();
        // monotone in m, maximum exactly 1
        let mut order: Vec<usize> = (0..m.len()).collect();
        order.sort_by(|&i, &j| m[i].partial_cmp(&m[j]).unwrap());
        for w in order.windows(2) {
            prop_assert!(t[w[0]] <= t[w[1]] + 1e-15);
        }
        prop_assert_eq!(t[*order.last().unwrap()], 1.0);
        // in (0, 1] wherever m > 0
        for i in 0..m.len() {
            if m[i] > 0.0 {
                prop_assert!(t[i] > 0.0 && t[i] <= 1.0);
            }
        }
        // invariant under a common prior rescale
        let scaled: Vec<f64> = weights.iter().map(|w| w * scale).collect();
        let ts = typicality_values(&scaled, &m).unwrap();
        for (a, b) in t.iter().zip(&ts) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    // brute-force equivalence straight from the definition
    #[test]
    fn typicality_matches_brute_force(
        pairs in prop::collection::vec((0.01f64..5.0, 0.0f64..1.0), 1..10),
    ) {
        let weights: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let m: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        prop_assume!(m.iter().zip(&weights).map(|(mi, w)| mi * w).sum::<f64>() > 0.0);
        let t = typicality_values(&weights, &m).unwrap();
        let mu: f64 = weights.iter().zip(&m).map(|(w, mi)| w * mi).sum();
        for i in 0..m.len() {
            let mut below = 0.0;
            for j in 0..m.len() {
                if m[j] <= m[i] {
                    below += weights[j] * m[j];
                }
            }
            prop_assert_eq!(t[i], below / mu);
        }
    }

    // identical (seed, density) draws identical points
    #[test]
    fn sampling_is_deterministic(seed in any::<u64>(), n in 1usize..200) {
        let grid = grid512();
        let density: Vec<f64> = (0..grid.len())
            .map(|i| (-(grid.point(i).coord(0).powi(2)) / 2.0).exp())
            .collect();
        let a = sample_initial(&grid, &density, n, seed).unwrap();
        let b = sample_initial(&grid, &density, n, seed).unwrap();
        prop_assert_eq!(a, b);
    }

    // posteriors are invariant under a common prior rescale
    #[test]
    fn posterior_scale_invariance(
        l1 in 0.01f64..1.0,
        l2 in 0.01f64..1.0,
        scale in 0.1f64..50.0,
    ) {
        let post = |p1: f64, p2: f64| {
            let e = p1 * l1 + p2 * l2;
            (p1 * l1 / e, p2 * l2 / e)
        };
        let (a1, a2) = post(0.5, 0.5);
        let (b1, b2) = post(0.5 * scale, 0.5 * scale);
        prop_assert!((a1 - b1).abs() < 1e-12);
        prop_assert!((a2 - b2).abs() < 1e-12);
    }
}
