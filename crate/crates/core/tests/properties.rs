//! Property tests over random networks and models.

use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::Rng;
use surropt::encode::{interval_bounds, tighten_bounds, Formulation, TightenOptions};
use surropt::io::{export_lp, import_lp, network_to_json, parse_network};
use surropt::nn::random::{random_network_seeded, seeded_rng};
use surropt::problems::SurrogateProblem;
use surropt::regions::{enumerate_nonempty_patterns, zaslavsky_count, DEFAULT_SLACK};
use surropt::solve::{
    dual_objective, lp_solve_relaxation, milp_solve, mpcc_local_solve, switches_from_complementarities, MilpOptions,
    PatternOptions, PatternStart, SolveStatus,
};
use surropt::stationarity::{check_strong_stationarity, MpccPoint, StationarityTol};
use surropt::{Activation, Layer, Network, DEFAULT_DEGENERACY_TOL};

fn hidden_sizes() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1usize..5, 1..4)
}

fn relu_net(seed: u64, input: usize, hidden: &[usize], output: usize) -> Network {
    random_network_seeded(seed, input, hidden, output, Activation::Relu).unwrap()
}

fn sample_box(seed: u64, bx: &[(f64, f64)], count: usize) -> Vec<Vec<f64>> {
    let mut rng = seeded_rng(seed ^ 0x5eed);
    (0..count).map(|_| bx.iter().map(|&(lo, hi)| rng.gen_range(lo..=hi)).collect()).collect()
}

fn unit_box(n: usize) -> Vec<(f64, f64)> {
    vec![(-1.0, 1.0); n]
}

fn surrogate(seed: u64, net: &Network) -> SurrogateProblem {
    let mut rng = seeded_rng(seed.wrapping_add(1));
    let gy = (0..net.output_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let gx = (0..net.input_dim()).map(|_| rng.gen_range(-0.5..0.5)).collect();
    SurrogateProblem::linear(unit_box(net.input_dim()), gy).with_gx(gx)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn forward_matches_affine_piece(seed: u64, hidden in hidden_sizes(), n in 1usize..5, p in 1usize..3) {
        let net = relu_net(seed, n, &hidden, p);
        for x in sample_box(seed, &unit_box(n), 10) {
            let y = net.forward(&x).unwrap();
            let pattern = net.sign_partition(&x, 0.0).unwrap().active_pattern();
            let z = net.affine_piece(&pattern).unwrap().apply(&x);
            for (a, b) in y.iter().zip(&z) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn relu_jacobian_locally_constant(seed: u64, hidden in hidden_sizes(), n in 1usize..5) {
        let net = relu_net(seed, n, &hidden, 2);
        for x in sample_box(seed, &unit_box(n), 5) {
            let part = net.sign_partition(&x, DEFAULT_DEGENERACY_TOL).unwrap();
            if part.is_degenerate() {
                continue;
            }
            let moved: Vec<f64> = x.iter().enumerate().map(|(j, v)| v + 1e-9 * (j as f64 + 1.0)).collect();
            if net.sign_partition(&moved, DEFAULT_DEGENERACY_TOL).unwrap() != part {
                continue;
            }
            prop_assert_eq!(net.jacobian(&x, DEFAULT_DEGENERACY_TOL).unwrap(), net.jacobian(&moved, DEFAULT_DEGENERACY_TOL).unwrap());
        }
    }

    #[test]
    fn flat_swish_is_affine(seed: u64, hidden in hidden_sizes(), n in 1usize..4) {
        let net = relu_net(seed, n, &hidden, 2).with_hidden_activation(Activation::Swish { beta: 0.0 }).unwrap();
        let pts = sample_box(seed, &unit_box(n), 2);
        let zero = net.forward(&vec![0.0; n]).unwrap();
        let lin = |x: &[f64]| -> Vec<f64> {
            net.forward(x).unwrap().iter().zip(&zero).map(|(a, b)| a - b).collect()
        };
        let sum: Vec<f64> = pts[0].iter().zip(&pts[1]).map(|(a, b)| a + b).collect();
        let (a, b, s) = (lin(&pts[0]), lin(&pts[1]), lin(&sum));
        for k in 0..s.len() {
            prop_assert!((a[k] + b[k] - s[k]).abs() <= 1e-12);
        }
    }

    #[test]
    fn network_json_round_trip(seed: u64, hidden in hidden_sizes(), swish: bool) {
        let act = if swish { Activation::swish() } else { Activation::Relu };
        let net = random_network_seeded(seed, 3, &hidden, 2, act).unwrap();
        let text = network_to_json(&net);
        let back = parse_network(&text).unwrap();
        prop_assert_eq!(&back, &net);
        prop_assert_eq!(network_to_json(&back), text);
    }

    #[test]
    fn bounds_contain_sampled_preactivations(seed: u64, hidden in hidden_sizes(), n in 1usize..4) {
        let net = relu_net(seed, n, &hidden, 1);
        let bx = unit_box(n);
        let interval = interval_bounds(&net, &bx).unwrap();
        let lp = tighten_bounds(&net, &bx, &TightenOptions::default()).unwrap();
        for (id, b) in &lp.neurons {
            let i = interval.get(*id).unwrap();
            prop_assert!(b.pre_lo >= i.pre_lo - 1e-9 && b.pre_hi <= i.pre_hi + 1e-9, "{id}: lp wider than interval");
        }
        for x in sample_box(seed, &bx, 200) {
            let fp = net.forward_with_preactivations(&x).unwrap();
            for bounds in [&interval, &lp] {
                for (id, b) in &bounds.neurons {
                    let a = fp.preacts[id.layer][id.index];
                    prop_assert!(a.max(0.0) <= b.my + 1e-9 && (-a).max(0.0) <= b.ms + 1e-9, "{id}: {a} outside {b:?}");
                }
            }
        }
    }

    #[test]
    fn forward_point_feasible_in_mip(seed: u64, hidden in hidden_sizes(), n in 1usize..4) {
        let net = relu_net(seed, n, &hidden, 2);
        let problem = surrogate(seed, &net);
        let sm = problem.build_model(&net, Formulation::Mip, None).unwrap();
        prop_assert!(sm.model.has_convex_relaxation());
        for x in sample_box(seed, &problem.input_box, 20) {
            let mut point = vec![0.0; sm.model.num_vars()];
            sm.handles.fill_forward(&net, &x, &mut point).unwrap();
            prop_assert!(sm.model.violations(&point).max() <= 1e-9);
        }
    }

    #[test]
    fn fixing_binaries_keeps_matching_points_feasible(seed: u64, hidden in hidden_sizes()) {
        let net = relu_net(seed, 2, &hidden, 1);
        let sm = surrogate(seed, &net).build_model(&net, Formulation::Mip, None).unwrap();
        for x in sample_box(seed, &unit_box(2), 10) {
            let mut point = vec![0.0; sm.model.num_vars()];
            sm.handles.fill_forward(&net, &x, &mut point).unwrap();
            let assignment: BTreeMap<_, _> = sm.model.binaries().into_iter().map(|v| (v, point[v.0] > 0.5)).collect();
            let fixed = sm.model.fix_binaries(&assignment).unwrap();
            prop_assert!(fixed.violations(&point).max() <= 1e-9);
        }
    }

    #[test]
    fn lp_export_round_trip(seed: u64, hidden in hidden_sizes()) {
        let net = relu_net(seed, 2, &hidden, 2);
        let sm = surrogate(seed, &net).build_model(&net, Formulation::Mip, None).unwrap();
        let text = export_lp(&sm.model, false).unwrap();
        let back = import_lp(&text).unwrap();
        prop_assert_eq!(back.num_vars(), sm.model.num_vars());
        prop_assert_eq!(back.num_constraints(), sm.model.num_constraints());
        prop_assert_eq!(back.binaries(), sm.model.binaries());
        for (a, b) in back.constraints.iter().zip(&sm.model.constraints) {
            prop_assert_eq!(a.sense, b.sense);
            prop_assert!((a.normalized_rhs() - b.normalized_rhs()).abs() <= 1e-12);
        }
        prop_assert_eq!(export_lp(&back, false).unwrap(), text);
    }

    #[test]
    fn relaxation_duality_gap_closes(seed: u64, hidden in hidden_sizes()) {
        let net = relu_net(seed, 2, &hidden, 1);
        let sm = surrogate(seed, &net).build_model(&net, Formulation::Mip, None).unwrap();
        let r = lp_solve_relaxation(&sm.model).unwrap();
        prop_assert_eq!(r.status, SolveStatus::Optimal);
        let dual = dual_objective(&sm.model, &r);
        prop_assert!((r.objective - dual).abs() <= 1e-7 * (1.0 + r.objective.abs()), "{} vs {dual}", r.objective);
    }

    #[test]
    fn warmstart_never_hurts(seed: u64, hidden in prop::collection::vec(1usize..4, 1..3)) {
        let net = relu_net(seed, 2, &hidden, 1);
        let sm = surrogate(seed, &net).build_model(&net, Formulation::Mip, None).unwrap();
        let mut start = vec![0.0; sm.model.num_vars()];
        sm.handles.fill_forward(&net, &[0.1, -0.2], &mut start).unwrap();
        let limits = MilpOptions { node_limit: 5, ..MilpOptions::default() };
        let cold = milp_solve(&sm.model, &limits).unwrap();
        let warm = milp_solve(&sm.model, &MilpOptions { warmstart: Some(start), ..limits }).unwrap();
        prop_assert!(!warm.point.is_empty());
        if !cold.point.is_empty() {
            prop_assert!(warm.objective <= cold.objective + 1e-9 * (2.0 + cold.objective.abs()), "warm {} cold {}", warm.objective, cold.objective);
        }
    }

    #[test]
    fn witnesses_reproduce_their_patterns(seed: u64, m in 1usize..6) {
        let net = relu_net(seed, 2, &[m], 1);
        for (pattern, witness) in enumerate_nonempty_patterns(&net, DEFAULT_SLACK, 20).unwrap() {
            let part = net.sign_partition(&witness, DEFAULT_SLACK / 2.0).unwrap();
            prop_assert!(part.degenerate.is_empty());
            prop_assert_eq!(part.active_pattern(), pattern);
        }
    }

    #[test]
    fn stationarity_invariant_under_objective_scaling(seed: u64, scale in 0.1f64..10.0) {
        let net = relu_net(seed, 2, &[3], 1);
        let problem = surrogate(seed, &net);
        let sm = problem.build_model(&net, Formulation::Mpcc, None).unwrap();
        let sw = switches_from_complementarities(&sm.model);
        let mut start = vec![0.0; sm.model.num_vars()];
        sm.handles.fill_forward(&net, &[0.0, 0.0], &mut start).unwrap();
        let out = mpcc_local_solve(&sm.model, &sw, PatternStart::Point(start), &PatternOptions::default()).unwrap();
        let point = MpccPoint::from_model_point(&net, &sm.handles, &out.result.point);
        let scaled = SurrogateProblem::linear(
            problem.input_box.clone(),
            problem.gy.iter().map(|g| g * scale).collect(),
        )
        .with_gx(problem.gx.iter().map(|g| g * scale).collect());
        let tol = StationarityTol::default();
        let a = check_strong_stationarity(&net, &problem, &point, None, &tol).unwrap();
        let b = check_strong_stationarity(&net, &scaled, &point, None, &tol).unwrap();
        prop_assert_eq!(a.accepted, b.accepted);
    }
}

#[test]
fn zaslavsky_satisfies_deletion_restriction() {
    for m in 1..30 {
        for d in 1..6 {
            assert_eq!(zaslavsky_count(m, d), zaslavsky_count(m - 1, d) + zaslavsky_count(m - 1, d - 1));
        }
    }
    assert_eq!(zaslavsky_count(3, 2), 7);
}

#[test]
fn zero_bias_pair_outputs_zero() {
    // relu(x) - relu(x)
    let net = Network::new(
        1,
        vec![
            Layer::from_rows(&[vec![1.0], vec![1.0]], vec![0.0, 0.0], Activation::Relu).unwrap(),
            Layer::from_rows(&[vec![1.0, -1.0]], vec![0.0], Activation::Identity).unwrap(),
        ],
    )
    .unwrap();
    let mut rng = seeded_rng(3);
    for _ in 0..1000 {
        let x = rng.gen_range(-10.0..10.0);
        let y = net.forward(&[x]).unwrap()[0];
        assert_eq!(y, 0.0);
    }
}
