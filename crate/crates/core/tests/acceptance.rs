//! Acceptance suite: twelve checks, one line each. Runs with its own `main` so the
//! report prints under a plain `cargo test`; exits non-zero if any check fails.

// `ensure!(a <= b)` must fail on NaN, which the negated comparison does.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use surropt::encode::{tighten_bounds, BoundMethod, Formulation, TightenOptions};
use surropt::io::write_trace;
use surropt::model::VarId;
use surropt::nn::random::{random_network, seeded_rng};
use surropt::problems::attack::softmax;
use surropt::problems::oilwell::{Riser, Well};
use surropt::problems::{
    build_attack, build_engine, build_oilwell, feasible_point_attack, warmstart_engine, AffineRow, AttackSpec,
    EngineSpec, Norm, OilwellSpec, SurrogateModel, SurrogateProblem,
};
use surropt::regions::{
    arrangement_in_general_position, enumerate_nonempty_patterns, general_position_check, generalized_jacobian,
    region_nonempty, zaslavsky_count, DEFAULT_RANK_TOL, DEFAULT_SLACK,
};
use surropt::solve::{
    embedded_solve, milp_solve, mpcc_local_solve, pattern_enumerate_solve, switches_from_complementarities,
    EmbeddedOptions, MilpOptions, PatternOptions, PatternStart, SolveStatus,
};
use surropt::stationarity::{
    check_embedded_stationarity, check_strong_stationarity, multipliers_from_solution, recover_kappa, MpccMultipliers,
    MpccPoint, StationarityTol,
};
use surropt::{Activation, ActivationPattern, Layer, Network, NeuronId};

type Check = std::result::Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn ok<T, E: std::fmt::Display>(r: std::result::Result<T, E>, what: &str) -> std::result::Result<T, String> {
    r.map_err(|e| format!("{what}: {e}"))
}

/// A random ReLU net with `total` hidden neurons spread over `layers` layers.
fn random_relu(rng: &mut ChaCha8Rng, input: usize, total: usize, layers: usize, output: usize) -> Network {
    let mut sizes = vec![1; layers];
    for _ in layers..total {
        let k = rng.gen_range(0..layers);
        sizes[k] += 1;
    }
    random_network(rng, input, &sizes, output, Activation::Relu).expect("valid sizes")
}

struct Instance {
    net: Network,
    problem: SurrogateProblem,
}

fn oracle_instances() -> Vec<Instance> {
    let mut rng = seeded_rng(2024);
    (0..25)
        .map(|_| {
            let layers = rng.gen_range(1..=3);
            let total = rng.gen_range(4..=12);
            let n = rng.gen_range(1..=3);
            let p = rng.gen_range(1..=2);
            let net = random_relu(&mut rng, n, total, layers, p);
            let gy = (0..p).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let gx = (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect();
            let input_box = (0..n)
                .map(|_| {
                    let lo = rng.gen_range(-1.5..-0.2);
                    (lo, lo + rng.gen_range(0.5..2.5))
                })
                .collect();
            Instance {
                net,
                problem: SurrogateProblem::linear(input_box, gy).with_gx(gx),
            }
        })
        .collect()
}

struct OracleRun {
    mpcc: SurrogateModel,
    objective: f64,
    pattern: Vec<bool>,
}

fn oracle(inst: &Instance) -> std::result::Result<OracleRun, String> {
    let mpcc = ok(inst.problem.build_model(&inst.net, Formulation::Mpcc, None), "mpcc model")?;
    let sw = switches_from_complementarities(&mpcc.model);
    let out = ok(pattern_enumerate_solve(&mpcc.model, &sw, &PatternOptions::default()), "enumeration")?;
    ensure!(out.result.status == SolveStatus::Optimal, "oracle status {:?}", out.result.status);
    Ok(OracleRun {
        objective: out.result.objective,
        pattern: out.pattern,
        mpcc,
    })
}

fn criterion_1() -> Check {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for (k, inst) in oracle_instances().iter().enumerate() {
        let mip = ok(inst.problem.build_model(&inst.net, Formulation::Mip, None), "mip model")?;
        let r = ok(milp_solve(&mip.model, &MilpOptions::default()), "milp")?;
        ensure!(r.status == SolveStatus::Optimal, "instance {k}: milp status {:?}", r.status);
        let o = oracle(inst)?;
        let diff = (r.objective - o.objective).abs();
        worst = worst.max(diff);
        ensure!(diff <= 1e-6, "instance {k}: milp {} vs oracle {}", r.objective, o.objective);
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 60.0, "took {secs:.1}s");
    Ok(format!("25 instances, max |milp - oracle| = {worst:.2e}, {secs:.2}s"))
}

fn criterion_2() -> Check {
    let mut rng = seeded_rng(77);
    let mut starts = 0;
    let mut worst_reproduce = 0.0f64;
    for (k, inst) in oracle_instances().iter().enumerate() {
        let o = oracle(inst)?;
        let sw = switches_from_complementarities(&o.mpcc.model);
        let opts = PatternOptions::default();
        let r = ok(mpcc_local_solve(&o.mpcc.model, &sw, PatternStart::Pattern(o.pattern.clone()), &opts), "local")?;
        let diff = (r.result.objective - o.objective).abs();
        worst_reproduce = worst_reproduce.max(diff);
        ensure!(diff <= 1e-6, "instance {k}: local from oracle pattern {} vs {}", r.result.objective, o.objective);
        for _ in 0..5 {
            let x: Vec<f64> = inst.problem.input_box.iter().map(|&(lo, hi)| rng.gen_range(lo..hi)).collect();
            let mut point = vec![0.0; o.mpcc.model.num_vars()];
            ok(o.mpcc.handles.fill_forward(&inst.net, &x, &mut point), "forward")?;
            let r = ok(mpcc_local_solve(&o.mpcc.model, &sw, PatternStart::Point(point), &opts), "local")?;
            ensure!(
                r.result.objective >= o.objective - 1e-6,
                "instance {k}: local search {} beats the oracle {}",
                r.result.objective,
                o.objective
            );
            starts += 1;
        }
    }
    Ok(format!(
        "25 instances reproduced (max diff {worst_reproduce:.2e}); {starts} random starts never beat the oracle"
    ))
}

fn engine_net(seed: u64, hidden: usize) -> Network {
    let mut rng = seeded_rng(seed);
    random_network(&mut rng, 3, &[hidden], 3, Activation::Relu).expect("valid sizes")
}

fn engine_spec(net: Network, profile: Vec<f64>) -> EngineSpec {
    EngineSpec {
        net,
        torque_profile: profile,
        lambda: 1.0,
        dt: 1.0,
        fuel_bounds: (0.0, 1.0),
        rpm_bounds: (0.0, 1.0),
        compression_bounds: (0.0, 1.0),
        hull_points: None,
    }
}

fn criterion_3() -> Check {
    let net = engine_net(3, 16);
    let mut counts = Vec::new();
    for t in [1usize, 3, 10, 1500] {
        let em = ok(build_engine(&engine_spec(net.clone(), vec![0.0; t]), Formulation::Mip, None), "engine")?;
        ensure!(em.model.num_binaries() == 16 * t, "T={t}: {} binaries, expected {}", em.model.num_binaries(), 16 * t);
        counts.push(format!("T={t}: {}", em.model.num_binaries()));
    }
    Ok(counts.join(", "))
}

fn binomial(n: u64, k: u64) -> u64 {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

fn criterion_4() -> Check {
    let start = Instant::now();
    let mut rng = seeded_rng(4);
    let mut done = 0;
    let mut tried = 0;
    let mut summary = BTreeMap::new();
    while done < 20 {
        tried += 1;
        let m = [3usize, 4, 5][done % 3];
        let net = random_network(&mut rng, 2, &[m], 1, Activation::Relu).expect("valid sizes");
        if !ok(arrangement_in_general_position(&net, DEFAULT_RANK_TOL), "general position")? {
            continue;
        }
        let found = ok(enumerate_nonempty_patterns(&net, DEFAULT_SLACK, 20), "enumeration")?.len() as u64;
        let expected: u64 = (0..=2).map(|i| binomial(m as u64, i)).sum();
        ensure!(found == expected, "m={m}: {found} regions, expected {expected}");
        ensure!(zaslavsky_count(m as u32, 2) == expected as u128, "count formula disagrees for m={m}");
        *summary.entry(m).or_insert(0) += 1;
        done += 1;
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 10.0, "took {secs:.1}s");
    let per_m: Vec<String> = summary.iter().map(|(m, n)| format!("m={m}: {n}")).collect();
    Ok(format!(
        "20 nets ({tried} drawn; {}), counts match 1 + m + C(m,2); {secs:.2}s",
        per_m.join(", ")
    ))
}

/// `W_out diag(κ) W_0` for a single hidden layer, summed in neuron order.
fn kappa_product(net: &Network, pattern: &ActivationPattern) -> DMatrix<f64> {
    let (w0, w1) = (net.layers()[0].weights(), net.layers()[1].weights());
    DMatrix::from_fn(w1.nrows(), w0.ncols(), |o, k| {
        let mut acc = 0.0;
        for j in 0..w0.nrows() {
            if pattern.contains(&NeuronId::new(0, j)) {
                acc += w1[(o, j)] * w0[(j, k)];
            }
        }
        acc
    })
}

/// Single-hidden-layer net whose first `degenerate` neurons vanish at `x0`.
fn through_point(rng: &mut ChaCha8Rng, x0: &[f64], degenerate: usize, extra: usize, outputs: usize) -> Network {
    let n = x0.len();
    let mut rows = Vec::new();
    let mut bias = Vec::new();
    for j in 0..degenerate + extra {
        let w: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let at: f64 = w.iter().zip(x0).map(|(a, b)| a * b).sum();
        let b = if j < degenerate {
            -at
        } else {
            // Keep the extra neurons clearly away from zero at x0.
            let off = rng.gen_range(0.3..1.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            off - at
        };
        rows.push(w);
        bias.push(b);
    }
    let out: Vec<Vec<f64>> = (0..outputs).map(|_| (0..rows.len()).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    Network::new(
        n,
        vec![
            Layer::from_rows(&rows, bias, Activation::Relu).expect("rows"),
            Layer::from_rows(&out, vec![0.0; outputs], Activation::Identity).expect("rows"),
        ],
    )
    .expect("valid net")
}

fn criterion_5() -> Check {
    let mut rng = seeded_rng(5);
    let mut cases = 0;
    for (n, deg, extra, outs) in [(2, 1, 3, 1), (2, 2, 2, 2), (3, 2, 3, 1), (3, 3, 1, 2), (4, 3, 2, 1), (4, 4, 0, 2)] {
        let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let net = through_point(&mut rng, &x0, deg, extra, outs);
        ensure!(ok(general_position_check(&net, &x0, DEFAULT_RANK_TOL), "gp")?, "construction n={n} not in general position");
        let hull = ok(generalized_jacobian(&net, &x0, 12), "generalized jacobian")?;
        ensure!(hull.vertices.len() == 1 << deg, "n={n}: {} vertices, expected {}", hull.vertices.len(), 1 << deg);
        for v in &hull.vertices {
            ensure!(ok(region_nonempty(&net, &v.pattern, DEFAULT_SLACK), "region")?.is_some(), "empty region {:?}", v.pattern);
            ensure!(v.jacobian == kappa_product(&net, &v.pattern), "vertex Jacobian differs from its product form");
        }
        cases += 1;
    }
    // Two identical hyperplanes through the origin with opposite output weights.
    let zero_bias = Network::new(
        1,
        vec![
            Layer::from_rows(&[vec![1.0], vec![1.0]], vec![0.0, 0.0], Activation::Relu).expect("rows"),
            Layer::from_rows(&[vec![1.0, -1.0]], vec![0.0], Activation::Identity).expect("rows"),
        ],
    )
    .expect("valid net");
    ensure!(!ok(general_position_check(&zero_bias, &[0.0], DEFAULT_RANK_TOL), "gp")?, "zero-bias net passed general position");
    let hull = ok(generalized_jacobian(&zero_bias, &[0.0], 12), "generalized jacobian")?;
    ensure!(
        hull.vertices.iter().all(|v| v.jacobian.iter().all(|&e| e == 0.0)),
        "zero-bias hull is not {{0}}"
    );
    Ok(format!(
        "{cases} constructions: all 2^|I0| regions nonempty, Jacobians equal κ products; zero-bias hull = {{0}} ({} vertices)",
        hull.vertices.len()
    ))
}

fn toy_problem(rng: &mut ChaCha8Rng) -> (Network, SurrogateProblem) {
    let sizes: Vec<usize> = if rng.gen_bool(0.5) { vec![rng.gen_range(3..=5)] } else { vec![3, 3] };
    let net = random_network(rng, 2, &sizes, 1, Activation::Relu).expect("valid sizes");
    let gx = vec![rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)];
    let mut problem = SurrogateProblem::linear(vec![(-1.0, 1.0); 2], vec![rng.gen_range(-1.0..1.0)]).with_gx(gx);
    if rng.gen_bool(0.5) {
        // A row that cuts the box but keeps the origin feasible.
        let ax = vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let ay = vec![rng.gen_range(-0.5..0.5)];
        let y0 = net.forward(&[0.0, 0.0]).expect("forward")[0];
        problem.rows.push(AffineRow {
            rhs: ay[0] * y0 + rng.gen_range(0.2..0.6),
            ax,
            ay,
        });
    }
    (net, problem)
}

fn perturbations(m: &MpccMultipliers) -> Vec<(String, MpccMultipliers)> {
    let mut out = Vec::new();
    for i in 0..m.mu.len() {
        let mut p = m.clone();
        p.mu[i] += 0.1;
        out.push((format!("mu[{i}]"), p));
    }
    for id in m.nu1.keys() {
        let mut p = m.clone();
        *p.nu1.get_mut(id).expect("key") += 0.1;
        out.push((format!("nu1{id}"), p));
        let mut p = m.clone();
        *p.nu2.get_mut(id).expect("key") += 0.1;
        out.push((format!("nu2{id}"), p));
    }
    out
}

fn criterion_6() -> Check {
    let mut rng = seeded_rng(6);
    let tol = StationarityTol::default();
    let mut worst = 0.0f64;
    let mut perturbed = 0;
    let mut biactive = 0;
    for k in 0..10 {
        let (net, problem) = toy_problem(&mut rng);
        let sm = ok(problem.build_model(&net, Formulation::Mpcc, None), "model")?;
        let sw = switches_from_complementarities(&sm.model);
        let x: Vec<f64> = (0..2).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let mut start = vec![0.0; sm.model.num_vars()];
        ok(sm.handles.fill_forward(&net, &x, &mut start), "forward")?;
        let out = ok(mpcc_local_solve(&sm.model, &sw, PatternStart::Point(start), &PatternOptions::default()), "local")?;
        ensure!(out.result.status == SolveStatus::Optimal, "toy {k}: status {:?}", out.result.status);
        let mult = ok(multipliers_from_solution(&problem, &sm, &out.result), "multipliers")?;
        let full = problem.box_as_constraints();
        let point = MpccPoint::from_model_point(&net, &sm.handles, &out.result.point);
        let strong = ok(check_strong_stationarity(&net, &full, &point, Some(&mult), &tol), "strong")?;
        ensure!(strong.accepted, "toy {k}: strong stationarity rejected {:?}", strong.residuals);
        worst = worst.max(strong.residuals.max());
        let kappa = ok(recover_kappa(&net, &full, &point, &mult, &tol), "kappa")?;
        ensure!(kappa.identity_residual <= 1e-6, "toy {k}: identity residual {}", kappa.identity_residual);
        worst = worst.max(kappa.identity_residual);
        let emb = ok(check_embedded_stationarity(&net, &full, &point.input, Some(&mult.mu), &tol), "embedded")?;
        ensure!(emb.accepted, "toy {k}: embedded check rejected {:?}", emb.residuals);
        biactive += emb.vertices.len().saturating_sub(1).min(1);
        for (name, p) in perturbations(&mult) {
            let s = ok(check_strong_stationarity(&net, &full, &point, Some(&p), &tol), "strong")?;
            let kappa_ok = recover_kappa(&net, &full, &point, &p, &tol).is_ok_and(|r| r.identity_residual <= 1e-6);
            let e = ok(check_embedded_stationarity(&net, &full, &point.input, Some(&p.mu), &tol), "embedded")?;
            ensure!(!(s.accepted && kappa_ok && e.accepted), "toy {k}: perturbing {name} is still accepted");
            perturbed += 1;
        }
    }
    Ok(format!(
        "10 toys pass (max residual {worst:.2e}, {biactive} with a kink at the solution); {perturbed} perturbations all rejected"
    ))
}

fn criterion_7() -> Check {
    let mut rng = seeded_rng(7);
    let mut samples = 0;
    for k in 0..10 {
        let n = rng.gen_range(1..=3);
        let layers = rng.gen_range(1..=2);
        let total = rng.gen_range(4..=10);
        let net = random_relu(&mut rng, n, total, layers, 1);
        let bx: Vec<(f64, f64)> = (0..n).map(|_| (-1.0, 1.0)).collect();
        let by = |mode| tighten_bounds(&net, &bx, &TightenOptions { mode, ..TightenOptions::default() });
        let interval = ok(by(BoundMethod::Interval), "interval")?;
        let lp = ok(by(BoundMethod::LpRelax), "lp")?;
        let exact = ok(by(BoundMethod::ExactMip), "exact")?;
        for _ in 0..1000 {
            let x: Vec<f64> = bx.iter().map(|&(lo, hi)| rng.gen_range(lo..=hi)).collect();
            let fp = ok(net.forward_with_preactivations(&x), "forward")?;
            for b in [&interval, &lp, &exact] {
                for (id, nb) in &b.neurons {
                    let a = fp.preacts[id.layer][id.index];
                    ensure!(
                        a >= nb.pre_lo - 1e-9 && a <= nb.pre_hi + 1e-9,
                        "net {k}: {:?} bound [{}, {}] misses preactivation {a} of {id}",
                        b.method,
                        nb.pre_lo,
                        nb.pre_hi
                    );
                    ensure!(nb.my >= a.max(0.0) - 1e-9 && nb.ms >= (-a).max(0.0) - 1e-9, "net {k}: big-M misses {id}");
                }
            }
            samples += 1;
        }
        for (id, i) in &interval.neurons {
            let (l, e) = (lp.neurons[id], exact.neurons[id]);
            ensure!(
                e.my <= l.my + 1e-9 && l.my <= i.my + 1e-9 && e.ms <= l.ms + 1e-9 && l.ms <= i.ms + 1e-9,
                "net {k}: bounds of {id} not ordered exact <= lp <= interval"
            );
        }
    }
    Ok(format!("10 nets, {samples} samples inside all bounds; exact <= lp <= interval"))
}

fn criterion_8() -> Check {
    let net = engine_net(8, 5);
    let fixed_c = 0.5;
    let mut training = Vec::new();
    for c in [0.4, fixed_c, 0.6] {
        for i in 0..=10 {
            for j in 0..=10 {
                training.push(vec![i as f64 / 10.0, j as f64 / 10.0, c]);
            }
        }
    }
    let mut torques: Vec<f64> = training
        .iter()
        .filter(|r| r[2] == fixed_c)
        .map(|r| net.forward(r).expect("forward")[2])
        .collect();
    torques.sort_by(f64::total_cmp);
    let mut rng = seeded_rng(88);
    let profile: Vec<f64> = (0..10)
        .map(|_| torques[rng.gen_range(torques.len() / 5..torques.len() * 4 / 5)])
        .collect();
    let spec = engine_spec(net.clone(), profile);
    let bounds = ok(
        tighten_bounds(&net, &spec.input_box(), &TightenOptions::default()),
        "bounds",
    )?;
    let em = ok(build_engine(&spec, Formulation::Mip, Some(&bounds)), "engine")?;
    let warm = ok(warmstart_engine(&spec, &em, &training, fixed_c), "warmstart")?;
    let violation = em.model.violations(&warm.point).max();
    ensure!(violation <= 1e-6, "warmstart violates the model by {violation}");

    let cold = ok(milp_solve(&em.model, &MilpOptions::default()), "milp")?;
    ensure!(cold.status == SolveStatus::Optimal, "milp status {:?}", cold.status);
    ensure!(warm.objective >= cold.objective - 1e-6, "warmstart {} below the optimum {}", warm.objective, cold.objective);
    let hot = ok(
        milp_solve(
            &em.model,
            &MilpOptions {
                warmstart: Some(warm.point.clone()),
                ..MilpOptions::default()
            },
        ),
        "milp with warmstart",
    )?;
    ensure!((hot.objective - cold.objective).abs() <= 1e-6, "warm and cold optima differ");
    ensure!(hot.nodes <= cold.nodes, "warmstarted milp used {} nodes, cold {}", hot.nodes, cold.nodes);

    // Cross-check the branch-and-bound optimum against pattern enumeration on one step.
    let one = engine_spec(net.clone(), spec.torque_profile[..1].to_vec());
    let mip1 = ok(build_engine(&one, Formulation::Mip, Some(&bounds)), "engine")?;
    let mpcc1 = ok(build_engine(&one, Formulation::Mpcc, None), "engine")?;
    let a = ok(milp_solve(&mip1.model, &MilpOptions::default()), "milp")?;
    let sw = switches_from_complementarities(&mpcc1.model);
    let b = ok(pattern_enumerate_solve(&mpcc1.model, &sw, &PatternOptions::default()), "enumeration")?;
    ensure!((a.objective - b.result.objective).abs() <= 1e-6, "T=1 milp {} vs enumeration {}", a.objective, b.result.objective);
    Ok(format!(
        "violation {violation:.1e}, warmstart {:.6} >= optimum {:.6}; nodes {} (warm) vs {} (cold)",
        warm.objective, cold.objective, hot.nodes, cold.nodes
    ))
}

fn attack_instance() -> AttackSpec {
    for seed in 0.. {
        let mut rng = seeded_rng(900 + seed);
        let net = random_network(&mut rng, 4, &[6], 2, Activation::Relu).expect("valid sizes");
        let image: Vec<f64> = (0..4).map(|_| rng.gen_range(0.0..1.0)).collect();
        let y = net.forward(&image).expect("forward");
        let current = if y[0] >= y[1] { 0 } else { 1 };
        let spec = AttackSpec {
            net,
            image,
            target_label: 1 - current,
            alpha: 1.2,
            norm: Norm::L1,
            pixel_eps: None,
            adjacency_eps: None,
            adjacency: Vec::new(),
        };
        // Use the first instance where the target class is reachable inside the box.
        let am = build_attack(&spec, Formulation::Mip, None).expect("attack model");
        if milp_solve(&am.model, &MilpOptions::default()).is_ok_and(|r| r.status == SolveStatus::Optimal) {
            return spec;
        }
    }
    unreachable!()
}

fn criterion_9() -> Check {
    let base = attack_instance();
    let mut rng = seeded_rng(99);
    let seeds: Vec<Vec<f64>> = (0..2000).map(|_| (0..4).map(|_| rng.gen_range(0.0..1.0)).collect()).collect();
    let mut worst = f64::INFINITY;
    let mut runs = Vec::new();
    let check = |label: &str, spec: &AttackSpec, pixels: &[VarId], point: &[f64], worst: &mut f64| -> Check {
        let x: Vec<f64> = pixels.iter().map(|v| point[v.0]).collect();
        let s = softmax(&ok(spec.net.forward(&x), "forward")?);
        let l = spec.target_label;
        for i in 0..s.len() {
            if i != l {
                let ratio = s[l] / s[i];
                *worst = worst.min(ratio);
                ensure!(ratio >= 1.2 - 1e-9, "{label}: softmax ratio {ratio}");
            }
        }
        Ok(label.to_string())
    };
    for norm in [Norm::L1, Norm::Linf, Norm::L2] {
        let spec = AttackSpec { norm, ..base.clone() };
        let mip = ok(build_attack(&spec, Formulation::Mip, None), "attack")?;
        let r = ok(milp_solve(&mip.model, &MilpOptions::default()), "milp")?;
        ensure!(r.status == SolveStatus::Optimal, "milp {norm:?}: {:?}", r.status);
        runs.push(check(&format!("milp-{norm:?}"), &spec, &mip.pixels, &r.point, &mut worst)?);

        let mpcc = ok(build_attack(&spec, Formulation::Mpcc, None), "attack")?;
        let sw = switches_from_complementarities(&mpcc.model);
        let o = ok(pattern_enumerate_solve(&mpcc.model, &sw, &PatternOptions::default()), "oracle")?;
        ensure!(o.result.status == SolveStatus::Optimal, "oracle {norm:?}: {:?}", o.result.status);
        ensure!((o.result.objective - r.objective).abs() <= 1e-6 * (1.0 + r.objective.abs()), "oracle and milp differ for {norm:?}");
        runs.push(check(&format!("oracle-{norm:?}"), &spec, &mpcc.pixels, &o.result.point, &mut worst)?);

        let start = ok(feasible_point_attack(&spec, &mpcc, &seeds), "feasible start")?;
        let l = ok(mpcc_local_solve(&mpcc.model, &sw, PatternStart::Point(start.point), &PatternOptions::default()), "local")?;
        runs.push(check(&format!("mpcc-local-{norm:?}"), &spec, &mpcc.pixels, &l.result.point, &mut worst)?);
    }
    Ok(format!("{} solver runs, smallest softmax ratio {worst:.12}", runs.len()))
}

fn kink_net(act: Activation) -> Network {
    Network::new(
        2,
        vec![
            Layer::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]], vec![-0.3, 0.2], act).expect("rows"),
            Layer::from_rows(&[vec![2.0, 2.0]], vec![0.0], Activation::Identity).expect("rows"),
        ],
    )
    .expect("valid net")
}

fn trace_dir() -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    std::fs::create_dir_all(&dir).expect("trace directory");
    dir
}

fn criterion_10() -> Check {
    let bx = vec![(-1.0, 1.0); 2];
    let problem = SurrogateProblem::linear(bx.clone(), vec![1.0]).with_gx(vec![-1.0, -1.0]).with_constant(0.1);
    let start = [-0.6180339887, std::f64::consts::FRAC_1_SQRT_2];
    let opts = EmbeddedOptions::default();
    let dir = trace_dir();
    let (relu, relu_trace) = ok(embedded_solve(&kink_net(Activation::Relu), &problem, &bx, &start, &opts), "relu run")?;
    let (swish, swish_trace) =
        ok(embedded_solve(&kink_net(Activation::Swish { beta: 1.0 }), &problem, &bx, &start, &opts), "swish run")?;
    ok(write_trace(&relu_trace, dir.join("trace_relu.csv")), "trace")?;
    ok(write_trace(&swish_trace, dir.join("trace_swish.csv")), "trace")?;
    let relu_best = relu_trace.iter().map(|r| r.dual_inf).fold(f64::INFINITY, f64::min);
    let relu_last = relu_trace.last().ok_or("empty relu trace")?;
    let swish_last = swish_trace.last().ok_or("empty swish trace")?;
    ensure!(relu_trace.len() <= 3001, "relu trace has {} records", relu_trace.len());
    ensure!(relu.status != SolveStatus::Optimal, "relu run reported convergence");
    ensure!(relu_last.dual_inf > 1e-6, "relu run reached dual infeasibility {}", relu_last.dual_inf);
    ensure!(swish.status == SolveStatus::Optimal, "swish run ended {:?}", swish.status);
    ensure!(
        swish_last.primal_inf <= 1e-6 && swish_last.dual_inf <= 1e-6,
        "swish run ended at ({}, {})",
        swish_last.primal_inf,
        swish_last.dual_inf
    );
    Ok(format!(
        "relu: {:?} after {} iterations, dual inf {:.2e} (best {relu_best:.2e}); swish: converged in {} iterations, dual inf {:.2e}; traces in {}",
        relu.status,
        relu_trace.len(),
        relu_last.dual_inf,
        swish_trace.len(),
        swish_last.dual_inf,
        dir.display()
    ))
}

fn criterion_11() -> Check {
    let mut rng = seeded_rng(11);
    let mut worst_fd = 0.0f64;
    for k in 0..50 {
        let n = rng.gen_range(1..=4);
        let depth = rng.gen_range(1..=3);
        let sizes: Vec<usize> = (0..depth).map(|_| rng.gen_range(2..=8)).collect();
        let p = rng.gen_range(1..=3);
        let beta = rng.gen_range(0.5..2.0);
        let net = random_network(&mut rng, n, &sizes, p, Activation::Swish { beta }).expect("valid sizes");
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let j = ok(net.jacobian(&x, 0.0), "jacobian")?;
        let h = 1e-6;
        for c in 0..n {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[c] += h;
            xm[c] -= h;
            let (fp, fm) = (net.forward(&xp).expect("fwd"), net.forward(&xm).expect("fwd"));
            for o in 0..p {
                let fd = (fp[o] - fm[o]) / (2.0 * h);
                let err = (fd - j[(o, c)]).abs();
                worst_fd = worst_fd.max(err);
                ensure!(err <= 1e-5, "swish net {k}: entry ({o},{c}) differs by {err}");
            }
        }
        let relu = ok(net.with_hidden_activation(Activation::Relu), "relu copy")?;
        let pattern = ok(relu.forward_pattern(&x), "pattern")?;
        let piece = ok(relu.affine_piece(&pattern), "piece")?;
        ensure!(ok(relu.jacobian(&x, 0.0), "jacobian")? == piece.matrix, "relu net {k}: Jacobian is not the pattern map");
        let y = relu.forward(&x).expect("forward");
        let ya = piece.apply(&x);
        ensure!(y.iter().zip(&ya).all(|(a, b)| (a - b).abs() <= 1e-12), "relu net {k}: affine piece misses the output");
    }
    Ok(format!("50 swish nets, max |J - FD| = {worst_fd:.2e}; relu Jacobians equal their pattern maps"))
}

fn linear_net(w: &[f64], b: f64) -> Network {
    Network::new(w.len(), vec![Layer::from_rows(&[w.to_vec()], vec![b], Activation::Identity).expect("rows")]).expect("net")
}

fn criterion_12() -> Check {
    let mut rng = seeded_rng(12);
    let well = |net: Network| Well {
        net,
        gor: 0.5,
        wor: 0.25,
        pressure_bounds: (0.0, 20.0),
        flow_lower: [0.0; 3],
        flow_upper: [30.0; 3],
    };
    let wells = (0..8)
        .map(|_| well(random_network(&mut rng, 1, &[20, 20], 1, Activation::Relu).expect("sizes")))
        .collect();
    let risers = (0..2)
        .map(|e| Riser {
            manifold: e,
            separator: e,
            net: random_network(&mut rng, 4, &[50, 50], 1, Activation::Relu).expect("sizes"),
        })
        .collect();
    let spec = OilwellSpec {
        wells,
        manifold_pressure_bounds: vec![(0.0, 20.0); 2],
        separator_pressures: vec![1.0; 2],
        risers,
        big_m: 100.0,
        max_drop: 20.0,
    };
    let relu = spec.num_relu_neurons();
    let om = ok(build_oilwell(&spec, Formulation::Mpcc), "oilwell")?;
    ensure!(relu == 520 && om.model.num_complementarities() == 520, "{relu} ReLU neurons embedded");
    ensure!(om.routing_binaries().len() == 16 && om.model.num_binaries() == 16, "{} routing binaries", om.model.num_binaries());

    // Two wells q1 = 10 - p1 and q2 = 8 - 0.5 p2 into one manifold whose riser gives
    // p_sep = p_m - 0.1 (Qo + Qg + Qw) with p_sep = 2.
    let small = OilwellSpec {
        wells: vec![
            Well { gor: 0.0, wor: 0.0, ..well(linear_net(&[-1.0], 10.0)) },
            Well { gor: 0.0, wor: 0.0, ..well(linear_net(&[-0.5], 8.0)) },
        ],
        manifold_pressure_bounds: vec![(0.0, 20.0)],
        separator_pressures: vec![2.0],
        risers: vec![Riser {
            manifold: 0,
            separator: 0,
            net: linear_net(&[-0.1, -0.1, -0.1, 1.0], 0.0),
        }],
        big_m: 100.0,
        max_drop: 20.0,
    };
    let om = ok(build_oilwell(&small, Formulation::Mip), "oilwell")?;
    let r = ok(milp_solve(&om.model, &MilpOptions::default()), "milp")?;
    ensure!(r.status == SolveStatus::Optimal, "status {:?}", r.status);
    // Both wells open at the manifold pressure: Q = 18 - 1.5 p, p = 2 + 0.1 Q.
    let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.5, -0.1, 1.0]);
    let sol = a.lu().solve(&nalgebra::DVector::from_vec(vec![18.0, 2.0])).ok_or("singular hand system")?;
    let expected = sol[0];
    ensure!((r.objective - expected).abs() <= 1e-6, "optimum {} vs hand value {expected}", r.objective);
    Ok(format!(
        "{relu} ReLU embeddings, 16 routing binaries; 2/1/1 optimum {:.9} vs hand value {expected:.9}",
        r.objective
    ))
}

fn main() {
    let criteria: [Criterion; 12] = [
        ("oracle equivalence", criterion_1),
        ("formulation equivalence", criterion_2),
        ("binary count", criterion_3),
        ("region counts", criterion_4),
        ("degenerate-point hull", criterion_5),
        ("stationarity equivalence", criterion_6),
        ("bound validity", criterion_7),
        ("warmstart", criterion_8),
        ("attack margin", criterion_9),
        ("convergence dichotomy", criterion_10),
        ("jacobian correctness", criterion_11),
        ("oil-well structure", criterion_12),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let total = Instant::now();
    for (k, (name, f)) in criteria.iter().enumerate() {
        let label = format!("{:>2} {name}", k + 1);
        if !filter.is_empty() && !filter.iter().any(|p| label.contains(p.as_str())) {
            continue;
        }
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let took = fmt_secs(t.elapsed());
        match outcome {
            Ok(detail) => println!("PASS {label}: {detail} [{took}]"),
            Err(why) => {
                failed += 1;
                println!("FAIL {label}: {why} [{took}]");
            }
        }
    }
    println!("acceptance: {failed} failed, total {}", fmt_secs(total.elapsed()));
    if failed > 0 {
        std::process::exit(1);
    }
}

fn fmt_secs(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}
