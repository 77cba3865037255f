use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use surropt::encode::{tighten_bounds, BoundMethod, Formulation, TightenOptions};
use surropt::regions::{enumerate_nonempty_patterns, DEFAULT_SLACK};
use surropt::solve::{
    embedded_solve, milp_solve, mpcc_local_solve, pattern_enumerate_solve, switches_from_complementarities,
    EmbeddedOptions, MilpOptions, PatternOptions, PatternStart,
};
use surropt::Activation;
use surropt_bench::{relu_net, surrogate};

fn forward(c: &mut Criterion) {
    let net = relu_net(1, 8, &[64, 64]);
    let x = vec![0.25; 8];
    c.bench_function("forward 8-64-64-1", |b| b.iter(|| net.forward(black_box(&x)).unwrap()));
    c.bench_function("jacobian 8-64-64-1", |b| b.iter(|| net.jacobian(black_box(&x), 1e-12).unwrap()));
}

fn bounds(c: &mut Criterion) {
    let net = relu_net(2, 4, &[16, 16]);
    let bx = vec![(-1.0, 1.0); 4];
    let mut g = c.benchmark_group("bound tightening 4-16-16");
    for (name, mode) in [("interval", BoundMethod::Interval), ("lp", BoundMethod::LpRelax)] {
        let opts = TightenOptions {
            mode,
            ..TightenOptions::default()
        };
        g.bench_function(name, |b| b.iter(|| tighten_bounds(&net, &bx, &opts).unwrap()));
    }
    g.finish();
}

fn exact_solvers(c: &mut Criterion) {
    let mut g = c.benchmark_group("exact solve");
    g.sample_size(20);
    for width in [4usize, 8, 12] {
        let net = relu_net(3, 2, &[width]);
        let problem = surrogate(&net);
        let mip = problem.build_model(&net, Formulation::Mip, None).unwrap();
        g.bench_with_input(BenchmarkId::new("milp", width), &mip.model, |b, m| {
            b.iter(|| milp_solve(m, &MilpOptions::default()).unwrap())
        });
        let mpcc = problem.build_model(&net, Formulation::Mpcc, None).unwrap();
        let sw = switches_from_complementarities(&mpcc.model);
        g.bench_with_input(BenchmarkId::new("enumeration", width), &mpcc.model, |b, m| {
            b.iter(|| pattern_enumerate_solve(m, &sw, &PatternOptions::default()).unwrap())
        });
    }
    g.finish();
}

fn local_solvers(c: &mut Criterion) {
    let net = relu_net(4, 2, &[8, 8]);
    let problem = surrogate(&net);
    let mpcc = problem.build_model(&net, Formulation::Mpcc, None).unwrap();
    let sw = switches_from_complementarities(&mpcc.model);
    let mut start = vec![0.0; mpcc.model.num_vars()];
    mpcc.handles.fill_forward(&net, &[0.0, 0.0], &mut start).unwrap();
    c.bench_function("mpcc local search 2-8-8", |b| {
        b.iter(|| mpcc_local_solve(&mpcc.model, &sw, PatternStart::Point(start.clone()), &PatternOptions::default()).unwrap())
    });

    let swish = net.with_hidden_activation(Activation::swish()).unwrap();
    let opts = EmbeddedOptions::default();
    c.bench_function("embedded swish 2-8-8", |b| {
        b.iter(|| embedded_solve(&swish, &problem, &problem.input_box, &[0.0, 0.0], &opts).unwrap())
    });
}

fn regions(c: &mut Criterion) {
    let mut g = c.benchmark_group("region enumeration");
    g.sample_size(20);
    for width in [4usize, 8] {
        let net = relu_net(5, 2, &[width]);
        g.bench_with_input(BenchmarkId::from_parameter(width), &net, |b, n| {
            b.iter(|| enumerate_nonempty_patterns(n, DEFAULT_SLACK, 20).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, forward, bounds, exact_solvers, local_solvers, regions);
criterion_main!(benches);
