use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use optexec::model::CorrelationTerm;
use optexec::policy::evaluate_grid;
use optexec::sim::{estimate_objective, SimConfig};
use optexec::value::solve_constant_closed_form;
use optexec::{Execution, ModelParams, PenaltyParams};

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn monte_carlo(c: &mut Criterion) {
    let m = ModelParams::baseline().with_constant_uncertainty(0.1);
    let p = PenaltyParams::baseline(&m);
    let coeffs = solve_constant_closed_form(&m, &p, CorrelationTerm::Consistent, 361).unwrap();
    let mut group = c.benchmark_group("estimate_objective");
    group.sample_size(10);
    for paths in [256usize, 1024] {
        for (name, exec) in MODES {
            let cfg = SimConfig::new(360, paths, 7).with_execution(exec);
            group.bench_with_input(BenchmarkId::new(name, paths), &cfg, |b, cfg| {
                b.iter(|| black_box(estimate_objective(&m, &p, &coeffs, cfg).unwrap().mean_objective))
            });
        }
    }
    group.finish();
}

fn policy_grid(c: &mut Criterion) {
    let m = ModelParams::baseline().with_constant_uncertainty(0.1);
    let p = PenaltyParams::baseline(&m);
    let coeffs = solve_constant_closed_form(&m, &p, CorrelationTerm::Consistent, 361).unwrap();
    let mut group = c.benchmark_group("evaluate_grid");
    for side in [64usize, 256] {
        let times: Vec<f64> = (0..side).map(|i| m.horizon * i as f64 / side as f64).collect();
        let positions: Vec<f64> = (0..side).map(|i| m.x0 * (2.0 * i as f64 / side as f64 - 1.0)).collect();
        for (name, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(name, side * side), &exec, |b, &exec| {
                b.iter(|| black_box(evaluate_grid(&coeffs, &m, &p, &times, &positions, exec).unwrap().len()))
            });
        }
    }
    group.finish();
}

criterion_group!(benches, monte_carlo, policy_grid);
criterion_main!(benches);
