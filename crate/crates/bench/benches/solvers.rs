use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ergolab_bench::{grid, regimes};
use ergolab_core::build_coefficients;
use ergolab_core::certificates::best_lower_bound;
use ergolab_core::control_sim::{simulate, SimConfig};
use ergolab_core::linear_xcheck::{assemble_operator, principal_eigenvalue};
use ergolab_core::radial_solver::{default_ladder, estimate_lambda_extrapolated, solve, LadderOptions, SolverOptions};

const BETA: f64 = 100.0;

fn newton(c: &mut Criterion) {
    let mut g = c.benchmark_group("newton");
    let opts = SolverOptions::default();
    for (name, spec) in regimes() {
        for n in [512, 2048] {
            let gr = grid(&spec, BETA, n);
            g.bench_with_input(BenchmarkId::new(name, n), &gr, |b, gr| {
                b.iter(|| solve(&spec, black_box(BETA), gr, None, &opts).unwrap())
            });
        }
    }
    g.finish();
}

fn ladder(c: &mut Criterion) {
    let (_, spec) = regimes()[0];
    let lo = LadderOptions::default();
    let rungs = default_ladder(&spec, BETA, &lo);
    c.bench_function("ladder/strong", |b| {
        b.iter(|| estimate_lambda_extrapolated(&spec, black_box(BETA), &rungs, &lo.solver).unwrap())
    });
}

fn linear(c: &mut Criterion) {
    let mut g = c.benchmark_group("sturm_bisection");
    for (name, spec) in regimes() {
        let coeffs = build_coefficients(&spec).unwrap();
        let gr = grid(&spec, BETA, 2048);
        g.bench_function(name, |b| {
            b.iter(|| principal_eigenvalue(&assemble_operator(&gr, &coeffs, BETA).unwrap()).unwrap())
        });
    }
    g.finish();
}

fn certificate(c: &mut Criterion) {
    let (_, spec) = regimes()[1];
    c.bench_function("certificate/gap", |b| b.iter(|| best_lower_bound(&spec, black_box(BETA)).unwrap()));
}

fn monte_carlo(c: &mut Criterion) {
    let (_, spec) = regimes()[1];
    let sol = solve(&spec, 50.0, &grid(&spec, 50.0, 1024), None, &SolverOptions::default()).unwrap();
    let cfg = SimConfig { dt: 1e-2, horizon: 20.0, n_paths: 32, seed: 1, burn_in: 0.1 };
    let mut g = c.benchmark_group("monte_carlo");
    g.sample_size(10);
    g.bench_function("gap_32_paths", |b| b.iter(|| simulate(&spec, 50.0, &sol, &cfg).unwrap()));
    g.finish();
}

criterion_group!(benches, newton, ladder, linear, certificate, monte_carlo);
criterion_main!(benches);
