use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use matchlab_bench::torus_poisson;
use matchlab_core::assign::{solve_grid, Metric};
use matchlab_core::{solve_semidiscrete, SolverSettings};

fn power_diagram(c: &mut Criterion) {
    let mut g = c.benchmark_group("power_diagram");
    for side in [32.0, 64.0] {
        let mu = torus_poisson(side, 1);
        let d = mu.domain();
        let sol = solve_semidiscrete(d, mu.total_mass() / d.area(), &mu, &SolverSettings::default()).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(side), &sol, |b, sol| {
            b.iter(|| sol.dual_objective(&sol.weights).unwrap())
        });
    }
    g.finish();
}

fn semidiscrete(c: &mut Criterion) {
    let mut g = c.benchmark_group("semidiscrete_solve");
    g.sample_size(10);
    for side in [16.0, 32.0, 64.0] {
        let mu = torus_poisson(side, 2);
        let d = mu.domain();
        g.bench_with_input(BenchmarkId::from_parameter(side), &mu, |b, mu| {
            b.iter(|| solve_semidiscrete(d, mu.total_mass() / d.area(), mu, &SolverSettings::default()).unwrap())
        });
    }
    g.finish();
}

fn network_simplex(c: &mut Criterion) {
    let mut g = c.benchmark_group("grid_assignment");
    g.sample_size(10);
    let mu = torus_poisson(8.0, 3);
    for m in [32usize, 64] {
        g.bench_with_input(BenchmarkId::from_parameter(m), &m, |b, &m| {
            b.iter(|| solve_grid(8.0, m, mu.points(), mu.masses(), Metric::Periodic { side: 8.0 }).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, power_diagram, semidiscrete, network_simplex);
criterion_main!(benches);
