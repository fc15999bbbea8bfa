use matchlab_core::assign::{solve_grid, Metric};
use matchlab_core::campanato::{decay_profile, iterate, CampanatoSettings};
use matchlab_core::ensemble::{run_ensemble, Analysis, EnsembleConfig, Mode};
use matchlab_core::geometry::{pt, DyadicLadder, RngStream};
use matchlab_core::harmonic::sym_exp;
use matchlab_core::multiscale::{compute_rstar, compute_shift, scan_data_term};
use matchlab_core::sampler::{sample_fixed_n, sample_poisson};
use matchlab_core::{solve_semidiscrete, Mat2, PointConfiguration, SolverSettings, TransportSolution};
use proptest::prelude::*;

fn solve(mu: &PointConfiguration) -> TransportSolution {
    let d = mu.domain();
    solve_semidiscrete(d, mu.total_mass() / d.area(), mu, &SolverSettings::default()).unwrap()
}

#[test]
fn semidiscrete_agrees_with_the_grid_oracle_on_a_torus() {
    let mu = sample_fixed_n(64, 8.0, RngStream::new(40, 0)).unwrap().periodize().unwrap();
    let sd = solve(&mu).cost;
    let m = 256;
    let grid = solve_grid(8.0, m, mu.points(), mu.masses(), Metric::Periodic { side: 8.0 }).unwrap();
    let h = 8.0 / m as f64;
    let g = 64.0 * h * h / 6.0;
    assert!((grid.cost - sd).abs() <= 2.0 * (grid.cost * g).sqrt() + g, "{} vs {sd}", grid.cost);
    assert!(grid.duality_gap().abs() <= 1e-9 * grid.cost);
}

#[test]
fn full_pipeline_on_one_realisation() {
    let mu = sample_poisson(32.0, RngStream::new(41, 0)).unwrap();
    let scan = scan_data_term(&mu, &DyadicLadder::dyadic(32.0).unwrap(), 64).unwrap();
    assert!(scan.is_complete());
    let rs = compute_rstar(&scan, &mu).unwrap();
    assert!(rs.r_star >= 1.0 && rs.r_star <= 16.0);
    let torus = mu.periodize().unwrap();
    let sol = solve(&torus);
    let shift = compute_shift(&sol, &torus, rs.r_star).unwrap();
    assert!(shift.y_norm <= rs.r_star + 1e-12 || !rs.support_ok);
    let s = CampanatoSettings { gate: 10.0, c_star: 1.0, ..Default::default() };
    let trace = iterate(&sol, torus.total_mass(), &scan, &rs, &shift, &s).unwrap();
    assert!(trace.records.len() >= 2, "{}", trace.stop_reason);
    assert_eq!(trace.records[0].a_mat, Mat2::identity());
    for r in &trace.records {
        // Each B_k is a symmetric matrix exponential with positive determinant.
        assert!((r.b_mat - r.b_mat.transpose()).amax() <= 1e-12);
        assert!(r.b_mat.determinant() > 0.0);
    }
    assert!(trace.recursion_defect() <= 1e-12);
    let rows = decay_profile(&trace, &sol).unwrap();
    assert_eq!(rows.len(), trace.records.len());
    assert!(rows.iter().all(|r| r.optimal <= r.fixed + 1e-12));
    let text = trace.to_lines();
    let first: Vec<&str> = text.lines().next().unwrap().split_whitespace().collect();
    assert_eq!(first.len(), 16);
}

#[test]
fn ensemble_replays_byte_for_byte() {
    let cfg = EnsembleConfig::new(Mode::Poisson { side: 16.0 }, Analysis::Full);
    let a = run_ensemble(&cfg, 5..9, 1).unwrap();
    let b = run_ensemble(&cfg, 5..9, 3).unwrap();
    let lines = |r: &matchlab_core::ensemble::EnsembleRun| {
        r.records.iter().map(|x| x.to_line().unwrap()).collect::<Vec<_>>()
    };
    assert_eq!(lines(&a), lines(&b));
    assert_eq!(a.records.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![5, 6, 7, 8]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn torus_cost_is_translation_invariant(seed in 0u64..1000, zx in -4.0..4.0f64, zy in -4.0..4.0f64) {
        let mu = sample_fixed_n(24, 8.0, RngStream::new(seed, 0)).unwrap().periodize().unwrap();
        let a = solve(&mu);
        let b = solve(&mu.shift(pt(zx, zy)).unwrap());
        prop_assert!((a.cost - b.cost).abs() <= a.cost_bound + b.cost_bound + 1e-9 * a.cost);
        for (m, t) in a.cell_masses.iter().zip(&a.masses) {
            prop_assert!((m - t).abs() <= 1e-6 * t);
        }
    }

    #[test]
    fn symmetric_exponential_is_positive_definite(a in -3.0..3.0f64, b in -3.0..3.0f64, d in -3.0..3.0f64) {
        let e = sym_exp(&Mat2::new(a, b, b, d));
        prop_assert!((e - e.transpose()).amax() <= 1e-12 * e.amax());
        prop_assert!(e[(0, 0)] > 0.0 && e.determinant() > 0.0);
    }
}
