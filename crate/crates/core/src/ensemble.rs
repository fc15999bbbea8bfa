//! Seeded Monte Carlo over many realisations: per-seed records, the
//! `a + b / log(size)` fit of the normalised cost, and empirical tails.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::campanato::{decay_profile, iterate, CampanatoSettings};
use crate::geometry::{DyadicLadder, Point, RngStream};
use crate::multiscale::{compute_rstar, compute_shift, main_estimate_profile, scan_data_term};
use crate::sampler::{sample_fixed_n, sample_poisson, PointConfiguration};
use crate::semidiscrete::{solve_semidiscrete, SolverSettings};
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Poisson process of unit intensity on `Q_side`.
    Poisson { side: f64 },
    /// `n` uniform points on the unit square.
    FixedN { n: usize },
}

impl Mode {
    pub fn size(&self) -> f64 {
        match *self {
            Mode::Poisson { side } => side,
            Mode::FixedN { n } => n as f64,
        }
    }

    pub fn is_poisson(&self) -> bool {
        matches!(self, Mode::Poisson { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Analysis {
    /// Euclidean cost on the square only.
    Cost,
    /// Adds the data-term scan, `Theta` and `r_*`. Poisson only.
    Scan,
    /// Adds the torus solve, `x_L`, the main-estimate profile and the trace.
    Full,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub mode: Mode,
    pub analysis: Analysis,
    pub solver: SolverSettings,
    /// Grid side of the assignment fallback in the scan.
    pub grid_m: usize,
    pub campanato: CampanatoSettings,
}

impl EnsembleConfig {
    pub fn new(mode: Mode, analysis: Analysis) -> Self {
        Self { mode, analysis, solver: SolverSettings::default(), grid_m: 64, campanato: CampanatoSettings::default() }
    }

    pub fn validate(&self) -> Result<()> {
        match self.mode {
            Mode::Poisson { side } if !(side > 1.0 && side.is_finite()) => {
                return Err(Error::InvalidInput(format!("side must exceed 1, got {side}")))
            }
            Mode::FixedN { n: 0 } => return Err(Error::InvalidInput("n must be at least 1".into())),
            Mode::FixedN { .. } if self.analysis != Analysis::Cost => {
                return Err(Error::InvalidInput("fixed_n supports only the cost analysis".into()))
            }
            _ => {}
        }
        if self.grid_m == 0 {
            return Err(Error::InvalidInput("grid_m must be at least 1".into()));
        }
        let c = &self.campanato;
        if !(c.theta > 0.0 && c.theta < 1.0) || !(c.gate > 0.0) || !(c.c_star > 0.0) {
            return Err(Error::InvalidInput("theta in (0, 1), gate > 0 and c_star > 0 are required".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleSummary {
    pub ell: f64,
    pub w2sq: Option<f64>,
    pub d: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileSummary {
    pub ell: f64,
    pub fixed_ratio: Option<f64>,
    pub optimal_ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub steps: usize,
    pub stop_reason: String,
    pub ell: Vec<f64>,
    pub e: Vec<f64>,
    pub d: Vec<f64>,
    /// Outcome of the first step, when the gate let it run.
    pub first_decay_ok: Option<bool>,
    pub first_e_next: Option<f64>,
    pub max_induction1: f64,
    pub max_induction2: f64,
    pub max_induction3_a: f64,
    pub max_induction3_shift: f64,
    pub recursion_defect: f64,
    pub max_shifted_ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema: u32,
    pub seed: u64,
    pub config: EnsembleConfig,
    pub points: usize,
    /// Euclidean `W_2^2` against the uniform measure of equal mass on the square.
    pub cost: Option<f64>,
    /// `cost / log n` in fixed-n mode, `cost / (ell^2 log ell)` in Poisson mode.
    pub normalized: Option<f64>,
    pub scan: Vec<ScaleSummary>,
    pub theta: Option<f64>,
    pub r_star: Option<f64>,
    pub rstar_gated: Option<bool>,
    pub x_l: Option<Point>,
    pub profile: Vec<ProfileSummary>,
    pub trace: Option<TraceSummary>,
    pub failure: Option<String>,
}

impl RunRecord {
    pub fn to_line(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_line(line: &str) -> Result<Self> {
        let r: RunRecord = serde_json::from_str(line)?;
        if r.schema != SCHEMA_VERSION {
            return Err(Error::Parse { line: 1, message: format!("record schema {} is not {SCHEMA_VERSION}", r.schema) });
        }
        Ok(r)
    }
}

/// Records in seed order, and the wall time of each in seconds.
#[derive(Clone, Debug)]
pub struct EnsembleRun {
    pub records: Vec<RunRecord>,
    pub wall_seconds: Vec<f64>,
}

/// One record per seed; `jobs` caps the worker count and does not affect the records.
pub fn run_ensemble(config: &EnsembleConfig, seeds: std::ops::Range<u64>, jobs: usize) -> Result<EnsembleRun> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    let seeds: Vec<u64> = seeds.collect();
    let timed: Vec<(RunRecord, f64)> = pool.install(|| {
        seeds
            .par_iter()
            .map(|&seed| {
                let start = Instant::now();
                let rec = run_one(config, seed);
                (rec, start.elapsed().as_secs_f64())
            })
            .collect()
    });
    let (records, wall_seconds) = timed.into_iter().unzip();
    Ok(EnsembleRun { records, wall_seconds })
}

/// The realisation of `seed` under `config`; failures are kept in the record.
pub fn run_one(config: &EnsembleConfig, seed: u64) -> RunRecord {
    let mut rec = RunRecord {
        schema: SCHEMA_VERSION,
        seed,
        config: *config,
        points: 0,
        cost: None,
        normalized: None,
        scan: Vec::new(),
        theta: None,
        r_star: None,
        rstar_gated: None,
        x_l: None,
        profile: Vec::new(),
        trace: None,
        failure: None,
    };
    if let Err(e) = fill(config, seed, &mut rec) {
        rec.failure = Some(e.to_string());
    }
    rec
}

fn fill(config: &EnsembleConfig, seed: u64, rec: &mut RunRecord) -> Result<()> {
    let stream = RngStream::new(seed, 0);
    match config.mode {
        Mode::FixedN { n } => {
            let mu = sample_fixed_n(n, 1.0, stream)?;
            rec.points = mu.len();
            let cost = square_cost(&mu, &config.solver)?;
            rec.cost = Some(cost);
            rec.normalized = (n > 1).then(|| cost / (n as f64).ln());
            Ok(())
        }
        Mode::Poisson { side } => {
            let mu = sample_poisson(side, stream)?;
            rec.points = mu.len();
            let normalize = |c: f64| c / (side * side * side.ln());
            if config.analysis == Analysis::Cost {
                let cost = square_cost(&mu, &config.solver)?;
                rec.cost = Some(cost);
                rec.normalized = Some(normalize(cost));
                return Ok(());
            }
            let ladder = DyadicLadder::dyadic(side)?;
            let scan = scan_data_term(&mu, &ladder, config.grid_m)?;
            rec.scan = scan.records.iter().map(|r| ScaleSummary { ell: r.ell, w2sq: r.w2sq, d: r.d }).collect();
            rec.cost = scan.record(side).and_then(|r| r.w2sq);
            rec.normalized = rec.cost.map(normalize);
            let rs = compute_rstar(&scan, &mu)?;
            rec.theta = Some(rs.theta_stat.value);
            rec.r_star = Some(rs.r_star);
            rec.rstar_gated = Some(rs.gated());
            if config.analysis == Analysis::Scan {
                return Ok(());
            }
            let torus = mu.periodize()?;
            let d = torus.domain();
            let sol = solve_semidiscrete(d, torus.total_mass() / d.area(), &torus, &config.solver)?;
            let shift = compute_shift(&sol, &torus, rs.r_star)?;
            rec.x_l = Some(shift.x_l);
            rec.profile = main_estimate_profile(&sol, &shift, &rs, &ladder)?
                .into_iter()
                .map(|p| ProfileSummary { ell: p.ell, fixed_ratio: p.fixed_ratio, optimal_ratio: p.optimal_ratio })
                .collect();
            let trace = iterate(&sol, torus.total_mass(), &scan, &rs, &shift, &config.campanato)?;
            let decay = decay_profile(&trace, &sol)?;
            let max = |f: fn(&crate::campanato::StepRecord) -> f64| trace.records.iter().map(f).fold(0.0, f64::max);
            let first = trace.records.get(1);
            rec.trace = Some(TraceSummary {
                steps: trace.records.len(),
                stop_reason: trace.stop_reason.clone(),
                ell: trace.records.iter().map(|r| r.ell).collect(),
                e: trace.records.iter().map(|r| r.e).collect(),
                d: trace.records.iter().map(|r| r.d).collect(),
                first_decay_ok: first.and_then(|r| r.decay_ok),
                first_e_next: first.map(|r| r.e),
                max_induction1: max(|r| r.induction1),
                max_induction2: max(|r| r.induction2),
                max_induction3_a: max(|r| r.induction3_a),
                max_induction3_shift: max(|r| r.induction3_shift),
                recursion_defect: trace.recursion_defect(),
                max_shifted_ratio: decay.iter().map(|r| r.shifted_ratio).filter(|v| v.is_finite()).reduce(f64::max),
            });
            Ok(())
        }
    }
}

/// `W_2^2(mu, mu(Q) / |Q|)` on the square domain of `mu`.
fn square_cost(mu: &PointConfiguration, solver: &SolverSettings) -> Result<f64> {
    let d = mu.domain();
    Ok(solve_semidiscrete(d, mu.total_mass() / d.area(), mu, solver)?.cost)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizeRow {
    pub size: f64,
    pub count: usize,
    pub mean: f64,
    pub variance: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub poisson: bool,
    pub rows: Vec<SizeRow>,
    /// `mean ~ a + b / log(size)`, weighted by `1 / stderr^2`.
    pub a: f64,
    pub b: f64,
    pub a_stderr: f64,
    /// 95% interval for `a`.
    pub a_ci: (f64, f64),
    pub residuals: Vec<f64>,
}

pub const MIN_FIT_SIZES: usize = 3;
pub const MIN_FIT_SEEDS: usize = 50;

/// Mean and unbiased variance.
pub fn mean_variance(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var)
}

pub fn standard_error(v: &[f64]) -> f64 {
    (mean_variance(v).1 / v.len() as f64).sqrt()
}

/// Per-size normalised means of the records with the given mode kind, and the intercept fit.
pub fn fit_ast_constant(records: &[RunRecord], poisson: bool) -> Result<ScalingFit> {
    fit_scaling(records, poisson, MIN_FIT_SEEDS)
}

/// `fit_ast_constant` with a custom per-size seed minimum.
pub fn fit_scaling(records: &[RunRecord], poisson: bool, min_seeds: usize) -> Result<ScalingFit> {
    let mut by_size: std::collections::BTreeMap<u64, Vec<f64>> = Default::default();
    for r in records.iter().filter(|r| r.config.mode.is_poisson() == poisson) {
        if let Some(v) = r.normalized {
            by_size.entry(r.config.mode.size().to_bits()).or_default().push(v);
        }
    }
    let mut rows: Vec<SizeRow> = by_size
        .into_iter()
        .map(|(bits, v)| {
            let (mean, variance) = mean_variance(&v);
            SizeRow { size: f64::from_bits(bits), count: v.len(), mean, variance, stderr: (variance / v.len() as f64).sqrt() }
        })
        .collect();
    rows.sort_by(|a, b| a.size.total_cmp(&b.size));
    if rows.len() < MIN_FIT_SIZES || rows.iter().any(|r| r.count < min_seeds.max(2)) {
        return Err(Error::InsufficientData(format!(
            "need {MIN_FIT_SIZES} sizes with {min_seeds} seeds each, have {:?}",
            rows.iter().map(|r| (r.size, r.count)).collect::<Vec<_>>()
        )));
    }
    let floor = rows.iter().map(|r| r.stderr).filter(|&s| s > 0.0).fold(f64::INFINITY, f64::min);
    let weight = |r: &SizeRow| {
        let s = if r.stderr > 0.0 { r.stderr } else if floor.is_finite() { floor } else { 1.0 };
        1.0 / (s * s)
    };
    // Weighted least squares on (1, 1 / log size).
    let (mut s0, mut s1, mut s2, mut t0, mut t1) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for r in &rows {
        let (w, x) = (weight(r), 1.0 / r.size.ln());
        s0 += w;
        s1 += w * x;
        s2 += w * x * x;
        t0 += w * r.mean;
        t1 += w * x * r.mean;
    }
    let det = s0 * s2 - s1 * s1;
    if !(det.abs() > 0.0) {
        return Err(Error::InsufficientData("sizes do not separate the fit".into()));
    }
    let a = (s2 * t0 - s1 * t1) / det;
    let b = (s0 * t1 - s1 * t0) / det;
    let residuals: Vec<f64> = rows.iter().map(|r| r.mean - a - b / r.size.ln()).collect();
    let a_stderr = (s2 / det).sqrt();
    let a_ci = (a - 1.96 * a_stderr, a + 1.96 * a_stderr);
    Ok(ScalingFit { poisson, rows, a, b, a_stderr, a_ci, residuals })
}

/// Empirical `E exp(c r^2 / log(2 r))` over radii `r >= 1`.
pub fn rstar_moment(r_star: &[f64], c: f64) -> f64 {
    r_star.iter().map(|&r| (c * r * r / (2.0 * r).ln()).exp()).sum::<f64>() / r_star.len() as f64
}

/// Largest `c` on `grid` (ascending) up to which the moments of the two samples
/// stay within relative distance `tol`.
pub fn largest_stable_c(a: &[f64], b: &[f64], grid: &[f64], tol: f64) -> Option<f64> {
    grid.iter()
        .take_while(|&&c| {
            let (ma, mb) = (rstar_moment(a, c), rstar_moment(b, c));
            ma.is_finite() && mb.is_finite() && (ma - mb).abs() <= tol * ma.min(mb)
        })
        .last()
        .copied()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailStatistic {
    /// The normalised cost `W_2^2 / (ell^2 log ell)`.
    DNorm,
    Theta,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub m: f64,
    pub survival: f64,
    pub log_survival: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailTable {
    pub size: f64,
    pub count: usize,
    pub rows: Vec<TailRow>,
    /// Least-squares slope of `log P[Z >= M]` over the upper tail.
    pub slope: Option<f64>,
    /// Largest `M` still exceeded by `MIN_TAIL_EXCEEDANCES` values.
    pub widest_reliable_m: f64,
}

pub const MIN_TAIL_RECORDS: usize = 500;
pub const MIN_TAIL_EXCEEDANCES: usize = 10;
const TAIL_POINTS: usize = 40;

/// Empirical survival of `statistic` over the Poisson records of side `size`.
pub fn tail_profile(records: &[RunRecord], size: f64, statistic: TailStatistic) -> Result<TailTable> {
    let mut z: Vec<f64> = records
        .iter()
        .filter(|r| r.config.mode == (Mode::Poisson { side: size }))
        .filter_map(|r| match statistic {
            TailStatistic::DNorm => r.normalized,
            TailStatistic::Theta => r.theta,
        })
        .collect();
    if z.len() < MIN_TAIL_RECORDS {
        return Err(Error::InsufficientData(format!("{} records at side {size}, need {MIN_TAIL_RECORDS}", z.len())));
    }
    z.sort_by(f64::total_cmp);
    Ok(tail_of_sorted(&z, size))
}

/// `z` sorted ascending.
fn tail_of_sorted(z: &[f64], size: f64) -> TailTable {
    let n = z.len();
    let survival = |m: f64| z.len() - z.partition_point(|&v| v < m);
    let widest = z[n - MIN_TAIL_EXCEEDANCES.min(n)];
    let lo = z[n / 2];
    let mut rows = Vec::with_capacity(TAIL_POINTS + 1);
    for i in 0..=TAIL_POINTS {
        let m = if widest > lo { lo + (widest - lo) * i as f64 / TAIL_POINTS as f64 } else { lo };
        let s = survival(m) as f64 / n as f64;
        rows.push(TailRow { m, survival: s, log_survival: s.ln() });
        if widest <= lo {
            break;
        }
    }
    let slope = (rows.len() >= 3).then(|| {
        let k = rows.len() as f64;
        let mx = rows.iter().map(|r| r.m).sum::<f64>() / k;
        let my = rows.iter().map(|r| r.log_survival).sum::<f64>() / k;
        let sxy: f64 = rows.iter().map(|r| (r.m - mx) * (r.log_survival - my)).sum();
        let sxx: f64 = rows.iter().map(|r| (r.m - mx).powi(2)).sum();
        sxy / sxx
    });
    TailTable { size, count: n, rows, slope, widest_reliable_m: widest }
}

/// Empirical `P[Z >= m]`.
pub fn empirical_survival(z: &[f64], m: f64) -> f64 {
    z.iter().filter(|&&v| v >= m).count() as f64 / z.len() as f64
}

pub fn scaling_csv(fit: &ScalingFit) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "size[n or ell]",
        "count[seeds]",
        "mean_normalized_cost[1]",
        "variance[1]",
        "stderr[1]",
        "fit_residual[1]",
        "const_estimate[1]",
        "const_ci_low[1]",
        "const_ci_high[1]",
    ])?;
    for (r, res) in fit.rows.iter().zip(&fit.residuals) {
        w.write_record(&[
            r.size.to_string(),
            r.count.to_string(),
            r.mean.to_string(),
            r.variance.to_string(),
            r.stderr.to_string(),
            res.to_string(),
            fit.a.to_string(),
            fit.a_ci.0.to_string(),
            fit.a_ci.1.to_string(),
        ])?;
    }
    finish(w)
}

pub fn tail_csv(t: &TailTable) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["size[ell]", "m[1]", "survival[probability]", "log_survival[1]", "slope[1/unit m]"])?;
    let slope = t.slope.map_or(String::new(), |s| s.to_string());
    for r in &t.rows {
        w.write_record(&[t.size.to_string(), r.m.to_string(), r.survival.to_string(), r.log_survival.to_string(), slope.clone()])?;
    }
    finish(w)
}

/// Per-scale main-estimate ratios, one row per record and scale.
pub fn profile_csv(records: &[RunRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["seed", "side[length]", "r_star[length]", "ell[length]", "fixed_ratio[1]", "optimal_ratio[1]"])?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
    for r in records {
        for p in &r.profile {
            w.write_record(&[
                r.seed.to_string(),
                r.config.mode.size().to_string(),
                opt(r.r_star),
                p.ell.to_string(),
                opt(p.fixed_ratio),
                opt(p.optimal_ratio),
            ])?;
        }
    }
    finish(w)
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::InvalidInput(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn synthetic(mode: Mode, normalized: f64, seed: u64) -> RunRecord {
        let mut r = run_one(&EnsembleConfig::new(Mode::FixedN { n: 1 }, Analysis::Cost), seed);
        r.config.mode = mode;
        r.normalized = Some(normalized);
        r
    }

    #[test]
    fn small_poisson_ensemble_replays() {
        let cfg = EnsembleConfig::new(Mode::Poisson { side: 8.0 }, Analysis::Full);
        let a = run_ensemble(&cfg, 0..2, 1).unwrap();
        let b = run_ensemble(&cfg, 0..2, 2).unwrap();
        assert_eq!(a.records.len(), 2);
        assert_eq!(a.wall_seconds.len(), 2);
        for (x, y) in a.records.iter().zip(&b.records) {
            assert_eq!(x.to_line().unwrap(), y.to_line().unwrap());
        }
        assert!(a.records.iter().all(|r| r.scan.len() == 3 && r.r_star.is_some()), "{:?}", a.records);
    }

    #[test]
    fn records_roundtrip_and_check_the_schema() {
        let r = run_one(&EnsembleConfig::new(Mode::FixedN { n: 16 }, Analysis::Cost), 4);
        let line = r.to_line().unwrap();
        assert_eq!(RunRecord::from_line(&line).unwrap(), r);
        let bumped = line.replacen("\"schema\":1", "\"schema\":2", 1);
        assert!(RunRecord::from_line(&bumped).is_err());
    }

    #[test]
    fn failures_are_records() {
        // Intensity 4: some realisations are empty.
        let cfg = EnsembleConfig::new(Mode::Poisson { side: 2.0 }, Analysis::Cost);
        let run = run_ensemble(&cfg, 0..300, 1).unwrap();
        assert_eq!(run.records.len(), 300);
        let failed: Vec<_> = run.records.iter().filter(|r| r.failure.is_some()).collect();
        assert!(!failed.is_empty());
        assert!(failed.iter().all(|r| r.points == 0 && r.cost.is_none()));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let bad = EnsembleConfig::new(Mode::FixedN { n: 0 }, Analysis::Cost);
        assert!(run_ensemble(&bad, 0..1, 1).is_err());
        assert!(EnsembleConfig::new(Mode::FixedN { n: 8 }, Analysis::Full).validate().is_err());
        let mut c = EnsembleConfig::new(Mode::Poisson { side: 8.0 }, Analysis::Cost);
        c.campanato.theta = 1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn fit_recovers_an_exact_model() {
        let (a, b) = (0.08, 0.3);
        let mut rng = RngStream::new(1, 1).rng();
        let mut recs = Vec::new();
        for n in [256usize, 1024, 4096] {
            for s in 0..60 {
                // Symmetric noise keeps the per-size mean exact.
                let e: f64 = rng.gen_range(-0.01..0.01);
                let base = a + b / (n as f64).ln();
                recs.push(synthetic(Mode::FixedN { n }, base + e, s));
                recs.push(synthetic(Mode::FixedN { n }, base - e, s));
            }
        }
        let fit = fit_ast_constant(&recs, false).unwrap();
        assert!((fit.a - a).abs() < 1e-9 && (fit.b - b).abs() < 1e-9, "{fit:?}");
        assert!(fit.a_ci.0 < a && a < fit.a_ci.1);
        assert!(fit.residuals.iter().all(|r| r.abs() < 1e-9));
        assert!(scaling_csv(&fit).unwrap().lines().next().unwrap().contains("const_estimate"));
        assert!(matches!(fit_ast_constant(&recs, true), Err(Error::InsufficientData(_))));
        assert!(matches!(fit_ast_constant(&recs[..200], false), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn zero_statistic_has_no_tail() {
        let recs: Vec<RunRecord> = (0..500).map(|s| synthetic(Mode::Poisson { side: 32.0 }, 0.0, s)).collect();
        let t = tail_profile(&recs, 32.0, TailStatistic::DNorm).unwrap();
        assert_eq!(t.count, 500);
        assert_eq!(t.slope, None);
        let z: Vec<f64> = vec![0.0; 500];
        assert_eq!(empirical_survival(&z, 1e-12), 0.0);
        assert!(tail_profile(&recs[..499], 32.0, TailStatistic::DNorm).is_err());
    }

    #[test]
    fn exponential_tail_slope() {
        let lambda = 3.0;
        let mut rng = RngStream::new(2, 2).rng();
        let recs: Vec<RunRecord> = (0..5000)
            .map(|s| synthetic(Mode::Poisson { side: 16.0 }, -(1.0 - rng.gen::<f64>()).ln() / lambda, s))
            .collect();
        let t = tail_profile(&recs, 16.0, TailStatistic::DNorm).unwrap();
        let slope = t.slope.unwrap();
        assert!((slope + lambda).abs() < 0.15 * lambda, "{slope}");
        assert!(tail_csv(&t).unwrap().lines().count() == t.rows.len() + 1);
    }

    #[test]
    fn moments_of_identical_samples_are_stable() {
        let a = [1.0, 1.5, 2.0, 4.0];
        assert!((rstar_moment(&[1.0], 0.1) - (0.1 / 2f64.ln()).exp()).abs() < 1e-15);
        let grid: Vec<f64> = (1..=10).map(|k| 0.01 * k as f64).collect();
        assert_eq!(largest_stable_c(&a, &a, &grid, 0.25), Some(0.1));
        assert_eq!(largest_stable_c(&a, &[1.0; 4], &grid, 1e-6), None);
    }

    #[test]
    fn standard_error_halves_with_four_times_the_seeds() {
        let mut rng = RngStream::new(3, 3).rng();
        let v: Vec<f64> = (0..40_000).map(|_| rng.gen::<f64>()).collect();
        let ratio = standard_error(&v[..10_000]) / standard_error(&v);
        assert!((ratio - 2.0).abs() < 0.1, "{ratio}");
    }
}
