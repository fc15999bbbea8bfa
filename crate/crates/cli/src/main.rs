mod config;

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use matchlab_core::campanato::{decay_profile, iterate, CampanatoSettings};
use matchlab_core::ensemble::{
    fit_scaling, profile_csv, run_ensemble, scaling_csv, tail_csv, tail_profile, Analysis, EnsembleConfig, Mode,
    RunRecord, TailStatistic, MIN_FIT_SEEDS, MIN_TAIL_RECORDS,
};
use matchlab_core::geometry::{DyadicLadder, RngStream};
use matchlab_core::multiscale::{compute_rstar, compute_shift, main_estimate_profile, scan_data_term};
use matchlab_core::sampler::{sample_fixed_n, sample_poisson};
use matchlab_core::{solve_semidiscrete, PointConfiguration, SolverSettings};

#[derive(Parser)]
#[command(name = "matchlab", version, about = "Optimal matching of Poisson point clouds to Lebesgue measure", args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sample a point configuration.
    Sample(SampleArgs),
    /// Semi-discrete transport from Lebesgue measure to a configuration.
    Solve(SolveArgs),
    /// Data-term scan, r_* and the shift x_L of a configuration.
    Scan(ScanArgs),
    /// Campanato iteration around x_L.
    Iterate(IterateArgs),
    /// Monte Carlo ensemble of seeded realisations.
    Mc(McArgs),
    /// CSV tables from ensemble records.
    Report(ReportArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Poisson,
    #[value(name = "fixed_n")]
    FixedN,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum AnalysisArg {
    Cost,
    Scan,
    Full,
}

#[derive(Args)]
struct ConfigArg {
    /// `key = value` file; command-line flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct SolverArgs {
    /// Newton tolerance on the relative cell-mass residual.
    #[arg(long, default_value_t = SolverSettings::default().tol)]
    tol: f64,
    #[arg(long, default_value_t = SolverSettings::default().max_iter)]
    max_iter: usize,
}

impl SolverArgs {
    fn settings(&self) -> Result<SolverSettings> {
        if !(self.tol > 0.0) || self.max_iter == 0 {
            bail!(Usage("--tol must be positive and --max-iter at least 1".into()));
        }
        Ok(SolverSettings { tol: self.tol, max_iter: self.max_iter, ..Default::default() })
    }
}

#[derive(Args)]
struct CampanatoArgs {
    #[arg(long, default_value_t = CampanatoSettings::default().theta)]
    theta: f64,
    /// Smallness gate on E + D.
    #[arg(long, default_value_t = CampanatoSettings::default().gate)]
    gate: f64,
    /// Stop below the scale c_star * r_*.
    #[arg(long, default_value_t = CampanatoSettings::default().c_star)]
    c_star: f64,
}

impl CampanatoArgs {
    fn settings(&self) -> CampanatoSettings {
        CampanatoSettings { theta: self.theta, gate: self.gate, c_star: self.c_star, ..Default::default() }
    }
}

#[derive(Args)]
struct SampleArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long, value_enum, default_value_t = ModeArg::Poisson)]
    mode: ModeArg,
    /// Side of the square.
    #[arg(long = "L", default_value_t = 64.0)]
    side: f64,
    /// Number of points in fixed_n mode.
    #[arg(long, default_value_t = 1024)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Mark the configuration as living on the torus.
    #[arg(long)]
    periodic: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Configuration file written by `sample`.
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    solver: SolverArgs,
    /// Also write the Laguerre cells here.
    #[arg(long)]
    cells: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScanArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    input: PathBuf,
    /// Grid side of the assignment fallback.
    #[arg(long, default_value_t = 64)]
    grid_m: usize,
    /// Label written in the first column of the scan lines.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct IterateArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 64)]
    grid_m: usize,
    #[command(flatten)]
    campanato: CampanatoArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct McArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long, value_enum, default_value_t = ModeArg::Poisson)]
    mode: ModeArg,
    /// Side in poisson mode.
    #[arg(long = "L", default_value_t = 64.0)]
    side: f64,
    /// Points in fixed_n mode (on the unit square).
    #[arg(long, default_value_t = 1024)]
    n: usize,
    /// Half-open seed range `a..b`.
    #[arg(long, default_value = "0..10")]
    seeds: String,
    #[arg(long, value_enum, default_value_t = AnalysisArg::Cost)]
    analysis: AnalysisArg,
    #[arg(long, default_value_t = 64)]
    grid_m: usize,
    /// Worker threads; records do not depend on it.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[command(flatten)]
    campanato: CampanatoArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Records, one JSON object per line; wall times go to `<out>.timing.csv`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Record files written by `mc`.
    #[arg(long, required = true, action = clap::ArgAction::Append)]
    input: Vec<PathBuf>,
    /// Minimum seeds per size for the scaling fit.
    #[arg(long, default_value_t = MIN_FIT_SEEDS)]
    min_seeds: usize,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

/// Errors that exit with status 2.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn main() -> ExitCode {
    let cmd = Cli::command();
    let argv = match config::expand(&cmd, std::env::args().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let cli = match cmd.try_get_matches_from(argv).and_then(|m| Cli::from_arg_matches(&m)) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if e.downcast_ref::<Usage>().is_some() { 2 } else { 1 })
        }
    }
}

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Sample(a) => cmd_sample(a),
        Cmd::Solve(a) => cmd_solve(a),
        Cmd::Scan(a) => cmd_scan(a),
        Cmd::Iterate(a) => cmd_iterate(a),
        Cmd::Mc(a) => cmd_mc(a),
        Cmd::Report(a) => cmd_report(a),
    }
}

/// Write through a temporary file in the target directory, then rename.
fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating a file in {}", dir.display()))?;
    tmp.write_all(contents.as_bytes())?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn read_config(path: &Path) -> Result<PointConfiguration> {
    if !path.exists() {
        bail!(Usage(format!("input {} does not exist", path.display())));
    }
    PointConfiguration::read(path).with_context(|| format!("reading {}", path.display()))
}

fn cmd_sample(a: SampleArgs) -> Result<()> {
    let stream = RngStream::new(a.seed, 0);
    let mu = match a.mode {
        ModeArg::Poisson => sample_poisson(a.side, stream),
        ModeArg::FixedN if a.n == 0 => bail!(Usage("--n must be at least 1".into())),
        ModeArg::FixedN => sample_fixed_n(a.n, a.side, stream),
    }
    .map_err(|e| Usage(e.to_string()))?;
    let mu = if a.periodic { mu.periodize()? } else { mu };
    write_atomic(&a.out, &mu.to_text())
}

fn solve(mu: &PointConfiguration, settings: &SolverSettings) -> Result<matchlab_core::TransportSolution> {
    let d = mu.domain();
    solve_semidiscrete(d, mu.total_mass() / d.area(), mu, settings).context("semi-discrete solve")
}

fn cmd_solve(a: SolveArgs) -> Result<()> {
    let settings = a.solver.settings()?;
    let mu = read_config(&a.input)?;
    let sol = solve(&mu, &settings)?;
    let cost = format!("cost={}", sol.cost);
    write_atomic(&a.out, &format!("{cost}\n{}", sol.to_text()))?;
    if let Some(cells) = &a.cells {
        write_atomic(cells, &sol.cells_to_text())?;
    }
    println!("{cost}");
    Ok(())
}

fn cmd_scan(a: ScanArgs) -> Result<()> {
    let settings = a.solver.settings()?;
    if a.grid_m == 0 {
        bail!(Usage("--grid-m must be at least 1".into()));
    }
    let mu = read_config(&a.input)?;
    let ladder = DyadicLadder::dyadic(mu.side()).map_err(|e| Usage(e.to_string()))?;
    let scan = scan_data_term(&mu, &ladder, a.grid_m)?;
    let rs = compute_rstar(&scan, &mu)?;
    let torus = mu.periodize()?;
    let sol = solve(&torus, &settings)?;
    let shift = compute_shift(&sol, &torus, rs.r_star)?;
    let mut out = scan.to_lines(a.seed);
    let _ = writeln!(
        out,
        "r_star={} r_tilde={} theta={} theta_lower_bound_only={} density_ok={} support_ok={} gated={}",
        rs.r_star,
        rs.r_tilde,
        rs.theta_stat.value,
        rs.theta_stat.lower_bound_only,
        rs.density_ok,
        rs.support_ok,
        rs.gated()
    );
    let _ = writeln!(
        out,
        "x_l={} {} y_l={} {} bound_ratio={}",
        shift.x_l.x,
        shift.x_l.y,
        shift.y_l.x,
        shift.y_l.y,
        shift.bound_ratio.map_or("nan".into(), |v| v.to_string())
    );
    for p in main_estimate_profile(&sol, &shift, &rs, &ladder)? {
        let f = |v: Option<f64>| v.map_or("nan".into(), |v: f64| v.to_string());
        let _ = writeln!(out, "profile ell={} fixed_ratio={} optimal_ratio={}", p.ell, f(p.fixed_ratio), f(p.optimal_ratio));
    }
    write_atomic(&a.out, &out)?;
    println!("r_star={}", rs.r_star);
    Ok(())
}

fn cmd_iterate(a: IterateArgs) -> Result<()> {
    let settings = a.solver.settings()?;
    let s = a.campanato.settings();
    let mu = read_config(&a.input)?;
    let ladder = DyadicLadder::dyadic(mu.side()).map_err(|e| Usage(e.to_string()))?;
    let scan = scan_data_term(&mu, &ladder, a.grid_m)?;
    let rs = compute_rstar(&scan, &mu)?;
    let torus = mu.periodize()?;
    let sol = solve(&torus, &settings)?;
    let shift = compute_shift(&sol, &torus, rs.r_star)?;
    let trace = iterate(&sol, torus.total_mass(), &scan, &rs, &shift, &s)?;
    let mut out = trace.to_lines();
    let _ = writeln!(out, "stop={}", trace.stop_reason);
    for r in decay_profile(&trace, &sol)? {
        let _ = writeln!(
            out,
            "decay k={} ell={} shifted_ratio={} fixed_ratio={} optimal_ratio={}",
            r.k, r.ell, r.shifted_ratio, r.fixed_ratio, r.optimal_ratio
        );
    }
    write_atomic(&a.out, &out)?;
    println!("steps={} stop={}", trace.records.len(), trace.stop_reason);
    Ok(())
}

fn parse_seeds(s: &str) -> Result<std::ops::Range<u64>> {
    let (a, b) = s.split_once("..").ok_or_else(|| Usage(format!("--seeds expects a..b, got {s:?}")))?;
    let a: u64 = a.trim().parse().map_err(|_| Usage(format!("bad seed {a:?}")))?;
    let b: u64 = b.trim().parse().map_err(|_| Usage(format!("bad seed {b:?}")))?;
    if a >= b {
        bail!(Usage(format!("empty seed range {s}")));
    }
    Ok(a..b)
}

fn cmd_mc(a: McArgs) -> Result<()> {
    let seeds = parse_seeds(&a.seeds)?;
    let mode = match a.mode {
        ModeArg::Poisson => Mode::Poisson { side: a.side },
        ModeArg::FixedN => Mode::FixedN { n: a.n },
    };
    let analysis = match a.analysis {
        AnalysisArg::Cost => Analysis::Cost,
        AnalysisArg::Scan => Analysis::Scan,
        AnalysisArg::Full => Analysis::Full,
    };
    let config = EnsembleConfig {
        mode,
        analysis,
        solver: a.solver.settings()?,
        grid_m: a.grid_m,
        campanato: a.campanato.settings(),
    };
    config.validate().map_err(|e| Usage(e.to_string()))?;
    if a.jobs == 0 {
        bail!(Usage("--jobs must be at least 1".into()));
    }
    let run = run_ensemble(&config, seeds, a.jobs)?;
    let mut lines = String::new();
    let mut timing = String::from("seed,wall_seconds[s]\n");
    for (r, t) in run.records.iter().zip(&run.wall_seconds) {
        lines.push_str(&r.to_line()?);
        lines.push('\n');
        let _ = writeln!(timing, "{},{t}", r.seed);
    }
    write_atomic(&a.out, &lines)?;
    let mut sidecar = a.out.clone().into_os_string();
    sidecar.push(".timing.csv");
    write_atomic(Path::new(&sidecar), &timing)?;
    let failed = run.records.iter().filter(|r| r.failure.is_some()).count();
    println!("records={} failed={failed}", run.records.len());
    Ok(())
}

fn cmd_report(a: ReportArgs) -> Result<()> {
    let mut records = Vec::new();
    for path in &a.input {
        if !path.exists() {
            bail!(Usage(format!("input {} does not exist", path.display())));
        }
        let text = std::fs::read_to_string(path)?;
        for (no, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            records.push(RunRecord::from_line(line).with_context(|| format!("{}:{}", path.display(), no + 1))?);
        }
    }
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let mut written = Vec::new();
    for (poisson, name) in [(false, "scaling_fixed_n.csv"), (true, "scaling_poisson.csv")] {
        match fit_scaling(&records, poisson, a.min_seeds) {
            Ok(fit) => {
                write_atomic(&a.out.join(name), &scaling_csv(&fit)?)?;
                println!("{name}: const_estimate={} ci=[{}, {}]", fit.a, fit.a_ci.0, fit.a_ci.1);
                written.push(name.to_string());
            }
            Err(e) if records.iter().any(|r| r.config.mode.is_poisson() == poisson) => eprintln!("{name} skipped: {e}"),
            Err(_) => {}
        }
    }
    let mut sides: Vec<f64> = records.iter().filter(|r| r.config.mode.is_poisson()).map(|r| r.config.mode.size()).collect();
    sides.sort_by(f64::total_cmp);
    sides.dedup();
    for side in sides {
        for (stat, tag) in [(TailStatistic::DNorm, "dnorm"), (TailStatistic::Theta, "theta")] {
            if let Ok(t) = tail_profile(&records, side, stat) {
                let name = format!("tail_{tag}_{side}.csv");
                write_atomic(&a.out.join(&name), &tail_csv(&t)?)?;
                println!("{name}: slope={}", t.slope.map_or("none".into(), |s| s.to_string()));
                written.push(name);
            }
        }
    }
    if records.iter().any(|r| !r.profile.is_empty()) {
        write_atomic(&a.out.join("main_estimate_profile.csv"), &profile_csv(&records)?)?;
        written.push("main_estimate_profile.csv".into());
    }
    if written.is_empty() {
        eprintln!("no table had enough records (fit: {} seeds per size, tails: {MIN_TAIL_RECORDS})", a.min_seeds);
    }
    Ok(())
}
