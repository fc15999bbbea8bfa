//! Per-realisation multiscale statistics: data terms on the dyadic windows
//! `Q_ell`, the statistic `Theta`, the minimal radius `r_*`, the shift `x_L`
//! and the per-scale profile of the map around it.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assign::{w2_vs_uniform, Metric};
use crate::geometry::{Domain, DyadicLadder, Point};
use crate::sampler::PointConfiguration;
use crate::semidiscrete::{solve_semidiscrete, SolverSettings, TransportSolution};
use crate::{Error, Result};

/// Ratio of consecutive radii on the `r_*` search grid.
pub const RSTAR_RESOLUTION: f64 = 1.090_507_732_665_257_7; // 2^(1/8)

/// Bounds on the profile ratios at `L = 128`, frozen from a pilot ensemble on
/// seeds disjoint from the test seeds (pilot maxima 14.4 and 5.2).
pub const FROZEN_FIXED_SHIFT_BOUND: f64 = 20.0;
pub const FROZEN_OPTIMAL_SHIFT_BOUND: f64 = 8.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScaleSolver {
    Semidiscrete,
    Assignment,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleRecord {
    pub ell: f64,
    pub mass: f64,
    pub count: usize,
    /// `W_2^2(mu_ell, mu(Q_ell) / ell^2 on Q_ell)`, Euclidean.
    pub w2sq: Option<f64>,
    /// `w2sq / ell^4`.
    pub d: Option<f64>,
    pub solver: Option<ScaleSolver>,
    /// Grid side of the assignment fallback, if used.
    pub grid_m: Option<usize>,
    /// Bound on the error of `w2sq`.
    pub error: f64,
    pub failure: Option<String>,
}

impl ScaleRecord {
    /// `Theta_k = W_2^2 / (ell^2 log ell)`, defined for `ell > 1`.
    pub fn theta_k(&self) -> Option<f64> {
        let w = self.w2sq?;
        (self.ell > 1.0).then(|| w / (self.ell * self.ell * self.ell.ln()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleScan {
    pub ladder: DyadicLadder,
    /// Side of the configuration's domain.
    pub side: f64,
    /// Records in ladder order.
    pub records: Vec<ScaleRecord>,
}

impl ScaleScan {
    pub fn record(&self, ell: f64) -> Option<&ScaleRecord> {
        self.records.iter().find(|r| (r.ell - ell).abs() <= 1e-12 * ell)
    }

    pub fn is_complete(&self) -> bool {
        self.records.iter().all(|r| r.d.is_some())
    }

    /// One `seed L ell W2sq D theta_k flags` line per scale.
    pub fn to_lines(&self, seed: u64) -> String {
        let mut out = String::new();
        for r in &self.records {
            let fmt = |v: Option<f64>| v.map_or("nan".to_string(), |x| format!("{x:.10e}"));
            let flags = match (&r.failure, r.solver) {
                (Some(_), _) => "failed",
                (None, Some(ScaleSolver::Assignment)) => "assign",
                _ => "ok",
            };
            let _ = writeln!(
                out,
                "{seed} {} {} {} {} {} {flags}",
                self.side,
                r.ell,
                fmt(r.w2sq),
                fmt(r.d),
                fmt(r.theta_k())
            );
        }
        out
    }
}

/// Data terms of `mu` on the centred squares of the ladder. The semi-discrete
/// solver is used throughout; the grid assignment (side at least `grid_m`)
/// takes over if it fails.
pub fn scan_data_term(mu: &PointConfiguration, ladder: &DyadicLadder, grid_m: usize) -> Result<ScaleScan> {
    let side = mu.side();
    if ladder.ceiling() > side * (1.0 + 1e-12) {
        return Err(Error::InvalidInput(format!("ladder top {} exceeds the side {side}", ladder.ceiling())));
    }
    let records = ladder.scales().par_iter().map(|&ell| scale_record(mu, ell, grid_m)).collect();
    Ok(ScaleScan { ladder: ladder.clone(), side, records })
}

fn scale_record(mu: &PointConfiguration, ell: f64, grid_m: usize) -> ScaleRecord {
    let mut rec = ScaleRecord {
        ell,
        mass: 0.0,
        count: 0,
        w2sq: None,
        d: None,
        solver: None,
        grid_m: None,
        error: 0.0,
        failure: None,
    };
    let window = match mu.restrict(ell) {
        Ok(w) => w,
        Err(e) => {
            rec.failure = Some(e.to_string());
            return rec;
        }
    };
    rec.mass = window.total_mass();
    rec.count = window.len();
    if window.is_empty() {
        rec.failure = Some("empty window".into());
        return rec;
    }
    let domain = Domain::Square { side: ell };
    let sd = solve_semidiscrete(domain, rec.mass / (ell * ell), &window, &SolverSettings::default());
    let (w2sq, error, solver, m) = match sd {
        Ok(sol) => (sol.cost, sol.cost_bound, ScaleSolver::Semidiscrete, None),
        Err(sd_err) => {
            let m = grid_m.max((8.0 * rec.mass.sqrt()).ceil() as usize).max(1);
            match w2_vs_uniform(&window, ell, m, Metric::Euclid) {
                Ok(g) => (g.cost, g.error_bound, ScaleSolver::Assignment, Some(m)),
                Err(e) => {
                    rec.failure = Some(format!("semidiscrete: {sd_err}; assignment: {e}"));
                    return rec;
                }
            }
        }
    };
    rec.w2sq = Some(w2sq);
    rec.d = Some(w2sq / ell.powi(4));
    rec.error = error;
    rec.solver = Some(solver);
    rec.grid_m = m;
    rec
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Theta {
    pub value: f64,
    /// Some scale failed, so `value` only bounds the supremum from below.
    pub lower_bound_only: bool,
}

/// `Theta = max_k W_2^2 / (ell_k^2 log ell_k)` over the scan.
pub fn compute_theta(scan: &ScaleScan) -> Result<Theta> {
    if (scan.ladder.floor() - 2.0).abs() > 1e-12 {
        return Err(Error::InvalidInput(format!("theta needs a ladder starting at 2, got {}", scan.ladder.floor())));
    }
    let mut value: f64 = 0.0;
    let mut lower_bound_only = false;
    for r in &scan.records {
        match r.theta_k() {
            Some(t) => value = value.max(t),
            None => lower_bound_only = true,
        }
    }
    Ok(Theta { value, lower_bound_only })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StarRadius {
    pub r_star: f64,
    /// Minimal grid radius satisfying the data-term bound (`L/2` if none does).
    pub r_tilde: f64,
    pub theta_stat: Theta,
    pub min_support_norm: f64,
    /// `mu(Q_L) / L^2` lies in `[1/2, 2]`.
    pub density_ok: bool,
    /// Some support point lies in the closed ball `B_{r_star}`.
    pub support_ok: bool,
    pub side: f64,
}

impl StarRadius {
    /// Both density and support conditions hold and `2 r_star <= L`.
    pub fn gated(&self) -> bool {
        self.density_ok && self.support_ok && 2.0 * self.r_star <= self.side
    }
}

/// `D_ell <= log(ell / r) / (ell / r)^2` for every scanned `ell` in `[2r, L]`.
/// A failed scale in that range violates the bound.
pub fn rstar_predicate(scan: &ScaleScan, r: f64) -> bool {
    scan.records.iter().filter(|rec| 2.0 * r <= rec.ell * (1.0 + 1e-12) && rec.ell <= scan.side * (1.0 + 1e-12)).all(
        |rec| match rec.d {
            Some(d) => {
                let q = rec.ell / r;
                d <= q.ln() / (q * q)
            }
            None => false,
        },
    )
}

/// The search grid `2^(j/8)` in `[1, side/2]`.
pub fn rstar_grid(side: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut j = 0;
    loop {
        let r = 2f64.powf(j as f64 / 8.0);
        if r > 0.5 * side * (1.0 + 1e-12) {
            break;
        }
        out.push(r);
        j += 1;
    }
    out
}

pub fn compute_rstar(scan: &ScaleScan, mu: &PointConfiguration) -> Result<StarRadius> {
    let side = mu.side();
    let theta_stat = compute_theta(scan)?;
    let r_tilde = rstar_grid(side).into_iter().find(|&r| rstar_predicate(scan, r)).unwrap_or(0.5 * side);
    let min_support_norm = mu.nearest_to_origin().map_or(f64::INFINITY, |(_, p)| p.norm());
    let density = mu.total_mass() / (side * side);
    let density_ok = (0.5..=2.0).contains(&density);
    let r_star = if density_ok { r_tilde.max(min_support_norm).max(1.0) } else { 0.5 * side };
    Ok(StarRadius {
        r_star,
        r_tilde,
        theta_stat,
        min_support_norm,
        density_ok,
        support_ok: min_support_norm <= r_star,
        side,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftRecord {
    /// Index of `y_L` among the solution's targets.
    pub target: usize,
    pub y_l: Point,
    pub x_l: Point,
    pub y_norm: f64,
    pub x_norm: f64,
    /// `|x_L|^2 / (r_*^2 log^3(L / r_*))`; `None` unless `r_* < L`.
    pub bound_ratio: Option<f64>,
}

/// `y_L` is the support point nearest the origin, `x_L` the barycenter of its cell.
pub fn compute_shift(sol: &TransportSolution, mu: &PointConfiguration, r_star: f64) -> Result<ShiftRecord> {
    if !sol.domain.is_periodic() {
        return Err(Error::NotPeriodic);
    }
    let (k, y_l) = mu.nearest_to_origin().ok_or(Error::EmptySupport)?;
    let target = *sol.target_index.get(k).ok_or(Error::IndexOutOfRange { index: k, len: sol.target_index.len() })?;
    if (sol.targets[target] - y_l).norm() > 1e-9 * mu.side() {
        return Err(Error::InvalidInput("solution was computed for another configuration".into()));
    }
    let (_, x_l) = sol.inverse_cell(target)?;
    let side = mu.side();
    let bound_ratio = (r_star < side).then(|| x_l.norm_squared() / (r_star * r_star * (side / r_star).ln().powi(3)));
    Ok(ShiftRecord { target, y_l, x_l, y_norm: y_l.norm(), x_norm: x_l.norm(), bound_ratio })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileRecord {
    pub ell: f64,
    /// `ell^-4 * int over B_ell(x_L) of |T - (x - x_L)|^2`.
    pub fixed: Option<f64>,
    /// `fixed / (log^3(ell / r_*) / (ell / r_*)^2)`.
    pub fixed_ratio: Option<f64>,
    /// The same with the optimal constant shift.
    pub optimal: Option<f64>,
    /// `optimal / (log(ell / r_*) / (ell / r_*)^2)`.
    pub optimal_ratio: Option<f64>,
    /// Minimising shift: the mean of `x - T(x)` over the ball.
    pub xi: Option<Point>,
    pub skipped: Option<String>,
}

pub fn main_estimate_profile(
    sol: &TransportSolution,
    shift: &ShiftRecord,
    rstar: &StarRadius,
    ladder: &DyadicLadder,
) -> Result<Vec<ProfileRecord>> {
    let r = rstar.r_star;
    let mut out = Vec::with_capacity(ladder.len());
    for &ell in ladder.scales() {
        let mut rec = ProfileRecord {
            ell,
            fixed: None,
            fixed_ratio: None,
            optimal: None,
            optimal_ratio: None,
            xi: None,
            skipped: None,
        };
        if ell < 2.0 * r * (1.0 - 1e-12) {
            rec.skipped = Some(format!("ell {ell} below 2 r_* = {}", 2.0 * r));
            out.push(rec);
            continue;
        }
        if ell > rstar.side * (1.0 + 1e-12) {
            rec.skipped = Some(format!("ell {ell} above L = {}", rstar.side));
            out.push(rec);
            continue;
        }
        let m = sol.displacement_moments(shift.x_l, ell)?;
        let l4 = ell.powi(4);
        // With u = x - T(x), the integrand is |u - x_L|^2 and the optimum is at u's mean.
        let fixed = m.second_about(shift.x_l) / l4;
        let xi = m.centroid().unwrap_or(shift.x_l);
        let optimal = (m.second_about(xi) / l4).min(fixed);
        let q = ell / r;
        let (lg, q2) = (q.ln(), q * q);
        rec.fixed = Some(fixed);
        rec.optimal = Some(optimal);
        rec.xi = Some(xi);
        if lg > 0.0 {
            rec.fixed_ratio = Some(fixed / (lg.powi(3) / q2));
            rec.optimal_ratio = Some(optimal / (lg / q2));
        }
        out.push(rec);
    }
    Ok(out)
}
