//! Damped Newton ascent on the concave dual of semi-discrete transport.
//!
//! The dual variable is the weight vector `w`; the gradient is `nu - G(w)`
//! with `G_i` the mass of cell `i`, and the Jacobian of `G` is the weighted
//! graph Laplacian of the diagram with entries `density * |edge| / (2 |q|)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::power::{grid_for, power_cell, shift_vec, DiagramInput, EdgeTag, PowerCell, SiteGrid};
use super::TransportSolution;
use crate::geometry::{clip_segment_to_disk, Disk, Domain, Point};
use crate::sampler::PointConfiguration;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    /// Stop when `max_i |G_i - nu_i| <= tol * mean(nu)`.
    pub tol: f64,
    pub max_iter: usize,
    /// Coincident targets closer than `merge_tol * side` are merged.
    pub merge_tol: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { tol: 1e-7, max_iter: 200, merge_tol: 1e-12 }
    }
}

pub(crate) struct Evaluation {
    pub cells: Vec<PowerCell>,
    pub mass: Vec<f64>,
}

pub(crate) struct Problem<'a> {
    pub domain: Domain,
    pub density: f64,
    pub sites: &'a [Point],
    pub grid: &'a SiteGrid,
}

impl Problem<'_> {
    pub(crate) fn evaluate(&self, w: &[f64]) -> Result<Evaluation> {
        let wmax = w.iter().cloned().fold(f64::MIN, f64::max);
        let input = DiagramInput { domain: self.domain, sites: self.sites, weights: w, grid: self.grid };
        let cells: Vec<PowerCell> =
            (0..self.sites.len()).into_par_iter().map(|i| power_cell(&input, i, wmax)).collect::<Result<_>>()?;
        let mass = cells.iter().map(|c| self.density * c.area()).collect();
        Ok(Evaluation { cells, mass })
    }

    /// `sum_i int_{cell_i} (|x - y_i|^2 - w_i) rho + sum_i w_i nu_i`.
    pub(crate) fn dual(&self, eval: &Evaluation, w: &[f64], nu: &[f64]) -> f64 {
        eval.cells
            .iter()
            .zip(w)
            .zip(nu)
            .map(|((c, wi), ni)| self.density * (c.second_moment() - wi * c.area()) + wi * ni)
            .sum()
    }

    /// Symmetric Laplacian of the mass map in compressed rows.
    fn jacobian(&self, eval: &Evaluation) -> Csr {
        let n = self.sites.len();
        let ball = match self.domain {
            Domain::Ball { center, radius } => Some((Point::new(center[0], center[1]), radius)),
            _ => None,
        };
        let mut trip: Vec<(u32, u32, f64)> = Vec::new();
        for (i, c) in eval.cells.iter().enumerate() {
            let k = c.local.len();
            for e in 0..k {
                let EdgeTag::Site { index, shift } = c.tags[e] else { continue };
                let j = index as usize;
                if j == i {
                    continue;
                }
                let (a, b) = (c.local[e], c.local[(e + 1) % k]);
                let len = match ball {
                    None => (b - a).norm(),
                    Some((center, radius)) => {
                        let d = Disk::new(center - c.site, radius);
                        clip_segment_to_disk(a, b, &d).map_or(0.0, |(s, t)| (t - s).norm())
                    }
                };
                if len == 0.0 {
                    continue;
                }
                let q = self.sites[j] + shift_vec(&self.domain, shift) - c.site;
                let v = 0.5 * self.density * len / (2.0 * q.norm());
                trip.push((i as u32, j as u32, v));
                trip.push((j as u32, i as u32, v));
            }
        }
        trip.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::with_capacity(trip.len());
        let mut vals: Vec<f64> = Vec::with_capacity(trip.len());
        let mut diag = vec![0.0; n];
        let mut last: Option<(u32, u32)> = None;
        for (i, j, v) in trip {
            diag[i as usize] += v;
            if last == Some((i, j)) {
                *vals.last_mut().unwrap() -= v;
            } else {
                cols.push(j as usize);
                vals.push(-v);
                row_ptr[i as usize + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Csr { row_ptr, cols, vals, diag }
    }
}

struct Csr {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    diag: Vec<f64>,
}

impl Csr {
    fn apply(&self, x: &[f64], reg: f64, out: &mut [f64]) {
        for i in 0..self.diag.len() {
            let mut s = (self.diag[i] + reg) * x[i];
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.vals[k] * x[self.cols[k]];
            }
            out[i] = s;
        }
    }

    /// Jacobi-preconditioned conjugate gradients on the mean-zero part of `rhs`.
    fn solve(&self, rhs: &[f64], rtol: f64) -> Option<Vec<f64>> {
        let n = rhs.len();
        let mean = rhs.iter().sum::<f64>() / n as f64;
        let b: Vec<f64> = rhs.iter().map(|r| r - mean).collect();
        let dmean = self.diag.iter().sum::<f64>() / n as f64;
        if !(dmean > 0.0) {
            return None;
        }
        let reg = 1e-12 * dmean;
        let pre: Vec<f64> = self.diag.iter().map(|d| 1.0 / (d + reg).max(1e-300)).collect();
        let bnorm = norm(&b);
        let mut x = vec![0.0; n];
        if bnorm == 0.0 {
            return Some(x);
        }
        let mut r = b.clone();
        let mut z: Vec<f64> = r.iter().zip(&pre).map(|(a, p)| a * p).collect();
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let mut ap = vec![0.0; n];
        let max_it = (20 * n).clamp(100, 20_000);
        for _ in 0..max_it {
            self.apply(&p, reg, &mut ap);
            let pap = dot(&p, &ap);
            if !(pap > 0.0) {
                return None;
            }
            let alpha = rz / pap;
            for k in 0..n {
                x[k] += alpha * p[k];
                r[k] -= alpha * ap[k];
            }
            if norm(&r) <= rtol * bnorm {
                return Some(x);
            }
            for k in 0..n {
                z[k] = r[k] * pre[k];
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for k in 0..n {
                p[k] = z[k] + beta * p[k];
            }
        }
        (norm(&r) <= 0.1 * bnorm).then_some(x)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn residual(mass: &[f64], nu: &[f64]) -> (f64, f64) {
    let mut l2 = 0.0;
    let mut linf: f64 = 0.0;
    for (g, n) in mass.iter().zip(nu) {
        let d = g - n;
        l2 += d * d;
        linf = linf.max(d.abs());
    }
    (l2.sqrt(), linf)
}

/// Merge targets closer than `tol` (after lexicographic sorting), summing masses.
fn merge_targets(targets: &PointConfiguration, tol: f64) -> (Vec<Point>, Vec<f64>, Vec<usize>) {
    let mut pts: Vec<Point> = Vec::with_capacity(targets.len());
    let mut mass: Vec<f64> = Vec::with_capacity(targets.len());
    let mut index = Vec::with_capacity(targets.len());
    for (p, m) in targets.points().iter().zip(targets.masses()) {
        // Sorted by x, so only recent points can be within tol.
        let mut merged = false;
        for k in (0..pts.len()).rev() {
            if p.x - pts[k].x > tol {
                break;
            }
            if (p - pts[k]).norm() <= tol {
                mass[k] += m;
                index.push(k);
                merged = true;
                break;
            }
        }
        if !merged {
            index.push(pts.len());
            pts.push(*p);
            mass.push(*m);
        }
    }
    (pts, mass, index)
}

/// Semi-discrete optimal transport from `density * Lebesgue` on `domain` to
/// the target cloud.
pub fn solve_semidiscrete(
    domain: Domain,
    density: f64,
    targets: &PointConfiguration,
    settings: &SolverSettings,
) -> Result<TransportSolution> {
    if targets.is_empty() {
        return Err(Error::EmptySupport);
    }
    if !(density > 0.0 && density.is_finite()) {
        return Err(Error::InvalidInput(format!("density {density} must be positive")));
    }
    if domain.is_periodic() && targets.side() != domain.side() {
        return Err(Error::InvalidInput("torus side differs from the configuration's".into()));
    }
    let source_mass = density * domain.area();
    let target_mass = targets.total_mass();
    if (source_mass - target_mass).abs() > 1e-9 * target_mass {
        return Err(Error::MassMismatch { source_mass, target_mass });
    }
    // Absorb the residual rounding into the density.
    let density = target_mass / domain.area();
    let (sites, nu, target_index) = merge_targets(targets, settings.merge_tol * domain.side());
    let sites: Vec<Point> = sites.into_iter().map(|p| domain.reduce(p)).collect();
    let n = sites.len();
    let grid = grid_for(&domain, &sites);
    let problem = Problem { domain, density, sites: &sites, grid: &grid };
    let avg = target_mass / n as f64;
    let target_res = settings.tol * avg;

    let mut w = vec![0.0; n];
    let mut eval = problem.evaluate(&w)?;
    let min_g = eval.mass.iter().cloned().fold(f64::INFINITY, f64::min);
    let min_nu = nu.iter().cloned().fold(f64::INFINITY, f64::min);
    let eps0 = 0.5 * min_g.min(min_nu);
    if !(eps0 > 0.0) {
        let index = eval.mass.iter().position(|&m| m <= 0.0).unwrap_or(0);
        return Err(Error::EmptyCell { index, mass: eval.mass[index] });
    }
    let mut iterations = 0;
    let (mut l2, mut linf) = residual(&eval.mass, &nu);
    while linf > target_res {
        if iterations >= settings.max_iter {
            return Err(Error::NonConvergence { iterations, residual: linf / avg });
        }
        iterations += 1;
        let rhs: Vec<f64> = nu.iter().zip(&eval.mass).map(|(a, b)| a - b).collect();
        // Inexact Newton: the linear residual only needs to stay well below the mass residual.
        let rtol = (0.1 * target_res / linf).clamp(1e-10, 1e-2);
        let step = problem.jacobian(&eval).solve(&rhs, rtol);
        let mut accepted = false;
        if let Some(d) = step {
            let mut alpha = 1.0;
            for _ in 0..30 {
                let trial: Vec<f64> = w.iter().zip(&d).map(|(a, b)| a + alpha * b).collect();
                if let Ok(e) = problem.evaluate(&trial) {
                    let min_g = e.mass.iter().cloned().fold(f64::INFINITY, f64::min);
                    let (l2n, linfn) = residual(&e.mass, &nu);
                    if min_g >= eps0 && l2n <= (1.0 - alpha / 2.0) * l2 {
                        w = trial;
                        eval = e;
                        l2 = l2n;
                        linf = linfn;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
        }
        if !accepted {
            // Gradient ascent with an Armijo test on the dual.
            let phi = problem.dual(&eval, &w, &nu);
            let g2: f64 = rhs.iter().map(|r| r * r).sum();
            let diag_max = problem.jacobian(&eval).diag.iter().cloned().fold(0.0, f64::max);
            let mut alpha = 1.0 / diag_max.max(1e-300);
            for _ in 0..60 {
                let trial: Vec<f64> = w.iter().zip(&rhs).map(|(a, b)| a + alpha * b).collect();
                if let Ok(e) = problem.evaluate(&trial) {
                    if problem.dual(&e, &trial, &nu) >= phi + 1e-4 * alpha * g2 {
                        w = trial;
                        eval = e;
                        (l2, linf) = residual(&eval.mass, &nu);
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !accepted {
                return Err(Error::NonConvergence { iterations, residual: linf / avg });
            }
        }
    }
    let cost = density * eval.cells.iter().map(|c| c.second_moment()).sum::<f64>();
    let cost_bound = settings.tol * domain.diameter().powi(2) * target_mass;
    let max_radius = eval.cells.iter().map(|c| c.radius()).fold(0.0, f64::max);
    let max_weight = w.iter().cloned().fold(f64::MIN, f64::max);
    Ok(TransportSolution {
        domain,
        density,
        targets: sites,
        masses: nu,
        target_index,
        weights: w,
        cells: eval.cells,
        cell_masses: eval.mass,
        cost,
        cost_bound,
        iterations,
        max_residual: linf / avg,
        grid,
        max_radius,
        max_weight,
    })
}

/// Dual objective at arbitrary weights for an already solved problem's sites.
pub(crate) fn dual_at(sol: &TransportSolution, w: &[f64]) -> Result<f64> {
    let problem = Problem { domain: sol.domain, density: sol.density, sites: &sol.targets, grid: &sol.grid };
    let e = problem.evaluate(w)?;
    Ok(problem.dual(&e, w, &sol.masses))
}
