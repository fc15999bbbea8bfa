//! Exact discrete transport between weighted point clouds: the oracle against
//! which the semi-discrete solver and the analytic examples are checked.
//!
//! Lebesgue measure is replaced by equal masses at the centres of an `m x m`
//! grid. Unequal clouds go through an integer network simplex with column
//! generation; equal-cardinality, equal-mass problems go through a dense
//! assignment solver.

mod lap;
mod network_simplex;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub use lap::lap_jv;
use network_simplex::NetworkSimplex;

use crate::geometry::{pt, Domain, PerMetric, Point};
use crate::sampler::PointConfiguration;
use crate::{Error, Result};

/// Ground cost `|x - y|^2` in the chosen metric.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Metric {
    Euclid,
    Periodic { side: f64 },
}

impl Metric {
    #[inline]
    pub fn cost(&self, x: Point, y: Point) -> f64 {
        match *self {
            Metric::Euclid => (x - y).norm_squared(),
            Metric::Periodic { side } => PerMetric { side }.dist_sq(x, y),
        }
    }
}

/// An optimal coupling with a dual certificate.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteCoupling {
    pub rows: usize,
    pub cols: usize,
    /// `(i, j, mass)` sorted by `(i, j)`; only positive entries.
    pub flow: Vec<(usize, usize, f64)>,
    pub cost: f64,
    pub row_dual: Vec<f64>,
    pub col_dual: Vec<f64>,
    /// `sum a_i u_i + sum b_j v_j` for the exported dual pair, which is feasible by construction.
    pub dual_value: f64,
}

impl DiscreteCoupling {
    pub fn duality_gap(&self) -> f64 {
        self.cost - self.dual_value
    }

    pub fn row_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.rows];
        for &(i, _, f) in &self.flow {
            s[i] += f;
        }
        s
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.cols];
        for &(_, j, f) in &self.flow {
            s[j] += f;
        }
        s
    }

    /// `i j flow` triples followed by `cost=<value>`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for &(i, j, f) in &self.flow {
            let _ = writeln!(s, "{i} {j} {f:.16e}");
        }
        let _ = writeln!(s, "cost={:.16e}", self.cost);
        s
    }
}

pub fn solve_exact(
    source: &PointConfiguration,
    target: &PointConfiguration,
    metric: Metric,
) -> Result<DiscreteCoupling> {
    solve_weighted(source.points(), source.masses(), target.points(), target.masses(), metric)
}

/// Exact optimal transport between two weighted clouds of equal total mass.
pub fn solve_weighted(
    src: &[Point],
    src_mass: &[f64],
    tgt: &[Point],
    tgt_mass: &[f64],
    metric: Metric,
) -> Result<DiscreteCoupling> {
    if src.is_empty() || tgt.is_empty() {
        return Err(Error::EmptySupport);
    }
    if src.len() != src_mass.len() || tgt.len() != tgt_mass.len() {
        return Err(Error::InvalidInput("points and masses differ in length".into()));
    }
    if src_mass.iter().chain(tgt_mass).any(|&m| !(m > 0.0 && m.is_finite())) {
        return Err(Error::InvalidInput("masses must be positive and finite".into()));
    }
    let a_tot: f64 = src_mass.iter().sum();
    let b_tot: f64 = tgt_mass.iter().sum();
    if (a_tot - b_tot).abs() > 1e-12 * a_tot.max(b_tot) {
        return Err(Error::MassMismatch { source_mass: a_tot, target_mass: b_tot });
    }
    let uniform = |m: &[f64]| m.iter().all(|&x| x == m[0]);
    let (na, nb) = (src.len(), tgt.len());
    if na == nb && uniform(src_mass) && uniform(tgt_mass) && na <= 1500 {
        return Ok(solve_assignment(src, tgt, src_mass[0], metric));
    }
    solve_network(src, src_mass, tgt, tgt_mass, metric, None)
}

fn solve_assignment(src: &[Point], tgt: &[Point], mass: f64, metric: Metric) -> DiscreteCoupling {
    let n = src.len();
    let mut cost = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            cost[i * n + j] = metric.cost(src[i], tgt[j]);
        }
    }
    let (col_of_row, _, v) = lap_jv(n, &cost);
    let flow: Vec<(usize, usize, f64)> = col_of_row.iter().enumerate().map(|(i, &j)| (i, j, mass)).collect();
    let primal: f64 = flow.iter().map(|&(i, j, f)| f * cost[i * n + j]).sum();
    let mut out = DiscreteCoupling {
        rows: n,
        cols: n,
        flow,
        cost: primal,
        row_dual: Vec::new(),
        col_dual: v,
        dual_value: 0.0,
    };
    certify(&mut out, src, &vec![mass; n], tgt, &vec![mass; n], metric);
    out
}

/// Replace the row duals by the c-transform of the column duals so the pair is
/// exactly feasible, and record its value.
fn certify(out: &mut DiscreteCoupling, src: &[Point], a: &[f64], tgt: &[Point], b: &[f64], metric: Metric) {
    // The dual value is shift invariant; centring avoids cancellation.
    let mean = out.col_dual.iter().sum::<f64>() / out.col_dual.len() as f64;
    out.col_dual.iter_mut().for_each(|v| *v -= mean);
    let v = &out.col_dual;
    out.row_dual = src
        .iter()
        .map(|&x| tgt.iter().zip(v).map(|(&y, &vj)| metric.cost(x, y) - vj).fold(f64::INFINITY, f64::min))
        .collect();
    out.dual_value = a.iter().zip(&out.row_dual).map(|(m, u)| m * u).sum::<f64>()
        + b.iter().zip(v).map(|(m, v)| m * v).sum::<f64>();
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Integer supplies proportional to the masses, exactly balanced.
fn integer_supplies(a: &[f64], b: &[f64]) -> (Vec<i64>, Vec<i64>, f64) {
    let uniform = |m: &[f64]| m.iter().all(|&x| x == m[0]);
    let (na, nb) = (a.len() as u64, b.len() as u64);
    if uniform(a) && uniform(b) {
        let g = gcd(na, nb);
        let (s, d) = ((nb / g) as i64, (na / g) as i64);
        return (vec![s; a.len()], vec![d; b.len()], a[0] / s as f64);
    }
    const Q: f64 = (1u64 << 40) as f64;
    let quantise = |m: &[f64]| -> Vec<i64> {
        let tot: f64 = m.iter().sum();
        let raw: Vec<f64> = m.iter().map(|x| x / tot * Q).collect();
        let mut q: Vec<i64> = raw.iter().map(|r| r.floor() as i64).collect();
        let short = Q as i64 - q.iter().sum::<i64>();
        let mut order: Vec<usize> = (0..m.len()).collect();
        order.sort_by(|&i, &j| (raw[j] - raw[j].floor()).total_cmp(&(raw[i] - raw[i].floor())).then(i.cmp(&j)));
        for &i in order.iter().take(short.max(0) as usize) {
            q[i] += 1;
        }
        q
    };
    let unit = a.iter().sum::<f64>() / Q;
    (quantise(a), quantise(b), unit)
}

const COST_BITS: u32 = 52;
const INITIAL_NEIGHBOURS: usize = 8;
const ADD_PER_ROW: usize = 4;

fn solve_network(
    src: &[Point],
    src_mass: &[f64],
    tgt: &[Point],
    tgt_mass: &[f64],
    metric: Metric,
    hint: Option<&[f64]>,
) -> Result<DiscreteCoupling> {
    let (na, nb) = (src.len(), tgt.len());
    let cmax = cost_upper_bound(src, tgt, metric);
    let scale = (1u64 << COST_BITS) as f64 / cmax;
    let icost = |i: usize, j: usize| (metric.cost(src[i], tgt[j]) * scale).round() as i128;
    let (sa, sb, unit) = integer_supplies(src_mass, tgt_mass);
    let supply: Vec<i64> = sa.iter().copied().chain(sb.iter().map(|d| -d)).collect();
    let art = ((1i128 << COST_BITS) + 1) * (na + nb + 1) as i128;
    let mut ns = NetworkSimplex::new(&supply, art);

    let zero = vec![0.0; nb];
    let v = hint.filter(|h| h.len() == nb).unwrap_or(&zero);
    let key = |i: usize, j: usize| metric.cost(src[i], tgt[j]) - v[j];

    // present[i]: sorted targets j whose arc (i, j) is in the network, with its arc id.
    let mut present: Vec<Vec<(u32, usize)>> = vec![Vec::new(); na];
    let has = |row: &Vec<(u32, usize)>, j: u32| row.binary_search_by_key(&j, |x| x.0);
    let dense = na * nb <= 400_000;
    let k = if dense { nb } else { INITIAL_NEIGHBOURS.min(nb) };
    let mut cand: Vec<(f64, u32)> = Vec::with_capacity(nb);
    for (i, row) in present.iter_mut().enumerate() {
        cand.clear();
        cand.extend((0..nb).map(|j| (key(i, j), j as u32)));
        if k < nb {
            cand.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0));
        }
        for &(_, j) in &cand[..k] {
            let e = ns.add_arc(i, na + j as usize, icost(i, j as usize));
            row.push((j, e));
        }
        row.sort_unstable();
    }

    if let Some(start) = greedy_forest(&sa, &sb, key) {
        let mut tree = Vec::with_capacity(start.len());
        for (i, j, f) in start {
            let e = match has(&present[i], j as u32) {
                Ok(pos) => present[i][pos].1,
                Err(pos) => {
                    let e = ns.add_arc(i, na + j, icost(i, j));
                    present[i].insert(pos, (j as u32, e));
                    e
                }
            };
            tree.push((e, f));
        }
        ns.warm_start(&tree);
    }

    loop {
        ns.run();
        if present.iter().all(|r| r.len() == nb) {
            break;
        }
        let mut added = 0usize;
        let mut viol: Vec<(i128, u32)> = Vec::new();
        for (i, row) in present.iter_mut().enumerate() {
            if row.len() == nb {
                continue;
            }
            viol.clear();
            let pi_i = ns.potential(i);
            for j in 0..nb {
                let rc = icost(i, j) + pi_i - ns.potential(na + j);
                if rc < 0 && has(row, j as u32).is_err() {
                    viol.push((rc, j as u32));
                }
            }
            if viol.len() > ADD_PER_ROW {
                viol.select_nth_unstable(ADD_PER_ROW - 1);
                viol.truncate(ADD_PER_ROW);
            }
            for &(_, j) in &viol {
                let e = ns.add_arc(i, na + j as usize, icost(i, j as usize));
                let pos = has(row, j).unwrap_err();
                row.insert(pos, (j, e));
                added += 1;
            }
        }
        if added == 0 {
            break;
        }
    }
    if ns.artificial_flow() != 0 {
        return Err(Error::NonConvergence { iterations: ns.pivots as usize, residual: ns.artificial_flow() as f64 });
    }

    let mut flow: Vec<(usize, usize, f64)> =
        ns.real_flows().map(|(s, t, f)| (s, t - na, f as f64 * unit)).collect();
    flow.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
    let cost = flow.iter().map(|&(i, j, f)| f * metric.cost(src[i], tgt[j])).sum();
    let p0 = ns.potential(na);
    let col_dual: Vec<f64> = (0..nb).map(|j| (ns.potential(na + j) - p0) as f64 / scale).collect();
    // Masses as actually transported, so the certificate matches the primal.
    let a_eff: Vec<f64> = sa.iter().map(|&s| s as f64 * unit).collect();
    let b_eff: Vec<f64> = sb.iter().map(|&s| s as f64 * unit).collect();
    let mut out =
        DiscreteCoupling { rows: na, cols: nb, flow, cost, row_dual: Vec::new(), col_dual, dual_value: 0.0 };
    certify(&mut out, src, &a_eff, tgt, &b_eff, metric);
    Ok(out)
}

/// Capacity-respecting greedy start: sources in decreasing order of regret
/// fill their cheapest sinks by `key`. Returns `None` if the support would
/// contain a cycle.
fn greedy_forest(sa: &[i64], sb: &[i64], key: impl Fn(usize, usize) -> f64) -> Option<Vec<(usize, usize, i64)>> {
    let (na, nb) = (sa.len(), sb.len());
    let mut prefs: Vec<Vec<u32>> = Vec::with_capacity(na);
    let mut regret = Vec::with_capacity(na);
    for i in 0..na {
        let mut p: Vec<u32> = (0..nb as u32).collect();
        p.sort_by(|&a, &b| key(i, a as usize).total_cmp(&key(i, b as usize)).then(a.cmp(&b)));
        let r = if nb > 1 { key(i, p[1] as usize) - key(i, p[0] as usize) } else { 0.0 };
        regret.push(r);
        prefs.push(p);
    }
    let mut order: Vec<usize> = (0..na).collect();
    order.sort_by(|&a, &b| regret[b].total_cmp(&regret[a]).then(a.cmp(&b)));
    let mut cap = sb.to_vec();
    let mut uf: Vec<usize> = (0..na + nb).collect();
    fn find(uf: &mut [usize], mut x: usize) -> usize {
        while uf[x] != x {
            uf[x] = uf[uf[x]];
            x = uf[x];
        }
        x
    }
    let mut out = Vec::new();
    for &i in &order {
        let mut left = sa[i];
        for &j in &prefs[i] {
            if left == 0 {
                break;
            }
            let j = j as usize;
            if cap[j] == 0 {
                continue;
            }
            let f = left.min(cap[j]);
            let (ri, rj) = (find(&mut uf, i), find(&mut uf, na + j));
            if ri == rj {
                return None;
            }
            uf[ri] = rj;
            cap[j] -= f;
            left -= f;
            out.push((i, j, f));
        }
        if left != 0 {
            return None;
        }
    }
    Some(out)
}

fn cost_upper_bound(src: &[Point], tgt: &[Point], metric: Metric) -> f64 {
    let b = match metric {
        Metric::Periodic { side } => 0.5 * side * side,
        Metric::Euclid => {
            let (mut lo, mut hi) = (src[0], src[0]);
            for p in src.iter().chain(tgt) {
                lo = lo.inf(p);
                hi = hi.sup(p);
            }
            (hi - lo).norm_squared()
        }
    };
    if b > 0.0 {
        b * (1.0 + 1e-9)
    } else {
        1.0
    }
}

/// Centres of the `m x m` partition of `Q_side`.
pub fn grid_sites(side: f64, m: usize) -> Vec<Point> {
    let h = side / m as f64;
    let mut v = Vec::with_capacity(m * m);
    for i in 0..m {
        for j in 0..m {
            v.push(pt(-0.5 * side + (i as f64 + 0.5) * h, -0.5 * side + (j as f64 + 0.5) * h));
        }
    }
    v
}

/// The grid stand-in for `density * Lebesgue` on `Q_side`.
pub fn grid_configuration(side: f64, m: usize, total_mass: f64, periodic: bool) -> Result<PointConfiguration> {
    if m == 0 {
        return Err(Error::InvalidInput("grid size must be positive".into()));
    }
    let domain = if periodic { Domain::torus(side)? } else { Domain::square(side)? };
    let mass = total_mass / (m * m) as f64;
    PointConfiguration::new(domain, grid_sites(side, m), vec![mass; m * m])
}

/// Exact transport from the `m x m` grid on `Q_side` (total mass of the
/// targets) to a weighted cloud. Large grids start from the duals of the
/// half-resolution problem.
pub fn solve_grid(side: f64, m: usize, tgt: &[Point], tgt_mass: &[f64], metric: Metric) -> Result<DiscreteCoupling> {
    if m == 0 {
        return Err(Error::InvalidInput("grid size must be positive".into()));
    }
    if tgt.is_empty() {
        return Err(Error::EmptySupport);
    }
    let total: f64 = tgt_mass.iter().sum();
    let src = grid_sites(side, m);
    let a = vec![total / (m * m) as f64; m * m];
    let hint = if m >= 64 && m % 2 == 0 && m * m > tgt.len() {
        Some(solve_grid(side, m / 2, tgt, tgt_mass, metric)?.col_dual)
    } else {
        None
    };
    if src.len() == tgt.len() && hint.is_none() {
        return solve_weighted(&src, &a, tgt, tgt_mass, metric);
    }
    solve_network(&src, &a, tgt, tgt_mass, metric, hint.as_deref())
}

/// Grid approximation of `W_2^2(mu_ell, kappa Lebesgue on Q_ell)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridCost {
    pub cost: f64,
    /// Bound on `|cost - continuous value|` from the grid's own distance to Lebesgue.
    pub error_bound: f64,
    pub grid_m: usize,
    pub mass: f64,
}

pub fn w2_vs_uniform(mu: &PointConfiguration, ell: f64, grid_m: usize, metric: Metric) -> Result<GridCost> {
    let window = mu.restrict(ell)?;
    if window.is_empty() {
        return Err(Error::EmptySupport);
    }
    let mass = window.total_mass();
    let sol = solve_grid(ell, grid_m, window.points(), window.masses(), metric)?;
    // W2^2(grid, Lebesgue) = mass h^2 / 6; the triangle inequality for W2 bounds the rest.
    let h = ell / grid_m as f64;
    let g = mass * h * h / 6.0;
    let error_bound = 2.0 * (sol.cost * g).sqrt() + g;
    Ok(GridCost { cost: sol.cost, error_bound, grid_m, mass })
}
