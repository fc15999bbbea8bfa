//! Queries on a solved transport problem: the map, its inverse cells, local
//! energies, displacement interpolation and the Kantorovich potentials.

use std::fmt::Write as _;

use super::power::shift_vec;
use super::{solver, TransportSolution};
use crate::geometry::{clip_segment_to_disk, cross, polygon_area, pt, Disk, Domain, Mat2, Moments, MonomialTable, Point};
use crate::{Error, Result};

impl TransportSolution {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    fn shift(&self, s: [i32; 2]) -> Point {
        shift_vec(&self.domain, s)
    }

    /// Lattice translate bringing `x` into the fundamental domain (zero off the torus).
    fn fundamental_offset(&self, x: Point) -> Point {
        x - self.domain.reduce(x)
    }

    /// Owning site copy of `x`: minimiser of `|x - y_j - z|^2 - w_j`, lowest index on ties.
    fn owner(&self, x: Point) -> (usize, [i32; 2]) {
        let grid = &self.grid;
        let b = grid.bucket(x);
        let mut best: Option<(f64, usize, [i32; 2])> = None;
        let cap = 2 * grid.g + 2;
        let mut r = 0i64;
        loop {
            if let Some((v, _, _)) = best {
                let gap = ((r - 1) as f64 * grid.h).max(0.0);
                if r >= 1 && gap * gap - self.max_weight > v {
                    break;
                }
            }
            if r > cap {
                break;
            }
            grid.ring(b, r, |j, s| {
                let v = (x - self.targets[j] - self.shift(s)).norm_squared() - self.weights[j];
                let better = match best {
                    None => true,
                    Some((bv, bj, _)) => v < bv || (v == bv && j < bj),
                };
                if better {
                    best = Some((v, j, s));
                }
            });
            r += 1;
        }
        let (_, j, s) = best.expect("solution has at least one target");
        (j, s)
    }

    /// `T(x)`: the (lifted, on the torus) target of the cell owning `x`.
    pub fn map_apply(&self, x: Point) -> Point {
        let off = self.fundamental_offset(x);
        let (j, s) = self.owner(x - off);
        self.targets[j] + self.shift(s) + off
    }

    /// Index of the target owning `x`.
    pub fn owner_index(&self, x: Point) -> usize {
        self.owner(self.domain.reduce(x)).0
    }

    /// Cell polygon (absolute coordinates) and barycenter of target `i`.
    pub fn inverse_cell(&self, i: usize) -> Result<(Vec<Point>, Point)> {
        let cell = self.cells.get(i).ok_or(Error::IndexOutOfRange { index: i, len: self.len() })?;
        let floor = 1e-9 * self.masses.iter().sum::<f64>() / self.len() as f64;
        if self.cell_masses[i] <= floor {
            return Err(Error::EmptyCell { index: i, mass: self.cell_masses[i] });
        }
        let bary = cell.barycenter().ok_or(Error::EmptyCell { index: i, mass: self.cell_masses[i] })?;
        Ok((cell.vertices(), bary))
    }

    /// Cell copies `(i, shift)` whose lifted region may meet the disk.
    pub fn pieces_near(&self, center: Point, radius: f64) -> Vec<(usize, [i32; 2])> {
        let grid = &self.grid;
        let b = grid.bucket(center);
        let reach = radius + self.max_radius;
        let mut out = Vec::new();
        let mut r = 0i64;
        while r == 0 || ((r - 1) as f64 * grid.h) < reach {
            grid.ring(b, r, |j, s| {
                let d = (self.targets[j] + self.shift(s) - center).norm();
                if d <= radius + self.cells[j].radius() {
                    out.push((j, s));
                }
            });
            r += 1;
            if !self.domain.is_periodic() && r > 2 * grid.g + (reach / grid.h) as i64 + 2 {
                break;
            }
        }
        out.sort_unstable();
        out
    }

    /// Query disks must lie in a bounded domain; any disk is allowed on the torus.
    fn check_disk(&self, center: Point, radius: f64) -> Result<()> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidInput(format!("radius {radius} must be positive")));
        }
        if !self.domain.is_periodic() && !self.domain.contains_disk(center, radius) {
            return Err(Error::BallOutsideDomain { cx: center.x, cy: center.y, radius });
        }
        Ok(())
    }

    /// Lebesgue moments of the displacement `u = x - T(x)` over `B_radius(center)`:
    /// `m0` is the area, `(mx, my)` integrates `u`, the second moments `u u^T`.
    pub fn displacement_moments(&self, center: Point, radius: f64) -> Result<Moments> {
        self.check_disk(center, radius)?;
        let mut total = Moments::default();
        for (i, s) in self.pieces_near(center, radius) {
            let cell = &self.cells[i];
            let disk = Disk::new(center - cell.site - self.shift(s), radius);
            total += MonomialTable::polygon_disk(&cell.local, &disk, 2).moments().shifted(disk.center);
        }
        Ok(total)
    }

    /// The lifted cell copies meeting `B_radius(center)` with their constant map values.
    pub fn map_pieces(&self, center: Point, radius: f64) -> Result<Vec<MapPiece>> {
        self.check_disk(center, radius)?;
        Ok(self
            .pieces_near(center, radius)
            .into_iter()
            .map(|(i, s)| {
                let y = self.cells[i].site + self.shift(s);
                MapPiece { poly: self.cells[i].local.iter().map(|u| y + u).collect(), value: y }
            })
            .collect())
    }

    /// `R^-4 * integral over B_{2R}(center) of |T(x) - x|^2 dx`.
    pub fn excess_energy(&self, center: Point, r: f64) -> Result<f64> {
        let m = self.displacement_moments(center, 2.0 * r)?;
        Ok(m.second_about(Point::zeros()) / r.powi(4))
    }

    /// `sup over B_{7R/4}(center) of |T(x) - x|`.
    pub fn linfty_displacement(&self, center: Point, r: f64) -> Result<f64> {
        let radius = 1.75 * r;
        self.check_disk(center, radius)?;
        let mut best: f64 = 0.0;
        for (i, s) in self.pieces_near(center, radius) {
            let cell = &self.cells[i];
            let y = cell.site + self.shift(s);
            let disk = Disk::new(center - y, radius);
            if let Some(d) = farthest_from_origin(&cell.local, &disk) {
                best = best.max(d);
            }
        }
        Ok(best)
    }

    /// Displacement interpolation at time `t` in `[0, 1)`.
    pub fn interpolant(&self, t: f64) -> Result<Interpolant> {
        if !(0.0..1.0).contains(&t) {
            return Err(Error::InvalidInput(format!("interpolation time {t} must lie in [0, 1)")));
        }
        let s = 1.0 - t;
        let cells = self.cells.iter().map(|c| c.local.iter().map(|u| c.site + u * s).collect()).collect();
        let areas = self.cells.iter().map(|c| c.area() * s * s).collect();
        Ok(Interpolant { t, density: self.density / (s * s), cells, areas })
    }

    /// Dual functional `sum_i int_{cell_i(w)} (|x - y_i|^2 - w_i) + sum_i w_i nu_i` at `w`.
    pub fn dual_objective(&self, w: &[f64]) -> Result<f64> {
        if w.len() != self.len() {
            return Err(Error::InvalidInput(format!("{} weights for {} targets", w.len(), self.len())));
        }
        solver::dual_at(self, w)
    }

    pub fn potentials(&self) -> PotentialPair<'_> {
        // Raw psi(0) is -c of the cell copy owning the origin.
        let (j, s) = self.owner(self.domain.reduce(Point::zeros()));
        let off = self.fundamental_offset(Point::zeros());
        let y = self.targets[j] + self.shift(s) + off;
        let c0 = 0.5 * (y.norm_squared() - self.weights[j]);
        PotentialPair { sol: self, psi0: -c0 }
    }

    /// Weights and cost as `key=value` header plus one `x y mass weight` line per target.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "n={} cost={:.16e} cost_bound={:.3e} iterations={} max_residual={:.3e}",
            self.len(),
            self.cost,
            self.cost_bound,
            self.iterations,
            self.max_residual
        );
        for k in 0..self.len() {
            let y = self.targets[k];
            let _ = writeln!(out, "{:.16e} {:.16e} {:.16e} {:.16e}", y.x, y.y, self.masses[k], self.weights[k]);
        }
        out
    }

    /// Cells as polygon lists: one line `i x0 y0 x1 y1 ...` per cell.
    pub fn cells_to_text(&self) -> String {
        let mut out = String::new();
        for (i, c) in self.cells.iter().enumerate() {
            let _ = write!(out, "{i}");
            for v in c.vertices() {
                let _ = write!(out, " {:.10e} {:.10e}", v.x, v.y);
            }
            out.push('\n');
        }
        out
    }
}

/// A convex counter-clockwise polygon on which a map takes the constant `value`.
#[derive(Clone, Debug, PartialEq)]
pub struct MapPiece {
    pub poly: Vec<Point>,
    pub value: Point,
}

impl MapPiece {
    /// Image under `x -> m x + t`, with `value -> n value + v`. Requires `det m > 0`.
    pub fn transformed(&self, m: &Mat2, t: Point, n: &Mat2, v: Point) -> MapPiece {
        MapPiece { poly: self.poly.iter().map(|p| m * p + t).collect(), value: n * self.value + v }
    }
}

/// Moments of `x - T(x)` over `B_radius(center)` for a piecewise constant map.
pub fn piece_displacement_moments(pieces: &[MapPiece], center: Point, radius: f64) -> Moments {
    let mut total = Moments::default();
    for piece in pieces {
        let disk = Disk::new(center - piece.value, radius);
        let local: Vec<Point> = piece.poly.iter().map(|p| p - piece.value).collect();
        total += MonomialTable::polygon_disk(&local, &disk, 2).moments().shifted(disk.center);
    }
    total
}

/// `max |u|` over `poly ∩ disk`, `None` when the intersection is empty.
fn farthest_from_origin(poly: &[Point], disk: &Disk) -> Option<f64> {
    let n = poly.len();
    if n < 3 {
        return None;
    }
    let mut best: Option<f64> = None;
    let mut consider = |x: Point| best = Some(best.map_or(x.norm(), |b: f64| b.max(x.norm())));
    for k in 0..n {
        let a = poly[k];
        if disk.contains(a) {
            consider(a);
        }
        if let Some((s, e)) = clip_segment_to_disk(a, poly[(k + 1) % n], disk) {
            consider(s);
            consider(e);
        }
    }
    // Farthest point of the circle, admissible if it lies in the polygon.
    let c = disk.center;
    let dir = if c.norm() > 0.0 { c / c.norm() } else { pt(1.0, 0.0) };
    let x = c + dir * disk.radius;
    let scale = disk.radius.max(x.norm()).max(1.0);
    let inside = (0..n).all(|k| {
        let p = poly[k];
        let q = poly[(k + 1) % n];
        cross(q - p, x - p) >= -1e-13 * scale * (q - p).norm()
    });
    if inside {
        consider(x);
    }
    best
}

/// Displaced cells `(1 - t) cell_i + t y_i` and the interpolated density on them.
#[derive(Clone, Debug)]
pub struct Interpolant {
    pub t: f64,
    /// Density on the union of the displaced cells.
    pub density: f64,
    pub cells: Vec<Vec<Point>>,
    pub areas: Vec<f64>,
}

impl Interpolant {
    pub fn total_mass(&self) -> f64 {
        self.density * self.areas.iter().sum::<f64>()
    }

    /// Polygon areas of the displaced cells (equal to `areas` off ball domains).
    pub fn polygon_areas(&self) -> Vec<f64> {
        self.cells.iter().map(|c| polygon_area(c)).collect()
    }
}

/// The convex potential `psi` with `T = grad psi`, `psi(0) = 0`, and its conjugate.
#[derive(Clone, Copy, Debug)]
pub struct PotentialPair<'a> {
    sol: &'a TransportSolution,
    psi0: f64,
}

impl PotentialPair<'_> {
    /// `c_i = (|y_i|^2 - w_i) / 2` for a lifted target `y`, before normalisation.
    fn offset(&self, y: Point, j: usize) -> f64 {
        0.5 * (y.norm_squared() - self.sol.weights[j])
    }

    /// The same pair with `k` added to `psi*` (and subtracted from `psi`).
    pub fn with_constant(self, k: f64) -> Self {
        Self { psi0: self.psi0 + k, ..self }
    }

    pub fn psi(&self, x: Point) -> Result<f64> {
        if !(x.x.is_finite() && x.y.is_finite()) {
            return Err(Error::OutsideRegion { x: x.x, y: x.y });
        }
        let off = self.sol.fundamental_offset(x);
        let (j, s) = self.sol.owner(x - off);
        let y = self.sol.targets[j] + self.sol.shift(s) + off;
        Ok(x.dot(&y) - self.offset(y, j) - self.psi0)
    }

    /// Value of `psi*` at the `i`-th target.
    pub fn psi_star_at_target(&self, i: usize) -> Result<f64> {
        let y = *self.sol.targets.get(i).ok_or(Error::IndexOutOfRange { index: i, len: self.sol.len() })?;
        Ok(self.offset(y, i) + self.psi0)
    }

    /// `psi*(y) = sup_x (x . y - psi(x))`, attained at a vertex of a (lifted) cell.
    /// On the torus the region is `|y|_inf <= L`; on bounded domains any finite `y`.
    pub fn psi_star(&self, y: Point) -> Result<f64> {
        Ok(self.psi_star_raw(y)? + self.psi0)
    }

    fn psi_star_raw(&self, y: Point) -> Result<f64> {
        let sol = self.sol;
        if !(y.x.is_finite() && y.y.is_finite()) {
            return Err(Error::OutsideRegion { x: y.x, y: y.y });
        }
        let mut best = f64::NEG_INFINITY;
        let mut eval = |j: usize, s: [i32; 2]| {
            let cell = &sol.cells[j];
            let yj = cell.site + sol.shift(s);
            let c = self.offset(yj, j);
            match sol.domain {
                Domain::Ball { center, radius } => {
                    let disk = Disk::new(pt(center[0], center[1]) - cell.site, radius);
                    if let Some(u) = crate::geometry::support_polygon_disk(&cell.local, &disk, y - yj) {
                        let v = yj + u;
                        best = best.max(v.dot(&y) - (v.dot(&yj) - c));
                    }
                }
                _ => {
                    for u in &cell.local {
                        let v = yj + u;
                        best = best.max(v.dot(&y) - (v.dot(&yj) - c));
                    }
                }
            }
        };
        match sol.domain {
            Domain::Torus { side } => {
                if y.amax() > side {
                    return Err(Error::OutsideRegion { x: y.x, y: y.y });
                }
                // A maximising vertex has every incident target within max_radius of
                // itself, and y in their hull, so candidates lie within 2 max_radius.
                for (j, s) in sol.pieces_near(y, 2.0 * sol.max_radius) {
                    eval(j, s);
                }
            }
            _ => {
                for j in 0..sol.len() {
                    eval(j, [0, 0]);
                }
            }
        }
        Ok(best)
    }

    pub fn second_difference(&self, y: Point, h: Point) -> Result<f64> {
        // The normalising constant never enters, so the result does not depend on it.
        second_difference(|p| self.psi_star_raw(p), y, h)
    }
}

/// `f(y + h) + f(y - h) - 2 f(y)`.
pub fn second_difference(f: impl Fn(Point) -> Result<f64>, y: Point, h: Point) -> Result<f64> {
    let c = f(y)?;
    Ok((f(y + h)? - c) + (f(y - h)? - c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assign::grid_sites;
    use crate::geometry::RngStream;
    use crate::sampler::sample_fixed_n;
    use crate::{solve_semidiscrete, PointConfiguration, SolverSettings};
    use rand::Rng;

    fn solve(domain: Domain, cfg: &PointConfiguration) -> TransportSolution {
        let density = cfg.total_mass() / domain.area();
        solve_semidiscrete(domain, density, cfg, &SolverSettings::default()).unwrap()
    }

    fn random_instance(n: usize, side: f64, periodic: bool, seed: u64) -> (Domain, TransportSolution) {
        let mut cfg = sample_fixed_n(n, side, RngStream::new(seed, 3)).unwrap();
        let domain = if periodic { Domain::torus(side).unwrap() } else { Domain::square(side).unwrap() };
        cfg = cfg.with_domain(domain).unwrap();
        (domain, solve(domain, &cfg))
    }

    /// Power argmin over every site and its 3x3 copies, without the bucket grid.
    fn brute_map(sol: &TransportSolution, x: Point) -> Point {
        let shifts: Vec<[i32; 2]> =
            if sol.domain.is_periodic() { (-1..=1).flat_map(|a| (-1..=1).map(move |b| [a, b])).collect() } else { vec![[0, 0]] };
        let x0 = sol.domain.reduce(x);
        let mut best = (f64::INFINITY, Point::zeros());
        for (j, y) in sol.targets.iter().enumerate() {
            for s in &shifts {
                let yz = y + shift_vec(&sol.domain, *s);
                let v = (x0 - yz).norm_squared() - sol.weights[j];
                if v < best.0 {
                    best = (v, yz);
                }
            }
        }
        best.1 + (x - x0)
    }

    /// Midpoint rule for `int_{B_r(c)} |T - x|^2` on an `k x k` grid over the bounding square.
    fn brute_disk_energy(sol: &TransportSolution, c: Point, r: f64, k: usize) -> f64 {
        let h = 2.0 * r / k as f64;
        let mut sum = 0.0;
        for a in 0..k {
            for b in 0..k {
                let x = c + pt(-r + (a as f64 + 0.5) * h, -r + (b as f64 + 0.5) * h);
                if (x - c).norm() < r {
                    sum += (brute_map(sol, x) - x).norm_squared();
                }
            }
        }
        sum * h * h
    }

    #[test]
    fn single_target_on_unit_torus() {
        let domain = Domain::torus(1.0).unwrap();
        let cfg = PointConfiguration::unit(domain, vec![Point::zeros()]).unwrap();
        let sol = solve(domain, &cfg);
        assert!((sol.cost - 1.0 / 6.0).abs() < 1e-6);
        let (_, bary) = sol.inverse_cell(0).unwrap();
        assert!(bary.norm() < 1e-12);
        for x in [pt(0.3, -0.2), pt(0.49, 0.49), pt(-0.5, 0.1)] {
            assert_eq!(sol.owner_index(x), 0);
        }
        // The lifted map is the nearest lattice point.
        assert!((sol.map_apply(pt(0.8, 0.1)) - pt(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn grid_targets_give_equal_square_cells() {
        for k in [2usize, 4, 8] {
            for periodic in [false, true] {
                let domain = if periodic { Domain::torus(1.0).unwrap() } else { Domain::square(1.0).unwrap() };
                let pts = grid_sites(1.0, k);
                let m = 1.0 / (k * k) as f64;
                let cfg = PointConfiguration::new(domain, pts, vec![m; k * k]).unwrap();
                let sol = solve(domain, &cfg);
                let expect = 1.0 / (6.0 * (k * k) as f64);
                assert!((sol.cost - expect).abs() < 1e-9, "k={k} {} vs {expect}", sol.cost);
                for i in 0..sol.len() {
                    let (_, b) = sol.inverse_cell(i).unwrap();
                    assert!((b - sol.targets[i]).norm() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn masses_match_and_cells_partition() {
        for periodic in [false, true] {
            let (domain, sol) = random_instance(40, 2.0, periodic, 1);
            let total: f64 = sol.cell_masses.iter().sum();
            assert!((total - sol.density * domain.area()).abs() < 1e-9);
            for (g, nu) in sol.cell_masses.iter().zip(&sol.masses) {
                assert!((g - nu).abs() <= 1e-7 * nu + 1e-14);
            }
            assert!(sol.max_residual <= 1e-7);
        }
    }

    #[test]
    fn map_agrees_with_brute_force_and_is_monotone() {
        for periodic in [false, true] {
            let (_, sol) = random_instance(50, 3.0, periodic, 2);
            let mut rng = RngStream::new(2, 9).rng();
            let mut xs = Vec::new();
            for _ in 0..2000 {
                let x = pt(rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5));
                assert!((sol.map_apply(x) - brute_map(&sol, x)).norm() < 1e-12);
                xs.push((x, sol.map_apply(x)));
            }
            for _ in 0..10_000 {
                let (a, ta) = xs[rng.gen_range(0..xs.len())];
                let (b, tb) = xs[rng.gen_range(0..xs.len())];
                assert!((ta - tb).dot(&(a - b)) >= -1e-12);
            }
        }
    }

    #[test]
    fn barycenters_map_to_their_own_target() {
        let (_, sol) = random_instance(30, 1.0, false, 3);
        for i in 0..sol.len() {
            let (poly, b) = sol.inverse_cell(i).unwrap();
            assert_eq!(sol.owner_index(b), i);
            let n = poly.len();
            for k in 0..n {
                assert!(cross(poly[(k + 1) % n] - poly[k], b - poly[k]) > 0.0);
            }
        }
    }

    #[test]
    fn excess_energy_matches_quadrature() {
        for periodic in [false, true] {
            let (_, sol) = random_instance(16, 4.0, periodic, 4);
            let (c, r) = if periodic { (pt(1.3, -1.1), 0.6) } else { (pt(0.2, -0.3), 0.8) };
            let e = sol.excess_energy(c, r).unwrap();
            let q = brute_disk_energy(&sol, c, 2.0 * r, 1200) / r.powi(4);
            assert!((e - q).abs() < 5e-3 * q, "{e} vs {q}");
        }
    }

    #[test]
    fn excess_energy_of_a_fine_grid_is_the_cell_second_moments() {
        let k = 16;
        let domain = Domain::square(1.0).unwrap();
        let cfg = PointConfiguration::new(domain, grid_sites(1.0, k), vec![1.0 / (k * k) as f64; k * k]).unwrap();
        let sol = solve(domain, &cfg);
        let e = sol.excess_energy(pt(0.0, 0.0), 0.2).unwrap();
        let q = brute_disk_energy(&sol, Point::zeros(), 0.4, 1600) / 0.2f64.powi(4);
        assert!((e - q).abs() < 5e-3 * q);
        // Away from the disk boundary every cell contributes h^2 / 6 per unit area.
        let h = 1.0 / k as f64;
        let bulk = std::f64::consts::PI * 0.16 * h * h / 6.0 / 0.2f64.powi(4);
        assert!((e - bulk).abs() < 0.05 * bulk, "{e} vs {bulk}");
    }

    #[test]
    fn excess_energy_translation_invariant() {
        let side = 4.0;
        let cfg = sample_fixed_n(12, side, RngStream::new(5, 0)).unwrap().periodize().unwrap();
        let domain = Domain::torus(side).unwrap();
        let sol = solve(domain, &cfg);
        let z = pt(0.37, -1.21);
        let sol_z = solve(domain, &cfg.shift(z).unwrap());
        let c = pt(0.4, 0.2);
        let a = sol.excess_energy(c + z, 0.7).unwrap();
        let b = sol_z.excess_energy(c, 0.7).unwrap();
        assert!((a - b).abs() < 1e-6 * a.max(1e-12), "{a} vs {b}");
    }

    #[test]
    fn single_target_energy_and_displacement() {
        let domain = Domain::square(4.0).unwrap();
        let y = pt(1.5, 1.5);
        let cfg = PointConfiguration::unit(domain, vec![y]).unwrap();
        let sol = solve(domain, &cfg);
        let c = pt(-0.5, -0.2);
        let r = 0.3;
        let e = sol.excess_energy(c, r).unwrap();
        let rho = 2.0 * r;
        let exact = std::f64::consts::PI * rho * rho * ((y - c).norm_squared() + 0.5 * rho * rho) / r.powi(4);
        assert!((e - exact).abs() < 1e-10 * exact);
        let d = sol.linfty_displacement(c, r).unwrap();
        assert!((d - ((y - c).norm() + 1.75 * r)).abs() < 1e-12);
        assert!(matches!(sol.excess_energy(pt(1.8, 0.0), 0.2), Err(Error::BallOutsideDomain { .. })));
    }

    #[test]
    fn displacement_vanishes_for_identity_limit_and_bounds_the_brute_force() {
        let k = 32;
        let domain = Domain::torus(1.0).unwrap();
        let cfg = PointConfiguration::new(domain, grid_sites(1.0, k), vec![1.0 / (k * k) as f64; k * k]).unwrap();
        let sol = solve(domain, &cfg);
        let d = sol.linfty_displacement(pt(0.1, 0.1), 0.2).unwrap();
        assert!((d - 0.5 * std::f64::consts::SQRT_2 / k as f64).abs() < 1e-9);

        let (_, sol) = random_instance(20, 2.0, true, 6);
        let c = pt(0.3, 0.1);
        let r = 0.4;
        let d = sol.linfty_displacement(c, r).unwrap();
        let mut rng = RngStream::new(6, 1).rng();
        let mut brute: f64 = 0.0;
        for _ in 0..20_000 {
            let rad = 1.75 * r * rng.gen::<f64>().sqrt();
            let th = rng.gen_range(0.0..std::f64::consts::TAU);
            let x = c + pt(rad * th.cos(), rad * th.sin());
            brute = brute.max((brute_map(&sol, x) - x).norm());
        }
        assert!(brute <= d + 1e-12 && brute > 0.97 * d, "{brute} vs {d}");
    }

    #[test]
    fn interpolant_shrinks_cells_and_conserves_mass() {
        let (domain, sol) = random_instance(64, 2.0, false, 7);
        let i0 = sol.interpolant(0.0).unwrap();
        assert_eq!(i0.density, sol.density);
        for (c, p) in sol.cells.iter().zip(&i0.cells) {
            assert_eq!(&c.vertices(), p);
        }
        let half = sol.interpolant(0.5).unwrap();
        assert_eq!(half.density, 4.0 * sol.density);
        for (a, c) in half.areas.iter().zip(&sol.cells) {
            assert!((a - 0.25 * c.area()).abs() < 1e-14);
        }
        let total = sol.density * domain.area();
        for t in [0.0, 0.3, 0.5, 0.9] {
            assert!((sol.interpolant(t).unwrap().total_mass() - total).abs() < 1e-9 * total);
        }
        assert!(sol.interpolant(1.0).is_err());
    }

    #[test]
    fn shrunken_cells_are_disjoint() {
        let (_, sol) = random_instance(64, 2.0, false, 8);
        let it = sol.interpolant(0.9).unwrap();
        for a in 0..it.cells.len() {
            for b in (a + 1)..it.cells.len() {
                // Intersection of convex polygons by clipping one against the other's edges.
                let mut poly = it.cells[a].clone();
                let q = &it.cells[b];
                let mut tags = vec![(); poly.len()];
                for k in 0..q.len() {
                    let e = q[(k + 1) % q.len()] - q[k];
                    let normal = pt(e.y, -e.x);
                    let (p, t) = crate::geometry::clip_halfplane(&poly, &tags, normal, normal.dot(&q[k]), ());
                    poly = p;
                    tags = t;
                }
                assert!(polygon_area(&poly) < 1e-12, "{a} {b}");
            }
        }
    }

    #[test]
    fn weights_maximise_the_dual() {
        for periodic in [false, true] {
            let (domain, sol) = random_instance(25, 2.0, periodic, 9);
            let best = sol.dual_objective(&sol.weights).unwrap();
            assert!((best - sol.cost).abs() < 1e-6 * sol.cost);
            let eps = 1e-4 * domain.diameter().powi(2);
            for i in 0..sol.len() {
                for sign in [-1.0, 1.0] {
                    let mut w = sol.weights.clone();
                    w[i] += sign * eps;
                    assert!(sol.dual_objective(&w).unwrap() <= best + 1e-12);
                }
            }
        }
    }

    #[test]
    fn potentials_are_conjugate() {
        for periodic in [false, true] {
            let (_, sol) = random_instance(30, 2.0, periodic, 10);
            let pp = sol.potentials();
            assert!(pp.psi(Point::zeros()).unwrap().abs() < 1e-14);
            let mut rng = RngStream::new(10, 2).rng();
            for i in 0..sol.len() {
                let yi = sol.targets[i];
                let direct = pp.psi_star(yi).unwrap();
                assert!((direct - pp.psi_star_at_target(i).unwrap()).abs() < 1e-9);
                for _ in 0..20 {
                    let x = pt(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                    assert!(pp.psi(x).unwrap() + direct >= x.dot(&yi) - 1e-9);
                }
                let (_, b) = sol.inverse_cell(i).unwrap();
                assert!((pp.psi(b).unwrap() + direct - b.dot(&yi)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn second_difference_examples() {
        let q = |y: Point| Ok(0.5 * y.norm_squared());
        let h = pt(0.3, -0.7);
        let d = second_difference(q, pt(1.1, 2.0), h).unwrap();
        assert!((d - h.norm_squared()).abs() < 1e-14);

        let (_, sol) = random_instance(30, 2.0, true, 11);
        let pp = sol.potentials();
        let y = pt(0.2, 0.1);
        let a = pp.second_difference(y, h).unwrap();
        let b = pp.with_constant(123.456).second_difference(y, h).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        assert!(a >= -1e-12);
        assert!(matches!(pp.psi_star(pt(2.5, 0.0)), Err(Error::OutsideRegion { .. })));
    }

    #[test]
    fn torus_covariance_of_map_and_second_differences() {
        let side = 8.0;
        let domain = Domain::torus(side).unwrap();
        let cfg = sample_fixed_n(64, side, RngStream::new(12, 0)).unwrap().periodize().unwrap();
        let sol = solve(domain, &cfg);
        let mut rng = RngStream::new(12, 5).rng();
        for _ in 0..5 {
            let z = pt(rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0));
            let sol_z = solve(domain, &cfg.shift(z).unwrap());
            let mut mismatch = 0;
            for _ in 0..1000 {
                let x = pt(rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0));
                if (sol_z.map_apply(x) + z - sol.map_apply(x + z)).norm() > 1e-6 {
                    mismatch += 1;
                }
            }
            assert!(mismatch <= 2, "{mismatch}");
            let (pp, pz) = (sol.potentials(), sol_z.potentials());
            for _ in 0..10 {
                let y = pt(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
                let h = pt(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                let a = pz.second_difference(y, h).unwrap();
                let b = pp.second_difference(y + z, h).unwrap();
                assert!((a - b).abs() < 1e-5, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn coincident_targets_merge() {
        let domain = Domain::square(1.0).unwrap();
        let cfg = PointConfiguration::unit(domain, vec![pt(0.1, 0.1), pt(0.1, 0.1), pt(-0.2, 0.3)]).unwrap();
        let sol = solve(domain, &cfg);
        assert_eq!(sol.len(), 2);
        assert_eq!(sol.target_index.len(), 3);
        assert!((sol.cell_masses.iter().sum::<f64>() - 3.0).abs() < 1e-9);
    }

    #[test]
    fn solver_errors() {
        let domain = Domain::square(1.0).unwrap();
        let cfg = PointConfiguration::unit(domain, vec![pt(0.1, 0.1)]).unwrap();
        let s = SolverSettings::default();
        assert!(matches!(solve_semidiscrete(domain, 2.0, &cfg, &s), Err(Error::MassMismatch { .. })));
        let cfg = PointConfiguration::unit(domain, vec![pt(0.1, 0.1), pt(0.3, 0.2), pt(-0.3, 0.0)]).unwrap();
        let tight = SolverSettings { tol: 1e-15, max_iter: 1, ..s };
        assert!(matches!(solve_semidiscrete(domain, 3.0, &cfg, &tight), Err(Error::NonConvergence { .. })));
    }
}
