//! Laguerre (power) cells by half-plane clipping around each site, with a
//! bucket grid supplying neighbours in rings of increasing distance.

use crate::geometry::{clip_halfplane, polygon_moments, pt, Disk, Domain, Moments, MonomialTable, Point};
use crate::{Error, Result};

/// Label of a cell edge: the domain boundary or the bisector with a site copy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EdgeTag {
    Boundary,
    Site { index: u32, shift: [i32; 2] },
}

/// One power cell in coordinates local to its site.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerCell {
    pub site: Point,
    /// Counter-clockwise vertices of the polygon, relative to `site`. On a ball
    /// domain the cell is this polygon intersected with the ball.
    pub local: Vec<Point>,
    /// `tags[k]` labels the edge from `local[k]` to `local[k + 1]`.
    pub tags: Vec<EdgeTag>,
    /// Moments of the cell region, local coordinates.
    pub moments: Moments,
}

impl PowerCell {
    pub fn area(&self) -> f64 {
        self.moments.m0
    }

    /// Vertices in absolute (lifted) coordinates.
    pub fn vertices(&self) -> Vec<Point> {
        self.local.iter().map(|u| self.site + u).collect()
    }

    pub fn barycenter(&self) -> Option<Point> {
        self.moments.centroid().map(|c| self.site + c)
    }

    /// `max |x - site|` over the polygon.
    pub fn radius(&self) -> f64 {
        self.local.iter().map(|u| u.norm()).fold(0.0, f64::max)
    }

    /// `integral over the cell of |x - site|^2`.
    pub fn second_moment(&self) -> f64 {
        self.moments.second_about(Point::zeros())
    }
}

/// Uniform bucket grid over the square `[lo, lo + extent)^2`.
#[derive(Clone, Debug)]
pub(crate) struct SiteGrid {
    lo: Point,
    pub(crate) h: f64,
    pub(crate) g: i64,
    periodic: Option<f64>,
    buckets: Vec<Vec<u32>>,
}

impl SiteGrid {
    pub(crate) fn new(points: &[Point], lo: Point, extent: f64, periodic: Option<f64>) -> Self {
        let g = ((points.len() as f64 / 2.0).sqrt().ceil() as i64).clamp(1, 1024);
        let h = extent / g as f64;
        let mut buckets = vec![Vec::new(); (g * g) as usize];
        let mut grid = Self { lo, h, g, periodic, buckets: Vec::new() };
        for (k, p) in points.iter().enumerate() {
            let (bx, by) = grid.bucket(*p);
            let (bx, by) = (bx.clamp(0, g - 1), by.clamp(0, g - 1));
            buckets[(bx * g + by) as usize].push(k as u32);
        }
        grid.buckets = buckets;
        grid
    }

    #[inline]
    pub(crate) fn bucket(&self, p: Point) -> (i64, i64) {
        (((p.x - self.lo.x) / self.h).floor() as i64, ((p.y - self.lo.y) / self.h).floor() as i64)
    }

    /// Visit the sites of every bucket at Chebyshev ring distance `r` from `b`,
    /// with the lattice shift that brings the bucket's copy there.
    pub(crate) fn ring(&self, b: (i64, i64), r: i64, mut f: impl FnMut(usize, [i32; 2])) {
        let mut visit = |cx: i64, cy: i64| {
            let (kx, ky, ix, iy) = match self.periodic {
                Some(_) => (cx.div_euclid(self.g), cy.div_euclid(self.g), cx.rem_euclid(self.g), cy.rem_euclid(self.g)),
                None => {
                    if cx < 0 || cy < 0 || cx >= self.g || cy >= self.g {
                        return;
                    }
                    (0, 0, cx, cy)
                }
            };
            for &j in &self.buckets[(ix * self.g + iy) as usize] {
                f(j as usize, [kx as i32, ky as i32]);
            }
        };
        if r == 0 {
            visit(b.0, b.1);
            return;
        }
        for dx in -r..=r {
            visit(b.0 + dx, b.1 - r);
            visit(b.0 + dx, b.1 + r);
        }
        for dy in (-r + 1)..r {
            visit(b.0 - r, b.1 + dy);
            visit(b.0 + r, b.1 + dy);
        }
    }

    /// Rings beyond which no bucket exists (bounded domains only).
    pub(crate) fn max_ring(&self) -> i64 {
        self.g
    }
}

/// Geometry shared by every cell of one diagram.
pub(crate) struct DiagramInput<'a> {
    pub domain: Domain,
    pub sites: &'a [Point],
    pub weights: &'a [f64],
    pub grid: &'a SiteGrid,
}

pub(crate) fn grid_for(domain: &Domain, sites: &[Point]) -> SiteGrid {
    match *domain {
        Domain::Torus { side } => SiteGrid::new(sites, pt(-0.5 * side, -0.5 * side), side, Some(side)),
        _ => {
            // Bounding square of the sites and the domain.
            let (dlo, dhi) = bounding_box(domain);
            let mut lo = dlo;
            let mut hi = dhi;
            for p in sites {
                lo = lo.inf(p);
                hi = hi.sup(p);
            }
            let extent = (hi.x - lo.x).max(hi.y - lo.y) * (1.0 + 1e-9) + 1e-300;
            SiteGrid::new(sites, lo, extent, None)
        }
    }
}

fn bounding_box(domain: &Domain) -> (Point, Point) {
    match *domain {
        Domain::Square { side } | Domain::Torus { side } => {
            (pt(-0.5 * side, -0.5 * side), pt(0.5 * side, 0.5 * side))
        }
        Domain::Ball { center, radius } => (
            pt(center[0] - radius, center[1] - radius),
            pt(center[0] + radius, center[1] + radius),
        ),
    }
}

fn square_local(lo: Point, hi: Point) -> Vec<Point> {
    vec![pt(lo.x, lo.y), pt(hi.x, lo.y), pt(hi.x, hi.y), pt(lo.x, hi.y)]
}

/// Lattice shift vector of a tag shift.
#[inline]
pub(crate) fn shift_vec(domain: &Domain, s: [i32; 2]) -> Point {
    match *domain {
        Domain::Torus { side } => pt(s[0] as f64 * side, s[1] as f64 * side),
        _ => Point::zeros(),
    }
}

/// The cell of site `i`.
pub(crate) fn power_cell(input: &DiagramInput<'_>, i: usize, wmax: f64) -> Result<PowerCell> {
    let y = input.sites[i];
    let wi = input.weights[i];
    let grid = input.grid;
    let (lo, hi) = bounding_box(&input.domain);
    let (mut poly, ball) = match input.domain {
        Domain::Torus { side } => {
            let h = 0.5 * side;
            (square_local(pt(-h, -h), pt(h, h)), None)
        }
        Domain::Square { .. } => (square_local(lo - y, hi - y), None),
        Domain::Ball { center, radius } => {
            (square_local(lo - y, hi - y), Some(Disk::new(pt(center[0], center[1]) - y, radius)))
        }
    };
    let mut tags = vec![EdgeTag::Boundary; 4];
    let b = grid.bucket(y);
    let cap = match input.domain {
        Domain::Torus { .. } => 2 * grid.g + 2,
        _ => grid.max_ring() + 1,
    };
    let mut r = 0i64;
    loop {
        if poly.is_empty() {
            break;
        }
        let mut radius = poly.iter().map(|u| u.norm()).fold(0.0, f64::max);
        if let Some(d) = &ball {
            radius = radius.min(d.center.norm() + d.radius);
        }
        if r >= 1 {
            let reach = radius + (radius * radius + wmax - wi).max(0.0).sqrt();
            if (r - 1) as f64 * grid.h >= reach {
                break;
            }
            if r > cap {
                if matches!(input.domain, Domain::Torus { .. }) {
                    return Err(Error::CellTooLarge { index: i });
                }
                break;
            }
        }
        grid.ring(b, r, |j, s| {
            if j == i && s == [0, 0] {
                return;
            }
            let q = input.sites[j] + shift_vec(&input.domain, s) - y;
            let normal = q * 2.0;
            let offset = q.norm_squared() + wi - input.weights[j];
            // The disk of radius `radius` already lies in the half-plane.
            if normal.norm() * radius <= offset || poly.is_empty() {
                return;
            }
            let tag = EdgeTag::Site { index: j as u32, shift: s };
            let (nv, nt) = clip_halfplane(&poly, &tags, normal, offset, tag);
            poly = nv;
            tags = nt;
            radius = poly.iter().map(|u| u.norm()).fold(0.0, f64::max);
            if let Some(d) = &ball {
                radius = radius.min(d.center.norm() + d.radius);
            }
        });
        r += 1;
    }
    let moments = match &ball {
        None => polygon_moments(&poly),
        Some(d) => MonomialTable::polygon_disk(&poly, d, 2).moments().shifted(d.center),
    };
    Ok(PowerCell { site: y, local: poly, tags, moments })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::RngStream;
    use rand::Rng;

    fn brute_owner(sites: &[Point], w: &[f64], x: Point) -> usize {
        (0..sites.len())
            .min_by(|&a, &b| {
                let pa = (x - sites[a]).norm_squared() - w[a];
                let pb = (x - sites[b]).norm_squared() - w[b];
                pa.total_cmp(&pb)
            })
            .unwrap()
    }

    #[test]
    fn cells_partition_square_and_match_brute_force() {
        let mut rng = RngStream::new(8, 0).rng();
        let n = 50;
        let sites: Vec<Point> = (0..n).map(|_| pt(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..0.05)).collect();
        let domain = Domain::square(2.0).unwrap();
        let grid = grid_for(&domain, &sites);
        let input = DiagramInput { domain, sites: &sites, weights: &w, grid: &grid };
        let wmax = w.iter().cloned().fold(f64::MIN, f64::max);
        let cells: Vec<PowerCell> = (0..n).map(|i| power_cell(&input, i, wmax).unwrap()).collect();
        let total: f64 = cells.iter().map(|c| c.area()).sum();
        assert!((total - 4.0).abs() < 1e-12);
        // Barycenters of non-empty cells belong to their own cell.
        for (i, c) in cells.iter().enumerate() {
            if let Some(b) = c.barycenter() {
                assert_eq!(brute_owner(&sites, &w, b), i);
            }
        }
        // Random samples: area fractions agree with brute-force ownership.
        let mut counts = vec![0usize; n];
        let samples = 200_000;
        for _ in 0..samples {
            let x = pt(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            counts[brute_owner(&sites, &w, x)] += 1;
        }
        for i in 0..n {
            let frac = counts[i] as f64 / samples as f64 * 4.0;
            assert!((frac - cells[i].area()).abs() < 0.01, "cell {i}: {} vs {}", frac, cells[i].area());
        }
    }

    #[test]
    fn torus_cells_tile_the_torus() {
        let mut rng = RngStream::new(9, 0).rng();
        let n = 40;
        let side = 3.0;
        let sites: Vec<Point> =
            (0..n).map(|_| pt(rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5))).collect();
        let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..0.1)).collect();
        let domain = Domain::torus(side).unwrap();
        let grid = grid_for(&domain, &sites);
        let input = DiagramInput { domain, sites: &sites, weights: &w, grid: &grid };
        let cells: Vec<PowerCell> = (0..n).map(|i| power_cell(&input, i, 0.1).unwrap()).collect();
        let total: f64 = cells.iter().map(|c| c.area()).sum();
        assert!((total - 9.0).abs() < 1e-12);
        // Neighbour relation is symmetric with opposite shifts.
        for (i, c) in cells.iter().enumerate() {
            for t in &c.tags {
                if let EdgeTag::Site { index, shift } = *t {
                    let back = EdgeTag::Site { index: i as u32, shift: [-shift[0], -shift[1]] };
                    assert!(cells[index as usize].tags.contains(&back));
                }
            }
        }
    }

    #[test]
    fn single_site_on_torus_owns_everything() {
        let sites = [pt(0.2, -0.1)];
        let domain = Domain::torus(1.0).unwrap();
        let grid = grid_for(&domain, &sites);
        let input = DiagramInput { domain, sites: &sites, weights: &[0.0], grid: &grid };
        let c = power_cell(&input, 0, 0.0).unwrap();
        assert!((c.area() - 1.0).abs() < 1e-15);
        assert!((c.second_moment() - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn ball_domain_cells() {
        let sites = [pt(-0.5, 0.0), pt(0.5, 0.0)];
        let domain = Domain::ball(pt(0.0, 0.0), 1.0).unwrap();
        let grid = grid_for(&domain, &sites);
        let input = DiagramInput { domain, sites: &sites, weights: &[0.0, 0.0], grid: &grid };
        let a = power_cell(&input, 0, 0.0).unwrap();
        let b = power_cell(&input, 1, 0.0).unwrap();
        let half = std::f64::consts::PI / 2.0;
        assert!((a.area() - half).abs() < 1e-13 && (b.area() - half).abs() < 1e-13);
    }
}
