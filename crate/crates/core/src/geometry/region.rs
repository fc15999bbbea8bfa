//! Integrals over the intersection of a convex polygon with a disk.
//!
//! Each polygon edge spans a fan triangle with the disk center. The part of
//! that triangle inside the disk is a triangle where the edge is inside and a
//! circular sector where it is outside, so signed sums over edges give exact
//! integrals without tracing the boundary of the intersection.

use std::sync::OnceLock;

use super::polygon::Moments;
use super::{cross, Point};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Disk {
    pub center: Point,
    pub radius: f64,
}

impl Disk {
    pub fn new(center: Point, radius: f64) -> Self {
        Self { center, radius }
    }

    pub fn contains(&self, p: Point) -> bool {
        (p - self.center).norm_squared() <= self.radius * self.radius
    }

    pub fn area(&self) -> f64 {
        std::f64::consts::PI * self.radius * self.radius
    }

    pub fn moments(&self) -> Moments {
        MonomialTable::disk(self.radius, 2).moments().shifted(self.center)
    }
}

/// Integrals of `u^a v^b` for `a + b <= degree`, in coordinates relative to
/// a fixed origin.
#[derive(Clone, Debug, PartialEq)]
pub struct MonomialTable {
    degree: usize,
    vals: Vec<Vec<f64>>,
}

impl MonomialTable {
    pub fn zeros(degree: usize) -> Self {
        Self { degree, vals: (0..=degree).map(|a| vec![0.0; degree + 1 - a]).collect() }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.vals[a][b]
    }

    pub fn add_assign(&mut self, other: &MonomialTable) {
        for a in 0..=self.degree.min(other.degree) {
            for b in 0..=(self.degree.min(other.degree) - a) {
                self.vals[a][b] += other.vals[a][b];
            }
        }
    }

    /// The table in the coordinates `u / rho`.
    pub fn rescaled(&self, rho: f64) -> Self {
        let mut t = self.clone();
        for (a, row) in t.vals.iter_mut().enumerate() {
            for (b, v) in row.iter_mut().enumerate() {
                *v /= rho.powi((a + b) as i32);
            }
        }
        t
    }

    pub fn moments(&self) -> Moments {
        assert!(self.degree >= 2);
        Moments {
            m0: self.get(0, 0),
            mx: self.get(1, 0),
            my: self.get(0, 1),
            mxx: self.get(2, 0),
            mxy: self.get(1, 1),
            myy: self.get(0, 2),
        }
    }

    /// Full disk of radius `r` centred at the origin.
    pub fn disk(r: f64, degree: usize) -> Self {
        let mut t = Self::zeros(degree);
        for a in (0..=degree).step_by(2) {
            for b in (0..=(degree - a)).step_by(2) {
                let (fa, fb) = (a as f64, b as f64);
                let ang = 2.0 * libm::tgamma((fa + 1.0) / 2.0) * libm::tgamma((fb + 1.0) / 2.0)
                    / libm::tgamma((fa + fb + 2.0) / 2.0);
                t.vals[a][b] = r.powi((a + b + 2) as i32) / (fa + fb + 2.0) * ang;
            }
        }
        t
    }

    /// Polygon intersected with the disk; coordinates relative to the disk center.
    pub fn polygon_disk(poly: &[Point], disk: &Disk, degree: usize) -> Self {
        let mut t = Self::zeros(degree);
        let n = poly.len();
        if n < 3 {
            return t;
        }
        let r = disk.radius;
        for k in 0..n {
            let p = poly[k] - disk.center;
            let q = poly[(k + 1) % n] - disk.center;
            let d = q - p;
            match chord_interval(p, d, r) {
                None => t.add_sector(r, p, q),
                Some((s0, s1)) => {
                    let a = p + d * s0;
                    let b = p + d * s1;
                    if s0 > 0.0 {
                        t.add_sector(r, p, a);
                    }
                    t.add_triangle(a, b);
                    if s1 < 1.0 {
                        t.add_sector(r, b, q);
                    }
                }
            }
        }
        t
    }

    /// Polygon alone; coordinates relative to `origin`.
    pub fn polygon(poly: &[Point], origin: Point, degree: usize) -> Self {
        let mut t = Self::zeros(degree);
        let n = poly.len();
        if n < 3 {
            return t;
        }
        for k in 0..n {
            t.add_triangle(poly[k] - origin, poly[(k + 1) % n] - origin);
        }
        t
    }

    /// Signed triangle `(0, p, q)` by Green's theorem.
    fn add_triangle(&mut self, p: Point, q: Point) {
        let deg = self.degree;
        let npts = deg / 2 + 2;
        let (nodes, weights) = gauss_legendre(npts);
        let dy = q.y - p.y;
        let mut xp = vec![0.0; deg + 2];
        let mut yp = vec![0.0; deg + 1];
        for (&s, &w) in nodes.iter().zip(weights) {
            let t = 0.5 * (s + 1.0);
            let x = p.x + t * (q.x - p.x);
            let y = p.y + t * (q.y - p.y);
            powers(x, &mut xp);
            powers(y, &mut yp);
            for a in 0..=deg {
                for b in 0..=(deg - a) {
                    self.vals[a][b] += 0.5 * w * xp[a + 1] * yp[b] * dy / (a as f64 + 1.0);
                }
            }
        }
        // Radial edges 0 -> p and q -> 0 integrate in closed form.
        powers(p.x, &mut xp);
        powers(p.y, &mut yp);
        let mut xq = vec![0.0; deg + 2];
        let mut yq = vec![0.0; deg + 2];
        powers(q.x, &mut xq);
        powers(q.y, &mut yq);
        let mut ypp = vec![0.0; deg + 2];
        powers(p.y, &mut ypp);
        for a in 0..=deg {
            for b in 0..=(deg - a) {
                let c = 1.0 / ((a as f64 + 1.0) * ((a + b) as f64 + 2.0));
                self.vals[a][b] += c * (xp[a + 1] * ypp[b + 1] - xq[a + 1] * yq[b + 1]);
            }
        }
    }

    /// Signed sector of radius `r` between the directions of `p` and `q`.
    fn add_sector(&mut self, r: f64, p: Point, q: Point) {
        let th0 = p.y.atan2(p.x);
        let sweep = cross(p, q).atan2(p.dot(&q));
        if sweep == 0.0 {
            return;
        }
        let deg = self.degree;
        let pieces = ((sweep.abs() / (std::f64::consts::PI / 6.0)).ceil() as usize).max(1);
        let h = sweep / pieces as f64;
        let (nodes, weights) = gauss_legendre(12);
        let mut cp = vec![0.0; deg + 1];
        let mut sp = vec![0.0; deg + 1];
        let mut acc = vec![vec![0.0; deg + 1]; deg + 1];
        for piece in 0..pieces {
            let lo = th0 + h * piece as f64;
            for (&s, &w) in nodes.iter().zip(weights) {
                let th = lo + 0.5 * h * (s + 1.0);
                powers(th.cos(), &mut cp);
                powers(th.sin(), &mut sp);
                for a in 0..=deg {
                    for b in 0..=(deg - a) {
                        acc[a][b] += 0.5 * h * w * cp[a] * sp[b];
                    }
                }
            }
        }
        for a in 0..=deg {
            for b in 0..=(deg - a) {
                let k = (a + b + 2) as f64;
                self.vals[a][b] += r.powi((a + b + 2) as i32) / k * acc[a][b];
            }
        }
    }
}

fn powers(x: f64, out: &mut [f64]) {
    let mut v = 1.0;
    for o in out.iter_mut() {
        *o = v;
        v *= x;
    }
}

/// Parameter interval `[s0, s1]` of `p + s d`, `s` in `[0, 1]`, inside the
/// origin-centred disk of radius `r`.
fn chord_interval(p: Point, d: Point, r: f64) -> Option<(f64, f64)> {
    let a = d.norm_squared();
    if a == 0.0 {
        return None;
    }
    let b = p.dot(&d);
    let c = p.norm_squared() - r * r;
    let disc = b * b - a * c;
    if disc <= 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    // Stable roots of a s^2 + 2 b s + c.
    let qv = -(b + b.signum() * sq);
    let (mut t0, mut t1) = if qv == 0.0 { (-sq / a, sq / a) } else { (qv / a, c / qv) };
    if t0 > t1 {
        std::mem::swap(&mut t0, &mut t1);
    }
    let s0 = t0.max(0.0);
    let s1 = t1.min(1.0);
    (s1 > s0).then_some((s0, s1))
}

pub fn polygon_disk_moments(poly: &[Point], disk: &Disk) -> Moments {
    MonomialTable::polygon_disk(poly, disk, 2).moments().shifted(disk.center)
}

/// The part of segment `a b` inside the disk.
pub fn clip_segment_to_disk(a: Point, b: Point, disk: &Disk) -> Option<(Point, Point)> {
    let p = a - disk.center;
    let d = b - a;
    chord_interval(p, d, disk.radius).map(|(s0, s1)| (a + d * s0, a + d * s1))
}

/// Maximiser of `dir . x` over polygon ∩ disk, if the intersection is non-empty.
pub fn support_polygon_disk(poly: &[Point], disk: &Disk, dir: Point) -> Option<Point> {
    let n = poly.len();
    let mut best: Option<(f64, Point)> = None;
    let mut consider = |x: Point| {
        let v = dir.dot(&x);
        if best.map_or(true, |(bv, _)| v > bv) {
            best = Some((v, x));
        }
    };
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
    let norm = dir.norm();
    if norm > 0.0 {
        let x = disk.center + dir * (disk.radius / norm);
        let scale = disk.radius.max(1.0);
        let inside = (0..n).all(|k| {
            let p = poly[k];
            let q = poly[(k + 1) % n];
            cross(q - p, x - p) >= -1e-13 * scale * (q - p).norm()
        });
        if inside && n >= 3 {
            consider(x);
        }
    }
    best.map(|(_, x)| x)
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, cached for `n <= 32`.
pub fn gauss_legendre(n: usize) -> (&'static [f64], &'static [f64]) {
    static TABLE: OnceLock<Vec<(Vec<f64>, Vec<f64>)>> = OnceLock::new();
    let table = TABLE.get_or_init(|| (0..=32).map(compute_gauss_legendre).collect());
    let (x, w) = &table[n.clamp(1, 32)];
    (x, w)
}

fn compute_gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    if n == 0 {
        return (x, w);
    }
    let nf = n as f64;
    for i in 0..(n + 1) / 2 {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = nf * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}
