//! Point configurations: Poisson and fixed-count sampling, restriction to
//! centred sub-squares, the shift action and periodisation.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{pt, reduce_coord, Domain, Point, RngStream};
use crate::{Error, Result};

/// A finite weighted Dirac cloud in a square or torus.
///
/// Points are kept sorted lexicographically so that equality is canonical.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointConfiguration {
    domain: Domain,
    points: Vec<Point>,
    masses: Vec<f64>,
}

impl PointConfiguration {
    pub fn new(domain: Domain, points: Vec<Point>, masses: Vec<f64>) -> Result<Self> {
        if points.len() != masses.len() {
            return Err(Error::InvalidInput(format!(
                "{} points but {} masses",
                points.len(),
                masses.len()
            )));
        }
        if let Domain::Ball { .. } = domain {
            return Err(Error::InvalidInput("configurations live on squares or tori".into()));
        }
        let mut pairs: Vec<(Point, f64)> = Vec::with_capacity(points.len());
        for (p, m) in points.into_iter().zip(masses) {
            if !(m > 0.0 && m.is_finite()) {
                return Err(Error::InvalidInput(format!("mass {m} must be positive")));
            }
            if !p.x.is_finite() || !p.y.is_finite() {
                return Err(Error::InvalidInput("non-finite point".into()));
            }
            let p = domain.reduce(p);
            if !domain.contains(p) {
                return Err(Error::InvalidInput(format!("point ({}, {}) outside the domain", p.x, p.y)));
            }
            pairs.push((p, m));
        }
        pairs.sort_by(|a, b| lex(&a.0, &b.0));
        let (points, masses) = pairs.into_iter().unzip();
        Ok(Self { domain, points, masses })
    }

    /// Unit masses.
    pub fn unit(domain: Domain, points: Vec<Point>) -> Result<Self> {
        let masses = vec![1.0; points.len()];
        Self::new(domain, points, masses)
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn side(&self) -> f64 {
        self.domain.side()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_periodic(&self) -> bool {
        self.domain.is_periodic()
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// Same points and masses on a different domain.
    pub fn with_domain(&self, domain: Domain) -> Result<Self> {
        Self::new(domain, self.points.clone(), self.masses.clone())
    }

    pub fn with_masses(&self, masses: Vec<f64>) -> Result<Self> {
        Self::new(self.domain, self.points.clone(), masses)
    }

    /// Points with both coordinates in `[-ell/2, ell/2)`, on the square `Q_ell`.
    pub fn restrict(&self, ell: f64) -> Result<Self> {
        if !(ell > 0.0) || ell > self.side() * (1.0 + 1e-12) {
            return Err(Error::InvalidInput(format!("window {ell} exceeds side {}", self.side())));
        }
        let h = 0.5 * ell;
        let (points, masses): (Vec<Point>, Vec<f64>) = self
            .points
            .iter()
            .zip(&self.masses)
            .filter(|(p, _)| p.x >= -h && p.x < h && p.y >= -h && p.y < h)
            .map(|(p, m)| (*p, *m))
            .unzip();
        Ok(Self { domain: Domain::Square { side: ell }, points, masses }.sorted())
    }

    /// The shift action: every point `y` becomes `y - z`, reduced mod the period.
    pub fn shift(&self, z: Point) -> Result<Self> {
        if !self.is_periodic() {
            return Err(Error::NotPeriodic);
        }
        let points = self.points.iter().map(|p| self.domain.reduce(p - z)).collect();
        Ok(Self { domain: self.domain, points, masses: self.masses.clone() }.sorted())
    }

    /// The periodic extension of a configuration on a square.
    pub fn periodize(&self) -> Result<Self> {
        match self.domain {
            Domain::Square { side } | Domain::Torus { side } => {
                Ok(Self { domain: Domain::Torus { side }, ..self.clone() })
            }
            Domain::Ball { .. } => Err(Error::InvalidInput("cannot periodize a ball".into())),
        }
    }

    /// Mass in the half-open rectangle `[lo, hi)`, seeing wrapped copies on the torus.
    pub fn mass_in_rect(&self, lo: Point, hi: Point) -> f64 {
        self.points
            .iter()
            .zip(&self.masses)
            .filter(|(p, _)| self.rect_hits(p, lo, hi))
            .map(|(_, m)| m)
            .sum()
    }

    pub fn count_in_rect(&self, lo: Point, hi: Point) -> usize {
        self.points.iter().filter(|p| self.rect_hits(p, lo, hi)).count()
    }

    /// Number of points within distance `r` of `c`, torus metric when periodic.
    pub fn count_in_disk(&self, c: Point, r: f64) -> usize {
        let side = self.side();
        self.points
            .iter()
            .filter(|p| {
                let d = if self.is_periodic() {
                    crate::geometry::dist_per(**p, c, side)
                } else {
                    (*p - c).norm()
                };
                d <= r
            })
            .count()
    }

    fn rect_hits(&self, p: &Point, lo: Point, hi: Point) -> bool {
        let inside = |q: Point| q.x >= lo.x && q.x < hi.x && q.y >= lo.y && q.y < hi.y;
        if !self.is_periodic() {
            return inside(*p);
        }
        let side = self.side();
        // Copies p + k side landing in [lo, hi); the rectangle may be wider than a period.
        let kx0 = ((lo.x - p.x) / side).ceil() as i64;
        let kx1 = ((hi.x - p.x) / side).ceil() as i64;
        let ky0 = ((lo.y - p.y) / side).ceil() as i64;
        let ky1 = ((hi.y - p.y) / side).ceil() as i64;
        (kx0..kx1).any(|kx| {
            (ky0..ky1).any(|ky| inside(pt(p.x + kx as f64 * side, p.y + ky as f64 * side)))
        })
    }

    /// Minimal `|y|` over the support (Euclidean norm of the stored representative).
    pub fn nearest_to_origin(&self) -> Option<(usize, Point)> {
        self.points
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.norm_squared().total_cmp(&b.1.norm_squared()).then_with(|| lex(a.1, b.1)))
            .map(|(i, p)| (i, *p))
    }

    fn sorted(mut self) -> Self {
        let mut idx: Vec<usize> = (0..self.points.len()).collect();
        idx.sort_by(|&a, &b| lex(&self.points[a], &self.points[b]));
        self.points = idx.iter().map(|&i| self.points[i]).collect();
        self.masses = idx.iter().map(|&i| self.masses[i]).collect();
        self
    }

    /// Text serialisation: a header `L=<side> periodic=<0|1> n=<count>` and one
    /// `x y mass` line per point with 17 significant digits.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(64 + 72 * self.len());
        let _ = writeln!(s, "L={} periodic={} n={}", self.side(), u8::from(self.is_periodic()), self.len());
        for (p, m) in self.points.iter().zip(&self.masses) {
            let _ = writeln!(s, "{:.16e} {:.16e} {:.16e}", p.x, p.y, m);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(Error::Parse { line: 1, message: "missing header".into() })?;
        let mut side = None;
        let mut periodic = None;
        let mut count = None;
        for field in header.split_whitespace() {
            let (k, v) = field
                .split_once('=')
                .ok_or_else(|| Error::Parse { line: 1, message: format!("bad header field {field:?}") })?;
            let bad = |e: &dyn std::fmt::Display| Error::Parse { line: 1, message: format!("{k}: {e}") };
            match k {
                "L" => side = Some(v.parse::<f64>().map_err(|e| bad(&e))?),
                "periodic" => {
                    periodic = Some(match v {
                        "0" => false,
                        "1" => true,
                        _ => return Err(bad(&"expected 0 or 1")),
                    })
                }
                "n" => count = Some(v.parse::<usize>().map_err(|e| bad(&e))?),
                _ => return Err(bad(&"unknown header key")),
            }
        }
        let (side, periodic, count) = match (side, periodic, count) {
            (Some(a), Some(b), Some(c)) => (a, b, c),
            _ => return Err(Error::Parse { line: 1, message: "header needs L, periodic and n".into() }),
        };
        let domain = if periodic { Domain::torus(side)? } else { Domain::square(side)? };
        let mut points = Vec::with_capacity(count);
        let mut masses = Vec::with_capacity(count);
        for (no, line) in lines {
            let vals: Vec<&str> = line.split_whitespace().collect();
            if vals.len() != 3 {
                return Err(Error::Parse { line: no + 1, message: "expected `x y mass`".into() });
            }
            let mut num = [0.0; 3];
            for (slot, v) in num.iter_mut().zip(&vals) {
                *slot = v.parse().map_err(|e| Error::Parse { line: no + 1, message: format!("{e}") })?;
            }
            points.push(pt(num[0], num[1]));
            masses.push(num[2]);
        }
        if points.len() != count {
            return Err(Error::Parse {
                line: 1,
                message: format!("header announces {count} points, found {}", points.len()),
            });
        }
        Self::new(domain, points, masses)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

fn lex(a: &Point, b: &Point) -> std::cmp::Ordering {
    a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y))
}

/// Poisson variate: inversion for small means, PTRS transformed rejection above.
pub fn poisson_count<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    if lambda <= 30.0 {
        let u: f64 = rng.gen();
        let mut p = (-lambda).exp();
        let mut cdf = p;
        let mut k = 0u64;
        while u > cdf {
            k += 1;
            p *= lambda / k as f64;
            cdf += p;
            if p < 1e-300 && cdf >= 1.0 - 1e-16 {
                break;
            }
        }
        return k;
    }
    let slam = lambda.sqrt();
    let loglam = lambda.ln();
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u: f64 = rng.gen::<f64>() - 0.5;
        let v: f64 = rng.gen();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + lambda + 0.43).floor();
        if us >= 0.07 && v <= vr {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        if v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln() <= -lambda + k * loglam - libm::lgamma(k + 1.0) {
            return k as u64;
        }
    }
}

fn uniform_points<R: Rng + ?Sized>(n: usize, side: f64, rng: &mut R) -> Vec<Point> {
    (0..n)
        .map(|_| {
            let x = (rng.gen::<f64>() - 0.5) * side;
            let y = (rng.gen::<f64>() - 0.5) * side;
            pt(reduce_coord(x, side), reduce_coord(y, side))
        })
        .collect()
}

/// Unit-intensity Poisson process on the square `Q_side`.
pub fn sample_poisson(side: f64, stream: RngStream) -> Result<PointConfiguration> {
    let domain = Domain::square(side)?;
    let mut rng = stream.rng();
    let n = poisson_count(side * side, &mut rng) as usize;
    let points = uniform_points(n, side, &mut rng);
    PointConfiguration::unit(domain, points)
}

/// Exactly `n` iid uniform points on the square `Q_side`, unit masses.
pub fn sample_fixed_n(n: usize, side: f64, stream: RngStream) -> Result<PointConfiguration> {
    if n == 0 {
        return Err(Error::InvalidInput("n must be at least 1".into()));
    }
    let domain = Domain::square(side)?;
    let mut rng = stream.rng();
    let points = uniform_points(n, side, &mut rng);
    PointConfiguration::unit(domain, points)
}

/// Whether `side` is a power of two, the setting of the dyadic theory.
pub fn is_dyadic(side: f64) -> bool {
    side > 0.0 && side.log2().fract() == 0.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let mu = sample_poisson(8.0, RngStream::new(1, 0)).unwrap();
        let text = mu.to_text();
        assert!(text.starts_with("L=8 periodic=0 n="));
        let back = PointConfiguration::from_text(&text).unwrap();
        assert_eq!(back, mu);
        assert_eq!(back.to_text(), text);
        let per = mu.periodize().unwrap();
        assert!(per.to_text().starts_with("L=8 periodic=1"));
        assert_eq!(PointConfiguration::from_text(&per.to_text()).unwrap(), per);
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = sample_poisson(16.0, RngStream::new(42, 3)).unwrap().to_text();
        let b = sample_poisson(16.0, RngStream::new(42, 3)).unwrap().to_text();
        let c = sample_poisson(16.0, RngStream::new(42, 4)).unwrap().to_text();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn fixed_n_counts() {
        assert_eq!(sample_fixed_n(4096, 1.0, RngStream::new(0, 0)).unwrap().len(), 4096);
        assert!(sample_fixed_n(0, 1.0, RngStream::new(0, 0)).is_err());
    }

    #[test]
    fn restrict_examples() {
        let mu = sample_poisson(8.0, RngStream::new(2, 0)).unwrap();
        assert_eq!(mu.restrict(8.0).unwrap().points(), mu.points());
        let one = PointConfiguration::unit(Domain::square(10.0).unwrap(), vec![pt(4.0, 0.0)]).unwrap();
        assert!(one.restrict(5.0).unwrap().is_empty());
        assert_eq!(one.restrict(8.0000001).unwrap().len(), 1);
    }

    #[test]
    fn shift_requires_periodic() {
        let mu = sample_poisson(4.0, RngStream::new(3, 0)).unwrap();
        assert!(matches!(mu.shift(pt(1.0, 0.0)), Err(Error::NotPeriodic)));
        let per = mu.periodize().unwrap();
        assert_eq!(per.shift(pt(0.0, 0.0)).unwrap(), per);
    }

    #[test]
    fn seam_window_sees_wrapped_point() {
        let mu = PointConfiguration::unit(Domain::square(4.0).unwrap(), vec![pt(-1.9, 0.0)]).unwrap();
        let lo = pt(1.5, -1.0);
        let hi = pt(2.5, 1.0);
        assert_eq!(mu.count_in_rect(lo, hi), 0);
        assert_eq!(mu.periodize().unwrap().count_in_rect(lo, hi), 1);
    }

    #[test]
    fn parse_errors() {
        assert!(PointConfiguration::from_text("").is_err());
        assert!(PointConfiguration::from_text("L=1 periodic=0 n=2\n0 0 1\n").is_err());
        assert!(PointConfiguration::from_text("L=1 periodic=2 n=0\n").is_err());
        assert!(PointConfiguration::from_text("L=1 periodic=0 n=1\n0 0 -1\n").is_err());
        assert!(PointConfiguration::from_text("L=1 periodic=0 n=1\n0.7 0 1\n").is_err());
    }

    #[test]
    fn inversion_matches_pmf() {
        let lambda = 4.0;
        let mut rng = RngStream::new(9, 0).rng();
        let trials = 200_000;
        let mut hist = [0usize; 20];
        for _ in 0..trials {
            let k = poisson_count(lambda, &mut rng) as usize;
            hist[k.min(19)] += 1;
        }
        let mut chi2 = 0.0;
        for (k, &h) in hist.iter().enumerate().take(14) {
            let p = (-lambda + k as f64 * f64::ln(lambda) - libm::lgamma(k as f64 + 1.0)).exp();
            let e = p * trials as f64;
            chi2 += (h as f64 - e).powi(2) / e;
        }
        // 13 degrees of freedom; the 0.999 quantile is about 34.5.
        assert!(chi2 < 34.5, "chi2 = {chi2}");
    }

    #[test]
    fn ptrs_matches_pmf() {
        for &lambda in &[31.0, 256.0, 4096.0] {
            let mut rng = RngStream::new(10, lambda as u64).rng();
            let trials = 100_000;
            let sd = f64::sqrt(lambda);
            // Bins of width sd/2 over +-3 sd.
            let nb = 12;
            let mut hist = vec![0usize; nb + 2];
            let lo = lambda - 3.0 * sd;
            let width = sd / 2.0;
            let bin = |k: f64| -> usize {
                if k < lo {
                    0
                } else {
                    (((k - lo) / width).floor() as usize + 1).min(nb + 1)
                }
            };
            for _ in 0..trials {
                hist[bin(poisson_count(lambda, &mut rng) as f64)] += 1;
            }
            let mut want = vec![0.0; nb + 2];
            let kmax = (lambda + 20.0 * sd) as u64;
            for k in 0..=kmax {
                let kf = k as f64;
                want[bin(kf)] += (-lambda + kf * lambda.ln() - libm::lgamma(kf + 1.0)).exp();
            }
            let chi2: f64 = hist
                .iter()
                .zip(&want)
                .filter(|(_, &w)| w * trials as f64 > 5.0)
                .map(|(&h, &w)| {
                    let e = w * trials as f64;
                    (h as f64 - e).powi(2) / e
                })
                .sum();
            assert!(chi2 < 40.0, "lambda {lambda}: chi2 = {chi2}");
        }
    }

    proptest! {
        #[test]
        fn shift_is_a_group_action(seed in 0u64..1000, zx in -20.0..20.0f64, zy in -20.0..20.0f64) {
            let mu = sample_poisson(4.0, RngStream::new(seed, 0)).unwrap().periodize().unwrap();
            let z = pt(zx, zy);
            let back = mu.shift(z).unwrap().shift(-z).unwrap();
            prop_assert_eq!(back.len(), mu.len());
            for (a, b) in back.points().iter().zip(mu.points()) {
                prop_assert!(crate::geometry::dist_per(*a, *b, 4.0) < 1e-12);
            }
        }

        #[test]
        fn shifted_window_counts(seed in 0u64..1000, zx in -3.0..3.0f64, zy in -3.0..3.0f64,
                                 ax in -3.0..3.0f64, ay in -3.0..3.0f64, w in 0.1..6.0f64, h in 0.1..6.0f64) {
            let mu = sample_poisson(4.0, RngStream::new(seed, 1)).unwrap().periodize().unwrap();
            let z = pt(zx, zy);
            let lo = pt(ax, ay);
            let hi = pt(ax + w, ay + h);
            let shifted = mu.shift(z).unwrap();
            prop_assert_eq!(shifted.count_in_rect(lo, hi), mu.count_in_rect(lo + z, hi + z));
        }
    }
}
