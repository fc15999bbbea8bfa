//! Domains, the flat-torus metric, dyadic scale ladders and seeded random
//! streams. Everything here is immutable once built.

mod polygon;
mod region;

pub use polygon::{clip_halfplane, polygon_area, polygon_moments, Moments};
pub use region::{
    clip_segment_to_disk, gauss_legendre, polygon_disk_moments, support_polygon_disk, Disk,
    MonomialTable,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub type Point = nalgebra::Vector2<f64>;
pub type Mat2 = nalgebra::Matrix2<f64>;

#[inline]
pub fn pt(x: f64, y: f64) -> Point {
    Point::new(x, y)
}

#[inline]
pub(crate) fn cross(a: Point, b: Point) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Reduce a coordinate to `[-side/2, side/2)`.
#[inline]
pub fn reduce_coord(v: f64, side: f64) -> f64 {
    let half = 0.5 * side;
    let mut r = (v + half).rem_euclid(side) - half;
    if r >= half {
        r -= side;
    }
    if r < -half {
        r = -half;
    }
    r
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Domain {
    /// The square `[-side/2, side/2)^2`.
    Square { side: f64 },
    Ball { center: [f64; 2], radius: f64 },
    /// The flat torus with fundamental domain `[-side/2, side/2)^2`.
    Torus { side: f64 },
}

impl Domain {
    pub fn square(side: f64) -> Result<Self> {
        check_length(side, "side")?;
        Ok(Domain::Square { side })
    }

    pub fn torus(side: f64) -> Result<Self> {
        check_length(side, "side")?;
        Ok(Domain::Torus { side })
    }

    pub fn ball(center: Point, radius: f64) -> Result<Self> {
        check_length(radius, "radius")?;
        if !center.x.is_finite() || !center.y.is_finite() {
            return Err(Error::InvalidInput("ball center must be finite".into()));
        }
        Ok(Domain::Ball { center: [center.x, center.y], radius })
    }

    pub fn area(&self) -> f64 {
        match *self {
            Domain::Square { side } | Domain::Torus { side } => side * side,
            Domain::Ball { radius, .. } => std::f64::consts::PI * radius * radius,
        }
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self, Domain::Torus { .. })
    }

    /// Side length for squares and tori, diameter for balls.
    pub fn side(&self) -> f64 {
        match *self {
            Domain::Square { side } | Domain::Torus { side } => side,
            Domain::Ball { radius, .. } => 2.0 * radius,
        }
    }

    pub fn diameter(&self) -> f64 {
        match *self {
            Domain::Square { side } => side * std::f64::consts::SQRT_2,
            Domain::Torus { side } => side * std::f64::consts::FRAC_1_SQRT_2,
            Domain::Ball { radius, .. } => 2.0 * radius,
        }
    }

    pub fn center(&self) -> Point {
        match *self {
            Domain::Ball { center, .. } => pt(center[0], center[1]),
            _ => Point::zeros(),
        }
    }

    /// Membership in the fundamental region (half-open for squares and tori).
    pub fn contains(&self, p: Point) -> bool {
        match *self {
            Domain::Square { side } | Domain::Torus { side } => {
                let h = 0.5 * side;
                p.x >= -h && p.x < h && p.y >= -h && p.y < h
            }
            Domain::Ball { center, radius } => {
                let d = p - pt(center[0], center[1]);
                d.norm_squared() <= radius * radius
            }
        }
    }

    /// Canonical representative: reduced to the fundamental domain on the
    /// torus, unchanged otherwise.
    pub fn reduce(&self, p: Point) -> Point {
        match *self {
            Domain::Torus { side } => pt(reduce_coord(p.x, side), reduce_coord(p.y, side)),
            _ => p,
        }
    }

    /// Does the closed disk `B_radius(center)` fit inside the domain?
    pub fn contains_disk(&self, center: Point, radius: f64) -> bool {
        let slack = 1e-12 * self.side();
        match *self {
            Domain::Torus { .. } => true,
            Domain::Square { side } => {
                let h = 0.5 * side + slack;
                center.x - radius >= -h
                    && center.x + radius <= h
                    && center.y - radius >= -h
                    && center.y + radius <= h
            }
            Domain::Ball { center: c, radius: r } => {
                (center - pt(c[0], c[1])).norm() + radius <= r + slack
            }
        }
    }
}

fn check_length(v: f64, what: &str) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{what} must be positive and finite, got {v}")))
    }
}

/// Metric of the flat torus of side `side`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PerMetric {
    pub side: f64,
}

impl PerMetric {
    pub fn new(side: f64) -> Result<Self> {
        check_length(side, "side")?;
        Ok(Self { side })
    }

    /// Minimal-image difference `x - y + z` over lattice shifts `z`.
    #[inline]
    pub fn delta(&self, x: Point, y: Point) -> Point {
        let d = x - y;
        pt(d.x - self.side * (d.x / self.side).round(), d.y - self.side * (d.y / self.side).round())
    }

    #[inline]
    pub fn dist(&self, x: Point, y: Point) -> f64 {
        self.delta(x, y).norm()
    }

    #[inline]
    pub fn dist_sq(&self, x: Point, y: Point) -> f64 {
        self.delta(x, y).norm_squared()
    }
}

/// Torus distance `min_z |x - y + z|` over `z` in `(side Z)^2`.
#[inline]
pub fn dist_per(x: Point, y: Point, side: f64) -> f64 {
    PerMetric { side }.dist(x, y)
}

/// Increasing geometric sequence of scales with a fixed ratio.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DyadicLadder {
    scales: Vec<f64>,
    ratio: f64,
}

impl DyadicLadder {
    /// All `floor * ratio^k` up to `ceiling`; `ratio` must be a power of two.
    pub fn new(floor: f64, ceiling: f64, ratio: f64) -> Result<Self> {
        if !(floor > 0.0) || !ceiling.is_finite() {
            return Err(Error::InvalidInput(format!("bad ladder bounds {floor}..{ceiling}")));
        }
        if floor > ceiling {
            return Err(Error::EmptyLadder { floor, ceiling });
        }
        let exp = ratio.log2();
        if !(ratio > 1.0) || (exp - exp.round()).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!("ratio {ratio} is not a power of two")));
        }
        let mut scales = vec![floor];
        loop {
            let next = scales[scales.len() - 1] * ratio;
            if next > ceiling * (1.0 + 1e-12) {
                break;
            }
            scales.push(next);
        }
        Ok(Self { scales, ratio })
    }

    /// Standard dyadic ladder `2, 4, ..., side` (the ceiling is included when dyadic).
    pub fn dyadic(side: f64) -> Result<Self> {
        Self::new(2.0, side, 2.0)
    }

    /// Scales `theta^k * top` for `k = 0, 1, ...` down to `bottom`, stored increasing.
    pub fn descending(top: f64, theta: f64, bottom: f64) -> Result<Self> {
        if !(theta > 0.0 && theta < 1.0) {
            return Err(Error::InvalidInput(format!("theta {theta} must lie in (0, 1)")));
        }
        if bottom > top {
            return Err(Error::EmptyLadder { floor: bottom, ceiling: top });
        }
        let mut scales = vec![top];
        loop {
            let next = scales[scales.len() - 1] * theta;
            if next < bottom * (1.0 - 1e-12) {
                break;
            }
            scales.push(next);
        }
        scales.reverse();
        Ok(Self { scales, ratio: 1.0 / theta })
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    pub fn floor(&self) -> f64 {
        self.scales[0]
    }

    pub fn ceiling(&self) -> f64 {
        self.scales[self.scales.len() - 1]
    }

    pub fn len(&self) -> usize {
        self.scales.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scales.is_empty()
    }
}

/// A reproducible random source identified by `(seed, stream)`.
///
/// Each worker owns its own stream; two streams with the same identifiers
/// produce bit-identical draws.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }

    /// A different stream of the same seed.
    pub fn substream(&self, offset: u64) -> Self {
        Self { seed: self.seed, stream: self.stream.wrapping_add(offset.wrapping_mul(0x9E37_79B9_7F4A_7C15)) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn dist_per_examples() {
        assert_eq!(dist_per(pt(0.0, 0.0), pt(0.0, 0.0), 1.0), 0.0);
        assert!((dist_per(pt(0.0, 0.0), pt(0.9, 0.0), 1.0) - 0.1).abs() < 1e-15);
        assert!((dist_per(pt(0.0, 0.0), pt(0.5, 0.5), 1.0) - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn dist_per_unreduced_inputs() {
        let d = dist_per(pt(3.2, -7.1), pt(0.2, 0.0), 1.0);
        assert!((d - 0.1).abs() < 1e-12);
    }

    #[test]
    fn ladder_examples() {
        assert_eq!(DyadicLadder::new(2.0, 16.0, 2.0).unwrap().scales(), &[2.0, 4.0, 8.0, 16.0]);
        assert_eq!(DyadicLadder::new(16.0, 16.0, 2.0).unwrap().scales(), &[16.0]);
        assert!(matches!(DyadicLadder::new(3.0, 2.0, 2.0), Err(Error::EmptyLadder { .. })));
        assert!(DyadicLadder::new(1.0, 8.0, 3.0).is_err());
        assert_eq!(DyadicLadder::new(1.0, 64.0, 4.0).unwrap().scales(), &[1.0, 4.0, 16.0, 64.0]);
    }

    #[test]
    fn descending_ladder() {
        let l = DyadicLadder::descending(32.0, 0.25, 2.0).unwrap();
        assert_eq!(l.scales(), &[2.0, 8.0, 32.0]);
        assert_eq!(l.ratio(), 4.0);
    }

    #[test]
    fn ladder_ratio_invariant() {
        let l = DyadicLadder::new(0.5, 1000.0, 4.0).unwrap();
        for w in l.scales().windows(2) {
            assert!(w[1] > w[0]);
            assert_eq!(w[1] / w[0], 4.0);
        }
    }

    #[test]
    fn triangle_inequality_on_random_triples() {
        let mut rng = RngStream::new(11, 0).rng();
        let side = 3.0;
        for _ in 0..10_000 {
            let mut p = || pt(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
            let (a, b, c) = (p(), p(), p());
            let ab = dist_per(a, b, side);
            let bc = dist_per(b, c, side);
            let ac = dist_per(a, c, side);
            assert!(ac <= ab + bc + 1e-12);
            assert!(ab <= (a - b).norm() + 1e-12);
            assert!(ab <= side * std::f64::consts::SQRT_2 / 2.0 + 1e-12);
        }
    }

    #[test]
    fn rng_stream_reproducible() {
        let a: Vec<u64> = (0..8).map({
            let mut r = RngStream::new(5, 3).rng();
            move |_| r.gen()
        }).collect();
        let b: Vec<u64> = (0..8).map({
            let mut r = RngStream::new(5, 3).rng();
            move |_| r.gen()
        }).collect();
        let c: Vec<u64> = (0..8).map({
            let mut r = RngStream::new(5, 4).rng();
            move |_| r.gen()
        }).collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    proptest! {
        #[test]
        fn dist_per_symmetric(ax in -10.0..10.0f64, ay in -10.0..10.0f64, bx in -10.0..10.0f64, by in -10.0..10.0f64, side in 0.1..5.0f64) {
            let a = pt(ax, ay);
            let b = pt(bx, by);
            prop_assert!((dist_per(a, b, side) - dist_per(b, a, side)).abs() < 1e-12);
        }

        #[test]
        fn reduce_lands_in_fundamental_domain(v in -1e4..1e4f64, side in 0.01..100.0f64) {
            let r = reduce_coord(v, side);
            prop_assert!(r >= -side / 2.0 && r < side / 2.0);
            let k = ((v - r) / side).round();
            prop_assert!((v - r - k * side).abs() <= 1e-9 * (1.0 + v.abs()));
        }
    }
}
