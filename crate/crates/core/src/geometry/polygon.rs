use std::ops::{Add, AddAssign};

use super::{cross, Point};

/// Integrals of `1, x, y, x^2, xy, y^2` over a planar region.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Moments {
    pub m0: f64,
    pub mx: f64,
    pub my: f64,
    pub mxx: f64,
    pub mxy: f64,
    pub myy: f64,
}

impl Moments {
    pub fn scale(self, s: f64) -> Self {
        Self {
            m0: s * self.m0,
            mx: s * self.mx,
            my: s * self.my,
            mxx: s * self.mxx,
            mxy: s * self.mxy,
            myy: s * self.myy,
        }
    }

    /// Moments after the change of variables `x -> x + c`.
    pub fn shifted(self, c: Point) -> Self {
        Self {
            m0: self.m0,
            mx: self.mx + c.x * self.m0,
            my: self.my + c.y * self.m0,
            mxx: self.mxx + 2.0 * c.x * self.mx + c.x * c.x * self.m0,
            mxy: self.mxy + c.x * self.my + c.y * self.mx + c.x * c.y * self.m0,
            myy: self.myy + 2.0 * c.y * self.my + c.y * c.y * self.m0,
        }
    }

    pub fn first(&self) -> Point {
        Point::new(self.mx, self.my)
    }

    pub fn centroid(&self) -> Option<Point> {
        (self.m0 > 0.0).then(|| self.first() / self.m0)
    }

    /// `integral |x - p|^2`.
    pub fn second_about(&self, p: Point) -> f64 {
        let v = self.mxx + self.myy - 2.0 * (p.x * self.mx + p.y * self.my) + p.norm_squared() * self.m0;
        v.max(0.0)
    }
}

impl Add for Moments {
    type Output = Moments;
    fn add(self, o: Moments) -> Moments {
        Moments {
            m0: self.m0 + o.m0,
            mx: self.mx + o.mx,
            my: self.my + o.my,
            mxx: self.mxx + o.mxx,
            mxy: self.mxy + o.mxy,
            myy: self.myy + o.myy,
        }
    }
}

impl AddAssign for Moments {
    fn add_assign(&mut self, o: Moments) {
        *self = *self + o;
    }
}

pub fn polygon_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    (0..n).map(|k| cross(poly[k], poly[(k + 1) % n])).sum::<f64>() * 0.5
}

/// Closed-form moments of a simple polygon with counter-clockwise vertices.
pub fn polygon_moments(poly: &[Point]) -> Moments {
    let n = poly.len();
    let mut m = Moments::default();
    if n < 3 {
        return m;
    }
    for k in 0..n {
        let p = poly[k];
        let q = poly[(k + 1) % n];
        let c = cross(p, q);
        m.m0 += c;
        m.mx += (p.x + q.x) * c;
        m.my += (p.y + q.y) * c;
        m.mxx += (p.x * p.x + p.x * q.x + q.x * q.x) * c;
        m.myy += (p.y * p.y + p.y * q.y + q.y * q.y) * c;
        m.mxy += (p.x * q.y + 2.0 * p.x * p.y + 2.0 * q.x * q.y + q.x * p.y) * c;
    }
    Moments {
        m0: m.m0 / 2.0,
        mx: m.mx / 6.0,
        my: m.my / 6.0,
        mxx: m.mxx / 12.0,
        mxy: m.mxy / 24.0,
        myy: m.myy / 12.0,
    }
}

/// Clip a convex polygon against `normal . p <= offset`.
///
/// `tags[k]` labels the edge from vertex `k` to vertex `k + 1`; edges created
/// by the cut get `cut_tag`.
pub fn clip_halfplane<T: Copy>(
    verts: &[Point],
    tags: &[T],
    normal: Point,
    offset: f64,
    cut_tag: T,
) -> (Vec<Point>, Vec<T>) {
    let n = verts.len();
    let mut out_v = Vec::with_capacity(n + 1);
    let mut out_t = Vec::with_capacity(n + 1);
    if n == 0 {
        return (out_v, out_t);
    }
    let side: Vec<f64> = verts.iter().map(|v| normal.dot(v) - offset).collect();
    for k in 0..n {
        let j = (k + 1) % n;
        let (p, q) = (verts[k], verts[j]);
        let (sp, sq) = (side[k], side[j]);
        match (sp <= 0.0, sq <= 0.0) {
            (true, true) => {
                out_v.push(p);
                out_t.push(tags[k]);
            }
            (true, false) => {
                out_v.push(p);
                out_t.push(tags[k]);
                let t = sp / (sp - sq);
                let i = p + (q - p) * t;
                if (i - p).norm_squared() > 0.0 {
                    out_v.push(i);
                    out_t.push(cut_tag);
                } else {
                    *out_t.last_mut().unwrap() = cut_tag;
                }
            }
            (false, true) => {
                let t = sp / (sp - sq);
                let i = p + (q - p) * t;
                if (i - q).norm_squared() > 0.0 {
                    out_v.push(i);
                    out_t.push(tags[k]);
                }
            }
            (false, false) => {}
        }
    }
    if out_v.len() < 3 {
        out_v.clear();
        out_t.clear();
    }
    (out_v, out_t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::pt;
    use proptest::prelude::*;

    /// Degree-two exact rule on a triangle: edge midpoints, weight area/3.
    fn triangle_rule(a: Point, b: Point, c: Point) -> Moments {
        let area = 0.5 * cross(b - a, c - a);
        let mut m = Moments::default();
        for q in [(a + b) / 2.0, (b + c) / 2.0, (c + a) / 2.0] {
            let w = area / 3.0;
            m.m0 += w;
            m.mx += w * q.x;
            m.my += w * q.y;
            m.mxx += w * q.x * q.x;
            m.mxy += w * q.x * q.y;
            m.myy += w * q.y * q.y;
        }
        m
    }

    fn fan_oracle(poly: &[Point]) -> Moments {
        let mut m = Moments::default();
        for k in 1..poly.len() - 1 {
            m += triangle_rule(poly[0], poly[k], poly[k + 1]);
        }
        m
    }

    fn close(a: Moments, b: Moments, tol: f64) -> bool {
        [
            (a.m0, b.m0),
            (a.mx, b.mx),
            (a.my, b.my),
            (a.mxx, b.mxx),
            (a.mxy, b.mxy),
            (a.myy, b.myy),
        ]
        .iter()
        .all(|(x, y)| (x - y).abs() <= tol * (1.0 + x.abs().max(y.abs())))
    }

    #[test]
    fn unit_square_moments() {
        let sq = [pt(0.0, 0.0), pt(1.0, 0.0), pt(1.0, 1.0), pt(0.0, 1.0)];
        let m = polygon_moments(&sq);
        assert!((m.m0 - 1.0).abs() < 1e-15);
        assert!((m.mx - 0.5).abs() < 1e-15);
        assert!((m.mxx - 1.0 / 3.0).abs() < 1e-15);
        assert!((m.mxy - 0.25).abs() < 1e-15);
        assert!((m.second_about(pt(0.5, 0.5)) - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn clip_keeps_tags() {
        let sq = [pt(-1.0, -1.0), pt(1.0, -1.0), pt(1.0, 1.0), pt(-1.0, 1.0)];
        let (v, t) = clip_halfplane(&sq, &[0, 1, 2, 3], pt(1.0, 0.0), 0.0, 9);
        assert_eq!(v.len(), 4);
        assert!((polygon_area(&v) - 2.0).abs() < 1e-15);
        assert_eq!(t.iter().filter(|&&x| x == 9).count(), 1);
        assert!(t.contains(&0) && t.contains(&2) && t.contains(&3) && !t.contains(&1));
        for k in 0..4 {
            let (p, q) = (v[k], v[(k + 1) % 4]);
            if t[k] == 9 {
                assert!(p.x.abs() < 1e-15 && q.x.abs() < 1e-15);
            }
        }
    }

    #[test]
    fn clip_everything_away() {
        let sq = [pt(0.0, 0.0), pt(1.0, 0.0), pt(1.0, 1.0), pt(0.0, 1.0)];
        let (v, _) = clip_halfplane(&sq, &[0; 4], pt(1.0, 1.0), -1.0, 1);
        assert!(v.is_empty());
    }

    proptest! {
        #[test]
        fn shoelace_matches_triangle_rule(
            cx in -5.0..5.0f64, cy in -5.0..5.0f64, r in 0.1..3.0f64,
            n in 3usize..9, phase in 0.0..6.0f64,
        ) {
            let poly: Vec<Point> = (0..n)
                .map(|k| {
                    let a = phase + std::f64::consts::TAU * k as f64 / n as f64;
                    pt(cx + r * a.cos(), cy + r * 1.3 * a.sin())
                })
                .collect();
            prop_assert!(close(polygon_moments(&poly), fan_oracle(&poly), 1e-11));
        }

        #[test]
        fn clipping_partitions_area(nx in -1.0..1.0f64, ny in -1.0..1.0f64, off in -2.0..2.0f64) {
            prop_assume!(nx.abs() + ny.abs() > 1e-3);
            let sq = [pt(-1.0, -1.0), pt(1.0, -1.0), pt(1.0, 1.0), pt(-1.0, 1.0)];
            let tags = [0u8; 4];
            let (a, _) = clip_halfplane(&sq, &tags, pt(nx, ny), off, 1);
            let (b, _) = clip_halfplane(&sq, &tags, pt(-nx, -ny), -off, 1);
            let total = polygon_moments(&a) + polygon_moments(&b);
            prop_assert!(close(total, polygon_moments(&sq), 1e-12));
        }
    }
}
