//! Least-squares fit of the displacement `T - x` over a ball by gradients of
//! `c0 |x - c|^2 / 4 + sum_k (a_k Re + b_k Im)(rho s^k / k)`, `s = (x - c) / rho`
//! read as a complex number. Every term past the first is harmonic.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::geometry::{Disk, Mat2, MonomialTable, Point};
use crate::semidiscrete::{MapPiece, TransportSolution};
use crate::{Error, Result};

/// Fits whose column-scaled normal matrix exceeds this condition number drop a degree.
pub const MAX_CONDITION: f64 = 1e12;

/// Dense bivariate polynomial `sum c[i][j] s1^i s2^j`, `i + j <= degree`.
#[derive(Clone, Debug, PartialEq)]
pub struct Poly2 {
    degree: usize,
    c: Vec<Vec<f64>>,
}

impl Poly2 {
    pub fn zero(degree: usize) -> Self {
        Self { degree, c: (0..=degree).map(|i| vec![0.0; degree + 1 - i]).collect() }
    }

    pub fn monomial(i: usize, j: usize, coef: f64) -> Self {
        let mut p = Self::zero(i + j);
        p.c[i][j] = coef;
        p
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn coef(&self, i: usize, j: usize) -> f64 {
        if i + j > self.degree {
            0.0
        } else {
            self.c[i][j]
        }
    }

    fn terms(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.c.iter().enumerate().flat_map(|(i, row)| row.iter().enumerate().map(move |(j, &v)| (i, j, v)))
    }

    pub fn add(&self, other: &Poly2) -> Poly2 {
        let mut out = Self::zero(self.degree.max(other.degree));
        for (i, j, v) in self.terms().chain(other.terms()) {
            out.c[i][j] += v;
        }
        out
    }

    pub fn scale(&self, k: f64) -> Poly2 {
        Poly2 { degree: self.degree, c: self.c.iter().map(|r| r.iter().map(|v| v * k).collect()).collect() }
    }

    pub fn mul(&self, other: &Poly2) -> Poly2 {
        let mut out = Self::zero(self.degree + other.degree);
        for (i, j, a) in self.terms().filter(|t| t.2 != 0.0) {
            for (k, l, b) in other.terms().filter(|t| t.2 != 0.0) {
                out.c[i + k][j + l] += a * b;
            }
        }
        out
    }

    pub fn d1(&self) -> Poly2 {
        let mut out = Self::zero(self.degree.saturating_sub(1));
        for (i, j, v) in self.terms().filter(|t| t.0 > 0) {
            out.c[i - 1][j] += v * i as f64;
        }
        out
    }

    pub fn d2(&self) -> Poly2 {
        let mut out = Self::zero(self.degree.saturating_sub(1));
        for (i, j, v) in self.terms().filter(|t| t.1 > 0) {
            out.c[i][j - 1] += v * j as f64;
        }
        out
    }

    pub fn laplacian(&self) -> Poly2 {
        self.d1().d1().add(&self.d2().d2())
    }

    pub fn eval(&self, s: Point) -> f64 {
        self.terms().map(|(i, j, v)| v * s.x.powi(i as i32) * s.y.powi(j as i32)).sum()
    }

    pub fn max_abs_coef(&self) -> f64 {
        self.terms().map(|t| t.2.abs()).fold(0.0, f64::max)
    }

    /// `sum c_ij t(i, j)`; the table must cover the degree.
    pub fn integrate(&self, t: &MonomialTable) -> f64 {
        self.terms().map(|(i, j, v)| if v == 0.0 { 0.0 } else { v * t.get(i, j) }).sum()
    }

    /// `Re(s^k)` and `Im(s^k)` for `s = s1 + i s2`.
    pub fn complex_power(k: usize) -> (Poly2, Poly2) {
        let mut re = Self::zero(k);
        let mut im = Self::zero(k);
        let mut binom = 1.0;
        for j in 0..=k {
            // i^j cycles through 1, i, -1, -i.
            match j % 4 {
                0 => re.c[k - j][j] += binom,
                1 => im.c[k - j][j] += binom,
                2 => re.c[k - j][j] -= binom,
                _ => im.c[k - j][j] -= binom,
            }
            binom = binom * (k - j) as f64 / (j + 1) as f64;
        }
        (re, im)
    }
}

/// Potentials `Phi` with `phi(x) = rho Phi(s)`, so that `grad_x phi = grad_s Phi`.
/// Order: the radial term, then `Re, Im` for `k = 1..=p`.
pub fn basis_potentials(p: usize, rho: f64) -> Vec<Poly2> {
    let mut out = vec![Poly2::monomial(2, 0, 0.25 * rho).add(&Poly2::monomial(0, 2, 0.25 * rho))];
    for k in 1..=p {
        let (re, im) = Poly2::complex_power(k);
        out.push(re.scale(1.0 / k as f64));
        out.push(im.scale(1.0 / k as f64));
    }
    out
}

fn basis_gradients(p: usize, rho: f64) -> Vec<(Poly2, Poly2)> {
    basis_potentials(p, rho).iter().map(|f| (f.d1(), f.d2())).collect()
}

/// Monomials of `s = (x - c) / rho` from a table of `x - c`.
fn rescale(t: &MonomialTable, rho: f64) -> MonomialTable {
    t.rescaled(rho)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarmonicFit {
    pub degree: usize,
    pub requested_degree: usize,
    pub center: Point,
    pub radius: f64,
    /// `[c0, a1, b1, a2, b2, ...]`.
    pub coefficients: Vec<f64>,
    /// Condition number of the column-scaled normal matrix.
    pub condition: f64,
    /// `int |T - x - grad phi|^2` over the ball.
    pub residual_sq: f64,
    /// `int |grad phi|^2` over the ball.
    pub energy_sq: f64,
    /// `int |T - x|^2` over the ball.
    pub total_sq: f64,
    /// `grad phi(center)`.
    pub b: Point,
    /// `hess phi(center)`.
    pub a: Mat2,
    gram: Vec<f64>,
    rhs: Vec<f64>,
}

impl HarmonicFit {
    /// `int |T - x - grad phi_c|^2` for arbitrary coefficients `c`.
    pub fn residual_at(&self, c: &[f64]) -> f64 {
        let n = self.rhs.len();
        assert_eq!(c.len(), n);
        let mut quad = 0.0;
        for i in 0..n {
            for j in 0..n {
                quad += c[i] * self.gram[i * n + j] * c[j];
            }
        }
        let lin: f64 = c.iter().zip(&self.rhs).map(|(a, b)| a * b).sum();
        self.total_sq - 2.0 * lin + quad
    }

    /// `<T - x - grad phi, grad beta>` for every basis element.
    pub fn orthogonality_defects(&self) -> Vec<f64> {
        let n = self.rhs.len();
        (0..n).map(|i| self.rhs[i] - (0..n).map(|j| self.gram[i * n + j] * self.coefficients[j]).sum::<f64>()).collect()
    }

    pub fn gram_diagonal(&self) -> Vec<f64> {
        let n = self.rhs.len();
        (0..n).map(|i| self.gram[i * n + i]).collect()
    }

    /// The fitted potential as polynomials in `s` (`phi(x) = rho Phi(s)`).
    pub fn potential(&self) -> Poly2 {
        basis_potentials(self.degree, self.radius)
            .iter()
            .zip(&self.coefficients)
            .fold(Poly2::zero(self.degree.max(2)), |acc, (f, c)| acc.add(&f.scale(*c)))
    }

    /// `grad phi(x)`.
    pub fn gradient(&self, x: Point) -> Point {
        let s = (x - self.center) / self.radius;
        let phi = self.potential();
        Point::new(phi.d1().eval(s), phi.d2().eval(s))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "degree={} center={:.17e},{:.17e} radius={:.17e} coefficients=", self.degree, self.center.x, self.center.y, self.radius);
        let cs: Vec<String> = self.coefficients.iter().map(|c| format!("{c:.17e}")).collect();
        let _ = write!(out, "{}", cs.join(","));
        let _ = write!(
            out,
            " b={:.17e},{:.17e} A={:.17e},{:.17e},{:.17e},{:.17e} residual_sq={:.17e} energy_sq={:.17e}",
            self.b.x, self.b.y, self.a[(0, 0)], self.a[(0, 1)], self.a[(1, 0)], self.a[(1, 1)], self.residual_sq, self.energy_sq
        );
        out
    }
}

/// Fit over `B_{R/4}(center)` of the solution's displacement.
pub fn fit(sol: &TransportSolution, center: Point, r: f64, p: usize) -> Result<HarmonicFit> {
    let radius = 0.25 * r;
    let pieces = sol.map_pieces(center, radius)?;
    fit_pieces(&pieces, center, radius, p)
}

/// Fit over `B_radius(center)` of a piecewise constant map.
pub fn fit_pieces(pieces: &[MapPiece], center: Point, radius: f64, p: usize) -> Result<HarmonicFit> {
    if p < 2 {
        return Err(Error::InvalidInput(format!("harmonic degree {p} below 2")));
    }
    let deg = p.max(2);
    let tables: Vec<(Point, MonomialTable)> = pieces
        .iter()
        .map(|pc| {
            let disk = Disk::new(center, radius);
            (pc.value - center, rescale(&MonomialTable::polygon_disk(&pc.poly, &disk, deg), radius))
        })
        .collect();
    let mut total = 0.0;
    for pc in pieces {
        let local: Vec<Point> = pc.poly.iter().map(|x| x - pc.value).collect();
        let disk = Disk::new(center - pc.value, radius);
        total += MonomialTable::polygon_disk(&local, &disk, 2).moments().shifted(disk.center).second_about(Point::zeros());
    }
    let rhs = |grads: &[(Poly2, Poly2)]| -> Vec<f64> {
        // T - x = v - rho s on a piece with v = value - center.
        let s1 = Poly2::monomial(1, 0, radius);
        let s2 = Poly2::monomial(0, 1, radius);
        grads
            .iter()
            .map(|(gx, gy)| {
                let moving = gx.mul(&s1).add(&gy.mul(&s2));
                tables
                    .iter()
                    .map(|(v, t)| v.x * gx.integrate(t) + v.y * gy.integrate(t) - moving.integrate(t))
                    .sum()
            })
            .collect()
    };
    fit_core(center, radius, p, total, rhs, MAX_CONDITION)
}

/// Fit of a polynomial displacement field `(fx, fy)` given in `s = (x - c) / radius`.
pub fn fit_polynomial_field(fx: &Poly2, fy: &Poly2, center: Point, radius: f64, p: usize) -> Result<HarmonicFit> {
    if p < 2 {
        return Err(Error::InvalidInput(format!("harmonic degree {p} below 2")));
    }
    let deg = (2 * fx.degree().max(fy.degree())).max(fx.degree().max(fy.degree()) + p).max(2);
    let disk = rescale(&MonomialTable::disk(radius, deg), radius);
    let total = fx.mul(fx).add(&fy.mul(fy)).integrate(&disk);
    let rhs = |grads: &[(Poly2, Poly2)]| -> Vec<f64> {
        grads.iter().map(|(gx, gy)| gx.mul(fx).add(&gy.mul(fy)).integrate(&disk)).collect()
    };
    fit_core(center, radius, p, total, rhs, MAX_CONDITION)
}

fn fit_core(
    center: Point,
    radius: f64,
    requested: usize,
    total_sq: f64,
    rhs_of: impl Fn(&[(Poly2, Poly2)]) -> Vec<f64>,
    max_condition: f64,
) -> Result<HarmonicFit> {
    let mut p = requested;
    loop {
        let grads = basis_gradients(p, radius);
        let n = grads.len();
        let disk = rescale(&MonomialTable::disk(radius, 2 * p.max(2)), radius);
        let mut gram = DMatrix::<f64>::zeros(n, n);
        for a in 0..n {
            for b in a..n {
                let v = grads[a].0.mul(&grads[b].0).add(&grads[a].1.mul(&grads[b].1)).integrate(&disk);
                gram[(a, b)] = v;
                gram[(b, a)] = v;
            }
        }
        let scale: Vec<f64> = (0..n).map(|i| 1.0 / gram[(i, i)].sqrt()).collect();
        let scaled = DMatrix::from_fn(n, n, |i, j| gram[(i, j)] * scale[i] * scale[j]);
        let eig = SymmetricEigen::new(scaled.clone()).eigenvalues;
        let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &e| (lo.min(e), hi.max(e)));
        let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        let chol = scaled.cholesky();
        if condition > max_condition || chol.is_none() {
            if p > 2 {
                p -= 1;
                continue;
            }
            return Err(Error::IllConditioned { degree: p, condition });
        }
        let rhs = rhs_of(&grads);
        let rs = DVector::from_iterator(n, rhs.iter().zip(&scale).map(|(r, s)| r * s));
        let y = chol.unwrap().solve(&rs);
        let coefficients: Vec<f64> = (0..n).map(|i| y[i] * scale[i]).collect();
        let cv = DVector::from_column_slice(&coefficients);
        let energy_sq = (cv.transpose() * &gram * &cv)[(0, 0)];
        let lin: f64 = coefficients.iter().zip(&rhs).map(|(a, b)| a * b).sum();
        let residual_sq = (total_sq - 2.0 * lin + energy_sq).max(0.0);
        let (c0, a1, b1, a2, b2) = (coefficients[0], coefficients[1], coefficients[2], coefficients[3], coefficients[4]);
        let b = Point::new(a1, b1);
        let a = Mat2::new(0.5 * c0 + a2 / radius, b2 / radius, b2 / radius, 0.5 * c0 - a2 / radius);
        return Ok(HarmonicFit {
            degree: p,
            requested_degree: requested,
            center,
            radius,
            coefficients,
            condition,
            residual_sq,
            energy_sq,
            total_sq,
            b,
            a,
            gram: gram.iter().cloned().collect(),
            rhs,
        });
    }
}

/// `B = exp(-A / 2)` and `b`, with `|B - Id|^2 + |b|^2 / R^2` for the scale `R`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineStep {
    pub b_mat: Mat2,
    pub b: Point,
    pub bound_value: f64,
}

/// `exp(m)` for symmetric `m`, through its eigendecomposition.
pub fn sym_exp(m: &Mat2) -> Mat2 {
    let sym = 0.5 * (m + m.transpose());
    let eig = SymmetricEigen::new(sym);
    let d = Mat2::from_diagonal(&eig.eigenvalues.map(f64::exp));
    let v = eig.eigenvectors;
    let out = v * d * v.transpose();
    0.5 * (out + out.transpose())
}

pub fn extract_affine(f: &HarmonicFit, scale: f64) -> AffineStep {
    let b_mat = sym_exp(&(-0.5 * f.a));
    let bound_value = (b_mat - Mat2::identity()).norm_squared() + f.b.norm_squared() / (scale * scale);
    AffineStep { b_mat, b: f.b, bound_value }
}
