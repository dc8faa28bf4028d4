//! Map algebra: Hénon factors, their compositions, inverses, Jacobians,
//! the filtration bidisk and orbit escape.

use alloc::vec::Vec;
use core::f64::consts::PI;
use core::ops::{Add, Mul, Sub};

#[allow(unused_imports)]
use num_traits::Float;
use num_traits::Zero;

use crate::error::{Error, Result};
use crate::poly::Poly;
use crate::C;

/// Modulus of `a + b(z)` below which the inverse of a birational factor is
/// treated as undefined.
pub const INDETERMINACY_TOL: f64 = 1e-10;

/// Bisection tolerance on the filtration radius.
pub const RADIUS_TOL: f64 = 1e-9;

/// Relative clearance below which a boundary certification is inconclusive.
pub const CLEARANCE_TOL: f64 = 1e-6;

/// A point of C².
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub z: C,
    pub w: C,
}

impl Point {
    #[inline]
    pub const fn new(z: C, w: C) -> Self {
        Point { z, w }
    }

    pub fn real(z: f64, w: f64) -> Self {
        Point::new(C::new(z, 0.0), C::new(w, 0.0))
    }

    /// Sup norm `max(|z|, |w|)`.
    #[inline]
    pub fn norm_max(&self) -> f64 {
        self.z.norm().max(self.w.norm())
    }

    #[inline]
    pub fn norm(&self) -> f64 {
        (self.z.norm_sqr() + self.w.norm_sqr()).sqrt()
    }

    #[inline]
    pub fn is_finite(&self) -> bool {
        self.z.re.is_finite() && self.z.im.is_finite() && self.w.re.is_finite() && self.w.im.is_finite()
    }

    #[inline]
    pub fn swap(self) -> Point {
        Point::new(self.w, self.z)
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.z + o.z, self.w + o.w)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.z - o.z, self.w - o.w)
    }
}

impl Mul<C> for Point {
    type Output = Point;
    fn mul(self, s: C) -> Point {
        Point::new(self.z * s, self.w * s)
    }
}

/// 2×2 complex matrix in row-major order.
pub type Mat2 = [[C; 2]; 2];

pub fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    [
        [
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
        ],
        [
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        ],
    ]
}

pub fn mat_vec(a: &Mat2, v: Point) -> Point {
    Point::new(a[0][0] * v.z + a[0][1] * v.w, a[1][0] * v.z + a[1][1] * v.w)
}

pub fn mat_identity() -> Mat2 {
    let one = C::new(1.0, 0.0);
    [[one, C::zero()], [C::zero(), one]]
}

pub fn mat_det(a: &Mat2) -> C {
    a[0][0] * a[1][1] - a[0][1] * a[1][0]
}

/// One factor `(z, w) ↦ ((a + b(z))·w + p(z), a·z)`.
///
/// Without `b` this is the plain Hénon map `(a·w + p(z), a·z)`, which
/// degenerates to the one-variable polynomial `p` when `a = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct HenonFactor {
    pub a: C,
    pub p: Poly,
    pub b: Option<Poly>,
}

impl HenonFactor {
    pub fn new(a: C, p: Poly, b: Option<Poly>) -> Result<Self> {
        let f = HenonFactor { a, p, b };
        f.validate(0)?;
        Ok(f)
    }

    /// `(a·w + z² + c, a·z)`.
    pub fn quadratic(c: C, a: C) -> Self {
        HenonFactor {
            a,
            p: Poly::monic_quadratic(c),
            b: None,
        }
    }

    fn validate(&self, index: usize) -> Result<()> {
        let degree = self.p.degree();
        if degree < 2 {
            return Err(Error::DegreeTooLow { index, degree });
        }
        if let Some(b) = &self.b {
            if !b.is_zero() && b.degree() > degree - 1 {
                return Err(Error::PerturbationDegree {
                    index,
                    b_degree: b.degree(),
                    max: degree - 1,
                });
            }
        } else if self.a.is_zero() {
            return Err(Error::SingularFactor { index });
        }
        Ok(())
    }

    pub fn is_plain(&self) -> bool {
        self.b.as_ref().is_none_or(|b| b.is_zero())
    }

    #[inline]
    fn coupling(&self, z: C) -> C {
        match &self.b {
            Some(b) => self.a + b.eval(z),
            None => self.a,
        }
    }

    #[inline]
    pub fn apply(&self, x: Point) -> Point {
        Point::new(self.coupling(x.z) * x.w + self.p.eval(x.z), self.a * x.z)
    }

    /// Jacobian matrix at `x`.
    pub fn jacobian_at(&self, x: Point) -> Mat2 {
        let (_, dp) = self.p.eval_d(x.z);
        let (coupling, dcoupling) = match &self.b {
            Some(b) => {
                let (v, d) = b.eval_d(x.z);
                (self.a + v, d)
            }
            None => (self.a, C::zero()),
        };
        [[dp + dcoupling * x.w, coupling], [self.a, C::zero()]]
    }

    /// Image of `x` together with the push-forward of the tangent vector `v`.
    #[inline]
    pub fn apply_tangent(&self, x: Point, v: Point) -> (Point, Point) {
        let (p, dp) = self.p.eval_d(x.z);
        let (coupling, dcoupling) = match &self.b {
            Some(b) => {
                let (val, d) = b.eval_d(x.z);
                (self.a + val, d)
            }
            None => (self.a, C::zero()),
        };
        let y = Point::new(coupling * x.w + p, self.a * x.z);
        let dv = Point::new((dp + dcoupling * x.w) * v.z + coupling * v.w, self.a * v.z);
        (y, dv)
    }

    /// Symbolic determinant `-a²` of the unperturbed factor.
    pub fn determinant(&self) -> C {
        -(self.a * self.a)
    }

    pub fn apply_inverse(&self, x: Point) -> Result<Point> {
        if self.a.is_zero() {
            return Err(Error::Indeterminacy { modulus: 0.0 });
        }
        let z = x.w / self.a;
        let coupling = self.coupling(z);
        if coupling.norm() < INDETERMINACY_TOL {
            return Err(Error::Indeterminacy {
                modulus: coupling.norm(),
            });
        }
        Ok(Point::new(z, (x.z - self.p.eval(z)) / coupling))
    }

    /// The factor `σ∘F⁻¹∘σ` in normal form, where `σ` swaps coordinates.
    /// Only plain factors have a polynomial inverse.
    pub fn swapped_inverse(&self) -> Result<HenonFactor> {
        if !self.is_plain() {
            return Err(Error::InvalidInput("birational factors have no polynomial inverse"));
        }
        if self.a.is_zero() {
            return Err(Error::SingularFactor { index: 0 });
        }
        let inv_a = self.a.inv();
        let mut scale = inv_a;
        let coeffs = self
            .p
            .coeffs()
            .iter()
            .map(|&c| {
                let v = -c * scale;
                scale *= inv_a;
                v
            })
            .collect();
        Ok(HenonFactor {
            a: inv_a,
            p: Poly::new(coeffs),
            b: None,
        })
    }
}

/// A polynomial diffeomorphism given as an ordered composition of factors;
/// `factors[0]` is applied first.
#[derive(Debug, Clone, PartialEq)]
pub struct MapSpec {
    pub factors: Vec<HenonFactor>,
    pub degree: usize,
    /// Product of the per-factor determinants `-a²`. This is the constant
    /// Jacobian for plain maps; birational factors multiply it pointwise by
    /// `(a + b(z))/a`, see [`MapSpec::jacobian_at`].
    pub jacobian: C,
}

impl MapSpec {
    pub fn compose(factors: Vec<HenonFactor>) -> Result<MapSpec> {
        if factors.is_empty() {
            return Err(Error::EmptyFactors);
        }
        for (i, f) in factors.iter().enumerate() {
            f.validate(i)?;
        }
        let degree = factors.iter().map(|f| f.p.degree()).product();
        let jacobian = factors
            .iter()
            .fold(C::new(1.0, 0.0), |acc, f| acc * f.determinant());
        Ok(MapSpec {
            factors,
            degree,
            jacobian,
        })
    }

    /// The quadratic Hénon map `(a·w + z² + c, a·z)`.
    pub fn quadratic(c: C, a: C) -> Result<MapSpec> {
        MapSpec::compose(alloc::vec![HenonFactor::quadratic(c, a)])
    }

    /// Real-parameter shorthand for [`MapSpec::quadratic`].
    pub fn quadratic_real(c: f64, a: f64) -> Result<MapSpec> {
        MapSpec::quadratic(C::new(c, 0.0), C::new(a, 0.0))
    }

    pub fn is_plain(&self) -> bool {
        self.factors.iter().all(HenonFactor::is_plain)
    }

    #[inline]
    pub fn apply(&self, x: Point) -> Point {
        self.factors.iter().fold(x, |y, f| f.apply(y))
    }

    pub fn apply_tangent(&self, x: Point, v: Point) -> (Point, Point) {
        self.factors
            .iter()
            .fold((x, v), |(y, dv), f| f.apply_tangent(y, dv))
    }

    pub fn apply_inverse(&self, x: Point) -> Result<Point> {
        self.factors
            .iter()
            .rev()
            .try_fold(x, |y, f| f.apply_inverse(y))
    }

    pub fn iterate(&self, x: Point, n: usize) -> Point {
        (0..n).fold(x, |y, _| self.apply(y))
    }

    /// Jacobian matrix `Df(x)`.
    pub fn jacobian_matrix(&self, x: Point) -> Mat2 {
        let mut y = x;
        let mut m = mat_identity();
        for f in &self.factors {
            m = mat_mul(&f.jacobian_at(y), &m);
            y = f.apply(y);
        }
        m
    }

    pub fn jacobian_at(&self, x: Point) -> C {
        mat_det(&self.jacobian_matrix(x))
    }

    /// `σ∘f⁻¹∘σ` in normal form (plain maps only). Its Jacobian is `1/jacobian`.
    pub fn swapped_inverse(&self) -> Result<MapSpec> {
        let factors = self
            .factors
            .iter()
            .rev()
            .map(HenonFactor::swapped_inverse)
            .collect::<Result<Vec<_>>>()?;
        MapSpec::compose(factors)
    }
}

/// The filtration bidisk `D(0,R)²` and escape regions
/// `V⁺ = {|z| > |w|, |z| > R}`, `V⁻ = {|w| > |z|, |w| > R}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiltrationGeometry {
    pub radius: f64,
}

impl FiltrationGeometry {
    pub fn new(radius: f64) -> Self {
        FiltrationGeometry { radius }
    }

    #[inline]
    pub fn in_bidisk(&self, x: &Point) -> bool {
        x.z.norm() <= self.radius && x.w.norm() <= self.radius
    }

    #[inline]
    pub fn in_escape_forward(&self, x: &Point) -> bool {
        let z = x.z.norm();
        z > self.radius && z > x.w.norm()
    }

    #[inline]
    pub fn in_escape_backward(&self, x: &Point) -> bool {
        let w = x.w.norm();
        w > self.radius && w > x.z.norm()
    }

    #[inline]
    pub fn in_escape(&self, x: &Point, side: Side) -> bool {
        match side {
            Side::Forward => self.in_escape_forward(x),
            Side::Backward => self.in_escape_backward(x),
        }
    }
}

fn min_modulus_on_circle(p: &Poly, radius: f64) -> (f64, f64) {
    const SAMPLES: usize = 2048;
    let f = |theta: f64| p.eval(C::from_polar(radius, theta)).norm();
    let (mut best_theta, mut best) = (0.0, f64::INFINITY);
    for k in 0..SAMPLES {
        let theta = 2.0 * PI * k as f64 / SAMPLES as f64;
        let v = f(theta);
        if v < best {
            best = v;
            best_theta = theta;
        }
    }
    // Golden-section refinement around the sampled minimum.
    let h = 2.0 * PI / SAMPLES as f64;
    let (mut lo, mut hi) = (best_theta - h, best_theta + h);
    let g = 0.5 * (5.0_f64.sqrt() - 1.0);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..80 {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        }
    }
    let theta = 0.5 * (lo + hi);
    let v = f(theta);
    if v < best {
        (v, theta)
    } else {
        (best, best_theta)
    }
}

/// `min_{|z|=R} |p(z)| - 2R`.
pub fn radius_margin(p: &Poly, radius: f64) -> f64 {
    min_modulus_on_circle(p, radius).0 - 2.0 * radius
}

/// Smallest `R` such that `|z| = R'` implies `|p(z)| > 2R'` for all `R' > R`.
pub fn minimal_radius(p: &Poly) -> f64 {
    let h = |r: f64| radius_margin(p, r);
    let mut hi = 1.0;
    while !(h(hi) > 0.0 && h(2.0 * hi) > 0.0 && h(4.0 * hi) > 0.0) {
        hi *= 2.0;
    }
    // Largest grid radius where the condition fails, then bisect.
    const GRID: usize = 2000;
    let mut lo = 0.0;
    for k in (0..GRID).rev() {
        let r = hi * k as f64 / GRID as f64;
        if h(r) <= 0.0 {
            lo = r;
            hi = hi * (k + 1) as f64 / GRID as f64;
            break;
        }
    }
    while hi - lo > RADIUS_TOL {
        let mid = 0.5 * (lo + hi);
        if h(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Filtration radius: `margin` times the minimal certified radius over all factors.
pub fn choose_radius(f: &MapSpec, margin: f64) -> Result<FiltrationGeometry> {
    if !(margin >= 1.0) {
        return Err(Error::InvalidInput("margin must be at least 1"));
    }
    let r = f
        .factors
        .iter()
        .map(|fac| minimal_radius(&fac.p))
        .fold(0.0_f64, f64::max);
    Ok(FiltrationGeometry::new(margin * r))
}

/// Which boundary condition a certification witness violates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Condition {
    /// `|z| = R ⇒ |p(z)| > 2R` for every factor.
    Radius,
    /// `f(∂_v B) ∩ closure(B) = ∅`.
    VerticalBoundary,
    /// `f(closure(B)) ∩ ∂B ⊂ ∂_v B`.
    HorizontalBoundary,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CertVerdict {
    Certified,
    Violated { witness: Point, condition: Condition },
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certification {
    pub verdict: CertVerdict,
    /// `min_i min_{|z|=R} |p_i(z)| - 2R`.
    pub radius_clearance: f64,
    /// Minimal distance of `f(∂_v B)` outside the closed bidisk (sup norm).
    pub vertical_clearance: f64,
    /// Minimal `R - |w'|` over images with `|z'| ≤ R`.
    pub horizontal_clearance: f64,
    pub samples: usize,
}

impl Certification {
    pub fn min_clearance(&self) -> f64 {
        self.radius_clearance
            .min(self.vertical_clearance)
            .min(self.horizontal_clearance)
    }
}

/// Deterministic quasi-uniform sequence in the unit cube (additive recurrence
/// on powers of the generalized golden ratio).
pub(crate) fn quasi_uniform(k: usize, dim: usize) -> [f64; 4] {
    // Roots of x^(d+1) = x + 1 for d = 4.
    const PHI4: f64 = 1.167_303_978_261_418_7;
    let mut out = [0.0; 4];
    let mut alpha = 1.0;
    for (j, slot) in out.iter_mut().enumerate().take(dim) {
        alpha /= PHI4;
        let _ = j;
        let v = 0.5 + alpha * (k as f64 + 1.0);
        *slot = v - v.floor();
    }
    out
}

/// Sampling check of the Hénon-like boundary conditions on `B = D(0,R)²`.
pub fn certify_henonlike(f: &MapSpec, geom: &FiltrationGeometry, samples: usize) -> Certification {
    let r = geom.radius;
    let tol = CLEARANCE_TOL * r.max(1.0);
    let mut violation: Option<(Point, Condition)> = None;

    let mut radius_clearance = f64::INFINITY;
    for fac in &f.factors {
        let (m, theta) = min_modulus_on_circle(&fac.p, r);
        let clearance = m - 2.0 * r;
        if clearance < radius_clearance {
            radius_clearance = clearance;
            if clearance < -tol && violation.is_none() {
                violation = Some((
                    Point::new(C::from_polar(r, theta), C::zero()),
                    Condition::Radius,
                ));
            }
        }
    }

    let mut vertical_clearance = f64::INFINITY;
    let mut horizontal_clearance = f64::INFINITY;
    for k in 0..samples {
        let u = quasi_uniform(k, 4);
        // Vertical boundary |z| = R, |w| ≤ R.
        let x = Point::new(
            C::from_polar(r, 2.0 * PI * u[0]),
            C::from_polar(r * u[1].sqrt(), 2.0 * PI * u[2]),
        );
        let y = f.apply(x);
        let clearance = y.norm_max() - r;
        if clearance < vertical_clearance {
            vertical_clearance = clearance;
            if clearance < -tol && violation.is_none() {
                violation = Some((x, Condition::VerticalBoundary));
            }
        }
        // Closed bidisk: images reaching |z'| ≤ R must keep |w'| < R.
        let x = Point::new(
            C::from_polar(r * u[0].sqrt(), 2.0 * PI * u[1]),
            C::from_polar(r * u[2].sqrt(), 2.0 * PI * u[3]),
        );
        for x in [x, Point::new(x.z, x.w * (r / x.w.norm().max(1e-300)))] {
            let y = f.apply(x);
            if y.z.norm() <= r {
                let clearance = r - y.w.norm();
                if clearance < horizontal_clearance {
                    horizontal_clearance = clearance;
                    if clearance < -tol && violation.is_none() {
                        violation = Some((x, Condition::HorizontalBoundary));
                    }
                }
            }
        }
    }
    if !horizontal_clearance.is_finite() {
        horizontal_clearance = r;
    }

    let cert = Certification {
        verdict: CertVerdict::Certified,
        radius_clearance,
        vertical_clearance,
        horizontal_clearance,
        samples,
    };
    let verdict = if let Some((witness, condition)) = violation {
        CertVerdict::Violated { witness, condition }
    } else if cert.min_clearance() < tol {
        CertVerdict::Inconclusive
    } else {
        CertVerdict::Certified
    };
    Certification { verdict, ..cert }
}

/// Direction of iteration: forward orbits probe K⁺, backward orbits K⁻.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Forward,
    Backward,
}

/// Tri-state membership verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    Inside,
    Escaped,
    Unresolved,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EscapeRecord {
    pub verdict: Verdict,
    pub exit_time: Option<usize>,
    pub last_point: Point,
}

/// Iterates forward (or backward) until the orbit enters the escape region
/// of that side. `Inside` means every iterate `1..=nmax` stayed in the closed
/// bidisk; an orbit that wanders outside the bidisk without entering the
/// escape region is `Unresolved`.
pub fn orbit_escape(
    f: &MapSpec,
    x: Point,
    nmax: usize,
    geom: &FiltrationGeometry,
    side: Side,
) -> Result<EscapeRecord> {
    let mut y = x;
    let mut left_bidisk = false;
    for n in 0..=nmax {
        if !y.is_finite() {
            return Ok(EscapeRecord {
                verdict: Verdict::Escaped,
                exit_time: Some(n),
                last_point: y,
            });
        }
        if geom.in_escape(&y, side) {
            return Ok(EscapeRecord {
                verdict: Verdict::Escaped,
                exit_time: Some(n),
                last_point: y,
            });
        }
        if n > 0 && !geom.in_bidisk(&y) {
            left_bidisk = true;
        }
        if n == nmax {
            break;
        }
        y = match side {
            Side::Forward => f.apply(y),
            Side::Backward => f.apply_inverse(y)?,
        };
    }
    Ok(EscapeRecord {
        verdict: if left_bidisk {
            Verdict::Unresolved
        } else {
            Verdict::Inside
        },
        exit_time: None,
        last_point: y,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::c;
    use rand::{Rng, SeedableRng};

    fn quad(cc: f64, a: f64) -> MapSpec {
        MapSpec::quadratic_real(cc, a).unwrap()
    }

    #[test]
    fn compose_degree_and_jacobian() {
        let f = quad(-1.0, 0.1);
        assert_eq!(f.degree, 2);
        assert!((f.jacobian - c(-0.01, 0.0)).norm() < 1e-15);
        let g = MapSpec::compose(alloc::vec![
            HenonFactor::quadratic(c(0.0, 0.0), c(0.1, 0.0)),
            HenonFactor::quadratic(c(0.0, 0.0), c(0.1, 0.0)),
        ])
        .unwrap();
        assert_eq!(g.degree, 4);
        assert!((g.jacobian - c(1e-4, 0.0)).norm() < 1e-18);
    }

    #[test]
    fn compose_rejects_bad_factors() {
        assert_eq!(MapSpec::compose(Vec::new()), Err(Error::EmptyFactors));
        let linear = HenonFactor {
            a: c(0.1, 0.0),
            p: Poly::from_real(&[1.0, 1.0]),
            b: None,
        };
        assert!(matches!(
            MapSpec::compose(alloc::vec![linear]),
            Err(Error::DegreeTooLow { degree: 1, .. })
        ));
        let zero_a = HenonFactor::quadratic(c(0.0, 0.0), c(0.0, 0.0));
        assert!(matches!(
            MapSpec::compose(alloc::vec![zero_a]),
            Err(Error::SingularFactor { .. })
        ));
        let big_b = HenonFactor {
            a: c(0.1, 0.0),
            p: Poly::from_real(&[0.0, 0.0, 1.0]),
            b: Some(Poly::from_real(&[0.0, 0.0, 1.0])),
        };
        assert!(matches!(
            MapSpec::compose(alloc::vec![big_b]),
            Err(Error::PerturbationDegree { .. })
        ));
    }

    #[test]
    fn apply_examples() {
        let f = quad(-1.0, 0.1);
        let y = f.apply(Point::real(1.0, 0.0));
        assert!((y.z - c(0.0, 0.0)).norm() < 1e-15 && (y.w - c(0.1, 0.0)).norm() < 1e-15);
        let y = f.apply(Point::real(0.0, 0.0));
        assert!((y.z - c(-1.0, 0.0)).norm() < 1e-15 && y.w.norm() < 1e-15);

        let bir = MapSpec::compose(alloc::vec![HenonFactor::new(
            c(0.1, 0.0),
            Poly::from_real(&[0.0, 0.0, 1.0]),
            Some(Poly::from_real(&[0.0, 0.01])),
        )
        .unwrap()])
        .unwrap();
        let y = bir.apply(Point::real(1.0, 1.0));
        assert!((y.z - c(1.11, 0.0)).norm() < 1e-14 && (y.w - c(0.1, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn inverse_examples() {
        let f = quad(-1.0, 0.1);
        let x = f.apply_inverse(Point::real(-1.0, 0.0)).unwrap();
        assert!(x.norm() < 1e-15);

        // a + b(z) = 0.1 - 0.1 z vanishes on the fiber z = W/a = 1.
        let bir = MapSpec::compose(alloc::vec![HenonFactor::new(
            c(0.1, 0.0),
            Poly::from_real(&[0.0, 0.0, 1.0]),
            Some(Poly::from_real(&[0.0, -0.1])),
        )
        .unwrap()])
        .unwrap();
        assert!(matches!(
            bir.apply_inverse(Point::real(3.0, 0.1)),
            Err(Error::Indeterminacy { .. })
        ));
    }

    #[test]
    fn round_trip_random_points() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        let maps = [quad(-1.0, 0.1), quad(0.0, 0.05), quad(-10.0, 0.1)];
        for f in &maps {
            let geom = choose_radius(f, 1.25).unwrap();
            let r = geom.radius;
            for _ in 0..1000 {
                let x = Point::new(
                    c(rng.gen_range(-r..r), rng.gen_range(-r..r)),
                    c(rng.gen_range(-r..r), rng.gen_range(-r..r)),
                );
                let back = f.apply(f.apply_inverse(x).unwrap());
                assert!((back - x).norm() <= 1e-12 * x.norm().max(1.0));
            }
        }
        let bir = MapSpec::compose(alloc::vec![HenonFactor::new(
            c(0.3, 0.0),
            Poly::from_real(&[-1.0, 0.0, 1.0]),
            Some(Poly::from_real(&[0.0, 0.02])),
        )
        .unwrap()])
        .unwrap();
        let mut checked = 0;
        while checked < 1000 {
            let x = Point::new(
                c(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)),
                c(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)),
            );
            let coupling = c(0.3, 0.0) + x.w / c(0.3, 0.0) * 0.02;
            if coupling.norm() < 1e-3 {
                continue;
            }
            let back = bir.apply(bir.apply_inverse(x).unwrap());
            assert!((back - x).norm() <= 1e-12 * x.norm().max(1.0));
            checked += 1;
        }
    }

    #[test]
    fn jacobian_constant_by_finite_differences() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        let f = MapSpec::compose(alloc::vec![
            HenonFactor::quadratic(c(-1.0, 0.2), c(0.3, 0.1)),
            HenonFactor::new(c(0.5, 0.0), Poly::from_real(&[0.0, 1.0, 0.0, 1.0]), None).unwrap(),
        ])
        .unwrap();
        for _ in 0..100 {
            let x = Point::new(
                c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
            );
            // Five-point stencil along the real direction (holomorphic partials).
            let h = 1e-3;
            let diff = |e: Point| {
                let at = |s: f64| f.apply(x + e * c(s, 0.0));
                (at(h) - at(-h)) * c(8.0 / (12.0 * h), 0.0) - (at(2.0 * h) - at(-2.0 * h)) * c(1.0 / (12.0 * h), 0.0)
            };
            let dz = diff(Point::real(1.0, 0.0));
            let dw = diff(Point::real(0.0, 1.0));
            let det = dz.z * dw.w - dw.z * dz.w;
            assert!((det - f.jacobian).norm() <= 1e-8 * f.jacobian.norm().max(1e-3), "{det} vs {}", f.jacobian);
        }
    }

    #[test]
    fn swapped_inverse_conjugates_the_inverse() {
        let f = quad(-0.7, 0.4);
        let g = f.swapped_inverse().unwrap();
        assert!((g.jacobian * f.jacobian - c(1.0, 0.0)).norm() < 1e-12);
        let x = Point::new(c(0.3, -0.2), c(0.1, 0.5));
        let lhs = g.apply(x.swap()).swap();
        let rhs = f.apply_inverse(x).unwrap();
        assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn minimal_radius_examples() {
        let r = minimal_radius(&Poly::from_real(&[-1.0, 0.0, 1.0]));
        assert!((r - (1.0 + 2.0_f64.sqrt())).abs() < 1e-8);
        let r = minimal_radius(&Poly::from_real(&[-10.0, 0.0, 1.0]));
        assert!((r - (1.0 + 11.0_f64.sqrt())).abs() < 1e-8, "{r}");
        let r = minimal_radius(&Poly::from_real(&[0.0, 0.0, 1.0]));
        assert!((r - 2.0).abs() < 1e-8);
        let geom = choose_radius(&quad(-1.0, 0.1), 1.25).unwrap();
        assert!((geom.radius - 1.25 * (1.0 + 2.0_f64.sqrt())).abs() < 1e-8);
        assert!((geom.radius - 3.018).abs() < 1e-3);
        assert!(choose_radius(&quad(-1.0, 0.1), 0.5).is_err());
    }

    #[test]
    fn certification_examples() {
        let f = quad(-1.0, 0.1);
        let cert = certify_henonlike(&f, &FiltrationGeometry::new(3.0), 100_000);
        assert_eq!(cert.verdict, CertVerdict::Certified);
        assert!(cert.min_clearance() > 0.0);

        let cert = certify_henonlike(&f, &FiltrationGeometry::new(0.5), 1000);
        assert!(matches!(cert.verdict, CertVerdict::Violated { .. }));

        let exact = minimal_radius(&f.factors[0].p);
        let cert = certify_henonlike(&f, &FiltrationGeometry::new(exact), 1000);
        assert_eq!(cert.verdict, CertVerdict::Inconclusive);
        assert!(cert.radius_clearance.abs() < 1e-6);
    }

    #[test]
    fn filtration_is_forward_invariant() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(11);
        for f in [quad(0.0, 0.05), quad(-1.0, 0.05), quad(-10.0, 0.1)] {
            let geom = choose_radius(&f, 1.25).unwrap();
            let r = geom.radius;
            let mut n = 0;
            while n < 10_000 {
                let mag = r * (1e6 / r).powf(rng.gen::<f64>());
                let z = C::from_polar(mag, rng.gen_range(0.0..2.0 * PI));
                let w = C::from_polar(mag * rng.gen::<f64>(), rng.gen_range(0.0..2.0 * PI));
                let x = Point::new(z, w);
                if !geom.in_escape_forward(&x) {
                    continue;
                }
                assert!(geom.in_escape_forward(&f.apply(x)));
                n += 1;
            }
        }
    }

    #[test]
    fn escape_examples() {
        let f = quad(-10.0, 0.1);
        let geom = FiltrationGeometry::new(5.0);
        let rec = orbit_escape(&f, Point::real(0.0, 0.0), 100, &geom, Side::Forward).unwrap();
        assert_eq!(rec.verdict, Verdict::Escaped);
        assert!(rec.exit_time.unwrap() <= 3);
        assert!(geom.in_escape_forward(&rec.last_point));

        let rec = orbit_escape(&f, Point::real(10.0, 1.0), 100, &geom, Side::Forward).unwrap();
        assert_eq!(rec.exit_time, Some(0));

        // Fixed point of (z² + 0.05 w, 0.05 z): z² + (a² - 1) z = 0, the attracting root z = 0.
        let g = quad(0.0, 0.05);
        let geom = choose_radius(&g, 1.25).unwrap();
        let rec = orbit_escape(&g, Point::real(0.0, 0.0), 10_000, &geom, Side::Forward).unwrap();
        assert_eq!(rec.verdict, Verdict::Inside);
        assert_eq!(rec.exit_time, None);
    }

    #[test]
    fn escaping_orbits_grow_monotonically() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(5);
        let f = quad(-1.0, 0.05);
        let geom = choose_radius(&f, 1.25).unwrap();
        for _ in 0..200 {
            let mut x = Point::new(
                c(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)),
                c(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)),
            );
            let mut prev: Option<f64> = None;
            for _ in 0..60 {
                if !x.is_finite() || x.z.norm() > 1e150 {
                    break;
                }
                if geom.in_escape_forward(&x) {
                    if let Some(p) = prev {
                        assert!(x.z.norm() > p);
                    }
                    prev = Some(x.z.norm());
                }
                x = f.apply(x);
            }
        }
    }
}
