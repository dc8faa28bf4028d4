//! Small dense linear algebra over C.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;

use crate::henon::{Mat2, Point};
use crate::C;

/// Eigenvalues of a 2×2 matrix with known determinant, ordered by
/// decreasing modulus. The small eigenvalue is recovered as `det/λ_big`,
/// which stays accurate when the two moduli differ by many orders.
pub fn eigenvalues(m: &Mat2, det: C) -> [C; 2] {
    let tr = m[0][0] + m[1][1];
    let disc = (tr * tr - det * 4.0).sqrt();
    let (r1, r2) = ((tr + disc) * 0.5, (tr - disc) * 0.5);
    let big = if r1.norm() >= r2.norm() { r1 } else { r2 };
    if big.norm() == 0.0 {
        return [big, big];
    }
    [big, det / big]
}

/// Unit eigenvector for `lambda`, phase-normalized so that its largest
/// component is real and positive.
pub fn eigenvector(m: &Mat2, lambda: C) -> Point {
    let a = Point::new(m[0][1], lambda - m[0][0]);
    let b = Point::new(lambda - m[1][1], m[1][0]);
    let v = if a.norm() >= b.norm() { a } else { b };
    normalize(v)
}

pub fn normalize(v: Point) -> Point {
    let big = if v.z.norm() >= v.w.norm() { v.z } else { v.w };
    if big.norm() == 0.0 {
        return v;
    }
    let phase = big.conj() / big.norm();
    v * (phase / v.norm())
}

/// Solves `m·x = b`; `None` if `m` is numerically singular.
pub fn solve2(m: &Mat2, b: Point) -> Option<Point> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let scale = m.iter().flatten().map(|x| x.norm()).fold(0.0, f64::max);
    if det.norm() <= 1e-300 || det.norm() <= f64::EPSILON * scale * scale * 1e-6 {
        return None;
    }
    Some(Point::new(
        (m[1][1] * b.z - m[0][1] * b.w) / det,
        (m[0][0] * b.w - m[1][0] * b.z) / det,
    ))
}

/// Frobenius norm, an upper bound for the operator norm.
pub fn frobenius(m: &Mat2) -> f64 {
    m.iter().flatten().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Solves the dense system `a·x = b` given `a` in row-major order.
pub fn solve_dense(n: usize, a: Vec<C>, b: Vec<C>) -> Option<Vec<C>> {
    let m = DMatrix::from_row_slice(n, n, &a);
    let rhs = DVector::from_vec(b);
    let x = m.lu().solve(&rhs)?;
    if x.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
        Some(x.iter().copied().collect())
    } else {
        None
    }
}
