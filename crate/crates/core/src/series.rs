//! Truncated power series in one variable with coefficients in C², and their
//! composition with Hénon factors.

use alloc::vec;
use alloc::vec::Vec;

use num_traits::Zero;

use crate::henon::{HenonFactor, MapSpec, Point};
use crate::poly::Poly;
use crate::C;

/// Scalar series `Σ s_k t^k`, truncated to a fixed number of terms.
#[derive(Debug, Clone, PartialEq)]
pub struct Series(pub Vec<C>);

impl Series {
    pub fn zero(len: usize) -> Self {
        Series(vec![C::zero(); len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn add(&self, o: &Series) -> Series {
        Series(self.0.iter().zip(&o.0).map(|(a, b)| a + b).collect())
    }

    pub fn scale(&self, s: C) -> Series {
        Series(self.0.iter().map(|a| a * s).collect())
    }

    /// Truncated Cauchy product.
    pub fn mul(&self, o: &Series) -> Series {
        let n = self.len().min(o.len());
        let mut out = vec![C::zero(); n];
        for (i, &a) in self.0.iter().enumerate().take(n) {
            if a.is_zero() {
                continue;
            }
            for (j, &b) in o.0.iter().enumerate().take(n - i) {
                out[i + j] += a * b;
            }
        }
        Series(out)
    }

    /// `q(self)` by Horner's rule.
    pub fn compose_poly(&self, q: &Poly) -> Series {
        let n = self.len();
        let mut acc = Series::zero(n);
        for &c in q.coeffs().iter().rev() {
            acc = acc.mul(self);
            acc.0[0] += c;
        }
        acc
    }

    pub fn eval(&self, t: C) -> C {
        self.0.iter().rev().fold(C::zero(), |acc, &c| acc * t + c)
    }

    pub fn eval_d(&self, t: C) -> (C, C) {
        let mut v = C::zero();
        let mut d = C::zero();
        for &c in self.0.iter().rev() {
            d = d * t + v;
            v = v * t + c;
        }
        (v, d)
    }
}

/// Series with values in C².
#[derive(Debug, Clone, PartialEq)]
pub struct Series2 {
    pub z: Series,
    pub w: Series,
}

impl Series2 {
    pub fn zero(len: usize) -> Self {
        Series2 {
            z: Series::zero(len),
            w: Series::zero(len),
        }
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn coeff(&self, k: usize) -> Point {
        Point::new(self.z.0[k], self.w.0[k])
    }

    pub fn set_coeff(&mut self, k: usize, p: Point) {
        self.z.0[k] = p.z;
        self.w.0[k] = p.w;
    }

    /// Copy truncated (or zero-padded) to `len` terms.
    pub fn truncated(&self, len: usize) -> Series2 {
        let mut out = Series2::zero(len);
        for k in 0..len.min(self.len()) {
            out.set_coeff(k, self.coeff(k));
        }
        out
    }

    pub fn eval(&self, t: C) -> Point {
        Point::new(self.z.eval(t), self.w.eval(t))
    }

    /// Value and `t`-derivative.
    pub fn eval_d(&self, t: C) -> (Point, Point) {
        let (z, dz) = self.z.eval_d(t);
        let (w, dw) = self.w.eval_d(t);
        (Point::new(z, w), Point::new(dz, dw))
    }

    pub fn apply_factor(&self, f: &HenonFactor) -> Series2 {
        let mut coupling = match &f.b {
            Some(b) => self.z.compose_poly(b),
            None => Series::zero(self.len()),
        };
        coupling.0[0] += f.a;
        Series2 {
            z: coupling.mul(&self.w).add(&self.z.compose_poly(&f.p)),
            w: self.z.scale(f.a),
        }
    }

    pub fn apply_map(&self, f: &MapSpec) -> Series2 {
        f.factors.iter().fold(self.clone(), |s, fac| s.apply_factor(fac))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::c;

    #[test]
    fn composition_matches_pointwise_evaluation() {
        let f = MapSpec::compose(alloc::vec![
            HenonFactor::new(c(0.3, 0.1), Poly::from_real(&[-1.0, 0.0, 1.0]), Some(Poly::from_real(&[0.0, 0.02]))).unwrap(),
            HenonFactor::quadratic(c(0.2, 0.0), c(0.5, 0.0)),
        ])
        .unwrap();
        let mut s = Series2::zero(12);
        s.set_coeff(0, Point::new(c(0.1, 0.2), c(-0.3, 0.0)));
        s.set_coeff(1, Point::new(c(1.0, 0.0), c(0.5, 0.5)));
        s.set_coeff(2, Point::new(c(0.0, 0.3), c(0.2, 0.0)));
        let image = s.apply_map(&f);
        // A polynomial of degree 2 through a degree-4 map has degree 8 < 12 terms.
        for &t in &[c(0.1, 0.0), c(-0.05, 0.07), c(0.2, -0.1)] {
            let direct = f.apply(s.eval(t));
            assert!((image.eval(t) - direct).norm() < 1e-13);
        }
    }

    #[test]
    fn derivative() {
        let s = Series(alloc::vec![c(1.0, 0.0), c(2.0, 0.0), c(0.0, 3.0)]);
        let (v, d) = s.eval_d(c(2.0, 0.0));
        assert_eq!(v, c(5.0, 12.0));
        assert_eq!(d, c(2.0, 12.0));
    }
}
