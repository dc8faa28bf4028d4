use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use num_traits::Zero;

use crate::C;

/// Univariate complex polynomial, coefficients in ascending degree.
///
/// Trailing zero coefficients are trimmed on construction so that `degree`
/// is the true degree (the zero polynomial has degree 0 and no coefficients).
#[derive(Debug, Clone, PartialEq)]
pub struct Poly {
    coeffs: Vec<C>,
}

impl Poly {
    pub fn new(mut coeffs: Vec<C>) -> Self {
        while coeffs.last().is_some_and(|c| c.is_zero()) {
            coeffs.pop();
        }
        Poly { coeffs }
    }

    pub fn from_real(coeffs: &[f64]) -> Self {
        Self::new(coeffs.iter().map(|&r| C::new(r, 0.0)).collect())
    }

    /// `z^d + c`.
    pub fn monic_quadratic(c: C) -> Self {
        Self::new(alloc::vec![c, C::zero(), C::new(1.0, 0.0)])
    }

    pub fn coeffs(&self) -> &[C] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn leading(&self) -> C {
        self.coeffs.last().copied().unwrap_or_else(C::zero)
    }

    #[inline]
    pub fn eval(&self, z: C) -> C {
        self.coeffs
            .iter()
            .rev()
            .fold(C::zero(), |acc, &c| acc * z + c)
    }

    /// Value and first derivative by Horner's scheme.
    #[inline]
    pub fn eval_d(&self, z: C) -> (C, C) {
        let mut v = C::zero();
        let mut d = C::zero();
        for &c in self.coeffs.iter().rev() {
            d = d * z + v;
            v = v * z + c;
        }
        (v, d)
    }

    /// Value, first and second derivative.
    pub fn eval_d2(&self, z: C) -> (C, C, C) {
        let mut v = C::zero();
        let mut d = C::zero();
        let mut dd = C::zero();
        for &c in self.coeffs.iter().rev() {
            dd = dd * z + d * 2.0;
            d = d * z + v;
            v = v * z + c;
        }
        (v, d, dd)
    }

    pub fn derivative(&self) -> Poly {
        Poly::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &c)| c * k as f64)
                .collect(),
        )
    }

    /// `self(z) - y`.
    pub fn shifted(&self, y: C) -> Poly {
        let mut coeffs = self.coeffs.clone();
        if coeffs.is_empty() {
            coeffs.push(C::zero());
        }
        coeffs[0] -= y;
        Poly::new(coeffs)
    }

    /// All roots by the Aberth–Ehrlich iteration, polished with Newton steps.
    pub fn roots(&self) -> Vec<C> {
        let n = self.degree();
        if n == 0 {
            return Vec::new();
        }
        let lead = self.leading();
        let monic: Vec<C> = self.coeffs.iter().map(|&c| c / lead).collect();
        let monic = Poly { coeffs: monic };
        // Cauchy-type radius for the initial circle.
        let radius = 1.0
            + monic.coeffs[..n]
                .iter()
                .map(|c| c.norm())
                .fold(0.0_f64, f64::max)
                .min(1e150);
        let scale = radius.min(
            monic.coeffs[..n]
                .iter()
                .map(|c| c.norm())
                .fold(0.0_f64, f64::max)
                .powf(1.0 / n as f64)
                + 1.0,
        );
        let mut z: Vec<C> = (0..n)
            .map(|k| {
                let theta = 2.0 * core::f64::consts::PI * (k as f64 + 0.25) / n as f64 + 0.4;
                C::from_polar(scale, theta)
            })
            .collect();
        for _ in 0..500 {
            let mut max_step = 0.0_f64;
            for i in 0..n {
                let (v, d) = monic.eval_d(z[i]);
                if v.is_zero() {
                    continue;
                }
                let ratio = v / d;
                let mut s = C::zero();
                for j in 0..n {
                    if j != i {
                        let diff = z[i] - z[j];
                        if !diff.is_zero() {
                            s += diff.inv();
                        }
                    }
                }
                let denom = C::new(1.0, 0.0) - ratio * s;
                let step = if denom.is_zero() { ratio } else { ratio / denom };
                if step.re.is_finite() && step.im.is_finite() {
                    z[i] -= step;
                    max_step = max_step.max(step.norm() / (1.0 + z[i].norm()));
                }
            }
            if max_step < 1e-15 {
                break;
            }
        }
        z
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::c;

    #[test]
    fn horner_matches_direct_expansion() {
        let p = Poly::new(alloc::vec![c(1.0, 0.0), c(0.0, 2.0), c(3.0, 0.0)]);
        let z = c(0.5, -1.0);
        let direct = c(1.0, 0.0) + c(0.0, 2.0) * z + c(3.0, 0.0) * z * z;
        assert!((p.eval(z) - direct).norm() < 1e-14);
        let (_, d, dd) = p.eval_d2(z);
        assert!((d - (c(0.0, 2.0) + c(6.0, 0.0) * z)).norm() < 1e-14);
        assert!((dd - c(6.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn trailing_zeros_are_trimmed() {
        let p = Poly::from_real(&[1.0, 2.0, 0.0, 0.0]);
        assert_eq!(p.degree(), 1);
    }

    #[test]
    fn roots_of_cubic() {
        // (z - 1)(z + 2)(z - i)
        let r = [c(1.0, 0.0), c(-2.0, 0.0), c(0.0, 1.0)];
        let p = Poly::new(alloc::vec![
            -(r[0] * r[1] * r[2]),
            r[0] * r[1] + r[0] * r[2] + r[1] * r[2],
            -(r[0] + r[1] + r[2]),
            c(1.0, 0.0),
        ]);
        let roots = p.roots();
        for target in r {
            assert!(roots.iter().any(|z| (z - target).norm() < 1e-10));
        }
    }
}
