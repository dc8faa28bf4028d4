//! Winding numbers of closed curves around the origin, for argument-principle
//! zero counting.

use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::C;

/// Largest `|log(g(b)/g(a))|` accepted between consecutive samples.
const MAX_LOG_STEP: f64 = 0.5;
const MAX_DEPTH: u32 = 40;

/// Certified integer winding number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Winding {
    pub count: i64,
    /// Distance of the accumulated turning number from the nearest integer.
    pub residual: f64,
    /// Number of curve evaluations spent.
    pub evaluations: usize,
    /// Smallest modulus seen along the curve.
    pub min_modulus: f64,
}

/// Closed curve in the plane, parametrized over `s ∈ [0, 1]`.
pub trait Contour {
    fn point(&self, s: f64) -> C;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Circle {
    pub center: C,
    pub radius: f64,
}

impl Contour for Circle {
    fn point(&self, s: f64) -> C {
        self.center + C::from_polar(self.radius, 2.0 * PI * s)
    }
}

/// Axis-aligned rectangle traversed counterclockwise from its lower-left corner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub lo: C,
    pub hi: C,
}

impl Rect {
    pub fn center(&self) -> C {
        (self.lo + self.hi) * 0.5
    }

    pub fn width(&self) -> f64 {
        (self.hi.re - self.lo.re).max(self.hi.im - self.lo.im)
    }

    pub fn contains(&self, t: C) -> bool {
        t.re >= self.lo.re && t.re <= self.hi.re && t.im >= self.lo.im && t.im <= self.hi.im
    }

    /// Splits into four quadrants at the given relative position.
    pub fn split(&self, frac: f64) -> [Rect; 4] {
        let mx = self.lo.re + frac * (self.hi.re - self.lo.re);
        let my = self.lo.im + frac * (self.hi.im - self.lo.im);
        [
            Rect { lo: self.lo, hi: C::new(mx, my) },
            Rect { lo: C::new(mx, self.lo.im), hi: C::new(self.hi.re, my) },
            Rect { lo: C::new(mx, my), hi: self.hi },
            Rect { lo: C::new(self.lo.re, my), hi: C::new(mx, self.hi.im) },
        ]
    }
}

impl Contour for Rect {
    fn point(&self, s: f64) -> C {
        let (w, h) = (self.hi.re - self.lo.re, self.hi.im - self.lo.im);
        let per = 2.0 * (w + h);
        let mut l = (s - s.floor()) * per;
        if l < w {
            return C::new(self.lo.re + l, self.lo.im);
        }
        l -= w;
        if l < h {
            return C::new(self.hi.re, self.lo.im + l);
        }
        l -= h;
        if l < w {
            return C::new(self.hi.re - l, self.hi.im);
        }
        l -= w;
        C::new(self.lo.re, self.hi.im - l)
    }
}

/// Winding number of `s ↦ g(s)` around 0 over a closed parameter loop
/// `[0, 1]`. Segments are bisected until the complex log-increment of `g`
/// is small and agrees with the sum over both halves. Fails with `ContourThroughZero` when `|g|` drops below `floor`.
pub fn winding_number<G>(mut g: G, base: usize, floor: f64) -> Result<Winding>
where
    G: FnMut(f64) -> Result<C>,
{
    let base = base.max(8);
    let mut evaluations = 0usize;
    let mut min_modulus = f64::INFINITY;
    let mut eval = |s: f64, ev: &mut usize, mm: &mut f64| -> Result<C> {
        let v = g(s)?;
        *ev += 1;
        let m = v.norm();
        if !m.is_finite() {
            return Err(Error::InvalidInput("non-finite value on contour"));
        }
        *mm = mm.min(m);
        if m <= floor {
            return Err(Error::ContourThroughZero { distance: m });
        }
        Ok(v)
    };
    let first = eval(0.0, &mut evaluations, &mut min_modulus)?;
    let mut total = 0.0;
    let mut prev = first;
    let mut stack: alloc::vec::Vec<(f64, f64, C, C, u32)> = alloc::vec::Vec::new();
    for i in 0..base {
        let s0 = i as f64 / base as f64;
        let s1 = (i + 1) as f64 / base as f64;
        let end = if i + 1 == base {
            first
        } else {
            eval(s1, &mut evaluations, &mut min_modulus)?
        };
        stack.push((s0, s1, prev, end, 0));
        while let Some((a, b, va, vb, depth)) = stack.pop() {
            let step = (vb / va).ln();
            let m = 0.5 * (a + b);
            let vm = eval(m, &mut evaluations, &mut min_modulus)?;
            let halves = (vm / va).ln() + (vb / vm).ln();
            if step.norm() <= MAX_LOG_STEP && (halves - step).norm() < 1e-6 {
                total += halves.im;
                continue;
            }
            if depth >= MAX_DEPTH {
                return Err(Error::ContourThroughZero { distance: va.norm().min(vb.norm()) });
            }
            // Later segment first so that the earlier half is processed next.
            stack.push((m, b, vm, vb, depth + 1));
            stack.push((a, m, va, vm, depth + 1));
        }
        prev = end;
    }
    let turns = total / (2.0 * PI);
    let count = turns.round();
    Ok(Winding {
        count: count as i64,
        residual: (turns - count).abs(),
        evaluations,
        min_modulus,
    })
}

/// Number of zeros (with multiplicity) of `h` inside a contour, with the
/// half-step cross-check: the count is accepted only if sampling with twice
/// the base resolution yields the same integer.
pub fn count_zeros<K, H>(contour: &K, mut h: H, base: usize, floor: f64) -> Result<Winding>
where
    K: Contour,
    H: FnMut(C) -> Result<C>,
{
    let coarse = winding_number(|s| h(contour.point(s)), base, floor)?;
    let fine = winding_number(|s| h(contour.point(s)), 2 * base, floor)?;
    if coarse.count != fine.count || coarse.residual >= 0.1 || fine.residual >= 0.1 {
        return Err(Error::ContourThroughZero {
            distance: coarse.min_modulus.min(fine.min_modulus),
        });
    }
    Ok(Winding {
        evaluations: coarse.evaluations + fine.evaluations,
        ..fine
    })
}
