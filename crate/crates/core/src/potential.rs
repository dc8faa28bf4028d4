//! Escape-rate potentials G± and the Böttcher coordinate φ⁺.
//!
//! Forward quantities are computed factor by factor. Writing the stage-`k`
//! first coordinate as `u_k = κ_j·z_k` with normalizing constants `κ_j`, each
//! factor acts as `u ↦ u^d·(1 + ε)` in the escape region, so
//!
//! ```text
//! G⁺(x) = log|u_k|/D_k + Σ_{i≥k} log|1 + ε_i| / D_{i+1}
//! φ⁺(x) = u_0 · Π_{i≥0} (1 + ε_i)^{1/D_{i+1}}        (principal roots)
//! ```
//!
//! where `D_k` is the product of the degrees of the first `k` stages. The sums
//! are truncated once the geometric bound on the remainder drops below the
//! tolerance.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use num_traits::Zero;

use crate::error::{Error, Result};
use crate::henon::{orbit_escape, FiltrationGeometry, MapSpec, Point, Side, Verdict};
use crate::C;

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_NMAX: usize = 1000;

/// Beyond this modulus the corrections are below double precision.
const DEEP_MODULUS: f64 = 1e100;
const MAX_TAIL_STAGES: usize = 400;

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialEvaluator {
    pub map: MapSpec,
    pub geom: FiltrationGeometry,
    pub nmax: usize,
    pub tol: f64,
    /// Normalizing constant `κ_j` applied before stage `j`.
    kappa: Vec<C>,
}

/// Böttcher coordinate with bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct BottcherValue {
    pub value: C,
    /// Stage indices at which principal roots of the corrections were taken.
    pub branch_path: Vec<usize>,
    /// `|φ⁺(f(x)) − φ⁺(x)^d| / max(1, |φ⁺(f(x))|)`.
    pub residual: f64,
}

/// Potential together with the holomorphic derivative of `log φ⁺` along a
/// tangent direction. `∂G = Re(dlog)` and the gradient of `G` in a complex
/// chart is `conj(dlog)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialJet {
    pub g: f64,
    pub dlog: C,
}

impl PotentialEvaluator {
    pub fn new(map: MapSpec, geom: FiltrationGeometry) -> Self {
        Self::with_budget(map, geom, DEFAULT_NMAX, DEFAULT_TOL)
    }

    pub fn with_budget(map: MapSpec, geom: FiltrationGeometry, nmax: usize, tol: f64) -> Self {
        let kappa = normalizing_constants(&map);
        PotentialEvaluator {
            map,
            geom,
            nmax: nmax.max(1),
            tol: if tol > 0.0 { tol } else { DEFAULT_TOL },
            kappa,
        }
    }

    pub fn degree(&self) -> usize {
        self.map.degree
    }

    /// Tri-state membership in K⁺ (forward) or K⁻ (backward).
    pub fn k_membership(&self, x: Point, side: Side) -> Verdict {
        match orbit_escape(&self.map, x, self.nmax, &self.geom, side) {
            Ok(rec) => rec.verdict,
            Err(_) => Verdict::Unresolved,
        }
    }

    /// Runs the stage recursion from a point `y` reached after `stages` stages,
    /// calling `visit(stage, ε, D_{stage+1})` on every correction until the
    /// remainder is negligible. Returns `log|u|/D` at the starting stage.
    fn stage_tail(
        &self,
        mut y: Point,
        mut stage: usize,
        mut depth: f64,
        mut visit: impl FnMut(usize, C, f64) -> Result<()>,
    ) -> Result<f64> {
        let m = self.map.factors.len();
        let head = (self.kappa[stage % m] * y.z).norm().ln() / depth;
        for _ in 0..MAX_TAIL_STAGES {
            let j = stage % m;
            let fac = &self.map.factors[j];
            let d = fac.p.degree();
            let lead = fac.p.leading();
            let next = fac.apply(y);
            let main = lead * y.z.powi(d as i32);
            if main.is_zero() || !next.is_finite() || !main.is_finite() {
                break;
            }
            let eps = next.z / main - 1.0;
            depth *= d as f64;
            visit(stage, eps, depth)?;
            y = next;
            stage += 1;
            let en = eps.norm();
            if (en < 0.5 && 2.0 * en / depth < self.tol * 1e-3 && en < 1e-6) || y.z.norm() > DEEP_MODULUS {
                return Ok(head);
            }
        }
        if y.z.norm() > self.geom.radius {
            Ok(head)
        } else {
            Err(Error::Unresolved)
        }
    }

    /// Forward Green function `G⁺ ≥ 0`.
    pub fn green_plus(&self, x: Point) -> Result<f64> {
        let rec = orbit_escape(&self.map, x, self.nmax, &self.geom, Side::Forward)?;
        match rec.verdict {
            Verdict::Inside => Ok(0.0),
            Verdict::Unresolved => Err(Error::Unresolved),
            Verdict::Escaped => {
                let n = rec.exit_time.unwrap_or(0);
                let y = rec.last_point;
                if !y.is_finite() {
                    return Err(Error::Unresolved);
                }
                let m = self.map.factors.len();
                let depth = (self.map.degree as f64).powi(n as i32);
                let mut tail = 0.0;
                let head = self.stage_tail(y, n * m, depth, |_, eps, dk| {
                    tail += (C::new(1.0, 0.0) + eps).norm().ln() / dk;
                    Ok(())
                })?;
                Ok((head + tail).max(0.0))
            }
        }
    }

    /// `G⁺` and `d/ds log φ⁺(x + s·v)` at `s = 0`. Fails on points whose
    /// orbit does not escape within the budget.
    pub fn green_plus_jet(&self, x: Point, v: Point) -> Result<PotentialJet> {
        let m = self.map.factors.len();
        let mut y = x;
        let mut dv = v;
        let mut stage = 0usize;
        let mut depth = 1.0;
        let mut entered = None;
        let mut head = 0.0;
        let mut tail = 0.0;
        let limit = self.nmax * m + MAX_TAIL_STAGES;
        while stage < limit {
            if !y.is_finite() {
                return Err(Error::Unresolved);
            }
            if entered.is_none() && stage % m == 0 && self.geom.in_escape_forward(&y) {
                entered = Some(stage);
                head = (self.kappa[stage % m] * y.z).norm().ln() / depth;
            }
            let j = stage % m;
            let fac = &self.map.factors[j];
            let d = fac.p.degree();
            let (next, ndv) = fac.apply_tangent(y, dv);
            if entered.is_some() {
                let main = fac.p.leading() * y.z.powi(d as i32);
                let eps = next.z / main - 1.0;
                let en = eps.norm();
                tail += (C::new(1.0, 0.0) + eps).norm().ln() / (depth * d as f64);
                if en < 1e-16 || next.z.norm() > DEEP_MODULUS {
                    let dlog = ndv.z / next.z / (depth * d as f64);
                    return Ok(PotentialJet {
                        g: (head + tail).max(0.0),
                        dlog,
                    });
                }
            } else if stage / m >= self.nmax {
                return Err(Error::Unresolved);
            }
            y = next;
            dv = ndv;
            depth *= d as f64;
            stage += 1;
        }
        Err(Error::Unresolved)
    }

    /// Böttcher coordinate on `V⁺`.
    pub fn bottcher(&self, x: Point) -> Result<BottcherValue> {
        if !self.geom.in_escape_forward(&x) {
            return Err(Error::InvalidInput("Böttcher coordinate requires a point of V+"));
        }
        let m = self.map.factors.len();
        let mut logs: Vec<(usize, C, f64)> = Vec::new();
        self.stage_tail(x, 0, 1.0, |stage, eps, dk| {
            let norm = eps.norm();
            if norm >= 1.0 {
                return Err(Error::Branch {
                    stage,
                    correction_modulus: norm,
                });
            }
            logs.push((stage, (C::new(1.0, 0.0) + eps).ln(), dk));
            Ok(())
        })?;
        let u0 = self.kappa[0] * x.z;
        let s0: C = logs.iter().map(|&(_, l, dk)| l / dk).sum();
        let value = u0 * s0.exp();

        // φ⁺ at f(x) from the same corrections, for the residual.
        let fx = self.map.apply(x);
        let dm = self.map.degree as f64;
        let sm: C = logs
            .iter()
            .filter(|&&(s, _, _)| s >= m)
            .map(|&(_, l, dk)| l / (dk / dm))
            .sum();
        let phi_fx = self.kappa[0] * fx.z * sm.exp();
        let power = value.powi(self.map.degree as i32);
        let residual = (phi_fx - power).norm() / phi_fx.norm().max(1.0);
        if !(residual <= self.tol.max(1e-12) * 1e3) {
            return Err(Error::Branch {
                stage: logs.len(),
                correction_modulus: residual,
            });
        }
        Ok(BottcherValue {
            value,
            branch_path: logs.iter().map(|&(s, _, _)| s).collect(),
            residual,
        })
    }

    /// Backward Green function `G⁻ ≥ 0`, the escape rate of `|w|` under `f⁻¹`.
    pub fn green_minus(&self, x: Point) -> Result<f64> {
        let rec = orbit_escape(&self.map, x, self.nmax, &self.geom, Side::Backward)?;
        match rec.verdict {
            Verdict::Inside => return Ok(0.0),
            Verdict::Unresolved => return Err(Error::Unresolved),
            Verdict::Escaped => {}
        }
        let d = self.map.degree as f64;
        let n0 = rec.exit_time.unwrap_or(0);
        let mut y = rec.last_point;
        if !y.is_finite() {
            return Err(Error::Unresolved);
        }
        let mut depth = d.powi(n0 as i32);
        let mut ell = y.w.norm().ln();
        let mut prev_increment: Option<f64> = None;
        for _ in 0..MAX_TAIL_STAGES {
            let next = self.map.apply_inverse(y)?;
            let next_ell = next.w.norm().ln();
            if !next.is_finite() || !next_ell.is_finite() {
                break;
            }
            let increment = next_ell - d * ell;
            ell = next_ell;
            depth *= d;
            y = next;
            if let Some(p) = prev_increment {
                if (increment - p).abs() / depth < self.tol * 1e-3 || y.w.norm() > DEEP_MODULUS {
                    // Remaining increments are constant to working precision.
                    return Ok(((ell + increment / (d - 1.0)) / depth).max(0.0));
                }
            }
            prev_increment = Some(increment);
        }
        match prev_increment {
            Some(inc) => Ok(((ell + inc / (d - 1.0)) / depth).max(0.0)),
            None => Err(Error::Unresolved),
        }
    }
}

/// Constants `κ_j` with `κ_{j+1}·lead_j = κ_j^{d_j}` around the factor cycle,
/// so that every factor acts as `u ↦ u^{d_j}(1 + ε)`.
fn normalizing_constants(map: &MapSpec) -> Vec<C> {
    let m = map.factors.len();
    // κ_0^{D-1} = Π_j lead_j^{d_{j+1}⋯d_{m-1}}.
    let mut log_lambda = C::zero();
    for (j, fac) in map.factors.iter().enumerate() {
        let tail_degree: usize = map.factors[j + 1..].iter().map(|f| f.p.degree()).product();
        log_lambda += fac.p.leading().ln() * tail_degree as f64;
    }
    let d = map.degree as f64;
    let mut kappa = Vec::with_capacity(m);
    let mut k = (log_lambda / (d - 1.0)).exp();
    for fac in &map.factors {
        kappa.push(k);
        k = k.powi(fac.p.degree() as i32) / fac.p.leading();
    }
    kappa
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::henon::{choose_radius, HenonFactor};
    use crate::poly::Poly;
    use crate::c;
    use rand::{Rng, SeedableRng};

    fn evaluator(cc: f64, a: f64) -> PotentialEvaluator {
        let f = MapSpec::quadratic_real(cc, a).unwrap();
        let geom = choose_radius(&f, 1.25).unwrap();
        PotentialEvaluator::new(f, geom)
    }

    /// Escape rate `2^{-n} log|z_n|` at high depth with one Richardson step
    /// removing the `C/2^n` offset.
    fn escape_rate_oracle(f: &MapSpec, x: Point, forward: bool) -> f64 {
        let mut y = x;
        let mut best = 0.0;
        let mut prev = 0.0;
        for n in 0..60 {
            let coord = if forward { y.z } else { y.w };
            if coord.norm() > 1e200 || !y.is_finite() {
                break;
            }
            let cur = coord.norm().ln() / 2f64.powi(n);
            best = if n == 0 { cur } else { 2.0 * cur - prev };
            prev = cur;
            y = if forward { f.apply(y) } else { f.apply_inverse(y).unwrap() };
        }
        best
    }

    #[test]
    fn green_plus_far_out() {
        let ev = evaluator(-1.0, 0.05);
        let g = ev.green_plus(Point::real(1e6, 0.0)).unwrap();
        assert!((g - 1e6_f64.ln()).abs() < 1e-3);
        let oracle = escape_rate_oracle(&ev.map, Point::real(1e6, 0.0), true);
        assert!((g - oracle).abs() < 1e-6, "{g} vs {oracle}");
    }

    #[test]
    fn green_plus_vanishes_on_fixed_point() {
        let ev = evaluator(0.0, 0.05);
        assert_eq!(ev.green_plus(Point::real(0.0, 0.0)).unwrap(), 0.0);
        assert_eq!(ev.green_minus(Point::real(0.0, 0.0)).unwrap(), 0.0);
    }

    #[test]
    fn green_plus_matches_oracle_at_random_points() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(1);
        let ev = evaluator(-10.0, 0.1);
        for _ in 0..200 {
            let x = Point::new(c(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)), c(rng.gen_range(-1.0..1.0), 0.0));
            let g = ev.green_plus(x).unwrap();
            let oracle = escape_rate_oracle(&ev.map, x, true);
            assert!((g - oracle).abs() < 1e-9, "{g} vs {oracle}");
        }
    }

    #[test]
    fn functional_equations() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(2);
        for (cc, a) in [(0.0, 0.05), (-1.0, 0.05), (-10.0, 0.1)] {
            let ev = evaluator(cc, a);
            let r = ev.geom.radius;
            let mut count = 0;
            while count < 500 {
                let x = Point::new(c(rng.gen_range(-r..r), rng.gen_range(-r..r)), c(rng.gen_range(-r..r), rng.gen_range(-r..r)));
                let g = ev.green_plus(x).unwrap();
                if g <= 1e-4 {
                    continue;
                }
                let gf = ev.green_plus(ev.map.apply(x)).unwrap();
                assert!((gf - 2.0 * g).abs() < 1e-8);
                count += 1;
            }
        }
    }

    #[test]
    fn green_minus_functional_equation_and_oracle() {
        let ev = evaluator(-1.0, 0.1);
        let x = Point::real(0.3, 1e3);
        let g = ev.green_minus(x).unwrap();
        assert!(g > 0.0);
        let oracle = escape_rate_oracle(&ev.map, x, false);
        assert!((g - oracle).abs() < 1e-6, "{g} vs {oracle}");
        let gb = ev.green_minus(ev.map.apply_inverse(x).unwrap()).unwrap();
        assert!((gb - 2.0 * g).abs() < 1e-8);

        // Independent route: G⁻ of f equals G⁺ of the swapped inverse.
        let inv = ev.map.swapped_inverse().unwrap();
        let ev_inv = PotentialEvaluator::new(inv, ev.geom);
        let mut rng = rand::rngs::StdRng::seed_from_u64(9);
        for _ in 0..100 {
            let x = Point::new(c(rng.gen_range(-2.0..2.0), 0.0), c(rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0)));
            let a = ev.green_minus(x).unwrap();
            let b = ev_inv.green_plus(x.swap()).unwrap();
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn bottcher_properties() {
        let ev = evaluator(0.0, 0.05);
        let b = ev.bottcher(Point::real(1e6, 0.0)).unwrap();
        assert!((b.value - c(1e6, 0.0)).norm() < 1.0);
        assert!(b.residual < 1e-10);
        let mut rng = rand::rngs::StdRng::seed_from_u64(4);
        for _ in 0..200 {
            let z = C::from_polar(rng.gen_range(3.0..30.0), rng.gen_range(0.0..6.3));
            let x = Point::new(z, z * rng.gen_range(0.0..0.99));
            let phi = ev.bottcher(x).unwrap().value;
            let phif = ev.bottcher(ev.map.apply(x)).unwrap().value;
            assert!((phif - phi * phi).norm() < 1e-6);
            let g = ev.green_plus(x).unwrap();
            assert!((phi.norm().ln() - g).abs() < 2.0 * ev.tol);
        }
    }

    #[test]
    fn bottcher_branch_error_near_boundary() {
        let f = MapSpec::quadratic_real(-10.0, 0.1).unwrap();
        let ev = PotentialEvaluator::new(f, FiltrationGeometry::new(3.0));
        assert!(matches!(ev.bottcher(Point::real(3.1, 0.0)), Err(Error::Branch { .. })));
    }

    #[test]
    fn non_monic_composition_functional_equation() {
        let f = MapSpec::compose(alloc::vec![
            HenonFactor::new(c(0.2, 0.1), Poly::from_real(&[0.5, 0.0, 2.0]), None).unwrap(),
            HenonFactor::new(c(0.3, 0.0), Poly::from_real(&[0.0, 0.0, 0.0, -1.0]), None).unwrap(),
        ])
        .unwrap();
        let geom = choose_radius(&f, 1.5).unwrap();
        let ev = PotentialEvaluator::new(f, geom);
        let r = geom.radius;
        let x = Point::new(c(2.0 * r, 0.3), c(0.1, 0.0));
        let b = ev.bottcher(x).unwrap();
        let bf = ev.bottcher(ev.map.apply(x)).unwrap();
        let pow = b.value.powi(6);
        assert!((bf.value - pow).norm() / pow.norm() < 1e-12);
        assert!((b.value.norm().ln() - ev.green_plus(x).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn jet_matches_finite_differences() {
        let ev = evaluator(-1.0, 0.05);
        let x = Point::new(c(1.7, 0.4), c(0.2, -0.1));
        let v = Point::new(c(0.6, 0.2), c(-0.3, 0.5));
        let jet = ev.green_plus_jet(x, v).unwrap();
        assert!((jet.g - ev.green_plus(x).unwrap()).abs() < 1e-12);
        let h = 1e-6;
        let gp = ev.green_plus(x + v * c(h, 0.0)).unwrap();
        let gm = ev.green_plus(x - v * c(h, 0.0)).unwrap();
        let dg = (gp - gm) / (2.0 * h);
        assert!((dg - jet.dlog.re).abs() < 1e-6, "{dg} vs {}", jet.dlog.re);
        let gp = ev.green_plus(x + v * c(0.0, h)).unwrap();
        let gm = ev.green_plus(x - v * c(0.0, h)).unwrap();
        let dgi = (gp - gm) / (2.0 * h);
        // Along i·v the real part of i·dlog, i.e. -Im(dlog).
        assert!((dgi + jet.dlog.im).abs() < 1e-6);
    }

    #[test]
    fn membership_verdicts() {
        let ev = evaluator(-10.0, 0.1);
        assert_eq!(ev.k_membership(Point::real(1e6, 0.0), Side::Forward), Verdict::Escaped);
        let ev200 = PotentialEvaluator::with_budget(ev.map.clone(), FiltrationGeometry::new(5.0), 200, 1e-10);
        assert_eq!(ev200.k_membership(Point::real(0.1, 0.0), Side::Forward), Verdict::Escaped);
    }
}
