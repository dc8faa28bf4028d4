//! External rays: descending gradient lines of `G⁺∘ψ` in a leaf chart.
//!
//! Writing `F = log φ⁺∘ψ`, the potential is `G = Re F` and its chart
//! gradient is `conj(F')`. Rays solve `dt/dℓ = G/F'` in `ℓ = log G`, level
//! curves solve `dt/dθ = i/F'` in `θ = arg φ⁺∘ψ`.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::henon::Point;
use crate::measure::EmpiricalMeasure;
use crate::potential::{PotentialEvaluator, PotentialJet};
use crate::saddle::{default_search_radius, leaf_eval, LeafParametrization};
use crate::C;

pub const DEFAULT_EPSILON: f64 = 1e-4;
/// Gradient modulus below which a ray is declared to have met a critical point.
pub const GRADIENT_FLOOR: f64 = 1e-12;

const ENDPOINT_NEWTON: usize = 3;
const MAX_THETA_STEP: f64 = 0.05;
const MAX_LOG_STEP: f64 = 0.5;
const MAX_TURNS: usize = 16;
const LANDING_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayConfig {
    /// Chart radius searched for level crossings; `None` derives it from
    /// where the leaf leaves the bidisk.
    pub chart_radius: Option<f64>,
    pub probes: usize,
    pub max_steps: usize,
    /// Local error tolerance per step, relative to `1 + |t|`.
    pub tol: f64,
}

impl Default for RayConfig {
    fn default() -> Self {
        RayConfig {
            chart_radius: None,
            probes: 64,
            max_steps: 4000,
            tol: 1e-11,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RayStatus {
    Landed,
    HitCriticalPoint,
    BudgetExhausted,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RaySample {
    pub t: C,
    pub g: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RayPath {
    /// Chart points with strictly decreasing potential.
    pub samples: Vec<RaySample>,
    pub landing: Option<Point>,
    pub status: RayStatus,
}

impl RayPath {
    pub fn end(&self) -> RaySample {
        *self.samples.last().expect("a ray has at least its start sample")
    }

    pub fn steps(&self) -> usize {
        self.samples.len() - 1
    }
}

/// `G` and `F'` at a chart point. Falls back to central differences of `G`
/// where the jet is unavailable.
pub fn chart_jet(ev: &PotentialEvaluator, psi: &LeafParametrization, t: C) -> Result<PotentialJet> {
    let lp = leaf_eval(psi, t);
    match ev.green_plus_jet(lp.point, lp.tangent) {
        Ok(j) => Ok(j),
        Err(_) => {
            let h = 1e-6 * t.norm().max(1.0);
            let g = |s: C| ev.green_plus(leaf_eval(psi, s).point);
            let gx = (g(t + h)? - g(t - h)?) / (2.0 * h);
            let gy = (g(t + C::new(0.0, h))? - g(t - C::new(0.0, h))?) / (2.0 * h);
            Ok(PotentialJet {
                g: ev.green_plus(lp.point)?,
                dlog: C::new(gx, -gy),
            })
        }
    }
}

fn chart_radius(psi: &LeafParametrization, ev: &PotentialEvaluator, cfg: &RayConfig) -> f64 {
    cfg.chart_radius
        .unwrap_or_else(|| 128.0 * default_search_radius(psi, &ev.geom))
}

/// Newton iteration `t ← t − (G − level)/F'` onto a level curve.
fn snap_to_level(ev: &PotentialEvaluator, psi: &LeafParametrization, mut t: C, level: f64, iters: usize) -> Result<(C, PotentialJet)> {
    let mut j = chart_jet(ev, psi, t)?;
    for _ in 0..iters {
        if j.dlog.norm() < GRADIENT_FLOOR {
            return Err(Error::CriticalLevel { level });
        }
        let dt = C::new(j.g - level, 0.0) / j.dlog;
        t -= dt;
        j = chart_jet(ev, psi, t)?;
        if (j.g - level).abs() <= 1e-15 * level.max(1.0) {
            break;
        }
    }
    Ok((t, j))
}

/// First crossing of `G∘ψ = level` along the ray `s·e^{iα}`, `0 < s ≤ rmax`.
fn probe_crossing(ev: &PotentialEvaluator, psi: &LeafParametrization, dir: C, level: f64, rmax: f64) -> Option<C> {
    const SAMPLES: usize = 512;
    let g = |s: f64| ev.green_plus(leaf_eval(psi, dir * s).point).ok();
    let mut lo = 0.0;
    for k in 1..=SAMPLES {
        let s = rmax * k as f64 / SAMPLES as f64;
        let v = g(s)?;
        if v >= level {
            let mut hi = s;
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                match g(mid) {
                    Some(gm) if gm >= level => hi = mid,
                    Some(_) => lo = mid,
                    None => return None,
                }
            }
            return Some(dir * hi);
        }
        lo = s;
    }
    None
}

/// Turns of `arg φ⁺∘ψ` needed to close the level curve through `t0`, or
/// `None` when it stays open for `MAX_TURNS` turns.
pub fn level_curve_turns(
    ev: &PotentialEvaluator,
    psi: &LeafParametrization,
    t0: C,
    level: f64,
) -> Result<Option<usize>> {
    let sub = (2.0 * core::f64::consts::PI / MAX_THETA_STEP).ceil() as usize;
    let h = 2.0 * core::f64::consts::PI / sub as f64;
    let mut t = t0;
    for turn in 1..=MAX_TURNS {
        t = advance_level(ev, psi, t, level, h, sub)?;
        if (t - t0).norm() <= 1e-3 * (1.0 + t0.norm()) {
            return Ok(Some(turn));
        }
    }
    Ok(None)
}

/// Moves `sub` steps of `h` in `arg φ⁺∘ψ` along a level curve.
fn advance_level(ev: &PotentialEvaluator, psi: &LeafParametrization, mut t: C, level: f64, h: f64, sub: usize) -> Result<C> {
    let field = |s: C| -> Result<C> {
        let j = chart_jet(ev, psi, s)?;
        if j.dlog.norm() < GRADIENT_FLOOR {
            return Err(Error::CriticalLevel { level });
        }
        Ok(C::new(0.0, 1.0) / j.dlog)
    };
    for _ in 0..sub {
        t = rk4(&field, t, h)?;
        t = snap_to_level(ev, psi, t, level, 2)?.0;
    }
    Ok(snap_to_level(ev, psi, t, level, 4)?.0)
}

/// `count` points on `{G⁺∘ψ = level}` equally spaced in `arg φ⁺∘ψ`. The level
/// curve is the boundary of the component of `{G⁺∘ψ < level}` holding the
/// base point; a closed curve winding `D` times is sampled over all `D`
/// turns, an open one over a single turn.
pub fn sample_ray_starts(
    ev: &PotentialEvaluator,
    psi: &LeafParametrization,
    level: f64,
    count: usize,
    cfg: &RayConfig,
) -> Result<Vec<C>> {
    if !(level > 0.0) {
        return Err(Error::InvalidInput("ray start level must be positive"));
    }
    let rmax = chart_radius(psi, ev, cfg);
    let probes = cfg.probes.max(1);
    let t0 = (0..probes)
        .find_map(|k| {
            let dir = C::from_polar(1.0, 2.0 * core::f64::consts::PI * k as f64 / probes as f64);
            probe_crossing(ev, psi, dir, level, rmax)
        })
        .ok_or(Error::LevelNotFound { level })?;
    let (mut t, _) = snap_to_level(ev, psi, t0, level, 8)?;
    let mut out = Vec::with_capacity(count);
    if count == 0 {
        return Ok(out);
    }
    let turns = if count > 1 {
        level_curve_turns(ev, psi, t, level)?.unwrap_or(1)
    } else {
        1
    };
    out.push(t);
    let gap = 2.0 * core::f64::consts::PI * turns as f64 / count as f64;
    let sub = (gap / MAX_THETA_STEP).ceil() as usize;
    for _ in 1..count {
        t = advance_level(ev, psi, t, level, gap / sub as f64, sub)?;
        out.push(t);
    }
    Ok(out)
}

fn rk4(field: &impl Fn(C) -> Result<C>, t: C, h: f64) -> Result<C> {
    let k1 = field(t)?;
    let k2 = field(t + k1 * (0.5 * h))?;
    let k3 = field(t + k2 * (0.5 * h))?;
    let k4 = field(t + k3 * h)?;
    Ok(t + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}

/// Follows the gradient line from `t0` down to the level `target`.
pub fn flow_to_level(
    ev: &PotentialEvaluator,
    psi: &LeafParametrization,
    t0: C,
    target: f64,
    cfg: &RayConfig,
) -> RayPath {
    let done = |samples, status| RayPath {
        samples,
        landing: None,
        status,
    };
    let mut samples = Vec::new();
    let Ok(j0) = chart_jet(ev, psi, t0) else {
        return done(samples_with(t0, f64::NAN), RayStatus::BudgetExhausted);
    };
    samples.push(RaySample { t: t0, g: j0.g });
    if j0.g <= target {
        return done(samples, RayStatus::Landed);
    }
    if !(target > 0.0) {
        return done(samples, RayStatus::BudgetExhausted);
    }
    let field = |s: C| -> Result<C> {
        let j = chart_jet(ev, psi, s)?;
        if j.dlog.norm() < GRADIENT_FLOOR || !(j.g > 0.0) {
            return Err(Error::CriticalLevel { level: j.g });
        }
        Ok(C::new(j.g, 0.0) / j.dlog)
    };
    // Aim slightly below the target: near the filled set the chart cannot
    // resolve the level more finely than `|F'|·ulp(t)`.
    let aim = target * (1.0 - LANDING_MARGIN);
    let goal = aim.ln();
    let (mut t, mut g) = (t0, j0.g);
    let mut ell = g.ln();
    let mut h = -0.25f64;
    let mut steps = 0;
    while ell > goal {
        if steps >= cfg.max_steps {
            return done(samples, RayStatus::BudgetExhausted);
        }
        steps += 1;
        match chart_jet(ev, psi, t) {
            Ok(j) if j.dlog.norm() < GRADIENT_FLOOR => return done(samples, RayStatus::HitCriticalPoint),
            Ok(_) => {}
            Err(_) => return done(samples, RayStatus::BudgetExhausted),
        }
        let hs = h.max(goal - ell);
        let full = rk4(&field, t, hs);
        let half = rk4(&field, t, 0.5 * hs).and_then(|m| rk4(&field, m, 0.5 * hs));
        let (full, half) = match (full, half) {
            (Ok(a), Ok(b)) => (a, b),
            _ => {
                h *= 0.25;
                if h.abs() < 1e-12 {
                    return done(samples, RayStatus::HitCriticalPoint);
                }
                continue;
            }
        };
        let err = (half - full).norm() / 15.0;
        let scale = cfg.tol * (1.0 + t.norm());
        let factor = if err > 0.0 { 0.9 * (scale / err).powf(0.2) } else { 2.0 };
        if err > scale {
            h = hs * factor.clamp(0.1, 0.9);
            if h.abs() < 1e-12 {
                return done(samples, RayStatus::BudgetExhausted);
            }
            continue;
        }
        let next = half + (half - full) / 15.0;
        let gn = match chart_jet(ev, psi, next) {
            Ok(j) => j.g,
            Err(_) => return done(samples, RayStatus::BudgetExhausted),
        };
        if !(gn < g) {
            h = hs * 0.5;
            continue;
        }
        t = next;
        g = gn;
        ell = if hs == goal - ell { goal } else { g.ln() };
        samples.push(RaySample { t, g });
        h = (hs * factor.clamp(1.0, 2.0)).max(-MAX_LOG_STEP);
    }
    // Endpoint refinement onto the goal level, kept strictly below the
    // previous sample.
    if let Ok((tn, jn)) = snap_to_level(ev, psi, t, aim, ENDPOINT_NEWTON) {
        let last = samples.len() - 1;
        let prev = if last > 0 { samples[last - 1].g } else { f64::INFINITY };
        if jn.g < prev && jn.g <= target {
            samples[last] = RaySample { t: tn, g: jn.g };
        }
    }
    let end = *samples.last().expect("nonempty");
    if end.g <= target {
        done(samples, RayStatus::Landed)
    } else {
        done(samples, RayStatus::BudgetExhausted)
    }
}

fn samples_with(t: C, g: f64) -> Vec<RaySample> {
    alloc::vec![RaySample { t, g }]
}

/// Traces the ray from `t0` until `G⁺ ≤ eps`; landed rays carry their
/// endpoint in ℂ².
pub fn trace_ray(ev: &PotentialEvaluator, psi: &LeafParametrization, t0: C, eps: f64, cfg: &RayConfig) -> RayPath {
    let mut path = flow_to_level(ev, psi, t0, eps, cfg);
    if path.status == RayStatus::Landed {
        path.landing = Some(leaf_eval(psi, path.end().t).point);
    }
    path
}

pub fn trace_rays(ev: &PotentialEvaluator, psi: &LeafParametrization, starts: &[C], eps: f64, cfg: &RayConfig) -> Vec<RayPath> {
    starts.iter().map(|&t| trace_ray(ev, psi, t, eps, cfg)).collect()
}

/// Equal-weight measure on ray endpoints with status tallies.
#[derive(Debug, Clone, PartialEq)]
pub struct LandingMeasure {
    pub measure: EmpiricalMeasure,
    pub landed: usize,
    pub hit_critical: usize,
    pub exhausted: usize,
}

impl LandingMeasure {
    pub fn from_paths(paths: &[RayPath]) -> Result<Self> {
        let mut pts = Vec::new();
        let (mut hit_critical, mut exhausted) = (0, 0);
        for p in paths {
            match p.status {
                RayStatus::Landed => pts.extend(p.landing),
                RayStatus::HitCriticalPoint => hit_critical += 1,
                RayStatus::BudgetExhausted => exhausted += 1,
            }
        }
        let landed = pts.len();
        Ok(LandingMeasure {
            measure: EmpiricalMeasure::uniform(pts)?,
            landed,
            hit_critical,
            exhausted,
        })
    }

    pub fn unlanded_fraction(&self) -> f64 {
        let total = self.landed + self.hit_critical + self.exhausted;
        (self.hit_critical + self.exhausted) as f64 / total as f64
    }
}

/// Traces `count` rays started on the level `r` and collects their endpoints.
pub fn landing_measure(
    ev: &PotentialEvaluator,
    psi: &LeafParametrization,
    r: f64,
    eps: f64,
    count: usize,
    cfg: &RayConfig,
) -> Result<LandingMeasure> {
    if count == 0 {
        return Err(Error::EmptyMeasure);
    }
    let starts = sample_ray_starts(ev, psi, r, count, cfg)?;
    LandingMeasure::from_paths(&trace_rays(ev, psi, &starts, eps, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::henon::{choose_radius, orbit_escape, MapSpec, Side, Verdict};
    use crate::measure::{compare_measures, mu_samples_periodic};
    use crate::saddle::{periodic_points, unstable_parametrization, SeedSpec, DEFAULT_ORDER};

    fn connected() -> (PotentialEvaluator, LeafParametrization) {
        let f = MapSpec::quadratic_real(0.0, 0.05).unwrap();
        let geom = choose_radius(&f, 1.25).unwrap();
        let o = periodic_points(&f, &geom, 1, &SeedSpec::default())
            .orbits
            .into_iter()
            .find(|o| o.is_saddle())
            .unwrap();
        let psi = unstable_parametrization(&f, &o, DEFAULT_ORDER).unwrap();
        (PotentialEvaluator::new(f, geom), psi)
    }

    fn arg(ev: &PotentialEvaluator, psi: &LeafParametrization, t: C) -> f64 {
        ev.bottcher(leaf_eval(psi, t).point).unwrap().value.arg()
    }

    #[test]
    fn starts_are_equally_spaced_in_argument() {
        let (ev, psi) = connected();
        let cfg = RayConfig::default();
        let starts = sample_ray_starts(&ev, &psi, 1.0, 8, &cfg).unwrap();
        assert_eq!(starts.len(), 8);
        let a0 = arg(&ev, &psi, starts[0]);
        let two_pi = 2.0 * core::f64::consts::PI;
        for (k, &t) in starts.iter().enumerate() {
            let g = ev.green_plus(leaf_eval(&psi, t).point).unwrap();
            assert!((g - 1.0).abs() <= 1e-8);
            let d = arg(&ev, &psi, t) - a0 - two_pi * k as f64 / 8.0;
            let wrapped = d - two_pi * (d / two_pi).round();
            assert!(wrapped.abs() <= 1e-6, "k={k} off by {wrapped}");
        }
        let one = sample_ray_starts(&ev, &psi, 1.0, 1, &cfg).unwrap();
        assert!((ev.green_plus(leaf_eval(&psi, one[0]).point).unwrap() - 1.0).abs() <= 1e-8);
        assert!(matches!(
            sample_ray_starts(&ev, &psi, 1e6, 4, &cfg),
            Err(Error::LevelNotFound { .. })
        ));
    }

    #[test]
    fn rays_descend_and_land_near_j() {
        let (ev, psi) = connected();
        let cfg = RayConfig::default();
        let starts = sample_ray_starts(&ev, &psi, 1.0, 64, &cfg).unwrap();
        let paths = trace_rays(&ev, &psi, &starts, DEFAULT_EPSILON, &cfg);
        let mut near = 0;
        for p in &paths {
            assert!(p.samples.windows(2).all(|w| w[1].g < w[0].g));
            assert_eq!(p.status, RayStatus::Landed);
            assert!(p.end().g <= DEFAULT_EPSILON);
            let x = p.landing.unwrap();
            assert!(ev.green_plus(x).unwrap() <= DEFAULT_EPSILON * (1.0 + 1e-6));
            if orbit_escape(&ev.map, x, 4, &ev.geom, Side::Backward).unwrap().verdict == Verdict::Inside {
                near += 1;
            }
        }
        assert!(near * 100 >= 95 * paths.len());
    }

    #[test]
    fn start_below_threshold_lands_immediately() {
        let (ev, psi) = connected();
        let p = trace_ray(&ev, &psi, C::new(0.0, 0.0), DEFAULT_EPSILON, &RayConfig::default());
        assert_eq!(p.status, RayStatus::Landed);
        assert_eq!(p.steps(), 0);
    }

    #[test]
    fn flow_composes() {
        let (ev, psi) = connected();
        let cfg = RayConfig::default();
        for t0 in sample_ray_starts(&ev, &psi, 1.0, 5, &cfg).unwrap() {
            let direct = flow_to_level(&ev, &psi, t0, 0.01, &cfg);
            let mid = flow_to_level(&ev, &psi, t0, 0.1, &cfg);
            let two = flow_to_level(&ev, &psi, mid.end().t, 0.01, &cfg);
            assert_eq!(direct.status, RayStatus::Landed);
            assert!((direct.end().t - two.end().t).norm() <= 1e-6);
        }
    }

    #[test]
    fn landing_measure_matches_periodic_measure() {
        let (ev, psi) = connected();
        let cfg = RayConfig::default();
        let lm = landing_measure(&ev, &psi, 1.0, DEFAULT_EPSILON, 256, &cfg).unwrap();
        assert!((lm.measure.total_mass() - 1.0).abs() < 1e-12);
        assert_eq!(lm.unlanded_fraction(), 0.0);
        let mu = mu_samples_periodic(&ev.map, &ev.geom, 8, &SeedSpec::default()).unwrap();
        let tv = compare_measures(&lm.measure, &mu, 16, ev.geom.radius).unwrap();
        assert!(tv <= 0.15, "tv {tv}");
        assert_eq!(landing_measure(&ev, &psi, 1.0, DEFAULT_EPSILON, 0, &cfg), Err(Error::EmptyMeasure));
    }
}
