//! Periodic orbits, multipliers, power-series unstable manifolds and
//! attracting-orbit search.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use num_traits::Zero;

use crate::error::{Error, Result};
use crate::henon::{mat_det, mat_identity, mat_mul, FiltrationGeometry, MapSpec, Mat2, Point};
use crate::linalg::{eigenvalues, eigenvector, frobenius, solve2, solve_dense};
use crate::potential::PotentialEvaluator;
use crate::series::Series2;
use crate::C;

/// Half-width of the band `||μ| − 1| ≤ NEUTRAL_BAND` classified as neutral.
pub const NEUTRAL_BAND: f64 = 1e-6;
/// Orbit points closer than this are identified.
pub const DEDUP_TOL: f64 = 1e-8;
/// Accepted one-step defect along a cycle.
pub const PERIOD_TOL: f64 = 1e-10;
pub const NEWTON_CAP: usize = 50;
pub const STEP_FLOOR: f64 = 1e-12;
pub const DEFAULT_ORDER: usize = 30;
/// Conjugacy residual accepted when validating a series radius.
pub const SERIES_RESIDUAL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OrbitClass {
    Saddle,
    Attracting,
    Repelling,
    Neutral,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicOrbit {
    pub period: usize,
    /// Orbit points, starting from the lexicographically smallest.
    pub points: Vec<Point>,
    /// Eigenvalues of `Dfⁿ` at `points[0]`, by decreasing modulus.
    pub multipliers: [C; 2],
    pub class: OrbitClass,
}

impl PeriodicOrbit {
    pub fn base(&self) -> Point {
        self.points[0]
    }

    pub fn is_saddle(&self) -> bool {
        self.class == OrbitClass::Saddle
    }
}

pub fn classify(multipliers: &[C; 2]) -> OrbitClass {
    let side = |m: C| {
        let r = m.norm() - 1.0;
        if r > NEUTRAL_BAND {
            1
        } else if r < -NEUTRAL_BAND {
            -1
        } else {
            0
        }
    };
    match (side(multipliers[0]), side(multipliers[1])) {
        (0, _) | (_, 0) => OrbitClass::Neutral,
        (1, 1) => OrbitClass::Repelling,
        (-1, -1) => OrbitClass::Attracting,
        _ => OrbitClass::Saddle,
    }
}

/// `Dfⁿ(x)` and its determinant, the latter accumulated factor by factor.
pub fn period_jacobian(f: &MapSpec, x: Point, n: usize) -> (Mat2, C) {
    let mut m = mat_identity();
    let mut det = C::new(1.0, 0.0);
    let mut y = x;
    for _ in 0..n {
        for fac in &f.factors {
            let j = fac.jacobian_at(y);
            det *= mat_det(&j);
            m = mat_mul(&j, &m);
            y = fac.apply(y);
        }
    }
    (m, det)
}

fn lex_key(p: &Point) -> [f64; 4] {
    [p.z.re, p.z.im, p.w.re, p.w.im]
}

fn lex_less(a: &Point, b: &Point) -> bool {
    let (ka, kb) = (lex_key(a), lex_key(b));
    for i in 0..4 {
        if ka[i] != kb[i] {
            return ka[i] < kb[i];
        }
    }
    false
}

/// Newton on `fⁿ(x) − x` with the 2×2 Jacobian.
fn newton_period(f: &MapSpec, mut x: Point, n: usize, bound: f64) -> Option<Point> {
    for _ in 0..NEWTON_CAP {
        let (m, _) = period_jacobian(f, x, n);
        let r = f.iterate(x, n) - x;
        if !r.is_finite() {
            return None;
        }
        let mut jm = m;
        jm[0][0] -= 1.0;
        jm[1][1] -= 1.0;
        let step = solve2(&jm, r)?;
        x = x - step;
        if !x.is_finite() || x.norm_max() > bound {
            return None;
        }
        if step.norm() <= STEP_FLOOR * (1.0 + x.norm()) {
            return Some(x);
        }
    }
    None
}

/// Multiple-shooting Newton on the cycle `x_{k+1} = f(x_k)`.
fn shoot(f: &MapSpec, mut xs: Vec<Point>, bound: f64) -> Option<Vec<Point>> {
    let n = xs.len();
    let dim = 2 * n;
    for _ in 0..30 {
        let mut res = Vec::with_capacity(dim);
        let mut a = vec![C::zero(); dim * dim];
        let mut defect = 0.0f64;
        for k in 0..n {
            let r = f.apply(xs[k]) - xs[(k + 1) % n];
            defect = defect.max(r.norm());
            res.push(-r.z);
            res.push(-r.w);
            let j = f.jacobian_matrix(xs[k]);
            let kn = (k + 1) % n;
            for (row, jrow) in j.iter().enumerate() {
                for (col, &v) in jrow.iter().enumerate() {
                    a[(2 * k + row) * dim + 2 * k + col] += v;
                }
                a[(2 * k + row) * dim + 2 * kn + row] -= C::new(1.0, 0.0);
            }
        }
        let scale = 1.0 + xs.iter().map(|x| x.norm()).fold(0.0, f64::max);
        if defect <= 1e-14 * scale {
            return Some(xs);
        }
        let delta = solve_dense(dim, a, res)?;
        let mut step = 0.0f64;
        for k in 0..n {
            let d = Point::new(delta[2 * k], delta[2 * k + 1]);
            step = step.max(d.norm());
            xs[k] = xs[k] + d;
            if !xs[k].is_finite() || xs[k].norm_max() > bound {
                return None;
            }
        }
        if step <= STEP_FLOOR * scale * 1e-2 {
            return Some(xs);
        }
    }
    (cycle_defect(f, &xs) <= PERIOD_TOL).then_some(xs)
}

/// Largest one-step defect `‖f(x_k) − x_{k+1}‖/(1 + ‖x_{k+1}‖)` around a cycle.
pub fn cycle_defect(f: &MapSpec, xs: &[Point]) -> f64 {
    let n = xs.len();
    (0..n)
        .map(|k| {
            let next = xs[(k + 1) % n];
            (f.apply(xs[k]) - next).norm() / (1.0 + next.norm())
        })
        .fold(0.0, f64::max)
}

/// Builds an orbit record from an approximate periodic point: polishes the
/// cycle, checks the exact period and classifies.
pub fn orbit_from_point(f: &MapSpec, x: Point, n: usize, bound: f64) -> Option<PeriodicOrbit> {
    let mut guess = Vec::with_capacity(n);
    let mut y = x;
    for _ in 0..n {
        guess.push(y);
        y = f.apply(y);
    }
    let xs = shoot(f, guess, bound)?;
    if cycle_defect(f, &xs) > PERIOD_TOL {
        return None;
    }
    // Exact period: no proper divisor closes the cycle.
    for p in 1..n {
        if n % p == 0 && (xs[p % n] - xs[0]).norm() <= DEDUP_TOL * (1.0 + xs[0].norm()) {
            return None;
        }
    }
    let start = (0..n).fold(
        0,
        |best, k| if lex_less(&xs[k], &xs[best]) { k } else { best },
    );
    let points: Vec<Point> = (0..n).map(|k| xs[(start + k) % n]).collect();
    let (m, det) = period_jacobian(f, points[0], n);
    let multipliers = eigenvalues(&m, det);
    Some(PeriodicOrbit {
        period: n,
        class: classify(&multipliers),
        multipliers,
        points,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeedSpec {
    /// Side of the square seed grid in the z-plane of the bidisk (w = 0);
    /// 0 disables grid seeds.
    pub grid: usize,
    /// Periods up to which grid seeds are used.
    pub grid_max_period: usize,
    /// Inverse-branch itinerary seeds for plain maps.
    pub itineraries: bool,
    /// Upper bound on the number of itineraries tried per period.
    pub max_itineraries: usize,
}

impl Default for SeedSpec {
    fn default() -> Self {
        SeedSpec {
            grid: 64,
            grid_max_period: 4,
            itineraries: true,
            max_itineraries: 1 << 14,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicSearch {
    pub orbits: Vec<PeriodicOrbit>,
    pub seeds_tried: usize,
    pub discarded: usize,
}

/// Orbits of exact period `n` inside the bidisk.
pub fn periodic_points(
    f: &MapSpec,
    geom: &FiltrationGeometry,
    n: usize,
    seeds: &SeedSpec,
) -> PeriodicSearch {
    let mut search = PeriodicSearch {
        orbits: Vec::new(),
        seeds_tried: 0,
        discarded: 0,
    };
    if n == 0 {
        return search;
    }
    let r = geom.radius;
    let bound = 4.0 * r;
    let consider = |x: Option<Point>, search: &mut PeriodicSearch| {
        search.seeds_tried += 1;
        let orbit = x.and_then(|x| orbit_from_point(f, x, n, bound));
        match orbit {
            Some(o) if o.points.iter().all(|p| p.norm_max() <= r * (1.0 + 1e-9)) => {
                if !is_duplicate(&search.orbits, &o) {
                    search.orbits.push(o);
                }
            }
            _ => search.discarded += 1,
        }
    };
    if seeds.itineraries && f.is_plain() {
        for z in itinerary_seeds(f, geom, n, seeds.max_itineraries) {
            consider(Some(z), &mut search);
        }
    }
    if seeds.grid > 0 && n <= seeds.grid_max_period {
        let g = seeds.grid;
        for j in 0..g {
            for i in 0..g {
                let re = -r + (i as f64 + 0.5) * 2.0 * r / g as f64;
                let im = -r + (j as f64 + 0.5) * 2.0 * r / g as f64;
                let seed = Point::new(C::new(re, im), C::zero());
                consider(newton_period(f, seed, n, bound), &mut search);
            }
        }
    }
    search.orbits.sort_by(|a, b| {
        let (ka, kb) = (lex_key(&a.points[0]), lex_key(&b.points[0]));
        ka.iter()
            .zip(kb.iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(core::cmp::Ordering::Equal)
    });
    search
}

fn is_duplicate(orbits: &[PeriodicOrbit], o: &PeriodicOrbit) -> bool {
    let x = o.points[0];
    orbits.iter().any(|q| {
        q.period == o.period
            && q.points
                .iter()
                .any(|p| (*p - x).norm() <= DEDUP_TOL * (1.0 + x.norm()))
    })
}

/// Inverse-branch seeds: for a symbolic itinerary, Gauss–Seidel sweeps on
/// `p_i(z_i) = z_{i+1} − a_i·a_{i−1}·z_{i−1}` over the stage sequence, each
/// time taking the root closest to the current value.
fn itinerary_seeds(f: &MapSpec, geom: &FiltrationGeometry, n: usize, cap: usize) -> Vec<Point> {
    let m = f.factors.len();
    let stages = n * m;
    let degrees: Vec<usize> = (0..stages).map(|i| f.factors[i % m].p.degree()).collect();
    let total = degrees
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d));
    let total = match total {
        Some(t) if t <= cap => t,
        _ => return Vec::new(),
    };
    // Roots of p_j(z) = R, sorted, as branch anchors.
    let anchors: Vec<Vec<C>> = f
        .factors
        .iter()
        .map(|fac| {
            let mut q = fac.p.clone();
            q = q.shifted(C::new(-geom.radius, 0.0));
            let mut roots = q.roots();
            roots.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
            roots
        })
        .collect();
    let mut out = Vec::with_capacity(total);
    let mut z = vec![C::zero(); stages];
    for word in 0..total {
        let mut code = word;
        for i in 0..stages {
            let d = degrees[i];
            z[i] = anchors[i % m][code % d];
            code /= d;
        }
        let mut converged = false;
        for _ in 0..200 {
            let mut change = 0.0f64;
            for i in 0..stages {
                let fac = &f.factors[i % m];
                let prev = &f.factors[(i + stages - 1) % stages % m];
                let rhs = z[(i + 1) % stages] - fac.a * prev.a * z[(i + stages - 1) % stages];
                let new = closest_root(&fac.p, rhs, z[i]);
                change = change.max((new - z[i]).norm());
                z[i] = new;
            }
            if !change.is_finite() {
                break;
            }
            if change <= 1e-14 * (1.0 + geom.radius) {
                converged = true;
                break;
            }
        }
        if converged {
            let prev = &f.factors[m - 1];
            out.push(Point::new(z[0], prev.a * z[stages - 1]));
        }
    }
    out
}

/// Root of `p(z) = rhs` closest to `near`.
fn closest_root(p: &crate::poly::Poly, rhs: C, near: C) -> C {
    let co = p.coeffs();
    if co.len() == 3 {
        let (a, b, c) = (co[2], co[1], co[0] - rhs);
        let disc = (b * b - a * c * 4.0).sqrt();
        let q = if (b.conj() * disc).re >= 0.0 {
            (b + disc) * -0.5
        } else {
            (b - disc) * -0.5
        };
        let (r1, r2) = if q.is_zero() {
            (C::zero(), C::zero())
        } else {
            (q / a, c / q)
        };
        return if (r1 - near).norm() <= (r2 - near).norm() {
            r1
        } else {
            r2
        };
    }
    let q = p.shifted(-rhs);
    q.roots()
        .into_iter()
        .min_by(|a, b| (a - near).norm().total_cmp(&(b - near).norm()))
        .unwrap_or(near)
}

/// Attracting cycles of period at most `nmax`, from the periodic-point
/// solver and from basin probes on a coarse grid of the bidisk.
pub fn find_attracting_orbits(
    f: &MapSpec,
    geom: &FiltrationGeometry,
    nmax: usize,
) -> Vec<PeriodicOrbit> {
    let mut found: Vec<PeriodicOrbit> = Vec::new();
    if nmax == 0 {
        return found;
    }
    let seeds = SeedSpec {
        grid: 32,
        grid_max_period: nmax,
        itineraries: false,
        max_itineraries: 0,
    };
    for n in 1..=nmax {
        for o in periodic_points(f, geom, n, &seeds).orbits {
            if o.class == OrbitClass::Attracting && !is_duplicate(&found, &o) {
                found.push(o);
            }
        }
    }
    let r = geom.radius;
    let g = 16;
    for j in 0..g {
        for i in 0..g {
            let z = C::new(
                -r + (i as f64 + 0.5) * 2.0 * r / g as f64,
                -r + (j as f64 + 0.5) * 2.0 * r / g as f64,
            );
            let mut x = Point::new(z, C::zero());
            let mut trail = Vec::with_capacity(nmax + 1);
            let mut bounded = true;
            for step in 0..2000 {
                x = f.apply(x);
                if !geom.in_bidisk(&x) {
                    bounded = false;
                    break;
                }
                if step >= 2000 - nmax - 1 {
                    trail.push(x);
                }
            }
            if !bounded {
                continue;
            }
            let last = *trail.last().unwrap();
            let period = (1..=nmax).find(|&p| {
                (trail[trail.len() - 1 - p] - last).norm() <= 1e-7 * (1.0 + last.norm())
            });
            if let Some(p) = period {
                if let Some(o) = orbit_from_point(f, last, p, 4.0 * r) {
                    if o.class == OrbitClass::Attracting && !is_duplicate(&found, &o) {
                        found.push(o);
                    }
                }
            }
        }
    }
    found
}

/// Unstable manifold `ψ` of a saddle orbit point for the period map
/// `g = fⁿ`, with `g(ψ(t)) = ψ(λt)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafParametrization {
    pub map: MapSpec,
    pub orbit: PeriodicOrbit,
    pub base: Point,
    pub lambda: C,
    pub coeffs: Series2,
    pub order: usize,
    /// Validated radius of the series chart.
    pub radius: f64,
    /// Sampled conjugacy residual on `|t| ≤ radius`.
    pub residual: f64,
    /// Growth constant for the error bound of extension by dynamics.
    pub growth: f64,
}

impl LeafParametrization {
    pub fn period(&self) -> usize {
        self.orbit.period
    }

    /// The period map `g = fⁿ`.
    pub fn period_map(&self, x: Point) -> Point {
        self.map.iterate(x, self.orbit.period)
    }

    pub fn series(&self, t: C) -> Point {
        self.coeffs.eval(t)
    }

    /// `sup ‖g(ψ(t)) − ψ(λt)‖` over samples of `|t| ≤ r`.
    pub fn conjugacy_residual(&self, r: f64, samples: usize) -> f64 {
        conjugacy_residual(
            &self.map,
            self.orbit.period,
            &self.coeffs,
            self.lambda,
            r,
            samples,
        )
    }
}

fn conjugacy_residual(
    f: &MapSpec,
    n: usize,
    s: &Series2,
    lambda: C,
    r: f64,
    samples: usize,
) -> f64 {
    let outer = (samples * 7).div_ceil(10).max(1);
    let inner = samples.saturating_sub(outer).max(1);
    let mut worst = 0.0f64;
    for (count, rad) in [(outer, r), (inner, 0.5 * r)] {
        for k in 0..count {
            let t = C::from_polar(
                rad,
                2.0 * core::f64::consts::PI * (k as f64 + 0.25) / count as f64,
            );
            let lhs = f.iterate(s.eval(t), n);
            let rhs = s.eval(lambda * t);
            let e = (lhs - rhs).norm();
            worst = worst.max(if e.is_finite() { e } else { f64::INFINITY });
        }
    }
    worst
}

pub fn unstable_parametrization(
    f: &MapSpec,
    orbit: &PeriodicOrbit,
    order: usize,
) -> Result<LeafParametrization> {
    if orbit.class != OrbitClass::Saddle {
        return Err(Error::NotASaddle);
    }
    let order = order.max(2);
    let n = orbit.period;
    let base = orbit.base();
    let (dg, det) = period_jacobian(f, base, n);
    let [lambda, mu] = eigenvalues(&dg, det);
    let c1 = eigenvector(&dg, lambda);
    let mut psi = Series2::zero(order + 1);
    psi.set_coeff(0, base);
    psi.set_coeff(1, c1);
    let mut lk = lambda;
    for k in 2..=order {
        lk *= lambda;
        let trunc = psi.truncated(k + 1);
        let image = (0..n).fold(trunc, |s, _| s.apply_map(f));
        let rhs = image.coeff(k);
        let scale = lk.norm().max(1.0);
        if (lk - lambda).norm() <= 1e-10 * scale || (lk - mu).norm() <= 1e-10 * scale {
            return Err(Error::Resonance { order: k });
        }
        let mut m = dg;
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = if i == j { lk - *v } else { -*v };
            }
        }
        let ck = solve2(&m, rhs).ok_or(Error::Resonance { order: k })?;
        if !ck.is_finite() {
            return Err(Error::InvalidInput("series coefficients overflow"));
        }
        psi.set_coeff(k, ck);
    }
    let mut radius = 0.0;
    let mut residual = f64::INFINITY;
    for e in (-60..=20).rev() {
        let r = 2f64.powi(e);
        let res = conjugacy_residual(f, n, &psi, lambda, r, 100);
        if res <= SERIES_RESIDUAL {
            radius = r;
            residual = res;
            break;
        }
    }
    if radius == 0.0 {
        return Err(Error::InvalidInput("no validated series radius"));
    }
    Ok(LeafParametrization {
        map: f.clone(),
        orbit: orbit.clone(),
        base,
        lambda,
        coeffs: psi,
        order,
        radius,
        residual,
        growth: frobenius(&dg).max(lambda.norm()),
    })
}

/// A point of the unstable leaf with the bookkeeping of its evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeafPoint {
    pub point: Point,
    /// Derivative `dψ/dt`.
    pub tangent: Point,
    /// Number of period-map pushes used.
    pub pushes: usize,
    pub error_bound: f64,
}

/// Evaluates `ψ(t) = g^m(ψ(t/λ^m))` with the least `m` putting `t/λ^m`
/// inside half the validated radius.
pub fn leaf_eval(psi: &LeafParametrization, t: C) -> LeafPoint {
    let half = 0.5 * psi.radius;
    let mut s = t;
    let mut m = 0usize;
    let mut scale = C::new(1.0, 0.0);
    while s.norm() > half && m < 4096 {
        s /= psi.lambda;
        scale /= psi.lambda;
        m += 1;
    }
    let (mut x, ds) = psi.coeffs.eval_d(s);
    let mut dx = ds * scale;
    for _ in 0..m * psi.orbit.period {
        let (y, dy) = psi.map.apply_tangent(x, dx);
        x = y;
        dx = dy;
    }
    LeafPoint {
        point: x,
        tangent: dx,
        pushes: m,
        error_bound: psi.residual.max(f64::EPSILON) * psi.growth.powi(m as i32),
    }
}

/// Which detector produced a witness of unstable disconnectivity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Detector {
    /// A component of `Wᵘ(p) ∩ 𝔹₋ₙ` enclosed by escaping points.
    Island,
    /// A critical point of `G⁺` restricted to the leaf.
    CriticalPoint,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompactWitness {
    pub detector: Detector,
    pub level: usize,
    pub rho: f64,
    /// Leaf parameter inside the witness region.
    pub t: C,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UnstableVerdict {
    UnstablyConnectedEvidence,
    CompactComponent(CompactWitness),
    Unresolved,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnstableConfig {
    /// Number of chart radii; each doubles the previous one.
    pub levels: usize,
    /// Raster side per level.
    pub resolution: usize,
    /// First escape budget used for leaf membership.
    pub budget: usize,
    /// Budgets double from `budget` up to this bound until a witness appears.
    pub max_budget: usize,
    /// Side, in cells, of the escaped blocks searched for critical points.
    pub block: usize,
}

impl Default for UnstableConfig {
    fn default() -> Self {
        UnstableConfig {
            levels: 8,
            resolution: 96,
            budget: 2,
            max_budget: 32,
            block: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelEvidence {
    pub budget: usize,
    pub rho: f64,
    pub inside: usize,
    pub escaped: usize,
    pub unresolved: usize,
    pub islands: usize,
    pub inside_reaches_border: bool,
    pub critical_points: usize,
    pub blocks: usize,
    pub failed_blocks: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnstableReport {
    pub verdict: UnstableVerdict,
    /// Verdict of the island detector alone.
    pub island_witness: Option<CompactWitness>,
    /// Verdict of the critical-point detector alone.
    pub critical_witness: Option<CompactWitness>,
    pub levels: Vec<LevelEvidence>,
}

/// Searches the unstable leaf for compact components of `Wᵘ(p) ∩ K⁺` and for
/// critical points of `G⁺∘ψ`, over charts `|t| ≤ ρ_t·2^ℓ`.
pub fn unstable_connectivity_test(
    ev: &PotentialEvaluator,
    psi: &LeafParametrization,
    rho_start: f64,
    cfg: &UnstableConfig,
) -> Result<UnstableReport> {
    use crate::contour::{count_zeros, Rect};
    use crate::henon::{Side, Verdict};
    use crate::slice::{SliceGrid, Transversal};

    if !(rho_start > 0.0)
        || cfg.resolution < 16
        || cfg.block == 0
        || cfg.budget == 0
        || cfg.max_budget < cfg.budget
    {
        return Err(Error::InvalidInput(
            "invalid unstable connectivity configuration",
        ));
    }
    let n = cfg.resolution;
    let mut levels = Vec::with_capacity(cfg.levels);
    let mut island_witness = None;
    let mut critical_witness = None;
    let mut informative = false;
    let mut complete = true;
    let mut budget = cfg.budget;
    while budget <= cfg.max_budget && island_witness.is_none() && critical_witness.is_none() {
        for level in 0..cfg.levels {
            let rho = rho_start * 2f64.powi(level as i32);
            let window = Rect {
                lo: C::new(-rho, -rho),
                hi: C::new(rho, rho),
            };
            let h = 2.0 * rho / n as f64;
            let center = |i: usize, j: usize| {
                C::new(-rho + (i as f64 + 0.5) * h, -rho + (j as f64 + 0.5) * h)
            };
            let cells = raster_leaf(ev, psi, C::new(-rho, -rho), h, n, n, budget);
            let grid = SliceGrid {
                transversal: Transversal::disk(psi.base, psi.coeffs.coeff(1), rho)?,
                window,
                resolution: n,
                budget,
                side: Side::Forward,
                cells,
            };
            let count = |v: Verdict| grid.cells.iter().filter(|&&c| c == v).count();
            let (inside, escaped, unresolved) = (
                count(Verdict::Inside),
                count(Verdict::Escaped),
                count(Verdict::Unresolved),
            );

            // Island detector on the wildcard (lower) labeling: components of
            // non-escaped cells that hold inside cells and avoid the border,
            // confirmed on a refined raster of their neighbourhood.
            let mut islands = 0;
            let mut reaches_border = false;
            let comps = non_escaped_components(&grid.cells, n, n);
            for comp in &comps {
                if !comp.has_inside {
                    continue;
                }
                if comp.touches_border {
                    reaches_border = true;
                    continue;
                }
                let [i0, i1, j0, j1] = comp.bbox;
                let (i0, j0) = (i0.saturating_sub(RING), j0.saturating_sub(RING));
                let (i1, j1) = ((i1 + RING).min(n - 1), (j1 + RING).min(n - 1));
                let (nx, ny) = ((i1 - i0 + 1) * REFINE, (j1 - j0 + 1) * REFINE);
                if nx * ny > REFINE_CELL_CAP {
                    continue;
                }
                let lo = C::new(-rho + i0 as f64 * h, -rho + j0 as f64 * h);
                let hf = h / REFINE as f64;
                let mut fine = raster_leaf(ev, psi, lo, hf, nx, ny, budget);
                certify_barrier(ev, psi, lo, hf, nx, &mut fine);
                let confirmed = non_escaped_components(&fine, nx, ny)
                    .iter()
                    .any(|c| c.has_inside && !c.touches_border);
                if !confirmed {
                    continue;
                }
                islands += 1;
                if island_witness.is_none() {
                    island_witness = Some(CompactWitness {
                        detector: Detector::Island,
                        level,
                        rho,
                        t: center(comp.first % n, comp.first / n),
                    });
                }
            }

            // Critical-point detector on fully escaped blocks.
            let b = cfg.block;
            let mut blocks = 0;
            let mut failed = 0;
            let mut critical = 0;
            for bj in 0..n / b {
                for bi in 0..n / b {
                    let all_escaped = (bj * b..(bj + 1) * b).all(|j| {
                        (bi * b..(bi + 1) * b).all(|i| grid.get(i, j) == Verdict::Escaped)
                    });
                    if !all_escaped {
                        continue;
                    }
                    blocks += 1;
                    let rect = Rect {
                        lo: C::new(-rho + (bi * b) as f64 * h, -rho + (bj * b) as f64 * h),
                        hi: C::new(
                            -rho + ((bi + 1) * b) as f64 * h,
                            -rho + ((bj + 1) * b) as f64 * h,
                        ),
                    };
                    let deriv = |t: C| -> Result<C> {
                        let lp = leaf_eval(psi, t);
                        Ok(ev.green_plus_jet(lp.point, lp.tangent)?.dlog)
                    };
                    match count_zeros(&rect, deriv, 16, 0.0) {
                        Ok(w) if w.count > 0 => {
                            critical += w.count as usize;
                            if critical_witness.is_none() {
                                critical_witness = Some(CompactWitness {
                                    detector: Detector::CriticalPoint,
                                    level,
                                    rho,
                                    t: rect.center(),
                                });
                            }
                        }
                        Ok(_) => {}
                        Err(_) => failed += 1,
                    }
                }
            }
            if unresolved > 0 {
                complete = false;
            }
            if reaches_border && escaped > 0 {
                informative = true;
            }
            levels.push(LevelEvidence {
                budget,
                rho,
                inside,
                escaped,
                unresolved,
                islands,
                inside_reaches_border: reaches_border,
                critical_points: critical,
                blocks,
                failed_blocks: failed,
            });
        }
        budget *= 2;
    }
    let verdict = match (island_witness, critical_witness) {
        (Some(w), _) | (None, Some(w)) => UnstableVerdict::CompactComponent(w),
        (None, None) if informative && complete => UnstableVerdict::UnstablyConnectedEvidence,
        _ => UnstableVerdict::Unresolved,
    };
    Ok(UnstableReport {
        verdict,
        island_witness,
        critical_witness,
        levels,
    })
}

struct CellComponent {
    first: usize,
    has_inside: bool,
    touches_border: bool,
    bbox: [usize; 4],
}

const REFINE: usize = 4;
const RING: usize = 2;
const REFINE_CELL_CAP: usize = 1 << 16;

/// Forward verdicts on an `nx × ny` lattice of leaf-chart cell centres.
fn raster_leaf(
    ev: &PotentialEvaluator,
    psi: &LeafParametrization,
    lo: C,
    h: f64,
    nx: usize,
    ny: usize,
    budget: usize,
) -> Vec<crate::henon::Verdict> {
    use crate::henon::{orbit_escape, Side, Verdict};
    let mut cells = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let t = lo + C::new((i as f64 + 0.5) * h, (j as f64 + 0.5) * h);
            let x = leaf_eval(psi, t).point;
            cells.push(
                match orbit_escape(&ev.map, x, budget, &ev.geom, Side::Forward) {
                    Ok(rec) => rec.verdict,
                    Err(_) => Verdict::Unresolved,
                },
            );
        }
    }
    cells
}

/// Keeps a cell escaped only where the potential's distance estimate
/// `G/|∇G|` along the leaf exceeds twice the pitch; other escaped cells
/// become unresolved so thin necks of the filled set cannot hide in them.
fn certify_barrier(
    ev: &PotentialEvaluator,
    psi: &LeafParametrization,
    lo: C,
    h: f64,
    nx: usize,
    cells: &mut [crate::henon::Verdict],
) {
    use crate::henon::Verdict;
    for (k, cell) in cells.iter_mut().enumerate() {
        if *cell != Verdict::Escaped {
            continue;
        }
        let t = lo + C::new(((k % nx) as f64 + 0.5) * h, ((k / nx) as f64 + 0.5) * h);
        let lp = leaf_eval(psi, t);
        let certified = match ev.green_plus_jet(lp.point, lp.tangent) {
            Ok(jet) => jet.g > 2.0 * h * jet.dlog.norm(),
            Err(_) => false,
        };
        if !certified {
            *cell = Verdict::Unresolved;
        }
    }
}

/// 8-connected components of non-escaped cells.
fn non_escaped_components(
    cells: &[crate::henon::Verdict],
    nx: usize,
    ny: usize,
) -> Vec<CellComponent> {
    use crate::henon::Verdict;
    let mut seen = vec![false; nx * ny];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in 0..nx * ny {
        if seen[start] || cells[start] == Verdict::Escaped {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut comp = CellComponent {
            first: start,
            has_inside: false,
            touches_border: false,
            bbox: [start % nx, start % nx, start / nx, start / nx],
        };
        while let Some(k) = stack.pop() {
            let (i, j) = (k % nx, k / nx);
            comp.has_inside |= cells[k] == Verdict::Inside;
            comp.touches_border |= i == 0 || j == 0 || i + 1 == nx || j + 1 == ny;
            comp.bbox = [
                comp.bbox[0].min(i),
                comp.bbox[1].max(i),
                comp.bbox[2].min(j),
                comp.bbox[3].max(j),
            ];
            for dj in -1isize..=1 {
                for di in -1isize..=1 {
                    let (ni, nj) = (i as isize + di, j as isize + dj);
                    if ni < 0 || nj < 0 || ni >= nx as isize || nj >= ny as isize {
                        continue;
                    }
                    let nk = nj as usize * nx + ni as usize;
                    if !seen[nk] && cells[nk] != Verdict::Escaped {
                        seen[nk] = true;
                        stack.push(nk);
                    }
                }
            }
        }
        out.push(comp);
    }
    out
}

/// Smallest `|t|` at which the leaf leaves the closed bidisk, over 64 rays
/// from the base point; `None` if no ray exits within `|t| ≤ 2^40`.
pub fn leaf_exit_radius(psi: &LeafParametrization, geom: &FiltrationGeometry) -> Option<f64> {
    let mut best: Option<f64> = None;
    for k in 0..64 {
        let dir = C::from_polar(1.0, 2.0 * core::f64::consts::PI * k as f64 / 64.0);
        let inside = |r: f64| geom.in_bidisk(&leaf_eval(psi, dir * r).point);
        let mut hi = psi.radius.max(1e-12);
        let mut lo = 0.0;
        let mut found = false;
        for _ in 0..80 {
            if !inside(hi) {
                found = true;
                break;
            }
            lo = hi;
            hi *= 2.0;
            if hi > 1.1e12 {
                break;
            }
        }
        if !found {
            continue;
        }
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            if inside(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        best = Some(best.map_or(hi, |b: f64| b.min(hi)));
    }
    best
}

/// Default first chart radius: half the leaf's exit radius from the bidisk,
/// or half the validated series radius if the leaf never exits.
pub fn default_search_radius(psi: &LeafParametrization, geom: &FiltrationGeometry) -> f64 {
    match leaf_exit_radius(psi, geom) {
        Some(r) => 0.5 * r,
        None => 0.5 * psi.radius,
    }
}

/// Per-saddle unstable connectivity verdicts and their agreement.
#[derive(Debug, Clone, PartialEq)]
pub struct IndependenceReport {
    pub verdicts: Vec<UnstableVerdict>,
    /// True when two saddles received contradictory definite verdicts.
    pub failure: bool,
}

pub fn saddle_independence_check(
    ev: &PotentialEvaluator,
    saddles: &[PeriodicOrbit],
    order: usize,
    cfg: &UnstableConfig,
) -> Result<IndependenceReport> {
    if saddles.len() < 2 {
        return Err(Error::InvalidInput(
            "saddle independence needs at least two saddles",
        ));
    }
    let mut verdicts = Vec::with_capacity(saddles.len());
    for o in saddles {
        let psi = unstable_parametrization(&ev.map, o, order)?;
        let rho = default_search_radius(&psi, &ev.geom);
        verdicts.push(unstable_connectivity_test(ev, &psi, rho, cfg)?.verdict);
    }
    let connected = verdicts
        .iter()
        .any(|v| matches!(v, UnstableVerdict::UnstablyConnectedEvidence));
    let compact = verdicts
        .iter()
        .any(|v| matches!(v, UnstableVerdict::CompactComponent(_)));
    Ok(IndependenceReport {
        verdicts,
        failure: connected && compact,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::c;
    use crate::henon::{choose_radius, mat_vec};

    fn fixture(cc: f64, a: f64) -> (MapSpec, FiltrationGeometry) {
        let f = MapSpec::quadratic_real(cc, a).unwrap();
        let geom = choose_radius(&f, 1.25).unwrap();
        (f, geom)
    }

    #[test]
    fn fixed_points_match_closed_form() {
        for (cc, a) in [(-1.0, 0.05), (0.0, 0.05), (-10.0, 0.1), (0.3, 0.2)] {
            let (f, geom) = fixture(cc, a);
            let found = periodic_points(&f, &geom, 1, &SeedSpec::default()).orbits;
            // z² + (a² − 1) z + c = 0, w = a z.
            let b = a * a - 1.0;
            let disc = C::new(b * b - 4.0 * cc, 0.0).sqrt();
            let roots = [(-b + disc) * 0.5, (-b - disc) * 0.5];
            assert_eq!(found.len(), 2, "c={cc}");
            for r in roots {
                assert!(found
                    .iter()
                    .any(|o| (o.points[0] - Point::new(r, r * a)).norm() < 1e-10));
            }
            for o in &found {
                let (_, det) = period_jacobian(&f, o.base(), 1);
                let prod = o.multipliers[0] * o.multipliers[1];
                assert!((prod - f.jacobian).norm() <= 1e-8 * f.jacobian.norm());
                assert!((det - f.jacobian).norm() <= 1e-12);
            }
        }
        // The degenerate a = 0 member is not a diffeomorphism; a = 1e-8 moves the roots by O(a²).
        let (f, geom) = fixture(-1.0, 1e-8);
        let found = periodic_points(
            &f,
            &geom,
            1,
            &SeedSpec {
                itineraries: false,
                ..SeedSpec::default()
            },
        )
        .orbits;
        let golden = (1.0 + 5f64.sqrt()) / 2.0;
        assert!(found
            .iter()
            .any(|o| (o.points[0].z - c(golden, 0.0)).norm() < 1e-10));
        assert!(found
            .iter()
            .any(|o| (o.points[0].z - c(1.0 - golden, 0.0)).norm() < 1e-10));
    }

    #[test]
    fn horseshoe_counts_are_full_shift() {
        let (f, geom) = fixture(-10.0, 0.1);
        // Orbits of exact period n of the full 2-shift: (1/n) Σ_{d|n} μ(n/d) 2^d.
        let expected = [2, 1, 2, 3, 6, 9];
        for (n, &e) in (1..=6).zip(expected.iter()) {
            let s = periodic_points(&f, &geom, n, &SeedSpec::default());
            assert_eq!(s.orbits.len(), e, "period {n}");
            for o in &s.orbits {
                assert!(o.is_saddle());
                let jn = f.jacobian.powi(n as i32);
                assert!(((o.multipliers[0] * o.multipliers[1]) - jn).norm() <= 1e-8 * jn.norm());
                for x in &o.points {
                    assert!((f.iterate(*x, n) - *x).norm() <= 1e-10 * (1.0 + x.norm()));
                }
            }
        }
    }

    #[test]
    fn long_periods_are_complete() {
        let (f, geom) = fixture(-10.0, 0.1);
        let mut total = 0;
        for n in 1..=12 {
            let s = periodic_points(&f, &geom, n, &SeedSpec::default());
            let pts: usize = s.orbits.iter().map(|o| o.period).sum();
            for o in &s.orbits {
                assert!(cycle_defect(&f, &o.points) <= PERIOD_TOL);
            }
            total += pts;
        }
        // Points of exact period n of the full 2-shift, by Möbius inversion of 2ⁿ.
        let exact: usize = (1..=12).map(exact_count).sum();
        assert_eq!(total, exact);
    }

    fn exact_count(n: usize) -> usize {
        let mut e = 1usize << n;
        for d in 1..n {
            if n % d == 0 {
                e -= exact_count(d);
            }
        }
        e
    }

    #[test]
    fn classification_band() {
        assert_eq!(classify(&[c(2.0, 0.0), c(0.1, 0.0)]), OrbitClass::Saddle);
        assert_eq!(
            classify(&[c(0.5, 0.0), c(0.1, 0.0)]),
            OrbitClass::Attracting
        );
        assert_eq!(classify(&[c(2.0, 0.0), c(1.5, 0.0)]), OrbitClass::Repelling);
        assert_eq!(
            classify(&[c(1.0 + 1e-7, 0.0), c(0.1, 0.0)]),
            OrbitClass::Neutral
        );
    }

    #[test]
    fn unstable_series_conjugacy() {
        let (f, geom) = fixture(-1.0, 0.05);
        let orbits = periodic_points(&f, &geom, 1, &SeedSpec::default()).orbits;
        let saddle = orbits.iter().find(|o| o.is_saddle()).unwrap();
        let psi = unstable_parametrization(&f, saddle, 20).unwrap();
        assert!((psi.coeffs.coeff(1).norm() - 1.0).abs() < 1e-14);
        assert!(psi.conjugacy_residual(psi.radius, 100) <= 1e-9);
        assert!(psi.radius > 1e-3);
        assert_eq!(leaf_eval(&psi, C::zero()).point, psi.base);
        let mut last = 0.0;
        for k in 0..40 {
            let t = C::from_polar(psi.radius * 0.25 * (k as f64 + 1.0), 0.7 * k as f64);
            let a = leaf_eval(&psi, psi.lambda * t).point;
            let b = f.apply(leaf_eval(&psi, t).point);
            assert!((a - b).norm() <= 1e-8 * (1.0 + a.norm()));
            let bound = leaf_eval(&psi, t).error_bound;
            if k > 0 {
                assert!(bound >= last);
            }
            last = bound;
        }
    }

    #[test]
    fn leaf_tangent_is_derivative() {
        let (f, geom) = fixture(0.0, 0.05);
        let saddle = periodic_points(&f, &geom, 1, &SeedSpec::default())
            .orbits
            .into_iter()
            .find(|o| o.is_saddle())
            .unwrap();
        let psi = unstable_parametrization(&f, &saddle, DEFAULT_ORDER).unwrap();
        let t = c(3.0 * psi.radius, psi.radius);
        let h = 1e-6 * psi.radius;
        let lp = leaf_eval(&psi, t);
        let fd =
            (leaf_eval(&psi, t + h).point - leaf_eval(&psi, t - h).point) * C::new(0.5 / h, 0.0);
        assert!((fd - lp.tangent).norm() <= 1e-6 * (1.0 + lp.tangent.norm()));
    }

    #[test]
    fn non_saddle_rejected() {
        let (f, geom) = fixture(0.0, 0.05);
        let att = find_attracting_orbits(&f, &geom, 2);
        assert!(!att.is_empty());
        assert!(att[0].points[0].norm() < 1e-9);
        assert!(matches!(
            unstable_parametrization(&f, &att[0], 10),
            Err(Error::NotASaddle)
        ));
        assert!(find_attracting_orbits(&f, &geom, 0).is_empty());
        let (f, geom) = fixture(-10.0, 0.1);
        assert!(find_attracting_orbits(&f, &geom, 3).is_empty());
    }

    #[test]
    fn periodic_orbits_inside_bidisk() {
        let (f, geom) = fixture(-1.0, 0.05);
        for n in 1..=3 {
            for o in periodic_points(&f, &geom, n, &SeedSpec::default()).orbits {
                assert!(o.points.iter().all(|p| geom.in_bidisk(p)));
            }
        }
    }

    #[test]
    fn eigenvector_relation() {
        let (f, geom) = fixture(-10.0, 0.1);
        let o = &periodic_points(&f, &geom, 2, &SeedSpec::default()).orbits[0];
        let (m, _) = period_jacobian(&f, o.base(), 2);
        let v = eigenvector(&m, o.multipliers[0]);
        assert!((mat_vec(&m, v) - v * o.multipliers[0]).norm() < 1e-8 * o.multipliers[0].norm());
    }

    fn saddles(f: &MapSpec, geom: &FiltrationGeometry, n: usize) -> Vec<PeriodicOrbit> {
        periodic_points(f, geom, n, &SeedSpec::default())
            .orbits
            .into_iter()
            .filter(|o| o.is_saddle())
            .collect()
    }

    #[test]
    fn horseshoe_leaf_has_compact_component() {
        let (f, geom) = fixture(-10.0, 0.1);
        let ev = PotentialEvaluator::new(f.clone(), geom);
        let o = &saddles(&f, &geom, 1)[0];
        let psi = unstable_parametrization(&f, o, DEFAULT_ORDER).unwrap();
        let rep = unstable_connectivity_test(
            &ev,
            &psi,
            default_search_radius(&psi, &geom),
            &UnstableConfig::default(),
        )
        .unwrap();
        match rep.verdict {
            UnstableVerdict::CompactComponent(w) => {
                let x = leaf_eval(&psi, w.t).point;
                assert!(geom.in_bidisk(&x));
            }
            v => panic!("expected a compact component, got {v:?}"),
        }
    }

    #[test]
    fn connected_fixture_gives_evidence() {
        let (f, geom) = fixture(0.0, 0.05);
        let ev = PotentialEvaluator::new(f.clone(), geom);
        let mut all = saddles(&f, &geom, 1);
        all.extend(saddles(&f, &geom, 2));
        assert!(all.len() >= 2);
        let rep = saddle_independence_check(&ev, &all, DEFAULT_ORDER, &UnstableConfig::default())
            .unwrap();
        assert!(!rep.failure);
        assert!(rep
            .verdicts
            .iter()
            .all(|v| *v == UnstableVerdict::UnstablyConnectedEvidence));
    }

    #[test]
    fn tiny_chart_is_unresolved() {
        let (f, geom) = fixture(0.0, 0.05);
        let ev = PotentialEvaluator::new(f.clone(), geom);
        let o = &saddles(&f, &geom, 1)[0];
        let psi = unstable_parametrization(&f, o, DEFAULT_ORDER).unwrap();
        let cfg = UnstableConfig {
            levels: 1,
            resolution: 16,
            max_budget: 2,
            ..Default::default()
        };
        let rep = unstable_connectivity_test(&ev, &psi, 1e-6, &cfg).unwrap();
        assert_eq!(rep.verdict, UnstableVerdict::Unresolved);
        assert_eq!(rep.levels.len(), 1);
        assert_eq!(rep.levels[0].escaped, 0);
        assert!(unstable_connectivity_test(&ev, &psi, 0.0, &cfg).is_err());
        assert!(saddle_independence_check(&ev, &[o.clone()], DEFAULT_ORDER, &cfg).is_err());
    }

    #[test]
    fn exit_radius_brackets_bidisk_boundary() {
        let (f, geom) = fixture(-10.0, 0.1);
        let o = &saddles(&f, &geom, 1)[0];
        let psi = unstable_parametrization(&f, o, DEFAULT_ORDER).unwrap();
        let exit = leaf_exit_radius(&psi, &geom).unwrap();
        for k in 0..64 {
            let dir = C::from_polar(1.0, 2.0 * core::f64::consts::PI * k as f64 / 64.0);
            assert!(geom.in_bidisk(&leaf_eval(&psi, dir * (0.99 * exit)).point));
        }
        assert!(exit > psi.radius * 1e-6);
    }
}
