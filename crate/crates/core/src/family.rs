//! Parameter families, per-cell connectivity verdicts and probes of the
//! connectedness locus.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::henon::{choose_radius, FiltrationGeometry, MapSpec, Side};
use crate::poly::Poly;
use crate::potential::PotentialEvaluator;
use crate::saddle::{
    default_search_radius, periodic_points, unstable_connectivity_test, unstable_parametrization,
    SeedSpec, UnstableConfig, UnstableVerdict, DEFAULT_ORDER,
};
use crate::slice::{
    connectivity_verdict, tangency_escape_test, Connectivity, TangencyEscape, Transversal,
    DEFAULT_CONFINE_BUDGET,
};
use crate::C;

/// A coefficient of the template that receives a parameter value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    /// The Jacobian coefficient `a` of a factor.
    A { factor: usize },
    /// Coefficient of `z^power` in `p`.
    P { factor: usize, power: usize },
    /// Coefficient of `z^power` in the perturbation `b`.
    B { factor: usize, power: usize },
}

/// How a grid point `(x, y)` is substituted into the template.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamPlane {
    /// The complex value `x + iy` fills one slot.
    Complex(Slot),
    /// `x` and `y` fill two slots as real values.
    Real(Slot, Slot),
}

/// Half-open range `[lo, hi]` sampled at `n` cell centres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n == 0 || !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidInput("axis needs lo ≤ hi and at least one sample"));
        }
        Ok(Axis { lo, hi, n })
    }

    /// Centre of cell `k`; symmetric ranges put an odd grid's middle cell at 0.
    pub fn center(&self, k: usize) -> f64 {
        let n2 = 2.0 * self.n as f64;
        let (l, r) = ((2 * (self.n - k) - 1) as f64, (2 * k + 1) as f64);
        (l * self.lo + r * self.hi) / n2
    }

    pub fn pitch(&self) -> f64 {
        (self.hi - self.lo) / self.n as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FamilySpec {
    pub template: MapSpec,
    pub plane: ParamPlane,
    pub x: Axis,
    pub y: Axis,
}

impl FamilySpec {
    /// The quadratic family `(a·w + z² + c, a·z)` over a window of `c`.
    pub fn quadratic_c(a: C, x: Axis, y: Axis) -> Result<Self> {
        let template = MapSpec::quadratic(C::new(0.0, 0.0), a)?;
        Ok(FamilySpec {
            template,
            plane: ParamPlane::Complex(Slot::P { factor: 0, power: 0 }),
            x,
            y,
        })
    }

    pub fn cells(&self) -> usize {
        self.x.n * self.y.n
    }

    pub fn parameter(&self, i: usize, j: usize) -> (f64, f64) {
        (self.x.center(i), self.y.center(j))
    }

    /// Substitutes `(x, y)` into the template.
    pub fn instantiate(&self, x: f64, y: f64) -> Result<MapSpec> {
        let mut factors = self.template.factors.clone();
        let mut set = |slot: Slot, v: C| -> Result<()> {
            let fac = match slot {
                Slot::A { factor } | Slot::P { factor, .. } | Slot::B { factor, .. } => factors
                    .get_mut(factor)
                    .ok_or(Error::InvalidInput("slot names a missing factor"))?,
            };
            match slot {
                Slot::A { .. } => fac.a = v,
                Slot::P { power, .. } => fac.p = with_coeff(&fac.p, power, v),
                Slot::B { power, .. } => {
                    let b = fac.b.clone().unwrap_or_else(|| Poly::new(alloc::vec![C::new(0.0, 0.0)]));
                    fac.b = Some(with_coeff(&b, power, v));
                }
            }
            Ok(())
        };
        match self.plane {
            ParamPlane::Complex(s) => set(s, C::new(x, y))?,
            ParamPlane::Real(sx, sy) => {
                set(sx, C::new(x, 0.0))?;
                set(sy, C::new(y, 0.0))?;
            }
        }
        MapSpec::compose(factors)
    }
}

fn with_coeff(p: &Poly, power: usize, v: C) -> Poly {
    let mut c = p.coeffs().to_vec();
    if c.len() <= power {
        c.resize(power + 1, C::new(0.0, 0.0));
    }
    c[power] = v;
    Poly::new(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Connected,
    Disconnected,
    Unresolved,
}

impl Outcome {
    pub fn is_definite(self) -> bool {
        self != Outcome::Unresolved
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TestKind {
    TangencyEscape,
    SliceComponents,
    UnstableConnectivity,
}

/// Test budgets and the escalation order tangency → slice → unstable.
#[derive(Debug, Clone, PartialEq)]
pub struct BudgetPolicy {
    pub margin: f64,
    /// Horizontal line radius as a multiple of the bidisk radius.
    pub line_scale: f64,
    pub tangency_levels: usize,
    pub confine: usize,
    /// `(resolution, budget)` levels; empty skips the slice test.
    pub slice_schedule: Vec<(usize, usize)>,
    /// `None` skips the unstable test.
    pub unstable: Option<UnstableConfig>,
    pub leaf_order: usize,
}

impl Default for BudgetPolicy {
    fn default() -> Self {
        BudgetPolicy {
            margin: 1.25,
            line_scale: 1.05,
            tangency_levels: 3,
            confine: DEFAULT_CONFINE_BUDGET,
            slice_schedule: alloc::vec![(128, 4), (256, 6)],
            unstable: Some(UnstableConfig {
                levels: 4,
                resolution: 48,
                max_budget: 16,
                ..UnstableConfig::default()
            }),
            leaf_order: DEFAULT_ORDER,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamVerdict {
    pub i: usize,
    pub j: usize,
    pub x: f64,
    pub y: f64,
    pub verdict: Outcome,
    /// Test that produced the verdict, if definite.
    pub decisive: Option<TestKind>,
    /// Every test run, in escalation order.
    pub tests: Vec<(TestKind, Outcome)>,
    /// True when `σ∘f⁻¹∘σ` was tested because `|Jac f| > 1`.
    pub swapped: bool,
    /// Upper bound on map applications spent.
    pub cost: u64,
    pub error: Option<Error>,
}

/// Runs the escalation on a single map.
pub fn classify_map(f: &MapSpec, policy: &BudgetPolicy) -> Result<(Outcome, Option<TestKind>, Vec<(TestKind, Outcome)>, u64)> {
    let geom = choose_radius(f, policy.margin)?;
    let line = Transversal::horizontal_line(C::new(0.0, 0.0), policy.line_scale * geom.radius, &geom)?;
    let mut tests = Vec::new();
    let mut cost = 0u64;

    let tan = tangency_escape_test(f, &geom, &line, policy.tangency_levels, policy.confine);
    let d = f.degree as u64;
    for (n, &k) in tan.per_level.iter().enumerate() {
        cost += k as u64 * (n as u64 + 1 + policy.confine as u64) + d.saturating_pow(n as u32 + 1);
    }
    let o = match tan.verdict {
        TangencyEscape::AllConfined => Outcome::Connected,
        TangencyEscape::SomeEscape(_) => Outcome::Disconnected,
        TangencyEscape::Unresolved => Outcome::Unresolved,
    };
    tests.push((TestKind::TangencyEscape, o));
    if o.is_definite() {
        return Ok((o, Some(TestKind::TangencyEscape), tests, cost));
    }

    if !policy.slice_schedule.is_empty() {
        let o = match connectivity_verdict(f, &geom, &line, Side::Forward, &policy.slice_schedule) {
            Ok(rep) => match rep.verdict {
                Connectivity::Connected => Outcome::Connected,
                Connectivity::Disconnected => Outcome::Disconnected,
                Connectivity::Unresolved => Outcome::Unresolved,
            },
            Err(_) => Outcome::Unresolved,
        };
        cost += policy
            .slice_schedule
            .iter()
            .map(|&(n, b)| (n * n * b) as u64)
            .sum::<u64>();
        tests.push((TestKind::SliceComponents, o));
        if o.is_definite() {
            return Ok((o, Some(TestKind::SliceComponents), tests, cost));
        }
    }

    if let Some(cfg) = &policy.unstable {
        let o = unstable_outcome(f, &geom, cfg, policy.leaf_order);
        let mut b = cfg.budget;
        while b <= cfg.max_budget {
            cost += (cfg.levels * cfg.resolution * cfg.resolution * b) as u64;
            b *= 2;
        }
        tests.push((TestKind::UnstableConnectivity, o));
        if o.is_definite() {
            return Ok((o, Some(TestKind::UnstableConnectivity), tests, cost));
        }
    }
    Ok((Outcome::Unresolved, None, tests, cost))
}

/// First definite verdict over the fixed-point saddles.
fn unstable_outcome(f: &MapSpec, geom: &FiltrationGeometry, cfg: &UnstableConfig, order: usize) -> Outcome {
    let ev = PotentialEvaluator::new(f.clone(), *geom);
    let seeds = SeedSpec {
        itineraries: false,
        ..SeedSpec::default()
    };
    for o in periodic_points(f, geom, 1, &seeds).orbits {
        if !o.is_saddle() {
            continue;
        }
        let Ok(psi) = unstable_parametrization(f, &o, order) else {
            continue;
        };
        let rho = default_search_radius(&psi, geom);
        match unstable_connectivity_test(&ev, &psi, rho, cfg).map(|r| r.verdict) {
            Ok(UnstableVerdict::UnstablyConnectedEvidence) => return Outcome::Connected,
            Ok(UnstableVerdict::CompactComponent(_)) => return Outcome::Disconnected,
            _ => {}
        }
    }
    Outcome::Unresolved
}

/// Instantiates cell `(i, j)`, normalizes to `|Jac| ≤ 1` and classifies it.
pub fn evaluate_cell(family: &FamilySpec, policy: &BudgetPolicy, i: usize, j: usize) -> ParamVerdict {
    let (x, y) = family.parameter(i, j);
    evaluate_point(family, policy, x, y, i, j)
}

/// Same as [`evaluate_cell`] at an arbitrary parameter.
pub fn evaluate_point(family: &FamilySpec, policy: &BudgetPolicy, x: f64, y: f64, i: usize, j: usize) -> ParamVerdict {
    let mut out = ParamVerdict {
        i,
        j,
        x,
        y,
        verdict: Outcome::Unresolved,
        decisive: None,
        tests: Vec::new(),
        swapped: false,
        cost: 0,
        error: None,
    };
    let f = match family.instantiate(x, y).and_then(|f| normalize_jacobian(f)) {
        Ok((f, swapped)) => {
            out.swapped = swapped;
            f
        }
        Err(e) => {
            out.error = Some(e);
            return out;
        }
    };
    match classify_map(&f, policy) {
        Ok((verdict, decisive, tests, cost)) => {
            out.verdict = verdict;
            out.decisive = decisive;
            out.tests = tests;
            out.cost = cost;
        }
        Err(e) => out.error = Some(e),
    }
    out
}

/// Replaces `f` by `σ∘f⁻¹∘σ` when its constant Jacobian exceeds one in modulus.
pub fn normalize_jacobian(f: MapSpec) -> Result<(MapSpec, bool)> {
    if f.is_plain() && f.jacobian.norm() > 1.0 {
        Ok((f.swapped_inverse()?, true))
    } else {
        Ok((f, false))
    }
}

/// Sequential scan of rows `rows`, row-major.
pub fn scan_rows(family: &FamilySpec, policy: &BudgetPolicy, rows: core::ops::Range<usize>) -> Vec<ParamVerdict> {
    let mut out = Vec::with_capacity(rows.len() * family.x.n);
    for j in rows {
        for i in 0..family.x.n {
            out.push(evaluate_cell(family, policy, i, j));
        }
    }
    out
}

pub fn scan(family: &FamilySpec, policy: &BudgetPolicy) -> Vec<ParamVerdict> {
    scan_rows(family, policy, 0..family.y.n)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeViolation {
    pub i: usize,
    pub j: usize,
    /// A connected parameter found at the finest level.
    pub witness: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    /// Disconnected cells with a connected 8-neighbour.
    pub interface_cells: usize,
    pub levels: usize,
    /// Refined evaluations performed.
    pub evaluations: usize,
    /// Interface cells whose refined ring holds a connected parameter at
    /// every level.
    pub violations: Vec<ProbeViolation>,
}

impl ProbeReport {
    pub fn no_interface(&self) -> bool {
        self.interface_cells == 0
    }
}

/// Ring refinements tried per interface cell before a violation is reported.
pub const DEFAULT_PROBE_LEVELS: usize = 24;

/// Refines around every interface cell: at level `ℓ` the eight parameters
/// at offsets `±pitch/2^ℓ` are evaluated, and the cell passes once a whole
/// ring is free of connected verdicts.
pub fn boundary_probe_with(
    family: &FamilySpec,
    grid: &[ParamVerdict],
    levels: usize,
    mut eval: impl FnMut(f64, f64) -> Outcome,
) -> Result<ProbeReport> {
    let (nx, ny) = (family.x.n, family.y.n);
    if grid.len() != nx * ny {
        return Err(Error::InvalidInput("grid does not match the family window"));
    }
    let at = |i: usize, j: usize| grid[j * nx + i].verdict;
    let mut interface = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            if at(i, j) != Outcome::Disconnected {
                continue;
            }
            let touches = neighbours(i, j, nx, ny).any(|(a, b)| at(a, b) == Outcome::Connected);
            if touches {
                interface.push((i, j));
            }
        }
    }
    let mut report = ProbeReport {
        interface_cells: interface.len(),
        levels,
        evaluations: 0,
        violations: Vec::new(),
    };
    for (i, j) in interface {
        let (x0, y0) = family.parameter(i, j);
        let mut witness = None;
        let mut cleared = false;
        for level in 1..=levels {
            let s = 0.5f64.powi(level as i32);
            let (hx, hy) = (family.x.pitch() * s, family.y.pitch() * s);
            witness = None;
            for (di, dj) in RING {
                let (x, y) = (x0 + di as f64 * hx, y0 + dj as f64 * hy);
                report.evaluations += 1;
                if eval(x, y) == Outcome::Connected {
                    witness = Some((x, y));
                    break;
                }
            }
            if witness.is_none() {
                cleared = true;
                break;
            }
        }
        if !cleared {
            if let Some(w) = witness {
                report.violations.push(ProbeViolation { i, j, witness: w });
            }
        }
    }
    Ok(report)
}

const RING: [(i32, i32); 8] = [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)];

fn neighbours(i: usize, j: usize, nx: usize, ny: usize) -> impl Iterator<Item = (usize, usize)> {
    RING.iter().filter_map(move |&(di, dj)| {
        let (a, b) = (i as i64 + di as i64, j as i64 + dj as i64);
        (a >= 0 && b >= 0 && a < nx as i64 && b < ny as i64).then_some((a as usize, b as usize))
    })
}

/// [`boundary_probe_with`] using the scan's own cell evaluation.
pub fn boundary_probe(family: &FamilySpec, policy: &BudgetPolicy, grid: &[ParamVerdict], levels: usize) -> Result<ProbeReport> {
    boundary_probe_with(family, grid, levels, |x, y| {
        evaluate_point(family, policy, x, y, 0, 0).verdict
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationSample {
    pub a: C,
    pub verdict: TangencyEscape,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationReport {
    pub samples: Vec<PerturbationSample>,
    /// Largest `|a|` whose tangencies all stay confined, if any.
    pub largest_confined: Option<f64>,
    /// `min(δ/R, 1)` when `δ` is supplied.
    pub lemma_bound: Option<f64>,
    /// Whether every sample with `|a|` under the lemma bound is confined.
    pub lemma_consistent: Option<bool>,
}

/// Tangency-escape test of `(a·w + p(z), a·z)` on the line `w = 0` for
/// every `a` in `a_values`, with tangency levels up to `n`.
pub fn perturbation_regime_check(p: &Poly, a_values: &[C], n: usize, delta: Option<f64>, policy: &BudgetPolicy) -> Result<PerturbationReport> {
    let mut samples = Vec::with_capacity(a_values.len());
    let mut radius = 0.0f64;
    for &a in a_values {
        let f = MapSpec::compose(alloc::vec![crate::henon::HenonFactor::new(a, p.clone(), None)?])?;
        let geom = choose_radius(&f, policy.margin)?;
        radius = radius.max(geom.radius);
        let line = Transversal::horizontal_line(C::new(0.0, 0.0), policy.line_scale * geom.radius, &geom)?;
        let verdict = tangency_escape_test(&f, &geom, &line, n, policy.confine).verdict;
        samples.push(PerturbationSample { a, verdict });
    }
    let largest_confined = samples
        .iter()
        .filter(|s| s.verdict == TangencyEscape::AllConfined)
        .map(|s| s.a.norm())
        .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))));
    let lemma_bound = delta.filter(|_| radius > 0.0).map(|d| (d / radius).min(1.0));
    let lemma_consistent = lemma_bound.map(|b| {
        samples
            .iter()
            .filter(|s| s.a.norm() <= b)
            .all(|s| s.verdict == TangencyEscape::AllConfined)
    });
    Ok(PerturbationReport {
        samples,
        largest_confined,
        lemma_bound,
        lemma_consistent,
    })
}
