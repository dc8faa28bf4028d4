//! JSON encodings of maps, orbits, leaves and test reports.
//!
//! Complex numbers are `[re, im]` arrays and polynomial coefficients are
//! listed in ascending degree.

use std::path::Path;

use henonlab_core::family::{Axis, BudgetPolicy, FamilySpec, Outcome, ParamPlane, Slot, TestKind};
use henonlab_core::henon::{CertVerdict, Certification, Condition};
use henonlab_core::saddle::{
    CompactWitness, Detector, LeafParametrization, OrbitClass, PeriodicOrbit, UnstableConfig,
    UnstableReport, UnstableVerdict,
};
use henonlab_core::slice::{
    ComponentReport, Connectivity, ConnectivityReport, TangencyEscape, TangencyEscapeReport,
    TangencyReport,
};
use henonlab_core::{c, HenonFactor, MapSpec, Point, Poly, Side, Verdict, C};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorFile {
    pub a: [f64; 2],
    pub p: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<[f64; 2]>>,
}

/// On-disk form of a [`MapSpec`]; `factors[0]` is applied first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapFile {
    pub factors: Vec<FactorFile>,
}

fn pair(z: C) -> [f64; 2] {
    [z.re, z.im]
}

fn poly_pairs(p: &Poly) -> Vec<[f64; 2]> {
    p.coeffs().iter().map(|&z| pair(z)).collect()
}

fn poly_from(v: &[[f64; 2]]) -> Poly {
    Poly::new(v.iter().map(|&[re, im]| c(re, im)).collect())
}

impl MapFile {
    pub fn from_map(f: &MapSpec) -> Self {
        MapFile {
            factors: f
                .factors
                .iter()
                .map(|h| FactorFile {
                    a: pair(h.a),
                    p: poly_pairs(&h.p),
                    b: h.b.as_ref().map(poly_pairs),
                })
                .collect(),
        }
    }

    pub fn to_map(&self) -> henonlab_core::Result<MapSpec> {
        let factors = self
            .factors
            .iter()
            .map(|f| HenonFactor {
                a: c(f.a[0], f.a[1]),
                p: poly_from(&f.p),
                b: f.b.as_deref().map(poly_from),
            })
            .collect();
        MapSpec::compose(factors)
    }
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Reads and validates a map file. Invalid maps are reported as malformed input.
pub fn read_map(path: &Path) -> CliResult<(MapFile, MapSpec)> {
    let file: MapFile = read_json(path)?;
    let map = file.to_map().map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok((file, map))
}

/// Pretty JSON with a trailing newline.
pub fn to_pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values always serialize");
    s.push('\n');
    s
}

pub fn cx(z: C) -> Value {
    json!([z.re, z.im])
}

pub fn point(p: &Point) -> Value {
    json!({ "z": cx(p.z), "w": cx(p.w) })
}

pub fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::Inside => "inside",
        Verdict::Escaped => "escaped",
        Verdict::Unresolved => "unresolved",
    }
}

pub fn side_name(s: Side) -> &'static str {
    match s {
        Side::Forward => "forward",
        Side::Backward => "backward",
    }
}

pub fn outcome_name(o: Outcome) -> &'static str {
    match o {
        Outcome::Connected => "connected",
        Outcome::Disconnected => "disconnected",
        Outcome::Unresolved => "unresolved",
    }
}

pub fn test_name(t: TestKind) -> &'static str {
    match t {
        TestKind::TangencyEscape => "tangency_escape",
        TestKind::SliceComponents => "slice_components",
        TestKind::UnstableConnectivity => "unstable_connectivity",
    }
}

pub fn connectivity_name(c: Connectivity) -> &'static str {
    match c {
        Connectivity::Connected => "connected",
        Connectivity::Disconnected => "disconnected",
        Connectivity::Unresolved => "unresolved",
    }
}

fn class_name(c: OrbitClass) -> &'static str {
    match c {
        OrbitClass::Saddle => "saddle",
        OrbitClass::Attracting => "attracting",
        OrbitClass::Repelling => "repelling",
        OrbitClass::Neutral => "neutral",
    }
}

pub fn components(r: &ComponentReport) -> Value {
    json!({
        "lower": r.lower,
        "upper": r.upper,
        "unresolved_fraction": r.unresolved_fraction,
        "max_diameter": r.max_diameter(),
        "components": r.components.iter().map(|k| json!({
            "pixels": k.pixels,
            "bbox": [cx(k.bbox.lo), cx(k.bbox.hi)],
            "diameter": k.diameter,
        })).collect::<Vec<_>>(),
    })
}

pub fn connectivity(r: &ConnectivityReport) -> Value {
    json!({
        "verdict": connectivity_name(r.verdict),
        "levels": r.levels.iter().map(|l| json!({
            "resolution": l.resolution,
            "budget": l.budget,
            "lower4": l.lower4,
            "upper4": l.upper4,
            "lower8": l.lower8,
            "upper8": l.upper8,
            "unresolved_fraction": l.unresolved_fraction,
        })).collect::<Vec<_>>(),
    })
}

pub fn tangencies(r: &TangencyReport) -> Value {
    json!({
        "n": r.n,
        "total": r.total,
        "count": r.count,
        "tangencies": r.tangencies.iter().map(|t| json!({
            "t": cx(t.t),
            "multiplicity": t.multiplicity,
            "image": point(&t.image),
            "in_bidisk": t.in_bidisk,
        })).collect::<Vec<_>>(),
    })
}

pub fn tangency_escape(r: &TangencyEscapeReport) -> Value {
    let (verdict, witness) = match &r.verdict {
        TangencyEscape::AllConfined => ("all_confined", Value::Null),
        TangencyEscape::SomeEscape(w) => (
            "some_escape",
            json!({ "n": w.n, "t": cx(w.t), "exit_step": w.exit_step }),
        ),
        TangencyEscape::Unresolved => ("unresolved", Value::Null),
    };
    json!({ "verdict": verdict, "witness": witness, "per_level": r.per_level })
}

pub fn orbit(o: &PeriodicOrbit) -> Value {
    json!({
        "period": o.period,
        "class": class_name(o.class),
        "multipliers": [cx(o.multipliers[0]), cx(o.multipliers[1])],
        "points": o.points.iter().map(point).collect::<Vec<_>>(),
    })
}

pub fn leaf(psi: &LeafParametrization) -> Value {
    json!({
        "period": psi.period(),
        "base": point(&psi.base),
        "lambda": cx(psi.lambda),
        "order": psi.order,
        "radius": psi.radius,
        "residual": psi.residual,
        "growth": psi.growth,
        "coefficients": (0..psi.coeffs.len()).map(|k| point(&psi.coeffs.coeff(k))).collect::<Vec<_>>(),
    })
}

fn witness(w: &CompactWitness) -> Value {
    let detector = match w.detector {
        Detector::Island => "island",
        Detector::CriticalPoint => "critical_point",
    };
    json!({ "detector": detector, "level": w.level, "rho": w.rho, "t": cx(w.t) })
}

pub fn unstable_verdict_name(v: &UnstableVerdict) -> &'static str {
    match v {
        UnstableVerdict::UnstablyConnectedEvidence => "unstably_connected_evidence",
        UnstableVerdict::CompactComponent(_) => "compact_component",
        UnstableVerdict::Unresolved => "unresolved",
    }
}

pub fn unstable(r: &UnstableReport) -> Value {
    json!({
        "verdict": unstable_verdict_name(&r.verdict),
        "island_witness": r.island_witness.as_ref().map(witness),
        "critical_witness": r.critical_witness.as_ref().map(witness),
        "levels": r.levels.iter().map(|l| json!({
            "budget": l.budget,
            "rho": l.rho,
            "inside": l.inside,
            "escaped": l.escaped,
            "unresolved": l.unresolved,
            "islands": l.islands,
            "inside_reaches_border": l.inside_reaches_border,
            "critical_points": l.critical_points,
            "blocks": l.blocks,
            "failed_blocks": l.failed_blocks,
        })).collect::<Vec<_>>(),
    })
}

pub fn certification(r: &Certification) -> Value {
    let (verdict, witness) = match &r.verdict {
        CertVerdict::Certified => ("certified", Value::Null),
        CertVerdict::Violated { witness, condition } => {
            let cond = match condition {
                Condition::Radius => "radius",
                Condition::VerticalBoundary => "vertical_boundary",
                Condition::HorizontalBoundary => "horizontal_boundary",
            };
            ("violated", json!({ "point": point(witness), "condition": cond }))
        }
        CertVerdict::Inconclusive => ("inconclusive", Value::Null),
    };
    json!({
        "verdict": verdict,
        "witness": witness,
        "radius_clearance": r.radius_clearance,
        "vertical_clearance": r.vertical_clearance,
        "horizontal_clearance": r.horizontal_clearance,
        "samples": r.samples,
    })
}

/// On-disk form of a parameter slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "coefficient", rename_all = "snake_case")]
pub enum SlotFile {
    A { factor: usize },
    P { factor: usize, power: usize },
    B { factor: usize, power: usize },
}

impl From<SlotFile> for Slot {
    fn from(s: SlotFile) -> Slot {
        match s {
            SlotFile::A { factor } => Slot::A { factor },
            SlotFile::P { factor, power } => Slot::P { factor, power },
            SlotFile::B { factor, power } => Slot::B { factor, power },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlaneFile {
    Complex(SlotFile),
    Real(SlotFile, SlotFile),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisFile {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

/// On-disk form of a [`FamilySpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyFile {
    pub template: MapFile,
    pub plane: PlaneFile,
    pub x: AxisFile,
    pub y: AxisFile,
}

impl FamilyFile {
    /// The quadratic family over a window of `c` at fixed `a`.
    pub fn quadratic_c(a: C, x: AxisFile, y: AxisFile) -> henonlab_core::Result<Self> {
        let template = MapFile::from_map(&MapSpec::quadratic(c(0.0, 0.0), a)?);
        Ok(FamilyFile {
            template,
            plane: PlaneFile::Complex(SlotFile::P { factor: 0, power: 0 }),
            x,
            y,
        })
    }

    pub fn to_family(&self) -> henonlab_core::Result<FamilySpec> {
        let plane = match self.plane {
            PlaneFile::Complex(s) => ParamPlane::Complex(s.into()),
            PlaneFile::Real(a, b) => ParamPlane::Real(a.into(), b.into()),
        };
        Ok(FamilySpec {
            template: self.template.to_map()?,
            plane,
            x: Axis::new(self.x.lo, self.x.hi, self.x.n)?,
            y: Axis::new(self.y.lo, self.y.hi, self.y.n)?,
        })
    }
}

/// On-disk form of a [`BudgetPolicy`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyFile {
    pub margin: f64,
    pub line_scale: f64,
    pub tangency_levels: usize,
    pub confine: usize,
    pub slice_schedule: Vec<(usize, usize)>,
    pub unstable: Option<UnstableFile>,
    pub leaf_order: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnstableFile {
    pub levels: usize,
    pub resolution: usize,
    pub budget: usize,
    pub max_budget: usize,
    pub block: usize,
}

impl From<&UnstableConfig> for UnstableFile {
    fn from(u: &UnstableConfig) -> Self {
        UnstableFile {
            levels: u.levels,
            resolution: u.resolution,
            budget: u.budget,
            max_budget: u.max_budget,
            block: u.block,
        }
    }
}

impl From<UnstableFile> for UnstableConfig {
    fn from(u: UnstableFile) -> Self {
        UnstableConfig {
            levels: u.levels,
            resolution: u.resolution,
            budget: u.budget,
            max_budget: u.max_budget,
            block: u.block,
        }
    }
}

impl From<&BudgetPolicy> for PolicyFile {
    fn from(p: &BudgetPolicy) -> Self {
        PolicyFile {
            margin: p.margin,
            line_scale: p.line_scale,
            tangency_levels: p.tangency_levels,
            confine: p.confine,
            slice_schedule: p.slice_schedule.clone(),
            unstable: p.unstable.as_ref().map(UnstableFile::from),
            leaf_order: p.leaf_order,
        }
    }
}

impl From<&PolicyFile> for BudgetPolicy {
    fn from(p: &PolicyFile) -> Self {
        BudgetPolicy {
            margin: p.margin,
            line_scale: p.line_scale,
            tangency_levels: p.tangency_levels,
            confine: p.confine,
            slice_schedule: p.slice_schedule.clone(),
            unstable: p.unstable.map(UnstableConfig::from),
            leaf_order: p.leaf_order,
        }
    }
}
