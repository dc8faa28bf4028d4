//! Command-line front end. Every subcommand reads a map (or a family), runs
//! one pipeline, writes its artifacts plus `metadata.json` into `--out`, and
//! exits with 0 on a definite result, 2 when unresolved, 1 on a numerical
//! error, 64 on a usage error and 74 on an I/O error.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use henonlab_core::contour::Rect;
use henonlab_core::family::{boundary_probe, BudgetPolicy, Outcome, DEFAULT_PROBE_LEVELS};
use henonlab_core::henon::{certify_henonlike, choose_radius, CertVerdict, FiltrationGeometry};
use henonlab_core::measure::{compare_measures, mu_samples_periodic};
use henonlab_core::potential::PotentialEvaluator;
use henonlab_core::rays::{sample_ray_starts, trace_rays, LandingMeasure, RayConfig, RayStatus};
use henonlab_core::saddle::{
    default_search_radius, find_attracting_orbits, leaf_eval, periodic_points,
    unstable_connectivity_test, unstable_parametrization, LeafParametrization, PeriodicOrbit,
    SeedSpec, UnstableConfig, UnstableVerdict, DEFAULT_ORDER,
};
use henonlab_core::slice::{
    connectivity_verdict, label_components, rasterize_slice, rh_consistency, tangency_count,
    tangency_escape_test, Adjacency, Connectivity, TangencyEscape, TangencyRegion, Transversal,
    DEFAULT_CONFINE_BUDGET, MAX_UNRESOLVED_FRACTION,
};
use henonlab_core::{c, Error, MapSpec, Side, Verdict, C};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{write_metadata, RunConfig};
use crate::error::{exit, CliError, CliResult};
use crate::formats::{cloud_csv, fmt_f64, potential_csv, read_points_csv, slice_pgm, tri_state_pgm, write_file};
use crate::json::{self, AxisFile, FamilyFile, MapFile, PolicyFile};
use crate::render::render_green;
use crate::scan::{evidence_csv, verdict_ppm, worker_count, ScanJob};

#[derive(Debug, Parser)]
#[command(name = "henonlab", version, about = "Numerical laboratory for complex Hénon maps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SideArg {
    Forward,
    Backward,
}

impl From<SideArg> for Side {
    fn from(s: SideArg) -> Side {
        match s {
            SideArg::Forward => Side::Forward,
            SideArg::Backward => Side::Backward,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Map file (JSON).
    #[arg(long)]
    pub map: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Filtration radius as a multiple of the minimal radius.
    #[arg(long, default_value_t = 1.25)]
    pub margin: f64,
    /// Recorded in the metadata; all pipelines are deterministic.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct LineArgs {
    /// Height `w0` of the horizontal line, as `re,im`.
    #[arg(long, default_value = "0", value_parser = parse_complex, allow_hyphen_values = true)]
    pub w0: C,
    /// Line radius as a multiple of the filtration radius.
    #[arg(long, default_value_t = 1.05)]
    pub scale: f64,
}

#[derive(Debug, Clone, Args)]
pub struct SaddleArgs {
    /// Period of the saddle whose unstable leaf is used.
    #[arg(long, default_value_t = 1)]
    pub period: usize,
    /// Index among the saddles of that period.
    #[arg(long, default_value_t = 0)]
    pub index: usize,
    /// Truncation order of the leaf series.
    #[arg(long, default_value_t = DEFAULT_ORDER)]
    pub order: usize,
}

#[derive(Debug, Clone, Args)]
pub struct RayArgs {
    #[arg(long, default_value_t = 1000)]
    pub count: usize,
    /// Potential level on which rays start.
    #[arg(long, default_value_t = 3.0)]
    pub level: f64,
    /// Potential at which rays stop.
    #[arg(long, default_value_t = 1e-4)]
    pub eps: f64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Raster a horizontal slice of K± and label its components.
    Slice {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        line: LineArgs,
        #[arg(long, default_value_t = 256)]
        res: usize,
        #[arg(long, default_value_t = 200)]
        budget: usize,
        #[arg(long, value_enum, default_value_t = SideArg::Forward)]
        side: SideArg,
    },
    /// Slice connectivity verdict at resolutions res/2 and res.
    Connect {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        line: LineArgs,
        #[arg(long, default_value_t = 256)]
        res: usize,
        /// Escape steps per cell; deep budgets under-resolve pinched slices.
        #[arg(long, default_value_t = 6)]
        budget: usize,
    },
    /// Vertical tangencies of the iterated line and the tangency-escape test.
    Tangency {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        line: LineArgs,
        /// Largest iterate.
        #[arg(long, default_value_t = 3)]
        n: usize,
        /// Extra forward steps a confined tangency must survive.
        #[arg(long, default_value_t = DEFAULT_CONFINE_BUDGET)]
        confine: usize,
        /// Also check the Riemann–Hurwitz count at this slice resolution.
        #[arg(long)]
        rh_res: Option<usize>,
    },
    /// Periodic orbits up to a period, with attracting cycles.
    Saddles {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 4)]
        period: usize,
    },
    /// Unstable leaf parametrization and the unstable connectivity test.
    Leaf {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        saddle: SaddleArgs,
        #[arg(long, default_value_t = 96)]
        res: usize,
        #[arg(long, default_value_t = 8)]
        levels: usize,
        #[arg(long, default_value_t = 2)]
        budget: usize,
        #[arg(long, default_value_t = 32)]
        max_budget: usize,
        #[arg(long, default_value_t = 4)]
        block: usize,
    },
    /// External rays on an unstable leaf.
    Rays {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        saddle: SaddleArgs,
        #[command(flatten)]
        rays: RayArgs,
    },
    /// Ray landing measure against the periodic-orbit measure.
    Measure {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        saddle: SaddleArgs,
        #[command(flatten)]
        rays: RayArgs,
        /// Largest period of the saddle orbits sampled.
        #[arg(long, default_value_t = 8)]
        nmax: usize,
        /// Histogram boxes per side.
        #[arg(long, default_value_t = 16)]
        boxes: usize,
    },
    /// Parameter-plane scan of connectivity verdicts.
    Scan(ScanArgs),
    /// Sampling check of the Hénon-like boundary conditions.
    Certify {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 4096)]
        samples: usize,
    },
    /// Render G⁺ on a horizontal slice as a PGM image.
    Green {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 256)]
        res: usize,
        /// `lo_re,lo_im,hi_re,hi_im`; defaults to [-R, R]².
        #[arg(long, allow_hyphen_values = true)]
        window: Option<String>,
        #[arg(long, default_value = "0", value_parser = parse_complex, allow_hyphen_values = true)]
        w0: C,
    },
    /// Batch potential evaluation of a CSV point list.
    Potential {
        #[command(flatten)]
        common: Common,
        /// CSV with columns re(z), im(z), re(w), im(w).
        #[arg(long)]
        points: PathBuf,
        #[arg(long, value_enum, default_value_t = SideArg::Forward)]
        side: SideArg,
    },
}

#[derive(Debug, Clone, Args)]
pub struct ScanArgs {
    /// Family file (JSON); overrides --a, --x and --y.
    #[arg(long)]
    pub family: Option<PathBuf>,
    /// Jacobian coefficient of the quadratic family in c.
    #[arg(long, default_value = "0.1", value_parser = parse_complex, allow_hyphen_values = true)]
    pub a: C,
    /// Real axis of c as `lo,hi,n`.
    #[arg(long, default_value = "-2,0.5,64", allow_hyphen_values = true)]
    pub x: String,
    /// Imaginary axis of c as `lo,hi,n`.
    #[arg(long, default_value = "-0.5,0.5,64", allow_hyphen_values = true)]
    pub y: String,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker count, capped by HENONLAB_THREADS.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Checkpoint file; defaults to `scan.checkpoint.jsonl` in the output directory.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Stop after computing this many rows.
    #[arg(long)]
    pub row_limit: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_PROBE_LEVELS)]
    pub probe_levels: usize,
    #[arg(long)]
    pub no_probe: bool,
    #[arg(long, default_value_t = 3)]
    pub tangency_levels: usize,
    #[arg(long, default_value_t = DEFAULT_CONFINE_BUDGET)]
    pub confine: usize,
    /// Skip the slice-components test.
    #[arg(long)]
    pub no_slice: bool,
    /// Skip the unstable-connectivity test.
    #[arg(long)]
    pub no_unstable: bool,
}

/// Parses `re,im` or a bare real number.
pub fn parse_complex(s: &str) -> Result<C, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let num = |t: &str| t.parse::<f64>().map_err(|_| format!("`{t}` is not a number"));
    match parts.as_slice() {
        [re] => Ok(c(num(re)?, 0.0)),
        [re, im] => Ok(c(num(re)?, num(im)?)),
        _ => Err(format!("expected `re,im`, got `{s}`")),
    }
}

fn parse_axis(s: &str) -> CliResult<AxisFile> {
    let p: Vec<&str> = s.split(',').map(str::trim).collect();
    let bad = || CliError::Usage(format!("axis must be `lo,hi,n`, got `{s}`"));
    if p.len() != 3 {
        return Err(bad());
    }
    let lo = p[0].parse().map_err(|_| bad())?;
    let hi = p[1].parse().map_err(|_| bad())?;
    let n = p[2].parse().map_err(|_| bad())?;
    Ok(AxisFile { lo, hi, n })
}

fn parse_window(s: &str) -> CliResult<Rect> {
    let v: Result<Vec<f64>, _> = s.split(',').map(|t| t.trim().parse::<f64>()).collect();
    match v {
        Ok(v) if v.len() == 4 => Ok(Rect { lo: c(v[0], v[1]), hi: c(v[2], v[3]) }),
        _ => Err(CliError::Usage(format!("window must be `lo_re,lo_im,hi_re,hi_im`, got `{s}`"))),
    }
}

/// What a pipeline hands back to the metadata stage.
struct Report {
    code: i32,
    input: Value,
    params: Value,
    result: Value,
    caveats: Vec<&'static str>,
    files: Vec<(String, Vec<u8>)>,
}

const BIRATIONAL_CAVEAT: &str = "birational perturbation: the supports of the dynamical currents are not known to equal J+ and J-, and the Jacobian varies with z";
const LEAF_CAVEAT: &str = "rays are traced on the chosen saddle's leaf, which is not verified to be a generic leaf of finite degree";

struct Loaded {
    file: MapFile,
    map: MapSpec,
    geom: FiltrationGeometry,
}

fn load(common: &Common) -> CliResult<Loaded> {
    if !(common.margin >= 1.0) {
        return Err(CliError::Usage("--margin must be at least 1".into()));
    }
    let (file, map) = json::read_map(&common.map)?;
    let geom = choose_radius(&map, common.margin)?;
    Ok(Loaded { file, map, geom })
}

fn caveats(map: &MapSpec) -> Vec<&'static str> {
    if map.is_plain() {
        Vec::new()
    } else {
        vec![BIRATIONAL_CAVEAT]
    }
}

fn ray_caveats(map: &MapSpec) -> Vec<&'static str> {
    let mut c = caveats(map);
    c.push(LEAF_CAVEAT);
    c
}

fn line(l: &Loaded, args: &LineArgs) -> CliResult<Transversal> {
    Ok(Transversal::horizontal_line(args.w0, args.scale * l.geom.radius, &l.geom)?)
}

fn line_params(args: &LineArgs) -> Value {
    json!({ "w0": json::cx(args.w0), "scale": args.scale })
}

fn definite(yes: bool) -> i32 {
    if yes {
        exit::DEFINITE
    } else {
        exit::UNRESOLVED
    }
}

fn pick_saddle(l: &Loaded, args: &SaddleArgs) -> CliResult<(PeriodicOrbit, LeafParametrization)> {
    if args.period == 0 {
        return Err(CliError::Usage("--period must be at least 1".into()));
    }
    let orbit = periodic_points(&l.map, &l.geom, args.period, &SeedSpec::default())
        .orbits
        .into_iter()
        .filter(PeriodicOrbit::is_saddle)
        .nth(args.index)
        .ok_or(Error::EmptySet)?;
    let psi = unstable_parametrization(&l.map, &orbit, args.order)?;
    Ok((orbit, psi))
}

fn saddle_params(args: &SaddleArgs) -> Value {
    json!({ "period": args.period, "index": args.index, "order": args.order })
}

fn ray_params(args: &RayArgs) -> Value {
    json!({ "count": args.count, "level": args.level, "eps": args.eps })
}

fn cmd_slice(common: &Common, la: &LineArgs, res: usize, budget: usize, side: SideArg) -> CliResult<Report> {
    let l = load(common)?;
    let v = line(&l, la)?;
    let grid = rasterize_slice(&l.map, &l.geom, &v, res, budget, side.into())?;
    let four = label_components(&grid, Adjacency::Four);
    let eight = label_components(&grid, Adjacency::Eight);
    let unresolved = grid.fraction(Verdict::Unresolved);
    let sidecar = json!({
        "radius": l.geom.radius,
        "rho": v.rho,
        "window": [json::cx(grid.window.lo), json::cx(grid.window.hi)],
        "resolution": res,
        "budget": budget,
        "side": json::side_name(side.into()),
        "encoding": { "inside": 0, "unresolved": 128, "escaped": 255, "top_row": "largest Im t" },
        "components4": json::components(&four),
        "components8": json::components(&eight),
    });
    Ok(Report {
        code: definite(unresolved <= MAX_UNRESOLVED_FRACTION),
        input: json!(l.file),
        params: json!({ "line": line_params(la), "res": res, "budget": budget, "side": json::side_name(side.into()), "margin": common.margin }),
        result: json!({ "components8_upper": eight.upper, "unresolved_fraction": unresolved }),
        caveats: caveats(&l.map),
        files: vec![
            ("slice.pgm".into(), slice_pgm(&grid)),
            ("slice.json".into(), json::to_pretty(&sidecar).into_bytes()),
        ],
    })
}

fn cmd_connect(common: &Common, la: &LineArgs, res: usize, budget: usize) -> CliResult<Report> {
    if res < 32 {
        return Err(CliError::Usage("--res must be at least 32".into()));
    }
    let l = load(common)?;
    let v = line(&l, la)?;
    let schedule = [(res / 2, budget), (res, budget)];
    let rep = connectivity_verdict(&l.map, &l.geom, &v, Side::Forward, &schedule)?;
    let out = json::connectivity(&rep);
    Ok(Report {
        code: definite(rep.verdict != Connectivity::Unresolved),
        input: json!(l.file),
        params: json!({ "line": line_params(la), "schedule": schedule, "margin": common.margin }),
        result: json!({ "verdict": json::connectivity_name(rep.verdict) }),
        caveats: caveats(&l.map),
        files: vec![("connect.json".into(), json::to_pretty(&out).into_bytes())],
    })
}

fn cmd_tangency(common: &Common, la: &LineArgs, n: usize, confine: usize, rh_res: Option<usize>) -> CliResult<Report> {
    let l = load(common)?;
    let v = line(&l, la)?;
    let esc = tangency_escape_test(&l.map, &l.geom, &v, n, confine);
    let mut levels = Vec::new();
    for k in 1..=n {
        let entry = match tangency_count(&l.map, &l.geom, &v, k, TangencyRegion::Bidisk) {
            Ok(r) => json::tangencies(&r),
            Err(e) => json!({ "n": k, "error": e.to_string() }),
        };
        let rh = rh_res.map(|res| match rh_consistency(&l.map, &l.geom, &v, k, res) {
            Ok(r) => json!({
                "tangencies": r.tangencies,
                "degree": r.degree,
                "components_lower": r.components_lower,
                "components_upper": r.components_upper,
                "pass": r.pass,
            }),
            Err(e) => json!({ "error": e.to_string() }),
        });
        levels.push(json!({ "count": entry, "riemann_hurwitz": rh }));
    }
    let escape = json::tangency_escape(&esc);
    let out = json!({ "escape": escape, "levels": levels });
    Ok(Report {
        code: definite(esc.verdict != TangencyEscape::Unresolved),
        input: json!(l.file),
        params: json!({ "line": line_params(la), "n": n, "confine": confine, "rh_res": rh_res, "margin": common.margin }),
        result: json!({ "verdict": escape["verdict"] }),
        caveats: caveats(&l.map),
        files: vec![("tangency.json".into(), json::to_pretty(&out).into_bytes())],
    })
}

fn cmd_saddles(common: &Common, period: usize) -> CliResult<Report> {
    let l = load(common)?;
    let per_period: Vec<Vec<PeriodicOrbit>> = (1..=period)
        .into_par_iter()
        .map(|n| periodic_points(&l.map, &l.geom, n, &SeedSpec::default()).orbits)
        .collect();
    let attracting = find_attracting_orbits(&l.map, &l.geom, period);
    let saddles: usize = per_period.iter().flatten().filter(|o| o.is_saddle()).count();
    let out = json!({
        "radius": l.geom.radius,
        "orbits": per_period.iter().flatten().map(json::orbit).collect::<Vec<_>>(),
        "attracting": attracting.iter().map(json::orbit).collect::<Vec<_>>(),
    });
    Ok(Report {
        code: exit::DEFINITE,
        input: json!(l.file),
        params: json!({ "period": period, "margin": common.margin }),
        result: json!({ "saddle_orbits": saddles, "attracting_orbits": attracting.len() }),
        caveats: caveats(&l.map),
        files: vec![("saddles.json".into(), json::to_pretty(&out).into_bytes())],
    })
}

fn cmd_leaf(common: &Common, sa: &SaddleArgs, cfg: UnstableConfig) -> CliResult<Report> {
    let l = load(common)?;
    let (_, psi) = pick_saddle(&l, sa)?;
    let rho = default_search_radius(&psi, &l.geom);
    let ev = PotentialEvaluator::new(l.map.clone(), l.geom);
    let rep = unstable_connectivity_test(&ev, &psi, rho, &cfg)?;
    let n = cfg.resolution;
    let member = PotentialEvaluator::with_budget(l.map.clone(), l.geom, cfg.max_budget, ev.tol);
    let h = 2.0 * rho / n as f64;
    let cells: Vec<Verdict> = (0..n * n)
        .into_par_iter()
        .map(|k| {
            let t = c(-rho + (k % n) as f64 * h + 0.5 * h, -rho + (k / n) as f64 * h + 0.5 * h);
            let x = leaf_eval(&psi, t).point;
            if x.is_finite() {
                member.k_membership(x, Side::Forward)
            } else {
                Verdict::Escaped
            }
        })
        .collect();
    let out = json!({
        "leaf": json::leaf(&psi),
        "chart": { "rho": rho, "resolution": n, "budget": cfg.max_budget },
        "unstable": json::unstable(&rep),
    });
    Ok(Report {
        code: definite(rep.verdict != UnstableVerdict::Unresolved),
        input: json!(l.file),
        params: json!({
            "saddle": saddle_params(sa),
            "unstable": json::UnstableFile::from(&cfg),
            "margin": common.margin,
        }),
        result: json!({ "verdict": json::unstable_verdict_name(&rep.verdict) }),
        caveats: caveats(&l.map),
        files: vec![
            ("leaf.json".into(), json::to_pretty(&out).into_bytes()),
            ("leaf.pgm".into(), tri_state_pgm(n, &cells)),
        ],
    })
}

fn status_name(s: RayStatus) -> &'static str {
    match s {
        RayStatus::Landed => "landed",
        RayStatus::HitCriticalPoint => "hit_critical_point",
        RayStatus::BudgetExhausted => "budget_exhausted",
    }
}

fn ray_landing(l: &Loaded, sa: &SaddleArgs, ra: &RayArgs) -> CliResult<(Vec<henonlab_core::rays::RayPath>, LandingMeasure)> {
    if ra.count == 0 {
        return Err(CliError::Usage("--count must be at least 1".into()));
    }
    let (_, psi) = pick_saddle(l, sa)?;
    let ev = PotentialEvaluator::new(l.map.clone(), l.geom);
    let cfg = RayConfig::default();
    let starts = sample_ray_starts(&ev, &psi, ra.level, ra.count, &cfg)?;
    let paths = trace_rays(&ev, &psi, &starts, ra.eps, &cfg);
    let lm = LandingMeasure::from_paths(&paths)?;
    Ok((paths, lm))
}

fn cmd_rays(common: &Common, sa: &SaddleArgs, ra: &RayArgs) -> CliResult<Report> {
    let l = load(common)?;
    let (paths, lm) = ray_landing(&l, sa, ra)?;
    let mut rays = String::from("ray,step,re_t,im_t,g\n");
    let mut ends = String::from("ray,status,re_z,im_z,re_w,im_w\n");
    for (id, p) in paths.iter().enumerate() {
        for (k, s) in p.samples.iter().enumerate() {
            rays.push_str(&format!("{id},{k},{},{},{}\n", fmt_f64(s.t.re), fmt_f64(s.t.im), fmt_f64(s.g)));
        }
        let coords = p.landing.map_or_else(
            || ",,,".to_string(),
            |x| format!("{},{},{},{}", fmt_f64(x.z.re), fmt_f64(x.z.im), fmt_f64(x.w.re), fmt_f64(x.w.im)),
        );
        ends.push_str(&format!("{id},{},{coords}\n", status_name(p.status)));
    }
    Ok(Report {
        code: definite(lm.unlanded_fraction() <= 0.05),
        input: json!(l.file),
        params: json!({ "saddle": saddle_params(sa), "rays": ray_params(ra), "margin": common.margin }),
        result: json!({
            "landed": lm.landed,
            "hit_critical_point": lm.hit_critical,
            "budget_exhausted": lm.exhausted,
        }),
        caveats: ray_caveats(&l.map),
        files: vec![("rays.csv".into(), rays.into_bytes()), ("landing.csv".into(), ends.into_bytes())],
    })
}

fn cmd_measure(common: &Common, sa: &SaddleArgs, ra: &RayArgs, nmax: usize, boxes: usize) -> CliResult<Report> {
    let l = load(common)?;
    let (_, lm) = ray_landing(&l, sa, ra)?;
    let mu = mu_samples_periodic(&l.map, &l.geom, nmax, &SeedSpec::default())?;
    let tv = compare_measures(&lm.measure, &mu, boxes, l.geom.radius)?;
    let result = json!({
        "total_variation": tv,
        "boxes": boxes,
        "radius": l.geom.radius,
        "periodic_points": mu.len(),
        "landed": lm.landed,
        "unlanded_fraction": lm.unlanded_fraction(),
    });
    Ok(Report {
        code: definite(lm.unlanded_fraction() <= 0.05),
        input: json!(l.file),
        params: json!({
            "saddle": saddle_params(sa),
            "rays": ray_params(ra),
            "nmax": nmax,
            "boxes": boxes,
            "margin": common.margin,
        }),
        result: result.clone(),
        caveats: ray_caveats(&l.map),
        files: vec![
            ("periodic.csv".into(), cloud_csv(mu.points(), mu.weights()).into_bytes()),
            ("landing.csv".into(), cloud_csv(lm.measure.points(), lm.measure.weights()).into_bytes()),
            ("measure.json".into(), json::to_pretty(&result).into_bytes()),
        ],
    })
}

fn cmd_scan(args: &ScanArgs) -> CliResult<Report> {
    let family_file = match &args.family {
        Some(p) => json::read_json::<FamilyFile>(p)?,
        None => FamilyFile::quadratic_c(args.a, parse_axis(&args.x)?, parse_axis(&args.y)?)?,
    };
    let family = family_file.to_family()?;
    let mut policy = BudgetPolicy {
        tangency_levels: args.tangency_levels,
        confine: args.confine,
        ..BudgetPolicy::default()
    };
    if args.no_slice {
        policy.slice_schedule.clear();
    }
    if args.no_unstable {
        policy.unstable = None;
    }
    let policy_file = PolicyFile::from(&policy);
    let threads = worker_count(args.threads);
    let checkpoint = args
        .checkpoint
        .clone()
        .unwrap_or_else(|| args.out.join("scan.checkpoint.jsonl"));
    let job = ScanJob {
        family_file: family_file.clone(),
        policy_file: policy_file.clone(),
        threads,
        checkpoint: Some(checkpoint.clone()),
        row_limit: args.row_limit,
    };
    let res = job.run()?;
    let params = json!({
        "policy": policy_file,
        "probe_levels": if args.no_probe { Value::Null } else { json!(args.probe_levels) },
        "checkpoint": checkpoint.display().to_string(),
    });
    let input = json!(family_file);
    let caveat = caveats(&family.template);
    if !res.complete() {
        return Ok(Report {
            code: exit::UNRESOLVED,
            input,
            params,
            result: json!({ "complete": false, "rows_done": res.rows_done, "rows_total": res.rows_total }),
            caveats: caveat,
            files: Vec::new(),
        });
    }
    let (nx, ny) = (family.x.n, family.y.n);
    let count = |o: Outcome| res.cells.iter().filter(|c| c.outcome() == o).count();
    let (connected, disconnected, unresolved) =
        (count(Outcome::Connected), count(Outcome::Disconnected), count(Outcome::Unresolved));
    let probe = if args.no_probe {
        Value::Null
    } else {
        let grid: Vec<_> = res.cells.iter().map(|c| c.to_param_verdict()).collect();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| CliError::Pool(e.to_string()))?;
        let rep = pool.install(|| boundary_probe(&family, &policy, &grid, args.probe_levels))?;
        json!({
            "interface_cells": rep.interface_cells,
            "levels": rep.levels,
            "evaluations": rep.evaluations,
            "no_interface": rep.no_interface(),
            "violations": rep.violations.iter().map(|v| json!({
                "i": v.i, "j": v.j, "witness": [v.witness.0, v.witness.1],
            })).collect::<Vec<_>>(),
        })
    };
    let summary = json!({
        "complete": true,
        "cells": nx * ny,
        "connected": connected,
        "disconnected": disconnected,
        "unresolved": unresolved,
        "rows_resumed": res.rows_resumed,
        "probe": probe,
    });
    Ok(Report {
        code: definite(unresolved == 0),
        input,
        params,
        result: summary.clone(),
        caveats: caveat,
        files: vec![
            ("scan.ppm".into(), verdict_ppm(nx, ny, &res.cells)),
            ("scan.csv".into(), evidence_csv(&res.cells).into_bytes()),
            ("scan.json".into(), json::to_pretty(&summary).into_bytes()),
        ],
    })
}

fn cmd_certify(common: &Common, samples: usize) -> CliResult<Report> {
    let l = load(common)?;
    let cert = certify_henonlike(&l.map, &l.geom, samples);
    let out = json::certification(&cert);
    Ok(Report {
        code: definite(cert.verdict != CertVerdict::Inconclusive),
        input: json!(l.file),
        params: json!({ "samples": samples, "margin": common.margin, "radius": l.geom.radius }),
        result: json!({ "verdict": out["verdict"] }),
        caveats: caveats(&l.map),
        files: vec![("certify.json".into(), json::to_pretty(&out).into_bytes())],
    })
}

fn cmd_green(common: &Common, res: usize, window: Option<&str>, w0: C) -> CliResult<Report> {
    let l = load(common)?;
    let r = l.geom.radius;
    let win = match window {
        Some(s) => parse_window(s)?,
        None => Rect { lo: c(-r, -r), hi: c(r, r) },
    };
    let ev = PotentialEvaluator::new(l.map.clone(), l.geom);
    let img = render_green(&ev, win, w0, res).map_err(|e| match e {
        Error::InvalidInput(m) => CliError::Usage(m.into()),
        e => e.into(),
    })?;
    Ok(Report {
        code: exit::DEFINITE,
        input: json!(l.file),
        params: json!({
            "res": res,
            "window": [json::cx(win.lo), json::cx(win.hi)],
            "w0": json::cx(w0),
            "margin": common.margin,
        }),
        result: json!({ "g_max": img.g_max, "unresolved_pixels": img.unresolved }),
        caveats: caveats(&l.map),
        files: vec![("green.pgm".into(), img.bytes)],
    })
}

fn cmd_potential(common: &Common, points: &Path, side: SideArg) -> CliResult<Report> {
    let l = load(common)?;
    let f = std::fs::File::open(points).map_err(|e| CliError::io(points, e))?;
    let pts = read_points_csv(f, points)?;
    let ev = PotentialEvaluator::new(l.map.clone(), l.geom);
    let table = potential_csv(&ev, &pts, side.into());
    let unresolved = table.lines().skip(1).filter(|r| r.ends_with(",unresolved")).count();
    Ok(Report {
        code: definite(unresolved == 0),
        input: json!(l.file),
        params: json!({ "points": points.display().to_string(), "side": json::side_name(side.into()), "margin": common.margin }),
        result: json!({ "points": pts.len(), "unresolved": unresolved }),
        caveats: caveats(&l.map),
        files: vec![("potential.csv".into(), table.into_bytes())],
    })
}

fn name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Slice { .. } => "slice",
        Command::Connect { .. } => "connect",
        Command::Tangency { .. } => "tangency",
        Command::Saddles { .. } => "saddles",
        Command::Leaf { .. } => "leaf",
        Command::Rays { .. } => "rays",
        Command::Measure { .. } => "measure",
        Command::Scan(_) => "scan",
        Command::Certify { .. } => "certify",
        Command::Green { .. } => "green",
        Command::Potential { .. } => "potential",
    }
}

fn out_and_seed(cmd: &Command) -> (&Path, u64) {
    match cmd {
        Command::Slice { common, .. }
        | Command::Connect { common, .. }
        | Command::Tangency { common, .. }
        | Command::Saddles { common, .. }
        | Command::Leaf { common, .. }
        | Command::Rays { common, .. }
        | Command::Measure { common, .. }
        | Command::Certify { common, .. }
        | Command::Green { common, .. }
        | Command::Potential { common, .. } => (&common.out, common.seed),
        Command::Scan(a) => (&a.out, a.seed),
    }
}

fn dispatch(cmd: &Command) -> CliResult<Report> {
    match cmd {
        Command::Slice { common, line, res, budget, side } => cmd_slice(common, line, *res, *budget, *side),
        Command::Connect { common, line, res, budget } => cmd_connect(common, line, *res, *budget),
        Command::Tangency { common, line, n, confine, rh_res } => cmd_tangency(common, line, *n, *confine, *rh_res),
        Command::Saddles { common, period } => cmd_saddles(common, *period),
        Command::Leaf { common, saddle, res, levels, budget, max_budget, block } => cmd_leaf(
            common,
            saddle,
            UnstableConfig {
                levels: *levels,
                resolution: *res,
                budget: *budget,
                max_budget: *max_budget,
                block: *block,
            },
        ),
        Command::Rays { common, saddle, rays } => cmd_rays(common, saddle, rays),
        Command::Measure { common, saddle, rays, nmax, boxes } => cmd_measure(common, saddle, rays, *nmax, *boxes),
        Command::Scan(args) => cmd_scan(args),
        Command::Certify { common, samples } => cmd_certify(common, *samples),
        Command::Green { common, res, window, w0 } => cmd_green(common, *res, window.as_deref(), *w0),
        Command::Potential { common, points, side } => cmd_potential(common, points, *side),
    }
}

/// Runs one parsed command and returns the exit code.
pub fn execute(cmd: &Command) -> CliResult<i32> {
    let (out, seed) = out_and_seed(cmd);
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let report = dispatch(cmd)?;
    for (file, bytes) in &report.files {
        write_file(&out.join(file), bytes)?;
    }
    let cfg = RunConfig {
        subcommand: name(cmd).into(),
        input: report.input,
        params: report.params,
        out: out.display().to_string(),
        seed,
    };
    let mut result = report.result;
    result["exit_code"] = json!(report.code);
    write_metadata(out, &cfg, &report.caveats, result)?;
    Ok(report.code)
}

/// Parses `argv` (including the program name) and runs it. Messages go to
/// standard error; the return value is the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => exit::DEFINITE,
                _ => exit::USAGE,
            };
        }
    };
    match execute(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("henonlab: {e}");
            e.exit_code()
        }
    }
}
