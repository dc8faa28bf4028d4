//! Parallel, checkpointed parameter scans.
//!
//! Rows are evaluated by a worker pool and appended to a JSON-lines
//! checkpoint by a single writer. The first line records the hash of the
//! family and budget policy; a resumed scan only reuses rows written under
//! the same hash. Cell results are independent of the worker count, so the
//! final grid is the same however the scan was split.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use henonlab_core::family::{
    evaluate_cell, BudgetPolicy, FamilySpec, Outcome, ParamVerdict, TestKind,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{canonical, sha256_hex};
use crate::error::{CliError, CliResult};
use crate::formats::{fmt_f64, outcome_rgb, ppm};
use crate::json::{outcome_name, test_name, FamilyFile, PolicyFile};

/// One scanned cell in the form stored in checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub i: usize,
    pub j: usize,
    pub x: f64,
    pub y: f64,
    pub verdict: String,
    pub decisive: Option<String>,
    /// `(test, outcome)` pairs in escalation order.
    pub tests: Vec<(String, String)>,
    pub swapped: bool,
    pub cost: u64,
    pub error: Option<String>,
}

impl From<&ParamVerdict> for CellRecord {
    fn from(v: &ParamVerdict) -> Self {
        CellRecord {
            i: v.i,
            j: v.j,
            x: v.x,
            y: v.y,
            verdict: outcome_name(v.verdict).into(),
            decisive: v.decisive.map(|t| test_name(t).into()),
            tests: v.tests.iter().map(|&(t, o)| (test_name(t).into(), outcome_name(o).into())).collect(),
            swapped: v.swapped,
            cost: v.cost,
            error: v.error.as_ref().map(|e| e.to_string()),
        }
    }
}

impl CellRecord {
    pub fn outcome(&self) -> Outcome {
        match self.verdict.as_str() {
            "connected" => Outcome::Connected,
            "disconnected" => Outcome::Disconnected,
            _ => Outcome::Unresolved,
        }
    }

    /// Verdict-only reconstruction, enough for the boundary probe.
    pub fn to_param_verdict(&self) -> ParamVerdict {
        ParamVerdict {
            i: self.i,
            j: self.j,
            x: self.x,
            y: self.y,
            verdict: self.outcome(),
            decisive: self.decisive.as_deref().and_then(|d| match d {
                "tangency_escape" => Some(TestKind::TangencyEscape),
                "slice_components" => Some(TestKind::SliceComponents),
                "unstable_connectivity" => Some(TestKind::UnstableConnectivity),
                _ => None,
            }),
            tests: Vec::new(),
            swapped: self.swapped,
            cost: self.cost,
            error: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    checkpoint: String,
    config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RowLine {
    row: usize,
    cells: Vec<CellRecord>,
}

const CHECKPOINT_TAG: &str = "henonlab-scan-v1";

/// Hash identifying the family and policy of a scan.
pub fn scan_hash(family: &FamilyFile, policy: &PolicyFile) -> String {
    let v = json!({ "family": family, "policy": policy });
    sha256_hex(canonical(&v).as_bytes())
}

/// Worker count: `requested` (or the hardware parallelism) capped by the
/// `HENONLAB_THREADS` environment variable.
pub fn worker_count(requested: Option<usize>) -> usize {
    let hw = std::thread::available_parallelism().map_or(1, |n| n.get());
    let cap = std::env::var("HENONLAB_THREADS")
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&n| n > 0);
    let n = requested.unwrap_or(hw).max(1);
    cap.map_or(n, |c| n.min(c))
}

pub struct ScanJob {
    pub family_file: FamilyFile,
    pub policy_file: PolicyFile,
    pub threads: usize,
    pub checkpoint: Option<PathBuf>,
    /// Stop after this many newly computed rows.
    pub row_limit: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanResult {
    /// Row-major cells of the rows finished so far.
    pub cells: Vec<CellRecord>,
    pub rows_done: usize,
    pub rows_total: usize,
    pub rows_resumed: usize,
}

impl ScanResult {
    pub fn complete(&self) -> bool {
        self.rows_done == self.rows_total
    }
}

fn read_checkpoint(path: &Path, hash: &str, nx: usize) -> CliResult<BTreeMap<usize, Vec<CellRecord>>> {
    let mut rows = BTreeMap::new();
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(rows),
        Err(e) => return Err(CliError::io(path, e)),
    };
    let mut lines = BufReader::new(file).lines();
    let header = match lines.next() {
        None => return Ok(rows),
        Some(l) => l.map_err(|e| CliError::io(path, e))?,
    };
    let header: Header = serde_json::from_str(&header).map_err(|_| CliError::StaleCheckpoint { path: path.into() })?;
    if header.checkpoint != CHECKPOINT_TAG || header.config_hash != hash {
        return Err(CliError::StaleCheckpoint { path: path.into() });
    }
    for line in lines {
        let line = line.map_err(|e| CliError::io(path, e))?;
        // A torn final line from an interrupted write is dropped.
        let Ok(row) = serde_json::from_str::<RowLine>(&line) else {
            break;
        };
        if row.cells.len() == nx {
            rows.insert(row.row, row.cells);
        }
    }
    Ok(rows)
}

fn rewrite_checkpoint(path: &Path, hash: &str, rows: &BTreeMap<usize, Vec<CellRecord>>) -> CliResult<File> {
    let mut f = File::create(path).map_err(|e| CliError::io(path, e))?;
    let header = Header { checkpoint: CHECKPOINT_TAG.into(), config_hash: hash.into() };
    let mut text = serde_json::to_string(&header).expect("header serializes");
    text.push('\n');
    for (&row, cells) in rows {
        text.push_str(&serde_json::to_string(&RowLine { row, cells: cells.clone() }).expect("rows serialize"));
        text.push('\n');
    }
    f.write_all(text.as_bytes()).map_err(|e| CliError::io(path, e))?;
    f.flush().map_err(|e| CliError::io(path, e))?;
    Ok(f)
}

fn evaluate_row(family: &FamilySpec, policy: &BudgetPolicy, j: usize) -> Vec<CellRecord> {
    (0..family.x.n)
        .into_par_iter()
        .map(|i| CellRecord::from(&evaluate_cell(family, policy, i, j)))
        .collect()
}

impl ScanJob {
    pub fn run(&self) -> CliResult<ScanResult> {
        let family = self.family_file.to_family()?;
        let policy = BudgetPolicy::from(&self.policy_file);
        let (nx, ny) = (family.x.n, family.y.n);
        let hash = scan_hash(&self.family_file, &self.policy_file);

        let mut rows = match &self.checkpoint {
            Some(p) => read_checkpoint(p, &hash, nx)?,
            None => BTreeMap::new(),
        };
        rows.retain(|&j, _| j < ny);
        let rows_resumed = rows.len();
        let mut writer = match &self.checkpoint {
            Some(p) => Some((p.clone(), rewrite_checkpoint(p, &hash, &rows)?)),
            None => None,
        };

        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads.max(1))
            .build()
            .map_err(|e| CliError::Pool(e.to_string()))?;
        let pending: Vec<usize> = (0..ny).filter(|j| !rows.contains_key(j)).collect();
        let limit = self.row_limit.unwrap_or(usize::MAX).min(pending.len());
        let batch = self.threads.max(1);
        for chunk in pending[..limit].chunks(batch) {
            let done: Vec<(usize, Vec<CellRecord>)> = pool.install(|| {
                chunk.par_iter().map(|&j| (j, evaluate_row(&family, &policy, j))).collect()
            });
            for (j, cells) in done {
                if let Some((path, f)) = writer.as_mut() {
                    let mut line = serde_json::to_string(&RowLine { row: j, cells: cells.clone() })
                        .expect("rows serialize");
                    line.push('\n');
                    f.write_all(line.as_bytes()).map_err(|e| CliError::io(&*path, e))?;
                    f.flush().map_err(|e| CliError::io(&*path, e))?;
                }
                rows.insert(j, cells);
            }
        }
        Ok(ScanResult {
            rows_done: rows.len(),
            rows_total: ny,
            rows_resumed,
            cells: rows.into_values().flatten().collect(),
        })
    }
}

/// Verdict grid as PPM; the top image row is the largest `y`.
pub fn verdict_ppm(nx: usize, ny: usize, cells: &[CellRecord]) -> Vec<u8> {
    assert_eq!(cells.len(), nx * ny, "scan is incomplete");
    let px: Vec<[u8; 3]> = (0..ny)
        .rev()
        .flat_map(|j| (0..nx).map(move |i| outcome_rgb(cells[j * nx + i].outcome())))
        .collect();
    ppm(nx, ny, &px)
}

/// Full per-cell evidence, one row per cell in row-major order.
pub fn evidence_csv(cells: &[CellRecord]) -> String {
    let mut out = String::from("i,j,x,y,verdict,decisive,tests,swapped,cost,error\n");
    for c in cells {
        let tests: Vec<String> = c.tests.iter().map(|(t, o)| format!("{t}={o}")).collect();
        let error = c.error.as_deref().unwrap_or("").replace('"', "'");
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},\"{}\"\n",
            c.i,
            c.j,
            fmt_f64(c.x),
            fmt_f64(c.y),
            c.verdict,
            c.decisive.as_deref().unwrap_or(""),
            tests.join(";"),
            c.swapped,
            c.cost,
            error
        ));
    }
    out
}
