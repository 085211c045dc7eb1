//! Scenario files and bundled example systems.
//!
//! A scenario is a JSON document:
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "kind": "finite",
//!   "name": "coin",
//!   "finite": {
//!     "n_states": 2, "n_inputs": 1, "n_dist": 2, "horizon": 1,
//!     "transition": [0, 1, 0, 1],
//!     "stage_cost": [0, 0],
//!     "terminal_cost": [0, 1],
//!     "empirical": { "layout": "shared", "rows": [[0.5, 0.5]] }
//!   },
//!   "maps": { "state": { "offset": 0, "slope": 1 } },
//!   "penalty_grid": { "gamma_h": [0, 1], "gamma_e": [0, 1] },
//!   "rollout": { "n_rollouts": 5000, "seed": 0, "initial_state": 0 }
//! }
//! ```
//!
//! Finite payloads either list their tables (inline arrays or `{"csv": "file"}`
//! side files, resolved relative to the scenario) or name a generator with
//! `"builtin"` and `"params"`. LQ payloads give `a, b, d, q, r, q_h` as
//! row-major nested arrays and a `horizon` (integer or `"infinite"`).
//!
//! Side-file layouts (header row first, one record per line):
//! - `transition`: `x,u,w_0..w_{n-1}` successor indices;
//! - `stage_cost`: `x,u,cost`; `terminal_cost`: `x,cost`;
//! - `empirical`: the layout's keys (`u` or `x,u`, none when shared) then
//!   `w_0..w_{n-1}` probabilities.

mod design;
mod discretize;
mod irrigation;

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::columnar::write_atomic;
use crate::error::{Error, Result};
use crate::model::{AffineMap, Empirical, EmpiricalLayout, EmpiricalTable, FiniteSystem, FiniteSystemParts, Horizon, LqSystem};

pub use design::{build_fig3_scenario, build_fig4_scenario, fig3_system, fig3_system_with, fig4_system, SAFE_COST, FIG3_NOISE_WEIGHT, FIG4_SMALL_MASS};
pub use discretize::{discretize_scalar_lq, lattice_offset, Grid};
pub use irrigation::{build_irrigation, build_irrigation_with, irrigation_map, irrigation_scenario, moisture_map, weather_map, IrrigationParams, INITIAL_STATE};

pub const SCHEMA_VERSION: u32 = 1;

/// Physical units of the index spaces.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UnitMaps {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<AffineMap>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<AffineMap>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disturbance: Option<AffineMap>,
}

/// Penalty points to sweep: a cartesian grid, explicit pairs, or both.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PenaltyGrid {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gamma_h: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gamma_e: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pairs: Vec<(f64, f64)>,
}

impl PenaltyGrid {
    /// Cartesian points (gamma_h major) followed by the explicit pairs.
    pub fn points(&self) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> =
            self.gamma_h.iter().flat_map(|&h| self.gamma_e.iter().map(move |&e| (h, e))).collect();
        out.extend_from_slice(&self.pairs);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RolloutModelName {
    #[default]
    Empirical,
    Adversarial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutDefaults {
    pub n_rollouts: usize,
    #[serde(default)]
    pub seed: u64,
    pub initial_state: usize,
    #[serde(default)]
    pub model: RolloutModelName,
}

/// Named generator with parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Builtin {
    pub name: String,
    #[serde(default)]
    pub params: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioPayload {
    Finite(FiniteSystem),
    Lq(LqSystem),
}

/// Parsed and validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioFile {
    pub name: Option<String>,
    pub description: Option<String>,
    pub payload: ScenarioPayload,
    pub maps: UnitMaps,
    pub penalty_grid: Option<PenaltyGrid>,
    pub rollout: Option<RolloutDefaults>,
    /// Generator the finite payload came from, kept so saving stays compact.
    pub builtin: Option<Builtin>,
}

impl ScenarioFile {
    fn with_payload(payload: ScenarioPayload) -> Self {
        Self {
            name: None,
            description: None,
            payload,
            maps: UnitMaps::default(),
            penalty_grid: None,
            rollout: None,
            builtin: None,
        }
    }

    pub fn finite(system: FiniteSystem) -> Self {
        Self::with_payload(ScenarioPayload::Finite(system))
    }

    pub fn lq(system: LqSystem) -> Self {
        Self::with_payload(ScenarioPayload::Lq(system))
    }

    pub fn kind(&self) -> ScenarioKind {
        match self.payload {
            ScenarioPayload::Finite(_) => ScenarioKind::Finite,
            ScenarioPayload::Lq(_) => ScenarioKind::Lq,
        }
    }

    pub fn as_finite(&self) -> Option<&FiniteSystem> {
        match &self.payload {
            ScenarioPayload::Finite(s) => Some(s),
            ScenarioPayload::Lq(_) => None,
        }
    }

    pub fn as_lq(&self) -> Option<&LqSystem> {
        match &self.payload {
            ScenarioPayload::Lq(s) => Some(s),
            ScenarioPayload::Finite(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Finite,
    Lq,
}

// ---- on-disk document ----

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum Source<T> {
    Inline(Vec<T>),
    File { csv: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EmpiricalDoc {
    layout: EmpiricalLayout,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rows: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    csv: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum EmpiricalSpec {
    Stationary(EmpiricalDoc),
    PerStage(Vec<EmpiricalDoc>),
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FiniteDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    builtin: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    params: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n_states: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n_inputs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n_dist: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    horizon: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    transition: Option<Source<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    stage_cost: Option<Source<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    terminal_cost: Option<Source<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    empirical: Option<EmpiricalSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LqDoc {
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    d: Vec<Vec<f64>>,
    q: Vec<Vec<f64>>,
    r: Vec<Vec<f64>>,
    q_h: Vec<Vec<f64>>,
    horizon: Horizon,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    schema_version: u32,
    kind: ScenarioKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    finite: Option<FiniteDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lq: Option<LqDoc>,
    #[serde(default)]
    maps: UnitMaps,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    penalty_grid: Option<PenaltyGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rollout: Option<RolloutDefaults>,
}

struct Ctx<'a> {
    path: &'a Path,
    dir: &'a Path,
}

impl Ctx<'_> {
    fn field(&self, field: impl Into<String>, message: impl Into<String>) -> Error {
        Error::ScenarioField { path: self.path.to_path_buf(), field: field.into(), message: message.into() }
    }

    fn parse(&self, message: impl Into<String>) -> Error {
        Error::Parse { path: self.path.to_path_buf(), message: message.into() }
    }
}

/// Reads a side file whose records start with `keys.len()` index columns,
/// checks the keys enumerate `key_ranges` in row-major order and returns the
/// remaining columns flattened.
fn read_keyed_csv(ctx: &Ctx, field: &str, rel: &str, key_ranges: &[usize], n_values: usize) -> Result<Vec<f64>> {
    let path = ctx.dir.join(rel);
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(&path)
        .map_err(|e| ctx.field(field, format!("{}: {e}", path.display())))?;
    let n_keys = key_ranges.len();
    let expected_rows: usize = key_ranges.iter().product();
    let mut out = Vec::with_capacity(expected_rows * n_values);
    let mut row_no = 0usize;
    for rec in reader.records() {
        let rec = rec.map_err(|e| ctx.field(field, format!("{}: {e}", path.display())))?;
        if rec.len() != n_keys + n_values {
            return Err(ctx.field(
                format!("{field}[{row_no}]"),
                format!("{}: expected {} columns, found {}", path.display(), n_keys + n_values, rec.len()),
            ));
        }
        let mut rem = row_no;
        let mut expect = vec![0; n_keys];
        for (i, &n) in key_ranges.iter().enumerate().rev() {
            expect[i] = rem % n;
            rem /= n;
        }
        for (i, cell) in rec.iter().take(n_keys).enumerate() {
            let v: usize =
                cell.parse().map_err(|_| ctx.field(format!("{field}[{row_no}]"), format!("bad key {cell:?}")))?;
            if v != expect[i] {
                return Err(ctx.field(
                    format!("{field}[{row_no}]"),
                    format!("keys out of order: column {i} is {v}, expected {}", expect[i]),
                ));
            }
        }
        for cell in rec.iter().skip(n_keys) {
            let v: f64 =
                cell.parse().map_err(|_| ctx.field(format!("{field}[{row_no}]"), format!("bad number {cell:?}")))?;
            out.push(v);
        }
        row_no += 1;
    }
    if row_no != expected_rows {
        return Err(ctx.field(field, format!("{}: expected {expected_rows} records, found {row_no}", path.display())));
    }
    Ok(out)
}

fn need<T: Copy>(ctx: &Ctx, v: Option<T>, field: &str) -> Result<T> {
    v.ok_or_else(|| ctx.field(format!("finite.{field}"), "missing"))
}

fn layout_keys(layout: EmpiricalLayout, ns: usize, nu: usize) -> Vec<usize> {
    match layout {
        EmpiricalLayout::Shared => vec![],
        EmpiricalLayout::PerInput => vec![nu],
        EmpiricalLayout::PerStateInput => vec![ns, nu],
    }
}

fn empirical_table(ctx: &Ctx, field: &str, doc: &EmpiricalDoc, ns: usize, nu: usize, nw: usize) -> Result<EmpiricalTable> {
    let rows = match (&doc.rows, &doc.csv) {
        (Some(rows), None) => {
            if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != nw) {
                return Err(ctx.field(format!("{field}.rows[{i}]"), format!("expected {nw} entries, found {}", r.len())));
            }
            rows.concat()
        }
        (None, Some(csv)) => read_keyed_csv(ctx, field, csv, &layout_keys(doc.layout, ns, nu), nw)?,
        _ => return Err(ctx.field(field, "give exactly one of `rows` or `csv`")),
    };
    Ok(EmpiricalTable { layout: doc.layout, rows })
}

fn finite_from_doc(ctx: &Ctx, doc: &FiniteDoc) -> Result<(FiniteSystem, Option<Builtin>)> {
    if let Some(name) = &doc.builtin {
        if doc.transition.is_some() || doc.stage_cost.is_some() || doc.terminal_cost.is_some() || doc.empirical.is_some() {
            return Err(ctx.field("finite.builtin", "a builtin scenario cannot also list tables"));
        }
        let params = doc.params.clone().unwrap_or(serde_json::Value::Null);
        let sys = build_builtin(name, &params).map_err(|e| match e {
            Error::InvalidArgument(m) => ctx.field("finite.params", m),
            other => other,
        })?;
        return Ok((sys, Some(Builtin { name: name.clone(), params })));
    }
    let ns = need(ctx, doc.n_states, "n_states")?;
    let nu = need(ctx, doc.n_inputs, "n_inputs")?;
    let nw = need(ctx, doc.n_dist, "n_dist")?;
    let horizon = need(ctx, doc.horizon, "horizon")?;

    let transition = match doc.transition.as_ref().ok_or_else(|| ctx.field("finite.transition", "missing"))? {
        Source::Inline(v) => v.clone(),
        Source::File { csv } => read_keyed_csv(ctx, "finite.transition", csv, &[ns, nu], nw)?
            .into_iter()
            .enumerate()
            .map(|(i, v)| {
                if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
                    Ok(v as u32)
                } else {
                    Err(ctx.field(format!("finite.transition[{i}]"), format!("not a state index: {v}")))
                }
            })
            .collect::<Result<_>>()?,
    };
    let stage_cost = match doc.stage_cost.as_ref().ok_or_else(|| ctx.field("finite.stage_cost", "missing"))? {
        Source::Inline(v) => v.clone(),
        Source::File { csv } => read_keyed_csv(ctx, "finite.stage_cost", csv, &[ns, nu], 1)?,
    };
    let terminal_cost = match doc.terminal_cost.as_ref().ok_or_else(|| ctx.field("finite.terminal_cost", "missing"))? {
        Source::Inline(v) => v.clone(),
        Source::File { csv } => read_keyed_csv(ctx, "finite.terminal_cost", csv, &[ns], 1)?,
    };
    let empirical = match doc.empirical.as_ref().ok_or_else(|| ctx.field("finite.empirical", "missing"))? {
        EmpiricalSpec::Stationary(d) => Empirical::Stationary(empirical_table(ctx, "finite.empirical", d, ns, nu, nw)?),
        EmpiricalSpec::PerStage(ds) => Empirical::PerStage(
            ds.iter()
                .enumerate()
                .map(|(k, d)| empirical_table(ctx, &format!("finite.empirical[{k}]"), d, ns, nu, nw))
                .collect::<Result<_>>()?,
        ),
    };
    let sys = FiniteSystem::new(FiniteSystemParts {
        n_states: ns,
        n_inputs: nu,
        n_dist: nw,
        horizon,
        transition,
        stage_cost,
        terminal_cost,
        empirical,
    })?;
    Ok((sys, None))
}

fn matrix(ctx: &Ctx, field: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != m) {
        return Err(ctx.field(format!("lq.{field}[{i}]"), format!("ragged row: {} entries, expected {m}", r.len())));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Builds a named generator.
pub fn build_builtin(name: &str, params: &serde_json::Value) -> Result<FiniteSystem> {
    let parse_params = |what: &str| -> Result<IrrigationParams> {
        if params.is_null() {
            Ok(IrrigationParams::default())
        } else {
            serde_json::from_value(params.clone()).map_err(|e| Error::InvalidArgument(format!("{what} params: {e}")))
        }
    };
    match name {
        "irrigation" => build_irrigation_with(&parse_params("irrigation")?),
        "fig3" => Ok(fig3_system()),
        "fig4" => Ok(fig4_system()),
        other => Err(Error::InvalidArgument(format!("unknown builtin {other:?} (expected irrigation, fig3 or fig4)"))),
    }
}

/// Parses and validates a scenario document held in memory. Side files are
/// resolved against `base_dir`.
pub fn parse_scenario(text: &str, path: &Path, base_dir: &Path) -> Result<ScenarioFile> {
    let ctx = Ctx { path, dir: base_dir };
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| ctx.parse(e.to_string()))?;
    let version = value
        .get("schema_version")
        .ok_or_else(|| ctx.field("schema_version", "missing"))?
        .as_u64()
        .ok_or_else(|| ctx.field("schema_version", "must be a nonnegative integer"))?;
    if version != u64::from(SCHEMA_VERSION) {
        return Err(Error::SchemaVersionUnsupported { path: path.to_path_buf(), version: version.min(u32::MAX as u64) as u32 });
    }
    let doc: ScenarioDoc = serde_json::from_value(value).map_err(|e| ctx.parse(e.to_string()))?;

    let (payload, builtin) = match (doc.kind, &doc.finite, &doc.lq) {
        (ScenarioKind::Finite, Some(f), None) => {
            let (sys, b) = finite_from_doc(&ctx, f)?;
            (ScenarioPayload::Finite(sys), b)
        }
        (ScenarioKind::Lq, None, Some(l)) => {
            let sys = LqSystem::new(
                matrix(&ctx, "a", &l.a)?,
                matrix(&ctx, "b", &l.b)?,
                matrix(&ctx, "d", &l.d)?,
                matrix(&ctx, "q", &l.q)?,
                matrix(&ctx, "r", &l.r)?,
                matrix(&ctx, "q_h", &l.q_h)?,
                l.horizon,
            )?;
            (ScenarioPayload::Lq(sys), None)
        }
        (ScenarioKind::Finite, _, _) => return Err(ctx.field("finite", "a finite scenario needs a `finite` payload and no `lq`")),
        (ScenarioKind::Lq, _, _) => return Err(ctx.field("lq", "an lq scenario needs an `lq` payload and no `finite`")),
    };
    if let (Some(r), ScenarioPayload::Finite(sys)) = (&doc.rollout, &payload) {
        if r.initial_state >= sys.n_states() {
            return Err(ctx.field("rollout.initial_state", format!("{} is not a state", r.initial_state)));
        }
        if r.n_rollouts == 0 {
            return Err(ctx.field("rollout.n_rollouts", "must be at least 1"));
        }
    }
    if let Some(g) = &doc.penalty_grid {
        let all = g.gamma_h.iter().chain(&g.gamma_e).chain(g.pairs.iter().flat_map(|(a, b)| [a, b]));
        if all.into_iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(ctx.field("penalty_grid", "penalties must be finite and nonnegative"));
        }
    }
    Ok(ScenarioFile {
        name: doc.name,
        description: doc.description,
        payload,
        maps: doc.maps,
        penalty_grid: doc.penalty_grid,
        rollout: doc.rollout,
        builtin,
    })
}

/// Reads, parses and validates a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioFile> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?;
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    parse_scenario(&text, path, dir)
}

/// Tables with more entries than this go to side files when saving.
pub const INLINE_LIMIT: usize = 4096;

fn csv_text(header: &[String], keys: &[usize], values: &[String], width: usize) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for (row, chunk) in values.chunks(width).enumerate() {
        let mut rem = row;
        let mut key = vec![0; keys.len()];
        for (i, &n) in keys.iter().enumerate().rev() {
            key[i] = rem % n;
            rem /= n;
        }
        let cells: Vec<String> = key.iter().map(|k| k.to_string()).chain(chunk.iter().cloned()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

fn key_names(keys: &[&str], cols: &[String]) -> Vec<String> {
    keys.iter().map(|s| s.to_string()).chain(cols.iter().cloned()).collect()
}

/// Writes a scenario. Builtin payloads are saved by name; explicit tables
/// larger than [`INLINE_LIMIT`] entries are written next to `path` as
/// `<stem>.<table>.csv` side files.
pub fn save_scenario(scenario: &ScenarioFile, path: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let path = path.as_ref();
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("scenario").to_string();
    let mut written = Vec::new();
    let mut side = |table: &str, text: String| -> Result<String> {
        let name = format!("{stem}.{table}.csv");
        let p = dir.join(&name);
        write_atomic(&p, text.as_bytes())?;
        written.push(p);
        Ok(name)
    };

    let (finite, lq) = match &scenario.payload {
        ScenarioPayload::Finite(_) if scenario.builtin.is_some() => {
            let b = scenario.builtin.as_ref().expect("checked");
            let params = if b.params.is_null() { None } else { Some(b.params.clone()) };
            (Some(FiniteDoc { builtin: Some(b.name.clone()), params, ..Default::default() }), None)
        }
        ScenarioPayload::Finite(sys) => {
            let p = sys.parts();
            let (ns, nu, nw) = (p.n_states, p.n_inputs, p.n_dist);
            let w_cols: Vec<String> = (0..nw).map(|w| format!("w_{w}")).collect();
            let transition = if p.transition.len() > INLINE_LIMIT {
                let cells: Vec<String> = p.transition.iter().map(|v| v.to_string()).collect();
                Source::File { csv: side("transition", csv_text(&key_names(&["x", "u"], &w_cols), &[ns, nu], &cells, nw))? }
            } else {
                Source::Inline(p.transition.clone())
            };
            let stage_cost = if p.stage_cost.len() > INLINE_LIMIT {
                let cells: Vec<String> = p.stage_cost.iter().map(|v| fmt_full(*v)).collect();
                Source::File { csv: side("stage_cost", csv_text(&key_names(&["x", "u"], &["cost".into()]), &[ns, nu], &cells, 1))? }
            } else {
                Source::Inline(p.stage_cost.clone())
            };
            let terminal_cost = if p.terminal_cost.len() > INLINE_LIMIT {
                let cells: Vec<String> = p.terminal_cost.iter().map(|v| fmt_full(*v)).collect();
                Source::File { csv: side("terminal_cost", csv_text(&key_names(&["x"], &["cost".into()]), &[ns], &cells, 1))? }
            } else {
                Source::Inline(p.terminal_cost.clone())
            };
            let mut table_doc = |t: &EmpiricalTable, tag: &str| -> Result<EmpiricalDoc> {
                if t.rows.len() > INLINE_LIMIT {
                    let keys = layout_keys(t.layout, ns, nu);
                    let names: &[&str] = match t.layout {
                        EmpiricalLayout::Shared => &[],
                        EmpiricalLayout::PerInput => &["u"],
                        EmpiricalLayout::PerStateInput => &["x", "u"],
                    };
                    let cells: Vec<String> = t.rows.iter().map(|v| fmt_full(*v)).collect();
                    let keys = if keys.is_empty() { vec![1] } else { keys };
                    let text = if names.is_empty() {
                        let mut s = w_cols.join(",");
                        s.push('\n');
                        s.push_str(&cells.join(","));
                        s.push('\n');
                        s
                    } else {
                        csv_text(&key_names(names, &w_cols), &keys, &cells, nw)
                    };
                    Ok(EmpiricalDoc { layout: t.layout, rows: None, csv: Some(side(tag, text)?) })
                } else {
                    Ok(EmpiricalDoc { layout: t.layout, rows: Some(t.rows.chunks(nw).map(<[f64]>::to_vec).collect()), csv: None })
                }
            };
            let empirical = match &p.empirical {
                Empirical::Stationary(t) => EmpiricalSpec::Stationary(table_doc(t, "empirical")?),
                Empirical::PerStage(ts) => EmpiricalSpec::PerStage(
                    ts.iter().enumerate().map(|(k, t)| table_doc(t, &format!("empirical_{k}"))).collect::<Result<_>>()?,
                ),
            };
            let doc = FiniteDoc {
                n_states: Some(ns),
                n_inputs: Some(nu),
                n_dist: Some(nw),
                horizon: Some(p.horizon),
                transition: Some(transition),
                stage_cost: Some(stage_cost),
                terminal_cost: Some(terminal_cost),
                empirical: Some(empirical),
                ..Default::default()
            };
            (Some(doc), None)
        }
        ScenarioPayload::Lq(sys) => (
            None,
            Some(LqDoc {
                a: matrix_rows(sys.a()),
                b: matrix_rows(sys.b()),
                d: matrix_rows(sys.d()),
                q: matrix_rows(sys.q()),
                r: matrix_rows(sys.r()),
                q_h: matrix_rows(sys.q_h()),
                horizon: sys.horizon(),
            }),
        ),
    };
    let doc = ScenarioDoc {
        schema_version: SCHEMA_VERSION,
        kind: scenario.kind(),
        name: scenario.name.clone(),
        description: scenario.description.clone(),
        finite,
        lq,
        maps: scenario.maps,
        penalty_grid: scenario.penalty_grid.clone(),
        rollout: scenario.rollout.clone(),
    };
    let mut text = serde_json::to_string_pretty(&doc).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())?;
    written.push(path.to_path_buf());
    Ok(written)
}

/// Shortest representation that parses back to the same float.
fn fmt_full(v: f64) -> String {
    format!("{v:?}")
}
