//! File formats: JSON schemas for model sets, fault suites and the pipeline
//! manifest, and CSV export/import for matrices, decision graphs, curves,
//! labels and compressed records.
//!
//! All float output uses shortest-roundtrip formatting, so write/read cycles
//! preserve values bit-for-bit and repeated runs produce byte-identical
//! files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datagen::GenSpec;
use crate::distance::DistanceMatrix;
use crate::error::{Error, Result};
use crate::fdc::{DecisionGraph, DEFAULT_NEIGHBOR_FRACTION};
use crate::hierarchy::CompressedRecord;
use crate::load_model::{CompositeLoadModel, MotorParams, ZipParams};
use crate::pfr::{ExcitationMode, FaultScenario, PfrCurve, SimConfig};

// ---------------------------------------------------------------------------
// Model files
// ---------------------------------------------------------------------------

/// On-disk model set of one bus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub bus_id: String,
    pub models: Vec<CompositeLoadModel>,
}

/// Parses and validates a model file. ZIP triplets are renormalized to sum
/// to 1 on ingestion; the returned count says how many deviated by more than
/// 1e-6 (worth a warning upstream).
pub fn parse_model_file(text: &str) -> Result<(ModelFile, usize)> {
    let mut file: ModelFile =
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("model file: {e}")))?;
    let mut warnings = 0;
    for m in &mut file.models {
        for zip in [&mut m.active_static, &mut m.reactive_static] {
            let sum = zip.z_coeff + zip.i_coeff + zip.p_coeff;
            let (normalized, warned) =
                ZipParams::normalized(zip.z_coeff, zip.i_coeff, zip.p_coeff)?;
            if warned {
                warnings += 1;
            }
            // leave already-anchored triplets bit-identical
            if (sum - 1.0).abs() > 1e-12 {
                *zip = normalized;
            }
        }
        m.validate()?;
    }
    Ok((file, warnings))
}

pub fn read_model_file(path: &Path) -> Result<(ModelFile, usize)> {
    parse_model_file(&read_text(path)?)
}

pub fn write_model_file(path: &Path, file: &ModelFile) -> Result<()> {
    write_text(path, &to_pretty_json(file)?)
}

// ---------------------------------------------------------------------------
// Fault-suite files
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteFile {
    pub scenarios: Vec<FaultScenario>,
}

pub fn parse_suite_file(text: &str) -> Result<SuiteFile> {
    let file: SuiteFile =
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("suite file: {e}")))?;
    if file.scenarios.is_empty() {
        return Err(Error::Parse("suite file has no scenarios".into()));
    }
    let mut labels: Vec<&str> = file.scenarios.iter().map(|s| s.label.as_str()).collect();
    labels.sort_unstable();
    labels.dedup();
    if labels.len() != file.scenarios.len() {
        return Err(Error::Parse("scenario labels must be unique".into()));
    }
    for sc in &file.scenarios {
        sc.validate()?;
    }
    Ok(file)
}

pub fn read_suite_file(path: &Path) -> Result<SuiteFile> {
    parse_suite_file(&read_text(path)?)
}

pub fn write_suite_file(path: &Path, suite: &[FaultScenario]) -> Result<()> {
    let file = SuiteFile {
        scenarios: suite.to_vec(),
    };
    write_text(path, &to_pretty_json(&file)?)
}

// ---------------------------------------------------------------------------
// Pipeline manifest
// ---------------------------------------------------------------------------

/// Dataset-generation section of the manifest (the seed lives at top level).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenSection {
    pub n_buses: usize,
    pub models_per_bus: usize,
    pub basics_per_bus: usize,
    pub noise_rel_std: f64,
}

impl Default for GenSection {
    fn default() -> Self {
        let d = GenSpec::default();
        GenSection {
            n_buses: d.n_buses,
            models_per_bus: d.models_per_bus,
            basics_per_bus: d.basics_per_bus,
            noise_rel_std: d.noise_rel_std,
        }
    }
}

/// Validation section: number of cases, which suite scenario to replay, and
/// the excitation used (thevenin by default so replacements feed back into
/// the bus voltage).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidationSection {
    pub n_cases: usize,
    pub fault_label: String,
    pub excitation_mode: ExcitationMode,
}

impl Default for ValidationSection {
    fn default() -> Self {
        ValidationSection {
            n_cases: 100,
            fault_label: "fault2".into(),
            excitation_mode: ExcitationMode::Thevenin,
        }
    }
}

/// Storage-accounting inputs. The stored motor-parameter count defaults to
/// 4 (the mechanical torque can be re-derived from the steady state at
/// nominal voltage), with 6 static parameters, 4-byte floats and 1-byte
/// indexes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct StorageSection {
    pub motor_param_count: u64,
    pub static_param_count: u64,
    pub float_bytes: u64,
    pub index_bytes: u64,
}

impl Default for StorageSection {
    fn default() -> Self {
        StorageSection {
            motor_param_count: 4,
            static_param_count: 6,
            float_bytes: 4,
            index_bytes: 1,
        }
    }
}

/// The single configuration file driving every pipeline stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Manifest {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub gen: GenSection,
    /// Optional custom fault-suite file; the standard suite is written to
    /// the output directory when absent.
    pub suite_file: Option<PathBuf>,
    pub sim: SimConfig,
    pub nc_temporal: usize,
    pub nc_spatial: Vec<usize>,
    pub neighbor_fraction: f64,
    pub validation: ValidationSection,
    pub storage: StorageSection,
}

impl Default for Manifest {
    fn default() -> Self {
        Manifest {
            seed: 42,
            out_dir: PathBuf::from("out"),
            gen: GenSection::default(),
            suite_file: None,
            sim: SimConfig::default(),
            nc_temporal: 10,
            nc_spatial: vec![3, 5, 7],
            neighbor_fraction: DEFAULT_NEIGHBOR_FRACTION,
            validation: ValidationSection::default(),
            storage: StorageSection::default(),
        }
    }
}

impl Manifest {
    pub fn validate(&self) -> Result<()> {
        self.gen_spec().validate()?;
        if !self.sim.dt.is_finite()
            || self.sim.dt <= 0.0
            || !self.sim.horizon.is_finite()
            || self.sim.horizon <= 0.0
            || !self.sim.source_reactance.is_finite()
            || self.sim.source_reactance <= 0.0
        {
            return Err(Error::InvalidParam(
                "sim.dt, sim.horizon and sim.source_reactance must be finite and positive".into(),
            ));
        }
        if self.nc_temporal == 0 || self.nc_spatial.contains(&0) {
            return Err(Error::InvalidParam("nc values must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.neighbor_fraction) || self.neighbor_fraction == 0.0 {
            return Err(Error::InvalidParam(
                "neighbor_fraction must lie in (0,1)".into(),
            ));
        }
        if self.validation.n_cases == 0 {
            return Err(Error::InvalidParam("n_cases must be >= 1".into()));
        }
        Ok(())
    }

    pub fn gen_spec(&self) -> GenSpec {
        GenSpec {
            n_buses: self.gen.n_buses,
            models_per_bus: self.gen.models_per_bus,
            basics_per_bus: self.gen.basics_per_bus,
            noise_rel_std: self.gen.noise_rel_std,
            seed: self.seed,
        }
    }

    /// Simulation settings for the validation stage (clustering settings
    /// with the validation excitation mode).
    pub fn validation_sim(&self) -> SimConfig {
        SimConfig {
            excitation_mode: self.validation.excitation_mode,
            ..self.sim
        }
    }
}

pub fn parse_manifest(text: &str) -> Result<Manifest> {
    let manifest: Manifest =
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("manifest: {e}")))?;
    manifest.validate()?;
    Ok(manifest)
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    parse_manifest(&read_text(path)?)
}

// ---------------------------------------------------------------------------
// CSV: distance matrices
// ---------------------------------------------------------------------------

/// Row-major CSV with a header of model ids and an id column.
pub fn matrix_to_csv(ids: &[String], m: &DistanceMatrix) -> String {
    assert_eq!(ids.len(), m.n(), "one id per matrix row");
    let mut out = String::from("id");
    for id in ids {
        out.push(',');
        out.push_str(id);
    }
    out.push('\n');
    for (i, id) in ids.iter().enumerate() {
        out.push_str(id);
        for j in 0..m.n() {
            out.push(',');
            out.push_str(&format_float(m.get(i, j)));
        }
        out.push('\n');
    }
    out
}

pub fn parse_matrix_csv(text: &str) -> Result<(Vec<String>, DistanceMatrix)> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("matrix csv: empty input".into()))?;
    let ids: Vec<String> = header.split(',').skip(1).map(str::to_string).collect();
    let n = ids.len();
    if n == 0 {
        return Err(Error::Parse("matrix csv: header has no ids".into()));
    }
    // sized by actual content, not by the header's promise
    let mut values = Vec::new();
    let mut rows = 0usize;
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let row_id = fields
            .next()
            .ok_or_else(|| Error::Parse("matrix csv: blank row".into()))?;
        if rows >= n {
            return Err(Error::Parse("matrix csv: more rows than header ids".into()));
        }
        if row_id != ids[rows] {
            return Err(Error::Parse(format!(
                "matrix csv: row id '{row_id}' does not match header '{}'",
                ids[rows]
            )));
        }
        let mut count = 0usize;
        for f in fields {
            let v: f64 = f
                .parse()
                .map_err(|_| Error::Parse(format!("matrix csv: bad value '{f}'")))?;
            values.push(v);
            count += 1;
        }
        if count != n {
            return Err(Error::Parse(format!(
                "matrix csv: row {rows} has {count} values, expected {n}"
            )));
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::Parse(format!("matrix csv: {rows} rows for {n} ids")));
    }
    let m = DistanceMatrix::from_values(n, values)?;
    Ok((ids, m))
}

// ---------------------------------------------------------------------------
// CSV: decision graphs, curves, labels, membership, compressed records
// ---------------------------------------------------------------------------

pub fn decision_graph_to_csv(g: &DecisionGraph) -> String {
    let mut out = String::from("index,rho,delta,rho_delta,nhd\n");
    for i in 0..g.len() {
        let nhd = g.nhd[i].map(|j| j.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{i},{},{},{},{nhd}\n",
            format_float(g.rho[i]),
            format_float(g.delta[i]),
            format_float(g.rho[i] * g.delta[i]),
        ));
    }
    out
}

pub fn curve_to_csv(curve: &PfrCurve) -> String {
    let mut out = String::from("time,p,q\n");
    for k in 0..curve.times.len() {
        out.push_str(&format!(
            "{},{},{}\n",
            format_float(curve.times[k]),
            format_float(curve.p_values[k]),
            format_float(curve.q_values[k]),
        ));
    }
    out
}

pub fn labels_to_csv(rows: &[(String, usize, usize)]) -> String {
    let mut out = String::from("bus,model_index,basic_index\n");
    for (bus, model, basic) in rows {
        out.push_str(&format!("{bus},{model},{basic}\n"));
    }
    out
}

pub fn membership_to_csv(membership: &[usize]) -> String {
    let mut out = String::from("model_index,rlm_index\n");
    for (i, k) in membership.iter().enumerate() {
        out.push_str(&format!("{i},{k}\n"));
    }
    out
}

pub fn parse_membership_csv(text: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 || line.is_empty() {
            continue;
        }
        let (idx, k) = line
            .split_once(',')
            .ok_or_else(|| Error::Parse(format!("membership csv line {lineno}")))?;
        let idx: usize = idx
            .parse()
            .map_err(|_| Error::Parse(format!("membership csv line {lineno}")))?;
        if idx != out.len() {
            return Err(Error::Parse(format!(
                "membership csv: expected index {} got {idx}",
                out.len()
            )));
        }
        out.push(
            k.parse()
                .map_err(|_| Error::Parse(format!("membership csv line {lineno}")))?,
        );
    }
    Ok(out)
}

pub fn compressed_to_csv(records: &[CompressedRecord]) -> String {
    let mut out = String::from("bus,k,rp,ia,ir,id\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.bus_id,
            r.k,
            format_float(r.rp),
            r.ia,
            r.ir,
            r.id
        ));
    }
    out
}

pub fn parse_compressed_csv(text: &str) -> Result<Vec<CompressedRecord>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 || line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(Error::Parse(format!(
                "compressed csv line {lineno}: expected 6 fields"
            )));
        }
        let bad = |what: &str| Error::Parse(format!("compressed csv line {lineno}: bad {what}"));
        out.push(CompressedRecord {
            bus_id: fields[0].to_string(),
            k: fields[1].parse().map_err(|_| bad("k"))?,
            rp: fields[2].parse().map_err(|_| bad("rp"))?,
            ia: fields[3].parse().map_err(|_| bad("ia"))?,
            ir: fields[4].parse().map_err(|_| bad("ir"))?,
            id: fields[5].parse().map_err(|_| bad("id"))?,
        });
    }
    Ok(out)
}

// Representative component sets (spatial outputs).
pub fn write_zip_set(path: &Path, items: &[ZipParams]) -> Result<()> {
    write_text(path, &to_pretty_json(&items.to_vec())?)
}

pub fn read_zip_set(path: &Path) -> Result<Vec<ZipParams>> {
    serde_json::from_str(&read_text(path)?).map_err(|e| Error::Parse(format!("zip set: {e}")))
}

pub fn write_motor_set(path: &Path, items: &[MotorParams]) -> Result<()> {
    write_text(path, &to_pretty_json(&items.to_vec())?)
}

pub fn read_motor_set(path: &Path) -> Result<Vec<MotorParams>> {
    serde_json::from_str(&read_text(path)?).map_err(|e| Error::Parse(format!("motor set: {e}")))
}

// ---------------------------------------------------------------------------
// Helpers
// ---------------------------------------------------------------------------

/// Shortest-roundtrip float formatting shared by all CSV writers.
pub fn format_float(v: f64) -> String {
    let mut buf = ryu_format(v);
    // trim the ".0" that shortest formatting puts on integers, matching the
    // plain Display output
    if buf.ends_with(".0") {
        buf.truncate(buf.len() - 2);
    }
    buf
}

fn ryu_format(v: f64) -> String {
    format!("{v}")
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn to_pretty_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map(|mut s| {
            s.push('\n');
            s
        })
        .map_err(|e| Error::Parse(format!("serialization: {e}")))
}
