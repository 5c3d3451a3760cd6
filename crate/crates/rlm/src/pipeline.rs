//! Pipeline stages bound to the filesystem: each stage reads the manifest
//! plus the previous stage's outputs and writes its own files under the
//! manifest's output directory, so the whole run needs no manual file moves.
//!
//! Layout under `out_dir`:
//!   suite.json
//!   models/<bus_id>.json, models/labels.csv
//!   pfr/<bus_id>/<model>_<scenario>.csv
//!   temporal/<bus_id>.rlms.json | .membership.csv | .graph.csv
//!   spatial/nc_<nc>/{ra,rr,rd}.json, compressed.csv, graph_<component>.csv
//!   validation/rows.csv, summary.csv, summary.txt
//!   report/storage.csv, storage.txt

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::datagen::{self, GeneratedBus};
use crate::error::{Error, Result};
use crate::hierarchy::{
    spatial_cluster, storage_report_totals, temporal_cluster, BusModelSet, SpatialResult,
    StorageReport, TemporalResult,
};
use crate::io::{self, Manifest, ModelFile};
use crate::pfr::{simulate_bundle, standard_fault_suite, FaultScenario};
use crate::validation::{run_validation, FittingReport};

fn models_dir(m: &Manifest) -> PathBuf {
    m.out_dir.join("models")
}

fn temporal_dir(m: &Manifest) -> PathBuf {
    m.out_dir.join("temporal")
}

fn spatial_dir(m: &Manifest, nc: usize) -> PathBuf {
    m.out_dir.join("spatial").join(format!("nc_{nc}"))
}

/// Resolves the fault suite: an explicit suite file wins, then a previously
/// written `out_dir/suite.json`, then the standard suite (which `gen`
/// persists for later stages).
pub fn load_suite(m: &Manifest) -> Result<Vec<FaultScenario>> {
    if let Some(path) = &m.suite_file {
        return Ok(io::read_suite_file(path)?.scenarios);
    }
    let default_path = m.out_dir.join("suite.json");
    if default_path.exists() {
        return Ok(io::read_suite_file(&default_path)?.scenarios);
    }
    Ok(standard_fault_suite())
}

/// Stage summary counters returned to the CLI for printing.
#[derive(Clone, Debug, Default)]
pub struct StageSummary {
    pub files_written: usize,
    pub items: usize,
    pub excluded: usize,
    pub clamp_events: usize,
}

/// gen: synthesize the dataset, write one model file per bus plus the
/// ground-truth labels CSV, and persist the suite used.
pub fn run_gen(m: &Manifest) -> Result<StageSummary> {
    m.validate()?;
    let suite = load_suite(m)?;
    if m.suite_file.is_none() {
        io::write_suite_file(&m.out_dir.join("suite.json"), &suite)?;
    }
    let buses: Vec<GeneratedBus> = datagen::generate_all(&m.gen_spec())?;
    let mut labels = Vec::new();
    let mut summary = StageSummary::default();
    for bus in &buses {
        let file = ModelFile {
            bus_id: bus.bus_id.clone(),
            models: bus.models.clone(),
        };
        io::write_model_file(&models_dir(m).join(format!("{}.json", bus.bus_id)), &file)?;
        summary.files_written += 1;
        summary.items += bus.models.len();
        summary.clamp_events += bus.clamp_events;
        for (i, &l) in bus.labels.iter().enumerate() {
            labels.push((bus.bus_id.clone(), i, l));
        }
    }
    io::write_text(
        &models_dir(m).join("labels.csv"),
        &io::labels_to_csv(&labels),
    )?;
    summary.files_written += 1;
    Ok(summary)
}

/// Reads the generated model files back, in bus-id order.
pub fn load_buses(m: &Manifest) -> Result<Vec<BusModelSet>> {
    let dir = models_dir(m);
    if !dir.is_dir() {
        return Err(Error::InvalidParam(format!(
            "no model files under {} (run gen first)",
            dir.display()
        )));
    }
    let entries = fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::InvalidParam(format!(
            "no model files under {} (run gen first)",
            dir.display()
        )));
    }
    paths
        .iter()
        .map(|p| {
            let (file, _) = io::read_model_file(p)?;
            Ok(BusModelSet {
                bus_id: file.bus_id,
                models: file.models,
            })
        })
        .collect()
}

/// pfr: export the response curves of every model of the selected buses,
/// one CSV per (model, scenario).
pub fn run_pfr(m: &Manifest, bus_filter: Option<&str>) -> Result<StageSummary> {
    let suite = load_suite(m)?;
    let buses = load_buses(m)?;
    let mut summary = StageSummary::default();
    for bus in buses
        .iter()
        .filter(|b| bus_filter.is_none_or(|f| f == b.bus_id))
    {
        let curves: Vec<_> = bus
            .models
            .par_iter()
            .map(|model| simulate_bundle(model, &suite, &m.sim))
            .collect::<Result<_>>()
            .map_err(|e| Error::Bus {
                bus_id: bus.bus_id.clone(),
                source: Box::new(e),
            })?;
        for (idx, bundle) in curves.iter().enumerate() {
            for (sc, curve) in suite.iter().zip(&bundle.curves) {
                let path = m
                    .out_dir
                    .join("pfr")
                    .join(&bus.bus_id)
                    .join(format!("{idx:04}_{}.csv", sc.label));
                io::write_text(&path, &io::curve_to_csv(curve))?;
                summary.files_written += 1;
            }
            summary.items += 1;
        }
    }
    Ok(summary)
}

/// cluster-temporal: per-bus clustering; writes the bus RLM files, the
/// membership tables and the decision graphs.
pub fn run_temporal(m: &Manifest) -> Result<StageSummary> {
    let suite = load_suite(m)?;
    let buses = load_buses(m)?;
    let mut summary = StageSummary::default();
    for bus in &buses {
        let (t, graph) = temporal_cluster(bus, m.nc_temporal, &suite, &m.sim, m.neighbor_fraction)?;
        let dir = temporal_dir(m);
        io::write_model_file(
            &dir.join(format!("{}.rlms.json", bus.bus_id)),
            &ModelFile {
                bus_id: bus.bus_id.clone(),
                models: t.rlms.clone(),
            },
        )?;
        io::write_text(
            &dir.join(format!("{}.membership.csv", bus.bus_id)),
            &io::membership_to_csv(&t.membership),
        )?;
        io::write_text(
            &dir.join(format!("{}.graph.csv", bus.bus_id)),
            &io::decision_graph_to_csv(&graph),
        )?;
        summary.files_written += 3;
        summary.items += t.r_count;
    }
    Ok(summary)
}

/// Reads temporal results back, in bus-id order.
pub fn load_temporal(m: &Manifest) -> Result<Vec<TemporalResult>> {
    let dir = temporal_dir(m);
    if !dir.is_dir() {
        return Err(Error::InvalidParam(format!(
            "no temporal results under {} (run cluster-temporal first)",
            dir.display()
        )));
    }
    let entries = fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.to_string_lossy().ends_with(".rlms.json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::InvalidParam(format!(
            "no temporal results under {} (run cluster-temporal first)",
            dir.display()
        )));
    }
    paths
        .iter()
        .map(|p| {
            let (file, _) = io::read_model_file(p)?;
            let membership_path = p.to_string_lossy().replace(".rlms.json", ".membership.csv");
            let membership =
                io::parse_membership_csv(&io::read_text(Path::new(&membership_path))?)?;
            Ok(TemporalResult {
                bus_id: file.bus_id,
                r_count: file.models.len(),
                rlms: file.models,
                membership,
            })
        })
        .collect()
}

/// cluster-spatial: pools all buses' RLMs and writes, per requested nc, the
/// representative component sets, the compressed-record table and the three
/// component decision graphs.
pub fn run_spatial(m: &Manifest) -> Result<StageSummary> {
    let suite = load_suite(m)?;
    let temporal = load_temporal(m)?;
    let mut summary = StageSummary::default();
    for &nc in &m.nc_spatial {
        let (sp, graphs) = spatial_cluster(&temporal, nc, &suite, &m.sim, m.neighbor_fraction)?;
        let dir = spatial_dir(m, nc);
        io::write_zip_set(&dir.join("ra.json"), &sp.ra)?;
        io::write_zip_set(&dir.join("rr.json"), &sp.rr)?;
        io::write_motor_set(&dir.join("rd.json"), &sp.rd)?;
        io::write_text(
            &dir.join("compressed.csv"),
            &io::compressed_to_csv(&sp.compressed),
        )?;
        io::write_text(
            &dir.join("graph_active.csv"),
            &io::decision_graph_to_csv(&graphs.active),
        )?;
        io::write_text(
            &dir.join("graph_reactive.csv"),
            &io::decision_graph_to_csv(&graphs.reactive),
        )?;
        io::write_text(
            &dir.join("graph_dynamic.csv"),
            &io::decision_graph_to_csv(&graphs.dynamic),
        )?;
        summary.files_written += 7;
        summary.items += sp.ra.len() + sp.rr.len() + sp.rd.len();
    }
    Ok(summary)
}

/// Reads spatial results back for every nc present on disk.
pub fn load_spatial(m: &Manifest) -> Result<BTreeMap<usize, SpatialResult>> {
    let mut out = BTreeMap::new();
    for &nc in &m.nc_spatial {
        let dir = spatial_dir(m, nc);
        if !dir.exists() {
            return Err(Error::InvalidParam(format!(
                "missing spatial results under {} (run cluster-spatial first)",
                dir.display()
            )));
        }
        let sp = SpatialResult {
            ra: io::read_zip_set(&dir.join("ra.json"))?,
            rr: io::read_zip_set(&dir.join("rr.json"))?,
            rd: io::read_motor_set(&dir.join("rd.json"))?,
            compressed: io::parse_compressed_csv(&io::read_text(&dir.join("compressed.csv"))?)?,
        };
        out.insert(nc, sp);
    }
    Ok(out)
}

/// validate: scores temporal and spatial replacements against the originals
/// and writes the per-row table plus the aggregate summary.
pub fn run_validate(m: &Manifest) -> Result<(FittingReport, StageSummary)> {
    let suite = load_suite(m)?;
    let buses = load_buses(m)?;
    let temporal = load_temporal(m)?;
    let spatial = load_spatial(m)?;
    let fault = suite
        .iter()
        .find(|sc| sc.label == m.validation.fault_label)
        .ok_or_else(|| {
            Error::InvalidParam(format!(
                "validation fault_label '{}' not in the suite",
                m.validation.fault_label
            ))
        })?;
    let report = run_validation(
        &buses,
        &temporal,
        &spatial,
        m.validation.n_cases,
        fault,
        &m.validation_sim(),
        m.seed,
    )?;

    let dir = m.out_dir.join("validation");
    io::write_text(&dir.join("rows.csv"), &rows_csv(&report))?;
    io::write_text(&dir.join("summary.csv"), &summary_csv(&report))?;
    io::write_text(&dir.join("summary.txt"), &summary_text(&report))?;
    let summary = StageSummary {
        files_written: 3,
        items: report.rows.len(),
        excluded: report.excluded,
        clamp_events: 0,
    };
    Ok((report, summary))
}

fn rows_csv(report: &FittingReport) -> String {
    let mut out = String::from("case,bus,scenario,fp,fq,f\n");
    for r in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.case_index,
            r.bus_id,
            r.scenario,
            io::format_float(r.fp),
            io::format_float(r.fq),
            io::format_float(r.f),
        ));
    }
    out
}

fn summary_csv(report: &FittingReport) -> String {
    let scenarios = report.scenarios();
    let mut out = String::from("metric");
    for s in &scenarios {
        out.push(',');
        out.push_str(s);
    }
    out.push('\n');
    type Metric<'a> = (&'a str, Box<dyn Fn(&str) -> f64 + 'a>);
    let metrics: [Metric; 5] = [
        ("mean_fp", Box::new(|s: &str| report.mean_fp(s))),
        ("mean_fq", Box::new(|s: &str| report.mean_fq(s))),
        ("mean_f", Box::new(|s: &str| report.mean_f(s))),
        (
            "pct_f_above_0.90",
            Box::new(|s: &str| 100.0 * report.frac_above(s, 0.90)),
        ),
        (
            "pct_f_above_0.95",
            Box::new(|s: &str| 100.0 * report.frac_above(s, 0.95)),
        ),
    ];
    for (name, f) in &metrics {
        out.push_str(name);
        for s in &scenarios {
            out.push(',');
            out.push_str(&io::format_float(f(s)));
        }
        out.push('\n');
    }
    out
}

fn summary_text(report: &FittingReport) -> String {
    let scenarios = report.scenarios();
    let mut out = String::from("Fitting degrees by replacement scenario\n");
    for s in &scenarios {
        out.push_str(&format!(
            "  {s}: mean F = {:.4} (FP {:.4}, FQ {:.4}); F>0.9 {:.1}%, F>0.95 {:.1}%\n",
            report.mean_f(s),
            report.mean_fp(s),
            report.mean_fq(s),
            100.0 * report.frac_above(s, 0.90),
            100.0 * report.frac_above(s, 0.95),
        ));
    }
    out.push_str(&format!(
        "rows: {}, excluded by simulation failures: {}\n",
        report.rows.len(),
        report.excluded
    ));
    out
}

/// report: storage accounting from the actual dataset and RLM counts, one
/// block per requested nc.
pub fn run_report(m: &Manifest) -> Result<(Vec<(usize, StorageReport)>, StageSummary)> {
    let buses = load_buses(m)?;
    let temporal = load_temporal(m)?;
    let total_models: u64 = buses.iter().map(|b| b.models.len() as u64).sum();
    let total_rlms: u64 = temporal.iter().map(|t| t.r_count as u64).sum();
    let reports: Vec<(usize, StorageReport)> = m
        .nc_spatial
        .iter()
        .map(|&nc| {
            (
                nc,
                storage_report_totals(
                    total_models,
                    total_rlms,
                    nc as u64,
                    m.storage.motor_param_count,
                    m.storage.static_param_count,
                    m.storage.float_bytes,
                    m.storage.index_bytes,
                ),
            )
        })
        .collect();

    let dir = m.out_dir.join("report");
    let mut csv =
        String::from("nc,scheme,motor_params,static_params,proportions,indexes,total_bytes\n");
    let mut txt = format!(
        "Storage accounting: {total_models} models, {total_rlms} RLMs, \
         {}+{} parameters, {}-byte floats, {}-byte indexes\n",
        m.storage.motor_param_count,
        m.storage.static_param_count,
        m.storage.float_bytes,
        m.storage.index_bytes
    );
    for (nc, r) in &reports {
        for (scheme, line) in [("ori", r.ori), ("tem", r.tem), ("spa", r.spa)] {
            csv.push_str(&format!(
                "{nc},{scheme},{},{},{},{},{}\n",
                line.motor_params,
                line.static_params,
                line.proportions,
                line.indexes,
                line.total_bytes
            ));
        }
        txt.push_str(&format!(
            "nc={nc}: Ori {} B, Tem {} B ({:.2}% saved), Spa {} B ({:.2}% saved vs Tem)\n",
            r.ori.total_bytes,
            r.tem.total_bytes,
            100.0 * r.reduction_ori_to_tem(),
            r.spa.total_bytes,
            100.0 * r.reduction_tem_to_spa(),
        ));
    }
    io::write_text(&dir.join("storage.csv"), &csv)?;
    io::write_text(&dir.join("storage.txt"), &txt)?;
    Ok((
        reports,
        StageSummary {
            files_written: 2,
            items: total_rlms as usize,
            excluded: 0,
            clamp_events: 0,
        },
    ))
}

/// Convenience: the whole pipeline in order from one manifest.
pub fn run_full(m: &Manifest) -> Result<()> {
    run_gen(m)?;
    run_temporal(m)?;
    run_spatial(m)?;
    run_validate(m)?;
    run_report(m)?;
    Ok(())
}
