//! Validation of the compression: randomized cases replay a fault with the
//! original models, the temporal RLMs, and the spatially reconstructed
//! models, scoring each replacement by fitting degree against the original
//! response. Also hosts the PFR-versus-parameter clustering comparison.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::{
    reconstruct_model, spatial_cluster_with_basis, temporal_cluster_with_basis, BusModelSet,
    DistanceBasis, SpatialResult, TemporalResult,
};
use crate::pfr::{simulate_pfr, FaultScenario, PfrCurve, SimConfig};

/// 1 - sum((ref - test)^2) / sum((ref - mean(ref))^2); 1 means identical.
pub fn fitting_degree(y_ref: &[f64], y_test: &[f64]) -> Result<f64> {
    if y_ref.len() != y_test.len() || y_ref.len() < 2 {
        return Err(Error::InvalidParam(
            "fitting_degree needs equal lengths >= 2".into(),
        ));
    }
    let mean = y_ref.iter().sum::<f64>() / y_ref.len() as f64;
    let denom: f64 = y_ref.iter().map(|y| (y - mean) * (y - mean)).sum();
    if denom == 0.0 {
        return Err(Error::ConstantReference);
    }
    let num: f64 = y_ref
        .iter()
        .zip(y_test)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(1.0 - num / denom)
}

/// One randomized validation case: the model drawn for each test bus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationCase {
    pub case_index: usize,
    /// Per bus (in input order), the index of the drawn original model.
    pub model_indices: Vec<usize>,
}

/// One scored (case, bus, replacement-scenario) row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittingRow {
    pub case_index: usize,
    pub bus_id: String,
    pub scenario: String,
    pub fp: f64,
    pub fq: f64,
    pub f: f64,
}

/// All scored rows plus the exclusion count (simulation failures).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FittingReport {
    pub rows: Vec<FittingRow>,
    pub excluded: usize,
}

impl FittingReport {
    /// Scenario names in report order: Tem first, then Spa by ascending nc.
    pub fn scenarios(&self) -> Vec<String> {
        let mut s: Vec<String> = self.rows.iter().map(|r| r.scenario.clone()).collect();
        let rank = |name: &str| -> (u8, usize) {
            if name == "Tem" {
                (0, 0)
            } else if let Some(nc) = name.strip_prefix("Spa").and_then(|t| t.parse().ok()) {
                (1, nc)
            } else {
                (2, 0)
            }
        };
        s.sort_by(|a, b| rank(a).cmp(&rank(b)).then(a.cmp(b)));
        s.dedup();
        s
    }

    fn select<'a>(&'a self, scenario: &'a str) -> impl Iterator<Item = &'a FittingRow> {
        self.rows.iter().filter(move |r| r.scenario == scenario)
    }

    pub fn mean_fp(&self, scenario: &str) -> f64 {
        mean(self.select(scenario).map(|r| r.fp))
    }

    pub fn mean_fq(&self, scenario: &str) -> f64 {
        mean(self.select(scenario).map(|r| r.fq))
    }

    pub fn mean_f(&self, scenario: &str) -> f64 {
        mean(self.select(scenario).map(|r| r.f))
    }

    /// Fraction of rows with F above the threshold.
    pub fn frac_above(&self, scenario: &str, threshold: f64) -> f64 {
        let (mut hits, mut total) = (0usize, 0usize);
        for r in self.select(scenario) {
            total += 1;
            if r.f > threshold {
                hits += 1;
            }
        }
        if total == 0 {
            0.0
        } else {
            hits as f64 / total as f64
        }
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values {
        sum += v;
        n += 1;
    }
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

const STREAM_VALIDATION: u64 = 3;

/// Draws the validation cases (one model index per bus per case) from the
/// validation sub-stream of `seed`.
pub fn draw_cases(buses: &[BusModelSet], n_cases: usize, seed: u64) -> Vec<ValidationCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_VALIDATION << 32);
    (0..n_cases)
        .map(|case_index| ValidationCase {
            case_index,
            model_indices: buses
                .iter()
                .map(|b| rng.random_range(0..b.models.len()))
                .collect(),
        })
        .collect()
}

/// Runs the validation study: for every case and bus, the original model's
/// response is the reference; the temporal RLM and the reconstructed spatial
/// models (one per requested nc) are scored against it. All buses are
/// replaced at the same time within a case; a failed simulation excludes the
/// affected rows and is counted.
pub fn run_validation(
    buses: &[BusModelSet],
    temporal: &[TemporalResult],
    spatial_by_nc: &BTreeMap<usize, SpatialResult>,
    n_cases: usize,
    fault: &FaultScenario,
    cfg: &SimConfig,
    seed: u64,
) -> Result<FittingReport> {
    if buses.len() != temporal.len() {
        return Err(Error::InvalidParam(
            "temporal results must align with buses".into(),
        ));
    }
    let cases = draw_cases(buses, n_cases, seed);

    struct BusOutcome {
        rows: Vec<FittingRow>,
        excluded: usize,
    }

    let score = |name: String,
                 case_index: usize,
                 bus_id: &str,
                 reference: &PfrCurve,
                 replacement: crate::Result<PfrCurve>|
     -> std::result::Result<FittingRow, ()> {
        let curve = replacement.map_err(|_| ())?;
        let fp = fitting_degree(&reference.p_values, &curve.p_values).map_err(|_| ())?;
        let fq = fitting_degree(&reference.q_values, &curve.q_values).map_err(|_| ())?;
        Ok(FittingRow {
            case_index,
            bus_id: bus_id.to_string(),
            scenario: name,
            fp,
            fq,
            f: 0.5 * (fp + fq),
        })
    };

    let outcomes: Vec<BusOutcome> = cases
        .par_iter()
        .flat_map(|case| {
            buses
                .par_iter()
                .enumerate()
                .map(move |(b, bus)| (case, b, bus))
        })
        .map(|(case, b, bus)| {
            let mi = case.model_indices[b];
            let scenario_count = 1 + spatial_by_nc.len();
            let reference = match simulate_pfr(&bus.models[mi], fault, cfg) {
                Ok(c) => c,
                // reference failed: every comparison for this (case, bus) is out
                Err(_) => {
                    return BusOutcome {
                        rows: vec![],
                        excluded: scenario_count,
                    }
                }
            };
            let mut rows = Vec::with_capacity(scenario_count);
            let mut excluded = 0;
            let rlm_idx = temporal[b].membership[mi];
            let rlm = &temporal[b].rlms[rlm_idx];
            match score(
                "Tem".into(),
                case.case_index,
                &bus.bus_id,
                &reference,
                simulate_pfr(rlm, fault, cfg),
            ) {
                Ok(row) => rows.push(row),
                Err(()) => excluded += 1,
            }
            for (nc, sp) in spatial_by_nc {
                let outcome = sp
                    .record_for(&bus.bus_id, rlm_idx)
                    .ok_or_else(|| {
                        Error::IndexOutOfRange(format!(
                            "no compressed record for ({}, {rlm_idx})",
                            bus.bus_id
                        ))
                    })
                    .and_then(|rec| {
                        reconstruct_model(
                            rec,
                            sp,
                            bus.models[mi].nominal_p,
                            bus.models[mi].nominal_q,
                        )
                    })
                    .and_then(|m| simulate_pfr(&m, fault, cfg));
                match score(
                    format!("Spa{nc}"),
                    case.case_index,
                    &bus.bus_id,
                    &reference,
                    outcome,
                ) {
                    Ok(row) => rows.push(row),
                    Err(()) => excluded += 1,
                }
            }
            BusOutcome { rows, excluded }
        })
        .collect();

    let mut report = FittingReport::default();
    for o in outcomes {
        report.rows.extend(o.rows);
        report.excluded += o.excluded;
    }
    Ok(report)
}

/// Paired reports of the same pipeline run under the two distance bases.
#[derive(Clone, Debug)]
pub struct BasisComparison {
    pub pfr: FittingReport,
    pub parameter: FittingReport,
}

/// Reruns the full hierarchy (temporal, spatial per nc, validation) once per
/// distance basis on the same data and case seed.
#[allow(clippy::too_many_arguments)]
pub fn compare_clustering_bases(
    buses: &[BusModelSet],
    nc_temporal: usize,
    nc_spatial: &[usize],
    suite: &[FaultScenario],
    cluster_cfg: &SimConfig,
    neighbor_fraction: f64,
    n_cases: usize,
    fault: &FaultScenario,
    validation_cfg: &SimConfig,
    seed: u64,
) -> Result<BasisComparison> {
    let mut reports = Vec::with_capacity(2);
    for basis in [DistanceBasis::Pfr, DistanceBasis::Parameter] {
        let temporal: Vec<TemporalResult> = buses
            .iter()
            .map(|bus| {
                temporal_cluster_with_basis(
                    bus,
                    nc_temporal,
                    suite,
                    cluster_cfg,
                    neighbor_fraction,
                    basis,
                )
                .map(|(t, _)| t)
            })
            .collect::<Result<_>>()?;
        let mut spatial_by_nc = BTreeMap::new();
        for &nc in nc_spatial {
            let (sp, _) = spatial_cluster_with_basis(
                &temporal,
                nc,
                suite,
                cluster_cfg,
                neighbor_fraction,
                basis,
            )?;
            spatial_by_nc.insert(nc, sp);
        }
        reports.push(run_validation(
            buses,
            &temporal,
            &spatial_by_nc,
            n_cases,
            fault,
            validation_cfg,
            seed,
        )?);
    }
    let parameter = reports.pop().expect("two reports");
    let pfr = reports.pop().expect("two reports");
    Ok(BasisComparison { pfr, parameter })
}

/// Adjusted Rand index between two labelings (1 = identical partitions,
/// ~0 = chance agreement).
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings must align");
    let n = a.len();
    if n < 2 {
        return 1.0;
    }
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![0u64; ka * kb];
    let mut row = vec![0u64; ka];
    let mut col = vec![0u64; kb];
    for (&x, &y) in a.iter().zip(b) {
        table[x * kb + y] += 1;
        row[x] += 1;
        col[y] += 1;
    }
    let c2 = |x: u64| (x * x.saturating_sub(1) / 2) as f64;
    let sum_ij: f64 = table.iter().map(|&v| c2(v)).sum();
    let sum_a: f64 = row.iter().map(|&v| c2(v)).sum();
    let sum_b: f64 = col.iter().map(|&v| c2(v)).sum();
    let total = c2(n as u64);
    let expected = sum_a * sum_b / total;
    let max = 0.5 * (sum_a + sum_b);
    if max == expected {
        return 1.0;
    }
    (sum_ij - expected) / (max - expected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen;
    use crate::pfr::{standard_fault_suite, ExcitationMode};

    #[test]
    fn fitting_degree_perfect() {
        let y = vec![1.0, 2.0, 3.0, 2.5];
        assert_eq!(fitting_degree(&y, &y).unwrap(), 1.0);
    }

    #[test]
    fn fitting_degree_mean_predictor_scores_zero() {
        let y = vec![1.0, 2.0, 3.0];
        let m = vec![2.0, 2.0, 2.0];
        assert_eq!(fitting_degree(&y, &m).unwrap(), 0.0);
    }

    #[test]
    fn fitting_degree_hand_case() {
        let f = fitting_degree(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap();
        assert_eq!(f, 0.5);
    }

    #[test]
    fn fitting_degree_constant_reference_is_an_error() {
        assert!(matches!(
            fitting_degree(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]),
            Err(Error::ConstantReference)
        ));
    }

    #[test]
    fn fitting_degree_detects_shift() {
        let y = vec![1.0, 2.0, 3.0, 4.0];
        let base = fitting_degree(&y, &y).unwrap();
        for c in [0.1, -0.1, 1.0] {
            let shifted: Vec<f64> = y.iter().map(|v| v + c).collect();
            assert!(fitting_degree(&y, &shifted).unwrap() < base);
        }
    }

    #[test]
    fn fitting_degree_invariant_under_joint_scaling() {
        let y = vec![1.0, 2.0, 3.0, 5.0];
        let t = vec![1.1, 1.9, 3.2, 4.6];
        let f1 = fitting_degree(&y, &t).unwrap();
        let ys: Vec<f64> = y.iter().map(|v| v * 7.0).collect();
        let ts: Vec<f64> = t.iter().map(|v| v * 7.0).collect();
        let f2 = fitting_degree(&ys, &ts).unwrap();
        assert!((f1 - f2).abs() < 1e-12);
    }

    #[test]
    fn ari_identical_and_permuted_labels() {
        let a = vec![0, 0, 1, 1, 2, 2];
        assert_eq!(adjusted_rand_index(&a, &a), 1.0);
        let b = vec![2, 2, 0, 0, 1, 1];
        assert_eq!(adjusted_rand_index(&a, &b), 1.0);
    }

    #[test]
    fn ari_near_zero_for_unrelated_labels() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let a: Vec<usize> = (0..2000).map(|_| rng.random_range(0..5)).collect();
        let b: Vec<usize> = (0..2000).map(|_| rng.random_range(0..5)).collect();
        assert!(adjusted_rand_index(&a, &b).abs() < 0.05);
    }

    fn tiny_system(seed: u64) -> (Vec<BusModelSet>, Vec<TemporalResult>) {
        let spec = datagen::GenSpec {
            n_buses: 2,
            models_per_bus: 24,
            basics_per_bus: 3,
            noise_rel_std: 0.03,
            seed,
        };
        let gen = datagen::generate_all(&spec).unwrap();
        let buses: Vec<BusModelSet> = gen
            .into_iter()
            .map(|g| BusModelSet {
                bus_id: g.bus_id,
                models: g.models,
            })
            .collect();
        let suite = standard_fault_suite();
        let cfg = SimConfig::default();
        let temporal: Vec<TemporalResult> = buses
            .iter()
            .map(|b| {
                crate::hierarchy::temporal_cluster(b, 3, &suite, &cfg, 0.1)
                    .unwrap()
                    .0
            })
            .collect();
        (buses, temporal)
    }

    #[test]
    fn self_replacement_scores_one() {
        // Degenerate temporal result: every model is its own RLM.
        let spec = datagen::GenSpec {
            n_buses: 1,
            models_per_bus: 4,
            basics_per_bus: 4,
            noise_rel_std: 0.0,
            seed: 51,
        };
        let g = datagen::generate_all(&spec).unwrap().remove(0);
        let bus = BusModelSet {
            bus_id: g.bus_id.clone(),
            models: g.models.clone(),
        };
        let temporal = TemporalResult {
            bus_id: g.bus_id,
            rlms: g.models.clone(),
            membership: (0..4).collect(),
            r_count: 4,
        };
        let fault = &standard_fault_suite()[1];
        let cfg = SimConfig {
            excitation_mode: ExcitationMode::Thevenin,
            ..SimConfig::default()
        };
        let report =
            run_validation(&[bus], &[temporal], &BTreeMap::new(), 5, fault, &cfg, 1).unwrap();
        assert_eq!(report.excluded, 0);
        assert_eq!(report.rows.len(), 5);
        for r in &report.rows {
            assert_eq!(r.f, 1.0);
            assert_eq!(r.scenario, "Tem");
        }
    }

    #[test]
    fn row_bookkeeping_and_determinism() {
        let (buses, temporal) = tiny_system(52);
        let suite = standard_fault_suite();
        let cfg = SimConfig::default();
        let (sp, _) = crate::hierarchy::spatial_cluster(&temporal, 2, &suite, &cfg, 0.1).unwrap();
        let mut by_nc = BTreeMap::new();
        by_nc.insert(2usize, sp);
        let vcfg = SimConfig {
            excitation_mode: ExcitationMode::Thevenin,
            ..SimConfig::default()
        };
        let a = run_validation(&buses, &temporal, &by_nc, 6, &suite[1], &vcfg, 2).unwrap();
        let b = run_validation(&buses, &temporal, &by_nc, 6, &suite[1], &vcfg, 2).unwrap();
        assert_eq!(a, b);
        // rows = cases x buses x scenarios - exclusions
        assert_eq!(a.rows.len() + a.excluded, 6 * 2 * 2);
        // aggregation identity: mean F = mean of (FP+FQ)/2
        let tem_rows: Vec<&FittingRow> = a.rows.iter().filter(|r| r.scenario == "Tem").collect();
        let manual =
            tem_rows.iter().map(|r| 0.5 * (r.fp + r.fq)).sum::<f64>() / tem_rows.len() as f64;
        assert!((a.mean_f("Tem") - manual).abs() < 1e-15);
    }

    #[test]
    fn identical_bases_give_identical_reports() {
        let (buses, _) = tiny_system(53);
        let suite = standard_fault_suite();
        let cfg = SimConfig::default();
        let vcfg = SimConfig {
            excitation_mode: ExcitationMode::Thevenin,
            ..SimConfig::default()
        };
        // self-comparison: run the PFR pipeline twice with the same seed
        let run = || {
            compare_clustering_bases(&buses, 3, &[2], &suite, &cfg, 0.1, 4, &suite[1], &vcfg, 3)
                .unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.pfr, b.pfr);
        assert_eq!(a.parameter, b.parameter);
        // structural sanity: both pipelines produced scored rows
        assert!(!a.pfr.rows.is_empty());
        assert!(!a.parameter.rows.is_empty());
    }
}
