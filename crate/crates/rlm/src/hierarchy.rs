//! Two-stage pipeline orchestration: temporal clustering per bus picks the
//! representative load models (RLMs) of that bus; spatial clustering at the
//! control center pools all buses' RLM components, clusters the active
//! static, reactive static and dynamic parts separately, and replaces each
//! RLM by a compressed record [rp, ia, ir, id]. Storage accounting compares
//! the three representations.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distance::{build_distance_matrix, build_parameter_matrix, DistanceMatrix};
use crate::error::{Error, Result};
use crate::fdc::{self, DecisionGraph};
use crate::load_model::{CompositeLoadModel, MotorParams, ZipParams};
use crate::pfr::{
    dynamic_only_bundle, simulate_bundle, static_only_bundle, FaultScenario, SimConfig,
    StaticComponent,
};

/// Whether model similarity is measured on response curves or directly on
/// parameter vectors (the comparison baseline).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceBasis {
    Pfr,
    Parameter,
}

/// The identified models of one bus over the observation window.
#[derive(Clone, Debug)]
pub struct BusModelSet {
    pub bus_id: String,
    pub models: Vec<CompositeLoadModel>,
}

impl BusModelSet {
    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(Error::InvalidParam(format!(
                "bus '{}' has no models",
                self.bus_id
            )));
        }
        let (p0, q0) = (self.models[0].nominal_p, self.models[0].nominal_q);
        for m in &self.models {
            if m.nominal_p != p0 || m.nominal_q != q0 {
                return Err(Error::InvalidParam(format!(
                    "bus '{}': models must share nominal powers",
                    self.bus_id
                )));
            }
        }
        Ok(())
    }
}

/// Outcome of temporal clustering at one bus.
#[derive(Clone, Debug)]
pub struct TemporalResult {
    pub bus_id: String,
    /// The bus's representative load models (cluster centers, then outliers).
    pub rlms: Vec<CompositeLoadModel>,
    /// For each original model, the index of its RLM in `rlms`.
    pub membership: Vec<usize>,
    pub r_count: usize,
}

/// One compressed RLM record: the dynamic proportion survives verbatim,
/// everything else becomes 1-based indexes into the representative sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompressedRecord {
    pub bus_id: String,
    /// RLM index within its bus (k).
    pub k: usize,
    pub rp: f64,
    pub ia: usize,
    pub ir: usize,
    pub id: usize,
}

/// Outcome of spatial clustering: representative component sets plus the
/// compressed records of every pooled RLM.
#[derive(Clone, Debug)]
pub struct SpatialResult {
    pub ra: Vec<ZipParams>,
    pub rr: Vec<ZipParams>,
    pub rd: Vec<MotorParams>,
    pub compressed: Vec<CompressedRecord>,
}

impl SpatialResult {
    pub fn record_for(&self, bus_id: &str, k: usize) -> Option<&CompressedRecord> {
        self.compressed
            .iter()
            .find(|r| r.bus_id == bus_id && r.k == k)
    }
}

/// Decision graphs produced along the way, for export and manual nc choice.
#[derive(Clone, Debug)]
pub struct SpatialGraphs {
    pub active: DecisionGraph,
    pub reactive: DecisionGraph,
    pub dynamic: DecisionGraph,
}

/// Temporal clustering of one bus with the default PFR distance.
pub fn temporal_cluster(
    bus: &BusModelSet,
    nc: usize,
    suite: &[FaultScenario],
    cfg: &SimConfig,
    neighbor_fraction: f64,
) -> Result<(TemporalResult, DecisionGraph)> {
    temporal_cluster_with_basis(bus, nc, suite, cfg, neighbor_fraction, DistanceBasis::Pfr)
}

/// Temporal clustering with an explicit distance basis (the parameter basis
/// exists for the comparison study).
pub fn temporal_cluster_with_basis(
    bus: &BusModelSet,
    nc: usize,
    suite: &[FaultScenario],
    cfg: &SimConfig,
    neighbor_fraction: f64,
    basis: DistanceBasis,
) -> Result<(TemporalResult, DecisionGraph)> {
    let in_bus = |e: Error| Error::Bus {
        bus_id: bus.bus_id.clone(),
        source: Box::new(e),
    };
    bus.validate().map_err(in_bus)?;
    let matrix = match basis {
        DistanceBasis::Pfr => {
            let bundles: Vec<_> = bus
                .models
                .par_iter()
                .map(|m| simulate_bundle(m, suite, cfg))
                .collect::<Result<_>>()
                .map_err(in_bus)?;
            build_distance_matrix(&bundles).map_err(in_bus)?
        }
        DistanceBasis::Parameter => {
            let vectors: Vec<_> = bus.models.iter().map(|m| m.parameter_vector()).collect();
            build_parameter_matrix(&vectors)
        }
    };
    let (graph, clusters) = fdc::cluster(&matrix, nc, neighbor_fraction).map_err(in_bus)?;
    let seed_indices: Vec<usize> = clusters
        .centers
        .iter()
        .chain(clusters.outliers.iter())
        .copied()
        .collect();
    let rlms: Vec<_> = seed_indices
        .iter()
        .map(|&i| bus.models[i].clone())
        .collect();
    Ok((
        TemporalResult {
            bus_id: bus.bus_id.clone(),
            r_count: rlms.len(),
            rlms,
            // cluster ids equal positions in centers ++ outliers
            membership: clusters.assignment,
        },
        graph,
    ))
}

fn cluster_component(
    matrix: &DistanceMatrix,
    nc: usize,
    neighbor_fraction: f64,
    tag: &'static str,
) -> Result<(DecisionGraph, fdc::ClusterResult)> {
    fdc::cluster(matrix, nc, neighbor_fraction).map_err(|e| Error::Component {
        component: tag,
        source: Box::new(e),
    })
}

/// Spatial clustering at the control center: pools every bus's RLM
/// components, clusters the three component families separately with the
/// same nc, and emits the representative sets plus compressed records.
pub fn spatial_cluster(
    temporal: &[TemporalResult],
    nc: usize,
    suite: &[FaultScenario],
    cfg: &SimConfig,
    neighbor_fraction: f64,
) -> Result<(SpatialResult, SpatialGraphs)> {
    spatial_cluster_with_basis(
        temporal,
        nc,
        suite,
        cfg,
        neighbor_fraction,
        DistanceBasis::Pfr,
    )
}

pub fn spatial_cluster_with_basis(
    temporal: &[TemporalResult],
    nc: usize,
    suite: &[FaultScenario],
    cfg: &SimConfig,
    neighbor_fraction: f64,
    basis: DistanceBasis,
) -> Result<(SpatialResult, SpatialGraphs)> {
    let pooled: Vec<(&TemporalResult, usize)> = temporal
        .iter()
        .flat_map(|t| (0..t.rlms.len()).map(move |k| (t, k)))
        .collect();
    if pooled.is_empty() {
        return Err(Error::InvalidParam("no RLMs to cluster spatially".into()));
    }

    let wrap = |tag: &'static str| {
        move |e: Error| Error::Component {
            component: tag,
            source: Box::new(e),
        }
    };

    let (active_m, reactive_m, dynamic_m) = match basis {
        DistanceBasis::Pfr => {
            let active: Vec<_> = pooled
                .par_iter()
                .map(|(t, k)| {
                    static_only_bundle(
                        &t.rlms[*k].active_static,
                        StaticComponent::ActiveWithConstantQ,
                        suite,
                        cfg,
                    )
                })
                .collect::<Result<_>>()
                .map_err(wrap("active"))?;
            let reactive: Vec<_> = pooled
                .par_iter()
                .map(|(t, k)| {
                    static_only_bundle(
                        &t.rlms[*k].reactive_static,
                        StaticComponent::ReactiveWithConstantP,
                        suite,
                        cfg,
                    )
                })
                .collect::<Result<_>>()
                .map_err(wrap("reactive"))?;
            let dynamic: Vec<_> = pooled
                .par_iter()
                .map(|(t, k)| dynamic_only_bundle(&t.rlms[*k].motor, suite, cfg))
                .collect::<Result<_>>()
                .map_err(wrap("dynamic"))?;
            (
                build_distance_matrix(&active).map_err(wrap("active"))?,
                build_distance_matrix(&reactive).map_err(wrap("reactive"))?,
                build_distance_matrix(&dynamic).map_err(wrap("dynamic"))?,
            )
        }
        DistanceBasis::Parameter => {
            let zip_vec = |z: &ZipParams| z.as_array().to_vec();
            let active: Vec<_> = pooled
                .iter()
                .map(|(t, k)| zip_vec(&t.rlms[*k].active_static))
                .collect();
            let reactive: Vec<_> = pooled
                .iter()
                .map(|(t, k)| zip_vec(&t.rlms[*k].reactive_static))
                .collect();
            let dynamic: Vec<_> = pooled
                .iter()
                .map(|(t, k)| t.rlms[*k].motor.as_array().to_vec())
                .collect();
            (
                build_parameter_matrix(&active),
                build_parameter_matrix(&reactive),
                build_parameter_matrix(&dynamic),
            )
        }
    };

    let (ga, ca) = cluster_component(&active_m, nc.min(active_m.n()), neighbor_fraction, "active")?;
    let (gr, cr) = cluster_component(
        &reactive_m,
        nc.min(reactive_m.n()),
        neighbor_fraction,
        "reactive",
    )?;
    let (gd, cd) = cluster_component(
        &dynamic_m,
        nc.min(dynamic_m.n()),
        neighbor_fraction,
        "dynamic",
    )?;

    let seed_list = |c: &fdc::ClusterResult| -> Vec<usize> {
        c.centers.iter().chain(c.outliers.iter()).copied().collect()
    };
    let ra: Vec<ZipParams> = seed_list(&ca)
        .iter()
        .map(|&i| pooled[i].0.rlms[pooled[i].1].active_static)
        .collect();
    let rr: Vec<ZipParams> = seed_list(&cr)
        .iter()
        .map(|&i| pooled[i].0.rlms[pooled[i].1].reactive_static)
        .collect();
    let rd: Vec<MotorParams> = seed_list(&cd)
        .iter()
        .map(|&i| pooled[i].0.rlms[pooled[i].1].motor)
        .collect();

    let compressed: Vec<CompressedRecord> = pooled
        .iter()
        .enumerate()
        .map(|(i, (t, k))| CompressedRecord {
            bus_id: t.bus_id.clone(),
            k: *k,
            rp: t.rlms[*k].dyn_proportion,
            // 1-based mapping indexes
            ia: ca.assignment[i] + 1,
            ir: cr.assignment[i] + 1,
            id: cd.assignment[i] + 1,
        })
        .collect();

    Ok((
        SpatialResult {
            ra,
            rr,
            rd,
            compressed,
        },
        SpatialGraphs {
            active: ga,
            reactive: gr,
            dynamic: gd,
        },
    ))
}

/// Rebuilds a full composite model from a compressed record. Nominal powers
/// come from the bus, not from the representative components (spatial RLMs
/// are shapes; consumption levels stay local).
pub fn reconstruct_model(
    record: &CompressedRecord,
    sp: &SpatialResult,
    nominal_p: f64,
    nominal_q: f64,
) -> Result<CompositeLoadModel> {
    let fetch = |idx: usize, len: usize, what: &str| -> Result<usize> {
        if idx == 0 || idx > len {
            Err(Error::IndexOutOfRange(format!(
                "{what} index {idx} outside 1..={len} for ({}, {})",
                record.bus_id, record.k
            )))
        } else {
            Ok(idx - 1)
        }
    };
    Ok(CompositeLoadModel {
        dyn_proportion: record.rp,
        active_static: sp.ra[fetch(record.ia, sp.ra.len(), "active")?],
        reactive_static: sp.rr[fetch(record.ir, sp.rr.len(), "reactive")?],
        motor: sp.rd[fetch(record.id, sp.rd.len(), "dynamic")?],
        nominal_p,
        nominal_q,
    })
}

/// Byte counts of one storage scheme.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StorageLine {
    pub motor_params: u64,
    pub static_params: u64,
    pub proportions: u64,
    pub indexes: u64,
    pub total_bytes: u64,
}

/// Storage comparison of the original dataset, the temporal RLMs, and the
/// spatially compressed records.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StorageReport {
    pub ori: StorageLine,
    pub tem: StorageLine,
    pub spa: StorageLine,
}

impl StorageReport {
    pub fn reduction_ori_to_tem(&self) -> f64 {
        reduction(self.ori.total_bytes, self.tem.total_bytes)
    }

    pub fn reduction_tem_to_spa(&self) -> f64 {
        reduction(self.tem.total_bytes, self.spa.total_bytes)
    }
}

fn reduction(from: u64, to: u64) -> f64 {
    if from == 0 {
        0.0
    } else {
        (from - to) as f64 / from as f64
    }
}

/// Closed-form storage accounting with a uniform RLM count per bus.
#[allow(clippy::too_many_arguments)]
pub fn storage_report(
    n_buses: u64,
    models_per_bus: u64,
    rlms_per_bus: u64,
    nc: u64,
    motor_param_count: u64,
    static_param_count: u64,
    float_bytes: u64,
    index_bytes: u64,
) -> StorageReport {
    storage_report_totals(
        n_buses * models_per_bus,
        n_buses * rlms_per_bus,
        nc,
        motor_param_count,
        static_param_count,
        float_bytes,
        index_bytes,
    )
}

/// Storage accounting from dataset totals. The parameter counts are inputs
/// so both the 4- and 5-motor-parameter readings reproduce their tables.
pub fn storage_report_totals(
    total_models: u64,
    total_rlms: u64,
    nc: u64,
    motor_param_count: u64,
    static_param_count: u64,
    float_bytes: u64,
    index_bytes: u64,
) -> StorageReport {
    let per_model = motor_param_count + static_param_count + 1;
    let ori = StorageLine {
        motor_params: motor_param_count * total_models,
        static_params: static_param_count * total_models,
        proportions: total_models,
        indexes: 0,
        total_bytes: per_model * total_models * float_bytes,
    };
    let tem = StorageLine {
        motor_params: motor_param_count * total_rlms,
        static_params: static_param_count * total_rlms,
        proportions: total_rlms,
        indexes: 0,
        total_bytes: per_model * total_rlms * float_bytes,
    };
    // an empty RLM set stores nothing, including the representative sets
    let spa = if total_rlms == 0 {
        StorageLine::default()
    } else {
        StorageLine {
            motor_params: motor_param_count * nc,
            static_params: static_param_count * nc,
            proportions: total_rlms,
            indexes: 3 * total_rlms,
            total_bytes: (motor_param_count + static_param_count) * nc * float_bytes
                + total_rlms * float_bytes
                + 3 * total_rlms * index_bytes,
        }
    };
    StorageReport { ori, tem, spa }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen;
    use crate::pfr::standard_fault_suite;

    fn small_bus(seed: u64, n_models: usize, n_basics: usize) -> (BusModelSet, Vec<usize>) {
        let spec = datagen::GenSpec {
            n_buses: 1,
            models_per_bus: n_models,
            basics_per_bus: n_basics,
            noise_rel_std: 0.03,
            seed,
        };
        let g = datagen::generate_bus(&spec, 0).unwrap();
        (
            BusModelSet {
                bus_id: g.bus_id,
                models: g.models,
            },
            g.labels,
        )
    }

    #[test]
    fn far_apart_models_become_their_own_rlms() {
        let basics = datagen::default_basic_models(31, 0, 4);
        let bus = BusModelSet {
            bus_id: "b".into(),
            models: basics.clone(),
        };
        let suite = standard_fault_suite();
        let cfg = SimConfig::default();
        let (t, _) = temporal_cluster(&bus, 4, &suite, &cfg, 0.25).unwrap();
        assert_eq!(t.r_count, 4);
        // membership is a bijection onto the RLM list
        let mut seen = [false; 4];
        for (j, &k) in t.membership.iter().enumerate() {
            assert_eq!(t.rlms[k], bus.models[j]);
            seen[k] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn duplicated_model_list_yields_same_rlm_set() {
        let basics = datagen::default_basic_models(32, 1, 6);
        let mut doubled = basics.clone();
        doubled.extend(basics.iter().cloned());
        let suite = standard_fault_suite();
        let cfg = SimConfig::default();
        let single = BusModelSet {
            bus_id: "a".into(),
            models: basics.clone(),
        };
        let dup = BusModelSet {
            bus_id: "a".into(),
            models: doubled,
        };
        let (t1, _) = temporal_cluster(&single, 6, &suite, &cfg, 0.2).unwrap();
        let (t2, _) = temporal_cluster(&dup, 6, &suite, &cfg, 0.2).unwrap();
        let key = |m: &CompositeLoadModel| format!("{:?}", m.parameter_vector());
        let mut s1: Vec<String> = t1.rlms.iter().map(key).collect();
        let mut s2: Vec<String> = t2.rlms.iter().map(key).collect();
        s1.sort();
        s2.sort();
        assert_eq!(s1, s2);
    }

    #[test]
    fn temporal_recovers_planted_structure() {
        let (bus, labels) = small_bus(33, 80, 5);
        let suite = standard_fault_suite();
        let cfg = SimConfig::default();
        let (t, _) = temporal_cluster(&bus, 5, &suite, &cfg, 0.05).unwrap();
        assert!(t.r_count >= 5 && t.r_count <= 7, "r_count {}", t.r_count);
        let ari = crate::validation::adjusted_rand_index(&labels, &t.membership);
        assert!(ari > 0.9, "ARI {ari}");
    }

    #[test]
    fn single_rlm_spatial_is_identity() {
        let basics = datagen::default_basic_models(34, 2, 1);
        let t = TemporalResult {
            bus_id: "bus_x".into(),
            rlms: basics.clone(),
            membership: vec![0],
            r_count: 1,
        };
        let suite = standard_fault_suite();
        let cfg = SimConfig::default();
        let (sp, _) = spatial_cluster(&[t], 1, &suite, &cfg, 0.015).unwrap();
        assert_eq!(sp.ra.len(), 1);
        assert_eq!(sp.rr.len(), 1);
        assert_eq!(sp.rd.len(), 1);
        assert_eq!(
            sp.compressed[0],
            CompressedRecord {
                bus_id: "bus_x".into(),
                k: 0,
                rp: basics[0].dyn_proportion,
                ia: 1,
                ir: 1,
                id: 1,
            }
        );
    }

    #[test]
    fn compressed_indexes_point_to_own_cluster_seed() {
        let (bus, _) = small_bus(35, 30, 3);
        let suite = standard_fault_suite();
        let cfg = SimConfig::default();
        let (t, _) = temporal_cluster(&bus, 3, &suite, &cfg, 0.1).unwrap();
        let (sp, _) = spatial_cluster(std::slice::from_ref(&t), 2, &suite, &cfg, 0.1).unwrap();
        for rec in &sp.compressed {
            assert!(rec.ia >= 1 && rec.ia <= sp.ra.len());
            assert!(rec.ir >= 1 && rec.ir <= sp.rr.len());
            assert!(rec.id >= 1 && rec.id <= sp.rd.len());
            // rp survives verbatim
            let rlm = &t.rlms[rec.k];
            assert_eq!(rec.rp, rlm.dyn_proportion);
        }
    }

    #[test]
    fn reconstruct_round_trips_when_everything_is_a_center() {
        let basics = datagen::default_basic_models(36, 3, 3);
        let t = TemporalResult {
            bus_id: "bus_y".into(),
            rlms: basics.clone(),
            membership: vec![0, 1, 2],
            r_count: 3,
        };
        let suite = standard_fault_suite();
        let cfg = SimConfig::default();
        let (sp, _) = spatial_cluster(&[t], 3, &suite, &cfg, 0.3).unwrap();
        for rec in &sp.compressed {
            let m = reconstruct_model(rec, &sp, 1.0, 0.35).unwrap();
            let original = &basics[rec.k];
            assert_eq!(m.dyn_proportion, original.dyn_proportion);
            assert_eq!(m.active_static, original.active_static);
            assert_eq!(m.reactive_static, original.reactive_static);
            assert_eq!(m.motor, original.motor);
            // and it simulates without error under the standard suite
            simulate_bundle(&m, &suite, &cfg).unwrap();
        }
    }

    #[test]
    fn reconstruct_rejects_bad_indexes() {
        let basics = datagen::default_basic_models(37, 4, 1);
        let sp = SpatialResult {
            ra: vec![basics[0].active_static],
            rr: vec![basics[0].reactive_static],
            rd: vec![basics[0].motor],
            compressed: vec![],
        };
        let rec = CompressedRecord {
            bus_id: "b".into(),
            k: 0,
            rp: 0.5,
            ia: 2,
            ir: 1,
            id: 1,
        };
        assert!(matches!(
            reconstruct_model(&rec, &sp, 1.0, 0.3),
            Err(Error::IndexOutOfRange(_))
        ));
    }

    #[test]
    fn storage_matches_published_arithmetic() {
        let r = storage_report(10, 500, 10, 7, 4, 6, 4, 1);
        assert_eq!(r.ori.total_bytes, 220_000);
        assert_eq!(r.tem.total_bytes, 4_400);
        assert_eq!(r.spa.total_bytes, 40 * 7 + 700);
        assert!((r.reduction_ori_to_tem() - 0.98).abs() < 1e-12);
        assert!((r.reduction_tem_to_spa() - 0.7773).abs() < 1e-4);
        // Spa formula across nc
        for nc in [3, 5, 7] {
            let r = storage_report(10, 500, 10, nc, 4, 6, 4, 1);
            assert_eq!(r.spa.total_bytes, 40 * nc + 700);
        }
    }

    #[test]
    fn storage_zero_system_is_all_zero() {
        let r = storage_report(0, 0, 0, 7, 4, 6, 4, 1);
        assert_eq!(r.ori.total_bytes, 0);
        assert_eq!(r.tem.total_bytes, 0);
        assert_eq!(r.spa.total_bytes, 0);
    }
}
