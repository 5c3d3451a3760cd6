//! Synthesis of "identified" load-model datasets: a handful of basic models
//! per bus and Gaussian-perturbed variants around them, with seeded
//! determinism and ground-truth labels for recovery tests.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Dirichlet, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::load_model::{CompositeLoadModel, MotorParams, ZipParams, OMEGA_SYNC_60HZ};
use crate::pfr::{dynamic_only_bundle, standard_fault_suite, SimConfig};

/// Nominal consumption shared by all generated models of a bus, pu.
pub const NOMINAL_P: f64 = 1.0;
pub const NOMINAL_Q: f64 = 0.35;

/// Basic-model parameter ranges. The dynamic proportion, reactances and time
/// constants are centered on common composite-load values; the mechanical
/// torque is drawn as a fraction of the motor's pull-out torque at U = 1 and
/// every basic is screened to ride through the deepest standard fault with a
/// 1.2x torque margin, so that 3%-perturbed variants stay clear of stalling.
pub mod ranges {
    pub const DYN_PROPORTION: (f64, f64) = (0.3, 0.8);
    pub const X_OPEN: (f64, f64) = (2.0, 3.5);
    pub const X_TRANSIENT: (f64, f64) = (0.15, 0.30);
    pub const T_OPEN: (f64, f64) = (0.5, 1.5);
    pub const INERTIA: (f64, f64) = (0.8, 2.0);
    /// torque_mech as a fraction of pull-out torque at U = 1.
    pub const TORQUE_FRACTION: (f64, f64) = (0.2, 0.4);
    /// Symmetric Dirichlet concentration for ZIP triplets.
    pub const ZIP_ALPHA: f64 = 4.0;
    /// Torque margin applied when screening basic models.
    pub const SCREEN_TORQUE_MARGIN: f64 = 1.2;
}

/// Dataset generation request.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub n_buses: usize,
    pub models_per_bus: usize,
    pub basics_per_bus: usize,
    pub noise_rel_std: f64,
    pub seed: u64,
}

impl Default for GenSpec {
    fn default() -> Self {
        GenSpec {
            n_buses: 10,
            models_per_bus: 500,
            basics_per_bus: 10,
            noise_rel_std: 0.03,
            seed: 42,
        }
    }
}

impl GenSpec {
    pub fn validate(&self) -> Result<()> {
        if self.basics_per_bus == 0 || self.basics_per_bus > self.models_per_bus {
            return Err(Error::InvalidParam(
                "need 1 <= basics_per_bus <= models_per_bus".into(),
            ));
        }
        if !(0.0..0.5).contains(&self.noise_rel_std) {
            return Err(Error::InvalidParam(
                "noise_rel_std must lie in [0, 0.5)".into(),
            ));
        }
        Ok(())
    }
}

/// Models of one bus plus ground-truth basic labels (labels are for test
/// harness use only and never feed the clustering).
#[derive(Clone, Debug)]
pub struct GeneratedBus {
    pub bus_id: String,
    pub models: Vec<CompositeLoadModel>,
    pub labels: Vec<usize>,
    /// How many parameter values had to be clipped back into their
    /// type-invariant ranges.
    pub clamp_events: usize,
}

// Named RNG sub-streams so stages never share draws.
fn stream_rng(seed: u64, stage: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((stage << 32) | index);
    rng
}

const STREAM_BASICS: u64 = 1;
const STREAM_VARIANTS: u64 = 2;

/// Ride-through screen: the motor alone must complete the deepest standard
/// fault and settle back to its pre-fault consumption.
fn rides_through(motor: &MotorParams, torque_margin: f64) -> bool {
    let mut probe = *motor;
    probe.torque_mech *= torque_margin;
    let suite = standard_fault_suite();
    let deepest = &suite[0];
    match dynamic_only_bundle(&probe, std::slice::from_ref(deepest), &SimConfig::default()) {
        Ok(bundle) => {
            let p = &bundle.curves[0].p_values;
            (p[p.len() - 1] - 1.0).abs() < 0.02
        }
        Err(_) => false,
    }
}

fn draw_zip(rng: &mut ChaCha8Rng) -> ZipParams {
    let dir = Dirichlet::new([ranges::ZIP_ALPHA; 3]).expect("valid alpha");
    let [z, i, p] = dir.sample(rng);
    ZipParams {
        z_coeff: z,
        i_coeff: i,
        p_coeff: p,
    }
}

fn draw_basic(rng: &mut ChaCha8Rng) -> CompositeLoadModel {
    loop {
        let dyn_proportion = rng.random_range(ranges::DYN_PROPORTION.0..ranges::DYN_PROPORTION.1);
        let active_static = draw_zip(rng);
        let reactive_static = draw_zip(rng);
        let mut motor = MotorParams {
            x_open: rng.random_range(ranges::X_OPEN.0..ranges::X_OPEN.1),
            x_transient: rng.random_range(ranges::X_TRANSIENT.0..ranges::X_TRANSIENT.1),
            t_open: rng.random_range(ranges::T_OPEN.0..ranges::T_OPEN.1),
            inertia: rng.random_range(ranges::INERTIA.0..ranges::INERTIA.1),
            torque_mech: 0.0,
            omega_sync: OMEGA_SYNC_60HZ,
        };
        let frac = rng.random_range(ranges::TORQUE_FRACTION.0..ranges::TORQUE_FRACTION.1);
        motor.torque_mech = frac * motor.pullout_torque(1.0);
        if !rides_through(&motor, ranges::SCREEN_TORQUE_MARGIN) {
            continue;
        }
        let model = CompositeLoadModel {
            dyn_proportion,
            active_static,
            reactive_static,
            motor,
            nominal_p: NOMINAL_P,
            nominal_q: NOMINAL_Q,
        };
        if model.validate().is_ok() {
            return model;
        }
    }
}

/// Deterministic basic models for one bus.
pub fn default_basic_models(seed: u64, bus_index: u64, count: usize) -> Vec<CompositeLoadModel> {
    let mut rng = stream_rng(seed, STREAM_BASICS, bus_index);
    (0..count).map(|_| draw_basic(&mut rng)).collect()
}

/// One multiplicative Gaussian perturbation; clamps into [lo, hi] and counts.
fn perturb_value(
    rng: &mut ChaCha8Rng,
    value: f64,
    rel: f64,
    lo: f64,
    hi: f64,
    clamps: &mut usize,
) -> f64 {
    let noise: f64 = StandardNormal.sample(rng);
    let v = value + rel * value.abs() * noise;
    if v < lo {
        *clamps += 1;
        lo
    } else if v > hi {
        *clamps += 1;
        hi
    } else {
        v
    }
}

fn perturb_zip(rng: &mut ChaCha8Rng, zip: &ZipParams, rel: f64, clamps: &mut usize) -> ZipParams {
    let mut vals = zip.as_array();
    for v in &mut vals {
        *v = perturb_value(rng, *v, rel, 0.0, f64::INFINITY, clamps);
    }
    let sum: f64 = vals.iter().sum();
    // zero sum cannot happen for rel < 0.5 (multiplicative noise)
    ZipParams {
        z_coeff: vals[0] / sum,
        i_coeff: vals[1] / sum,
        p_coeff: vals[2] / sum,
    }
}

fn perturb_model(
    rng: &mut ChaCha8Rng,
    base: &CompositeLoadModel,
    rel: f64,
    clamps: &mut usize,
) -> CompositeLoadModel {
    let dyn_proportion = perturb_value(rng, base.dyn_proportion, rel, 0.0, 1.0, clamps);
    let active_static = perturb_zip(rng, &base.active_static, rel, clamps);
    let reactive_static = perturb_zip(rng, &base.reactive_static, rel, clamps);
    let x_open = perturb_value(
        rng,
        base.motor.x_open,
        rel,
        f64::MIN_POSITIVE,
        f64::INFINITY,
        clamps,
    );
    // keep x_transient strictly below x_open
    let x_transient = perturb_value(
        rng,
        base.motor.x_transient,
        rel,
        f64::MIN_POSITIVE,
        0.99 * x_open,
        clamps,
    );
    let motor = MotorParams {
        x_open,
        x_transient,
        t_open: perturb_value(
            rng,
            base.motor.t_open,
            rel,
            f64::MIN_POSITIVE,
            f64::INFINITY,
            clamps,
        ),
        inertia: perturb_value(
            rng,
            base.motor.inertia,
            rel,
            f64::MIN_POSITIVE,
            f64::INFINITY,
            clamps,
        ),
        torque_mech: perturb_value(rng, base.motor.torque_mech, rel, 0.0, f64::INFINITY, clamps),
        omega_sync: base.motor.omega_sync,
    };
    CompositeLoadModel {
        dyn_proportion,
        active_static,
        reactive_static,
        motor,
        nominal_p: base.nominal_p,
        nominal_q: base.nominal_q,
    }
}

/// Result of [`generate_models`].
#[derive(Clone, Debug)]
pub struct GeneratedModels {
    pub models: Vec<CompositeLoadModel>,
    pub labels: Vec<usize>,
    pub clamp_events: usize,
}

const MAX_RETRIES: usize = 100;

/// Generates `total` models around the given basics: each draw picks a basic
/// uniformly, perturbs every parameter with zero-mean Gaussian noise of
/// standard deviation `noise_rel_std * |parameter|`, renormalizes the ZIP
/// triplets, clamps into the type-invariant ranges, and screens feasibility
/// (steady state at U = 1 plus fault ride-through).
pub fn generate_models(
    basics: &[CompositeLoadModel],
    total: usize,
    noise_rel_std: f64,
    seed: u64,
) -> Result<GeneratedModels> {
    generate_models_with(
        &mut stream_rng(seed, STREAM_VARIANTS, 0),
        basics,
        total,
        noise_rel_std,
    )
}

fn generate_models_with(
    rng: &mut ChaCha8Rng,
    basics: &[CompositeLoadModel],
    total: usize,
    noise_rel_std: f64,
) -> Result<GeneratedModels> {
    if basics.is_empty() || total < basics.len() {
        return Err(Error::InvalidParam(
            "need at least one basic and total >= |basics|".into(),
        ));
    }
    let mut models = Vec::with_capacity(total);
    let mut labels = Vec::with_capacity(total);
    let mut clamp_events = 0;
    for _ in 0..total {
        let basic_idx = rng.random_range(0..basics.len());
        labels.push(basic_idx);
        if noise_rel_std == 0.0 {
            models.push(basics[basic_idx].clone());
            continue;
        }
        let mut accepted = None;
        for _ in 0..MAX_RETRIES {
            let mut clamps = 0;
            let candidate = perturb_model(rng, &basics[basic_idx], noise_rel_std, &mut clamps);
            let feasible = candidate.validate().is_ok()
                && candidate.motor.init_steady_state(1.0).is_ok()
                && rides_through(&candidate.motor, 1.0);
            if feasible {
                clamp_events += clamps;
                accepted = Some(candidate);
                break;
            }
        }
        match accepted {
            Some(m) => models.push(m),
            None => {
                return Err(Error::InfeasibleAfterRetries {
                    basic: basic_idx,
                    retries: MAX_RETRIES,
                })
            }
        }
    }
    Ok(GeneratedModels {
        models,
        labels,
        clamp_events,
    })
}

/// Generates one bus: basics from the bus's own sub-stream, then variants.
pub fn generate_bus(spec: &GenSpec, bus_index: usize) -> Result<GeneratedBus> {
    spec.validate()?;
    let basics = default_basic_models(spec.seed, bus_index as u64, spec.basics_per_bus);
    let mut rng = stream_rng(spec.seed, STREAM_VARIANTS, bus_index as u64);
    let generated =
        generate_models_with(&mut rng, &basics, spec.models_per_bus, spec.noise_rel_std)?;
    Ok(GeneratedBus {
        bus_id: format!("bus_{bus_index:03}"),
        models: generated.models,
        labels: generated.labels,
        clamp_events: generated.clamp_events,
    })
}

/// Generates the whole dataset; buses are independent sub-streams, so the
/// merged output order is deterministic regardless of parallelism.
pub fn generate_all(spec: &GenSpec) -> Result<Vec<GeneratedBus>> {
    spec.validate()?;
    (0..spec.n_buses)
        .into_par_iter()
        .map(|b| generate_bus(spec, b))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_basic_is_valid() {
        let basics = default_basic_models(1, 0, 1);
        assert_eq!(basics.len(), 1);
        basics[0].validate().unwrap();
        basics[0].motor.init_steady_state(1.0).unwrap();
    }

    #[test]
    fn basics_are_deterministic_per_seed_and_bus() {
        let a = default_basic_models(7, 3, 4);
        let b = default_basic_models(7, 3, 4);
        assert_eq!(a, b);
        let c = default_basic_models(7, 4, 4);
        assert_ne!(a, c);
        let d = default_basic_models(8, 3, 4);
        assert_ne!(a, d);
    }

    #[test]
    fn every_basic_has_steady_state_and_rides_through() {
        for bus in 0..3 {
            for m in default_basic_models(11, bus, 5) {
                m.motor.init_steady_state(1.0).unwrap();
                assert!(rides_through(&m.motor, 1.0));
            }
        }
    }

    #[test]
    fn zero_noise_reproduces_basics_exactly() {
        let basics = default_basic_models(2, 0, 3);
        let g = generate_models(&basics, 20, 0.0, 2).unwrap();
        for (m, &l) in g.models.iter().zip(&g.labels) {
            assert_eq!(*m, basics[l]);
        }
        assert_eq!(g.clamp_events, 0);
    }

    #[test]
    fn generated_models_satisfy_invariants() {
        let spec = GenSpec {
            n_buses: 1,
            models_per_bus: 40,
            basics_per_bus: 5,
            noise_rel_std: 0.03,
            seed: 3,
        };
        let bus = generate_bus(&spec, 0).unwrap();
        assert_eq!(bus.models.len(), 40);
        for m in &bus.models {
            m.validate().unwrap();
            m.motor.init_steady_state(1.0).unwrap();
        }
        assert!(bus.labels.iter().all(|&l| l < 5));
    }

    #[test]
    fn per_parameter_std_is_near_three_percent() {
        // Pool normalized deviations (param - basic)/basic over all models.
        let basics = default_basic_models(5, 0, 4);
        let g = generate_models(&basics, 600, 0.03, 5).unwrap();
        let param_count = basics[0].parameter_vector().len();
        // skip the ZIP entries (renormalization couples them); check p and
        // the five motor parameters
        let checked: Vec<usize> = std::iter::once(0).chain(7..param_count).collect();
        for &pi in &checked {
            let mut devs = Vec::new();
            for (m, &l) in g.models.iter().zip(&g.labels) {
                let v = m.parameter_vector()[pi];
                let b = basics[l].parameter_vector()[pi];
                devs.push((v - b) / b);
            }
            let n = devs.len() as f64;
            let mean = devs.iter().sum::<f64>() / n;
            let var = devs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1.0);
            let std = var.sqrt();
            assert!((0.02..=0.04).contains(&std), "parameter {pi}: std {std}");
        }
    }

    #[test]
    fn labels_are_uniform_within_binomial_bounds() {
        let basics = default_basic_models(9, 0, 10);
        let g = generate_models(&basics, 500, 0.0, 9).unwrap();
        let mut counts = vec![0usize; 10];
        for &l in &g.labels {
            counts[l] += 1;
        }
        let p = 0.1;
        let sigma = (500.0f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - 50.0).abs() <= 3.0 * sigma, "count {c}");
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = GenSpec {
            n_buses: 2,
            models_per_bus: 15,
            basics_per_bus: 3,
            noise_rel_std: 0.03,
            seed: 21,
        };
        let a = generate_all(&spec).unwrap();
        let b = generate_all(&spec).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.models, y.models);
            assert_eq!(x.labels, y.labels);
        }
    }

    #[test]
    fn rejects_bad_spec() {
        let mut spec = GenSpec::default();
        spec.basics_per_bus = spec.models_per_bus + 1;
        assert!(generate_all(&spec).is_err());
        let spec = GenSpec {
            noise_rel_std: 0.6,
            ..GenSpec::default()
        };
        assert!(spec.validate().is_err());
    }
}
