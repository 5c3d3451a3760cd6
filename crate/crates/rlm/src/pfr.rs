//! Post-fault response generation: fixed-step integration of a load model
//! under a voltage-dip scenario, with excitation variants for the composite,
//! static-only and dynamic-only clustering stages.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::load_model::{CompositeLoadModel, MotorState, ZipParams};

/// One fault scenario: a dip from `pre_fault_voltage` to `fault_depth`
/// between `t_fault_on` and `t_clear`, then an exponential recovery.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaultScenario {
    pub label: String,
    #[serde(default = "default_pre_fault")]
    pub pre_fault_voltage: f64,
    /// Retained voltage during the fault, pu.
    pub fault_depth: f64,
    pub t_fault_on: f64,
    pub t_clear: f64,
    /// Time constant of the exponential return to the pre-fault magnitude.
    pub recovery_time_constant: f64,
}

fn default_pre_fault() -> f64 {
    1.0
}

impl FaultScenario {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.pre_fault_voltage,
            self.fault_depth,
            self.t_fault_on,
            self.t_clear,
            self.recovery_time_constant,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "scenario '{}': all fields must be finite",
                self.label
            )));
        }
        if !(0.0..self.pre_fault_voltage).contains(&self.fault_depth) {
            return Err(Error::InvalidParam(format!(
                "scenario '{}': fault_depth must lie in [0, pre_fault_voltage)",
                self.label
            )));
        }
        if self.t_fault_on >= self.t_clear {
            return Err(Error::InvalidParam(format!(
                "scenario '{}': t_fault_on must precede t_clear",
                self.label
            )));
        }
        if self.t_fault_on < 0.0 || self.recovery_time_constant <= 0.0 {
            return Err(Error::InvalidParam(format!(
                "scenario '{}': times must be non-negative and tau positive",
                self.label
            )));
        }
        Ok(())
    }

    /// Bus-voltage template at time `t` (right-continuous at the fault
    /// inception; the recovery branch is continuous at `t_clear`).
    pub fn voltage_at(&self, t: f64) -> f64 {
        self.voltage_in_segment(t, self.segment_at(t))
    }

    fn segment_at(&self, t: f64) -> Segment {
        if t < self.t_fault_on {
            Segment::Pre
        } else if t < self.t_clear {
            Segment::Fault
        } else {
            Segment::Recovery
        }
    }

    /// Branch evaluation used by the integrator so that a step never mixes
    /// two sides of a discontinuity.
    fn voltage_in_segment(&self, t: f64, seg: Segment) -> f64 {
        match seg {
            Segment::Pre => self.pre_fault_voltage,
            Segment::Fault => self.fault_depth,
            Segment::Recovery => {
                self.pre_fault_voltage
                    - (self.pre_fault_voltage - self.fault_depth)
                        * (-(t - self.t_clear) / self.recovery_time_constant).exp()
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Segment {
    Pre,
    Fault,
    Recovery,
}

/// How the test-bus voltage is produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExcitationMode {
    /// The scenario template is applied directly as the bus voltage,
    /// identically for every model.
    Playback,
    /// The template drives a source EMF behind a reactance; the bus voltage
    /// is solved from the load's own current draw each stage evaluation.
    Thevenin,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    pub base_mva: f64,
    pub excitation_mode: ExcitationMode,
    /// Source reactance for thevenin mode, pu.
    #[serde(default = "default_source_reactance")]
    pub source_reactance: f64,
}

fn default_source_reactance() -> f64 {
    0.05
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 0.01,
            horizon: 5.0,
            base_mva: 100.0,
            excitation_mode: ExcitationMode::Playback,
            source_reactance: default_source_reactance(),
        }
    }
}

impl SimConfig {
    pub fn validate_for(&self, sc: &FaultScenario) -> Result<()> {
        if !self.dt.is_finite() || self.dt <= 0.0 {
            return Err(Error::InvalidParam("dt must be positive".into()));
        }
        if !self.horizon.is_finite()
            || !self.source_reactance.is_finite()
            || self.source_reactance <= 0.0
        {
            return Err(Error::InvalidParam(
                "horizon and source_reactance must be finite and positive".into(),
            ));
        }
        if self.horizon < sc.t_clear + 1.0 {
            return Err(Error::InvalidParam(format!(
                "horizon {} too short for scenario '{}' (needs t_clear + 1 s)",
                self.horizon, sc.label
            )));
        }
        Ok(())
    }

    fn n_steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }
}

/// One simulated response: P and Q sampled on a uniform time grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PfrCurve {
    pub times: Vec<f64>,
    pub p_values: Vec<f64>,
    pub q_values: Vec<f64>,
}

/// The full clustering feature of one model: one curve per fault scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct PfrBundle {
    pub curves: Vec<PfrCurve>,
}

impl PfrBundle {
    pub fn fault_count(&self) -> usize {
        self.curves.len()
    }

    /// Checks that two bundles share the fault count and time grids.
    pub fn grid_compatible(&self, other: &PfrBundle) -> Result<()> {
        if self.curves.len() != other.curves.len() {
            return Err(Error::GridMismatch(format!(
                "fault counts differ: {} vs {}",
                self.curves.len(),
                other.curves.len()
            )));
        }
        for (k, (a, b)) in self.curves.iter().zip(&other.curves).enumerate() {
            if a.times != b.times {
                return Err(Error::GridMismatch(format!(
                    "time grids differ in scenario {k}"
                )));
            }
        }
        Ok(())
    }
}

/// Artifact default suite: three dips of increasing retained voltage,
/// applied at 0.5 s and cleared at 0.6 s.
pub fn standard_fault_suite() -> Vec<FaultScenario> {
    [(0.2, "fault1"), (0.45, "fault2"), (0.7, "fault3")]
        .into_iter()
        .map(|(depth, label)| FaultScenario {
            label: label.to_string(),
            pre_fault_voltage: 1.0,
            fault_depth: depth,
            t_fault_on: 0.5,
            t_clear: 0.6,
            recovery_time_constant: 0.05,
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Excitation
// ---------------------------------------------------------------------------

/// Source EMF behind a reactance; anchored so the pre-fault bus voltage is
/// exactly the scenario's pre_fault_voltage for the anchoring load.
struct TheveninCircuit {
    es0: Complex64,
    x_s: f64,
    pre: f64,
}

impl TheveninCircuit {
    fn new(s0: (f64, f64), pre: f64, x_s: f64) -> Self {
        let u0 = Complex64::new(pre, 0.0);
        let i0 = (Complex64::new(s0.0, s0.1) / u0).conj();
        TheveninCircuit {
            es0: u0 + Complex64::new(0.0, x_s) * i0,
            x_s,
            pre,
        }
    }

    /// Damped Picard solve of U = E_s - jX_s * conj(S(U)/U) to 1e-8.
    fn solve<F>(&self, template_v: f64, guess: Complex64, power: F) -> Result<Complex64>
    where
        F: Fn(Complex64) -> (f64, f64),
    {
        let es = self.es0 * (template_v / self.pre);
        let jx = Complex64::new(0.0, self.x_s);
        let mut u = guess;
        for &alpha in &[0.7, 0.35] {
            for _ in 0..200 {
                let (p, q) = power(u);
                let i = (Complex64::new(p, q) / u).conj();
                let u_next = es - jx * i;
                if (u_next - u).norm() < 1e-8 {
                    return Ok(u_next);
                }
                u = u * (1.0 - alpha) + u_next * alpha;
            }
        }
        Err(Error::Diverged(
            "thevenin voltage solve did not converge".into(),
        ))
    }
}

// ---------------------------------------------------------------------------
// Composite-model simulation
// ---------------------------------------------------------------------------

fn check_bounds(st: &MotorState, t: f64) -> Result<()> {
    if st.e_d.abs() > 10.0 || st.e_q.abs() > 10.0 || !(-0.5..=1.5).contains(&st.slip) {
        return Err(Error::Diverged(format!(
            "state out of bounds at t = {t:.3} s (E_d {:.3}, E_q {:.3}, s {:.3})",
            st.e_d, st.e_q, st.slip
        )));
    }
    Ok(())
}

/// Simulates the composite model's post-fault response. Fourth-order
/// Runge-Kutta at `cfg.dt`, with integration sub-steps re-anchored at the
/// fault inception and clearing times so a step never straddles a
/// discontinuity of the excitation.
pub fn simulate_pfr(
    model: &CompositeLoadModel,
    sc: &FaultScenario,
    cfg: &SimConfig,
) -> Result<PfrCurve> {
    sc.validate()?;
    cfg.validate_for(sc)?;
    model.validate()?;
    let op = model.operating_point(sc.pre_fault_voltage)?;

    let circuit = match cfg.excitation_mode {
        ExcitationMode::Playback => None,
        ExcitationMode::Thevenin => {
            let s0 = model.power(&op, &op.motor_state, sc.pre_fault_voltage, 0.0);
            Some(TheveninCircuit::new(
                s0,
                sc.pre_fault_voltage,
                cfg.source_reactance,
            ))
        }
    };

    let n = cfg.n_steps();
    let dt = cfg.dt;
    let mut times = Vec::with_capacity(n + 1);
    let mut p_values = Vec::with_capacity(n + 1);
    let mut q_values = Vec::with_capacity(n + 1);

    let mut st = op.motor_state;
    // Warm start for the algebraic solves.
    let mut u_prev = Complex64::new(sc.pre_fault_voltage, 0.0);

    // Voltage seen by the load for a state at time t within a segment.
    let bus_voltage =
        |st: &MotorState, t: f64, seg: Segment, warm: Complex64| -> Result<Complex64> {
            let v_tpl = sc.voltage_in_segment(t, seg);
            match &circuit {
                None => Ok(Complex64::new(v_tpl, 0.0)),
                Some(c) => c.solve(v_tpl, warm, |u| model.power(&op, st, u.re, u.im)),
            }
        };

    let integrate_motor = model.dyn_proportion > 0.0;

    for k in 0..=n {
        let t = k as f64 * dt;
        let u = bus_voltage(&st, t, sc.segment_at(t), u_prev)?;
        u_prev = u;
        let (p, q) = model.power(&op, &st, u.re, u.im);
        times.push(t);
        p_values.push(p);
        q_values.push(q);
        if k == n {
            break;
        }

        if !integrate_motor {
            // Pure static load: memoryless, the motor state stays at its
            // pre-fault equilibrium and contributes with weight zero.
            continue;
        }

        // Split the step at any event time falling strictly inside it.
        let t_next = (k + 1) as f64 * dt;
        let mut bounds = vec![t];
        for &e in &[sc.t_fault_on, sc.t_clear] {
            if t < e && e < t_next {
                bounds.push(e);
            }
        }
        bounds.push(t_next);

        for w in bounds.windows(2) {
            let (a, b) = (w[0], w[1]);
            let h = b - a;
            let seg = sc.segment_at(0.5 * (a + b));
            let add = |s: &MotorState, d: &MotorState, w: f64| MotorState {
                e_d: s.e_d + w * d.e_d,
                e_q: s.e_q + w * d.e_q,
                slip: s.slip + w * d.slip,
            };
            let f =
                |state: &MotorState, tt: f64, warm: Complex64| -> Result<(MotorState, Complex64)> {
                    let u = bus_voltage(state, tt, seg, warm)?;
                    Ok((model.motor.derivatives(state, u.re, u.im), u))
                };
            let (k1, u1) = f(&st, a, u_prev)?;
            let (k2, u2) = f(&add(&st, &k1, 0.5 * h), a + 0.5 * h, u1)?;
            let (k3, u3) = f(&add(&st, &k2, 0.5 * h), a + 0.5 * h, u2)?;
            let (k4, u4) = f(&add(&st, &k3, h), b, u3)?;
            u_prev = u4;
            st = MotorState {
                e_d: st.e_d + h / 6.0 * (k1.e_d + 2.0 * k2.e_d + 2.0 * k3.e_d + k4.e_d),
                e_q: st.e_q + h / 6.0 * (k1.e_q + 2.0 * k2.e_q + 2.0 * k3.e_q + k4.e_q),
                slip: st.slip + h / 6.0 * (k1.slip + 2.0 * k2.slip + 2.0 * k3.slip + k4.slip),
            };
            check_bounds(&st, b)?;
        }
    }

    Ok(PfrCurve {
        times,
        p_values,
        q_values,
    })
}

/// Maps [`simulate_pfr`] over a fault suite, in order. Any scenario error
/// aborts the bundle, tagged with the scenario label.
pub fn simulate_bundle(
    model: &CompositeLoadModel,
    suite: &[FaultScenario],
    cfg: &SimConfig,
) -> Result<PfrBundle> {
    let curves = suite
        .iter()
        .map(|sc| {
            simulate_pfr(model, sc, cfg).map_err(|e| Error::Scenario {
                label: sc.label.clone(),
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PfrBundle { curves })
}

/// Which static component is being clustered.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StaticComponent {
    /// Cluster the active ZIP; reactive side held constant at its nominal.
    ActiveWithConstantQ,
    /// Cluster the reactive ZIP; active side held constant at its nominal.
    ReactiveWithConstantP,
}

/// Response of a pure static load (unit nominal consumption): the clustered
/// component follows the ZIP polynomial, the other is held constant.
pub fn static_only_bundle(
    zip: &ZipParams,
    which: StaticComponent,
    suite: &[FaultScenario],
    cfg: &SimConfig,
) -> Result<PfrBundle> {
    let power = |u: f64| -> (f64, f64) {
        match which {
            StaticComponent::ActiveWithConstantQ => (zip.power(u), 1.0),
            StaticComponent::ReactiveWithConstantP => (1.0, zip.power(u)),
        }
    };
    let curves = suite
        .iter()
        .map(|sc| -> Result<PfrCurve> {
            sc.validate()?;
            cfg.validate_for(sc)?;
            let circuit = match cfg.excitation_mode {
                ExcitationMode::Playback => None,
                ExcitationMode::Thevenin => Some(TheveninCircuit::new(
                    power(sc.pre_fault_voltage),
                    sc.pre_fault_voltage,
                    cfg.source_reactance,
                )),
            };
            let n = cfg.n_steps();
            let mut times = Vec::with_capacity(n + 1);
            let mut p_values = Vec::with_capacity(n + 1);
            let mut q_values = Vec::with_capacity(n + 1);
            let mut warm = Complex64::new(sc.pre_fault_voltage, 0.0);
            for k in 0..=n {
                let t = k as f64 * cfg.dt;
                let u = match &circuit {
                    None => Complex64::new(sc.voltage_at(t), 0.0),
                    Some(c) => {
                        let sol = c.solve(sc.voltage_at(t), warm, |u| power(u.norm()))?;
                        warm = sol;
                        sol
                    }
                };
                let (p, q) = power(u.norm());
                times.push(t);
                p_values.push(p);
                q_values.push(q);
            }
            Ok(PfrCurve {
                times,
                p_values,
                q_values,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PfrBundle { curves })
}

/// Response of the motor alone (composite with dyn_proportion = 1,
/// unit nominal consumption).
pub fn dynamic_only_bundle(
    mp: &crate::load_model::MotorParams,
    suite: &[FaultScenario],
    cfg: &SimConfig,
) -> Result<PfrBundle> {
    let model = CompositeLoadModel {
        dyn_proportion: 1.0,
        active_static: ZipParams {
            z_coeff: 0.0,
            i_coeff: 0.0,
            p_coeff: 1.0,
        },
        reactive_static: ZipParams {
            z_coeff: 0.0,
            i_coeff: 0.0,
            p_coeff: 1.0,
        },
        motor: *mp,
        nominal_p: 1.0,
        nominal_q: 1.0,
    };
    simulate_bundle(&model, suite, cfg)
}
