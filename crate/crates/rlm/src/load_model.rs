//! Composite load model: a ZIP static part and a third-order induction-motor
//! dynamic part, mixed by the dynamic proportion `p`.
//!
//! All quantities are per-unit on the load's own base. The voltage phasor is
//! expressed in a synchronous reference frame with the pre-fault voltage on
//! the d-axis.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default synchronous angular speed: 2*pi*60 rad/s.
pub const OMEGA_SYNC_60HZ: f64 = 2.0 * std::f64::consts::PI * 60.0;

/// Residual bound accepted for a solved motor equilibrium.
pub const EQUILIBRIUM_TOL: f64 = 1e-8;

/// ZIP static load coefficients (constant impedance / current / power).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZipParams {
    pub z_coeff: f64,
    pub i_coeff: f64,
    pub p_coeff: f64,
}

impl ZipParams {
    /// Builds a coefficient triple, renormalizing so the sum is 1 (anchoring
    /// the output to 1 pu at U = 1). Returns the normalized params and a flag
    /// telling whether the raw sum deviated by more than 1e-6.
    pub fn normalized(z: f64, i: f64, p: f64) -> Result<(Self, bool)> {
        if !(z.is_finite() && i.is_finite() && p.is_finite()) || z < 0.0 || i < 0.0 || p < 0.0 {
            return Err(Error::InvalidParam(format!(
                "ZIP coefficients must be finite and non-negative, got [{z}, {i}, {p}]"
            )));
        }
        let sum = z + i + p;
        if sum <= 0.0 {
            return Err(Error::InvalidParam(
                "ZIP coefficients must not all be zero".into(),
            ));
        }
        let warned = (sum - 1.0).abs() > 1e-6;
        Ok((
            ZipParams {
                z_coeff: z / sum,
                i_coeff: i / sum,
                p_coeff: p / sum,
            },
            warned,
        ))
    }

    /// Static power at voltage magnitude `u`: z*u^2 + i*u + p.
    pub fn power(&self, u: f64) -> f64 {
        self.z_coeff * u * u + self.i_coeff * u + self.p_coeff
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.z_coeff, self.i_coeff, self.p_coeff]
    }
}

/// Third-order induction-motor parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotorParams {
    /// Rotor open-circuit reactance X, pu.
    pub x_open: f64,
    /// Rotor transient reactance X', pu.
    pub x_transient: f64,
    /// Rotor open-circuit time constant, s.
    pub t_open: f64,
    /// Inertia time constant, s.
    pub inertia: f64,
    /// Mechanical torque, pu (constant, slip-independent).
    pub torque_mech: f64,
    /// Synchronous angular speed, rad/s.
    #[serde(default = "default_omega_sync")]
    pub omega_sync: f64,
}

fn default_omega_sync() -> f64 {
    OMEGA_SYNC_60HZ
}

/// Motor electrical state: internal EMF components and slip.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotorState {
    pub e_d: f64,
    pub e_q: f64,
    pub slip: f64,
}

impl MotorParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.x_open,
            self.x_transient,
            self.t_open,
            self.inertia,
            self.torque_mech,
            self.omega_sync,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParam(
                "motor parameters must be finite".into(),
            ));
        }
        if !(self.x_open > self.x_transient && self.x_transient > 0.0) {
            return Err(Error::InvalidParam(format!(
                "need x_open > x_transient > 0, got {} / {}",
                self.x_open, self.x_transient
            )));
        }
        if self.t_open <= 0.0 || self.inertia <= 0.0 || self.omega_sync <= 0.0 {
            return Err(Error::InvalidParam(
                "t_open, inertia and omega_sync must be positive".into(),
            ));
        }
        if self.torque_mech < 0.0 {
            return Err(Error::InvalidParam("torque_mech must be >= 0".into()));
        }
        Ok(())
    }

    /// EMF decay rate X / (T_open * X').
    fn decay(&self) -> f64 {
        self.x_open / (self.t_open * self.x_transient)
    }

    /// Voltage feed-in gain (X/X' - 1) / T_open.
    fn feed(&self) -> f64 {
        (self.x_open / self.x_transient - 1.0) / self.t_open
    }

    /// State derivatives (dE_d/dt, dE_q/dt, ds/dt) of the third-order model:
    ///
    /// dE_d/dt = -X/(T_open X') E_d + s w0 E_q + (X/X' - 1)/T_open U_d
    /// dE_q/dt = -X/(T_open X') E_q - s w0 E_d + (X/X' - 1)/T_open U_q
    /// ds/dt   = (T_m - (E_d U_q - E_q U_d)/X') / H
    pub fn derivatives(&self, st: &MotorState, u_d: f64, u_q: f64) -> MotorState {
        let a = self.decay();
        let b = self.feed();
        let w = st.slip * self.omega_sync;
        let torque_e = (st.e_d * u_q - st.e_q * u_d) / self.x_transient;
        MotorState {
            e_d: -a * st.e_d + w * st.e_q + b * u_d,
            e_q: -a * st.e_q - w * st.e_d + b * u_q,
            slip: (self.torque_mech - torque_e) / self.inertia,
        }
    }

    /// Motor output (P_dyn, Q_dyn) at the given terminal voltage:
    ///
    /// P = (E_d U_q - E_q U_d) / X'
    /// Q = (U_d^2 + U_q^2 - U_d E_d - U_q E_q) / X'
    pub fn output(&self, st: &MotorState, u_d: f64, u_q: f64) -> (f64, f64) {
        let p = (st.e_d * u_q - st.e_q * u_d) / self.x_transient;
        let q = (u_d * u_d + u_q * u_q - u_d * st.e_d - u_q * st.e_q) / self.x_transient;
        (p, q)
    }

    /// Slip at which the steady-state electrical torque peaks.
    pub fn peak_slip(&self) -> f64 {
        self.decay() / self.omega_sync
    }

    /// Maximum steady-state (pull-out) electrical torque at voltage `u`.
    pub fn pullout_torque(&self, u: f64) -> f64 {
        self.feed() * u * u / (2.0 * self.decay() * self.x_transient)
    }

    /// Steady-state electrical torque at slip `s`, voltage magnitude `u`.
    fn steady_torque(&self, s: f64, u: f64) -> f64 {
        let a = self.decay();
        let w = s * self.omega_sync;
        self.feed() * w * u * u / (self.x_transient * (a * a + w * w))
    }

    /// EMF equilibrium for a fixed slip and terminal voltage (the unique
    /// solution of dE_d/dt = dE_q/dt = 0).
    fn emf_equilibrium(&self, s: f64, u_d: f64, u_q: f64) -> (f64, f64) {
        let a = self.decay();
        let b = self.feed();
        let w = s * self.omega_sync;
        let det = a * a + w * w;
        let e_d = b * (a * u_d + w * u_q) / det;
        let e_q = b * (a * u_q - w * u_d) / det;
        (e_d, e_q)
    }

    /// Solves the motoring equilibrium at voltage magnitude `u` (voltage on
    /// the d-axis). The stable low-slip root of T_e(s) = T_m is selected by
    /// bisection on (0, peak_slip]; all three derivatives of the returned
    /// state are below [`EQUILIBRIUM_TOL`].
    pub fn init_steady_state(&self, u: f64) -> Result<MotorState> {
        self.validate()?;
        if u <= 0.0 {
            return Err(Error::InvalidParam("voltage must be positive".into()));
        }
        let t_max = self.pullout_torque(u);
        if self.torque_mech > t_max {
            return Err(Error::NoEquilibrium {
                voltage: u,
                torque_gap: self.torque_mech - t_max,
            });
        }
        // T_e is strictly increasing on [0, peak_slip], T_e(0) = 0.
        let mut lo = 0.0;
        let mut hi = self.peak_slip();
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.steady_torque(mid, u) < self.torque_mech {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < f64::EPSILON * self.peak_slip() {
                break;
            }
        }
        let s = 0.5 * (lo + hi);
        let (e_d, e_q) = self.emf_equilibrium(s, u, 0.0);
        Ok(MotorState { e_d, e_q, slip: s })
    }

    pub fn as_array(&self) -> [f64; 5] {
        [
            self.x_open,
            self.x_transient,
            self.t_open,
            self.inertia,
            self.torque_mech,
        ]
    }
}

/// Full composite load model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompositeLoadModel {
    /// Fraction of the nominal consumption served by the motor part, in [0,1].
    pub dyn_proportion: f64,
    pub active_static: ZipParams,
    pub reactive_static: ZipParams,
    pub motor: MotorParams,
    /// Nominal consumption at the pre-fault operating point, pu.
    pub nominal_p: f64,
    pub nominal_q: f64,
}

/// Pre-fault anchor quantities used to express both model parts as per-unit
/// shapes equal to 1 at the operating point.
#[derive(Clone, Copy, Debug)]
pub struct OperatingPoint {
    /// Pre-fault voltage magnitude.
    pub u0: f64,
    /// Motor steady state at `u0`.
    pub motor_state: MotorState,
    /// Motor steady outputs at `u0`.
    pub p_dyn0: f64,
    pub q_dyn0: f64,
    /// ZIP outputs at `u0` (snapped to exactly 1 when within 1e-12, so the
    /// static shape reduces to the plain ZIP polynomial at u0 = 1).
    pub zip_p0: f64,
    pub zip_q0: f64,
}

fn snap_unit(x: f64) -> f64 {
    if (x - 1.0).abs() < 1e-12 {
        1.0
    } else {
        x
    }
}

impl CompositeLoadModel {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.dyn_proportion) {
            return Err(Error::InvalidParam(format!(
                "dyn_proportion must lie in [0,1], got {}",
                self.dyn_proportion
            )));
        }
        if !self.nominal_p.is_finite() || !self.nominal_q.is_finite() || self.nominal_p <= 0.0 {
            return Err(Error::InvalidParam(
                "nominal powers must be finite with nominal_p > 0".into(),
            ));
        }
        for zip in [&self.active_static, &self.reactive_static] {
            // file ingestion renormalizes; direct construction must still be sane
            let sum = zip.z_coeff + zip.i_coeff + zip.p_coeff;
            if !sum.is_finite() || zip.z_coeff < 0.0 || zip.i_coeff < 0.0 || zip.p_coeff < 0.0 {
                return Err(Error::InvalidParam(
                    "ZIP coefficients must be finite and non-negative".into(),
                ));
            }
        }
        self.motor.validate()
    }

    /// Solves the pre-fault operating point at voltage `u0`.
    pub fn operating_point(&self, u0: f64) -> Result<OperatingPoint> {
        let motor_state = self.motor.init_steady_state(u0)?;
        let (p_dyn0, q_dyn0) = self.motor.output(&motor_state, u0, 0.0);
        Ok(OperatingPoint {
            u0,
            motor_state,
            p_dyn0,
            q_dyn0,
            zip_p0: snap_unit(self.active_static.power(u0)),
            zip_q0: snap_unit(self.reactive_static.power(u0)),
        })
    }

    /// Total consumption at voltage (u_d, u_q) with motor state `st`:
    /// each part is a shape normalized to 1 at the operating point, scaled by
    /// p*nominal and (1-p)*nominal respectively.
    pub fn power(&self, op: &OperatingPoint, st: &MotorState, u_d: f64, u_q: f64) -> (f64, f64) {
        let u = (u_d * u_d + u_q * u_q).sqrt();
        let (p_dyn, q_dyn) = self.motor.output(st, u_d, u_q);
        let p = self.dyn_proportion * self.nominal_p * (p_dyn / op.p_dyn0)
            + (1.0 - self.dyn_proportion)
                * self.nominal_p
                * (self.active_static.power(u) / op.zip_p0);
        let q = self.dyn_proportion * self.nominal_q * (q_dyn / op.q_dyn0)
            + (1.0 - self.dyn_proportion)
                * self.nominal_q
                * (self.reactive_static.power(u) / op.zip_q0);
        (p, q)
    }

    /// Raw parameter vector [p, Pas, Prs, Pd] used by parameter-space
    /// distances and perturbation.
    pub fn parameter_vector(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(12);
        v.push(self.dyn_proportion);
        v.extend_from_slice(&self.active_static.as_array());
        v.extend_from_slice(&self.reactive_static.as_array());
        v.extend_from_slice(&self.motor.as_array());
        v
    }
}
