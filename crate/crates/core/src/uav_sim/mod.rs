//! Rigid-body quadrotor simulator used to generate synthetic flight logs.
//!
//! Frame convention: the world frame is ENU with `z` up and `k = [0 0 1]`;
//! the body frame is forward-left-up. Gravity therefore enters as `-m g k`
//! and the rotor thrust as `+R k f_t`:
//!
//! ```text
//! x' = v                 m v' = -m g k + R k f_t + f~
//! R' = R [Omega]x        J Omega' + Omega x J Omega = tau + tau~
//! f_t = K_w (w1^2 + w2^2 + w3^2 + w4^2)
//! tau = [K_w l (w3^2 - w1^2), K_w l (w4^2 - w2^2), K_d (w2^2 + w4^2 - w1^2 - w3^2)]
//! ```
//!
//! The torque pattern implies a "+" layout seen from above: rotor 1 on the
//! right (-y), rotor 2 in front (+x), rotor 3 on the left (+y), rotor 4 at
//! the rear (-x). Rotors 2 and 4 spin clockwise, 1 and 3 counter-clockwise.

mod control;
mod plan;

use std::sync::Arc;

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use control::{mix, ControllerGains, PositionController, Reference};
pub use plan::{generate_flight, FlightConfig, FlightPlan, TrajectoryPlan};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("rotor {index} speed {value} rad/s outside [0, {max}]")]
    RotorRange { index: usize, value: f64, max: f64 },
    #[error("time step {0} s outside (0, 0.1]")]
    TimeStep(f64),
    #[error("state became non-finite at step {step}")]
    NonFinite { step: usize },
    #[error("controller diverged at t = {t:.3} s: position error {error:.3} m exceeds {bound} m")]
    Diverged { t: f64, error: f64, bound: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct UavParams {
    /// kg
    pub mass: f64,
    /// kg m^2
    pub inertia: Matrix3<f64>,
    /// m
    pub arm_length: f64,
    /// N s^2
    pub k_omega: f64,
    /// N m s^2
    pub k_d: f64,
    /// m/s^2
    pub gravity: f64,
    /// rad/s
    pub omega_max: f64,
}

impl Default for UavParams {
    /// A 1.1 kg racer-class frame with 125 mm arms.
    fn default() -> Self {
        Self {
            mass: 1.1,
            inertia: Matrix3::from_diagonal(&Vector3::new(0.005, 0.005, 0.009)),
            arm_length: 0.125,
            k_omega: 1.2e-6,
            k_d: 2.0e-8,
            gravity: 9.81,
            omega_max: 3000.0,
        }
    }
}

impl UavParams {
    pub fn validate(&self) -> Result<(), SimError> {
        let positive = [
            ("mass", self.mass),
            ("arm_length", self.arm_length),
            ("k_omega", self.k_omega),
            ("k_d", self.k_d),
            ("omega_max", self.omega_max),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SimError::Config(format!("{name} must be positive")));
            }
        }
        let j = &self.inertia;
        if (j - j.transpose()).abs().max() > 1e-12 || j.cholesky().is_none() {
            return Err(SimError::Config(
                "inertia must be symmetric positive definite".into(),
            ));
        }
        Ok(())
    }

    /// Rotor speed that balances gravity when all four rotors spin equally.
    pub fn hover_omega(&self) -> f64 {
        (self.mass * self.gravity / (4.0 * self.k_omega)).sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UavState {
    pub x: Vector3<f64>,
    pub v: Vector3<f64>,
    /// Body to world rotation.
    pub r: Matrix3<f64>,
    /// Body angular velocity, rad/s.
    pub omega: Vector3<f64>,
}

impl UavState {
    pub fn at_rest(x: Vector3<f64>) -> Self {
        Self {
            x,
            v: Vector3::zeros(),
            r: Matrix3::identity(),
            omega: Vector3::zeros(),
        }
    }

    /// Unit quaternion `(w, x, y, z)` of `R` with `w >= 0`.
    pub fn quaternion(&self) -> [f64; 4] {
        let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(self.r));
        let s = if q.w < 0.0 { -1.0 } else { 1.0 };
        [s * q.w, s * q.i, s * q.j, s * q.k]
    }

    fn is_finite(&self) -> bool {
        self.x
            .iter()
            .chain(self.v.iter())
            .chain(self.r.iter())
            .chain(self.omega.iter())
            .all(|x| x.is_finite())
    }
}

/// Bounded external force and torque as functions of time.
#[derive(Clone)]
pub struct DisturbanceModel {
    f_tilde: Arc<dyn Fn(f64) -> Vector3<f64> + Send + Sync>,
    tau_tilde: Arc<dyn Fn(f64) -> Vector3<f64> + Send + Sync>,
    force_cap: f64,
    torque_cap: f64,
}

impl std::fmt::Debug for DisturbanceModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DisturbanceModel")
            .field("force_cap", &self.force_cap)
            .field("torque_cap", &self.torque_cap)
            .finish()
    }
}

impl DisturbanceModel {
    pub fn new<F, T>(f_tilde: F, tau_tilde: T, force_cap: f64, torque_cap: f64) -> Self
    where
        F: Fn(f64) -> Vector3<f64> + Send + Sync + 'static,
        T: Fn(f64) -> Vector3<f64> + Send + Sync + 'static,
    {
        Self {
            f_tilde: Arc::new(f_tilde),
            tau_tilde: Arc::new(tau_tilde),
            force_cap,
            torque_cap,
        }
    }

    pub fn none() -> Self {
        Self::new(|_| Vector3::zeros(), |_| Vector3::zeros(), 0.0, 0.0)
    }

    /// Sum of three seeded sinusoids per axis, a smooth stand-in for light wind.
    pub fn gusts(seed: u64, force_cap: f64, torque_cap: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let mut draw = |cap: f64| -> Vec<(f64, f64, f64, usize)> {
            (0..9)
                .map(|i| {
                    (
                        cap / 3.0f64.sqrt() / 3.0 * rng.random_range(0.3..1.0),
                        rng.random_range(0.05..1.5),
                        rng.random_range(0.0..std::f64::consts::TAU),
                        i % 3,
                    )
                })
                .collect()
        };
        let fc = draw(force_cap);
        let tc = draw(torque_cap);
        let eval = |terms: &[(f64, f64, f64, usize)], t: f64| {
            let mut v = Vector3::zeros();
            for &(amp, freq, phase, axis) in terms {
                v[axis] += amp * (std::f64::consts::TAU * freq * t + phase).sin();
            }
            v
        };
        Self::new(
            move |t| eval(&fc, t),
            move |t| eval(&tc, t),
            force_cap,
            torque_cap,
        )
    }

    pub fn force(&self, t: f64) -> Vector3<f64> {
        clamp_norm((self.f_tilde)(t), self.force_cap)
    }

    pub fn torque(&self, t: f64) -> Vector3<f64> {
        clamp_norm((self.tau_tilde)(t), self.torque_cap)
    }
}

fn clamp_norm(v: Vector3<f64>, cap: f64) -> Vector3<f64> {
    if !v.iter().all(|x| x.is_finite()) {
        return Vector3::zeros();
    }
    let n = v.norm();
    if n > cap {
        v * (cap / n)
    } else {
        v
    }
}

/// Collective thrust and body torque for rotor speeds in rad/s.
pub fn thrust_torque(
    omega: &[f64; 4],
    params: &UavParams,
) -> Result<(f64, Vector3<f64>), SimError> {
    for (index, &w) in omega.iter().enumerate() {
        if !(0.0..=params.omega_max).contains(&w) {
            return Err(SimError::RotorRange {
                index,
                value: w,
                max: params.omega_max,
            });
        }
    }
    let s = omega.map(|w| w * w);
    let kl = params.k_omega * params.arm_length;
    let f_t = params.k_omega * (s[0] + s[1] + s[2] + s[3]);
    let tau = Vector3::new(
        kl * (s[2] - s[0]),
        kl * (s[3] - s[1]),
        params.k_d * (s[1] + s[3] - s[0] - s[2]),
    );
    Ok((f_t, tau))
}

pub fn hat(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

struct Derivative {
    dx: Vector3<f64>,
    dv: Vector3<f64>,
    dr: Matrix3<f64>,
    domega: Vector3<f64>,
}

fn derivative(
    s: &UavState,
    f_t: f64,
    tau: &Vector3<f64>,
    force: &Vector3<f64>,
    torque: &Vector3<f64>,
    params: &UavParams,
    j_inv: &Matrix3<f64>,
) -> Derivative {
    let k = Vector3::z();
    let dv = -params.gravity * k + (s.r * k) * (f_t / params.mass) + force / params.mass;
    let j_omega = params.inertia * s.omega;
    let domega = j_inv * (tau + torque - s.omega.cross(&j_omega));
    Derivative {
        dx: s.v,
        dv,
        dr: s.r * hat(&s.omega),
        domega,
    }
}

fn advance(s: &UavState, d: &Derivative, h: f64) -> UavState {
    UavState {
        x: s.x + d.dx * h,
        v: s.v + d.dv * h,
        r: s.r + d.dr * h,
        omega: s.omega + d.domega * h,
    }
}

/// Gram-Schmidt on the columns of `r`.
pub fn orthonormalize(r: &Matrix3<f64>) -> Matrix3<f64> {
    let c0 = r.column(0).normalize();
    let c1 = r.column(1) - c0 * c0.dot(&r.column(1));
    let c1 = c1.normalize();
    let c2 = c0.cross(&c1);
    Matrix3::from_columns(&[c0, c1, c2])
}

/// One RK4 step of length `dt` with rotor speeds and disturbances held at time `t`.
pub fn step(
    state: &UavState,
    omega: &[f64; 4],
    params: &UavParams,
    disturbance: &DisturbanceModel,
    t: f64,
    dt: f64,
) -> Result<UavState, SimError> {
    if !(dt > 0.0 && dt <= 0.1) {
        return Err(SimError::TimeStep(dt));
    }
    let (f_t, tau) = thrust_torque(omega, params)?;
    let j_inv = params
        .inertia
        .try_inverse()
        .ok_or_else(|| SimError::Config("singular inertia".into()))?;
    let force = disturbance.force(t);
    let torque = disturbance.torque(t);
    let d = |s: &UavState| derivative(s, f_t, &tau, &force, &torque, params, &j_inv);

    let k1 = d(state);
    let k2 = d(&advance(state, &k1, dt / 2.0));
    let k3 = d(&advance(state, &k2, dt / 2.0));
    let k4 = d(&advance(state, &k3, dt));
    let w = dt / 6.0;
    let next = UavState {
        x: state.x + (k1.dx + 2.0 * k2.dx + 2.0 * k3.dx + k4.dx) * w,
        v: state.v + (k1.dv + 2.0 * k2.dv + 2.0 * k3.dv + k4.dv) * w,
        r: orthonormalize(&(state.r + (k1.dr + 2.0 * k2.dr + 2.0 * k3.dr + k4.dr) * w)),
        omega: state.omega + (k1.domega + 2.0 * k2.domega + 2.0 * k3.domega + k4.domega) * w,
    };
    if !next.is_finite() {
        return Err(SimError::NonFinite { step: 0 });
    }
    Ok(next)
}
