//! Position/velocity EKF fed by pseudo-GPS fixes.
//!
//! State is `[p; v]` in the local ENU frame of a fixed origin. Attitude is an
//! input: IMU specific force is rotated to ENU with the logged quaternion and
//! gravity is added back before a constant-acceleration step. Position fixes
//! arrive as geodetic coordinates and are converted to ENU before a
//! Joseph-form update.

use nalgebra::{
    Matrix3, Matrix3x6, Matrix6, Matrix6x3, SMatrix, SymmetricEigen, UnitQuaternion, Vector3,
    Vector6,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::config::{ConfigError, KeyValues};
use crate::flightlog::FlightLog;
use crate::geodesy::{self, EnuCoord, GeodesyError, GeodeticCoord};
use crate::mnn::{InputVector, MnnError, MnnNetwork};

pub const GRAVITY: f64 = 9.81;
/// Standard deviations above this are treated as this value.
pub const SIGMA_CAP: f64 = 1e12;

pub const CONFIG_KEYS: [&str; 11] = [
    "gps_every",
    "warmup_s",
    "sigma_gps",
    "accel_noise",
    "q_accel",
    "gate_sigma",
    "feedback",
    "imu_seed",
    "init_sigma_pos",
    "init_sigma_vel",
    "origin",
];

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("time step {0} s outside (0, 0.1]")]
    TimeStep(f64),
    #[error("quaternion norm {0} is not within 1e-6 of 1")]
    Quaternion(f64),
    #[error("sigma must be positive, got {0:?}")]
    Sigma([f64; 3]),
    #[error("log must have a uniform rate and at least 3 rows")]
    Log,
    #[error(transparent)]
    Geodesy(#[from] GeodesyError),
    #[error(transparent)]
    Network(#[from] MnnError),
    #[error("invalid fusion config: {0}")]
    Config(String),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EkfState {
    pub p_hat: Vector3<f64>,
    pub v_hat: Vector3<f64>,
    pub cov: Matrix6<f64>,
}

impl EkfState {
    pub fn new(p_hat: Vector3<f64>, v_hat: Vector3<f64>, sigma_p: f64, sigma_v: f64) -> Self {
        let mut d = Vector6::zeros();
        d.fixed_rows_mut::<3>(0).fill(sigma_p * sigma_p);
        d.fixed_rows_mut::<3>(3).fill(sigma_v * sigma_v);
        Self {
            p_hat,
            v_hat,
            cov: Matrix6::from_diagonal(&d),
        }
    }

    pub fn asymmetry(&self) -> f64 {
        (self.cov - self.cov.transpose()).abs().max()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.cov).eigenvalues.min()
    }

    /// Symmetric within 1e-10 and no eigenvalue below `-1e-9 * trace`.
    pub fn is_healthy(&self) -> bool {
        self.asymmetry() <= 1e-10 && self.min_eigenvalue() >= -1e-9 * self.cov.trace()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImuSample {
    pub t: f64,
    pub accel_body: Vector3<f64>,
    /// body to ENU, `[w, x, y, z]`
    pub quat: [f64; 4],
}

impl ImuSample {
    pub fn new(t: f64, accel_body: Vector3<f64>, quat: [f64; 4]) -> Result<Self, FusionError> {
        let n = quat.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !((n - 1.0).abs() <= 1e-6) {
            return Err(FusionError::Quaternion(n));
        }
        Ok(Self {
            t,
            accel_body,
            quat,
        })
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        let [w, x, y, z] = self.quat;
        UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(w, x, y, z))
            .to_rotation_matrix()
            .into_inner()
    }

    /// Acceleration in ENU with gravity restored.
    pub fn inertial_accel(&self) -> Vector3<f64> {
        self.rotation() * self.accel_body - Vector3::new(0.0, 0.0, GRAVITY)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GpsMeasurement {
    pub t: f64,
    pub zeta: GeodeticCoord,
    pub sigma: Vector3<f64>,
}

impl GpsMeasurement {
    pub fn new(t: f64, zeta: GeodeticCoord, sigma: Vector3<f64>) -> Result<Self, FusionError> {
        if !sigma.iter().all(|&s| s > 0.0) {
            return Err(FusionError::Sigma([sigma.x, sigma.y, sigma.z]));
        }
        Ok(Self { t, zeta, sigma })
    }
}

/// Double-integrator transition over `dt`.
pub fn transition(dt: f64) -> Matrix6<f64> {
    let mut f = Matrix6::identity();
    f.fixed_view_mut::<3, 3>(0, 3).fill_diagonal(dt);
    f
}

/// Process noise of a white acceleration with spectral density `q` per axis.
pub fn white_accel_noise(q: f64, dt: f64) -> Matrix6<f64> {
    let mut m = Matrix6::zeros();
    for i in 0..3 {
        m[(i, i)] = q * dt.powi(3) / 3.0;
        m[(i, i + 3)] = q * dt * dt / 2.0;
        m[(i + 3, i)] = q * dt * dt / 2.0;
        m[(i + 3, i + 3)] = q * dt;
    }
    m
}

pub fn predict(
    s: &EkfState,
    imu: &ImuSample,
    dt: f64,
    q_process: &Matrix6<f64>,
) -> Result<EkfState, FusionError> {
    if !(dt > 0.0 && dt <= 0.1) {
        return Err(FusionError::TimeStep(dt));
    }
    let a = imu.inertial_accel();
    let f = transition(dt);
    let cov = f * s.cov * f.transpose() + q_process;
    Ok(EkfState {
        p_hat: s.p_hat + s.v_hat * dt + a * (0.5 * dt * dt),
        v_hat: s.v_hat + a * dt,
        cov: symmetrize(&cov),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum UpdateStatus {
    /// Normalized innovation squared of the accepted fix.
    Accepted {
        nis: f64,
    },
    Gated {
        nis: f64,
    },
    NonFinite,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UpdateOutcome {
    pub state: EkfState,
    pub status: UpdateStatus,
}

impl UpdateOutcome {
    pub fn rejected(&self) -> bool {
        !matches!(self.status, UpdateStatus::Accepted { .. })
    }
}

/// Kalman update on the position block. `gate` is the Mahalanobis distance
/// above which the fix is rejected; `None` accepts everything finite.
pub fn update_gps(
    s: &EkfState,
    z: &GpsMeasurement,
    origin: &GeodeticCoord,
    gate: Option<f64>,
) -> UpdateOutcome {
    let unchanged = |status| UpdateOutcome { state: *s, status };
    let z_enu = geodesy::geodetic_to_enu(&z.zeta, origin).to_vector();
    let innovation = z_enu - s.p_hat;
    if !innovation.iter().all(|x| x.is_finite()) {
        return unchanged(UpdateStatus::NonFinite);
    }
    let sig = z.sigma.map(|x| x.min(SIGMA_CAP));
    let r = Matrix3::from_diagonal(&sig.component_mul(&sig));
    let mut h = Matrix3x6::zeros();
    h.fixed_view_mut::<3, 3>(0, 0).fill_diagonal(1.0);

    let s_mat = h * s.cov * h.transpose() + r;
    let Some(s_inv) = s_mat.try_inverse() else {
        return unchanged(UpdateStatus::NonFinite);
    };
    let nis = (innovation.transpose() * s_inv * innovation)[(0, 0)];
    if !nis.is_finite() {
        return unchanged(UpdateStatus::NonFinite);
    }
    if let Some(g) = gate {
        if nis.sqrt() > g {
            return unchanged(UpdateStatus::Gated { nis });
        }
    }
    let k: Matrix6x3<f64> = s.cov * h.transpose() * s_inv;
    let dx = k * innovation;
    let ikh = Matrix6::identity() - k * h;
    let cov = ikh * s.cov * ikh.transpose() + k * r * k.transpose();
    UpdateOutcome {
        state: EkfState {
            p_hat: s.p_hat + dx.fixed_rows::<3>(0),
            v_hat: s.v_hat + dx.fixed_rows::<3>(3),
            cov: symmetrize(&cov),
        },
        status: UpdateStatus::Accepted { nis },
    }
}

fn symmetrize<const N: usize>(m: &SMatrix<f64, N, N>) -> SMatrix<f64, N, N> {
    (m + m.transpose()) * 0.5
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Feedback {
    /// Network sees its own previous prediction. Free-running, the network
    /// settles towards a fixed point and loses the trajectory.
    Prediction,
    /// Network sees the previous fused estimate.
    Fused,
}

impl std::str::FromStr for Feedback {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "prediction" => Ok(Self::Prediction),
            "fused" => Ok(Self::Fused),
            other => Err(format!("expected prediction or fused, got `{other}`")),
        }
    }
}

/// Where the pseudo-GPS positions come from.
#[derive(Clone, Debug)]
pub enum PositionSource<'a> {
    Network(&'a MnnNetwork),
    /// Logged position, exact.
    Oracle,
    /// Logged position plus Gaussian noise of this standard deviation.
    WhiteNoise {
        sigma: f64,
        seed: u64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FusionConfig {
    /// A fix is fused on every `gps_every`-th row.
    pub gps_every: usize,
    /// No fixes are fused before this time, while the network memory settles.
    pub warmup_s: f64,
    /// Measurement standard deviation given to the filter, m.
    pub sigma_gps: f64,
    /// Gaussian noise added to the synthesized specific force, m/s^2.
    pub accel_noise: f64,
    /// White-acceleration spectral density of the process model.
    pub q_accel: f64,
    pub gate_sigma: Option<f64>,
    pub feedback: Feedback,
    pub imu_seed: u64,
    pub init_sigma_pos: f64,
    pub init_sigma_vel: f64,
    pub origin: GeodeticCoord,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            gps_every: 10,
            warmup_s: 0.5,
            // inflated well past the one-step error: network errors are
            // strongly correlated from fix to fix
            sigma_gps: 2.0,
            accel_noise: 0.0,
            q_accel: 1e-6,
            gate_sigma: Some(5.0),
            feedback: Feedback::Fused,
            imu_seed: 0,
            init_sigma_pos: 0.01,
            init_sigma_vel: 0.05,
            origin: default_origin(),
        }
    }
}

/// Replay origin: 47.3977 N, 8.5456 E, 488 m.
pub fn default_origin() -> GeodeticCoord {
    GeodeticCoord {
        phi: 47.3977f64.to_radians(),
        lambda: 8.5456f64.to_radians(),
        z_alt: 488.0,
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<(), FusionError> {
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if self.gps_every == 0 {
            return Err(FusionError::Config("gps_every must be at least 1".into()));
        }
        if !positive(self.sigma_gps)
            || !positive(self.init_sigma_pos)
            || !positive(self.init_sigma_vel)
        {
            return Err(FusionError::Config(
                "standard deviations must be positive".into(),
            ));
        }
        if !(self.accel_noise >= 0.0 && self.q_accel >= 0.0 && self.warmup_s >= 0.0) {
            return Err(FusionError::Config(
                "noise levels must be non-negative".into(),
            ));
        }
        if let Some(g) = self.gate_sigma {
            if !(g > 0.0) {
                return Err(FusionError::Config("gate_sigma must be positive".into()));
            }
        }
        Ok(())
    }

    /// `gate_sigma = 0` disables gating; `origin` is `lat_deg,lon_deg,alt_m`.
    pub fn apply(&mut self, kv: &KeyValues) -> Result<(), ConfigError> {
        kv.set_usize("gps_every", &mut self.gps_every)?;
        kv.set_f64("warmup_s", &mut self.warmup_s)?;
        kv.set_f64("sigma_gps", &mut self.sigma_gps)?;
        kv.set_f64("accel_noise", &mut self.accel_noise)?;
        kv.set_f64("q_accel", &mut self.q_accel)?;
        kv.set_u64("imu_seed", &mut self.imu_seed)?;
        kv.set_f64("init_sigma_pos", &mut self.init_sigma_pos)?;
        kv.set_f64("init_sigma_vel", &mut self.init_sigma_vel)?;
        if let Some(g) = kv.parse_value::<f64>("gate_sigma")? {
            self.gate_sigma = (g > 0.0).then_some(g);
        }
        if let Some(f) = kv.get("feedback") {
            self.feedback = f
                .parse()
                .map_err(|e: String| ConfigError::Value("feedback".into(), e))?;
        }
        if let Some(o) = kv.get_f64_list("origin", 3)? {
            self.origin = GeodeticCoord::from_degrees(o[0], o[1], o[2])
                .map_err(|e| ConfigError::Value("origin".into(), e.to_string()))?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FusionRow {
    pub t: f64,
    pub truth: [f64; 3],
    pub pred: [f64; 3],
    pub fused: [f64; 3],
}

#[derive(Clone, Debug, PartialEq)]
pub struct FusionReport {
    pub rows: Vec<FusionRow>,
    pub rmse_pred: f64,
    pub rmse_fused: f64,
    /// Times of fixes that were gated out or non-finite.
    pub rejected: Vec<f64>,
    /// NIS of every accepted fix.
    pub nis: Vec<f64>,
}

pub const REPORT_HEADER: &str =
    "t,truth_x,truth_y,truth_z,pred_x,pred_y,pred_z,fused_x,fused_y,fused_z";

impl FusionReport {
    pub fn rejected_count(&self) -> usize {
        self.rejected.len()
    }

    pub fn mean_nis(&self) -> f64 {
        self.nis.iter().sum::<f64>() / self.nis.len() as f64
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(self.rows.len() * 160);
        s.push_str(REPORT_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.t.to_string());
            for v in r.truth.iter().chain(&r.pred).chain(&r.fused) {
                s.push(',');
                s.push_str(&v.to_string());
            }
            s.push('\n');
        }
        s.push_str("# summary\n");
        s.push_str(&format!("# rmse_pred={}\n", self.rmse_pred));
        s.push_str(&format!("# rmse_fused={}\n", self.rmse_fused));
        s.push_str(&format!("# rejected_count={}\n", self.rejected_count()));
        let times: Vec<String> = self.rejected.iter().map(f64::to_string).collect();
        s.push_str(&format!("# rejected_t={}\n", times.join(";")));
        s
    }

    /// Reads the summary block of a report written by [`FusionReport::to_csv`].
    pub fn parse_summary(text: &str) -> Result<ReportSummary, String> {
        let mut rmse_pred = None;
        let mut rmse_fused = None;
        let mut rejected_count = None;
        for line in text.lines().filter_map(|l| l.strip_prefix("# ")) {
            if let Some((k, v)) = line.split_once('=') {
                let bad = |_| format!("bad summary value `{line}`");
                match k {
                    "rmse_pred" => rmse_pred = Some(v.parse::<f64>().map_err(bad)?),
                    "rmse_fused" => rmse_fused = Some(v.parse::<f64>().map_err(bad)?),
                    "rejected_count" => {
                        rejected_count = Some(
                            v.parse::<usize>()
                                .map_err(|_| format!("bad summary value `{line}`"))?,
                        )
                    }
                    _ => {}
                }
            }
        }
        match (rmse_pred, rmse_fused, rejected_count) {
            (Some(rmse_pred), Some(rmse_fused), Some(rejected_count)) => Ok(ReportSummary {
                rmse_pred,
                rmse_fused,
                rejected_count,
            }),
            _ => Err("report has no complete summary block".into()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReportSummary {
    pub rmse_pred: f64,
    pub rmse_fused: f64,
    pub rejected_count: usize,
}

/// Specific force along `log`, one sample per interval `[k, k+1)`, built from
/// second differences of the logged positions.
pub fn synthesize_imu(
    log: &FlightLog,
    noise: f64,
    seed: u64,
) -> Result<Vec<ImuSample>, FusionError> {
    let dt = step_of(log)?;
    let rows = log.rows();
    let n = rows.len();
    let pos: Vec<Vector3<f64>> = rows.iter().map(|r| r.position_vector()).collect();
    let central: Vec<Vector3<f64>> = (0..n)
        .map(|k| {
            let k = k.clamp(1, n - 2);
            (pos[k + 1] - 2.0 * pos[k] + pos[k - 1]) / (dt * dt)
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal =
        Normal::new(0.0, noise.max(0.0)).map_err(|e| FusionError::Config(e.to_string()))?;
    (0..n - 1)
        .map(|k| {
            let a = (central[k] + central[k + 1]) * 0.5 + Vector3::new(0.0, 0.0, GRAVITY);
            let proto = ImuSample::new(rows[k].t, Vector3::zeros(), rows[k].quat)?;
            let mut body = proto.rotation().transpose() * a;
            if noise > 0.0 {
                body += Vector3::from_fn(|_, _| normal.sample(&mut rng));
            }
            Ok(ImuSample {
                accel_body: body,
                ..proto
            })
        })
        .collect()
}

fn step_of(log: &FlightLog) -> Result<f64, FusionError> {
    if log.len() < 3 {
        return Err(FusionError::Log);
    }
    log.native_rate().map(|r| 1.0 / r).ok_or(FusionError::Log)
}

/// Replays `log` through the filter. Row 0 seeds the state; every later row
/// gets a predicted position from `source`, an IMU predict step, and on every
/// `gps_every`-th row a pseudo-GPS update.
pub fn replay(
    log: &FlightLog,
    source: PositionSource<'_>,
    cfg: &FusionConfig,
) -> Result<FusionReport, FusionError> {
    cfg.validate()?;
    let dt = step_of(log)?;
    let rows = log.rows();
    let imu = synthesize_imu(log, cfg.accel_noise, cfg.imu_seed)?;
    let q = white_accel_noise(cfg.q_accel, dt);
    let sigma = Vector3::from_element(cfg.sigma_gps);

    let p0 = rows[0].position_vector();
    let v0 = (rows[1].position_vector() - p0) / dt;
    let mut state = EkfState::new(p0, v0, cfg.init_sigma_pos, cfg.init_sigma_vel);

    let mut net = match &source {
        PositionSource::Network(n) => {
            let mut n = (*n).clone();
            n.reset_memory();
            Some(n)
        }
        _ => None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(match source {
        PositionSource::WhiteNoise { seed, .. } => seed,
        _ => 0,
    });
    let noise = match source {
        PositionSource::WhiteNoise { sigma, .. } => {
            Some(Normal::new(0.0, sigma).map_err(|e| FusionError::Config(e.to_string()))?)
        }
        _ => None,
    };

    let mut prev_pred = p0;
    let mut out = Vec::with_capacity(rows.len() - 1);
    let mut rejected = Vec::new();
    let mut nis = Vec::new();
    let (mut se_pred, mut se_fused) = (0.0, 0.0);

    for k in 1..rows.len() {
        let row = &rows[k];
        let truth = row.position_vector();
        let pred = match (&mut net, &noise) {
            (Some(net), _) => {
                let prev = match cfg.feedback {
                    Feedback::Prediction => prev_pred,
                    Feedback::Fused => state.p_hat,
                };
                let input = InputVector {
                    prev_position: [prev.x, prev.y, prev.z],
                    rpm_normalized: row.omega_bar,
                    orientation: row.quat,
                };
                net.forward_input(&input)?
            }
            (None, Some(normal)) => truth + Vector3::from_fn(|_, _| normal.sample(&mut rng)),
            (None, None) => truth,
        };
        prev_pred = pred;

        state = predict(&state, &imu[k - 1], dt, &q)?;
        if k % cfg.gps_every == 0 && row.t - rows[0].t >= cfg.warmup_s {
            let outcome = match geodesy::enu_to_geodetic(&EnuCoord::from_vector(&pred), &cfg.origin)
            {
                Ok(zeta) => {
                    let z = GpsMeasurement::new(row.t, zeta, sigma)?;
                    update_gps(&state, &z, &cfg.origin, cfg.gate_sigma)
                }
                Err(_) => UpdateOutcome {
                    state,
                    status: UpdateStatus::NonFinite,
                },
            };
            state = outcome.state;
            match outcome.status {
                UpdateStatus::Accepted { nis: v } => nis.push(v),
                _ => rejected.push(row.t),
            }
        }

        se_pred += (pred - truth).norm_squared();
        se_fused += (state.p_hat - truth).norm_squared();
        out.push(FusionRow {
            t: row.t,
            truth: [truth.x, truth.y, truth.z],
            pred: [pred.x, pred.y, pred.z],
            fused: [state.p_hat.x, state.p_hat.y, state.p_hat.z],
        });
    }
    let m = out.len() as f64;
    Ok(FusionReport {
        rows: out,
        rmse_pred: (se_pred / m).sqrt(),
        rmse_fused: (se_fused / m).sqrt(),
        rejected,
        nis,
    })
}
