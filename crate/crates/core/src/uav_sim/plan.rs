use std::str::FromStr;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{
    step, ControllerGains, DisturbanceModel, PositionController, Reference, SimError, UavParams,
    UavState,
};
use crate::config::{ConfigError, KeyValues};
use crate::flightlog::{FlightLog, LogRow};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlightPlan {
    Hover,
    Square,
    Circle,
    RandomWaypoint,
}

impl FromStr for FlightPlan {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hover" => Ok(Self::Hover),
            "square" => Ok(Self::Square),
            "circle" => Ok(Self::Circle),
            "random" | "random-waypoint" | "random_waypoint" => Ok(Self::RandomWaypoint),
            other => Err(format!(
                "unknown plan `{other}` (expected hover, square, circle or random)"
            )),
        }
    }
}

impl FlightPlan {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Hover => "hover",
            Self::Square => "square",
            Self::Circle => "circle",
            Self::RandomWaypoint => "random",
        }
    }
}

#[derive(Clone, Debug)]
pub struct FlightConfig {
    pub plan: FlightPlan,
    pub duration_s: f64,
    pub radius_m: f64,
    pub side_m: f64,
    pub seed: u64,
    /// Per-axis standard deviation of additive RTK-style position noise.
    pub noise_sigma_m: f64,
    /// Cruise speed along the plan.
    pub speed_mps: f64,
    pub altitude_m: f64,
    /// Plan center in the ENU frame.
    pub center_m: Vector3<f64>,
    pub gust_force_n: f64,
    pub gust_torque_nm: f64,
    /// Physics time step.
    pub dt: f64,
    pub log_rate_hz: f64,
    pub divergence_bound_m: f64,
    pub params: UavParams,
    pub gains: ControllerGains,
}

impl Default for FlightConfig {
    fn default() -> Self {
        Self {
            plan: FlightPlan::Hover,
            duration_s: 30.0,
            radius_m: 2.0,
            side_m: 3.0,
            seed: 0,
            noise_sigma_m: 0.01,
            speed_mps: 1.0,
            altitude_m: 1.0,
            center_m: Vector3::zeros(),
            gust_force_n: 0.3,
            gust_torque_nm: 0.005,
            dt: 1e-3,
            log_rate_hz: 100.0,
            divergence_bound_m: 5.0,
            params: UavParams::default(),
            gains: ControllerGains::default(),
        }
    }
}

impl FlightConfig {
    pub fn new(plan: FlightPlan, duration_s: f64, seed: u64) -> Self {
        Self {
            plan,
            duration_s,
            seed,
            ..Self::default()
        }
    }

    /// Applies recognised keys from a key=value map on top of `self`.
    pub fn apply(&mut self, kv: &KeyValues) -> Result<(), ConfigError> {
        if let Some(plan) = kv.get("plan") {
            self.plan = plan
                .parse()
                .map_err(|e: String| ConfigError::Value("plan".into(), e))?;
        }
        kv.set_f64("duration_s", &mut self.duration_s)?;
        kv.set_f64("radius_m", &mut self.radius_m)?;
        kv.set_f64("side_m", &mut self.side_m)?;
        kv.set_u64("seed", &mut self.seed)?;
        kv.set_f64("noise_sigma_m", &mut self.noise_sigma_m)?;
        kv.set_f64("speed_mps", &mut self.speed_mps)?;
        kv.set_f64("altitude_m", &mut self.altitude_m)?;
        kv.set_f64("gust_force_n", &mut self.gust_force_n)?;
        kv.set_f64("gust_torque_nm", &mut self.gust_torque_nm)?;
        kv.set_f64("log_rate_hz", &mut self.log_rate_hz)?;
        if let Some(c) = kv.get_f64_list("center_m", 3)? {
            self.center_m = Vector3::new(c[0], c[1], c[2]);
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.params.validate()?;
        let checks = [
            ("duration_s", self.duration_s > 0.0),
            ("radius_m", self.radius_m > 0.0),
            ("side_m", self.side_m > 0.0),
            ("noise_sigma_m", self.noise_sigma_m >= 0.0),
            ("speed_mps", self.speed_mps > 0.0),
            ("gust_force_n", self.gust_force_n >= 0.0),
            ("gust_torque_nm", self.gust_torque_nm >= 0.0),
            ("dt", self.dt > 0.0 && self.dt <= 0.1),
            ("log_rate_hz", self.log_rate_hz > 0.0),
            ("divergence_bound_m", self.divergence_bound_m > 0.0),
        ];
        for (name, ok) in checks {
            if !ok {
                return Err(SimError::Config(format!("{name} out of range")));
            }
        }
        let ratio = 1.0 / (self.dt * self.log_rate_hz);
        if ratio < 1.0 - 1e-9 || (ratio - ratio.round()).abs() > 1e-6 {
            return Err(SimError::Config(
                "log_rate_hz must divide the physics rate".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Leg {
    start: f64,
    duration: f64,
    from: Vector3<f64>,
    to: Vector3<f64>,
}

/// Precomputed reference trajectory for a flight plan.
#[derive(Clone, Debug)]
pub enum TrajectoryPlan {
    Hover(Vector3<f64>),
    Circle {
        center: Vector3<f64>,
        radius: f64,
        rate: f64,
        ramp: f64,
    },
    Legs(Vec<Leg>),
}

impl TrajectoryPlan {
    pub fn new(cfg: &FlightConfig) -> Self {
        let base = cfg.center_m + Vector3::new(0.0, 0.0, cfg.altitude_m);
        match cfg.plan {
            FlightPlan::Hover => Self::Hover(base),
            FlightPlan::Circle => Self::Circle {
                center: base,
                radius: cfg.radius_m,
                rate: cfg.speed_mps / cfg.radius_m,
                ramp: 2.0,
            },
            FlightPlan::Square => {
                let h = cfg.side_m / 2.0;
                let corners = [
                    Vector3::new(-h, -h, 0.0),
                    Vector3::new(h, -h, 0.0),
                    Vector3::new(h, h, 0.0),
                    Vector3::new(-h, h, 0.0),
                ];
                let mut points = vec![];
                let laps =
                    (cfg.duration_s * cfg.speed_mps / (4.0 * cfg.side_m)).ceil() as usize + 1;
                for _ in 0..laps {
                    points.extend(corners.iter().map(|c| base + c));
                }
                points.push(base + corners[0]);
                Self::Legs(legs_through(&points, cfg.speed_mps, 0.5))
            }
            FlightPlan::RandomWaypoint => {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5157));
                let extent = cfg.radius_m.max(cfg.side_m / 2.0);
                let speed = cfg.speed_mps * 0.8;
                let mut points = vec![base];
                let mut t = 0.0;
                while t < cfg.duration_s + 1.0 {
                    let p = base
                        + Vector3::new(
                            rng.random_range(-extent..extent),
                            rng.random_range(-extent..extent),
                            rng.random_range(-0.5..0.5),
                        );
                    t += leg_duration((p - points[points.len() - 1]).norm(), speed) + 0.3;
                    points.push(p);
                }
                Self::Legs(legs_through(&points, speed, 0.3))
            }
        }
    }

    pub fn reference(&self, t: f64) -> Reference {
        match self {
            Self::Hover(p) => Reference::fixed(*p),
            Self::Circle {
                center,
                radius,
                rate,
                ramp,
            } => {
                let (theta, dtheta, ddtheta) = if t < *ramp {
                    (rate * t * t / (2.0 * ramp), rate * t / ramp, rate / ramp)
                } else {
                    (rate * (t - ramp / 2.0), *rate, 0.0)
                };
                let (s, c) = theta.sin_cos();
                Reference {
                    position: center + Vector3::new(radius * c, radius * s, 0.0),
                    velocity: Vector3::new(-s, c, 0.0) * *radius * dtheta,
                    acceleration: Vector3::new(-s, c, 0.0) * *radius * ddtheta
                        - Vector3::new(c, s, 0.0) * *radius * dtheta * dtheta,
                    yaw: 0.0,
                }
            }
            Self::Legs(legs) => {
                let idx = legs.partition_point(|l| l.start <= t).saturating_sub(1);
                let leg = &legs[idx];
                let tau = ((t - leg.start) / leg.duration).clamp(0.0, 1.0);
                let (s, ds, dds) = min_jerk(tau);
                let d = leg.to - leg.from;
                let moving = t - leg.start <= leg.duration;
                Reference {
                    position: leg.from + d * s,
                    velocity: if moving {
                        d * (ds / leg.duration)
                    } else {
                        Vector3::zeros()
                    },
                    acceleration: if moving {
                        d * (dds / (leg.duration * leg.duration))
                    } else {
                        Vector3::zeros()
                    },
                    yaw: 0.0,
                }
            }
        }
    }
}

fn leg_duration(distance: f64, peak_speed: f64) -> f64 {
    // minimum-jerk peak speed is 1.875 * distance / duration
    (1.875 * distance / peak_speed).max(0.5)
}

fn legs_through(points: &[Vector3<f64>], speed: f64, dwell: f64) -> Vec<Leg> {
    let mut legs = Vec::with_capacity(points.len());
    let mut t = 0.0;
    for w in points.windows(2) {
        let duration = leg_duration((w[1] - w[0]).norm(), speed);
        legs.push(Leg {
            start: t,
            duration,
            from: w[0],
            to: w[1],
        });
        t += duration + dwell;
    }
    legs
}

fn min_jerk(tau: f64) -> (f64, f64, f64) {
    let t2 = tau * tau;
    let t3 = t2 * tau;
    (
        10.0 * t3 - 15.0 * t3 * tau + 6.0 * t3 * t2,
        30.0 * t2 - 60.0 * t3 + 30.0 * t2 * t2,
        60.0 * tau - 180.0 * t2 + 120.0 * t3,
    )
}

/// Closed-loop simulation of `cfg.plan`, logged at `cfg.log_rate_hz`.
pub fn generate_flight(cfg: &FlightConfig) -> Result<FlightLog, SimError> {
    cfg.validate()?;
    let params = &cfg.params;
    let plan = TrajectoryPlan::new(cfg);
    let controller = PositionController::new(cfg.gains);
    let disturbance = if cfg.gust_force_n > 0.0 || cfg.gust_torque_nm > 0.0 {
        DisturbanceModel::gusts(cfg.seed, cfg.gust_force_n, cfg.gust_torque_nm)
    } else {
        DisturbanceModel::none()
    };
    let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = (cfg.noise_sigma_m > 0.0)
        .then(|| Normal::new(0.0, cfg.noise_sigma_m).expect("positive sigma"));

    let decimation = (1.0 / (cfg.dt * cfg.log_rate_hz)).round() as usize;
    let steps = (cfg.duration_s / cfg.dt).round() as usize;
    let mut state = UavState::at_rest(plan.reference(0.0).position);
    let mut rows = Vec::with_capacity(steps / decimation + 1);

    for k in 0..=steps {
        let t = k as f64 * cfg.dt;
        let reference = plan.reference(t);
        let error = (state.x - reference.position).norm();
        if error > cfg.divergence_bound_m {
            return Err(SimError::Diverged {
                t,
                error,
                bound: cfg.divergence_bound_m,
            });
        }
        let omega = controller.rotor_speeds(&state, &reference, params);
        if k % decimation == 0 {
            let mut position = [state.x.x, state.x.y, state.x.z];
            if let Some(n) = &noise {
                position
                    .iter_mut()
                    .for_each(|p| *p += n.sample(&mut noise_rng));
            }
            rows.push(LogRow {
                t: (k / decimation) as f64 / cfg.log_rate_hz,
                omega_bar: omega.map(|w| (w / params.omega_max).clamp(0.0, 1.0)),
                position,
                quat: state.quaternion(),
            });
        }
        if k == steps {
            break;
        }
        state = step(&state, &omega, params, &disturbance, t, cfg.dt).map_err(|e| match e {
            SimError::NonFinite { .. } => SimError::NonFinite { step: k },
            other => other,
        })?;
    }
    FlightLog::new(rows).map_err(|e| SimError::Config(format!("generated log invalid: {e}")))
}
