//! The deterministic flight suites used for training, evaluation and replay.
//!
//! `suite` is the training/evaluation set (hover, square, circle, two random
//! waypoint flights, 64 s each at 100 Hz), slow cruising within about 1.5 m
//! of the origin. With `gamma = 1` the input-to-output gain of the network is
//! at most 1, so positions must stay in the near-linear range of tanh for the
//! previous position to be carried through. `stress_suite` flies tens of
//! metres out and much faster.
//! `replay_suite` contains noiseless flights that never appear in training;
//! the fusion replay differentiates their positions to synthesize the IMU.

use std::path::{Path, PathBuf};

use nalgebra::Vector3;

use crate::flightlog::{FlightLog, LogError, ParseOptions};
use crate::par::Execution;
use crate::uav_sim::{generate_flight, FlightConfig, FlightPlan, SimError};

/// Overrides the directory fixtures are read from and written to.
pub const FIXTURE_DIR_ENV: &str = "SNMNN_FIXTURE_DIR";

pub const SUITE_DURATION_S: f64 = 64.0;

#[derive(Clone, Debug)]
pub struct FixtureSpec {
    pub name: String,
    pub config: FlightConfig,
}

impl FixtureSpec {
    fn new(name: &str, plan: FlightPlan, seed: u64) -> Self {
        let mut config = FlightConfig::new(plan, SUITE_DURATION_S, seed);
        config.radius_m = 1.0;
        config.side_m = 1.5;
        config.speed_mps = 0.5;
        Self {
            name: name.to_string(),
            config,
        }
    }

    pub fn file_name(&self) -> String {
        format!("{}.csv", self.name)
    }

    pub fn generate(&self) -> Result<FlightLog, SimError> {
        generate_flight(&self.config)
    }
}

pub fn suite() -> Vec<FixtureSpec> {
    vec![
        FixtureSpec::new("hover", FlightPlan::Hover, 101),
        FixtureSpec::new("square", FlightPlan::Square, 102),
        FixtureSpec::new("circle", FlightPlan::Circle, 103),
        FixtureSpec::new("random-a", FlightPlan::RandomWaypoint, 104),
        FixtureSpec::new("random-b", FlightPlan::RandomWaypoint, 105),
    ]
}

pub fn stress_suite() -> Vec<FixtureSpec> {
    let offset = Vector3::new(150.0, -120.0, 0.0);
    let mut wide = FixtureSpec::new("stress-circle", FlightPlan::Circle, 201);
    wide.config.center_m = offset;
    wide.config.radius_m = 12.0;
    wide.config.speed_mps = 3.0;
    wide.config.altitude_m = 8.0;
    let mut far = FixtureSpec::new("stress-random", FlightPlan::RandomWaypoint, 202);
    far.config.center_m = offset;
    far.config.side_m = 20.0;
    far.config.speed_mps = 2.5;
    far.config.altitude_m = 6.0;
    vec![wide, far]
}

/// Noiseless flights with their own seeds, for the fusion replay.
pub fn replay_suite() -> Vec<FixtureSpec> {
    [
        ("replay-square", FlightPlan::Square, 301),
        ("replay-circle", FlightPlan::Circle, 302),
        ("replay-random", FlightPlan::RandomWaypoint, 303),
    ]
    .into_iter()
    .map(|(name, plan, seed)| {
        let mut s = FixtureSpec::new(name, plan, seed);
        s.config.duration_s = 40.0;
        s.config.noise_sigma_m = 0.0;
        s
    })
    .collect()
}

pub fn generate_all(specs: &[FixtureSpec], exec: Execution) -> Result<Vec<FlightLog>, SimError> {
    exec.map_slice(specs, FixtureSpec::generate)
        .into_iter()
        .collect()
}

/// `$SNMNN_FIXTURE_DIR` if set, otherwise `default`.
pub fn fixture_dir(default: &Path) -> PathBuf {
    std::env::var_os(FIXTURE_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| default.to_path_buf())
}

#[derive(Debug, thiserror::Error)]
pub enum FixtureError {
    #[error("{0}: {1}")]
    Log(PathBuf, LogError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{0}: {1}")]
    Io(PathBuf, std::io::Error),
}

/// Reads each fixture from `dir`, generating and writing the missing ones.
pub fn load_or_generate(
    dir: &Path,
    specs: &[FixtureSpec],
    exec: Execution,
) -> Result<Vec<FlightLog>, FixtureError> {
    exec.map_slice(specs, |spec| {
        let path = dir.join(spec.file_name());
        if path.exists() {
            return FlightLog::read_file(&path, ParseOptions::default())
                .map_err(|e| FixtureError::Log(path.clone(), e));
        }
        let log = spec.generate()?;
        std::fs::create_dir_all(dir).map_err(|e| FixtureError::Io(dir.to_path_buf(), e))?;
        log.write_file(&path)
            .map_err(|e| FixtureError::Io(path.clone(), e))?;
        Ok(log)
    })
    .into_iter()
    .collect()
}
