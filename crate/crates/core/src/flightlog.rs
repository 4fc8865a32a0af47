//! Flight log CSV ingestion, resampling and train/test splitting.
//!
//! The CSV schema is one header row followed by one row per sample:
//!
//! ```text
//! t,w1,w2,w3,w4,x,y,z,qw,qx,qy,qz
//! ```
//!
//! `t` in seconds (strictly increasing), `w1..w4` normalized rotor speeds in
//! [0, 1], `x,y,z` ENU position in meters, `qw..qz` the body-to-world unit
//! quaternion. Numbers are written in shortest round-trip decimal form, so
//! parse followed by write reproduces a canonical file byte for byte.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::mnn::InputVector;

pub const COLUMNS: [&str; 12] = [
    "t", "w1", "w2", "w3", "w4", "x", "y", "z", "qw", "qx", "qy", "qz",
];

const QUAT_TOL: f64 = 1e-6;
const TIME_MATCH_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("empty file: missing header")]
    Empty,
    #[error("header is missing column `{0}`")]
    MissingColumn(String),
    #[error("line {line}: expected {expected} fields, found {found}")]
    FieldCount {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}, column `{column}`: cannot parse `{text}` as a number")]
    BadNumber {
        line: usize,
        column: String,
        text: String,
    },
    #[error("row {row}: time {t} does not increase (previous {prev})")]
    NonMonotonicTime { row: usize, t: f64, prev: f64 },
    #[error("row {row}, column `{column}`: normalized rpm {value} outside [0, 1]")]
    RpmRange {
        row: usize,
        column: String,
        value: f64,
    },
    #[error("row {row}: quaternion norm {norm} is not 1")]
    Quaternion { row: usize, norm: f64 },
    #[error("row {row}: non-finite value in column `{column}`")]
    NonFinite { row: usize, column: String },
    #[error("log needs at least {needed} samples, has {found}")]
    TooShort { needed: usize, found: usize },
    #[error("requested rate {requested} Hz exceeds native rate {native} Hz")]
    RateTooHigh { requested: f64, native: f64 },
    #[error("resampling window is empty")]
    EmptyWindow,
    #[error("invalid option: {0}")]
    Option(String),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub omega_bar: [f64; 4],
    pub position: [f64; 3],
    pub quat: [f64; 4],
}

impl LogRow {
    fn fields(&self) -> [f64; 12] {
        let mut f = [0.0; 12];
        f[0] = self.t;
        f[1..5].copy_from_slice(&self.omega_bar);
        f[5..8].copy_from_slice(&self.position);
        f[8..12].copy_from_slice(&self.quat);
        f
    }

    fn from_fields(f: &[f64; 12]) -> Self {
        Self {
            t: f[0],
            omega_bar: [f[1], f[2], f[3], f[4]],
            position: [f[5], f[6], f[7]],
            quat: [f[8], f[9], f[10], f[11]],
        }
    }

    pub fn position_vector(&self) -> Vector3<f64> {
        Vector3::from(self.position)
    }
}

/// Validated time-ordered flight record stream.
#[derive(Clone, Debug, PartialEq)]
pub struct FlightLog {
    rows: Vec<LogRow>,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ParseOptions {
    /// Treat `w1..w4` as raw rotor speeds and divide by this maximum.
    pub raw_omega_max: Option<f64>,
}

impl FlightLog {
    pub fn new(rows: Vec<LogRow>) -> Result<Self, LogError> {
        for (i, row) in rows.iter().enumerate() {
            validate_row(i + 1, row)?;
            if i > 0 && !(row.t > rows[i - 1].t) {
                return Err(LogError::NonMonotonicTime {
                    row: i + 1,
                    t: row.t,
                    prev: rows[i - 1].t,
                });
            }
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[LogRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn duration(&self) -> f64 {
        match (self.rows.first(), self.rows.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }

    /// Mean sample rate implied by the first and last timestamps.
    pub fn native_rate(&self) -> Option<f64> {
        (self.rows.len() >= 2 && self.duration() > 0.0)
            .then(|| (self.rows.len() - 1) as f64 / self.duration())
    }

    pub fn slice(&self, start: usize, end: usize) -> FlightLog {
        FlightLog {
            rows: self.rows[start..end].to_vec(),
        }
    }

    pub fn parse<R: Read>(reader: R, opts: ParseOptions) -> Result<Self, LogError> {
        if let Some(max) = opts.raw_omega_max {
            if !(max > 0.0 && max.is_finite()) {
                return Err(LogError::Option(format!(
                    "omega_max must be positive, got {max}"
                )));
            }
        }
        let mut lines = BufReader::new(reader).lines();
        let header = match lines.next() {
            Some(h) => h?,
            None => return Err(LogError::Empty),
        };
        let names: Vec<&str> = header
            .trim_end_matches('\r')
            .split(',')
            .map(str::trim)
            .collect();
        let mut index = [0usize; 12];
        for (slot, col) in index.iter_mut().zip(COLUMNS) {
            *slot = names
                .iter()
                .position(|n| *n == col)
                .ok_or_else(|| LogError::MissingColumn(col.to_string()))?;
        }

        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            let line_no = i + 2;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').map(str::trim).collect();
            if parts.len() != names.len() {
                return Err(LogError::FieldCount {
                    line: line_no,
                    expected: names.len(),
                    found: parts.len(),
                });
            }
            let mut f = [0.0; 12];
            for (k, &col) in index.iter().enumerate() {
                f[k] = parts[col].parse::<f64>().map_err(|_| LogError::BadNumber {
                    line: line_no,
                    column: COLUMNS[k].to_string(),
                    text: parts[col].to_string(),
                })?;
            }
            if let Some(max) = opts.raw_omega_max {
                for w in &mut f[1..5] {
                    *w /= max;
                }
            }
            rows.push(LogRow::from_fields(&f));
        }
        Self::new(rows)
    }

    pub fn parse_str(text: &str) -> Result<Self, LogError> {
        Self::parse(text.as_bytes(), ParseOptions::default())
    }

    pub fn read_file(path: &Path, opts: ParseOptions) -> Result<Self, LogError> {
        Self::parse(std::fs::File::open(path)?, opts)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(self.rows.len() * 120);
        s.push_str(&COLUMNS.join(","));
        s.push('\n');
        for row in &self.rows {
            for (k, v) in row.fields().iter().enumerate() {
                if k > 0 {
                    s.push(',');
                }
                // normalise -0 so canonical files never carry a sign on zero
                let v = if *v == 0.0 { 0.0 } else { *v };
                write!(s, "{v}").expect("write to string");
            }
            s.push('\n');
        }
        s
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(self.to_csv().as_bytes())
    }

    pub fn write_file(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_csv())
    }

    /// Uniform-grid resampling starting at the first timestamp.
    ///
    /// Grid points that coincide with a sample (within 1e-9 s) copy it
    /// verbatim; others interpolate linearly, with slerp for the quaternion.
    pub fn resample(&self, rate_hz: f64) -> Result<FlightLog, LogError> {
        if !(rate_hz > 0.0 && rate_hz.is_finite()) {
            return Err(LogError::Option(format!(
                "rate must be positive, got {rate_hz}"
            )));
        }
        let native = self.native_rate().ok_or(LogError::EmptyWindow)?;
        if rate_hz > native * (1.0 + 1e-9) {
            return Err(LogError::RateTooHigh {
                requested: rate_hz,
                native,
            });
        }
        let t0 = self.rows[0].t;
        let span = self.duration();
        let count = (span * rate_hz + 1e-9).floor() as usize + 1;

        let mut out = Vec::with_capacity(count);
        let mut i = 0;
        for k in 0..count {
            let t = t0 + k as f64 / rate_hz;
            let tol = TIME_MATCH_TOL * t.abs().max(1.0);
            while i + 1 < self.rows.len() && self.rows[i + 1].t <= t + tol {
                i += 1;
            }
            let a = &self.rows[i];
            if (a.t - t).abs() <= tol {
                out.push(*a);
                continue;
            }
            if i + 1 >= self.rows.len() {
                break;
            }
            let b = &self.rows[i + 1];
            let s = (t - a.t) / (b.t - a.t);
            out.push(LogRow {
                t,
                omega_bar: lerp4(&a.omega_bar, &b.omega_bar, s),
                position: lerp3(&a.position, &b.position, s),
                quat: slerp(&a.quat, &b.quat, s),
            });
        }
        FlightLog::new(out)
    }
}

fn validate_row(row: usize, r: &LogRow) -> Result<(), LogError> {
    for (k, v) in r.fields().iter().enumerate() {
        if !v.is_finite() {
            return Err(LogError::NonFinite {
                row,
                column: COLUMNS[k].to_string(),
            });
        }
    }
    for (k, &w) in r.omega_bar.iter().enumerate() {
        if !(0.0..=1.0).contains(&w) {
            return Err(LogError::RpmRange {
                row,
                column: COLUMNS[1 + k].to_string(),
                value: w,
            });
        }
    }
    let norm = r.quat.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > QUAT_TOL {
        return Err(LogError::Quaternion { row, norm });
    }
    Ok(())
}

fn lerp3(a: &[f64; 3], b: &[f64; 3], s: f64) -> [f64; 3] {
    std::array::from_fn(|i| a[i] + s * (b[i] - a[i]))
}

fn lerp4(a: &[f64; 4], b: &[f64; 4], s: f64) -> [f64; 4] {
    std::array::from_fn(|i| a[i] + s * (b[i] - a[i]))
}

/// Shortest-arc spherical interpolation between unit quaternions `(w, x, y, z)`.
pub fn slerp(a: &[f64; 4], b: &[f64; 4], s: f64) -> [f64; 4] {
    let mut dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let mut b = *b;
    if dot < 0.0 {
        dot = -dot;
        b.iter_mut().for_each(|x| *x = -*x);
    }
    let q: [f64; 4] = if dot > 0.9995 {
        std::array::from_fn(|i| a[i] + s * (b[i] - a[i]))
    } else {
        let theta = dot.clamp(-1.0, 1.0).acos();
        let sin = theta.sin();
        let wa = ((1.0 - s) * theta).sin() / sin;
        let wb = (s * theta).sin() / sin;
        std::array::from_fn(|i| wa * a[i] + wb * b[i])
    };
    let n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
    q.map(|x| x / n)
}

/// One supervised step: input built from sample `k-1` and `k`, target position at `k`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    pub input: InputVector,
    pub target: Vector3<f64>,
}

/// Contiguous run of a flight; memory state is reset at its start.
#[derive(Clone, Debug)]
pub struct Segment {
    pub log_index: usize,
    /// Row range `[start, end)` in the source log.
    pub start: usize,
    pub end: usize,
    pub log: FlightLog,
    pub samples: Vec<Sample>,
}

impl Segment {
    pub fn sample_count(&self) -> usize {
        self.end - self.start
    }
}

/// One-step-ahead pairs for a log: `(y_{k-1}, omega_bar_k, q_k) -> y_k`.
pub fn one_step_samples(log: &FlightLog) -> Vec<Sample> {
    log.rows()
        .windows(2)
        .map(|w| Sample {
            input: InputVector {
                prev_position: w[0].position,
                rpm_normalized: w[1].omega_bar,
                orientation: w[1].quat,
            },
            target: w[1].position_vector(),
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SplitConfig {
    pub train_parts: usize,
    pub test_parts: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            train_parts: 3,
            test_parts: 2,
        }
    }
}

#[derive(Clone, Debug)]
pub struct DatasetMeta {
    pub sources: Vec<String>,
    pub sample_rate_hz: Option<f64>,
    pub split: SplitConfig,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub train: Vec<Segment>,
    pub test: Vec<Segment>,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn train_samples(&self) -> usize {
        self.train.iter().map(Segment::sample_count).sum()
    }

    pub fn test_samples(&self) -> usize {
        self.test.iter().map(Segment::sample_count).sum()
    }
}

/// Cuts every log into `train_parts + test_parts` contiguous, near-equal
/// segments and assigns them to train or test with a seeded shuffle.
pub fn build_dataset(
    logs: &[FlightLog],
    split: SplitConfig,
    seed: u64,
) -> Result<Dataset, LogError> {
    let parts = split.train_parts + split.test_parts;
    if logs.is_empty() || split.train_parts == 0 || split.test_parts == 0 {
        return Err(LogError::Option(
            "need at least one log and non-zero split parts".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (log_index, log) in logs.iter().enumerate() {
        let n = log.len();
        if n < 2 * parts {
            return Err(LogError::TooShort {
                needed: 2 * parts,
                found: n,
            });
        }
        let mut labels: Vec<bool> = (0..parts).map(|i| i < split.train_parts).collect();
        labels.shuffle(&mut rng);
        let base = n / parts;
        let extra = n % parts;
        let mut start = 0;
        for (j, is_train) in labels.into_iter().enumerate() {
            let len = base + usize::from(j < extra);
            let end = start + len;
            let sub = log.slice(start, end);
            let seg = Segment {
                log_index,
                start,
                end,
                samples: one_step_samples(&sub),
                log: sub,
            };
            if is_train {
                train.push(seg);
            } else {
                test.push(seg);
            }
            start = end;
        }
    }
    Ok(Dataset {
        train,
        test,
        meta: DatasetMeta {
            sources: Vec::new(),
            sample_rate_hz: logs[0].native_rate(),
            split,
            seed,
        },
    })
}
