//! Online training of the memory neuron network.
//!
//! Each sample is processed in temporal order: forward, error
//! `e = f(p_k) - y_k`, backpropagation of `e` through the layers, a gradient
//! step on every `W` and `Q`, and (by default) spectral renormalization of
//! the updated matrices back to `gamma^(1/L)`.
//!
//! Gradients are truncated at the memory neurons: the memory output `r_k`
//! entering step `k` is treated as a constant input, so `dW = delta x^T` and
//! `dQ = delta r^T` with `delta_L = e` and
//! `delta_l = (W_{l+1}^T delta_{l+1}) .* phi'(z_l)` for hidden layers.

use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::config::{ConfigError, KeyValues};
use crate::flightlog::Sample;
use crate::mnn::{Activation, LayerTrace, MnnError, MnnLayer, MnnNetwork};
use crate::par::Execution;

/// Layer sizes used for position prediction: 11 inputs, 100 hidden, 3 outputs.
pub const MODEL_DIMS: [usize; 3] = [11, 100, 3];

pub const CONFIG_KEYS: [&str; 7] = [
    "eta",
    "gamma",
    "epochs",
    "alpha_mode",
    "alpha_value",
    "seed",
    "renorm_every",
];

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training data is empty")]
    EmptyData,
    #[error(transparent)]
    Network(#[from] MnnError),
    #[error("non-finite value at epoch {epoch}, sample {sample}")]
    NonFinite { epoch: usize, sample: usize },
    #[error("invalid training config: {0}")]
    Config(String),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AlphaMode {
    Fixed(f64),
    /// Truncated-gradient updates of alpha with this learning rate, clamped to [0, 1].
    Learned {
        eta_alpha: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Renormalize {
    EverySample,
    EveryEpoch,
    /// Unconstrained training: weights are only normalized at initialization.
    Never,
}

impl FromStr for Renormalize {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sample" => Ok(Self::EverySample),
            "epoch" => Ok(Self::EveryEpoch),
            "never" => Ok(Self::Never),
            other => Err(format!("expected sample, epoch or never, got `{other}`")),
        }
    }
}

impl Renormalize {
    pub fn name(&self) -> &'static str {
        match self {
            Self::EverySample => "sample",
            Self::EveryEpoch => "epoch",
            Self::Never => "never",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub eta: f64,
    pub gamma: f64,
    pub epochs: usize,
    pub alpha_mode: AlphaMode,
    pub seed: u64,
    pub renorm: Renormalize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            eta: 3e-4,
            gamma: 1.0,
            epochs: 50,
            alpha_mode: AlphaMode::Fixed(0.5),
            seed: 0,
            renorm: Renormalize::EverySample,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(TrainError::Config(format!(
                "eta must be positive, got {}",
                self.eta
            )));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(TrainError::Config(format!(
                "gamma must be positive, got {}",
                self.gamma
            )));
        }
        if self.epochs == 0 {
            return Err(TrainError::Config("epochs must be at least 1".into()));
        }
        match self.alpha_mode {
            AlphaMode::Fixed(a) if !(0.0..=1.0).contains(&a) => Err(TrainError::Config(format!(
                "alpha_value {a} outside [0, 1]"
            ))),
            AlphaMode::Learned { eta_alpha } if !(eta_alpha >= 0.0 && eta_alpha.is_finite()) => {
                Err(TrainError::Config(
                    "alpha learning rate must be non-negative".into(),
                ))
            }
            _ => Ok(()),
        }
    }

    /// Reads the documented keys. For `alpha_mode = learned`, `alpha_value`
    /// is the alpha learning rate; for `fixed` it is alpha itself.
    pub fn apply(&mut self, kv: &KeyValues) -> Result<(), ConfigError> {
        kv.set_f64("eta", &mut self.eta)?;
        kv.set_f64("gamma", &mut self.gamma)?;
        kv.set_usize("epochs", &mut self.epochs)?;
        kv.set_u64("seed", &mut self.seed)?;
        if let Some(r) = kv.get("renorm_every") {
            self.renorm = r
                .parse()
                .map_err(|e: String| ConfigError::Value("renorm_every".into(), e))?;
        }
        let value = kv.parse_value::<f64>("alpha_value")?;
        match kv.get("alpha_mode") {
            None | Some("fixed") => {
                let current = match self.alpha_mode {
                    AlphaMode::Fixed(a) => a,
                    AlphaMode::Learned { .. } => 0.5,
                };
                self.alpha_mode = AlphaMode::Fixed(value.unwrap_or(current));
            }
            Some("learned") => {
                self.alpha_mode = AlphaMode::Learned {
                    eta_alpha: value.unwrap_or(1e-4),
                };
            }
            Some(other) => {
                return Err(ConfigError::Value(
                    "alpha_mode".into(),
                    format!("expected fixed or learned, got `{other}`"),
                ))
            }
        }
        Ok(())
    }

    fn initial_alpha(&self) -> f64 {
        match self.alpha_mode {
            AlphaMode::Fixed(a) => a,
            AlphaMode::Learned { .. } => 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    /// Mean `||e||^2` over the samples of each epoch, measured before each update.
    pub per_epoch_loss: Vec<f64>,
    pub final_rmse_train: f64,
    pub wall_time: f64,
    pub renorm: Renormalize,
}

impl TrainReport {
    pub fn spectral_norm_enabled(&self) -> bool {
        self.renorm != Renormalize::Never
    }

    /// `epoch,loss` table, one row per epoch (1-based).
    pub fn loss_table(&self) -> String {
        let mut s = String::from("epoch,loss\n");
        for (i, l) in self.per_epoch_loss.iter().enumerate() {
            s.push_str(&format!("{},{}\n", i + 1, l));
        }
        s
    }
}

/// Uniform `[-b, b]` weights with `b = 1/sqrt(in_dim)` for both W and Q, alpha everywhere equal,
/// then spectral normalization to `gamma^(1/L)`.
pub fn init_weights(
    dims: &[usize],
    gamma: f64,
    alpha: f64,
    seed: u64,
) -> Result<MnnNetwork, MnnError> {
    if dims.len() < 2 || dims.contains(&0) {
        return Err(MnnError::InvalidInput(format!(
            "invalid layer dims {dims:?}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let last = dims.len() - 2;
    let mut layers = Vec::with_capacity(dims.len() - 1);
    for l in 0..dims.len() - 1 {
        let (inp, out) = (dims[l], dims[l + 1]);
        let b = 1.0 / (inp as f64).sqrt();
        let w = DMatrix::from_fn(out, inp, |_, _| rng.random_range(-b..=b));
        let q = DMatrix::from_fn(out, out, |_, _| rng.random_range(-b..=b));
        let act = if l == last {
            Activation::Linear
        } else {
            Activation::Tanh
        };
        layers.push(MnnLayer::new(w, q, DVector::from_element(out, alpha), act)?);
    }
    let mut net = MnnNetwork::new(layers, gamma)?;
    net.normalize_spectral();
    Ok(net)
}

/// Gradient of `0.5 * ||e||^2` with respect to one layer's parameters.
#[derive(Clone, Debug)]
pub struct LayerGradient {
    pub w: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub alpha: DVector<f64>,
}

struct Backprop {
    traces: Vec<LayerTrace>,
    deltas: Vec<DVector<f64>>,
    error: DVector<f64>,
}

fn backprop(net: &MnnNetwork, p: &DVector<f64>, y: &DVector<f64>) -> Result<Backprop, MnnError> {
    let traces = net.trace(p)?;
    let out = &traces[traces.len() - 1].n;
    if y.len() != out.len() {
        return Err(MnnError::DimensionMismatch {
            expected: out.len(),
            actual: y.len(),
        });
    }
    let error = out - y;
    let layers = net.layers();
    let mut deltas = vec![DVector::zeros(0); layers.len()];
    let last = layers.len() - 1;
    let act = layers[last].activation();
    deltas[last] = error.zip_map(&traces[last].n, |e, n| e * act.derivative_from_output(n));
    for l in (0..last).rev() {
        let back = layers[l + 1].w().tr_mul(&deltas[l + 1]);
        let act = layers[l].activation();
        deltas[l] = back.zip_map(&traces[l].n, |b, n| b * act.derivative_from_output(n));
    }
    Ok(Backprop {
        traces,
        deltas,
        error,
    })
}

/// Truncated gradients for a single sample from the network's current memory state.
pub fn gradients(
    net: &MnnNetwork,
    p: &DVector<f64>,
    y: &DVector<f64>,
) -> Result<Vec<LayerGradient>, MnnError> {
    let bp = backprop(net, p, y)?;
    Ok(net
        .layers()
        .iter()
        .zip(bp.traces.iter().zip(&bp.deltas))
        .map(|(layer, (t, d))| LayerGradient {
            w: d * t.input.transpose(),
            q: d * t.r.transpose(),
            alpha: layer.q().tr_mul(d).component_mul(&(&t.n_prev - &t.r_prev)),
        })
        .collect())
}

/// One online update. Returns `||e||^2` measured before the update.
pub fn train_step(
    net: &mut MnnNetwork,
    p: &DVector<f64>,
    y: &DVector<f64>,
    cfg: &TrainConfig,
) -> Result<f64, MnnError> {
    let bp = backprop(net, p, y)?;
    let sq = bp.error.norm_squared();
    if !sq.is_finite() {
        return Ok(sq);
    }
    let target = net.layer_target();
    net.commit(&bp.traces);
    for (layer, (t, d)) in net
        .layers_mut()
        .iter_mut()
        .zip(bp.traces.iter().zip(&bp.deltas))
    {
        if let AlphaMode::Learned { eta_alpha } = cfg.alpha_mode {
            let grad = layer.q().tr_mul(d).component_mul(&(&t.n_prev - &t.r_prev));
            let alpha = layer.alpha_mut();
            alpha.axpy(-eta_alpha, &grad, 1.0);
            alpha.apply(|a| *a = a.clamp(0.0, 1.0));
        }
        layer.w_mut().ger(-cfg.eta, d, &t.input, 1.0);
        layer.q_mut().ger(-cfg.eta, d, &t.r, 1.0);
        if cfg.renorm == Renormalize::EverySample {
            layer.normalize(target);
        }
    }
    Ok(sq)
}

/// Trains on `sequences` for `cfg.epochs` epochs. Memory is reset at the start
/// of every sequence and every epoch; samples are never shuffled.
pub fn train(
    mut net: MnnNetwork,
    sequences: &[Vec<Sample>],
    cfg: &TrainConfig,
) -> Result<(MnnNetwork, TrainReport), TrainError> {
    cfg.validate()?;
    let total: usize = sequences.iter().map(Vec::len).sum();
    if total == 0 {
        return Err(TrainError::EmptyData);
    }
    let started = Instant::now();
    let prepared: Vec<Vec<(DVector<f64>, DVector<f64>)>> = sequences
        .iter()
        .map(|s| {
            s.iter()
                .map(|x| {
                    (
                        x.input.to_dvector(),
                        DVector::from_column_slice(x.target.as_slice()),
                    )
                })
                .collect()
        })
        .collect();

    let mut per_epoch_loss = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let mut sum = 0.0;
        let mut index = 0;
        for seq in &prepared {
            net.reset_memory();
            for (p, y) in seq {
                let sq = train_step(&mut net, p, y, cfg)?;
                if !sq.is_finite() {
                    return Err(TrainError::NonFinite {
                        epoch,
                        sample: index,
                    });
                }
                sum += sq;
                index += 1;
            }
        }
        if cfg.renorm == Renormalize::EveryEpoch {
            net.normalize_spectral();
        }
        if net.has_non_finite() || !sum.is_finite() {
            return Err(TrainError::NonFinite {
                epoch,
                sample: index.saturating_sub(1),
            });
        }
        per_epoch_loss.push(sum / total as f64);
    }
    net.reset_memory();
    let final_rmse_train = evaluate(&net, sequences, Execution::default());
    Ok((
        net,
        TrainReport {
            per_epoch_loss,
            final_rmse_train,
            wall_time: started.elapsed().as_secs_f64(),
            renorm: cfg.renorm,
        },
    ))
}

/// Fresh network of the given dims trained with `cfg`.
pub fn train_new(
    dims: &[usize],
    sequences: &[Vec<Sample>],
    cfg: &TrainConfig,
) -> Result<(MnnNetwork, TrainReport), TrainError> {
    cfg.validate()?;
    let net = init_weights(dims, cfg.gamma, cfg.initial_alpha(), cfg.seed)?;
    train(net, sequences, cfg)
}

/// Root mean square of `||f(p_k) - y_k||` over all samples. Each sequence
/// starts from a reset memory state; `net` itself is not modified.
pub fn evaluate(net: &MnnNetwork, sequences: &[Vec<Sample>], exec: Execution) -> f64 {
    let total: usize = sequences.iter().map(Vec::len).sum();
    if total == 0 {
        return f64::NAN;
    }
    let sums = exec.map_slice(sequences, |seq| {
        let mut local = net.clone();
        local.reset_memory();
        seq.iter()
            .map(|s| match local.forward_input(&s.input) {
                Ok(y) => (y - s.target).norm_squared(),
                Err(_) => f64::NAN,
            })
            .sum::<f64>()
    });
    (sums.iter().sum::<f64>() / total as f64).sqrt()
}

/// One-step predictions for each sequence, in order.
pub fn predict_sequences(net: &MnnNetwork, sequences: &[Vec<Sample>]) -> Vec<Vec<[f64; 3]>> {
    sequences
        .iter()
        .map(|seq| {
            let mut local = net.clone();
            local.reset_memory();
            seq.iter()
                .map(|s| {
                    local
                        .forward_input(&s.input)
                        .map(|y| [y.x, y.y, y.z])
                        .unwrap_or([f64::NAN; 3])
                })
                .collect()
        })
        .collect()
}
