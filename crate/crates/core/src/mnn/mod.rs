//! Memory neuron network with spectrally normalized weights.
//!
//! Every layer pairs its network neurons with memory neurons. At time step `k`
//! the memory output is an exponential trace of the previous activations,
//! `r_k = alpha * n_{k-1} + (1 - alpha) * r_{k-1}`, and the layer evaluates
//! `n_k = phi(W x + Q r_k)`. The final layer is linear, hidden layers use tanh.
//!
//! Scaling each `W` and `Q` to a spectral norm of `gamma^(1/L)` bounds the
//! Lipschitz constant of one forward call (memory held fixed) by `gamma`.

mod format;
pub mod spectral;

use nalgebra::{DMatrix, DVector, Vector3};
use thiserror::Error;

pub use format::{FormatError, FORMAT_VERSION, MAGIC};
pub use spectral::spectral_norm;

/// Length of the position/rpm/quaternion input used throughout the pipeline.
pub const INPUT_DIM: usize = 11;

#[derive(Debug, Error)]
pub enum MnnError {
    #[error("input dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("layer {layer}: expected input dimension {expected}, got {actual}")]
    LayerChain {
        layer: usize,
        expected: usize,
        actual: usize,
    },
    #[error("layer {layer}: {what} has shape {rows}x{cols}, expected {exp_rows}x{exp_cols}")]
    Shape {
        layer: usize,
        what: &'static str,
        rows: usize,
        cols: usize,
        exp_rows: usize,
        exp_cols: usize,
    },
    #[error("memory weight alpha[{index}] = {value} is outside [0, 1]")]
    AlphaRange { index: usize, value: f64 },
    #[error("gamma must be positive and finite, got {0}")]
    Gamma(f64),
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("network has no layers")]
    Empty,
    #[error("final layer must be linear and hidden layers tanh")]
    ActivationLayout,
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Linear,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Linear => z,
        }
    }

    /// Derivative expressed through the activation output `n = phi(z)`.
    #[inline]
    pub(crate) fn derivative_from_output(self, n: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - n * n,
            Activation::Linear => 1.0,
        }
    }
}

/// Network input `p_k = [y_{k-1}, omega_bar_k, q_k]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InputVector {
    pub prev_position: [f64; 3],
    pub rpm_normalized: [f64; 4],
    /// Unit quaternion `(w, x, y, z)`.
    pub orientation: [f64; 4],
}

impl InputVector {
    pub fn new(
        prev_position: [f64; 3],
        rpm_normalized: [f64; 4],
        orientation: [f64; 4],
    ) -> Result<Self, MnnError> {
        if prev_position.iter().any(|x| !x.is_finite()) {
            return Err(MnnError::InvalidInput("non-finite position".into()));
        }
        if let Some(w) = rpm_normalized.iter().find(|w| !(0.0..=1.0).contains(*w)) {
            return Err(MnnError::InvalidInput(format!(
                "normalized rpm {w} outside [0, 1]"
            )));
        }
        let norm = orientation.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !((norm - 1.0).abs() <= 1e-6) {
            return Err(MnnError::InvalidInput(format!(
                "quaternion norm {norm} is not 1"
            )));
        }
        Ok(Self {
            prev_position,
            rpm_normalized,
            orientation,
        })
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        let mut v = DVector::zeros(INPUT_DIM);
        v.as_mut_slice()[0..3].copy_from_slice(&self.prev_position);
        v.as_mut_slice()[3..7].copy_from_slice(&self.rpm_normalized);
        v.as_mut_slice()[7..11].copy_from_slice(&self.orientation);
        v
    }
}

/// One layer of network neurons with their paired memory neurons.
#[derive(Clone, Debug)]
pub struct MnnLayer {
    w: DMatrix<f64>,
    q: DMatrix<f64>,
    alpha: DVector<f64>,
    n_state: DVector<f64>,
    r_state: DVector<f64>,
    activation: Activation,
    // power-iteration warm starts, not part of the model
    pub(crate) warm_w: Option<DVector<f64>>,
    pub(crate) warm_q: Option<DVector<f64>>,
}

/// Intermediate values from one layer evaluation, used by backpropagation.
#[derive(Clone, Debug)]
pub struct LayerTrace {
    pub input: DVector<f64>,
    /// Memory output used in this step (already advanced by the recurrence).
    pub r: DVector<f64>,
    /// Activation output.
    pub n: DVector<f64>,
    /// Memory state before the step.
    pub n_prev: DVector<f64>,
    pub r_prev: DVector<f64>,
}

impl MnnLayer {
    pub fn new(
        w: DMatrix<f64>,
        q: DMatrix<f64>,
        alpha: DVector<f64>,
        activation: Activation,
    ) -> Result<Self, MnnError> {
        let out = w.nrows();
        if q.shape() != (out, out) {
            return Err(MnnError::Shape {
                layer: 0,
                what: "Q",
                rows: q.nrows(),
                cols: q.ncols(),
                exp_rows: out,
                exp_cols: out,
            });
        }
        if alpha.len() != out {
            return Err(MnnError::Shape {
                layer: 0,
                what: "alpha",
                rows: alpha.len(),
                cols: 1,
                exp_rows: out,
                exp_cols: 1,
            });
        }
        if let Some((index, &value)) = alpha
            .iter()
            .enumerate()
            .find(|(_, a)| !(0.0..=1.0).contains(*a))
        {
            return Err(MnnError::AlphaRange { index, value });
        }
        if w.iter().chain(q.iter()).any(|x| !x.is_finite()) {
            return Err(MnnError::NonFinite);
        }
        Ok(Self {
            w,
            q,
            alpha,
            n_state: DVector::zeros(out),
            r_state: DVector::zeros(out),
            activation,
            warm_w: None,
            warm_q: None,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    pub fn n_state(&self) -> &DVector<f64> {
        &self.n_state
    }

    pub fn r_state(&self) -> &DVector<f64> {
        &self.r_state
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub(crate) fn w_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.w
    }

    pub(crate) fn q_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.q
    }

    /// Clamps into `[0, 1]` on write.
    pub(crate) fn alpha_mut(&mut self) -> &mut DVector<f64> {
        &mut self.alpha
    }

    /// Overwrites the memory state. Lengths must equal `out_dim`.
    pub fn set_memory(&mut self, n: DVector<f64>, r: DVector<f64>) -> Result<(), MnnError> {
        let out = self.out_dim();
        if n.len() != out || r.len() != out {
            return Err(MnnError::DimensionMismatch {
                expected: out,
                actual: if n.len() != out { n.len() } else { r.len() },
            });
        }
        self.n_state = n;
        self.r_state = r;
        Ok(())
    }

    fn advanced_memory(&self) -> DVector<f64> {
        self.alpha
            .zip_zip_map(&self.n_state, &self.r_state, |a, n, r| {
                a * n + (1.0 - a) * r
            })
    }

    /// Advances the memory neurons one step: `r <- alpha*n + (1-alpha)*r`.
    pub fn step_memory(&mut self) -> &DVector<f64> {
        self.r_state = self.advanced_memory();
        &self.r_state
    }

    fn evaluate(&self, input: DVector<f64>) -> LayerTrace {
        let r = self.advanced_memory();
        let mut z = &self.q * &r;
        z.gemv(1.0, &self.w, &input, 1.0);
        let act = self.activation;
        z.apply(|x| *x = act.apply(*x));
        LayerTrace {
            input,
            r,
            n: z,
            n_prev: self.n_state.clone(),
            r_prev: self.r_state.clone(),
        }
    }

    fn commit(&mut self, trace: &LayerTrace) {
        self.n_state.copy_from(&trace.n);
        self.r_state.copy_from(&trace.r);
    }

    fn reset(&mut self) {
        self.n_state.fill(0.0);
        self.r_state.fill(0.0);
    }
}

/// Stack of memory neuron layers with a Lipschitz budget `gamma`.
#[derive(Clone, Debug)]
pub struct MnnNetwork {
    layers: Vec<MnnLayer>,
    gamma: f64,
}

impl MnnNetwork {
    pub fn new(layers: Vec<MnnLayer>, gamma: f64) -> Result<Self, MnnError> {
        if layers.is_empty() {
            return Err(MnnError::Empty);
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(MnnError::Gamma(gamma));
        }
        for (l, pair) in layers.windows(2).enumerate() {
            if pair[1].in_dim() != pair[0].out_dim() {
                return Err(MnnError::LayerChain {
                    layer: l + 1,
                    expected: pair[0].out_dim(),
                    actual: pair[1].in_dim(),
                });
            }
        }
        let last = layers.len() - 1;
        let layout_ok = layers.iter().enumerate().all(|(i, l)| {
            l.activation
                == if i == last {
                    Activation::Linear
                } else {
                    Activation::Tanh
                }
        });
        if !layout_ok {
            return Err(MnnError::ActivationLayout);
        }
        Ok(Self { layers, gamma })
    }

    pub fn layers(&self) -> &[MnnLayer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [MnnLayer] {
        &mut self.layers
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    /// Per-layer spectral norm target `gamma^(1/L)`.
    pub fn layer_target(&self) -> f64 {
        self.gamma.powf(1.0 / self.layers.len() as f64)
    }

    /// Evaluates all layers from the current memory state without committing it.
    pub fn trace(&self, p: &DVector<f64>) -> Result<Vec<LayerTrace>, MnnError> {
        if p.len() != self.input_dim() {
            return Err(MnnError::DimensionMismatch {
                expected: self.input_dim(),
                actual: p.len(),
            });
        }
        let mut traces: Vec<LayerTrace> = Vec::with_capacity(self.layers.len());
        let mut x = p.clone();
        for layer in &self.layers {
            let t = layer.evaluate(x);
            x = t.n.clone();
            traces.push(t);
        }
        Ok(traces)
    }

    /// Output the next `forward` call would return, leaving memory untouched.
    pub fn predict(&self, p: &DVector<f64>) -> Result<DVector<f64>, MnnError> {
        let mut traces = self.trace(p)?;
        Ok(traces.pop().expect("at least one layer").n)
    }

    /// One time step: evaluates the network and advances every memory state.
    pub fn forward(&mut self, p: &DVector<f64>) -> Result<DVector<f64>, MnnError> {
        let traces = self.trace(p)?;
        self.commit(&traces);
        Ok(traces.last().expect("at least one layer").n.clone())
    }

    /// Position prediction for a pipeline input. Requires a 3-output network.
    pub fn forward_input(&mut self, p: &InputVector) -> Result<Vector3<f64>, MnnError> {
        if self.output_dim() != 3 {
            return Err(MnnError::DimensionMismatch {
                expected: 3,
                actual: self.output_dim(),
            });
        }
        let y = self.forward(&p.to_dvector())?;
        Ok(Vector3::new(y[0], y[1], y[2]))
    }

    pub(crate) fn commit(&mut self, traces: &[LayerTrace]) {
        for (layer, t) in self.layers.iter_mut().zip(traces) {
            layer.commit(t);
        }
    }

    /// Zeroes every memory state; weights are untouched.
    pub fn reset_memory(&mut self) {
        self.layers.iter_mut().for_each(MnnLayer::reset);
    }

    /// Rescales each `W` and `Q` to spectral norm `gamma^(1/L)`.
    ///
    /// Matrices with a norm below [`spectral::DEAD_WEIGHT_THRESHOLD`] are left alone.
    pub fn normalize_spectral(&mut self) {
        let target = self.layer_target();
        for layer in &mut self.layers {
            layer.normalize(target);
        }
    }

    /// Spectral norms of `(W, Q)` per layer.
    pub fn spectral_norms(&self) -> Vec<(f64, f64)> {
        self.layers
            .iter()
            .map(|l| {
                (
                    spectral::spectral_norm_warm(&l.w, &mut l.warm_w.clone()),
                    spectral::spectral_norm_warm(&l.q, &mut l.warm_q.clone()),
                )
            })
            .collect()
    }

    /// True when any weight is NaN or infinite.
    pub fn has_non_finite(&self) -> bool {
        self.layers.iter().any(|l| {
            l.w.iter()
                .chain(l.q.iter())
                .chain(l.alpha.iter())
                .any(|x| !x.is_finite())
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        format::encode(self)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FormatError> {
        format::decode(bytes)
    }
}

impl MnnLayer {
    pub(crate) fn normalize(&mut self, target: f64) {
        scale_to(&mut self.w, &mut self.warm_w, target);
        scale_to(&mut self.q, &mut self.warm_q, target);
    }
}

pub(crate) fn scale_to(m: &mut DMatrix<f64>, warm: &mut Option<DVector<f64>>, target: f64) {
    let rho = spectral::spectral_norm_warm(m, warm);
    if rho >= spectral::DEAD_WEIGHT_THRESHOLD && rho.is_finite() {
        *m *= target / rho;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_layer(rng: &mut ChaCha8Rng, inp: usize, out: usize, act: Activation) -> MnnLayer {
        let w = DMatrix::from_fn(out, inp, |_, _| rng.random_range(-1.0..1.0));
        let q = DMatrix::from_fn(out, out, |_, _| rng.random_range(-1.0..1.0));
        let alpha = DVector::from_fn(out, |_, _| rng.random_range(0.0..1.0));
        MnnLayer::new(w, q, alpha, act).unwrap()
    }

    fn seeded_net(seed: u64, dims: &[usize]) -> MnnNetwork {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let last = dims.len() - 2;
        let layers = (0..dims.len() - 1)
            .map(|i| {
                let act = if i == last {
                    Activation::Linear
                } else {
                    Activation::Tanh
                };
                random_layer(&mut rng, dims[i], dims[i + 1], act)
            })
            .collect();
        MnnNetwork::new(layers, 1.0).unwrap()
    }

    // Scalar-loop transcription of the layer recurrence and output, no matrix types.
    struct ScalarLayer {
        w: Vec<Vec<f64>>,
        q: Vec<Vec<f64>>,
        alpha: Vec<f64>,
        n: Vec<f64>,
        r: Vec<f64>,
        tanh: bool,
    }

    fn scalar_forward(layers: &mut [ScalarLayer], p: &[f64]) -> Vec<f64> {
        let mut x = p.to_vec();
        for l in layers.iter_mut() {
            let out = l.w.len();
            let mut r_new = vec![0.0; out];
            for i in 0..out {
                r_new[i] = l.alpha[i] * l.n[i] + (1.0 - l.alpha[i]) * l.r[i];
            }
            let mut n_new = vec![0.0; out];
            for i in 0..out {
                let mut z = 0.0;
                for j in 0..x.len() {
                    z += l.w[i][j] * x[j];
                }
                for j in 0..out {
                    z += l.q[i][j] * r_new[j];
                }
                n_new[i] = if l.tanh { z.tanh() } else { z };
            }
            l.r = r_new;
            l.n = n_new.clone();
            x = n_new;
        }
        x
    }

    fn to_scalar(net: &MnnNetwork) -> Vec<ScalarLayer> {
        net.layers()
            .iter()
            .map(|l| ScalarLayer {
                w: (0..l.out_dim())
                    .map(|i| (0..l.in_dim()).map(|j| l.w()[(i, j)]).collect())
                    .collect(),
                q: (0..l.out_dim())
                    .map(|i| (0..l.out_dim()).map(|j| l.q()[(i, j)]).collect())
                    .collect(),
                alpha: l.alpha().iter().copied().collect(),
                n: vec![0.0; l.out_dim()],
                r: vec![0.0; l.out_dim()],
                tanh: l.activation() == Activation::Tanh,
            })
            .collect()
    }

    #[test]
    fn zero_network_outputs_zero() {
        let layers = vec![
            MnnLayer::new(
                DMatrix::zeros(4, 11),
                DMatrix::zeros(4, 4),
                DVector::from_element(4, 0.5),
                Activation::Tanh,
            )
            .unwrap(),
            MnnLayer::new(
                DMatrix::zeros(3, 4),
                DMatrix::zeros(3, 3),
                DVector::from_element(3, 0.5),
                Activation::Linear,
            )
            .unwrap(),
        ];
        let mut net = MnnNetwork::new(layers, 1.0).unwrap();
        let p = InputVector::new([1.0, -2.0, 3.0], [0.5; 4], [1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(net.forward_input(&p).unwrap(), Vector3::zeros());
    }

    #[test]
    fn identity_pass_through() {
        let mut w = DMatrix::zeros(3, 11);
        for i in 0..3 {
            w[(i, i)] = 1.0;
        }
        let layer = MnnLayer::new(
            w,
            DMatrix::zeros(3, 3),
            DVector::from_element(3, 0.5),
            Activation::Linear,
        )
        .unwrap();
        let mut net = MnnNetwork::new(vec![layer], 1.0).unwrap();
        let p = InputVector::new([1.0, 2.0, 3.0], [0.2; 4], [1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(net.forward_input(&p).unwrap(), Vector3::new(1.0, 2.0, 3.0));
    }

    #[test]
    fn forward_matches_scalar_oracle_over_sequence() {
        let mut net = seeded_net(2024, &[11, 6, 3]);
        let mut oracle = to_scalar(&net);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..3 {
            let p: Vec<f64> = (0..11).map(|_| rng.random_range(-1.0..1.0)).collect();
            let got = net.forward(&DVector::from_vec(p.clone())).unwrap();
            let want = scalar_forward(&mut oracle, &p);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-12, "{g} vs {w}");
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let mut net = seeded_net(1, &[11, 5, 3]);
        let err = net.forward(&DVector::zeros(7)).unwrap_err();
        assert!(matches!(
            err,
            MnnError::DimensionMismatch {
                expected: 11,
                actual: 7
            }
        ));
    }

    #[test]
    fn step_memory_cases() {
        let mk = |alpha: f64, n: [f64; 2], r: [f64; 2]| {
            let mut l = MnnLayer::new(
                DMatrix::zeros(2, 2),
                DMatrix::zeros(2, 2),
                DVector::from_element(2, alpha),
                Activation::Linear,
            )
            .unwrap();
            l.set_memory(DVector::from_row_slice(&n), DVector::from_row_slice(&r))
                .unwrap();
            l.step_memory().clone()
        };
        assert_eq!(mk(1.0, [2.0, -1.0], [7.0, 7.0]).as_slice(), &[2.0, -1.0]);
        assert_eq!(mk(0.0, [2.0, -1.0], [7.0, 3.0]).as_slice(), &[7.0, 3.0]);
        assert_eq!(mk(0.5, [2.0, 0.0], [0.0, 2.0]).as_slice(), &[1.0, 1.0]);
    }

    #[test]
    fn normalize_single_layer_to_unit() {
        let mut w = DMatrix::zeros(3, 3);
        w[(0, 0)] = 4.0;
        w[(1, 1)] = 1.0;
        let layer = MnnLayer::new(
            w,
            DMatrix::identity(3, 3) * 2.0,
            DVector::from_element(3, 0.5),
            Activation::Linear,
        )
        .unwrap();
        let mut net = MnnNetwork::new(vec![layer], 1.0).unwrap();
        net.normalize_spectral();
        let (rw, rq) = net.spectral_norms()[0];
        assert!((rw - 1.0).abs() < 1e-12);
        assert!((rq - 1.0).abs() < 1e-12);
    }

    #[test]
    fn normalize_two_layers_gamma_four() {
        let mut net = seeded_net(5, &[11, 8, 3]);
        net.gamma = 4.0;
        net.normalize_spectral();
        for (rw, rq) in net.spectral_norms() {
            assert!((rw - 2.0).abs() < 2e-6, "{rw}");
            assert!((rq - 2.0).abs() < 2e-6, "{rq}");
        }
    }

    #[test]
    fn dead_weights_stay_zero() {
        let layer = MnnLayer::new(
            DMatrix::zeros(3, 4),
            DMatrix::zeros(3, 3),
            DVector::from_element(3, 0.5),
            Activation::Linear,
        )
        .unwrap();
        let mut net = MnnNetwork::new(vec![layer], 1.0).unwrap();
        net.normalize_spectral();
        assert!(net.layers()[0].w().iter().all(|&x| x == 0.0));
        assert!(!net.has_non_finite());
    }

    #[test]
    fn reset_matches_fresh_and_is_idempotent() {
        let fresh = seeded_net(8, &[11, 10, 3]);
        let mut used = fresh.clone();
        let p = DVector::from_fn(11, |i, _| (i as f64 * 0.3).sin());
        for _ in 0..5 {
            used.forward(&p).unwrap();
        }
        used.reset_memory();
        let once = used.clone();
        used.reset_memory();
        for (a, b) in once.layers().iter().zip(used.layers()) {
            assert_eq!(a.n_state(), b.n_state());
            assert_eq!(a.r_state(), b.r_state());
        }
        let mut fresh = fresh;
        assert_eq!(fresh.forward(&p).unwrap(), used.forward(&p).unwrap());
    }

    #[test]
    fn memory_makes_forward_stateful() {
        let p = DVector::from_fn(11, |i, _| 0.1 * i as f64);
        let mut net = seeded_net(13, &[11, 6, 3]);
        net.reset_memory();
        let a = net.forward(&p).unwrap();
        let b = net.forward(&p).unwrap();
        assert_ne!(a, b);

        // with Q = 0 the memory never reaches the output
        let layers = net
            .layers()
            .iter()
            .map(|l| {
                MnnLayer::new(
                    l.w().clone(),
                    DMatrix::zeros(l.out_dim(), l.out_dim()),
                    l.alpha().clone(),
                    l.activation(),
                )
                .unwrap()
            })
            .collect();
        let mut memoryless = MnnNetwork::new(layers, 1.0).unwrap();
        let a = memoryless.forward(&p).unwrap();
        let b = memoryless.forward(&p).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn predict_does_not_mutate() {
        let mut net = seeded_net(21, &[11, 6, 3]);
        let p = DVector::from_element(11, 0.3);
        net.forward(&p).unwrap();
        let peek = net.predict(&p).unwrap();
        assert_eq!(peek, net.predict(&p).unwrap());
        assert_eq!(peek, net.forward(&p).unwrap());
    }

    #[test]
    fn rejects_bad_construction() {
        let bad_alpha = MnnLayer::new(
            DMatrix::zeros(2, 3),
            DMatrix::zeros(2, 2),
            DVector::from_row_slice(&[0.5, 1.5]),
            Activation::Linear,
        );
        assert!(matches!(
            bad_alpha,
            Err(MnnError::AlphaRange { index: 1, .. })
        ));

        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let l1 = random_layer(&mut rng, 11, 5, Activation::Tanh);
        let l2 = random_layer(&mut rng, 4, 3, Activation::Linear);
        assert!(matches!(
            MnnNetwork::new(vec![l1.clone(), l2], 1.0),
            Err(MnnError::LayerChain { layer: 1, .. })
        ));
        let l2 = random_layer(&mut rng, 5, 3, Activation::Tanh);
        assert!(matches!(
            MnnNetwork::new(vec![l1.clone(), l2.clone()], 1.0),
            Err(MnnError::ActivationLayout)
        ));
        assert!(matches!(
            MnnNetwork::new(vec![l1], -1.0),
            Err(MnnError::Gamma(_))
        ));
    }

    #[test]
    fn input_vector_validation() {
        assert!(InputVector::new([0.0; 3], [1.2, 0.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0]).is_err());
        assert!(InputVector::new([0.0; 3], [0.5; 4], [1.0, 0.1, 0.0, 0.0]).is_err());
        let p =
            InputVector::new([1.0, 2.0, 3.0], [0.1, 0.2, 0.3, 0.4], [0.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(
            p.to_dvector().as_slice(),
            &[1.0, 2.0, 3.0, 0.1, 0.2, 0.3, 0.4, 0.0, 0.0, 0.0, 1.0]
        );
    }
}
