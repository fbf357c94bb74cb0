//! Small fully-connected networks with explicit forward/backward passes.
//!
//! The attack and training code needs gradients with respect to both
//! parameters and inputs, so the network keeps its math visible instead of
//! hiding it behind an autodiff framework: `forward` caches activations and
//! `backward` turns a logit gradient into parameter gradients plus an input
//! gradient in one pass.

use super::ModelError;
use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Tanh => v.tanh(),
            Activation::Relu => v.max(0.0),
        }
    }

    /// Derivative expressed through the post-activation value.
    fn derivative_from_output(self, out: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - out * out,
            Activation::Relu => {
                if out > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Parsed architecture registry key.
///
/// Keys: `linear`, `mlp:<h1>[-<h2>...]`, optionally suffixed with the
/// activation, e.g. `mlp:16`, `mlp:32-16:relu`. Hidden layers default to
/// tanh, which keeps the loss smooth for finite-difference checks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchSpec {
    id: String,
    hidden: Vec<usize>,
    activation: Activation,
}

impl ArchSpec {
    pub fn parse(id: &str) -> Result<Self, ModelError> {
        let mk = |hidden: Vec<usize>, activation| Ok(Self {
            id: id.to_string(),
            hidden,
            activation,
        });
        if id == "linear" {
            return mk(Vec::new(), Activation::Tanh);
        }
        let rest = id
            .strip_prefix("mlp:")
            .ok_or_else(|| ModelError::UnknownArchitecture(id.to_string()))?;
        let (sizes_part, activation) = match rest.split_once(':') {
            Some((sizes, "tanh")) => (sizes, Activation::Tanh),
            Some((sizes, "relu")) => (sizes, Activation::Relu),
            Some(_) => return Err(ModelError::UnknownArchitecture(id.to_string())),
            None => (rest, Activation::Tanh),
        };
        let mut hidden = Vec::new();
        for part in sizes_part.split('-') {
            let width: usize = part
                .parse()
                .map_err(|_| ModelError::UnknownArchitecture(id.to_string()))?;
            if width == 0 {
                return Err(ModelError::UnknownArchitecture(id.to_string()));
            }
            hidden.push(width);
        }
        if hidden.is_empty() {
            return Err(ModelError::UnknownArchitecture(id.to_string()));
        }
        mk(hidden, activation)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn hidden(&self) -> &[usize] {
        &self.hidden
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }
}

/// Cached activations from a forward pass. `layers[0]` is the input batch,
/// `layers[i]` the post-activation output of hidden layer `i`.
pub struct ForwardTrace {
    layers: Vec<Array2<f64>>,
    logits: Array2<f64>,
}

impl ForwardTrace {
    pub fn logits(&self) -> &Array2<f64> {
        &self.logits
    }

    pub fn penultimate(&self) -> &Array2<f64> {
        self.layers.last().expect("at least the input layer")
    }
}

/// Parameter gradients, shaped like the network's weights and biases.
pub struct ParamGrads {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl ParamGrads {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            weights: net.weights.iter().map(|w| Array2::zeros(w.dim())).collect(),
            biases: net.biases.iter().map(|b| Array1::zeros(b.len())).collect(),
        }
    }

    pub fn add(&mut self, other: &ParamGrads) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            *a += b;
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter().copied());
            out.extend(b.iter().copied());
        }
        out
    }
}

/// A fully-connected classifier: zero or more hidden layers, linear logits.
#[derive(Debug, Clone)]
pub struct Mlp {
    arch: ArchSpec,
    input_dim: usize,
    num_classes: usize,
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
}

impl Mlp {
    /// Xavier-uniform initialization from a seed.
    pub fn init(arch: &ArchSpec, input_dim: usize, num_classes: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dims = vec![input_dim];
        dims.extend_from_slice(&arch.hidden);
        dims.push(num_classes);

        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in dims.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let w = Array2::from_shape_fn((fan_out, fan_in), |_| rng.gen_range(-bound..bound));
            weights.push(w);
            biases.push(Array1::zeros(fan_out));
        }
        Self {
            arch: arch.clone(),
            input_dim,
            num_classes,
            weights,
            biases,
        }
    }

    /// Build a network with explicit weights; for hand-set test models.
    pub fn from_parts(
        arch: &ArchSpec,
        input_dim: usize,
        num_classes: usize,
        weights: Vec<Array2<f64>>,
        biases: Vec<Array1<f64>>,
    ) -> Result<Self, ModelError> {
        let mut net = Self::init(arch, input_dim, num_classes, 0);
        if weights.len() != net.weights.len() || biases.len() != net.biases.len() {
            return Err(ModelError::ShapeMismatch {
                expected: format!("{} layers", net.weights.len()),
                actual: format!("{} weight / {} bias arrays", weights.len(), biases.len()),
            });
        }
        for (slot, w) in net.weights.iter().zip(&weights) {
            if slot.dim() != w.dim() {
                return Err(ModelError::ShapeMismatch {
                    expected: format!("{:?}", slot.dim()),
                    actual: format!("{:?}", w.dim()),
                });
            }
        }
        net.weights = weights;
        net.biases = biases;
        Ok(net)
    }

    pub fn arch(&self) -> &ArchSpec {
        &self.arch
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn embedding_dim(&self) -> usize {
        self.arch.hidden.last().copied().unwrap_or(self.input_dim)
    }

    pub fn check_input(&self, x: &Array2<f64>) -> Result<(), ModelError> {
        if x.ncols() != self.input_dim {
            return Err(ModelError::ShapeMismatch {
                expected: format!("{} features", self.input_dim),
                actual: format!("{} features", x.ncols()),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &Array2<f64>) -> ForwardTrace {
        let mut layers = vec![x.clone()];
        let mut current = x.clone();
        let hidden_count = self.weights.len() - 1;
        for l in 0..hidden_count {
            let mut pre = current.dot(&self.weights[l].t());
            pre += &self.biases[l];
            pre.mapv_inplace(|v| self.arch.activation.apply(v));
            layers.push(pre.clone());
            current = pre;
        }
        let mut logits = current.dot(&self.weights[hidden_count].t());
        logits += &self.biases[hidden_count];
        ForwardTrace { layers, logits }
    }

    pub fn logits(&self, x: &Array2<f64>) -> Array2<f64> {
        self.forward(x).logits
    }

    /// Penultimate-layer activations (the input itself for `linear`).
    pub fn penultimate(&self, x: &Array2<f64>) -> Array2<f64> {
        let trace = self.forward(x);
        trace.layers.into_iter().last().expect("nonempty trace")
    }

    /// Backpropagate a logit gradient; returns parameter gradients and the
    /// gradient with respect to the input batch.
    pub fn backward(&self, trace: &ForwardTrace, dlogits: &Array2<f64>) -> (ParamGrads, Array2<f64>) {
        let layer_count = self.weights.len();
        let mut grads = ParamGrads::zeros_like(self);
        let mut delta = dlogits.clone();
        for l in (0..layer_count).rev() {
            let inputs = &trace.layers[l];
            grads.weights[l] = delta.t().dot(inputs);
            grads.biases[l] = delta.sum_axis(Axis(0));
            let upstream = delta.dot(&self.weights[l]);
            if l == 0 {
                return (grads, upstream);
            }
            let act = self.arch.activation;
            delta = &upstream * &trace.layers[l].mapv(|v| act.derivative_from_output(v));
        }
        unreachable!("network has at least one layer");
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    /// Flatten parameters, layer by layer, weights row-major then biases.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter().copied());
            out.extend(b.iter().copied());
        }
        out
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<(), ModelError> {
        if flat.len() != self.num_params() {
            return Err(ModelError::ShapeMismatch {
                expected: format!("{} parameters", self.num_params()),
                actual: format!("{} parameters", flat.len()),
            });
        }
        let mut cursor = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            for v in w.iter_mut() {
                *v = flat[cursor];
                cursor += 1;
            }
            for v in b.iter_mut() {
                *v = flat[cursor];
                cursor += 1;
            }
        }
        Ok(())
    }

}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{cross_entropy_probs, softmax_rows};
    use approx::assert_relative_eq;
    use ndarray::array;

    #[test]
    fn arch_keys_parse() {
        assert_eq!(ArchSpec::parse("linear").unwrap().hidden(), &[] as &[usize]);
        assert_eq!(ArchSpec::parse("mlp:16").unwrap().hidden(), &[16]);
        let deep = ArchSpec::parse("mlp:32-16:relu").unwrap();
        assert_eq!(deep.hidden(), &[32, 16]);
        assert_eq!(deep.activation(), Activation::Relu);
        assert!(ArchSpec::parse("mlp:").is_err());
        assert!(ArchSpec::parse("cnn:3").is_err());
        assert!(ArchSpec::parse("mlp:0").is_err());
    }

    #[test]
    fn linear_forward_matches_hand_computation() {
        let arch = ArchSpec::parse("linear").unwrap();
        let net = Mlp::from_parts(
            &arch,
            2,
            2,
            vec![array![[1.0, -1.0], [0.5, 2.0]]],
            vec![array![0.1, -0.2]],
        )
        .unwrap();
        let x = array![[0.3, 0.7]];
        let logits = net.logits(&x);
        assert_relative_eq!(logits[(0, 0)], 0.3 - 0.7 + 0.1, epsilon = 1e-12);
        assert_relative_eq!(logits[(0, 1)], 0.15 + 1.4 - 0.2, epsilon = 1e-12);
    }

    #[test]
    fn seeded_init_is_reproducible() {
        let arch = ArchSpec::parse("mlp:8").unwrap();
        let a = Mlp::init(&arch, 3, 2, 99);
        let b = Mlp::init(&arch, 3, 2, 99);
        assert_eq!(a.params(), b.params());
        let c = Mlp::init(&arch, 3, 2, 100);
        assert_ne!(a.params(), c.params());
    }

    #[test]
    fn param_round_trip() {
        let arch = ArchSpec::parse("mlp:5").unwrap();
        let mut net = Mlp::init(&arch, 4, 3, 1);
        let flat = net.params();
        assert_eq!(flat.len(), net.num_params());
        let doubled: Vec<f64> = flat.iter().map(|v| v * 2.0).collect();
        net.set_params(&doubled).unwrap();
        assert_eq!(net.params(), doubled);
    }

    /// Central finite differences on the cross-entropy of a tiny tanh MLP.
    #[test]
    fn parameter_gradients_match_finite_differences() {
        let arch = ArchSpec::parse("mlp:6").unwrap();
        let mut net = Mlp::init(&arch, 4, 3, 7);
        assert!(net.num_params() <= 200);
        let x = array![
            [0.2, 0.8, 0.5, 0.1],
            [0.9, 0.3, 0.4, 0.6],
            [0.05, 0.55, 0.75, 0.35]
        ];
        let y = [0u32, 2, 1];

        let trace = net.forward(&x);
        let probs = softmax_rows(trace.logits());
        let batch = x.nrows() as f64;
        let mut dlogits = probs.clone();
        for (row, &label) in y.iter().enumerate() {
            dlogits[(row, label as usize)] -= 1.0;
        }
        dlogits /= batch;
        let (grads, _) = net.backward(&trace, &dlogits);
        let analytic = grads.flat();

        let step = 1e-5;
        let base_params = net.params();
        for idx in 0..base_params.len() {
            let mut plus = base_params.clone();
            plus[idx] += step;
            net.set_params(&plus).unwrap();
            let loss_plus = cross_entropy_probs(&softmax_rows(&net.logits(&x)), &y);
            let mut minus = base_params.clone();
            minus[idx] -= step;
            net.set_params(&minus).unwrap();
            let loss_minus = cross_entropy_probs(&softmax_rows(&net.logits(&x)), &y);
            let numeric = (loss_plus - loss_minus) / (2.0 * step);
            let denom = numeric.abs().max(analytic[idx].abs()).max(1e-8);
            assert!(
                ((numeric - analytic[idx]) / denom).abs() < 1e-4,
                "param {idx}: numeric {numeric} vs analytic {}",
                analytic[idx]
            );
        }
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let arch = ArchSpec::parse("mlp:5").unwrap();
        let net = Mlp::init(&arch, 3, 2, 13);
        let x = array![[0.4, 0.6, 0.2]];
        let y = [1u32];

        let trace = net.forward(&x);
        let probs = softmax_rows(trace.logits());
        let mut dlogits = probs;
        dlogits[(0, 1)] -= 1.0;
        let (_, dinput) = net.backward(&trace, &dlogits);

        let step = 1e-6;
        for col in 0..3 {
            let mut plus = x.clone();
            plus[(0, col)] += step;
            let lp = cross_entropy_probs(&softmax_rows(&net.logits(&plus)), &y);
            let mut minus = x.clone();
            minus[(0, col)] -= step;
            let lm = cross_entropy_probs(&softmax_rows(&net.logits(&minus)), &y);
            let numeric = (lp - lm) / (2.0 * step);
            assert_relative_eq!(numeric, dinput[(0, col)], max_relative = 1e-4);
        }
    }
}
