//! Per-view evidential network: fully connected layers with rectifier hidden
//! activations and a non-negative evidence head.

mod adam;
mod checkpoint;

pub use adam::{AdamConfig, OptimizerState};
pub use checkpoint::{CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FamlError, Result};
use crate::opinion::EvidenceVector;

/// Non-negative activation applied to the final pre-activations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceActivation {
    #[default]
    Softplus,
    Exp,
    Relu,
}

/// Pre-activations above this are clamped before `exp` to keep evidence finite.
const EXP_CLAMP: f64 = 30.0;

impl EvidenceActivation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Self::Softplus => z.max(0.0) + (-z.abs()).exp().ln_1p(),
            Self::Exp => z.min(EXP_CLAMP).exp(),
            Self::Relu => z.max(0.0),
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Self::Softplus => {
                if z >= 0.0 {
                    1.0 / (1.0 + (-z).exp())
                } else {
                    let t = z.exp();
                    t / (1.0 + t)
                }
            }
            Self::Exp => {
                if z > EXP_CLAMP {
                    0.0
                } else {
                    z.exp()
                }
            }
            Self::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Self::Softplus => 0,
            Self::Exp => 1,
            Self::Relu => 2,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Self::Softplus),
            1 => Some(Self::Exp),
            2 => Some(Self::Relu),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetConfig {
    pub input_dim: usize,
    /// Empty means a linear model.
    pub hidden_dims: Vec<usize>,
    pub num_classes: usize,
    pub seed: u64,
    #[serde(default)]
    pub activation: EvidenceActivation,
}

impl NetConfig {
    /// One hidden layer of width `max(64, input_dim / 2)`.
    pub fn with_default_hidden(input_dim: usize, num_classes: usize, seed: u64) -> Self {
        Self {
            input_dim,
            hidden_dims: vec![default_hidden_width(input_dim)],
            num_classes,
            seed,
            activation: EvidenceActivation::Softplus,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(FamlError::Config("input_dim must be positive".into()));
        }
        if self.num_classes < 2 {
            return Err(FamlError::Config(format!(
                "num_classes must be at least 2, got {}",
                self.num_classes
            )));
        }
        if self.hidden_dims.contains(&0) {
            return Err(FamlError::Config("hidden layer widths must be positive".into()));
        }
        Ok(())
    }

    fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 2);
        dims.push(self.input_dim);
        dims.extend(&self.hidden_dims);
        dims.push(self.num_classes);
        dims.windows(2).map(|w| (w[1], w[0])).collect()
    }
}

pub fn default_hidden_width(input_dim: usize) -> usize {
    (input_dim / 2).max(64)
}

/// Weights are stored `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    fn zeros(out: usize, inp: usize) -> Self {
        Self {
            weights: Array2::zeros((out, inp)),
            bias: Array1::zeros(out),
        }
    }
}

#[derive(Debug, Clone)]
struct ForwardCache {
    /// Input to each layer, `B × in`.
    inputs: Vec<Array2<f64>>,
    /// Pre-activation of each layer, `B × out`.
    pre: Vec<Array2<f64>>,
}

#[derive(Debug, Clone)]
pub struct EvidentialNet {
    config: NetConfig,
    layers: Vec<Layer>,
    cache: Option<ForwardCache>,
}

/// Parameter gradients, shaped like the network layers.
#[derive(Debug, Clone, PartialEq)]
pub struct NetGradients {
    pub layers: Vec<Layer>,
}

impl NetGradients {
    /// Flattens in the same order as [`EvidentialNet::parameters`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend(l.weights.iter());
            out.extend(l.bias.iter());
        }
        out
    }
}

impl EvidentialNet {
    /// Fan-in scaled uniform weights in `±1/√fan_in`, zero biases.
    pub fn init(config: NetConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let layers = config
            .layer_shapes()
            .into_iter()
            .map(|(out, inp)| {
                let bound = 1.0 / (inp as f64).sqrt();
                Layer {
                    weights: Array2::from_shape_fn((out, inp), |_| rng.random_range(-bound..bound)),
                    bias: Array1::zeros(out),
                }
            })
            .collect();
        Ok(Self {
            config,
            layers,
            cache: None,
        })
    }

    /// A network whose every weight and bias is zero.
    pub fn zeroed(config: NetConfig) -> Result<Self> {
        config.validate()?;
        let layers = config
            .layer_shapes()
            .into_iter()
            .map(|(out, inp)| Layer::zeros(out, inp))
            .collect();
        Ok(Self {
            config,
            layers,
            cache: None,
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        self.cache = None;
        &mut self.layers
    }

    pub fn num_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// All parameters, layer by layer: weights row-major, then bias.
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_parameters());
        for l in &self.layers {
            out.extend(l.weights.iter());
            out.extend(l.bias.iter());
        }
        out
    }

    pub fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_parameters() {
            return Err(FamlError::dim("parameter vector", self.num_parameters(), params.len()));
        }
        let mut it = params.iter().copied();
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|w| *w = it.next().unwrap());
            l.bias.iter_mut().for_each(|b| *b = it.next().unwrap());
        }
        self.cache = None;
        Ok(())
    }

    fn check_input(&self, x: ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.config.input_dim {
            return Err(FamlError::dim("network input", self.config.input_dim, x.ncols()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(FamlError::Numeric("network input contains a non-finite value".into()));
        }
        Ok(())
    }

    fn run(&self, x: ArrayView2<f64>, mut cache: Option<&mut ForwardCache>) -> Array2<f64> {
        let last = self.layers.len() - 1;
        let mut h = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = h.dot(&layer.weights.t());
            z += &layer.bias;
            let out = if i == last {
                z.mapv(|v| self.config.activation.apply(v))
            } else {
                z.mapv(|v| v.max(0.0))
            };
            if let Some(c) = cache.as_deref_mut() {
                c.inputs.push(h);
                c.pre.push(z);
            }
            h = out;
        }
        h
    }

    /// Evidence for a single sample. Does not touch the backward cache.
    pub fn forward(&self, x: &[f64]) -> Result<EvidenceVector> {
        let view = ArrayView2::from_shape((1, x.len()), x)
            .map_err(|_| FamlError::Numeric("bad input shape".into()))?;
        let out = self.predict_batch(view)?;
        EvidenceVector::new(out.row(0).to_vec())
    }

    /// Batch evidence (`B × K`) without caching.
    pub fn predict_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(x)?;
        Ok(self.run(x, None))
    }

    /// Batch evidence with activations cached for [`EvidentialNet::backward`].
    pub fn forward_batch(&mut self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(x)?;
        let mut cache = ForwardCache {
            inputs: Vec::with_capacity(self.layers.len()),
            pre: Vec::with_capacity(self.layers.len()),
        };
        let out = self.run(x, Some(&mut cache));
        self.cache = Some(cache);
        Ok(out)
    }

    /// Reverse-mode gradients of `Σ_{n,k} upstream[n,k] · e[n,k]` with respect
    /// to every parameter, using the activations of the last `forward_batch`.
    /// The rectifier subgradient at 0 is 0.
    pub fn backward(&self, upstream: ArrayView2<f64>) -> Result<NetGradients> {
        let cache = self
            .cache
            .as_ref()
            .ok_or(FamlError::State("backward called without a cached forward pass"))?;
        let rows = cache.inputs[0].nrows();
        if upstream.dim() != (rows, self.config.num_classes) {
            return Err(FamlError::dim(
                "upstream gradient rows",
                rows,
                upstream.nrows(),
            ));
        }
        let last = self.layers.len() - 1;
        let act = self.config.activation;
        let mut delta = &upstream * &cache.pre[last].mapv(|z| act.derivative(z));
        let mut grads = Vec::with_capacity(self.layers.len());
        for i in (0..self.layers.len()).rev() {
            let weights = delta.t().dot(&cache.inputs[i]);
            let bias = delta.sum_axis(Axis(0));
            if i > 0 {
                let back = delta.dot(&self.layers[i].weights);
                delta = back * cache.pre[i - 1].mapv(|z| if z > 0.0 { 1.0 } else { 0.0 });
            }
            grads.push(Layer { weights, bias });
        }
        grads.reverse();
        Ok(NetGradients { layers: grads })
    }

    /// Convenience for a single input row.
    pub fn forward_cached(&mut self, x: &[f64]) -> Result<EvidenceVector> {
        let row = ArrayView1::from(x);
        let m = row.insert_axis(Axis(0));
        let out = self.forward_batch(m)?;
        EvidenceVector::new(out.row(0).to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::finite_diff_check;
    use approx::assert_relative_eq;
    use ndarray::array;

    fn cfg(hidden: Vec<usize>, seed: u64) -> NetConfig {
        NetConfig {
            input_dim: 4,
            hidden_dims: hidden,
            num_classes: 3,
            seed,
            activation: EvidenceActivation::Softplus,
        }
    }

    #[test]
    fn init_is_deterministic() {
        let a = EvidentialNet::init(cfg(vec![8], 42)).unwrap();
        let b = EvidentialNet::init(cfg(vec![8], 42)).unwrap();
        let bits = |n: &EvidentialNet| n.parameters().iter().map(|p| p.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        let c = EvidentialNet::init(cfg(vec![8], 43)).unwrap();
        assert_ne!(bits(&a), bits(&c));
        assert!(a.layers().iter().all(|l| l.bias.iter().all(|b| *b == 0.0)));
    }

    #[test]
    fn init_rejects_bad_config() {
        assert!(EvidentialNet::init(NetConfig { input_dim: 0, ..cfg(vec![], 0) }).is_err());
        assert!(EvidentialNet::init(NetConfig { num_classes: 1, ..cfg(vec![], 0) }).is_err());
        assert!(EvidentialNet::init(cfg(vec![4, 0], 0)).is_err());
    }

    #[test]
    fn zero_network_gives_ln2() {
        let net = EvidentialNet::zeroed(cfg(vec![5], 0)).unwrap();
        let e = net.forward(&[1.0, -2.0, 3.0, 0.5]).unwrap();
        assert_eq!(e.num_classes(), 3);
        for v in e.as_slice() {
            assert_relative_eq!(*v, std::f64::consts::LN_2, epsilon = 1e-15);
        }
    }

    #[test]
    fn linear_model_is_softplus_affine() {
        let mut net = EvidentialNet::zeroed(NetConfig { input_dim: 2, ..cfg(vec![], 0) }).unwrap();
        net.layers_mut()[0].weights = array![[1.0, -1.0], [0.5, 2.0], [-3.0, 0.0]];
        net.layers_mut()[0].bias = array![0.1, -0.2, 0.3];
        let x = [0.7, -0.4];
        let e = net.forward(&x).unwrap();
        let z = [1.1 + 0.1, 0.35 - 0.8 - 0.2, -2.1 + 0.3];
        for (got, z) in e.as_slice().iter().zip(z) {
            assert_relative_eq!(*got, (1.0 + f64::exp(z)).ln(), epsilon = 1e-14);
        }
    }

    #[test]
    fn linear_backward_closed_form() {
        let mut net = EvidentialNet::init(NetConfig { input_dim: 2, ..cfg(vec![], 9) }).unwrap();
        let x = [0.3, -1.2];
        net.forward_cached(&x).unwrap();
        let z: Vec<f64> = (0..3)
            .map(|k| net.layers()[0].weights.row(k).dot(&ArrayView1::from(&x[..])))
            .collect();
        for k in 0..3 {
            let mut up = Array2::zeros((1, 3));
            up[[0, k]] = 1.0;
            let g = net.backward(up.view()).unwrap();
            let sig = 1.0 / (1.0 + (-z[k]).exp());
            for j in 0..2 {
                assert_relative_eq!(g.layers[0].weights[[k, j]], sig * x[j], epsilon = 1e-14);
            }
            assert_relative_eq!(g.layers[0].bias[k], sig, epsilon = 1e-14);
        }
    }

    #[test]
    fn zero_upstream_zero_gradient() {
        let mut net = EvidentialNet::init(cfg(vec![6, 5], 3)).unwrap();
        let x = Array2::from_shape_fn((4, 4), |(i, j)| (i as f64) - (j as f64) * 0.3);
        net.forward_batch(x.view()).unwrap();
        let g = net.backward(Array2::zeros((4, 3)).view()).unwrap();
        assert!(g.flatten().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn backward_requires_forward() {
        let net = EvidentialNet::init(cfg(vec![6], 3)).unwrap();
        assert!(matches!(
            net.backward(Array2::zeros((1, 3)).view()),
            Err(FamlError::State(_))
        ));
    }

    #[test]
    fn forward_rejects_bad_input() {
        let net = EvidentialNet::init(cfg(vec![6], 3)).unwrap();
        assert!(matches!(net.forward(&[1.0, 2.0]), Err(FamlError::Dimension { .. })));
        assert!(matches!(
            net.forward(&[1.0, 2.0, f64::NAN, 0.0]),
            Err(FamlError::Numeric(_))
        ));
    }

    #[test]
    fn output_gradient_matches_finite_differences() {
        for seed in 0..20 {
            for act in [EvidenceActivation::Softplus, EvidenceActivation::Exp] {
                let config = NetConfig { activation: act, ..cfg(vec![7, 5], seed) };
                let mut net = EvidentialNet::init(config.clone()).unwrap();
                let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
                let x: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
                let k = (seed % 3) as usize;
                net.forward_cached(&x).unwrap();
                let mut up = Array2::zeros((1, 3));
                up[[0, k]] = 1.0;
                let grad = net.backward(up.view()).unwrap().flatten();
                let point = net.parameters();
                let mut probe = EvidentialNet::init(config).unwrap();
                let report = finite_diff_check(
                    |p| {
                        probe.set_parameters(p).unwrap();
                        probe.forward(&x).unwrap().as_slice()[k]
                    },
                    &grad,
                    &point,
                    1e-6,
                    1e-4,
                )
                .unwrap();
                assert!(report.passed, "seed {seed}: {report:?}");
            }
        }
    }

    #[test]
    fn evidence_nonnegative_for_wild_inputs() {
        for act in [EvidenceActivation::Softplus, EvidenceActivation::Exp, EvidenceActivation::Relu] {
            let net = EvidentialNet::init(NetConfig { activation: act, ..cfg(vec![8], 11) }).unwrap();
            for scale in [1e-3, 1.0, 1e3, 1e6] {
                let e = net.forward(&[scale, -scale, 0.5 * scale, -2.0 * scale]).unwrap();
                assert!(e.as_slice().iter().all(|v| *v >= 0.0 && v.is_finite()));
            }
        }
    }
}
