//! MLP discriminators and generators, the optimizers used to train them,
//! and the weight-clipping projection.
//!
//! Discriminators are scalar fields `ℝ^d → ℝ` built from two ReLU hidden
//! layers and a linear output; generators share the structure with a
//! vector output. All parameters are `f64` and every constructor is
//! seeded, so identical seeds give bit-identical networks.

use std::collections::BTreeMap;
use std::io::{self, Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::tensor::{Array, Bindings, Graph, GradientMap, LeafKind, NodeId};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("an MLP needs at least input and output widths, got {0} entries")]
    TooFewWidths(usize),

    #[error("width {0} must be positive")]
    ZeroWidth(usize),

    #[error("a discriminator must end in a single output, got width {0}")]
    NotScalarOutput(usize),

    #[error("generator latent dim {latent} exceeds data dim {data}")]
    LatentWiderThanData { latent: usize, data: usize },

    #[error("gradient for `{name}` has shape {got:?}, parameter has {expected:?}")]
    GradShapeMismatch {
        name: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },

    #[error("no gradient provided for parameter `{0}`")]
    MissingGrad(String),

    #[error("clip bound must be positive, got {0}")]
    BadClipBound(f64),

    #[error("checkpoint io: {0}")]
    Io(#[from] io::Error),

    #[error("checkpoint is malformed: {0}")]
    BadCheckpoint(String),

    #[error(transparent)]
    Tensor(#[from] crate::tensor::TensorError),
}

pub type Result<T> = std::result::Result<T, NnError>;

/// A fully connected network: ReLU hidden layers, linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    widths: Vec<usize>,
    /// weights[k]: (widths[k], widths[k+1]), biases[k]: (widths[k+1],)
    weights: Vec<Array>,
    biases: Vec<Array>,
}

/// Scalar-output MLP playing the role of the dual potential.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorNet(pub Mlp);

/// Vector-output MLP mapping latents to data space.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorNet(pub Mlp);

impl Mlp {
    /// He-style fan-in scaled uniform init: U(-√(6/fan_in), √(6/fan_in)),
    /// biases zero. Standard for ReLU stacks; fully determined by `seed`.
    pub fn init(widths: &[usize], seed: u64) -> Result<Self> {
        if widths.len() < 2 {
            return Err(NnError::TooFewWidths(widths.len()));
        }
        if let Some(&w) = widths.iter().find(|&&w| w == 0) {
            return Err(NnError::ZeroWidth(w));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for k in 0..widths.len() - 1 {
            let (fan_in, fan_out) = (widths[k], widths[k + 1]);
            let limit = (6.0 / fan_in as f64).sqrt();
            let data: Vec<f64> = (0..fan_in * fan_out)
                .map(|_| rng.gen_range(-limit..limit))
                .collect();
            weights.push(Array::matrix(fan_in, fan_out, data).expect("sized correctly"));
            biases.push(Array::vector(vec![0.0; fan_out]));
        }
        Ok(Mlp {
            widths: widths.to_vec(),
            weights,
            biases,
        })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().expect("at least two widths")
    }

    pub fn layer_count(&self) -> usize {
        self.weights.len()
    }

    pub fn param_count(&self) -> usize {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| w.len() + b.len())
            .sum()
    }

    /// Leaf name of layer-k weights in graphs built by [`Mlp::build_graph`].
    pub fn weight_name(k: usize) -> String {
        format!("w{k}")
    }

    pub fn bias_name(k: usize) -> String {
        format!("b{k}")
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for k in 0..self.layer_count() {
            names.push(Self::weight_name(k));
            names.push(Self::bias_name(k));
        }
        names
    }

    /// Parameters as named arrays, in layer order.
    pub fn params(&self) -> Vec<(String, &Array)> {
        let mut out = Vec::new();
        for k in 0..self.layer_count() {
            out.push((Self::weight_name(k), &self.weights[k]));
            out.push((Self::bias_name(k), &self.biases[k]));
        }
        out
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Array> {
        let (kind, idx) = name.split_at(1);
        let k: usize = idx.parse().ok()?;
        match kind {
            "w" => self.weights.get_mut(k),
            "b" => self.biases.get_mut(k),
            _ => None,
        }
    }

    /// Append the network body to `graph`, reading the batch from `input`
    /// (an (n, input_dim) node) and parameter leaves named `w0, b0, ...`.
    /// Returns the (n, output_dim) output node.
    pub fn append_to_graph(&self, graph: &mut Graph, input: NodeId) -> NodeId {
        let mut h = input;
        for k in 0..self.layer_count() {
            let w = graph.leaf(
                &Self::weight_name(k),
                LeafKind::Param,
                self.weights[k].shape().to_vec(),
            );
            let b = graph.leaf(
                &Self::bias_name(k),
                LeafKind::Param,
                self.biases[k].shape().to_vec(),
            );
            let z = graph.matmul(h, w).expect("layer widths chain");
            h = graph.add_row(z, b).expect("bias matches layer width");
            if k + 1 < self.layer_count() {
                h = graph.relu(h);
            }
        }
        h
    }

    /// Fresh graph computing the forward pass of a size-`n` batch bound to
    /// the leaf `x`. Returns `(graph, output node)`.
    pub fn build_graph(&self, n: usize) -> (Graph, NodeId) {
        let mut graph = Graph::new();
        let x = graph.leaf("x", LeafKind::Input, vec![n, self.input_dim()]);
        let out = self.append_to_graph(&mut graph, x);
        (graph, out)
    }

    /// Bind every parameter into `bindings`.
    pub fn bind_params(&self, bindings: &mut Bindings) {
        for (name, value) in self.params() {
            bindings.bind(&name, value.clone());
        }
    }

    /// Run the network on a batch of rows. One output row per input row;
    /// scalar-output networks return a plain vector.
    pub fn forward(&self, batch: &Array) -> Result<Array> {
        let n = batch.rows();
        let (graph, out) = self.build_graph(n);
        let mut bindings = Bindings::new();
        bindings.bind("x", batch.clone());
        self.bind_params(&mut bindings);
        let out = graph.eval(out, &bindings)?;
        if self.output_dim() == 1 {
            Ok(Array::vector(out.data().to_vec()))
        } else {
            Ok(out)
        }
    }

    /// Project every weight and bias entry into `[-bound, bound]`.
    pub fn clip(&mut self, bound: f64, clip_biases: bool) -> Result<()> {
        if bound <= 0.0 {
            return Err(NnError::BadClipBound(bound));
        }
        for w in &mut self.weights {
            for v in w.data_mut() {
                *v = v.clamp(-bound, bound);
            }
        }
        if clip_biases {
            for b in &mut self.biases {
                for v in b.data_mut() {
                    *v = v.clamp(-bound, bound);
                }
            }
        }
        Ok(())
    }

    /// Product of layer Frobenius norms: a certified (loose) Lipschitz
    /// bound for the ReLU network, since ‖W‖₂ ≤ ‖W‖_F and ReLU is
    /// 1-Lipschitz.
    pub fn lipschitz_bound(&self) -> f64 {
        self.weights.iter().map(Array::frobenius_norm).product()
    }

    /// Largest |entry| over all parameters.
    pub fn max_abs_param(&self) -> f64 {
        self.params()
            .iter()
            .flat_map(|(_, a)| a.data().iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// In-place ascent update `p += step` for each named step array.
    fn apply_steps(&mut self, steps: &BTreeMap<String, Vec<f64>>) {
        for (name, step) in steps {
            let p = self.param_mut(name).expect("step names come from params");
            for (v, s) in p.data_mut().iter_mut().zip(step) {
                *v += s;
            }
        }
    }

    /// FNV-1a over the parameter bytes; used to certify that evaluation
    /// phases leave networks untouched.
    pub fn param_checksum(&self) -> u64 {
        let mut hash: u64 = 0xcbf29ce484222325;
        for (_, a) in self.params() {
            for v in a.data() {
                for byte in v.to_le_bytes() {
                    hash ^= byte as u64;
                    hash = hash.wrapping_mul(0x100000001b3);
                }
            }
        }
        hash
    }
}

impl DiscriminatorNet {
    /// Default architecture: input dim d, two hidden layers of width 128,
    /// scalar output.
    pub fn standard(input_dim: usize, seed: u64) -> Result<Self> {
        Self::init(&[input_dim, 128, 128, 1], seed)
    }

    pub fn init(widths: &[usize], seed: u64) -> Result<Self> {
        if widths.len() < 2 {
            return Err(NnError::TooFewWidths(widths.len()));
        }
        let last = *widths.last().expect("nonempty");
        if last != 1 {
            return Err(NnError::NotScalarOutput(last));
        }
        Ok(DiscriminatorNet(Mlp::init(widths, seed)?))
    }

    pub fn mlp(&self) -> &Mlp {
        &self.0
    }

    pub fn mlp_mut(&mut self) -> &mut Mlp {
        &mut self.0
    }

    /// Scalar potential per batch row.
    pub fn forward(&self, batch: &Array) -> Result<Array> {
        self.0.forward(batch)
    }
}

impl GeneratorNet {
    pub fn init(widths: &[usize], seed: u64) -> Result<Self> {
        if widths.len() < 2 {
            return Err(NnError::TooFewWidths(widths.len()));
        }
        let (latent, data) = (widths[0], *widths.last().expect("nonempty"));
        if latent > data {
            return Err(NnError::LatentWiderThanData { latent, data });
        }
        Ok(GeneratorNet(Mlp::init(widths, seed)?))
    }

    pub fn mlp(&self) -> &Mlp {
        &self.0
    }

    pub fn mlp_mut(&mut self) -> &mut Mlp {
        &mut self.0
    }

    pub fn latent_dim(&self) -> usize {
        self.0.input_dim()
    }

    pub fn forward(&self, latents: &Array) -> Result<Array> {
        self.0.forward(latents)
    }
}

/// Optimizer family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptMethod {
    /// Running mean of squared gradients; `rho` smoothing.
    RmsProp { rho: f64 },
    /// First/second moment estimates with bias correction.
    Adam { beta1: f64, beta2: f64 },
}

/// Per-network optimizer state. The step convention is ASCENT: callers
/// pass gradients of the objective to maximize and parameters move uphill.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    method: OptMethod,
    lr: f64,
    eps: f64,
    step_count: u64,
    first_moment: BTreeMap<String, Vec<f64>>,
    second_moment: BTreeMap<String, Vec<f64>>,
}

impl OptimizerState {
    pub fn new(method: OptMethod, lr: f64) -> Self {
        OptimizerState {
            method,
            lr,
            eps: 1e-8,
            step_count: 0,
            first_moment: BTreeMap::new(),
            second_moment: BTreeMap::new(),
        }
    }

    /// RMSprop with the smoothing constant 0.99 used throughout.
    pub fn rmsprop(lr: f64) -> Self {
        Self::new(OptMethod::RmsProp { rho: 0.99 }, lr)
    }

    pub fn adam(lr: f64, beta1: f64, beta2: f64) -> Self {
        Self::new(OptMethod::Adam { beta1, beta2 }, lr)
    }

    pub fn method(&self) -> OptMethod {
        self.method
    }

    pub fn learning_rate(&self) -> f64 {
        self.lr
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// One ascent step on every parameter of `net` using `grads`.
    pub fn step(&mut self, net: &mut Mlp, grads: &GradientMap) -> Result<()> {
        let mut steps: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        self.step_count += 1;
        let t = self.step_count;
        for (name, param) in net.params() {
            let grad = grads
                .get(&name)
                .ok_or_else(|| NnError::MissingGrad(name.clone()))?;
            if grad.shape() != param.shape() {
                return Err(NnError::GradShapeMismatch {
                    name: name.clone(),
                    expected: param.shape().to_vec(),
                    got: grad.shape().to_vec(),
                });
            }
            let g = grad.data();
            let len = g.len();
            let step = match self.method {
                OptMethod::RmsProp { rho } => {
                    let v = self
                        .second_moment
                        .entry(name.clone())
                        .or_insert_with(|| vec![0.0; len]);
                    let mut step = vec![0.0; len];
                    for i in 0..len {
                        v[i] = rho * v[i] + (1.0 - rho) * g[i] * g[i];
                        step[i] = self.lr * g[i] / (v[i].sqrt() + self.eps);
                    }
                    step
                }
                OptMethod::Adam { beta1, beta2 } => {
                    let m = self
                        .first_moment
                        .entry(name.clone())
                        .or_insert_with(|| vec![0.0; len]);
                    let v = self
                        .second_moment
                        .entry(name.clone())
                        .or_insert_with(|| vec![0.0; len]);
                    let bc1 = 1.0 - beta1.powi(t as i32);
                    let bc2 = 1.0 - beta2.powi(t as i32);
                    let mut step = vec![0.0; len];
                    for i in 0..len {
                        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                        let m_hat = m[i] / bc1;
                        let v_hat = v[i] / bc2;
                        step[i] = self.lr * m_hat / (v_hat.sqrt() + self.eps);
                    }
                    step
                }
            };
            steps.insert(name, step);
        }
        net.apply_steps(&steps);
        Ok(())
    }
}

// ---- checkpoint format ----
//
// A checkpoint is a flat list of named arrays, little-endian:
//   [u32 name_len][name bytes (utf-8)][u32 rank][u64 dim; rank][f64 value; prod(dims)]
// repeated once per parameter, in layer order (w0, b0, w1, b1, ...).

/// Serialize every parameter of a network into `sink`.
pub fn write_checkpoint<W: Write>(net: &Mlp, sink: &mut W) -> Result<()> {
    for (name, array) in net.params() {
        let bytes = name.as_bytes();
        sink.write_all(&(bytes.len() as u32).to_le_bytes())?;
        sink.write_all(bytes)?;
        sink.write_all(&(array.shape().len() as u32).to_le_bytes())?;
        for &d in array.shape() {
            sink.write_all(&(d as u64).to_le_bytes())?;
        }
        for &v in array.data() {
            sink.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Read back a checkpoint as named arrays, in file order.
pub fn read_checkpoint<R: Read>(source: &mut R) -> Result<Vec<(String, Array)>> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    let mut pos = 0usize;
    let mut out = Vec::new();

    let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
        if *pos + n > bytes.len() {
            return Err(NnError::BadCheckpoint(format!(
                "expected {} more bytes at offset {}, file has {}",
                n,
                *pos,
                bytes.len()
            )));
        }
        let slice = &bytes[*pos..*pos + n];
        *pos += n;
        Ok(slice)
    };

    while pos < bytes.len() {
        let name_len = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
        let name = String::from_utf8(take(&mut pos, name_len)?.to_vec())
            .map_err(|e| NnError::BadCheckpoint(format!("name is not utf-8: {e}")))?;
        let rank = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap()) as usize);
        }
        let count: usize = shape.iter().product();
        let mut data = Vec::with_capacity(count);
        for _ in 0..count {
            data.push(f64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap()));
        }
        let array = Array::new(shape, data)
            .map_err(|e| NnError::BadCheckpoint(format!("array `{name}`: {e}")))?;
        out.push((name, array));
    }
    Ok(out)
}

/// Restore parameters by name into an architecture-compatible network.
pub fn load_checkpoint(net: &mut Mlp, entries: &[(String, Array)]) -> Result<()> {
    for (name, array) in entries {
        let param = net
            .param_mut(name)
            .ok_or_else(|| NnError::BadCheckpoint(format!("unknown parameter `{name}`")))?;
        if param.shape() != array.shape() {
            return Err(NnError::BadCheckpoint(format!(
                "parameter `{name}` has shape {:?}, checkpoint holds {:?}",
                param.shape(),
                array.shape()
            )));
        }
        *param = array.clone();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::eval_and_grad;

    #[test]
    fn parameter_count_for_standard_mnist_widths() {
        let net = DiscriminatorNet::init(&[784, 128, 128, 1], 7).unwrap();
        let expected = 784 * 128 + 128 + 128 * 128 + 128 + 128 + 1;
        assert_eq!(net.mlp().param_count(), expected);
    }

    #[test]
    fn same_seed_same_net() {
        let a = DiscriminatorNet::init(&[2, 128, 128, 1], 7).unwrap();
        let b = DiscriminatorNet::init(&[2, 128, 128, 1], 7).unwrap();
        assert_eq!(a, b);
        let c = DiscriminatorNet::init(&[2, 128, 128, 1], 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn two_dimensional_inputs_accepted() {
        let net = DiscriminatorNet::init(&[2, 128, 128, 1], 3).unwrap();
        let batch = Array::matrix(4, 2, vec![0.0; 8]).unwrap();
        let out = net.forward(&batch).unwrap();
        assert_eq!(out.len(), 4);
    }

    #[test]
    fn zero_weights_give_zero_outputs() {
        let mut net = DiscriminatorNet::init(&[3, 4, 1], 1).unwrap();
        for name in net.mlp().param_names() {
            let p = net.mlp_mut().param_mut(&name).unwrap();
            *p = Array::zeros(p.shape().to_vec());
        }
        let batch = Array::matrix(5, 3, (0..15).map(|v| v as f64).collect()).unwrap();
        let out = net.forward(&batch).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_layer_matches_hand_matrix_multiply() {
        let mut net = Mlp::init(&[2, 2], 1).unwrap();
        *net.param_mut("w0").unwrap() = Array::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        *net.param_mut("b0").unwrap() = Array::vector(vec![0.5, -0.5]);
        let x = Array::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let out = net.forward(&x).unwrap();
        // Rows of W plus bias: [1+0.5, 2-0.5], [3+0.5, 4-0.5].
        assert_eq!(out.data(), &[1.5, 1.5, 3.5, 3.5]);
    }

    #[test]
    fn batch_of_64_gives_64_outputs() {
        let net = DiscriminatorNet::standard(8, 5).unwrap();
        let batch = Array::matrix(64, 8, vec![0.25; 64 * 8]).unwrap();
        assert_eq!(net.forward(&batch).unwrap().len(), 64);
    }

    #[test]
    fn clip_projects_and_is_idempotent() {
        let mut net = DiscriminatorNet::init(&[4, 8, 1], 11).unwrap();
        *net.mlp_mut().param_mut("b0").unwrap() =
            Array::vector(vec![0.5, -0.005, 0.02, -0.6, 0.0, 0.01, -0.01, 0.3]);
        net.mlp_mut().clip(0.01, true).unwrap();
        assert!(net.mlp().max_abs_param() <= 0.01);
        let b0 = net.mlp().params()[1].1.clone();
        assert_eq!(b0.data()[0], 0.01); // 0.5 clipped down
        assert_eq!(b0.data()[1], -0.005); // interior point untouched
        let once = net.clone();
        net.mlp_mut().clip(0.01, true).unwrap();
        assert_eq!(net, once);
    }

    #[test]
    fn zero_gradient_is_identity_for_both_methods() {
        for opt in [
            OptimizerState::rmsprop(0.1),
            OptimizerState::adam(0.1, 0.0, 0.9),
        ] {
            let mut opt = opt;
            let mut net = DiscriminatorNet::init(&[3, 4, 1], 2).unwrap();
            let before = net.clone();
            let mut grads = GradientMap::default();
            for (name, p) in net.mlp().params() {
                grads.insert(name, Array::zeros(p.shape().to_vec()));
            }
            opt.step(net.mlp_mut(), &grads).unwrap();
            assert_eq!(net, before);
            assert_eq!(opt.step_count(), 1);
        }
    }

    #[test]
    fn rmsprop_drives_scalar_maximization_of_concave_objective() {
        // Maximize f(w) = -w² from w = 1: |w| must shrink monotonically,
        // mirroring the scalar recurrence w += lr * g / (sqrt(v) + eps).
        let mut w = 1.0f64;
        let mut v = 0.0f64;
        let (lr, rho, eps) = (0.1, 0.99, 1e-8);
        let mut prev = w.abs();
        for _ in 0..200 {
            let g = -2.0 * w;
            v = rho * v + (1.0 - rho) * g * g;
            w += lr * g / (v.sqrt() + eps);
            assert!(w.abs() <= prev + 1e-12, "|w| must not increase");
            prev = w.abs();
        }
        assert!(w.abs() < 0.1, "w stuck at {w}");

        // The same recurrence through the optimizer on a 1-parameter net.
        let mut net = Mlp::init(&[1, 1], 3).unwrap();
        *net.param_mut("w0").unwrap() = Array::matrix(1, 1, vec![1.0]).unwrap();
        *net.param_mut("b0").unwrap() = Array::vector(vec![0.0]);
        let mut opt = OptimizerState::rmsprop(0.1);
        let mut w_opt = 1.0;
        let mut v_ref = 0.0;
        for _ in 0..50 {
            let g = -2.0 * w_opt;
            let mut grads = GradientMap::default();
            grads.insert("w0".into(), Array::matrix(1, 1, vec![g]).unwrap());
            grads.insert("b0".into(), Array::vector(vec![0.0]));
            opt.step(&mut net, &grads).unwrap();
            v_ref = rho * v_ref + (1.0 - rho) * g * g;
            w_opt += lr * g / (v_ref.sqrt() + eps);
            let got = net.params()[0].1.data()[0];
            assert!((got - w_opt).abs() < 1e-12);
        }
    }

    #[test]
    fn adam_first_moment_equals_gradient_when_beta1_zero() {
        // β₁ = 0 makes the bias-corrected first moment the raw gradient, so
        // the very first step is lr * g / (sqrt(ĝ²) + eps) = lr * sign(g)
        // up to eps.
        let mut net = Mlp::init(&[1, 1], 3).unwrap();
        *net.param_mut("w0").unwrap() = Array::matrix(1, 1, vec![0.0]).unwrap();
        *net.param_mut("b0").unwrap() = Array::vector(vec![0.0]);
        let mut opt = OptimizerState::adam(1e-4, 0.0, 0.9);
        let g = -3.7;
        let mut grads = GradientMap::default();
        grads.insert("w0".into(), Array::matrix(1, 1, vec![g]).unwrap());
        grads.insert("b0".into(), Array::vector(vec![0.0]));
        opt.step(&mut net, &grads).unwrap();
        let got = net.params()[0].1.data()[0];
        let expect = 1e-4 * g / (g.abs() + 1e-8);
        assert!((got - expect).abs() < 1e-15, "step {got} vs {expect}");
    }

    #[test]
    fn final_layer_scaling_scales_outputs() {
        let mut net = DiscriminatorNet::init(&[3, 8, 8, 1], 9).unwrap();
        let batch = Array::matrix(6, 3, (0..18).map(|v| v as f64 * 0.1).collect()).unwrap();
        let base = net.forward(&batch).unwrap();
        let last = net.mlp().layer_count() - 1;
        let alpha = 2.5;
        for name in [Mlp::weight_name(last), Mlp::bias_name(last)] {
            let p = net.mlp_mut().param_mut(&name).unwrap();
            *p = p.map(|v| alpha * v);
        }
        let scaled = net.forward(&batch).unwrap();
        for (b, s) in base.data().iter().zip(scaled.data()) {
            assert!((alpha * b - s).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_graph_is_differentiable() {
        let net = DiscriminatorNet::init(&[3, 16, 16, 1], 17).unwrap();
        let (graph, out) = net.mlp().build_graph(2);
        let mut g2 = graph.clone();
        let loss = g2.mean(out);
        let mut bindings = Bindings::new();
        bindings.bind(
            "x",
            Array::matrix(2, 3, vec![0.1, -0.2, 0.3, 0.4, 0.5, -0.6]).unwrap(),
        );
        net.mlp().bind_params(&mut bindings);
        let (_, grads) = eval_and_grad(&g2, loss, &bindings, &["w0", "b2"]).unwrap();
        assert_eq!(grads.get("w0").unwrap().shape(), &[3, 16]);
        assert_eq!(grads.get("b2").unwrap().shape(), &[1]);
    }

    #[test]
    fn checkpoint_round_trip() {
        let net = DiscriminatorNet::init(&[5, 7, 1], 23).unwrap();
        let mut bytes = Vec::new();
        write_checkpoint(net.mlp(), &mut bytes).unwrap();
        let entries = read_checkpoint(&mut bytes.as_slice()).unwrap();
        let mut restored = DiscriminatorNet::init(&[5, 7, 1], 99).unwrap();
        load_checkpoint(restored.mlp_mut(), &entries).unwrap();
        assert_eq!(net, restored);

        let mut rewritten = Vec::new();
        write_checkpoint(restored.mlp(), &mut rewritten).unwrap();
        assert_eq!(bytes, rewritten);
    }

    #[test]
    fn truncated_checkpoint_is_rejected() {
        let net = DiscriminatorNet::init(&[5, 7, 1], 23).unwrap();
        let mut bytes = Vec::new();
        write_checkpoint(net.mlp(), &mut bytes).unwrap();
        bytes.truncate(bytes.len() - 3);
        assert!(matches!(
            read_checkpoint(&mut bytes.as_slice()),
            Err(NnError::BadCheckpoint(_))
        ));
    }

    #[test]
    fn generator_latent_must_not_exceed_data_dim() {
        assert!(GeneratorNet::init(&[8, 16, 2], 1).is_err());
        assert!(GeneratorNet::init(&[2, 16, 8], 1).is_ok());
    }
}
