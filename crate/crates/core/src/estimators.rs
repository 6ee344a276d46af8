//! The four minibatch dual estimators of the 1-Wasserstein distance:
//! weight clipping (WC), gradient penalty (GP), minibatch c-transform (CT)
//! and minibatch (c,ε)-transform (CEPS), together with the discriminator
//! training loop that maximizes each objective and records estimates
//! against ground-truth oracles.

use thiserror::Error;

use crate::entropic_ot::{
    c_eps_transform, self_ot_symmetric_step, sinkhorn_solve, EntropicConfig, EntropicError,
};
use crate::exact_ot::{cost_matrix, exact_solve, CostMatrix, DiscreteMeasure, OtError};
use crate::nn::{DiscriminatorNet, Mlp, NnError, OptMethod, OptimizerState};
use crate::tensor::{Array, Bindings, GradProgram, Graph, LeafKind, NodeId, TensorError};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("objective became non-finite at iteration {iteration}")]
    NonFiniteObjective { iteration: usize },

    #[error("batch sizes differ: {0} vs {1}")]
    BatchSizeMismatch(usize, usize),

    #[error("batch dimension {got} does not match the discriminator input {expected}")]
    DimMismatch { expected: usize, got: usize },

    #[error(transparent)]
    Tensor(#[from] TensorError),

    #[error(transparent)]
    Nn(#[from] NnError),

    #[error(transparent)]
    Ot(#[from] OtError),

    #[error(transparent)]
    Entropic(#[from] EntropicError),

    #[error(transparent)]
    Data(#[from] crate::data::DataError),
}

pub type Result<T> = std::result::Result<T, EstimatorError>;

/// Which dual estimation scheme is in play, with its method parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    /// Project all parameters into [-clip, clip] after every step.
    WeightClipping { clip: f64 },
    /// Penalize (1 - ‖∇φ‖)² at interpolates, weight lambda.
    GradientPenalty { lambda: f64 },
    /// Hard minibatch c-transform; admissible by construction.
    CTransform,
    /// Soft (c,ε)-transform; smooth and unconstrained.
    CEpsTransform { epsilon: f64 },
}

impl Method {
    pub fn tag(&self) -> &'static str {
        match self {
            Method::WeightClipping { .. } => "wc",
            Method::GradientPenalty { .. } => "gp",
            Method::CTransform => "ct",
            Method::CEpsTransform { .. } => "ceps",
        }
    }

    /// Label carrying the method parameter, for reports.
    pub fn label(&self) -> String {
        match self {
            Method::WeightClipping { clip } => format!("wc(xi={clip})"),
            Method::GradientPenalty { lambda } => format!("gp(lambda={lambda})"),
            Method::CTransform => "ct".to_string(),
            Method::CEpsTransform { epsilon } => format!("ceps(eps={epsilon})"),
        }
    }
}

/// Optimizer selection for one estimator run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerSpec {
    pub method: OptMethod,
    pub learning_rate: f64,
}

impl OptimizerSpec {
    pub fn build(&self) -> OptimizerState {
        OptimizerState::new(self.method, self.learning_rate)
    }
}

/// Complete configuration of one discriminator training run.
#[derive(Debug, Clone)]
pub struct EstimatorConfig {
    pub method: Method,
    pub optimizer: OptimizerSpec,
    pub batch_size: usize,
    pub iterations: usize,
    /// Whether weight clipping also projects biases.
    pub clip_biases: bool,
    /// Seed for the interpolation draws of the gradient penalty.
    pub seed: u64,
    /// Oracle controls for CEPS ground truth and self terms.
    pub entropic_oracle: EntropicConfig,
}

impl EstimatorConfig {
    /// Per-method defaults: WC uses RMSprop at 5e-5 with xi = 0.01, GP uses
    /// Adam at 1e-4 with betas (0, 0.9) and lambda = 10, the transforms use
    /// RMSprop at 1e-4.
    pub fn defaults_for(method: Method, batch_size: usize, iterations: usize) -> Self {
        let optimizer = match method {
            Method::WeightClipping { .. } => OptimizerSpec {
                method: OptMethod::RmsProp { rho: 0.99 },
                learning_rate: 5e-5,
            },
            Method::GradientPenalty { .. } => OptimizerSpec {
                method: OptMethod::Adam {
                    beta1: 0.0,
                    beta2: 0.9,
                },
                learning_rate: 1e-4,
            },
            Method::CTransform | Method::CEpsTransform { .. } => OptimizerSpec {
                method: OptMethod::RmsProp { rho: 0.99 },
                learning_rate: 1e-4,
            },
        };
        let eps = match method {
            Method::CEpsTransform { epsilon } => epsilon,
            _ => 1.0,
        };
        EstimatorConfig {
            method,
            optimizer,
            batch_size,
            iterations,
            clip_biases: true,
            seed: 0,
            entropic_oracle: EntropicConfig::new(eps).with_max_iterations(2000),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

// ---- objective graphs ----

/// Mean potential gap `mean φ(X) - mean φ(Y)`: the weight-clipping
/// objective and the base term of the gradient-penalty objective. Leaves:
/// `x`, `y` of shape (n, d) plus the network parameters.
pub fn dual_gap_objective(net: &Mlp, n: usize) -> (Graph, NodeId) {
    let mut graph = Graph::new();
    let d = net.input_dim();
    let x = graph.leaf("x", LeafKind::Input, vec![n, d]);
    let y = graph.leaf("y", LeafKind::Input, vec![n, d]);
    let phi_x = net.append_to_graph(&mut graph, x);
    let phi_y = net.append_to_graph(&mut graph, y);
    let mean_x = graph.mean(phi_x);
    let mean_y = graph.mean(phi_y);
    let out = graph.sub(mean_x, mean_y).expect("both scalar");
    (graph, out)
}

/// Append the penalty `mean_i (1 - ‖∇_z φ(z_i)‖)²` over the interpolation
/// leaf `z` (n, d). The inner gradient is emitted symbolically, so the
/// penalty node supports exact differentiation with respect to the
/// network parameters.
pub fn gradient_penalty_term(net: &Mlp, graph: &mut Graph, n: usize) -> NodeId {
    let d = net.input_dim();
    let z = graph.leaf("z", LeafKind::Input, vec![n, d]);
    let phi_z = net.append_to_graph(graph, z);
    let total = graph.sum(phi_z);
    let grad_z = graph
        .append_adjoints(total, &[z])
        .expect("scalar output")[0]
        .expect("z feeds the output");
    let squared = graph.square(grad_z);
    let row_sq = graph.row_sum(squared).expect("matrix");
    let row_norms = graph.sqrt(row_sq);
    let neg = graph.neg(row_norms);
    let dev = graph.shift(neg, 1.0);
    let dev_sq = graph.square(dev);
    graph.mean(dev_sq)
}

/// Full gradient-penalty objective `gap - lambda * penalty`. Returns the
/// graph, the objective node, and the raw gap node (the recorded distance
/// estimate; the penalty is a constraint surrogate, not part of the
/// distance).
pub fn gp_objective(net: &Mlp, n: usize, lambda: f64) -> (Graph, NodeId, NodeId) {
    let (mut graph, gap) = dual_gap_objective(net, n);
    let penalty = gradient_penalty_term(net, &mut graph, n);
    let weighted = graph.scale(penalty, lambda);
    let out = graph.sub(gap, weighted).expect("both scalar");
    (graph, out, gap)
}

/// Hard minibatch c-transform of potential values:
/// `ψ_i = min_j (C_ji - φ_j)`. The pair (φ, ψ) is admissible on the
/// minibatch supports by construction.
pub fn c_transform_minibatch(phi: &[f64], costs: &CostMatrix) -> Vec<f64> {
    let m = costs.cols();
    debug_assert_eq!(phi.len(), costs.rows());
    let mut psi = vec![f64::INFINITY; m];
    for (j, p) in phi.iter().enumerate() {
        for (i, out) in psi.iter_mut().enumerate() {
            let v = costs.get(j, i) - p;
            if v < *out {
                *out = v;
            }
        }
    }
    psi
}

/// The c-transform objective value `mean φ + mean φ^c` from raw potential
/// values on X, e.g. exact Kantorovich potentials.
pub fn ct_objective_from_values(phi: &[f64], costs: &CostMatrix) -> f64 {
    let psi = c_transform_minibatch(phi, costs);
    mean(phi) + mean(&psi)
}

/// c-transform objective graph: `mean φ(X) + mean_i min_j (C_ji - φ(x_j))`.
/// Leaves: `x` (n, d), `c` (n, m cost matrix) plus network parameters.
/// The gradient flows through φ both directly and inside the min, with the
/// argmin held fixed per evaluation (lowest index on ties).
pub fn objective_ct(net: &Mlp, n: usize, m: usize) -> (Graph, NodeId) {
    let mut graph = Graph::new();
    let d = net.input_dim();
    let x = graph.leaf("x", LeafKind::Input, vec![n, d]);
    let c = graph.leaf("c", LeafKind::Input, vec![n, m]);
    let phi_col = net.append_to_graph(&mut graph, x);
    let phi = graph.reshape(phi_col, vec![n]).expect("n x 1 output");
    let phi_spread = graph.col_broadcast(phi, m).expect("vector");
    let a = graph.sub(c, phi_spread).expect("same shape");
    let psi = graph.col_min(a).expect("matrix");
    let mean_phi = graph.mean(phi);
    let mean_psi = graph.mean(psi);
    let out = graph.add(mean_phi, mean_psi).expect("both scalar");
    (graph, out)
}

/// (c,ε)-transform objective graph:
/// `mean φ(X) + mean_i [-ε log((1/n) Σ_j exp((φ(x_j) - C_ji)/ε))]`.
/// Fully differentiable; same leaves as [`objective_ct`].
pub fn objective_ceps(net: &Mlp, n: usize, m: usize, epsilon: f64) -> (Graph, NodeId) {
    let mut graph = Graph::new();
    let d = net.input_dim();
    let x = graph.leaf("x", LeafKind::Input, vec![n, d]);
    let c = graph.leaf("c", LeafKind::Input, vec![n, m]);
    let phi_col = net.append_to_graph(&mut graph, x);
    let phi = graph.reshape(phi_col, vec![n]).expect("n x 1 output");
    let phi_spread = graph.col_broadcast(phi, m).expect("vector");
    let diff = graph.sub(phi_spread, c).expect("same shape");
    let scaled = graph.scale(diff, 1.0 / epsilon);
    let lse = graph.col_logsumexp(scaled).expect("matrix");
    let neg_eps = graph.scale(lse, -epsilon);
    let psi = graph.shift(neg_eps, epsilon * (n as f64).ln());
    let mean_phi = graph.mean(phi);
    let mean_psi = graph.mean(psi);
    let out = graph.add(mean_phi, mean_psi).expect("both scalar");
    (graph, out)
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

// ---- frozen-net evaluation ----

/// Evaluate the method's objective value on one batch pair without any
/// parameter update. For WC and GP this is the raw dual gap (the penalty
/// is a constraint surrogate, not part of the distance); for CT and CEPS
/// the corresponding transform objective.
pub fn estimate_distance(
    method: Method,
    net: &DiscriminatorNet,
    x: &DiscreteMeasure,
    y: &DiscreteMeasure,
) -> Result<f64> {
    check_batch(net, x, y, false)?;
    match method {
        Method::WeightClipping { .. } | Method::GradientPenalty { .. } => {
            let phi_x = net.forward(x.points())?;
            let phi_y = net.forward(y.points())?;
            Ok(mean(phi_x.data()) - mean(phi_y.data()))
        }
        Method::CTransform => {
            let phi = net.forward(x.points())?;
            let costs = cost_matrix(x, y, 1.0)?;
            Ok(ct_objective_from_values(phi.data(), &costs))
        }
        Method::CEpsTransform { epsilon } => {
            let phi = net.forward(x.points())?;
            let costs = cost_matrix(x, y, 1.0)?;
            // Minibatch form: uniform 1/n weights inside the soft min.
            let uniform = vec![1.0 / x.len() as f64; x.len()];
            let psi = c_eps_transform(phi.data(), &costs, epsilon, &uniform)?;
            Ok(mean(phi.data()) + mean(&psi))
        }
    }
}

fn check_batch(
    net: &DiscriminatorNet,
    x: &DiscreteMeasure,
    y: &DiscreteMeasure,
    equal_sizes: bool,
) -> Result<()> {
    if x.dim() != net.mlp().input_dim() || y.dim() != net.mlp().input_dim() {
        return Err(EstimatorError::DimMismatch {
            expected: net.mlp().input_dim(),
            got: if x.dim() != net.mlp().input_dim() {
                x.dim()
            } else {
                y.dim()
            },
        });
    }
    if equal_sizes && x.len() != y.len() {
        return Err(EstimatorError::BatchSizeMismatch(x.len(), y.len()));
    }
    Ok(())
}

// ---- training ----

/// One iteration's record: the method's estimate and, when the oracle is
/// on, the matching ground truth and the clamped error
/// `max(0, ground - estimate)` (summed per term for CEPS).
#[derive(Debug, Clone)]
pub struct EstimateRecord {
    pub iteration: usize,
    pub estimate: f64,
    pub ground_truth: Option<f64>,
    pub error: Option<f64>,
}

/// Which ground truth, if any, to record during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleMode {
    /// No ground truth, estimate-only records.
    Off,
    /// Exact LP value for WC/GP/CT; converged three-term Sinkhorn
    /// divergence for CEPS, with errors summed per term.
    On,
}

/// Outcome of a training run.
pub struct TrainOutcome {
    pub net: DiscriminatorNet,
    pub records: Vec<EstimateRecord>,
}

/// A compiled training context for one method, architecture and batch
/// size; reusable across iterations and runs.
pub struct DiscriminatorTrainer {
    cfg: EstimatorConfig,
    program: GradProgram,
    /// auxiliary node reported per evaluation: the raw-gap estimate for
    /// GP, unused otherwise
    has_gap_aux: bool,
    param_names: Vec<String>,
    input_dim: usize,
}

impl DiscriminatorTrainer {
    pub fn new(cfg: EstimatorConfig, net: &DiscriminatorNet) -> Result<Self> {
        let n = cfg.batch_size;
        let mlp = net.mlp();
        let param_names = mlp.param_names();
        let wanted: Vec<&str> = param_names.iter().map(String::as_str).collect();
        let (graph, objective, aux) = match cfg.method {
            Method::WeightClipping { .. } => {
                let (g, out) = dual_gap_objective(mlp, n);
                (g, out, None)
            }
            Method::GradientPenalty { lambda } => {
                let (g, out, gap) = gp_objective(mlp, n, lambda);
                (g, out, Some(gap))
            }
            Method::CTransform => {
                let (g, out) = objective_ct(mlp, n, n);
                (g, out, None)
            }
            Method::CEpsTransform { epsilon } => {
                let (g, out) = objective_ceps(mlp, n, n, epsilon);
                (g, out, None)
            }
        };
        let aux_nodes: Vec<NodeId> = aux.into_iter().collect();
        let program = GradProgram::compile_with_aux(&graph, objective, &wanted, &aux_nodes)?;
        Ok(DiscriminatorTrainer {
            has_gap_aux: !aux_nodes.is_empty(),
            cfg,
            program,
            param_names,
            input_dim: mlp.input_dim(),
        })
    }

    pub fn config(&self) -> &EstimatorConfig {
        &self.cfg
    }

    /// One ascent step on `net` for the batch pair, returning the method's
    /// distance estimate for this iteration.
    pub fn step(
        &self,
        net: &mut DiscriminatorNet,
        opt: &mut OptimizerState,
        x: &DiscreteMeasure,
        y: &DiscreteMeasure,
        rng: &mut ChaCha8Rng,
    ) -> Result<f64> {
        check_batch(net, x, y, true)?;
        let mut bindings = Bindings::new();
        bindings.bind("x", x.points().clone());
        net.mlp().bind_params(&mut bindings);
        match self.cfg.method {
            Method::WeightClipping { .. } => {
                bindings.bind("y", y.points().clone());
            }
            Method::GradientPenalty { .. } => {
                bindings.bind("y", y.points().clone());
                bindings.bind("z", interpolates(x, y, rng));
            }
            Method::CTransform | Method::CEpsTransform { .. } => {
                let costs = cost_matrix(x, y, 1.0)?;
                bindings.bind("c", costs.entries().clone());
            }
        }
        let (value, grads, aux) = self.program.run_with_aux(&bindings)?;
        opt.step(net.mlp_mut(), &grads)?;
        if let Method::WeightClipping { clip } = self.cfg.method {
            net.mlp_mut().clip(clip, self.cfg.clip_biases)?;
        }
        let estimate = if self.has_gap_aux {
            aux[0].as_scalar().expect("gap node is scalar")
        } else {
            value
        };
        Ok(estimate)
    }

    pub fn param_names(&self) -> &[String] {
        &self.param_names
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }
}

/// Interpolates `z_i = t_i x_i + (1 - t_i) y_i`, one uniform t per pair.
fn interpolates(x: &DiscreteMeasure, y: &DiscreteMeasure, rng: &mut ChaCha8Rng) -> Array {
    let (n, d) = (x.len(), x.dim());
    let mut data = Vec::with_capacity(n * d);
    for i in 0..n {
        let t: f64 = rng.gen_range(0.0..1.0);
        let (xi, yi) = (x.point(i), y.point(i));
        for k in 0..d {
            data.push(t * xi[k] + (1.0 - t) * yi[k]);
        }
    }
    Array::matrix(n, d, data).expect("sized correctly")
}

/// The recorded estimate and error of a CEPS evaluation: the full
/// Sinkhorn divergence with one-step self terms on the estimate side and
/// converged terms on the oracle side, errors clamped and summed per term.
pub fn ceps_record(
    cross_estimate: f64,
    x: &DiscreteMeasure,
    y: &DiscreteMeasure,
    epsilon: f64,
    oracle: OracleMode,
    oracle_cfg: &EntropicConfig,
) -> Result<(f64, Option<f64>, Option<f64>)> {
    let cx = cost_matrix(x, x, 1.0)?;
    let cy = cost_matrix(y, y, 1.0)?;
    let self_x = self_ot_symmetric_step(x, &cx, epsilon)?.value;
    let self_y = self_ot_symmetric_step(y, &cy, epsilon)?.value;
    let estimate = cross_estimate - 0.5 * (self_x + self_y);
    if oracle == OracleMode::Off {
        return Ok((estimate, None, None));
    }
    let cxy = cost_matrix(x, y, 1.0)?;
    let cross_gt = sinkhorn_solve(x, y, &cxy, oracle_cfg)?.value;
    let self_x_gt = sinkhorn_solve(x, x, &cx, oracle_cfg)?.value;
    let self_y_gt = sinkhorn_solve(y, y, &cy, oracle_cfg)?.value;
    let ground = cross_gt - 0.5 * (self_x_gt + self_y_gt);
    let error = (cross_gt - cross_estimate).max(0.0)
        + (self_x_gt - self_x).max(0.0)
        + (self_y_gt - self_y).max(0.0);
    Ok((estimate, Some(ground), Some(error)))
}

/// Train a discriminator for `cfg.iterations` steps on batch pairs pulled
/// from `batches`, recording the per-iteration estimate and optional
/// ground truth. WC applies the clip projection after every step. A
/// non-finite objective aborts with the iteration index.
pub fn train_discriminator(
    cfg: &EstimatorConfig,
    net: DiscriminatorNet,
    mut batches: impl FnMut(usize) -> Result<(DiscreteMeasure, DiscreteMeasure)>,
    oracle: OracleMode,
) -> Result<TrainOutcome> {
    let trainer = DiscriminatorTrainer::new(cfg.clone(), &net)?;
    let mut net = net;
    let mut opt = cfg.optimizer.build();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut records = Vec::with_capacity(cfg.iterations);
    for iteration in 0..cfg.iterations {
        let (x, y) = batches(iteration)?;
        let raw = trainer.step(&mut net, &mut opt, &x, &y, &mut rng);
        let raw = match raw {
            Err(EstimatorError::Tensor(TensorError::NonFinite { .. })) => {
                return Err(EstimatorError::NonFiniteObjective { iteration });
            }
            other => other?,
        };
        let (estimate, ground_truth, error) = match cfg.method {
            Method::CEpsTransform { epsilon } => {
                ceps_record(raw, &x, &y, epsilon, oracle, &cfg.entropic_oracle)?
            }
            _ => match oracle {
                OracleMode::Off => (raw, None, None),
                OracleMode::On => {
                    let costs = cost_matrix(&x, &y, 1.0)?;
                    let ground = exact_solve(&x, &y, &costs)?.value;
                    (raw, Some(ground), Some((ground - raw).max(0.0)))
                }
            },
        };
        records.push(EstimateRecord {
            iteration,
            estimate,
            ground_truth,
            error,
        });
    }
    Ok(TrainOutcome { net, records })
}
