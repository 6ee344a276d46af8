//! Experiment runners and reporting: the approximation, stability and toy
//! generative-training protocols, the oracle self-check, declarative TOML
//! configuration, and CSV/JSON/SVG report emission.

mod runners;
mod svg;

pub use runners::{run_experiment, run_approximation, run_oracle_check, run_stability, run_toy_wgan};

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{self, DataError, Dataset, Normalization};
use crate::entropic_ot::EntropicError;
use crate::estimators::{EstimatorConfig, EstimatorError, Method, OptimizerSpec};
use crate::nn::{NnError, OptMethod};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    /// CLI exit code: 2 for configuration problems, 3 for numerical
    /// failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Numerical(_) => 3,
            HarnessError::Io(_) => 1,
        }
    }
}

macro_rules! numerical_from {
    ($($ty:ty),*) => {$(
        impl From<$ty> for HarnessError {
            fn from(e: $ty) -> Self {
                HarnessError::Numerical(e.to_string())
            }
        }
    )*};
}
numerical_from!(EstimatorError, NnError, EntropicError, crate::exact_ot::OtError, DataError, crate::tensor::TensorError);

pub type Result<T> = std::result::Result<T, HarnessError>;

/// `err(d_est, d_ground) = max(0, d_ground - d_est)`: an estimator that
/// exceeds the reference is not charged, because the reference maximizes
/// the same kind of objective and can itself be beaten.
pub fn error_metric(d_est: f64, d_ground: f64) -> f64 {
    (d_ground - d_est).max(0.0)
}

// ---- configuration ----

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    #[serde(rename = "approx")]
    Approximation,
    Stability,
    ToyWgan,
    OracleCheck,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Approximation => "approx",
            ExperimentKind::Stability => "stability",
            ExperimentKind::ToyWgan => "toy-wgan",
            ExperimentKind::OracleCheck => "oracle-check",
        }
    }
}

/// Dataset selection. `mnist` expects IDX files under the path (joined
/// with `OTBENCH_DATA_ROOT` when relative); the synthetic kinds need no
/// files at all.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum DatasetSpec {
    /// Standard Gaussians shifted by +shift and -shift.
    GaussianShift {
        size: usize,
        shift: Vec<f64>,
        #[serde(default)]
        paired: bool,
    },
    /// IDX images from disk.
    Mnist {
        path: PathBuf,
        #[serde(default)]
        normalization: NormalizationSpec,
    },
    /// Gaussian-mixture surrogate with image-like [0, 1] coordinates.
    SyntheticMnist {
        size: usize,
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default = "default_clusters")]
        clusters: usize,
    },
    /// Gaussian mixture with explicit centers: the toy generative target.
    GaussianMixture {
        size: usize,
        centers: Vec<Vec<f64>>,
        #[serde(default = "default_mixture_std")]
        std: f64,
    },
    /// Point cloud from CSV (one point per row).
    Csv { path: PathBuf },
}

fn default_mixture_std() -> f64 {
    0.4
}

fn default_dim() -> usize {
    784
}

fn default_clusters() -> usize {
    10
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum NormalizationSpec {
    Raw,
    #[default]
    ZeroOne,
    PlusMinusOne,
}

impl From<NormalizationSpec> for Normalization {
    fn from(spec: NormalizationSpec) -> Self {
        match spec {
            NormalizationSpec::Raw => Normalization::Raw,
            NormalizationSpec::ZeroOne => Normalization::ZeroOne,
            NormalizationSpec::PlusMinusOne => Normalization::PlusMinusOne,
        }
    }
}

/// One estimator entry in the config. Omitted fields fall back to the
/// per-method defaults.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodSpec {
    pub kind: MethodKind,
    #[serde(default)]
    pub lr: Option<f64>,
    #[serde(default)]
    pub optimizer: Option<OptimizerKind>,
    /// WC box half-width.
    #[serde(default)]
    pub clip: Option<f64>,
    /// GP penalty weight.
    #[serde(default)]
    pub lambda: Option<f64>,
    /// CEPS relaxation strength.
    #[serde(default)]
    pub epsilon: Option<f64>,
    /// Adam betas.
    #[serde(default)]
    pub betas: Option<[f64; 2]>,
    /// Whether WC clips biases too.
    #[serde(default)]
    pub clip_biases: Option<bool>,
    /// Iteration/tolerance budget of the entropic oracle for this method.
    #[serde(default)]
    pub oracle_max_iterations: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodKind {
    Wc,
    Gp,
    Ct,
    Ceps,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    Rmsprop,
    Adam,
}

impl MethodSpec {
    pub fn of(kind: MethodKind) -> Self {
        MethodSpec {
            kind,
            lr: None,
            optimizer: None,
            clip: None,
            lambda: None,
            epsilon: None,
            betas: None,
            clip_biases: None,
            oracle_max_iterations: None,
        }
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = Some(epsilon);
        self
    }

    pub fn method(&self) -> Result<Method> {
        Ok(match self.kind {
            MethodKind::Wc => Method::WeightClipping {
                clip: self.clip.unwrap_or(0.01),
            },
            MethodKind::Gp => Method::GradientPenalty {
                lambda: self.lambda.unwrap_or(10.0),
            },
            MethodKind::Ct => Method::CTransform,
            MethodKind::Ceps => {
                let epsilon = self.epsilon.unwrap_or(1.0);
                if epsilon <= 0.0 {
                    return Err(HarnessError::Config(format!(
                        "ceps epsilon must be positive, got {epsilon}"
                    )));
                }
                Method::CEpsTransform { epsilon }
            }
        })
    }

    /// Resolve into a full estimator configuration.
    pub fn estimator_config(
        &self,
        batch_size: usize,
        iterations: usize,
        seed: u64,
    ) -> Result<EstimatorConfig> {
        let method = self.method()?;
        let mut cfg = EstimatorConfig::defaults_for(method, batch_size, iterations);
        if let Some(kind) = self.optimizer {
            let opt_method = match kind {
                OptimizerKind::Rmsprop => OptMethod::RmsProp { rho: 0.99 },
                OptimizerKind::Adam => {
                    let betas = self.betas.unwrap_or([0.0, 0.9]);
                    OptMethod::Adam {
                        beta1: betas[0],
                        beta2: betas[1],
                    }
                }
            };
            cfg.optimizer = OptimizerSpec {
                method: opt_method,
                learning_rate: self.lr.unwrap_or(cfg.optimizer.learning_rate),
            };
        } else if let Some(lr) = self.lr {
            cfg.optimizer.learning_rate = lr;
        }
        if let Some(flag) = self.clip_biases {
            cfg.clip_biases = flag;
        }
        if let Some(iters) = self.oracle_max_iterations {
            cfg.entropic_oracle = cfg.entropic_oracle.with_max_iterations(iters);
        }
        cfg.seed = seed;
        Ok(cfg)
    }

    pub fn label(&self) -> Result<String> {
        Ok(self.method()?.label())
    }
}

/// Protocol knobs shared by the experiments; unused fields are ignored by
/// experiments that do not need them.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ProtocolConfig {
    /// Discriminator training iterations.
    pub train_iters: usize,
    /// Frozen-net evaluation batch pairs (approximation).
    pub eval_batches: usize,
    /// Minibatch size N.
    pub batch_size: usize,
    /// Independent repeats with fresh networks (approximation).
    pub repeats: usize,
    /// Training batch sizes (stability).
    pub train_sizes: Vec<usize>,
    /// Evaluation batch sizes (stability).
    pub eval_sizes: Vec<usize>,
    /// Minibatch evaluations per cell when the eval size is below the full
    /// subset (stability).
    pub eval_minibatches: usize,
    /// Per-measure subset size (stability).
    pub subset_size: usize,
    /// Generator iterations (toy generative run).
    pub generator_iters: usize,
    /// Discriminator steps per generator step.
    pub disc_iters_per_gen: usize,
    /// Generator latent dimension.
    pub latent_dim: usize,
    /// Full-measure snapshot cadence in generator iterations; 0 disables.
    pub snapshot_every: usize,
    /// Snapshot measure size.
    pub snapshot_size: usize,
    /// Random uniform instances for the oracle check.
    pub oracle_instances: usize,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            train_iters: 500,
            eval_batches: 100,
            batch_size: 64,
            repeats: 5,
            train_sizes: vec![64, 512],
            eval_sizes: vec![64, 512],
            eval_minibatches: 20,
            subset_size: 512,
            generator_iters: 2000,
            disc_iters_per_gen: 5,
            latent_dim: 2,
            snapshot_every: 200,
            snapshot_size: 512,
            oracle_instances: 200,
        }
    }
}

/// A full experiment description; the CLI reads this from TOML.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub protocol: ProtocolConfig,
    #[serde(default)]
    pub methods: Vec<MethodSpec>,
}

fn default_seed() -> u64 {
    7
}

impl ExperimentConfig {
    /// Ready-to-run defaults per experiment, needing no external files.
    pub fn default_for(kind: ExperimentKind) -> Self {
        let methods = vec![
            MethodSpec::of(MethodKind::Wc),
            MethodSpec::of(MethodKind::Gp),
            MethodSpec::of(MethodKind::Ct),
            MethodSpec::of(MethodKind::Ceps).with_epsilon(1.0),
            MethodSpec::of(MethodKind::Ceps).with_epsilon(0.1),
        ];
        let (dataset, protocol, methods) = match kind {
            ExperimentKind::Approximation => (
                DatasetSpec::SyntheticMnist {
                    size: 8192,
                    dim: 784,
                    clusters: 10,
                },
                ProtocolConfig::default(),
                methods,
            ),
            ExperimentKind::Stability => (
                DatasetSpec::SyntheticMnist {
                    size: 4096,
                    dim: 784,
                    clusters: 10,
                },
                ProtocolConfig {
                    repeats: 1,
                    ..ProtocolConfig::default()
                },
                methods,
            ),
            ExperimentKind::ToyWgan => (
                DatasetSpec::GaussianMixture {
                    size: 8192,
                    centers: vec![
                        vec![2.0, 2.0],
                        vec![-2.0, 2.0],
                        vec![-2.0, -2.0],
                        vec![2.0, -2.0],
                    ],
                    std: 0.4,
                },
                ProtocolConfig::default(),
                methods,
            ),
            ExperimentKind::OracleCheck => (
                DatasetSpec::SyntheticMnist {
                    size: 64,
                    dim: 3,
                    clusters: 4,
                },
                ProtocolConfig::default(),
                vec![],
            ),
        };
        ExperimentConfig {
            experiment: kind,
            seed: default_seed(),
            out_dir: None,
            dataset,
            protocol,
            methods,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Materialize the dataset this config names.
    pub fn build_dataset(&self) -> Result<Dataset> {
        build_dataset(&self.dataset, self.seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.experiment != ExperimentKind::OracleCheck && self.methods.is_empty() {
            return Err(HarnessError::Config(
                "at least one [[methods]] entry is required".into(),
            ));
        }
        for m in &self.methods {
            m.method()?;
        }
        if self.protocol.batch_size == 0 {
            return Err(HarnessError::Config("batch_size must be positive".into()));
        }
        Ok(())
    }
}

/// Resolve a possibly relative dataset path against `OTBENCH_DATA_ROOT`.
pub const DATA_ROOT_ENV: &str = "OTBENCH_DATA_ROOT";

fn resolve_path(path: &Path) -> PathBuf {
    if path.is_absolute() {
        return path.to_path_buf();
    }
    match std::env::var_os(DATA_ROOT_ENV) {
        Some(root) => Path::new(&root).join(path),
        None => path.to_path_buf(),
    }
}

pub fn build_dataset(spec: &DatasetSpec, seed: u64) -> Result<Dataset> {
    Ok(match spec {
        DatasetSpec::GaussianShift { size, shift, paired } => {
            // The two shifted clouds concatenated; experiments split them
            // back apart via their own protocol.
            let (a, b) = data::gaussian_shift_pair(*size / 2, shift.len(), shift, seed, *paired);
            let mut rows: Vec<Vec<f64>> = Vec::with_capacity(*size);
            for i in 0..a.len() {
                rows.push(a.point(i).to_vec());
            }
            for i in 0..b.len() {
                rows.push(b.point(i).to_vec());
            }
            Dataset::new(
                crate::tensor::Array::from_rows(&rows)
                    .map_err(|e| HarnessError::Numerical(e.to_string()))?,
                crate::data::Provenance::GaussianShift,
                Normalization::Raw,
            )
        }
        DatasetSpec::Mnist {
            path,
            normalization,
        } => {
            let resolved = resolve_path(path);
            data::load_idx_images(&resolved, (*normalization).into()).map_err(|e| {
                HarnessError::Config(format!("mnist file {}: {e}", resolved.display()))
            })?
        }
        DatasetSpec::SyntheticMnist {
            size,
            dim,
            clusters,
        } => data::synthetic_mixture(*size, *dim, *clusters, seed),
        DatasetSpec::GaussianMixture { size, centers, std } => {
            if centers.is_empty() {
                return Err(HarnessError::Config(
                    "gaussian-mixture needs at least one center".into(),
                ));
            }
            let dim = centers[0].len();
            if centers.iter().any(|c| c.len() != dim) {
                return Err(HarnessError::Config(
                    "gaussian-mixture centers must share a dimension".into(),
                ));
            }
            data::gaussian_mixture(*size, centers, *std, seed)
        }
        DatasetSpec::Csv { path } => {
            let resolved = resolve_path(path);
            let file = std::fs::File::open(&resolved).map_err(|e| {
                HarnessError::Config(format!("csv file {}: {e}", resolved.display()))
            })?;
            let measure =
                crate::exact_ot::read_measure_csv(std::io::BufReader::new(file), false)
                    .map_err(|e| HarnessError::Config(e.to_string()))?;
            Dataset::new(
                measure.points().clone(),
                crate::data::Provenance::Csv,
                Normalization::Raw,
            )
        }
    })
}

// ---- reports ----

/// One emitted record row. `phase` distinguishes training traces,
/// frozen-net evaluations and full-measure snapshots; `wall_ms` is pinned
/// to zero so reruns of a seeded config emit byte-identical CSV, with real
/// timing carried at report level in the JSON.
#[derive(Debug, Clone, Serialize)]
pub struct RecordRow {
    pub repeat: usize,
    pub phase: String,
    pub iter: usize,
    pub method: String,
    pub estimate: f64,
    pub ground_truth: Option<f64>,
    pub error: Option<f64>,
    pub wall_ms: u64,
}

impl RecordRow {
    pub fn new(
        repeat: usize,
        phase: &str,
        iter: usize,
        method: &str,
        estimate: f64,
        ground_truth: Option<f64>,
        error: Option<f64>,
    ) -> Self {
        RecordRow {
            repeat,
            phase: phase.to_string(),
            iter,
            method: method.to_string(),
            estimate,
            ground_truth,
            error,
            wall_ms: 0,
        }
    }
}

/// Per-method aggregate over evaluation records.
#[derive(Debug, Clone, Serialize)]
pub struct MethodAggregate {
    pub method: String,
    /// Mean over per-repeat mean errors.
    pub mean_error: f64,
    /// Sample standard deviation over per-repeat mean errors.
    pub sd_error: f64,
    pub mean_estimate: f64,
    pub repeats: usize,
    pub records: usize,
}

/// Stability table cell: one (train size, eval size) regime.
#[derive(Debug, Clone, Serialize)]
pub struct StabilityCell {
    pub method: String,
    pub n_train: usize,
    pub m_eval: usize,
    pub mean_estimate: f64,
    pub sd_estimate: f64,
    pub evaluations: usize,
}

/// Extra scalar facts a runner wants to surface (ground-truth rows,
/// checksums, pass/fail counters).
pub type Extras = BTreeMap<String, serde_json::Value>;

/// The full outcome of one experiment run.
#[derive(Debug, Serialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub aggregates: Vec<MethodAggregate>,
    pub stability: Vec<StabilityCell>,
    pub extras: Extras,
    /// Wall-clock total for the run; the only nondeterministic field, kept
    /// out of the CSV.
    pub wall_ms_total: u128,
    #[serde(skip)]
    pub records: Vec<RecordRow>,
}

impl ExperimentReport {
    pub fn new(config: &ExperimentConfig) -> Self {
        ExperimentReport {
            experiment: config.experiment.name().to_string(),
            seed: config.seed,
            config: config.clone(),
            aggregates: Vec::new(),
            stability: Vec::new(),
            extras: Extras::new(),
            wall_ms_total: 0,
            records: Vec::new(),
        }
    }

    /// Recompute one method's aggregate from the raw evaluation records;
    /// per-repeat mean errors first, then mean and sd across repeats.
    pub fn aggregate_from_records(&self, method: &str, phase: &str) -> Option<MethodAggregate> {
        let rows: Vec<&RecordRow> = self
            .records
            .iter()
            .filter(|r| r.method == method && r.phase == phase)
            .collect();
        if rows.is_empty() {
            return None;
        }
        let mut by_repeat: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for row in &rows {
            if let Some(err) = row.error {
                by_repeat.entry(row.repeat).or_default().push(err);
            }
        }
        let repeat_means: Vec<f64> = by_repeat.values().map(|errs| mean(errs)).collect();
        let mean_estimate = mean(&rows.iter().map(|r| r.estimate).collect::<Vec<_>>());
        Some(MethodAggregate {
            method: method.to_string(),
            mean_error: mean(&repeat_means),
            sd_error: sample_sd(&repeat_means),
            mean_estimate,
            repeats: by_repeat.len(),
            records: rows.len(),
        })
    }
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (n - 1); zero for fewer than two values.
pub fn sample_sd(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64;
    var.sqrt()
}

// ---- emission ----

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
    Svg,
}

impl std::str::FromStr for ReportFormat {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "svg" => Ok(ReportFormat::Svg),
            other => Err(HarnessError::Config(format!(
                "unknown format `{other}`; expected csv, json or svg"
            ))),
        }
    }
}

fn float_field(v: f64) -> String {
    // Shortest round-trip representation, locale independent.
    format!("{v:?}")
}

/// Render the raw records as CSV text.
pub fn records_to_csv(records: &[RecordRow]) -> String {
    let mut out = String::from("repeat,phase,iter,method,estimate,ground_truth,error,wall_ms\n");
    for r in records {
        let gt = r.ground_truth.map(float_field).unwrap_or_default();
        let err = r.error.map(float_field).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.repeat,
            r.phase,
            r.iter,
            r.method,
            float_field(r.estimate),
            gt,
            err,
            r.wall_ms
        ));
    }
    out
}

/// Write the report to `out_dir` in the requested formats. Returns the
/// paths written.
pub fn emit_report(
    report: &ExperimentReport,
    out_dir: &Path,
    formats: &[ReportFormat],
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for format in formats {
        match format {
            ReportFormat::Csv => {
                let path = out_dir.join("records.csv");
                std::fs::write(&path, records_to_csv(&report.records))?;
                written.push(path);
            }
            ReportFormat::Json => {
                let path = out_dir.join("report.json");
                let text = serde_json::to_string_pretty(report)
                    .map_err(|e| HarnessError::Numerical(e.to_string()))?;
                std::fs::write(&path, text)?;
                written.push(path);
            }
            ReportFormat::Svg => {
                let path = out_dir.join("trace.svg");
                std::fs::write(&path, svg::render_traces(report))?;
                written.push(path);
            }
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_metric_examples() {
        assert_eq!(error_metric(5.0, 7.0), 2.0);
        assert_eq!(error_metric(8.0, 7.0), 0.0);
        assert_eq!(error_metric(7.0, 7.0), 0.0);
    }

    #[test]
    fn default_configs_validate() {
        for kind in [
            ExperimentKind::Approximation,
            ExperimentKind::Stability,
            ExperimentKind::ToyWgan,
            ExperimentKind::OracleCheck,
        ] {
            let cfg = ExperimentConfig::default_for(kind);
            cfg.validate().unwrap();
            // And round-trip through TOML.
            let text = cfg.to_toml();
            let back = ExperimentConfig::from_toml(&text).unwrap();
            assert_eq!(back.experiment, cfg.experiment);
            assert_eq!(back.methods.len(), cfg.methods.len());
        }
    }

    #[test]
    fn method_spec_defaults_follow_the_method() {
        let wc = MethodSpec::of(MethodKind::Wc)
            .estimator_config(64, 10, 0)
            .unwrap();
        assert_eq!(wc.optimizer.learning_rate, 5e-5);
        assert!(matches!(wc.method, Method::WeightClipping { clip } if clip == 0.01));

        let gp = MethodSpec::of(MethodKind::Gp)
            .estimator_config(64, 10, 0)
            .unwrap();
        assert_eq!(gp.optimizer.learning_rate, 1e-4);
        assert!(matches!(
            gp.optimizer.method,
            OptMethod::Adam { beta1, beta2 } if beta1 == 0.0 && beta2 == 0.9
        ));
        assert!(matches!(gp.method, Method::GradientPenalty { lambda } if lambda == 10.0));

        let ct = MethodSpec::of(MethodKind::Ct)
            .estimator_config(64, 10, 0)
            .unwrap();
        assert_eq!(ct.optimizer.learning_rate, 1e-4);
        assert!(matches!(ct.optimizer.method, OptMethod::RmsProp { rho } if rho == 0.99));
    }

    #[test]
    fn bad_config_is_a_config_error() {
        let text = r#"
experiment = "approx"
[dataset]
kind = "synthetic-mnist"
size = 128
"#;
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        let err = cfg.validate().unwrap_err();
        assert_eq!(err.exit_code(), 2);

        assert!(ExperimentConfig::from_toml("experiment = 3").is_err());
    }

    #[test]
    fn csv_renders_empty_fields_for_missing_ground_truth() {
        let rows = vec![
            RecordRow::new(0, "train", 0, "ct", 1.5, None, None),
            RecordRow::new(0, "eval", 1, "ct", 2.0, Some(2.5), Some(0.5)),
        ];
        let text = records_to_csv(&rows);
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "repeat,phase,iter,method,estimate,ground_truth,error,wall_ms"
        );
        assert_eq!(lines.next().unwrap(), "0,train,0,ct,1.5,,,0");
        assert_eq!(lines.next().unwrap(), "0,eval,1,ct,2.0,2.5,0.5,0");
    }

    #[test]
    fn aggregates_recompute_from_records() {
        let cfg = ExperimentConfig::default_for(ExperimentKind::Approximation);
        let mut report = ExperimentReport::new(&cfg);
        for (repeat, errs) in [(0usize, [1.0, 2.0]), (1, [3.0, 5.0])] {
            for (i, e) in errs.iter().enumerate() {
                report.records.push(RecordRow::new(
                    repeat,
                    "eval",
                    i,
                    "ct",
                    10.0 - e,
                    Some(10.0),
                    Some(*e),
                ));
            }
        }
        let agg = report.aggregate_from_records("ct", "eval").unwrap();
        // Repeat means are 1.5 and 4.0.
        assert!((agg.mean_error - 2.75).abs() < 1e-12);
        assert!((agg.sd_error - ((1.5f64 - 2.75).powi(2) * 2.0).sqrt()).abs() < 1e-12);
        assert_eq!(agg.repeats, 2);
        assert_eq!(agg.records, 4);
    }
}
