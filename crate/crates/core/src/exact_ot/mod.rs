//! Ground-truth discrete optimal transport: exact linear-programming
//! solutions of the transportation problem together with their dual
//! potentials, plus a permutation brute-force oracle for small uniform
//! instances.

mod simplex;

pub use simplex::exact_solve;

use rayon::prelude::*;
use thiserror::Error;

use crate::tensor::Array;

#[derive(Debug, Error)]
pub enum OtError {
    #[error("point dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("measure has empty support")]
    EmptySupport,

    #[error("weights sum to {0}, expected 1 within 1e-12")]
    WeightsNotNormalized(f64),

    #[error("negative weight {0}")]
    NegativeWeight(f64),

    #[error("weight count {weights} does not match point count {points}")]
    WeightCountMismatch { points: usize, weights: usize },

    #[error("cost exponent must satisfy p >= 1, got {0}")]
    BadExponent(f64),

    #[error("cost matrix is {rows}x{cols}, measures have {n} and {m} atoms")]
    CostShapeMismatch {
        rows: usize,
        cols: usize,
        n: usize,
        m: usize,
    },

    #[error("solver did not reach optimality within {pivots} pivots")]
    NonConvergence { pivots: usize },

    #[error("brute force requires uniform weights and at most {max} atoms per side, got {n}x{m}")]
    BruteForceRefused { n: usize, m: usize, max: usize },

    #[error("csv: {0}")]
    Csv(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Tensor(#[from] crate::tensor::TensorError),
}

pub type Result<T> = std::result::Result<T, OtError>;

/// A finite weighted point cloud: the empirical stand-in for a probability
/// measure, and the shape every minibatch takes.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    points: Array,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    /// `points` is (n, d); `weights` must be nonnegative and sum to 1
    /// within 1e-12.
    pub fn new(points: Array, weights: Vec<f64>) -> Result<Self> {
        let n = points.rows();
        if n == 0 {
            return Err(OtError::EmptySupport);
        }
        if weights.len() != n {
            return Err(OtError::WeightCountMismatch {
                points: n,
                weights: weights.len(),
            });
        }
        if let Some(&w) = weights.iter().find(|&&w| w < 0.0) {
            return Err(OtError::NegativeWeight(w));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(OtError::WeightsNotNormalized(total));
        }
        Ok(DiscreteMeasure { points, weights })
    }

    /// Uniform weights 1/n over the rows of `points`.
    pub fn uniform(points: Array) -> Result<Self> {
        let n = points.rows();
        if n == 0 {
            return Err(OtError::EmptySupport);
        }
        let w = 1.0 / n as f64;
        let mut weights = vec![w; n];
        // Force the sum to land exactly on 1.0.
        let partial: f64 = weights.iter().take(n - 1).sum();
        weights[n - 1] = 1.0 - partial;
        Self::new(points, weights)
    }

    pub fn len(&self) -> usize {
        self.points.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.cols()
    }

    pub fn points(&self) -> &Array {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn point(&self, i: usize) -> &[f64] {
        self.points.row(i)
    }

    pub fn is_uniform(&self) -> bool {
        let w = 1.0 / self.len() as f64;
        self.weights.iter().all(|&x| (x - w).abs() < 1e-12)
    }

    /// The same support translated by `v`.
    pub fn translated(&self, v: &[f64]) -> Result<Self> {
        let d = self.dim();
        if v.len() != d {
            return Err(OtError::DimensionMismatch(d, v.len()));
        }
        let mut data = self.points.data().to_vec();
        for (i, x) in data.iter_mut().enumerate() {
            *x += v[i % d];
        }
        Ok(DiscreteMeasure {
            points: Array::matrix(self.len(), d, data).expect("same size"),
            weights: self.weights.clone(),
        })
    }
}

/// Pairwise ground costs `‖x_i − y_j‖^p` with the exponent recorded.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    entries: Array,
    exponent: f64,
}

impl CostMatrix {
    pub fn entries(&self) -> &Array {
        &self.entries
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    pub fn rows(&self) -> usize {
        self.entries.rows()
    }

    pub fn cols(&self) -> usize {
        self.entries.cols()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries.get2(i, j)
    }
}

/// Euclidean ground metric raised to the power `p >= 1`.
pub fn cost_matrix(x: &DiscreteMeasure, y: &DiscreteMeasure, p: f64) -> Result<CostMatrix> {
    if x.dim() != y.dim() {
        return Err(OtError::DimensionMismatch(x.dim(), y.dim()));
    }
    if p < 1.0 {
        return Err(OtError::BadExponent(p));
    }
    let (n, m, d) = (x.len(), y.len(), x.dim());
    let mut data = vec![0.0; n * m];
    data.par_chunks_mut(m).enumerate().for_each(|(i, row)| {
        let xi = x.point(i);
        for (j, c) in row.iter_mut().enumerate() {
            let yj = y.point(j);
            let mut sq = 0.0;
            for k in 0..d {
                let diff = xi[k] - yj[k];
                sq += diff * diff;
            }
            let dist = sq.sqrt();
            *c = if p == 1.0 {
                dist
            } else if p == 2.0 {
                sq
            } else {
                dist.powf(p)
            };
        }
    });
    Ok(CostMatrix {
        entries: Array::matrix(n, m, data).expect("sized correctly"),
        exponent: p,
    })
}

/// A coupling between two measures: row sums reproduce the source weights,
/// column sums the target weights.
#[derive(Debug, Clone)]
pub struct TransportPlan {
    coupling: Array,
}

impl TransportPlan {
    pub(crate) fn new(coupling: Array) -> Self {
        TransportPlan { coupling }
    }

    pub fn coupling(&self) -> &Array {
        &self.coupling
    }

    pub fn mass(&self, i: usize, j: usize) -> f64 {
        self.coupling.get2(i, j)
    }

    /// Worst absolute deviation of the marginals from the given weights.
    pub fn marginal_violation(&self, mu: &[f64], nu: &[f64]) -> f64 {
        let n = self.coupling.rows();
        let mut worst: f64 = 0.0;
        for (i, w) in mu.iter().enumerate().take(n) {
            let sum: f64 = self.coupling.row(i).iter().sum();
            worst = worst.max((sum - w).abs());
        }
        for (j, w) in nu.iter().enumerate().take(self.coupling.cols()) {
            let mut sum = 0.0;
            for i in 0..n {
                sum += self.coupling.get2(i, j);
            }
            worst = worst.max((sum - w).abs());
        }
        worst
    }
}

/// Dual value vectors on the two supports, tagged by whether they satisfy
/// the admissibility constraint `φ_i + ψ_j ≤ C_ij` everywhere.
#[derive(Debug, Clone)]
pub struct DualPotentials {
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
    pub admissible: bool,
}

impl DualPotentials {
    /// Check `φ_i + ψ_j ≤ C_ij + slack` over all pairs and tag accordingly.
    pub fn tagged(phi: Vec<f64>, psi: Vec<f64>, costs: &CostMatrix, slack: f64) -> Self {
        let mut admissible = true;
        'outer: for (i, p) in phi.iter().enumerate().take(costs.rows()) {
            for (j, q) in psi.iter().enumerate().take(costs.cols()) {
                if p + q > costs.get(i, j) + slack {
                    admissible = false;
                    break 'outer;
                }
            }
        }
        DualPotentials {
            phi,
            psi,
            admissible,
        }
    }

    /// The dual objective Σ φ_i μ_i + Σ ψ_j ν_j.
    pub fn objective(&self, mu: &[f64], nu: &[f64]) -> f64 {
        let a: f64 = self.phi.iter().zip(mu).map(|(p, w)| p * w).sum();
        let b: f64 = self.psi.iter().zip(nu).map(|(p, w)| p * w).sum();
        a + b
    }
}

/// Exact solution of one transport instance.
#[derive(Debug, Clone)]
pub struct ExactSolution {
    pub value: f64,
    pub plan: TransportPlan,
    pub duals: DualPotentials,
    pub pivots: usize,
}

const BRUTE_FORCE_MAX: usize = 8;

/// Minimum over all permutation matchings of the mean matched cost. For
/// uniform equal-size marginals the Birkhoff–von Neumann theorem makes
/// this the LP optimum, so it serves as an independent oracle for
/// [`exact_solve`]. Sizes above 8 or non-uniform weights are refused.
pub fn brute_force_solve(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    costs: &CostMatrix,
) -> Result<f64> {
    let n = mu.len();
    if n != nu.len() || n > BRUTE_FORCE_MAX || !mu.is_uniform() || !nu.is_uniform() {
        return Err(OtError::BruteForceRefused {
            n,
            m: nu.len(),
            max: BRUTE_FORCE_MAX,
        });
    }
    check_cost_shape(costs, mu, nu)?;
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    permute(&mut perm, 0, &mut |p| {
        let total: f64 = p.iter().enumerate().map(|(i, &j)| costs.get(i, j)).sum();
        if total < best {
            best = total;
        }
    });
    Ok(best / n as f64)
}

fn permute(perm: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == perm.len() {
        visit(perm);
        return;
    }
    for i in k..perm.len() {
        perm.swap(k, i);
        permute(perm, k + 1, visit);
        perm.swap(k, i);
    }
}

pub(crate) fn check_cost_shape(
    costs: &CostMatrix,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
) -> Result<()> {
    if costs.rows() != mu.len() || costs.cols() != nu.len() {
        return Err(OtError::CostShapeMismatch {
            rows: costs.rows(),
            cols: costs.cols(),
            n: mu.len(),
            m: nu.len(),
        });
    }
    Ok(())
}

/// 1-Wasserstein distance between two measures (exact LP, p = 1).
pub fn wasserstein_1(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    let costs = cost_matrix(mu, nu, 1.0)?;
    Ok(exact_solve(mu, nu, &costs)?.value)
}

// ---- CSV interop ----
//
// One point per row, plain decimal columns; an optional trailing weight
// column turns a point cloud into a weighted measure.

/// Write a measure as CSV. `with_weights` appends the weight column.
pub fn write_measure_csv<W: std::io::Write>(
    sink: &mut W,
    measure: &DiscreteMeasure,
    with_weights: bool,
) -> Result<()> {
    for i in 0..measure.len() {
        let coords: Vec<String> = measure.point(i).iter().map(|v| format!("{v:?}")).collect();
        if with_weights {
            writeln!(sink, "{},{:?}", coords.join(","), measure.weights()[i])?;
        } else {
            writeln!(sink, "{}", coords.join(","))?;
        }
    }
    Ok(())
}

/// Read a measure from CSV. With `with_weights` the last column holds
/// weights; otherwise the measure is uniform.
pub fn read_measure_csv<R: std::io::BufRead>(
    source: R,
    with_weights: bool,
) -> Result<DiscreteMeasure> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in source.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let values: std::result::Result<Vec<f64>, _> =
            trimmed.split(',').map(|f| f.trim().parse::<f64>()).collect();
        let values = values.map_err(|e| OtError::Csv(format!("line {}: {e}", lineno + 1)))?;
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(OtError::EmptySupport);
    }
    let width = rows[0].len();
    if rows.iter().any(|r| r.len() != width) {
        return Err(OtError::Csv("rows have inconsistent column counts".into()));
    }
    if with_weights {
        if width < 2 {
            return Err(OtError::Csv(
                "need at least one coordinate plus a weight column".into(),
            ));
        }
        let weights: Vec<f64> = rows.iter().map(|r| r[width - 1]).collect();
        let points: Vec<Vec<f64>> = rows.iter().map(|r| r[..width - 1].to_vec()).collect();
        DiscreteMeasure::new(Array::from_rows(&points)?, weights)
    } else {
        DiscreteMeasure::uniform(Array::from_rows(&rows)?)
    }
}
