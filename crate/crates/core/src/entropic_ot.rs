//! Entropy-relaxed optimal transport: log-domain Sinkhorn iterations, the
//! (c,ε)-transform, the unconstrained dual objective, and the debiased
//! Sinkhorn divergence.
//!
//! All exponential work happens through max-stabilized log-sum-exp, so no
//! choice of ε overflows. Non-convergence is reported through a flag with
//! the partial result still returned, never as an error.

use thiserror::Error;

use crate::exact_ot::{cost_matrix, CostMatrix, DiscreteMeasure, OtError};

#[derive(Debug, Error)]
pub enum EntropicError {
    #[error("relaxation strength must be positive, got {0}")]
    BadEpsilon(f64),

    #[error("entropic value {value} is negative; the 1/{p} power is undefined")]
    NegativeRadicand { value: f64, p: f64 },

    #[error("self-transport needs a square cost matrix, got {0}x{1}")]
    NotSquare(usize, usize),

    #[error(transparent)]
    Ot(#[from] OtError),
}

pub type Result<T> = std::result::Result<T, EntropicError>;

/// Iteration controls for the Sinkhorn solver.
#[derive(Debug, Clone, Copy)]
pub struct EntropicConfig {
    /// Relaxation strength ε > 0.
    pub epsilon: f64,
    pub max_iterations: usize,
    /// Stop once the L¹ marginal violation of the implied plan drops below
    /// this.
    pub tolerance: f64,
}

impl EntropicConfig {
    pub fn new(epsilon: f64) -> Self {
        EntropicConfig {
            epsilon,
            max_iterations: 1000,
            tolerance: 1e-9,
        }
    }

    pub fn with_max_iterations(mut self, n: usize) -> Self {
        self.max_iterations = n;
        self
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tolerance = tol;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.epsilon <= 0.0 || !self.epsilon.is_finite() {
            return Err(EntropicError::BadEpsilon(self.epsilon));
        }
        Ok(())
    }
}

/// Result of a Sinkhorn solve: the dual value at the returned potentials
/// plus convergence diagnostics.
#[derive(Debug, Clone)]
pub struct EntropicDualValue {
    pub value: f64,
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// L¹ marginal violation of the implied plan at exit.
    pub marginal_violation: f64,
}

/// Weighted log-sum-exp: log Σ_i w_i exp(x_i), max-stabilized. Zero
/// weights are skipped so they contribute exactly nothing.
fn weighted_logsumexp(terms: impl Iterator<Item = (f64, f64)> + Clone) -> f64 {
    let mut max = f64::NEG_INFINITY;
    for (w, x) in terms.clone() {
        if w > 0.0 && x > max {
            max = x;
        }
    }
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let mut sum = 0.0;
    for (w, x) in terms {
        if w > 0.0 {
            sum += w * (x - max).exp();
        }
    }
    max + sum.ln()
}

/// The (c,ε)-transform of φ against the source weights:
/// `ψ(y_j) = -ε log Σ_i w_i exp(-(C_ij - φ_i)/ε)`, one value per column of
/// the cost matrix. Log-sum-exp stabilized, safe for any ε > 0.
pub fn c_eps_transform(
    phi: &[f64],
    costs: &CostMatrix,
    epsilon: f64,
    mu_weights: &[f64],
) -> Result<Vec<f64>> {
    if epsilon <= 0.0 || !epsilon.is_finite() {
        return Err(EntropicError::BadEpsilon(epsilon));
    }
    let (n, m) = (costs.rows(), costs.cols());
    debug_assert_eq!(phi.len(), n);
    debug_assert_eq!(mu_weights.len(), n);
    let mut psi = vec![0.0; m];
    for (j, out) in psi.iter_mut().enumerate() {
        let lse = weighted_logsumexp(
            (0..n).map(|i| (mu_weights[i], (phi[i] - costs.get(i, j)) / epsilon)),
        );
        *out = -epsilon * lse;
    }
    Ok(psi)
}

/// Discrete evaluation of the unconstrained entropic dual:
/// `Σ φ w^μ + Σ ψ w^ν − ε (Σ_ij w^μ_i w^ν_j exp((φ_i + ψ_j − C_ij)/ε) − 1)`.
/// The exponential sum is evaluated in the log domain.
pub fn entropic_dual_value(
    phi: &[f64],
    psi: &[f64],
    costs: &CostMatrix,
    epsilon: f64,
    mu_weights: &[f64],
    nu_weights: &[f64],
) -> Result<f64> {
    if epsilon <= 0.0 || !epsilon.is_finite() {
        return Err(EntropicError::BadEpsilon(epsilon));
    }
    let (n, m) = (costs.rows(), costs.cols());
    let linear: f64 = phi.iter().zip(mu_weights).map(|(p, w)| p * w).sum::<f64>()
        + psi.iter().zip(nu_weights).map(|(p, w)| p * w).sum::<f64>();
    let log_mass = weighted_logsumexp((0..n * m).map(|k| {
        let (i, j) = (k / m, k % m);
        (
            mu_weights[i] * nu_weights[j],
            (phi[i] + psi[j] - costs.get(i, j)) / epsilon,
        )
    }));
    let mass = if log_mass == f64::NEG_INFINITY {
        0.0
    } else {
        log_mass.exp()
    };
    Ok(linear - epsilon * (mass - 1.0))
}

/// L¹ violation of both marginals for the plan implied by (φ, ψ).
fn plan_marginal_violation(
    phi: &[f64],
    psi: &[f64],
    costs: &CostMatrix,
    epsilon: f64,
    mu_weights: &[f64],
    nu_weights: &[f64],
) -> f64 {
    let (n, m) = (costs.rows(), costs.cols());
    let mut row_sums = vec![0.0; n];
    let mut col_sums = vec![0.0; m];
    for i in 0..n {
        for (j, col) in col_sums.iter_mut().enumerate().take(m) {
            let g = mu_weights[i]
                * nu_weights[j]
                * ((phi[i] + psi[j] - costs.get(i, j)) / epsilon).exp();
            row_sums[i] += g;
            *col += g;
        }
    }
    let row: f64 = row_sums
        .iter()
        .zip(mu_weights)
        .map(|(s, w)| (s - w).abs())
        .sum();
    let col: f64 = col_sums
        .iter()
        .zip(nu_weights)
        .map(|(s, w)| (s - w).abs())
        .sum();
    row + col
}

/// Alternating (c,ε)-transform updates in the log domain until the implied
/// plan's L¹ marginal violation is below tolerance or the iteration budget
/// runs out. The returned value is the dual objective at the final
/// potentials, which is the entropic transport value at convergence.
pub fn sinkhorn_solve(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    costs: &CostMatrix,
    cfg: &EntropicConfig,
) -> Result<EntropicDualValue> {
    cfg.validate()?;
    let eps = cfg.epsilon;
    let (wa, wb) = (mu.weights(), nu.weights());
    let (n, m) = (costs.rows(), costs.cols());
    if n != mu.len() || m != nu.len() {
        return Err(EntropicError::Ot(OtError::CostShapeMismatch {
            rows: costs.rows(),
            cols: costs.cols(),
            n: mu.len(),
            m: nu.len(),
        }));
    }

    let mut phi = vec![0.0; n];
    let mut psi = vec![0.0; m];
    let mut converged = false;
    let mut iterations = 0;
    let mut violation = f64::INFINITY;
    while iterations < cfg.max_iterations {
        iterations += 1;
        // φ update restores the row marginal, ψ update the column marginal.
        for (i, out) in phi.iter_mut().enumerate() {
            let lse = weighted_logsumexp(
                (0..m).map(|j| (wb[j], (psi[j] - costs.get(i, j)) / eps)),
            );
            *out = -eps * lse;
        }
        for (j, out) in psi.iter_mut().enumerate() {
            let lse = weighted_logsumexp(
                (0..n).map(|i| (wa[i], (phi[i] - costs.get(i, j)) / eps)),
            );
            *out = -eps * lse;
        }
        // The violation scan costs as much as an iteration; sample it.
        if iterations.is_multiple_of(10) || iterations == cfg.max_iterations {
            violation = plan_marginal_violation(&phi, &psi, costs, eps, wa, wb);
            if violation < cfg.tolerance {
                converged = true;
                break;
            }
        }
    }
    let value = entropic_dual_value(&phi, &psi, costs, eps, wa, wb)?;
    Ok(EntropicDualValue {
        value,
        phi,
        psi,
        converged,
        iterations,
        marginal_violation: violation,
    })
}

/// One symmetric Sinkhorn-Knopp update from φ = 0 for a self-transport
/// problem: `φ_i = -ε log Σ_j w_j exp(-C_ij/ε)`. The pair (0, φ) has an
/// exactly vanishing dual correction term, so the debiasing term value it
/// defines is `Σ_i w_i φ_i`, a guaranteed lower bound on the converged
/// self-transport value.
pub fn self_ot_symmetric_step(
    mu: &DiscreteMeasure,
    self_costs: &CostMatrix,
    epsilon: f64,
) -> Result<SelfTermEstimate> {
    if epsilon <= 0.0 || !epsilon.is_finite() {
        return Err(EntropicError::BadEpsilon(epsilon));
    }
    if self_costs.rows() != self_costs.cols() {
        return Err(EntropicError::NotSquare(
            self_costs.rows(),
            self_costs.cols(),
        ));
    }
    let w = mu.weights();
    let n = self_costs.rows();
    let mut potential = vec![0.0; n];
    for (i, out) in potential.iter_mut().enumerate() {
        let lse =
            weighted_logsumexp((0..n).map(|j| (w[j], -self_costs.get(i, j) / epsilon)));
        *out = -epsilon * lse;
    }
    let value = potential.iter().zip(w).map(|(p, wi)| p * wi).sum();
    Ok(SelfTermEstimate { potential, value })
}

/// Debiasing term from one symmetric update.
#[derive(Debug, Clone)]
pub struct SelfTermEstimate {
    pub potential: Vec<f64>,
    pub value: f64,
}

/// How the two self-transport terms of the divergence are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SelfTermMode {
    /// Full Sinkhorn solves for all three terms. Identical inputs then
    /// cancel exactly, so S(μ,μ) = 0 to the last bit.
    #[default]
    Converged,
    /// One symmetric fixed-point update per self term, the shortcut the
    /// minibatch estimators use.
    OneStep,
}

/// Breakdown of a Sinkhorn divergence evaluation.
#[derive(Debug, Clone)]
pub struct SinkhornDivergence {
    pub value: f64,
    pub cross: f64,
    pub self_mu: f64,
    pub self_nu: f64,
    pub converged: bool,
}

/// The (p,ε)-Sinkhorn divergence
/// `OT^ε(μ,ν)^{1/p} − (OT^ε(μ,μ)^{1/p} + OT^ε(ν,ν)^{1/p}) / 2`
/// over the Euclidean ground metric raised to `p`.
pub fn sinkhorn_divergence(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    epsilon: f64,
    p: f64,
    cfg: &EntropicConfig,
    mode: SelfTermMode,
) -> Result<SinkhornDivergence> {
    let cross_costs = cost_matrix(mu, nu, p)?;
    let cross = sinkhorn_solve(mu, nu, &cross_costs, cfg)?;
    let mu_costs = cost_matrix(mu, mu, p)?;
    let nu_costs = cost_matrix(nu, nu, p)?;
    let (self_mu, self_nu, self_converged) = match mode {
        SelfTermMode::Converged => {
            let a = sinkhorn_solve(mu, mu, &mu_costs, cfg)?;
            let b = sinkhorn_solve(nu, nu, &nu_costs, cfg)?;
            (a.value, b.value, a.converged && b.converged)
        }
        SelfTermMode::OneStep => {
            let a = self_ot_symmetric_step(mu, &mu_costs, epsilon)?;
            let b = self_ot_symmetric_step(nu, &nu_costs, epsilon)?;
            (a.value, b.value, true)
        }
    };
    let root = |v: f64| -> Result<f64> {
        if p == 1.0 {
            Ok(v)
        } else if v < 0.0 {
            Err(EntropicError::NegativeRadicand { value: v, p })
        } else {
            Ok(v.powf(1.0 / p))
        }
    };
    let value = root(cross.value)? - 0.5 * (root(self_mu)? + root(self_nu)?);
    Ok(SinkhornDivergence {
        value,
        cross: cross.value,
        self_mu,
        self_nu,
        converged: cross.converged && self_converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact_ot::exact_solve;
    use crate::tensor::Array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn atoms(points: &[&[f64]]) -> DiscreteMeasure {
        let rows: Vec<Vec<f64>> = points.iter().map(|p| p.to_vec()).collect();
        DiscreteMeasure::uniform(Array::from_rows(&rows).unwrap()).unwrap()
    }

    fn random_measure(rng: &mut ChaCha8Rng, n: usize, d: usize) -> DiscreteMeasure {
        let data: Vec<f64> = (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        DiscreteMeasure::uniform(Array::matrix(n, d, data).unwrap()).unwrap()
    }

    #[test]
    fn single_atoms_give_plain_cost_any_epsilon() {
        let mu = atoms(&[&[0.0, 0.0]]);
        let nu = atoms(&[&[3.0, 4.0]]);
        let c = cost_matrix(&mu, &nu, 1.0).unwrap();
        for eps in [0.01, 0.1, 1.0, 10.0] {
            let sol = sinkhorn_solve(&mu, &nu, &c, &EntropicConfig::new(eps)).unwrap();
            assert!((sol.value - 5.0).abs() < 1e-12, "eps {eps}: {}", sol.value);
        }
    }

    #[test]
    fn huge_epsilon_tends_to_product_plan_cost() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mu = random_measure(&mut rng, 4, 2);
        let nu = random_measure(&mut rng, 5, 2);
        let c = cost_matrix(&mu, &nu, 1.0).unwrap();
        let mut product_cost = 0.0;
        for i in 0..4 {
            for j in 0..5 {
                product_cost += mu.weights()[i] * nu.weights()[j] * c.get(i, j);
            }
        }
        let sol = sinkhorn_solve(&mu, &nu, &c, &EntropicConfig::new(1e4)).unwrap();
        assert!(
            (sol.value - product_cost).abs() < 1e-3,
            "value {} vs product plan {product_cost}",
            sol.value
        );
    }

    #[test]
    fn small_epsilon_approaches_exact_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mu = random_measure(&mut rng, 5, 2);
        let nu = random_measure(&mut rng, 5, 2);
        let c = cost_matrix(&mu, &nu, 1.0).unwrap();
        let exact = exact_solve(&mu, &nu, &c).unwrap().value;
        // At ε = 0.01 the dual value settles long before the marginal
        // violation reaches the strict default tolerance; the value is
        // what the example pins down.
        let cfg = EntropicConfig::new(0.01).with_max_iterations(20_000);
        let sol = sinkhorn_solve(&mu, &nu, &c, &cfg).unwrap();
        assert!(
            (sol.value - exact).abs() < 0.05,
            "entropic {} vs exact {exact}",
            sol.value
        );
        // The relaxation never undershoots the exact value.
        assert!(sol.value >= exact - 1e-9);
    }

    #[test]
    fn c_eps_transform_single_source() {
        // One source atom: ψ(y) = C_1y − φ_1 exactly, for every ε.
        let phi = [0.7];
        let mu = atoms(&[&[0.0]]);
        let nu = atoms(&[&[2.0], &[5.0]]);
        let c = cost_matrix(&mu, &nu, 1.0).unwrap();
        for eps in [1e-3, 0.1, 1.0, 100.0] {
            let psi = c_eps_transform(&phi, &c, eps, mu.weights()).unwrap();
            assert!((psi[0] - (2.0 - 0.7)).abs() < 1e-12);
            assert!((psi[1] - (5.0 - 0.7)).abs() < 1e-12);
        }
    }

    #[test]
    fn c_eps_transform_hand_case() {
        // ε = 1, uniform weights, cost column (1, 2), φ = 0:
        // ψ = −log((e⁻¹ + e⁻²)/2) ≈ 1.3799.
        let mu = atoms(&[&[0.0], &[1.0]]);
        let nu = atoms(&[&[1.0]]);
        // Source atoms at 0 and -1 give the exact cost column (1, 2).
        let src = atoms(&[&[0.0], &[-1.0]]);
        let c = cost_matrix(&src, &nu, 1.0).unwrap();
        assert_eq!(c.get(0, 0), 1.0);
        assert_eq!(c.get(1, 0), 2.0);
        let psi = c_eps_transform(&[0.0, 0.0], &c, 1.0, mu.weights()).unwrap();
        let expected = -f64::ln((f64::exp(-1.0) + f64::exp(-2.0)) / 2.0);
        assert!((psi[0] - expected).abs() < 1e-12);
        assert!((expected - 1.3799).abs() < 1e-4);
    }

    #[test]
    fn c_eps_transform_approaches_hard_min() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mu = random_measure(&mut rng, 6, 2);
        let nu = random_measure(&mut rng, 4, 2);
        let c = cost_matrix(&mu, &nu, 1.0).unwrap();
        let phi: Vec<f64> = (0..6).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let psi = c_eps_transform(&phi, &c, 1e-4, mu.weights()).unwrap();
        for (j, soft) in psi.iter().enumerate() {
            let hard = (0..6)
                .map(|i| c.get(i, j) - phi[i])
                .fold(f64::INFINITY, f64::min);
            assert!((soft - hard).abs() < 1e-3, "soft {soft} vs hard {hard}");
        }
    }

    #[test]
    fn dual_value_at_zero_potentials() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mu = random_measure(&mut rng, 3, 1);
        let nu = random_measure(&mut rng, 4, 1);
        let c = cost_matrix(&mu, &nu, 1.0).unwrap();
        let eps = 0.5;
        let mut direct = 0.0;
        for i in 0..3 {
            for j in 0..4 {
                direct += mu.weights()[i] * nu.weights()[j] * (-c.get(i, j) / eps).exp();
            }
        }
        let expected = -eps * (direct - 1.0);
        let phi = vec![0.0; 3];
        let psi = vec![0.0; 4];
        let got =
            entropic_dual_value(&phi, &psi, &c, eps, mu.weights(), nu.weights()).unwrap();
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn dual_value_is_consistent_and_suboptimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mu = random_measure(&mut rng, 5, 2);
        let nu = random_measure(&mut rng, 5, 2);
        let c = cost_matrix(&mu, &nu, 1.0).unwrap();
        let cfg = EntropicConfig::new(0.3).with_max_iterations(5000);
        let sol = sinkhorn_solve(&mu, &nu, &c, &cfg).unwrap();
        assert!(sol.converged);
        // The reported value IS the dual objective at the fixed point.
        let recomputed = entropic_dual_value(
            &sol.phi,
            &sol.psi,
            &c,
            0.3,
            mu.weights(),
            nu.weights(),
        )
        .unwrap();
        assert!((recomputed - sol.value).abs() < 1e-9);

        // Arbitrary potentials never beat the solved value.
        for _ in 0..20 {
            let phi: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let psi: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let v = entropic_dual_value(&phi, &psi, &c, 0.3, mu.weights(), nu.weights())
                .unwrap();
            assert!(v <= sol.value + 1e-9, "dual {v} beats solution {}", sol.value);
        }
    }

    #[test]
    fn self_term_single_atom_and_duplicates_vanish() {
        let single = atoms(&[&[1.0, 2.0]]);
        let c = cost_matrix(&single, &single, 1.0).unwrap();
        let est = self_ot_symmetric_step(&single, &c, 1.0).unwrap();
        assert_eq!(est.potential, vec![0.0]);
        assert_eq!(est.value, 0.0);

        let dup = atoms(&[&[3.0], &[3.0], &[3.0]]);
        let c = cost_matrix(&dup, &dup, 1.0).unwrap();
        let est = self_ot_symmetric_step(&dup, &c, 0.5).unwrap();
        assert_eq!(est.value, 0.0);
    }

    #[test]
    fn self_term_two_atoms_hand_value() {
        // Two atoms distance 1 apart, uniform, ε = 1:
        // φ_i = −log((1 + e⁻¹)/2) ≈ 0.37989 each.
        let mu = atoms(&[&[0.0], &[1.0]]);
        let c = cost_matrix(&mu, &mu, 1.0).unwrap();
        let est = self_ot_symmetric_step(&mu, &c, 1.0).unwrap();
        let expected = -f64::ln((1.0 + f64::exp(-1.0)) / 2.0);
        for p in &est.potential {
            assert!((p - expected).abs() < 1e-12);
        }
        assert!((est.value - expected).abs() < 1e-12);
        // And it lower-bounds the converged self value.
        let cfg = EntropicConfig::new(1.0);
        let full = sinkhorn_solve(&mu, &mu, &c, &cfg).unwrap();
        assert!(est.value <= full.value + 1e-9);
    }

    #[test]
    fn divergence_zero_on_identical_measures() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let mu = random_measure(&mut rng, 6, 2);
        let cfg = EntropicConfig::new(0.5);
        let div =
            sinkhorn_divergence(&mu, &mu, 0.5, 1.0, &cfg, SelfTermMode::Converged).unwrap();
        assert_eq!(div.value, 0.0);
    }

    #[test]
    fn divergence_single_atoms_is_plain_distance() {
        let mu = atoms(&[&[0.0, 0.0]]);
        let nu = atoms(&[&[3.0, 4.0]]);
        for eps in [0.1, 1.0] {
            let cfg = EntropicConfig::new(eps);
            for mode in [SelfTermMode::Converged, SelfTermMode::OneStep] {
                let div = sinkhorn_divergence(&mu, &nu, eps, 1.0, &cfg, mode).unwrap();
                assert!((div.value - 5.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn divergence_tracks_exact_w1_at_small_epsilon() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mu = random_measure(&mut rng, 5, 2);
        let nu = random_measure(&mut rng, 5, 2);
        let exact = crate::exact_ot::wasserstein_1(&mu, &nu).unwrap();
        let cfg = EntropicConfig::new(0.01).with_max_iterations(50_000);
        let div =
            sinkhorn_divergence(&mu, &nu, 0.01, 1.0, &cfg, SelfTermMode::Converged).unwrap();
        assert!(
            (div.value - exact).abs() < 0.1,
            "divergence {} vs exact {exact}",
            div.value
        );
        assert!(div.value > 0.0);
    }

    #[test]
    fn epsilon_gap_shrinks_monotonically() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..5 {
            let mu = random_measure(&mut rng, 5, 2);
            let nu = random_measure(&mut rng, 5, 2);
            let c = cost_matrix(&mu, &nu, 1.0).unwrap();
            let exact = exact_solve(&mu, &nu, &c).unwrap().value;
            let mut previous_gap = f64::INFINITY;
            for eps in [1.0, 0.1, 0.01] {
                let cfg = EntropicConfig::new(eps).with_max_iterations(100_000);
                let sol = sinkhorn_solve(&mu, &nu, &c, &cfg).unwrap();
                let gap = sol.value - exact;
                assert!(gap >= -1e-9, "relaxation below exact at eps {eps}");
                assert!(gap <= previous_gap + 1e-12, "gap grew at eps {eps}");
                previous_gap = gap;
            }
        }
    }

    #[test]
    fn non_convergence_is_flagged_not_fatal() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mu = random_measure(&mut rng, 8, 2);
        let nu = random_measure(&mut rng, 8, 2);
        let c = cost_matrix(&mu, &nu, 1.0).unwrap();
        let cfg = EntropicConfig::new(0.001).with_max_iterations(3);
        let sol = sinkhorn_solve(&mu, &nu, &c, &cfg).unwrap();
        assert!(!sol.converged);
        assert_eq!(sol.iterations, 3);
        assert!(sol.value.is_finite());
    }
}
