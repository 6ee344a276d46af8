//! The experiment protocols: approximation (train, freeze, evaluate),
//! stability (train/eval batch-size grid against full-measure ground
//! truth), the toy generative training trace, and the oracle self-check.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{BatchStream, Dataset, ReplacementPolicy};
use crate::entropic_ot::{sinkhorn_divergence, sinkhorn_solve, EntropicConfig, SelfTermMode};
use crate::estimators::{
    ceps_record, estimate_distance, train_discriminator, DiscriminatorTrainer, Method, OracleMode,
};
use crate::exact_ot::{
    brute_force_solve, cost_matrix, exact_solve, wasserstein_1, DiscreteMeasure,
};
use crate::nn::{DiscriminatorNet, GeneratorNet};
use crate::tensor::{Array, Bindings, GradProgram, GradientMap, Graph, LeafKind};

use super::{
    error_metric, ExperimentConfig, ExperimentKind, ExperimentReport, HarnessError,
    MethodAggregate, RecordRow, Result, StabilityCell,
};

/// Dispatch on the experiment tag.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    match cfg.experiment {
        ExperimentKind::Approximation => run_approximation(cfg),
        ExperimentKind::Stability => run_stability(cfg),
        ExperimentKind::ToyWgan => run_toy_wgan(cfg),
        ExperimentKind::OracleCheck => run_oracle_check(cfg),
    }
}

/// splitmix64-style seed derivation so every task gets an independent,
/// reproducible stream.
fn mix_seed(base: u64, parts: &[u64]) -> u64 {
    let mut h = base ^ 0x9e37_79b9_7f4a_7c15;
    for &p in parts {
        h ^= p.wrapping_mul(0xff51_afd7_ed55_8ccd).wrapping_add(1);
        h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        h ^= h >> 31;
    }
    h
}

fn stream(ds: &Dataset, batch: usize, seed: u64) -> Result<BatchStream> {
    Ok(BatchStream::new(
        ds.clone(),
        batch,
        seed,
        ReplacementPolicy::WithoutReplacement { reshuffle: true },
    )?)
}

/// Frozen-net evaluation of one batch pair: the estimate, the matching
/// oracle value, and the clamped error. WC/GP/CT score against the exact
/// LP value; CEPS scores the three-term divergence, errors summed per
/// term.
fn eval_record(
    method: Method,
    net: &DiscriminatorNet,
    x: &DiscreteMeasure,
    y: &DiscreteMeasure,
    oracle_cfg: &EntropicConfig,
) -> Result<(f64, f64, f64)> {
    match method {
        Method::CEpsTransform { epsilon } => {
            let cross = estimate_distance(method, net, x, y)?;
            let (estimate, ground, error) =
                ceps_record(cross, x, y, epsilon, OracleMode::On, oracle_cfg)?;
            Ok((
                estimate,
                ground.expect("oracle on"),
                error.expect("oracle on"),
            ))
        }
        _ => {
            let estimate = estimate_distance(method, net, x, y)?;
            let ground = wasserstein_1(x, y)?;
            Ok((estimate, ground, error_metric(estimate, ground)))
        }
    }
}

/// Train on `train_iters` minibatches, freeze, evaluate on fresh pairs.
pub fn run_approximation(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let t0 = Instant::now();
    let dataset = cfg.build_dataset()?;
    let p = &cfg.protocol;
    let needed = 2 * p.batch_size;
    if dataset.len() < needed {
        return Err(HarnessError::Config(format!(
            "dataset of {} points cannot supply batches of {}",
            dataset.len(),
            p.batch_size
        )));
    }
    let (mu_ds, nu_ds) = crate::data::split_halves(&dataset, mix_seed(cfg.seed, &[1]))?;
    let d = dataset.dim();

    let tasks: Vec<(usize, usize)> = (0..cfg.methods.len())
        .flat_map(|mi| (0..p.repeats).map(move |rep| (mi, rep)))
        .collect();

    let outcomes: std::result::Result<Vec<_>, HarnessError> = tasks
        .par_iter()
        .map(|&(mi, rep)| {
            let spec = &cfg.methods[mi];
            let label = spec.label()?;
            let est_cfg = spec.estimator_config(
                p.batch_size,
                p.train_iters,
                mix_seed(cfg.seed, &[2, mi as u64, rep as u64]),
            )?;
            let method = est_cfg.method;
            let net = DiscriminatorNet::standard(
                d,
                mix_seed(cfg.seed, &[3, mi as u64, rep as u64]),
            )?;
            let mut mu_stream = stream(
                &mu_ds,
                p.batch_size,
                mix_seed(cfg.seed, &[4, mi as u64, rep as u64]),
            )?;
            let mut nu_stream = stream(
                &nu_ds,
                p.batch_size,
                mix_seed(cfg.seed, &[5, mi as u64, rep as u64]),
            )?;
            let outcome = train_discriminator(
                &est_cfg,
                net,
                |_| Ok((mu_stream.next_batch()?, nu_stream.next_batch()?)),
                OracleMode::Off,
            )?;
            let mut rows: Vec<RecordRow> = outcome
                .records
                .iter()
                .map(|r| {
                    RecordRow::new(rep, "train", r.iteration, &label, r.estimate, None, None)
                })
                .collect();

            // No parameter may change during the evaluation phase.
            let checksum_before = outcome.net.mlp().param_checksum();
            for l in 0..p.eval_batches {
                let x = mu_stream.next_batch()?;
                let y = nu_stream.next_batch()?;
                let (est, gt, err) =
                    eval_record(method, &outcome.net, &x, &y, &est_cfg.entropic_oracle)?;
                rows.push(RecordRow::new(rep, "eval", l, &label, est, Some(gt), Some(err)));
            }
            let checksum_after = outcome.net.mlp().param_checksum();
            if checksum_before != checksum_after {
                return Err(HarnessError::Numerical(
                    "evaluation phase mutated network parameters".into(),
                ));
            }
            Ok((mi, rep, rows, checksum_before))
        })
        .collect();

    let mut report = ExperimentReport::new(cfg);
    let mut outcomes = outcomes?;
    outcomes.sort_by_key(|(mi, rep, _, _)| (*mi, *rep));
    for (mi, rep, rows, checksum) in outcomes {
        report.extras.insert(
            format!("checksum/{}/rep{rep}", cfg.methods[mi].label()?),
            serde_json::json!(format!("{checksum:016x}")),
        );
        report.records.extend(rows);
    }
    let aggregates: Vec<MethodAggregate> = cfg
        .methods
        .iter()
        .filter_map(|m| {
            let label = m.label().ok()?;
            report.aggregate_from_records(&label, "eval")
        })
        .collect();
    report.aggregates = aggregates;
    report.wall_ms_total = t0.elapsed().as_millis();
    Ok(report)
}

/// Train at each training batch size on fixed 512-point measures, then
/// evaluate at each evaluation size, with exact and entropic ground-truth
/// rows alongside.
pub fn run_stability(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let t0 = Instant::now();
    let dataset = cfg.build_dataset()?;
    let p = &cfg.protocol;
    let needed = 2 * p.subset_size;
    if dataset.len() < needed {
        return Err(HarnessError::Config(format!(
            "stability needs {needed} points, dataset has {}",
            dataset.len()
        )));
    }
    let subset = dataset.random_subset(needed, mix_seed(cfg.seed, &[10]))?;
    let (mu_ds, nu_ds) = crate::data::split_halves(&subset, mix_seed(cfg.seed, &[11]))?;
    let mu_full = mu_ds.as_measure()?;
    let nu_full = nu_ds.as_measure()?;
    let d = dataset.dim();

    let mut report = ExperimentReport::new(cfg);

    // Ground-truth rows: the exact distance always, plus the converged
    // entropic value and debiased divergence for every CEPS epsilon.
    let exact_gt = wasserstein_1(&mu_full, &nu_full)?;
    report
        .extras
        .insert("ground_truth/exact_w1".into(), serde_json::json!(exact_gt));
    let mut epsilons: Vec<f64> = Vec::new();
    for m in &cfg.methods {
        if let Method::CEpsTransform { epsilon } = m.method()? {
            if !epsilons.iter().any(|e| (e - epsilon).abs() < 1e-15) {
                epsilons.push(epsilon);
            }
        }
    }
    for &eps in &epsilons {
        let oracle = EntropicConfig::new(eps).with_max_iterations(2000);
        let costs = cost_matrix(&mu_full, &nu_full, 1.0)?;
        let cross = sinkhorn_solve(&mu_full, &nu_full, &costs, &oracle)?;
        report.extras.insert(
            format!("ground_truth/entropic_ot(eps={eps})"),
            serde_json::json!(cross.value),
        );
        let div =
            sinkhorn_divergence(&mu_full, &nu_full, eps, 1.0, &oracle, SelfTermMode::Converged)?;
        report.extras.insert(
            format!("ground_truth/sinkhorn_divergence(eps={eps})"),
            serde_json::json!(div.value),
        );
    }

    let tasks: Vec<(usize, usize)> = (0..cfg.methods.len())
        .flat_map(|mi| (0..p.train_sizes.len()).map(move |ni| (mi, ni)))
        .collect();

    let outcomes: std::result::Result<Vec<_>, HarnessError> = tasks
        .par_iter()
        .map(|&(mi, ni)| {
            let spec = &cfg.methods[mi];
            let label = spec.label()?;
            let n_train = p.train_sizes[ni];
            if n_train > p.subset_size {
                return Err(HarnessError::Config(format!(
                    "training batch {n_train} exceeds the subset size {}",
                    p.subset_size
                )));
            }
            let est_cfg = spec.estimator_config(
                n_train,
                p.train_iters,
                mix_seed(cfg.seed, &[12, mi as u64, ni as u64]),
            )?;
            let method = est_cfg.method;
            let net =
                DiscriminatorNet::standard(d, mix_seed(cfg.seed, &[13, mi as u64, ni as u64]))?;
            let mut mu_stream = stream(
                &mu_ds,
                n_train,
                mix_seed(cfg.seed, &[14, mi as u64, ni as u64]),
            )?;
            let mut nu_stream = stream(
                &nu_ds,
                n_train,
                mix_seed(cfg.seed, &[15, mi as u64, ni as u64]),
            )?;
            let outcome = train_discriminator(
                &est_cfg,
                net,
                |_| Ok((mu_stream.next_batch()?, nu_stream.next_batch()?)),
                OracleMode::Off,
            )?;

            let mut rows = Vec::new();
            let mut cells = Vec::new();
            for &m_eval in &p.eval_sizes {
                let phase = format!("stability-n{n_train}-m{m_eval}");
                let mut estimates = Vec::new();
                if m_eval >= p.subset_size {
                    let est = estimate_distance(method, &outcome.net, &mu_full, &nu_full)?;
                    rows.push(RecordRow::new(0, &phase, 0, &label, est, None, None));
                    estimates.push(est);
                } else {
                    let mut me = stream(
                        &mu_ds,
                        m_eval,
                        mix_seed(cfg.seed, &[16, mi as u64, ni as u64, m_eval as u64]),
                    )?;
                    let mut ne = stream(
                        &nu_ds,
                        m_eval,
                        mix_seed(cfg.seed, &[17, mi as u64, ni as u64, m_eval as u64]),
                    )?;
                    for l in 0..p.eval_minibatches {
                        let est = estimate_distance(
                            method,
                            &outcome.net,
                            &me.next_batch()?,
                            &ne.next_batch()?,
                        )?;
                        rows.push(RecordRow::new(0, &phase, l, &label, est, None, None));
                        estimates.push(est);
                    }
                }
                cells.push(StabilityCell {
                    method: label.clone(),
                    n_train,
                    m_eval,
                    mean_estimate: super::mean(&estimates),
                    sd_estimate: super::sample_sd(&estimates),
                    evaluations: estimates.len(),
                });
            }
            Ok((mi, ni, rows, cells))
        })
        .collect();

    let mut outcomes = outcomes?;
    outcomes.sort_by_key(|(mi, ni, _, _)| (*mi, *ni));
    for (_, _, rows, cells) in outcomes {
        report.records.extend(rows);
        report.stability.extend(cells);
    }
    report.wall_ms_total = t0.elapsed().as_millis();
    Ok(report)
}

/// Standard-normal latent batch.
fn draw_latents(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Array {
    let data: Vec<f64> = (0..n * dim)
        .map(|_| rng.sample(rand_distr::StandardNormal))
        .collect();
    Array::matrix(n, dim, data).expect("sized correctly")
}

/// Compiled gradient of `sum(generator(z) * cotangent)` with respect to
/// the generator parameters: a vector-Jacobian product with a
/// host-supplied cotangent.
struct GeneratorBackprop {
    program: GradProgram,
}

impl GeneratorBackprop {
    fn new(gen: &GeneratorNet, n: usize) -> Result<Self> {
        let mut graph = Graph::new();
        let z = graph.leaf("z", LeafKind::Input, vec![n, gen.latent_dim()]);
        let out = gen.mlp().append_to_graph(&mut graph, z);
        let cot = graph.leaf(
            "cot",
            LeafKind::Input,
            vec![n, gen.mlp().output_dim()],
        );
        let prod = graph
            .mul(out, cot)
            .map_err(|e| HarnessError::Numerical(e.to_string()))?;
        let objective = graph.sum(prod);
        let names = gen.mlp().param_names();
        let wanted: Vec<&str> = names.iter().map(String::as_str).collect();
        let program = GradProgram::compile(&graph, objective, &wanted)
            .map_err(|e| HarnessError::Numerical(e.to_string()))?;
        Ok(GeneratorBackprop { program })
    }

    fn grads(
        &self,
        gen: &GeneratorNet,
        latents: &Array,
        cotangent: &Array,
    ) -> Result<GradientMap> {
        let mut bindings = Bindings::new();
        bindings.bind("z", latents.clone());
        bindings.bind("cot", cotangent.clone());
        gen.mlp().bind_params(&mut bindings);
        let (_, grads) = self
            .program
            .run(&bindings)
            .map_err(|e| HarnessError::Numerical(e.to_string()))?;
        Ok(grads)
    }
}

/// Compiled `∇_x sum(φ(x))`: row i is the input gradient of the potential
/// at batch row i.
struct InputGradient {
    program: GradProgram,
}

impl InputGradient {
    fn new(disc: &DiscriminatorNet, n: usize) -> Result<Self> {
        let (mut graph, out) = disc.mlp().build_graph(n);
        let total = graph.sum(out);
        let program = GradProgram::compile(&graph, total, &["x"])
            .map_err(|e| HarnessError::Numerical(e.to_string()))?;
        Ok(InputGradient { program })
    }

    fn at(&self, disc: &DiscriminatorNet, batch: &Array) -> Result<Array> {
        let mut bindings = Bindings::new();
        bindings.bind("x", batch.clone());
        disc.mlp().bind_params(&mut bindings);
        let (_, grads) = self
            .program
            .run(&bindings)
            .map_err(|e| HarnessError::Numerical(e.to_string()))?;
        Ok(grads.get("x").expect("requested").clone())
    }
}

/// d(estimate)/d(fake batch rows) for the generator update.
fn generator_cotangent(
    method: Method,
    disc: &DiscriminatorNet,
    input_grad: &InputGradient,
    x: &DiscreteMeasure,
    y_fake: &DiscreteMeasure,
) -> Result<Array> {
    let (n, d) = (y_fake.len(), y_fake.dim());
    let inv_n = 1.0 / n as f64;
    match method {
        Method::WeightClipping { .. } | Method::GradientPenalty { .. } => {
            // estimate = mean φ(X) - mean φ(Y): cotangent -∇φ(y_i)/n.
            let g = input_grad.at(disc, y_fake.points())?;
            Ok(g.map(|v| -v * inv_n))
        }
        Method::CTransform => {
            // ψ_i = C_{j*,i} - φ_{j*}: envelope gradient through the cost.
            let costs = cost_matrix(x, y_fake, 1.0)
                .map_err(|e| HarnessError::Numerical(e.to_string()))?;
            let phi = disc
                .forward(x.points())
                .map_err(|e| HarnessError::Numerical(e.to_string()))?;
            let mut data = vec![0.0; n * d];
            for i in 0..n {
                let mut best = f64::INFINITY;
                let mut arg = 0;
                for j in 0..x.len() {
                    let v = costs.get(j, i) - phi.data()[j];
                    if v < best {
                        best = v;
                        arg = j;
                    }
                }
                let dist = costs.get(arg, i);
                if dist > 0.0 {
                    let (xj, yi) = (x.point(arg), y_fake.point(i));
                    for k in 0..d {
                        data[i * d + k] = (yi[k] - xj[k]) / dist * inv_n;
                    }
                }
            }
            Ok(Array::matrix(n, d, data).expect("sized correctly"))
        }
        Method::CEpsTransform { epsilon } => {
            // Soft assignment: cotangent averages the unit directions with
            // the softmax weights of the (c,ε)-transform.
            let costs = cost_matrix(x, y_fake, 1.0)
                .map_err(|e| HarnessError::Numerical(e.to_string()))?;
            let phi = disc
                .forward(x.points())
                .map_err(|e| HarnessError::Numerical(e.to_string()))?;
            let mut data = vec![0.0; n * d];
            for i in 0..n {
                let logits: Vec<f64> = (0..x.len())
                    .map(|j| (phi.data()[j] - costs.get(j, i)) / epsilon)
                    .collect();
                let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut weights: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
                let total: f64 = weights.iter().sum();
                for w in &mut weights {
                    *w /= total;
                }
                let yi = y_fake.point(i);
                for (j, w) in weights.iter().enumerate() {
                    let dist = costs.get(j, i);
                    if dist > 0.0 {
                        let xj = x.point(j);
                        for k in 0..d {
                            data[i * d + k] += w * (yi[k] - xj[k]) / dist * inv_n;
                        }
                    }
                }
            }
            Ok(Array::matrix(n, d, data).expect("sized correctly"))
        }
    }
}

fn negate(grads: &GradientMap) -> GradientMap {
    let mut out = GradientMap::default();
    for (name, g) in grads.iter() {
        out.insert(name.clone(), g.map(|v| -v));
    }
    out
}

/// Alternating generative training on a toy target: 5 discriminator steps
/// per generator step, with per-iteration estimate and exact ground truth,
/// plus periodic full-measure snapshots.
pub fn run_toy_wgan(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let t0 = Instant::now();
    let dataset = cfg.build_dataset()?;
    let p = &cfg.protocol;
    let d = dataset.dim();
    if p.latent_dim > d {
        return Err(HarnessError::Config(format!(
            "latent dim {} exceeds data dim {d}",
            p.latent_dim
        )));
    }

    let outcomes: std::result::Result<Vec<_>, HarnessError> = cfg
        .methods
        .par_iter()
        .enumerate()
        .map(|(mi, spec)| {
            let label = spec.label()?;
            let est_cfg = spec.estimator_config(
                p.batch_size,
                p.train_iters,
                mix_seed(cfg.seed, &[20, mi as u64]),
            )?;
            let method = est_cfg.method;
            let mut disc =
                DiscriminatorNet::standard(d, mix_seed(cfg.seed, &[21, mi as u64]))?;
            let mut gen = GeneratorNet::init(
                &[p.latent_dim, 128, 128, d],
                mix_seed(cfg.seed, &[22, mi as u64]),
            )?;
            let trainer = DiscriminatorTrainer::new(est_cfg.clone(), &disc)?;
            let mut disc_opt = est_cfg.optimizer.build();
            // The generator follows the discriminator's optimizer choice.
            let mut gen_opt = est_cfg.optimizer.build();
            let backprop = GeneratorBackprop::new(&gen, p.batch_size)?;
            let input_grad = InputGradient::new(&disc, p.batch_size)?;
            let mut real_stream = stream(
                &dataset,
                p.batch_size,
                mix_seed(cfg.seed, &[23, mi as u64]),
            )?;
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, &[24, mi as u64]));
            let mut gp_rng =
                ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, &[25, mi as u64]));

            let fake_batch = |gen: &GeneratorNet,
                              rng: &mut ChaCha8Rng|
             -> Result<DiscreteMeasure> {
                let latents = draw_latents(rng, p.batch_size, p.latent_dim);
                let out = gen
                    .forward(&latents)
                    .map_err(|e| HarnessError::Numerical(e.to_string()))?;
                DiscreteMeasure::uniform(out)
                    .map_err(|e| HarnessError::Numerical(e.to_string()))
            };

            let mut rows = Vec::new();
            for t in 0..p.generator_iters {
                for _ in 0..p.disc_iters_per_gen {
                    let x = real_stream.next_batch()?;
                    let y = fake_batch(&gen, &mut rng)?;
                    trainer
                        .step(&mut disc, &mut disc_opt, &x, &y, &mut gp_rng)
                        .map_err(|e| {
                            HarnessError::Numerical(format!(
                                "{label}: discriminator diverged at generator iteration {t}: {e}"
                            ))
                        })?;
                }

                // Generator step: minimize the estimate.
                let x = real_stream.next_batch()?;
                let latents = draw_latents(&mut rng, p.batch_size, p.latent_dim);
                let fake_points = gen
                    .forward(&latents)
                    .map_err(|e| HarnessError::Numerical(e.to_string()))?;
                let y = DiscreteMeasure::uniform(fake_points.clone())
                    .map_err(|e| HarnessError::Numerical(e.to_string()))?;
                let cot = generator_cotangent(method, &disc, &input_grad, &x, &y)?;
                let grads = backprop.grads(&gen, &latents, &cot)?;
                gen_opt
                    .step(gen.mlp_mut(), &negate(&grads))
                    .map_err(|e| HarnessError::Numerical(e.to_string()))?;

                let (est, gt, err) =
                    eval_record(method, &disc, &x, &y, &est_cfg.entropic_oracle).map_err(
                        |e| {
                            HarnessError::Numerical(format!(
                                "{label}: trace evaluation failed at iteration {t}: {e}"
                            ))
                        },
                    )?;
                rows.push(RecordRow::new(0, "trace", t, &label, est, Some(gt), Some(err)));

                if p.snapshot_every > 0 && (t + 1) % p.snapshot_every == 0 {
                    let real = dataset
                        .random_subset(
                            p.snapshot_size.min(dataset.len()),
                            mix_seed(cfg.seed, &[26, mi as u64, t as u64]),
                        )?
                        .as_measure()?;
                    let latents =
                        draw_latents(&mut rng, real.len(), p.latent_dim);
                    let fake = DiscreteMeasure::uniform(
                        gen.forward(&latents)
                            .map_err(|e| HarnessError::Numerical(e.to_string()))?,
                    )
                    .map_err(|e| HarnessError::Numerical(e.to_string()))?;
                    let est = estimate_distance(method, &disc, &real, &fake)
                        .map_err(|e| HarnessError::Numerical(e.to_string()))?;
                    let gt = wasserstein_1(&real, &fake)?;
                    rows.push(RecordRow::new(
                        0,
                        "snapshot",
                        t,
                        &label,
                        est,
                        Some(gt),
                        Some(error_metric(est, gt)),
                    ));
                }
            }
            Ok((mi, rows))
        })
        .collect();

    let mut report = ExperimentReport::new(cfg);
    let mut outcomes = outcomes?;
    outcomes.sort_by_key(|(mi, _)| *mi);
    for (_, rows) in outcomes {
        report.records.extend(rows);
    }
    let aggregates: Vec<MethodAggregate> = cfg
        .methods
        .iter()
        .filter_map(|m| {
            let label = m.label().ok()?;
            report.aggregate_from_records(&label, "trace")
        })
        .collect();
    report.aggregates = aggregates;
    report.wall_ms_total = t0.elapsed().as_millis();
    Ok(report)
}

/// Exact-solver self checks: brute-force agreement on random uniform
/// instances, metric axioms, and entropic consistency.
pub fn run_oracle_check(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let t0 = Instant::now();
    let p = &cfg.protocol;
    let mut report = ExperimentReport::new(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, &[30]));

    let random_measure = |rng: &mut ChaCha8Rng, n: usize, d: usize| -> Result<DiscreteMeasure> {
        let data: Vec<f64> = (0..n * d).map(|_| rng.gen_range(-2.0..2.0)).collect();
        Ok(DiscreteMeasure::uniform(
            Array::matrix(n, d, data).map_err(|e| HarnessError::Numerical(e.to_string()))?,
        )?)
    };

    // Brute-force agreement.
    let mut worst_diff: f64 = 0.0;
    for k in 0..p.oracle_instances {
        let n = rng.gen_range(2..=6);
        let d = rng.gen_range(1..=3);
        let mu = random_measure(&mut rng, n, d)?;
        let nu = random_measure(&mut rng, n, d)?;
        let costs = cost_matrix(&mu, &nu, 1.0)?;
        let lp = exact_solve(&mu, &nu, &costs)?.value;
        let bf = brute_force_solve(&mu, &nu, &costs)?;
        worst_diff = worst_diff.max((lp - bf).abs());
        report.records.push(RecordRow::new(
            0,
            "oracle",
            k,
            "exact-vs-brute-force",
            lp,
            Some(bf),
            Some(error_metric(lp, bf)),
        ));
    }
    report.extras.insert(
        "oracle/worst_abs_diff".into(),
        serde_json::json!(worst_diff),
    );
    report.extras.insert(
        "oracle/pass".into(),
        serde_json::json!(worst_diff < 1e-9),
    );

    // Metric axioms at p = 1.
    let mut worst_symmetry: f64 = 0.0;
    let mut worst_triangle: f64 = 0.0;
    let mut worst_self: f64 = 0.0;
    for _ in 0..20 {
        let n = rng.gen_range(2..=6);
        let d = rng.gen_range(1..=3);
        let a = random_measure(&mut rng, n, d)?;
        let b = random_measure(&mut rng, n, d)?;
        let c = random_measure(&mut rng, n, d)?;
        let ab = wasserstein_1(&a, &b)?;
        let ba = wasserstein_1(&b, &a)?;
        let bc = wasserstein_1(&b, &c)?;
        let ac = wasserstein_1(&a, &c)?;
        let aa = wasserstein_1(&a, &a)?;
        worst_symmetry = worst_symmetry.max((ab - ba).abs());
        worst_triangle = worst_triangle.max(ac - (ab + bc));
        worst_self = worst_self.max(aa.abs());
    }
    report.extras.insert(
        "metric/worst_symmetry_violation".into(),
        serde_json::json!(worst_symmetry),
    );
    report.extras.insert(
        "metric/worst_triangle_violation".into(),
        serde_json::json!(worst_triangle),
    );
    report.extras.insert(
        "metric/worst_self_distance".into(),
        serde_json::json!(worst_self),
    );

    // Translation identity.
    let cloud = random_measure(&mut rng, 64, 3)?;
    let v = [0.3, -0.4, 1.2];
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let shifted = cloud.translated(&v)?;
    let w = wasserstein_1(&cloud, &shifted)?;
    report.extras.insert(
        "metric/translation_abs_error".into(),
        serde_json::json!((w - norm).abs()),
    );

    // Entropic consistency: relaxation above exact, gap shrinking in eps,
    // divergence exactly zero on identical measures.
    let mut monotone = true;
    let mut relaxed_above = true;
    for _ in 0..20 {
        let mu = random_measure(&mut rng, 5, 2)?;
        let nu = random_measure(&mut rng, 5, 2)?;
        let costs = cost_matrix(&mu, &nu, 1.0)?;
        let exact = exact_solve(&mu, &nu, &costs)?.value;
        let mut previous = f64::INFINITY;
        for eps in [1.0, 0.1, 0.01] {
            let oracle = EntropicConfig::new(eps).with_max_iterations(20_000);
            let value = sinkhorn_solve(&mu, &nu, &costs, &oracle)?.value;
            let gap = value - exact;
            relaxed_above &= gap >= -1e-9;
            monotone &= gap <= previous + 1e-12;
            previous = gap;
        }
    }
    let mu = random_measure(&mut rng, 6, 2)?;
    let self_div = sinkhorn_divergence(
        &mu,
        &mu,
        0.5,
        1.0,
        &EntropicConfig::new(0.5),
        SelfTermMode::Converged,
    )?;
    report.extras.insert(
        "entropic/relaxation_above_exact".into(),
        serde_json::json!(relaxed_above),
    );
    report.extras.insert(
        "entropic/gap_monotone_in_eps".into(),
        serde_json::json!(monotone),
    );
    report.extras.insert(
        "entropic/self_divergence".into(),
        serde_json::json!(self_div.value),
    );

    report.wall_ms_total = t0.elapsed().as_millis();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{DatasetSpec, MethodKind, MethodSpec, ProtocolConfig};

    fn tiny_config(kind: ExperimentKind) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default_for(kind);
        cfg.seed = 11;
        cfg.dataset = DatasetSpec::SyntheticMnist {
            size: 256,
            dim: 6,
            clusters: 4,
        };
        cfg.protocol = ProtocolConfig {
            train_iters: 8,
            eval_batches: 4,
            batch_size: 16,
            repeats: 2,
            train_sizes: vec![16, 64],
            eval_sizes: vec![16, 64],
            eval_minibatches: 3,
            subset_size: 64,
            generator_iters: 4,
            disc_iters_per_gen: 2,
            latent_dim: 2,
            snapshot_every: 2,
            snapshot_size: 32,
            oracle_instances: 20,
        };
        cfg.methods = vec![
            MethodSpec::of(MethodKind::Wc),
            MethodSpec::of(MethodKind::Ct),
            MethodSpec::of(MethodKind::Ceps).with_epsilon(1.0),
        ];
        cfg
    }

    #[test]
    fn approximation_runs_and_aggregates() {
        let cfg = tiny_config(ExperimentKind::Approximation);
        let report = run_approximation(&cfg).unwrap();
        // 3 methods x 2 repeats x (8 train + 4 eval) rows.
        assert_eq!(report.records.len(), 3 * 2 * (8 + 4));
        assert_eq!(report.aggregates.len(), 3);
        for agg in &report.aggregates {
            assert!(agg.mean_error >= 0.0);
            assert_eq!(agg.repeats, 2);
            assert_eq!(agg.records, 8);
        }
        // Errors clamp at zero from the eval phase.
        for row in report.records.iter().filter(|r| r.phase == "eval") {
            assert!(row.error.unwrap() >= 0.0);
            assert!(row.ground_truth.is_some());
        }
    }

    #[test]
    fn approximation_is_deterministic() {
        let cfg = tiny_config(ExperimentKind::Approximation);
        let a = run_approximation(&cfg).unwrap();
        let b = run_approximation(&cfg).unwrap();
        let csv_a = crate::harness::records_to_csv(&a.records);
        let csv_b = crate::harness::records_to_csv(&b.records);
        assert_eq!(csv_a, csv_b);
    }

    #[test]
    fn stability_emits_cells_and_ground_truth() {
        let mut cfg = tiny_config(ExperimentKind::Stability);
        cfg.experiment = ExperimentKind::Stability;
        let report = run_stability(&cfg).unwrap();
        // 3 methods x 2 train sizes x 2 eval sizes.
        assert_eq!(report.stability.len(), 12);
        assert!(report.extras.contains_key("ground_truth/exact_w1"));
        assert!(report
            .extras
            .contains_key("ground_truth/entropic_ot(eps=1)"));
        for cell in &report.stability {
            assert!(cell.mean_estimate.is_finite());
            let expected = if cell.m_eval >= 64 { 1 } else { 3 };
            assert_eq!(cell.evaluations, expected);
        }
    }

    #[test]
    fn toy_wgan_traces_every_iteration() {
        let mut cfg = tiny_config(ExperimentKind::ToyWgan);
        cfg.experiment = ExperimentKind::ToyWgan;
        cfg.dataset = DatasetSpec::GaussianShift {
            size: 256,
            shift: vec![1.0, 1.0],
            paired: false,
        };
        let report = run_toy_wgan(&cfg).unwrap();
        for m in &cfg.methods {
            let label = m.label().unwrap();
            let traces: Vec<_> = report
                .records
                .iter()
                .filter(|r| r.method == label && r.phase == "trace")
                .collect();
            assert_eq!(traces.len(), 4);
            let snapshots = report
                .records
                .iter()
                .filter(|r| r.method == label && r.phase == "snapshot")
                .count();
            assert_eq!(snapshots, 2);
        }
        // Zero generator iterations leave only an empty record set.
        let mut zero = cfg.clone();
        zero.protocol.generator_iters = 0;
        let report = run_toy_wgan(&zero).unwrap();
        assert!(report.records.is_empty());
    }

    #[test]
    fn oracle_check_passes() {
        let mut cfg = tiny_config(ExperimentKind::OracleCheck);
        cfg.experiment = ExperimentKind::OracleCheck;
        cfg.methods.clear();
        let report = run_oracle_check(&cfg).unwrap();
        assert_eq!(report.extras["oracle/pass"], serde_json::json!(true));
        assert_eq!(
            report.extras["entropic/self_divergence"],
            serde_json::json!(0.0)
        );
        assert_eq!(
            report.extras["entropic/gap_monotone_in_eps"],
            serde_json::json!(true)
        );
    }
}
