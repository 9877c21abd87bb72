//! Gradient of `log P(Q)`, the entailment and NPP-likelihood updates, and
//! the alternating trainer.

mod gradient;
mod metrics;

use std::collections::BTreeMap;
use std::fmt;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::PreparedQuery;
use crate::ground::GroundProgram;
use crate::lang::NppQueryKind;
use crate::npp::{npp_loss_grad, Given, NppError, NppInput, NppModel, NppModels, Optimizer, OptimizerKind, SoftmaxLinear, TabularJoint};
use crate::same::{apply_masks, covered_mass, same_prune, EpochPrune, SameFallback, SameRule};
use crate::solver::{enumerate_with, topk_search, PotentialSolution, SolveError, SolveOptions, DEFAULT_SOLUTION_BUDGET};
use crate::wmc::PROB_FLOOR;

pub use gradient::{grad_logpq, GradientReport, NppGradient, SkippedQuery, IDENTITY_TOL};
pub use metrics::{write_metrics_csv, BatchMetrics, EpochMetrics, PhaseB, TrainingTrace, METRICS_HEADER};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    Exact,
    TopK(usize),
    Same {
        threshold: f64,
        rule: SameRule,
        fallback: SameFallback,
    },
}

impl Mode {
    pub fn same(threshold: f64) -> Self {
        Mode::Same {
            threshold,
            rule: SameRule::Cover,
            fallback: SameFallback::Exact,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Mode::Exact => "exact",
            Mode::TopK(_) => "topk",
            Mode::Same { .. } => "same",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Exact => f.write_str("exact"),
            Mode::TopK(k) => write!(f, "topk(k={k})"),
            Mode::Same { threshold, .. } => write!(f, "same(t={threshold})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EntailmentScaling {
    /// The bare `∇ log P(Q)` direction.
    #[default]
    Plain,
    /// Each query's gradient scaled by `|log P(x_Q)|`, the data
    /// log-likelihood of its inputs under joint models (1 when none).
    LogLikelihoodWeighted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub mode: Mode,
    pub entailment_scaling: EntailmentScaling,
    pub optimizer: OptimizerKind,
    pub solution_budget: usize,
    /// Record wall times; off makes traces reproducible byte for byte.
    pub timing: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 5,
            batch_size: 16,
            learning_rate: 1.0,
            seed: 0,
            mode: Mode::Exact,
            entailment_scaling: EntailmentScaling::Plain,
            optimizer: OptimizerKind::Sgd,
            solution_budget: DEFAULT_SOLUTION_BUDGET,
            timing: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return bad("learning rate must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        match self.mode {
            Mode::TopK(0) => bad("top-k needs k >= 1"),
            Mode::Same { threshold, .. } if !(threshold > 0.0 && threshold <= 1.0) => {
                bad("pruning threshold must lie in (0, 1]")
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no model for NPP `{0}`")]
    MissingModel(String),
    #[error("NPP `{name}`: {source}")]
    Npp { name: String, source: NppError },
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("evaluation needs labelled queries")]
    MissingLabels,
}

fn model<'m>(models: &'m NppModels, name: &str) -> Result<&'m NppModel, TrainError> {
    models.get(name).ok_or_else(|| TrainError::MissingModel(name.to_string()))
}

fn given<'a>(kind: NppQueryKind, input: &'a Option<NppInput>) -> Given<'a> {
    match (kind, input) {
        (NppQueryKind::Prior, _) | (_, None) => Given::None,
        (_, Some(d)) => Given::Data(d),
    }
}

/// Copy of `gp` whose NPP probabilities come from the models applied to the
/// query's inputs.
pub fn bind_probs(gp: &GroundProgram, models: &NppModels, q: &PreparedQuery) -> Result<GroundProgram, TrainError> {
    let mut out = gp.clone();
    for (npp, input) in out.npps.iter_mut().zip(&q.inputs) {
        let name = npp.name.to_string();
        let m = model(models, &name)?;
        let p = m.forward(npp.kind, given(npp.kind, input)).map_err(|source| TrainError::Npp {
            name: name.clone(),
            source,
        })?;
        if p.len() != npp.outcomes.len() {
            return Err(TrainError::Npp {
                name,
                source: NppError::DimensionMismatch {
                    expected: npp.outcomes.len(),
                    got: p.len(),
                },
            });
        }
        npp.probs = p;
    }
    Ok(out)
}

/// Solutions of one bound query under `mode`.
#[derive(Debug, Clone)]
pub struct Solved {
    pub program: GroundProgram,
    pub solutions: Vec<PotentialSolution>,
    /// Pruning emptied the solution set and the query was re-solved unmasked.
    pub fallback: bool,
    /// Smallest covered mass among pruned NPPs (1 without pruning).
    pub min_covered: f64,
    pub active_outcomes: usize,
}

pub fn solve_query(bound: &GroundProgram, q: &PreparedQuery, mode: Mode, budget: usize) -> Result<Solved, SolveError> {
    let opts = SolveOptions { budget };
    let all_active = bound.npps.iter().map(|n| n.num_active()).sum();
    match mode {
        Mode::Exact => Ok(Solved {
            solutions: enumerate_with(bound, &q.constraints, &opts)?,
            program: bound.clone(),
            fallback: false,
            min_covered: 1.0,
            active_outcomes: all_active,
        }),
        Mode::TopK(k) => Ok(Solved {
            solutions: topk_search(bound, &q.constraints, k)?,
            program: bound.clone(),
            fallback: false,
            min_covered: 1.0,
            active_outcomes: all_active,
        }),
        Mode::Same {
            threshold,
            rule,
            fallback,
        } => {
            let masks: Vec<Vec<bool>> = bound.npps.iter().map(|n| same_prune(&n.probs, threshold, rule)).collect();
            let min_covered = bound
                .npps
                .iter()
                .zip(&masks)
                .map(|(n, m)| covered_mass(&n.probs, m))
                .fold(1.0, f64::min);
            let active_outcomes = masks.iter().map(|m| m.iter().filter(|&&a| a).count()).sum();
            let pruned = apply_masks(bound, &masks).expect("pruning keeps at least one outcome");
            let solutions = enumerate_with(&pruned, &q.constraints, &opts)?;
            if solutions.is_empty() && fallback == SameFallback::Exact {
                return Ok(Solved {
                    solutions: enumerate_with(bound, &q.constraints, &opts)?,
                    program: bound.clone(),
                    fallback: true,
                    min_covered,
                    active_outcomes,
                });
            }
            Ok(Solved {
                program: pruned,
                solutions,
                fallback: false,
                min_covered,
                active_outcomes,
            })
        }
    }
}

/// Per-query result of the entailment phase.
#[derive(Debug, Clone)]
pub struct QueryStep {
    pub gamma: f64,
    pub num_solutions: usize,
    /// Parameter gradient of (scaled) `log P(Q)` per model; `None` if skipped.
    pub grads: Option<BTreeMap<String, Vec<f64>>>,
    pub fallback: bool,
    pub min_covered: f64,
    pub active_outcomes: usize,
    pub solve_time: Duration,
    pub grad_time: Duration,
}

fn query_weight(bound: &GroundProgram, models: &NppModels, q: &PreparedQuery, scaling: EntailmentScaling) -> f64 {
    if scaling == EntailmentScaling::Plain {
        return 1.0;
    }
    let mut ll = 0.0;
    let mut any = false;
    for (npp, input) in bound.npps.iter().zip(&q.inputs) {
        if let (Some(NppModel::TabularJoint(t)), Some(NppInput::Bin(x))) = (models.get(&*npp.name), input) {
            ll += t.data_marginal()[*x].max(PROB_FLOOR).ln();
            any = true;
        }
    }
    if any {
        ll.abs()
    } else {
        1.0
    }
}

pub fn query_step(
    gp: &GroundProgram,
    models: &NppModels,
    q: &PreparedQuery,
    cfg: &TrainConfig,
) -> Result<QueryStep, TrainError> {
    let t0 = Instant::now();
    let bound = bind_probs(gp, models, q)?;
    let solved = solve_query(&bound, q, cfg.mode, cfg.solution_budget)?;
    let solve_time = t0.elapsed();
    let t1 = Instant::now();
    let report = grad_logpq(&solved.solutions, &solved.program);
    let gamma = match &report {
        Ok(r) => r.gamma,
        Err(s) => s.gamma,
    };
    let grads = match report {
        Err(_) => None,
        Ok(r) => {
            let w = query_weight(&bound, models, q, cfg.entailment_scaling);
            let mut acc: BTreeMap<String, Vec<f64>> = BTreeMap::new();
            for ((npp, input), g) in bound.npps.iter().zip(&q.inputs).zip(&r.npps) {
                let name = npp.name.to_string();
                let m = model(models, &name)?;
                if !m.trainable() {
                    continue;
                }
                let pg = m
                    .backward(npp.kind, given(npp.kind, input), &g.grad)
                    .map_err(|source| TrainError::Npp {
                        name: name.clone(),
                        source,
                    })?;
                let slot = acc.entry(name).or_insert_with(|| vec![0.0; pg.len()]);
                for (s, v) in slot.iter_mut().zip(&pg) {
                    *s += w * v;
                }
            }
            Some(acc)
        }
    };
    Ok(QueryStep {
        gamma,
        num_solutions: solved.solutions.len(),
        grads,
        fallback: solved.fallback,
        min_covered: solved.min_covered,
        active_outcomes: solved.active_outcomes,
        solve_time,
        grad_time: t1.elapsed(),
    })
}

/// Result of one entailment update over a batch.
#[derive(Debug, Clone)]
pub struct BatchUpdate {
    pub steps: Vec<QueryStep>,
    /// Mean parameter gradient over the non-skipped queries.
    pub mean_grads: BTreeMap<String, Vec<f64>>,
    pub skipped: usize,
    pub update_time: Duration,
}

/// Solves every query of the batch (in parallel), averages the parameter
/// gradients of `log P(Q)` in batch order and applies one ascent step.
pub fn entailment_update(
    gp: &GroundProgram,
    models: &mut NppModels,
    batch: &[&PreparedQuery],
    cfg: &TrainConfig,
    optimizer: &mut Optimizer,
    lr: f64,
) -> Result<BatchUpdate, TrainError> {
    let frozen: &NppModels = models;
    let steps: Vec<QueryStep> = batch
        .par_iter()
        .map(|q| query_step(gp, frozen, q, cfg))
        .collect::<Result<_, _>>()?;
    let t0 = Instant::now();
    let mut sum: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut used = 0usize;
    for s in &steps {
        if let Some(g) = &s.grads {
            used += 1;
            for (name, v) in g {
                let slot = sum.entry(name.clone()).or_insert_with(|| vec![0.0; v.len()]);
                for (a, b) in slot.iter_mut().zip(v) {
                    *a += b;
                }
            }
        }
    }
    if used > 0 {
        for v in sum.values_mut() {
            for a in v.iter_mut() {
                *a /= used as f64;
            }
        }
        optimizer.ascend(models, &sum, lr);
    }
    Ok(BatchUpdate {
        skipped: steps.len() - used,
        steps,
        mean_grads: sum,
        update_time: t0.elapsed(),
    })
}

/// Ascent on the data log-likelihood of every joint model, using the bin
/// inputs of all training queries. Returns the summed log-likelihood, or
/// `None` when no model is joint.
pub fn npp_likelihood_update(
    gp: &GroundProgram,
    models: &mut NppModels,
    train: &[PreparedQuery],
    optimizer: &mut Optimizer,
    lr: f64,
) -> Option<f64> {
    let mut bins: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for q in train {
        for (npp, input) in gp.npps.iter().zip(&q.inputs) {
            if let Some(NppInput::Bin(x)) = input {
                bins.entry(npp.name.to_string()).or_default().push(*x);
            }
        }
    }
    let mut grads = BTreeMap::new();
    let mut total = None;
    for (name, m) in models.iter() {
        let NppModel::TabularJoint(t) = m else { continue };
        let data = bins.get(name).map(Vec::as_slice).unwrap_or(&[]);
        let Ok(lg) = npp_loss_grad(t, data) else { continue };
        let scale = 1.0 / data.len().max(1) as f64;
        grads.insert(name.clone(), lg.grad.iter().map(|g| g * scale).collect::<Vec<_>>());
        *total.get_or_insert(0.0) += lg.loss;
    }
    if total.is_some() {
        optimizer.ascend(models, &grads, lr);
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Accuracy {
    pub correct: usize,
    pub total: usize,
}

impl Accuracy {
    pub fn fraction(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = j;
        }
    }
    best
}

/// Fraction of labelled NPP instances whose most probable outcome (lowest
/// index on ties) matches the label.
pub fn eval_accuracy(gp: &GroundProgram, models: &NppModels, queries: &[PreparedQuery]) -> Result<Accuracy, TrainError> {
    let per_query: Vec<(usize, usize)> = queries
        .par_iter()
        .map(|q| {
            let mut correct = 0;
            let mut total = 0;
            for ((npp, input), label) in gp.npps.iter().zip(&q.inputs).zip(&q.labels) {
                let Some(label) = label else { continue };
                let name = npp.name.to_string();
                let p = model(models, &name)?
                    .forward(npp.kind, given(npp.kind, input))
                    .map_err(|source| TrainError::Npp { name, source })?;
                total += 1;
                if argmax(&p) == *label {
                    correct += 1;
                }
            }
            Ok((correct, total))
        })
        .collect::<Result<_, TrainError>>()?;
    let (correct, total) = per_query.iter().fold((0, 0), |(c, t), (a, b)| (c + a, t + b));
    if total == 0 {
        return Err(TrainError::MissingLabels);
    }
    Ok(Accuracy { correct, total })
}

/// Fresh models for every NPP of `gp`: softmax-linear for feature inputs
/// (weights ~ N(0, 0.01^2)), uniform tabular joints for bin inputs and
/// priors.
pub fn init_models(gp: &GroundProgram, queries: &[PreparedQuery], seed: u64) -> NppModels {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut models = NppModels::new();
    for (name, sig) in &gp.signatures().by_name {
        let n = sig.outcomes.len();
        let mut features = None;
        let mut max_bin = None;
        for q in queries {
            for (npp, input) in gp.npps.iter().zip(&q.inputs) {
                if &*npp.name != name.as_str() {
                    continue;
                }
                match input {
                    Some(NppInput::Features(x)) => features = features.or(Some(x.len())),
                    Some(NppInput::Bin(b)) => max_bin = Some(max_bin.map_or(*b, |m: usize| m.max(*b))),
                    None => {}
                }
            }
        }
        let m = match (features, max_bin) {
            (Some(d), _) => NppModel::SoftmaxLinear(SoftmaxLinear::random(n, d, &mut rng)),
            (None, b) => NppModel::TabularJoint(TabularJoint::uniform(b.map_or(1, |b| b + 1), n)),
        };
        models.insert(name.clone(), m);
    }
    models
}

/// Deterministic per-epoch order of the training queries.
fn epoch_order(len: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut rng);
    order
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

/// Alternates, per epoch, the entailment updates over all batches (phase A)
/// with a likelihood step on joint models (phase B). Halves the learning
/// rate whenever the epoch-mean query probability has dropped three epochs
/// in a row.
pub fn coordinate_descent(
    gp: &GroundProgram,
    models: &mut NppModels,
    train: &[PreparedQuery],
    test: Option<&[PreparedQuery]>,
    cfg: &TrainConfig,
) -> Result<TrainingTrace, TrainError> {
    cfg.validate()?;
    let mut optimizer = Optimizer::new(cfg.optimizer);
    let mut lr = cfg.learning_rate;
    let mut trace = TrainingTrace {
        mode: cfg.mode.label().to_string(),
        ..TrainingTrace::default()
    };
    let mut drops = 0;
    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        let order = epoch_order(train.len(), cfg.seed, epoch);
        let mut prune = EpochPrune {
            min_covered: 1.0,
            ..EpochPrune::default()
        };
        let mut gamma_sum = 0.0;
        let mut solve_ms = 0.0;
        let mut active_sum = 0usize;
        let mut npp_instances = 0usize;
        let mut skipped = 0;
        let batches: Vec<&[usize]> = order.chunks(cfg.batch_size).collect();
        let first_row = trace.batches.len();
        for (b, idx) in batches.iter().enumerate() {
            let batch: Vec<&PreparedQuery> = idx.iter().map(|&i| &train[i]).collect();
            let up = entailment_update(gp, models, &batch, cfg, &mut optimizer, lr)?;
            let n = up.steps.len() as f64;
            let g: f64 = up.steps.iter().map(|s| s.gamma).sum();
            let sols: usize = up.steps.iter().map(|s| s.num_solutions).sum();
            let solve: Duration = up.steps.iter().map(|s| s.solve_time).sum();
            let grad: Duration = up.steps.iter().map(|s| s.grad_time).sum();
            for s in &up.steps {
                prune.counts.push(s.num_solutions);
                prune.min_covered = prune.min_covered.min(s.min_covered);
                prune.fallbacks += s.fallback as usize;
                active_sum += s.active_outcomes;
                npp_instances += gp.npps.len();
            }
            gamma_sum += g;
            solve_ms += ms(solve);
            skipped += up.skipped;
            trace.batches.push(BatchMetrics {
                epoch,
                batch: b + 1,
                num_queries: up.steps.len(),
                mean_gamma: g / n,
                mean_solutions: sols as f64 / n,
                solve_ms: ms(solve),
                grad_ms: ms(grad),
                update_ms: ms(up.update_time),
                test_acc: None,
                skipped: up.skipped,
                fallbacks: up.steps.iter().filter(|s| s.fallback).count(),
            });
        }
        let phase_b = match npp_likelihood_update(gp, models, train, &mut optimizer, lr) {
            Some(ll) => PhaseB::Applied { log_likelihood: ll },
            None => PhaseB::Skipped,
        };
        let wall_ms = if cfg.timing { ms(started.elapsed()) } else { 0.0 };
        let test_acc = match test {
            Some(t) if !t.is_empty() => Some(eval_accuracy(gp, models, t)?.fraction()),
            _ => None,
        };
        if trace.batches.len() > first_row {
            if let Some(last) = trace.batches.last_mut() {
                last.test_acc = test_acc;
            }
        }
        prune.mean_active = if npp_instances == 0 {
            0.0
        } else {
            active_sum as f64 / npp_instances as f64
        };
        let mean_gamma = if train.is_empty() { 0.0 } else { gamma_sum / train.len() as f64 };
        let mean_solutions = prune.mean();
        let fallbacks = prune.fallbacks;
        trace.prune.epochs.push(prune);
        if let Some(prev) = trace.epochs.last() {
            drops = if mean_gamma < prev.mean_gamma { drops + 1 } else { 0 };
        }
        trace.epochs.push(EpochMetrics {
            epoch,
            mean_gamma,
            mean_solutions,
            solve_ms,
            wall_ms,
            test_acc,
            phase_b,
            learning_rate: lr,
            skipped,
            fallbacks,
        });
        log::info!(
            "epoch {epoch}: mean P(Q) {mean_gamma:.4}, mean solutions {mean_solutions:.2}, test acc {}",
            test_acc.map_or("-".into(), |a| format!("{a:.4}"))
        );
        if drops >= 3 {
            lr /= 2.0;
            drops = 0;
            trace.lr_halvings.push(epoch);
            log::warn!("mean P(Q) fell for 3 epochs in a row; learning rate halved to {lr}");
        }
    }
    Ok(trace)
}

#[cfg(test)]
mod tests;
