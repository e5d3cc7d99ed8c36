//! End-to-end training of the template model.
//!
//! The loss for one subject's template is its summed Frobenius distance to
//! the views of a random subset of training subjects, each view weighted by
//! the population-derived normalization weight. The subset is redrawn for
//! every subject in every epoch, which keeps the learned template centered
//! in the population rather than overfitted to any one subject.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{NodeId, Tape};
use crate::data::folds::FoldSplit;
use crate::data::Population;
use crate::error::{Error, Result};
use crate::model::{DgnModel, ModelConfig};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct SnlConfig {
    /// Subjects drawn (without replacement) per loss evaluation.
    pub sample_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Master seed for parameter init, epoch shuffling and subset sampling.
    pub seed: u64,
    /// Early stopping: stop after this many consecutive epochs without a
    /// strictly better mean loss, and return the best snapshot. None trains
    /// for the full epoch budget and returns the final model.
    pub patience: Option<usize>,
}

impl Default for SnlConfig {
    fn default() -> Self {
        SnlConfig {
            sample_size: 10,
            learning_rate: 5e-4,
            epochs: 100,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 42,
            patience: None,
        }
    }
}

impl SnlConfig {
    pub fn validate(&self, train_size: usize) -> Result<()> {
        if self.sample_size == 0 || self.sample_size > train_size {
            return Err(Error::InvalidConfig(format!(
                "sample size {} must be in 1..={train_size} (training subjects)",
                self.sample_size
            )));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be finite and > 0, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be >= 1".into()));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be in [0, 1), got {b}"
                )));
            }
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "epsilon must be finite and > 0, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Draws `k` distinct subjects from `pool` uniformly, returned sorted.
pub fn sample_subset<R: Rng>(rng: &mut R, pool: &[usize], k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > pool.len() {
        return Err(Error::InvalidConfig(format!(
            "cannot sample {k} subjects from a pool of {}",
            pool.len()
        )));
    }
    let mut picked: Vec<usize> = rand::seq::index::sample(rng, pool.len(), k)
        .into_iter()
        .map(|i| pool[i])
        .collect();
    picked.sort_unstable();
    Ok(picked)
}

/// Builds the subject-normalized loss on the tape: for every view v and
/// every sampled subject i, the Frobenius distance between the candidate
/// template and that subject's view matrix, scaled by the view weight.
/// Terms are accumulated view-major, subject-minor, a fixed order.
pub fn snl_loss(
    tape: &mut Tape,
    cbt: NodeId,
    pop: &Population,
    sample: &[usize],
    lambdas: &[f64],
) -> Result<NodeId> {
    if sample.is_empty() {
        return Err(Error::EmptyInput("loss over an empty subject sample".into()));
    }
    if lambdas.len() != pop.n_v() {
        return Err(Error::InvalidConfig(format!(
            "{} view weights for {} views",
            lambdas.len(),
            pop.n_v()
        )));
    }
    for &i in sample {
        if i >= pop.len() {
            return Err(Error::InvalidConfig(format!(
                "sampled subject {i} out of range for {} subjects",
                pop.len()
            )));
        }
    }
    let mut total: Option<NodeId> = None;
    for (v, &lambda) in lambdas.iter().enumerate() {
        for &i in sample {
            let target = tape.constant(pop.subject(i).view_matrix(v)?)?;
            let diff = tape.sub(cbt, target)?;
            let dist = tape.frobenius_norm(diff)?;
            let term = tape.scalar_mul(dist, lambda)?;
            total = Some(match total {
                Some(acc) => tape.add(acc, term)?,
                None => term,
            });
        }
    }
    Ok(total.expect("sample is non-empty"))
}

/// First and second moment estimates for every parameter, plus the shared
/// step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: u64,
}

impl AdamState {
    pub fn new(params: &[&Tensor]) -> Self {
        AdamState {
            m: params.iter().map(|p| Tensor::zeros(p.shape().to_vec())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.shape().to_vec())).collect(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One optimizer step with bias-corrected moment estimates. Parameters are
/// updated in place; a non-finite gradient or update aborts before any
/// parameter is corrupted.
pub fn adam_step(
    params: &mut [&mut Tensor],
    grads: &[Tensor],
    state: &mut AdamState,
    cfg: &SnlConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::InvalidConfig(format!(
            "optimizer saw {} params, {} grads, state for {}",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() {
            return Err(Error::shape(
                format!("gradient of parameter {i}"),
                p.shape(),
                g.shape(),
            ));
        }
        if g.first_non_finite().is_some() {
            return Err(Error::NonFiniteGradient {
                param: format!("#{i}"),
            });
        }
    }
    let t = state.step + 1;
    // Past ~2^31 steps the corrections are indistinguishable from 1 anyway.
    let ti = t.min(i32::MAX as u64) as i32;
    let bc1 = 1.0 - cfg.beta1.powi(ti);
    let bc2 = 1.0 - cfg.beta2.powi(ti);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = state.m[i].values_mut();
        let v = state.v[i].values_mut();
        let pv = p.values_mut();
        for ((x, mm), (vv, &gg)) in pv.iter_mut().zip(m.iter_mut()).zip(v.iter_mut().zip(g.values())) {
            *mm = cfg.beta1 * *mm + (1.0 - cfg.beta1) * gg;
            *vv = cfg.beta2 * *vv + (1.0 - cfg.beta2) * gg * gg;
            let m_hat = *mm / bc1;
            let v_hat = *vv / bc2;
            *x -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
        if let Some(idx) = p.first_non_finite() {
            return Err(Error::NonFinite {
                context: format!("parameter #{i} after optimizer step (element {idx})"),
            });
        }
    }
    state.step = t;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: DgnModel,
    /// Mean per-subject loss of each completed epoch.
    pub epoch_losses: Vec<f64>,
    pub stopped_early: bool,
}

/// Trains a fresh model on the training side of `fold`.
///
/// View weights come from the training subjects only, so nothing about the
/// held-out side leaks into the loss. One optimizer step is taken per
/// subject; subject order is reshuffled and loss subsets are redrawn from
/// the training pool every epoch. Identical inputs produce bit-identical
/// histories and parameters.
pub fn train(
    pop: &Population,
    fold: &FoldSplit,
    model_cfg: &ModelConfig,
    cfg: &SnlConfig,
) -> Result<TrainOutcome> {
    model_cfg.validate()?;
    if model_cfg.n_r != pop.n_r() || model_cfg.n_v != pop.n_v() {
        return Err(Error::InvalidConfig(format!(
            "model is ({}, {}) but population is ({}, {})",
            model_cfg.n_r,
            model_cfg.n_v,
            pop.n_r(),
            pop.n_v()
        )));
    }
    cfg.validate(fold.train_indices.len())?;
    // Also validates that the indices are unique and in range.
    let stats = pop.view_stats_for(&fold.train_indices)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let model_seed: u64 = rng.random();
    let mut model = DgnModel::init(model_cfg.clone(), model_seed)?;
    let mut adam = AdamState::new(&model.params());

    let mut history: Vec<f64> = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, DgnModel)> = None;
    let mut since_best = 0usize;
    let mut stopped_early = false;

    let diverged = |e: Error, epoch: usize, subject: &str, history: &[f64]| match e {
        Error::NonFinite { context } => Error::TrainingDiverged {
            epoch,
            subject: subject.to_string(),
            detail: context,
            history: history.to_vec(),
        },
        Error::NonFiniteGradient { param } => Error::TrainingDiverged {
            epoch,
            subject: subject.to_string(),
            detail: format!("non-finite gradient for parameter {param}"),
            history: history.to_vec(),
        },
        other => other,
    };

    for epoch in 0..cfg.epochs {
        let mut order = fold.train_indices.clone();
        order.shuffle(&mut rng);
        let mut total = 0.0f64;
        for &s in &order {
            let sample = sample_subset(&mut rng, &fold.train_indices, cfg.sample_size)?;
            let sid = pop.subject(s).subject_id().to_string();
            let mut tape = Tape::new();
            let ids = model.insert_params(&mut tape)?;
            let step = (|| -> Result<f64> {
                let cbt = model.forward_cbt_graph(&mut tape, &ids, pop.subject(s))?;
                let loss = snl_loss(&mut tape, cbt, pop, &sample, &stats.lambdas)?;
                let value = tape.value(loss).item()?;
                let grads = tape.backward(loss)?;
                adam_step(&mut model.params_mut(), &grads, &mut adam, cfg)?;
                Ok(value)
            })();
            match step {
                Ok(value) => total += value,
                Err(e) => return Err(diverged(e, epoch, &sid, &history)),
            }
        }
        let mean = total / order.len() as f64;
        history.push(mean);

        if cfg.patience.is_some() {
            let improved = best.as_ref().is_none_or(|(b, _)| mean < *b);
            if improved {
                best = Some((mean, model.clone()));
                since_best = 0;
            } else {
                since_best += 1;
                if since_best > cfg.patience.expect("checked is_some") {
                    stopped_early = true;
                    break;
                }
            }
        }
    }

    if let Some((_, snapshot)) = best {
        model = snapshot;
    }
    Ok(TrainOutcome {
        model,
        epoch_losses: history,
        stopped_early,
    })
}
