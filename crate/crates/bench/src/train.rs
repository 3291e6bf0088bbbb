//! Mini-batch training of the surrogate model.

use std::collections::BTreeMap;

use celldet_core::augment::{sample_plan, AugmentParams, SampleWeighting};
use celldet_core::groundtruth::{GroundTruthMaps, GtFormat};
use celldet_core::losses::{generalized_dice_loss_batch, weighted_mse_loss_batch};
use celldet_core::Raster;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};
use crate::features::{features_of_input, FeatureConfig};
use crate::model::PixelModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Dice,
    WeightedMse,
    CrossEntropy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Scenes per gradient step.
    pub batch_size: usize,
    pub optimizer: Optimizer,
    pub seed: u64,
    pub k_folds: usize,
    pub epsilon: f64,
    /// Decoupled weight decay applied with Adam updates.
    pub weight_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: LossKind::Dice,
            epochs: 30,
            learning_rate: 1e-2,
            batch_size: 4,
            optimizer: Optimizer::Adam,
            seed: 0,
            k_folds: 5,
            epsilon: 1e-6,
            weight_decay: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.k_folds == 0 {
            return Err(BenchError::Config("epochs, batch_size and k_folds must be positive".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(BenchError::Config(format!(
                "learning_rate must be a non-negative number, got {}",
                self.learning_rate
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(BenchError::Config("weight_decay must be non-negative".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(BenchError::Config("epsilon must be positive".into()));
        }
        Ok(())
    }
}

/// A model input with its per-pixel target distribution and cached
/// features. For cross-entropy, pixels whose target is all zero are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub input: Raster,
    pub target: Raster,
    /// Soft targets are resampled bilinearly under augmentation.
    pub soft_target: bool,
    pub features: Raster,
}

impl TrainSample {
    pub fn new(input: Raster, target: Raster, soft_target: bool, cfg: &FeatureConfig) -> Result<Self> {
        if input.dims() != target.dims() {
            return Err(BenchError::Config(format!(
                "input {:?} and target {:?} differ in size",
                input.dims(),
                target.dims()
            )));
        }
        let features = features_of_input(&input, cfg)?;
        Ok(Self {
            input,
            target,
            soft_target,
            features,
        })
    }

    fn augmented<R: rand::Rng>(&self, rng: &mut R, p: &AugmentParams, cfg: &FeatureConfig) -> Result<Self> {
        let (h, w) = self.input.dims();
        let plan = sample_plan(rng, h, w, p)?;
        let gt = GroundTruthMaps {
            maps: self.target.clone(),
            format: if self.soft_target { GtFormat::SoftIs } else { GtFormat::Circle },
        };
        Self::new(plan.apply_image(&self.input)?, plan.apply_gt(&gt)?.maps, self.soft_target, cfg)
    }
}

/// Optional training-time extras.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainOptions {
    /// Sampling weights per training scene (oversampling).
    pub weighting: Option<SampleWeighting>,
    /// Random augmentation redrawn for every visit of a scene.
    pub augment: Option<AugmentParams>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train: f64,
    pub valid: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: PixelModel,
    pub curve: Vec<EpochLoss>,
}

fn cross_entropy_batch(ys: &[&Raster], preds: &[&Raster]) -> (f64, Vec<Raster>) {
    let mass: f64 = ys.iter().map(|y| y.data().iter().sum::<f64>()).sum();
    let inv = if mass > 0.0 { 1.0 / mass } else { 0.0 };
    let mut value = 0.0;
    let mut grads = Vec::with_capacity(ys.len());
    for (y, p) in ys.iter().zip(preds) {
        let mut g = Raster::zeros(p.height(), p.width(), p.channels());
        for ((gv, &t), &q) in g.data_mut().iter_mut().zip(y.data()).zip(p.data()) {
            if t > 0.0 {
                let q = q.max(1e-12);
                value -= t * q.ln() * inv;
                *gv = -t / q * inv;
            }
        }
        grads.push(g);
    }
    (value, grads)
}

fn batch_loss(kind: LossKind, ys: &[&Raster], preds: &[&Raster], eps: f64) -> Result<(f64, Vec<Raster>)> {
    Ok(match kind {
        LossKind::Dice => {
            let r = generalized_dice_loss_batch(ys, preds, eps)?;
            (r.value, r.gradients)
        }
        LossKind::WeightedMse => {
            let r = weighted_mse_loss_batch(ys, preds, eps)?;
            (r.value, r.gradients)
        }
        LossKind::CrossEntropy => cross_entropy_batch(ys, preds),
    })
}

/// Loss over `samples` treated as one batch, and its gradient with respect
/// to the model parameters (weights row-major, then bias).
pub fn loss_and_gradient(model: &PixelModel, samples: &[&TrainSample], kind: LossKind, eps: f64) -> Result<(f64, Vec<f64>)> {
    let probs = samples
        .iter()
        .map(|s| model.predict_features(&s.features))
        .collect::<Result<Vec<_>>>()?;
    let ys: Vec<&Raster> = samples.iter().map(|s| &s.target).collect();
    let ps: Vec<&Raster> = probs.iter().collect();
    let (value, dprobs) = batch_loss(kind, &ys, &ps, eps)?;
    let mut grad = vec![0.0; model.n_params()];
    for ((s, p), d) in samples.iter().zip(&probs).zip(&dprobs) {
        model.accumulate_gradient(&s.features, p, d, &mut grad);
    }
    Ok((value, grad))
}

pub fn loss_value(model: &PixelModel, samples: &[&TrainSample], kind: LossKind, eps: f64) -> Result<f64> {
    let probs = samples
        .iter()
        .map(|s| model.predict_features(&s.features))
        .collect::<Result<Vec<_>>>()?;
    let ys: Vec<&Raster> = samples.iter().map(|s| &s.target).collect();
    let ps: Vec<&Raster> = probs.iter().collect();
    Ok(batch_loss(kind, &ys, &ps, eps)?.0)
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64, decay: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = Self::B1 * self.m[i] + (1.0 - Self::B1) * grad[i];
            self.v[i] = Self::B2 * self.v[i] + (1.0 - Self::B2) * grad[i] * grad[i];
            params[i] -= lr * ((self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS) + decay * params[i]);
        }
    }
}

/// Fits the feature standardisation on the training scenes, then minimises
/// the configured loss with mini-batch steps. With a weighting, every epoch
/// draws as many scenes as there are, with replacement, in proportion to the
/// weights; otherwise each epoch is a shuffled pass.
pub fn train(
    mut model: PixelModel,
    train_set: &[TrainSample],
    valid_set: &[TrainSample],
    cfg: &TrainConfig,
    opts: &TrainOptions,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(BenchError::Config("training needs at least one scene".into()));
    }
    if let Some(p) = &opts.augment {
        p.validate()?;
    }
    let weighting = opts.weighting.as_ref();
    if let Some(w) = weighting {
        if w.len() != train_set.len() {
            return Err(BenchError::Config(format!(
                "{} sample weights for {} scenes",
                w.len(),
                train_set.len()
            )));
        }
    }
    let feats: Vec<&Raster> = train_set.iter().map(|s| &s.features).collect();
    model.fit_standardization(&feats);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(model.n_params());
    let mut params = model.params();
    let valid_refs: Vec<&TrainSample> = valid_set.iter().collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let order: Vec<usize> = match weighting {
            Some(w) => w.draw(&mut rng, train_set.len())?,
            None => {
                let mut o: Vec<usize> = (0..train_set.len()).collect();
                o.shuffle(&mut rng);
                o
            }
        };
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let augmented = match &opts.augment {
                Some(p) => chunk
                    .iter()
                    .map(|&i| train_set[i].augmented(&mut rng, p, &model.features))
                    .collect::<Result<Vec<_>>>()?,
                None => Vec::new(),
            };
            let batch: Vec<&TrainSample> = if opts.augment.is_some() {
                augmented.iter().collect()
            } else {
                chunk.iter().map(|&i| &train_set[i]).collect()
            };
            let (value, grad) = loss_and_gradient(&model, &batch, cfg.loss, cfg.epsilon)?;
            if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(BenchError::Training {
                    epoch,
                    message: format!("non-finite loss {value}"),
                });
            }
            total += value;
            batches += 1;
            if cfg.learning_rate > 0.0 {
                match cfg.optimizer {
                    Optimizer::Adam => adam.step(&mut params, &grad, cfg.learning_rate, cfg.weight_decay),
                    Optimizer::Sgd => {
                        for (p, g) in params.iter_mut().zip(&grad) {
                            *p -= cfg.learning_rate * g;
                        }
                    }
                }
                model.set_params(&params);
                if !model.is_finite() {
                    return Err(BenchError::Training {
                        epoch,
                        message: "parameters became non-finite".into(),
                    });
                }
            }
        }
        let valid = if valid_refs.is_empty() {
            None
        } else {
            Some(loss_value(&model, &valid_refs, cfg.loss, cfg.epsilon)?)
        };
        curve.push(EpochLoss {
            epoch,
            train: total / batches as f64,
            valid,
        });
    }
    Ok(TrainOutcome { model, curve })
}

/// Validation index sets for `k` folds, stratified by tag: each tag's
/// samples are shuffled and dealt round-robin, continuing across tags.
pub fn kfold_split(tags: &[String], k: usize, seed: u64) -> Vec<Vec<usize>> {
    let k = k.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, t) in tags.iter().enumerate() {
        groups.entry(t.as_str()).or_default().push(i);
    }
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for (_, mut idx) in groups {
        idx.shuffle(&mut rng);
        for i in idx {
            folds[next % k].push(i);
            next += 1;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    folds
}

/// Trains one model per fold, each validated on its held-out fold.
pub fn train_kfold(
    model: &PixelModel,
    samples: &[TrainSample],
    tags: &[String],
    cfg: &TrainConfig,
    opts: &TrainOptions,
) -> Result<Vec<TrainOutcome>> {
    if tags.len() != samples.len() {
        return Err(BenchError::Config(format!("{} organ tags for {} scenes", tags.len(), samples.len())));
    }
    if cfg.k_folds == 1 {
        return Ok(vec![train(model.clone(), samples, &[], cfg, opts)?]);
    }
    if cfg.k_folds > samples.len() {
        return Err(BenchError::Config(format!(
            "{} folds need at least as many scenes, got {}",
            cfg.k_folds,
            samples.len()
        )));
    }
    let folds = kfold_split(tags, cfg.k_folds, cfg.seed);
    folds
        .iter()
        .enumerate()
        .map(|(f, held)| {
            let mut in_fold = vec![false; samples.len()];
            for &i in held {
                in_fold[i] = true;
            }
            let tr_idx: Vec<usize> = (0..samples.len()).filter(|&i| !in_fold[i]).collect();
            let tr: Vec<TrainSample> = tr_idx.iter().map(|&i| samples[i].clone()).collect();
            let va: Vec<TrainSample> = held.iter().map(|&i| samples[i].clone()).collect();
            let opts = TrainOptions {
                weighting: opts
                    .weighting
                    .as_ref()
                    .map(|w| SampleWeighting { weights: tr_idx.iter().map(|&i| w.weights[i]).collect() }),
                augment: opts.augment.clone(),
            };
            let cfg = TrainConfig {
                seed: cfg.seed.wrapping_add(f as u64 + 1),
                ..cfg.clone()
            };
            train(model.clone(), &tr, &va, &cfg, &opts)
        })
        .collect()
}
