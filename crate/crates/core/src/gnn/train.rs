// SPDX-License-Identifier: Apache-2.0

use std::fmt;

use ndarray::Array1;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::net::{
    active_features, backward, bce_with_logit, forward, forward_with_dropout, sigmoid,
};
use super::{CheckpointMetric, GnnConfig, GnnError, GnnModel, ModelSpec, Params};
use crate::graphprep::{Dataset, EnclosingSubgraph};

/// Smallest sort-pool size ever chosen.
pub const MIN_SORTPOOL: usize = 10;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Node count at the given percentile of `sizes`, floored at
/// [`MIN_SORTPOOL`].
pub fn sortpool_size(sizes: &[usize], percentile: f64) -> usize {
    if sizes.is_empty() {
        return MIN_SORTPOOL;
    }
    let mut sorted = sizes.to_vec();
    sorted.sort_unstable();
    let idx = ((percentile * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1;
    sorted[idx].max(MIN_SORTPOOL)
}

/// Area under the ROC curve, with tied scores counted as half. `None` when
/// only one class is present.
pub fn auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let pos = labels.iter().filter(|&&y| y).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += idx[i..=j].iter().filter(|&&k| labels[k]).count() as f64 * avg_rank;
        i = j + 1;
    }
    let pos = pos as f64;
    Some((rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
    pub val_auc: Option<f64>,
}

impl fmt::Display for EpochLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.6}"));
        write!(
            f,
            "epoch {} loss {:.6} acc {:.4} val_loss {} val_acc {} val_auc {}",
            self.epoch,
            self.train_loss,
            self.train_accuracy,
            opt(self.val_loss),
            opt(self.val_accuracy),
            opt(self.val_auc)
        )
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the best epoch.
    pub model: GnnModel,
    pub best_epoch: usize,
    pub log: Vec<EpochLog>,
}

struct Adam {
    m: Params,
    v: Params,
    t: i32,
}

impl Adam {
    fn new(spec: &ModelSpec) -> Self {
        Adam {
            m: Params::zeros(spec),
            v: Params::zeros(spec),
            t: 0,
        }
    }

    fn step(&mut self, params: &mut Params, grad: &Params, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        let grads: Vec<&[f64]> = grad.tensors().into_iter().map(|(_, _, v)| v).collect();
        let ms = self.m.tensors_mut();
        let vs = self.v.tensors_mut();
        for (((p, g), m), v) in params.tensors_mut().into_iter().zip(grads).zip(ms).zip(vs) {
            for i in 0..p.len() {
                m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
                v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPS);
            }
        }
    }
}

fn dropout_mask(rng: &mut ChaCha8Rng, width: usize, rate: f64) -> Option<Array1<f64>> {
    (rate > 0.0).then(|| {
        let keep = 1.0 / (1.0 - rate);
        Array1::from_shape_fn(width, |_| {
            if rng.random::<f64>() < rate {
                0.0
            } else {
                keep
            }
        })
    })
}

struct Metrics {
    loss: f64,
    accuracy: f64,
    auc: Option<f64>,
}

fn evaluate(model: &GnnModel, samples: &[EnclosingSubgraph]) -> Metrics {
    let logits: Vec<f64> = samples
        .par_iter()
        .map(|g| forward(model, g).logit)
        .collect();
    let labels: Vec<bool> = samples.iter().map(|g| g.label == Some(true)).collect();
    let n = samples.len().max(1) as f64;
    let loss = logits
        .iter()
        .zip(&labels)
        .map(|(&z, &y)| bce_with_logit(z, y).0)
        .sum::<f64>()
        / n;
    let correct = logits
        .iter()
        .zip(&labels)
        .filter(|(&z, &y)| (z >= 0.0) == y)
        .count();
    let scores: Vec<f64> = logits.iter().map(|&z| sigmoid(z)).collect();
    Metrics {
        loss,
        accuracy: correct as f64 / n,
        auc: auc(&scores, &labels),
    }
}

fn better(metric: CheckpointMetric, new: &EpochLog, best: &EpochLog) -> bool {
    match metric {
        CheckpointMetric::Loss => {
            new.val_loss.unwrap_or(new.train_loss) < best.val_loss.unwrap_or(best.train_loss)
        }
        CheckpointMetric::Accuracy => {
            new.val_accuracy.unwrap_or(new.train_accuracy)
                > best.val_accuracy.unwrap_or(best.train_accuracy)
        }
        CheckpointMetric::Auc => new.val_auc.unwrap_or(0.0) > best.val_auc.unwrap_or(0.0),
    }
}

/// Clears first-layer rows of input features that no training sample
/// activates. Those rows never receive a gradient, and their initial
/// weights would otherwise dominate subgraphs that do use them, such as the
/// new labels that appear at a larger hop count.
fn zero_unseen_inputs(model: &mut GnnModel, train: &[EnclosingSubgraph], max_drnl: usize) {
    let mut seen = vec![false; model.spec.input_width];
    for s in train {
        for a in active_features(s, max_drnl).into_iter().flatten() {
            seen[a] = true;
        }
    }
    for (row, _) in seen.iter().enumerate().filter(|(_, &s)| !s) {
        model.params.conv[0].row_mut(row).fill(0.0);
    }
}

/// Trains a fresh model on the dataset's training split and keeps the epoch
/// that scores best on the validation split. Input features that never occur
/// in training get zero weight.
pub fn train(config: &GnnConfig, dataset: &Dataset) -> Result<TrainOutcome, GnnError> {
    config.validate()?;
    let train = &dataset.train;
    if train.iter().any(|s| s.label.is_none()) {
        return Err(GnnError::Config("training sample without a label".into()));
    }
    let positives = train.iter().filter(|s| s.label == Some(true)).count();
    if positives == 0 || positives == train.len() {
        return Err(GnnError::SingleClass);
    }
    let sizes: Vec<usize> = train
        .iter()
        .chain(&dataset.validation)
        .map(|s| s.len())
        .collect();
    let k = sortpool_size(&sizes, config.sortpool_percentile);
    let spec = ModelSpec::from_config(config, k)?;
    let mut model = GnnModel::new(spec, config.seed);
    let mut adam = Adam::new(&model.spec);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log: Vec<EpochLog> = Vec::with_capacity(config.epochs);
    let mut best: Option<(usize, GnnModel)> = None;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for batch in order.chunks(config.batch_size) {
            // Masks are drawn up front so parallel evaluation cannot
            // change the random stream.
            let masks: Vec<Option<Array1<f64>>> = batch
                .iter()
                .map(|_| dropout_mask(&mut rng, model.spec.dense_width, config.dropout))
                .collect();
            let per_sample: Vec<(f64, bool, Params)> = batch
                .par_iter()
                .zip(masks)
                .map(|(&i, mask)| {
                    let s = &train[i];
                    let y = s.label == Some(true);
                    let tr = forward_with_dropout(&model, s, mask);
                    let (loss, dlogit) = bce_with_logit(tr.logit, y);
                    (loss, (tr.logit >= 0.0) == y, backward(&model, &tr, dlogit))
                })
                .collect();
            let mut grad = Params::zeros(&model.spec);
            for (loss, hit, g) in &per_sample {
                loss_sum += loss;
                correct += *hit as usize;
                grad.add_assign(g);
            }
            if !loss_sum.is_finite() {
                return Err(GnnError::Diverged { epoch });
            }
            grad.scale(1.0 / batch.len() as f64);
            adam.step(&mut model.params, &grad, config.learning_rate);
        }
        let val = (!dataset.validation.is_empty()).then(|| evaluate(&model, &dataset.validation));
        if val.as_ref().is_some_and(|m| !m.loss.is_finite()) {
            return Err(GnnError::Diverged { epoch });
        }
        let entry = EpochLog {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            train_accuracy: correct as f64 / train.len() as f64,
            val_loss: val.as_ref().map(|m| m.loss),
            val_accuracy: val.as_ref().map(|m| m.accuracy),
            val_auc: val.as_ref().and_then(|m| m.auc),
        };
        let improve = match &best {
            None => true,
            Some((b, _)) => better(config.checkpoint, &entry, &log[*b - 1]),
        };
        if improve {
            best = Some((epoch, model.clone()));
        }
        log.push(entry);
    }
    let (best_epoch, mut model) = best.unwrap_or((0, model));
    zero_unseen_inputs(&mut model, train, config.max_drnl);
    Ok(TrainOutcome {
        model,
        best_epoch,
        log,
    })
}

/// Accuracy of `model` on labelled samples at threshold 0.5.
pub fn accuracy(model: &GnnModel, samples: &[EnclosingSubgraph]) -> f64 {
    evaluate(model, samples).accuracy
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::graphprep::{Scenario, FEATURE_WIDTH};

    /// Triangles (label 1) and paths (label 0) of a few sizes, with a target
    /// pair in slots 0 and 1.
    pub(crate) fn toy_dataset(count: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut samples = Vec::new();
        for i in 0..count {
            let tri = i % 2 == 0;
            let extra = rng.random_range(0..3u32);
            let n = 3 + extra;
            // Targets 0 and 1 share neighbour 2 in a triangle; in a path
            // they sit at opposite ends.
            let mut edges = if tri {
                vec![(0, 2), (1, 2)]
            } else {
                vec![(0, 2), (2, 3.min(n - 1))]
            };
            for e in 3..n {
                edges.push((e - 1, e));
            }
            edges.retain(|&(a, b)| a != b);
            let edges: Vec<(u32, u32)> = edges.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect();
            let mut s = EnclosingSubgraph {
                nodes: (0..n).collect(),
                edges,
                features: vec![1; n as usize],
                drnl: Vec::new(),
                label: Some(tri),
            };
            s.drnl = crate::graphprep::drnl_labels(&s.neighbor_lists(), 50);
            samples.push(s);
        }
        let validation = samples.split_off(samples.len() * 9 / 10);
        Dataset {
            scenario: Scenario::SelfReferencing,
            h: 2,
            max_drnl: 50,
            train: samples,
            validation,
            test: Vec::new(),
        }
    }

    #[test]
    fn percentile_and_floor() {
        assert_eq!(sortpool_size(&[3, 4, 5], 0.6), 10);
        let sizes: Vec<usize> = (1..=100).collect();
        assert_eq!(sortpool_size(&sizes, 0.6), 60);
        assert_eq!(sortpool_size(&[], 0.6), 10);
    }

    #[test]
    fn auc_values() {
        assert_eq!(auc(&[0.1, 0.9], &[false, true]), Some(1.0));
        assert_eq!(auc(&[0.9, 0.1], &[false, true]), Some(0.0));
        assert_eq!(auc(&[0.5, 0.5], &[false, true]), Some(0.5));
        assert_eq!(auc(&[0.5], &[true]), None);
    }

    #[test]
    fn zero_learning_rate_keeps_weights() {
        let ds = toy_dataset(40, 1);
        let cfg = GnnConfig {
            epochs: 1,
            learning_rate: 0.0,
            seed: 3,
            ..GnnConfig::default()
        };
        let out = train(&cfg, &ds).unwrap();
        let mut init = GnnModel::new(out.model.spec.clone(), 3);
        zero_unseen_inputs(&mut init, &ds.train, cfg.max_drnl);
        assert_eq!(out.model.params, init.params);
    }

    #[test]
    fn unseen_input_rows_are_zeroed() {
        let ds = toy_dataset(40, 1);
        let cfg = GnnConfig {
            epochs: 2,
            learning_rate: 1e-3,
            seed: 3,
            ..GnnConfig::default()
        };
        let w = &train(&cfg, &ds).unwrap().model.params.conv[0];
        // Every toy node has base feature 0 and a label of at most 4.
        assert!(w.row(0).iter().any(|&x| x != 0.0));
        assert!(w.row(1).iter().all(|&x| x == 0.0));
        assert!(w.row(FEATURE_WIDTH + 40).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn single_class_rejected() {
        let mut ds = toy_dataset(20, 1);
        for s in &mut ds.train {
            s.label = Some(true);
        }
        assert_eq!(
            train(&GnnConfig::default(), &ds).unwrap_err(),
            GnnError::SingleClass
        );
    }

    #[test]
    fn training_is_reproducible() {
        let ds = toy_dataset(60, 2);
        let cfg = GnnConfig {
            epochs: 2,
            learning_rate: 1e-3,
            batch_size: 8,
            seed: 5,
            ..GnnConfig::default()
        };
        let a = train(&cfg, &ds).unwrap();
        let b = train(&cfg, &ds).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.model.params, b.model.params);
    }

    #[test]
    fn learns_triangles_from_paths() {
        let ds = toy_dataset(200, 4);
        let cfg = GnnConfig {
            learning_rate: 1e-3,
            batch_size: 10,
            seed: 1,
            ..GnnConfig::default()
        };
        let out = train(&cfg, &ds).unwrap();
        assert!(accuracy(&out.model, &ds.train) >= 0.95);
        assert!(accuracy(&out.model, &ds.validation) >= 0.9);
    }

    #[test]
    fn batch_matches_single() {
        let ds = toy_dataset(20, 6);
        let spec = ModelSpec::from_config(&GnnConfig::default(), 10).unwrap();
        let m = GnnModel::new(spec, 2);
        let batch = m.predict_batch(&ds.train).unwrap();
        for (g, p) in ds.train.iter().zip(batch) {
            assert_eq!(m.forward(g).unwrap(), p);
        }
        assert!(m.predict_batch(&[]).unwrap().is_empty());
    }
}
