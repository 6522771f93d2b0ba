// SPDX-License-Identifier: Apache-2.0

//! Deep graph convolutional network for scoring candidate links.
//!
//! Four propagation layers `tanh(D̃⁻¹ÃZW)` are concatenated, nodes are sorted
//! by the last channel and truncated or padded to a fixed count, and a small
//! 1-D convolutional head produces one logit. Gradients are derived by hand.

mod io;
mod net;
mod train;

pub use io::{read_model, write_model};
pub use net::{gradient_check, graph_conv_forward, sort_pool, GradCheck};
pub use train::{accuracy, auc, sortpool_size, train, EpochLog, TrainOutcome, MIN_SORTPOOL};

use ndarray::{Array1, Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::graphprep::{EnclosingSubgraph, DEFAULT_MAX_DRNL, FEATURE_WIDTH};

#[derive(Debug, Error, PartialEq)]
pub enum GnnError {
    #[error("feature width {got} does not match the model's {expected}")]
    Width { expected: usize, got: usize },
    #[error("training data holds a single class")]
    SingleClass,
    #[error("training diverged (non-finite loss) in epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("model file: {0}")]
    Format(String),
}

/// Which validation statistic picks the kept checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckpointMetric {
    Loss,
    Accuracy,
    Auc,
}

impl std::str::FromStr for CheckpointMetric {
    type Err = GnnError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "loss" => Ok(CheckpointMetric::Loss),
            "accuracy" | "acc" => Ok(CheckpointMetric::Accuracy),
            "auc" => Ok(CheckpointMetric::Auc),
            other => Err(GnnError::Config(format!(
                "unknown checkpoint metric `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GnnConfig {
    pub conv_channels: Vec<usize>,
    pub sortpool_percentile: f64,
    pub conv1d_channels: [usize; 2],
    pub conv1d_kernel: usize,
    pub dense_width: usize,
    /// Dropout rate on the dense layer during training.
    pub dropout: f64,
    pub epochs: usize,
    pub h_train: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_drnl: usize,
    pub checkpoint: CheckpointMetric,
    pub seed: u64,
}

impl Default for GnnConfig {
    fn default() -> Self {
        GnnConfig {
            conv_channels: vec![32, 32, 32, 1],
            sortpool_percentile: 0.6,
            conv1d_channels: [16, 32],
            conv1d_kernel: 5,
            dense_width: 128,
            dropout: 0.5,
            epochs: 50,
            h_train: 2,
            learning_rate: 1e-4,
            batch_size: 50,
            max_drnl: DEFAULT_MAX_DRNL,
            checkpoint: CheckpointMetric::Loss,
            seed: 0,
        }
    }
}

impl GnnConfig {
    pub fn validate(&self) -> Result<(), GnnError> {
        let bad = |m: &str| Err(GnnError::Config(m.into()));
        if self.conv_channels.last() != Some(&1) {
            return bad("last graph-convolution width must be 1");
        }
        if self.conv_channels.contains(&0)
            || self.conv1d_channels.contains(&0)
            || self.conv1d_kernel == 0
            || self.dense_width == 0
            || self.batch_size == 0
        {
            return bad("all layer sizes and the batch size must be positive");
        }
        if !(0.0..=1.0).contains(&self.sortpool_percentile) {
            return bad("sort-pool percentile must lie in [0, 1]");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if self.learning_rate.is_nan() || self.learning_rate < 0.0 {
            return bad("learning rate must be non-negative");
        }
        Ok(())
    }
}

/// Architecture of a built model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    pub input_width: usize,
    pub conv_channels: Vec<usize>,
    /// Nodes kept by sort pooling.
    pub sortpool_k: usize,
    pub conv1d_channels: [usize; 2],
    pub conv1d_kernel: usize,
    pub dense_width: usize,
    pub max_drnl: usize,
}

impl ModelSpec {
    pub fn from_config(config: &GnnConfig, sortpool_k: usize) -> Result<Self, GnnError> {
        config.validate()?;
        let spec = ModelSpec {
            input_width: EnclosingSubgraph::feature_width(config.max_drnl),
            conv_channels: config.conv_channels.clone(),
            sortpool_k,
            conv1d_channels: config.conv1d_channels,
            conv1d_kernel: config.conv1d_kernel,
            dense_width: config.dense_width,
            max_drnl: config.max_drnl,
        };
        spec.check()?;
        Ok(spec)
    }

    pub fn check(&self) -> Result<(), GnnError> {
        if self.conv_channels.last() != Some(&1) || self.conv_channels.contains(&0) {
            return Err(GnnError::Config("bad graph-convolution widths".into()));
        }
        if self.input_width != FEATURE_WIDTH + self.max_drnl + 1 {
            return Err(GnnError::Config(
                "input width disagrees with the label cap".into(),
            ));
        }
        if self.sortpool_k / 2 < self.conv1d_kernel {
            return Err(GnnError::Config(format!(
                "sort-pool size {} is too small for kernel {}",
                self.sortpool_k, self.conv1d_kernel
            )));
        }
        Ok(())
    }

    /// Width of the concatenated node embedding.
    pub fn embedding_width(&self) -> usize {
        self.conv_channels.iter().sum()
    }

    pub(crate) fn pooled_len(&self) -> usize {
        self.sortpool_k / 2
    }

    pub(crate) fn conv2_len(&self) -> usize {
        self.pooled_len() - self.conv1d_kernel + 1
    }

    pub(crate) fn dense_input(&self) -> usize {
        self.conv1d_channels[1] * self.conv2_len()
    }
}

/// Trainable tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    /// Graph convolution weights, `k_l × k_{l+1}`.
    pub conv: Vec<Array2<f64>>,
    /// First 1-D convolution, `channels × embedding width`.
    pub conv1_w: Array2<f64>,
    pub conv1_b: Array1<f64>,
    /// Second 1-D convolution, `out × in × kernel`.
    pub conv2_w: Array3<f64>,
    pub conv2_b: Array1<f64>,
    pub dense_w: Array2<f64>,
    pub dense_b: Array1<f64>,
    pub out_w: Array1<f64>,
    pub out_b: Array1<f64>,
}

impl Params {
    pub fn zeros(spec: &ModelSpec) -> Self {
        let mut widths = vec![spec.input_width];
        widths.extend(&spec.conv_channels);
        let [c1, c2] = spec.conv1d_channels;
        Params {
            conv: widths
                .windows(2)
                .map(|w| Array2::zeros((w[0], w[1])))
                .collect(),
            conv1_w: Array2::zeros((c1, spec.embedding_width())),
            conv1_b: Array1::zeros(c1),
            conv2_w: Array3::zeros((c2, c1, spec.conv1d_kernel)),
            conv2_b: Array1::zeros(c2),
            dense_w: Array2::zeros((spec.dense_width, spec.dense_input())),
            dense_b: Array1::zeros(spec.dense_width),
            out_w: Array1::zeros(spec.dense_width),
            out_b: Array1::zeros(1),
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot(spec: &ModelSpec, seed: u64) -> Self {
        let mut p = Params::zeros(spec);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |xs: &mut [f64], fan_in: usize, fan_out: usize| {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for x in xs {
                *x = rng.random_range(-limit..limit);
            }
        };
        for w in &mut p.conv {
            let (i, o) = w.dim();
            fill(w.as_slice_mut().unwrap(), i, o);
        }
        let k = spec.conv1d_kernel;
        let [c1, c2] = spec.conv1d_channels;
        fill(
            p.conv1_w.as_slice_mut().unwrap(),
            spec.embedding_width(),
            c1,
        );
        fill(p.conv2_w.as_slice_mut().unwrap(), c1 * k, c2 * k);
        fill(
            p.dense_w.as_slice_mut().unwrap(),
            spec.dense_input(),
            spec.dense_width,
        );
        fill(p.out_w.as_slice_mut().unwrap(), spec.dense_width, 1);
        p
    }

    /// `(name, shape, values)` for every tensor in a fixed order.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out: Vec<(String, Vec<usize>, &[f64])> = Vec::new();
        for (l, w) in self.conv.iter().enumerate() {
            out.push((
                format!("conv{l}"),
                w.shape().to_vec(),
                w.as_slice().unwrap(),
            ));
        }
        out.push((
            "conv1d_1.w".into(),
            self.conv1_w.shape().to_vec(),
            self.conv1_w.as_slice().unwrap(),
        ));
        out.push((
            "conv1d_1.b".into(),
            self.conv1_b.shape().to_vec(),
            self.conv1_b.as_slice().unwrap(),
        ));
        out.push((
            "conv1d_2.w".into(),
            self.conv2_w.shape().to_vec(),
            self.conv2_w.as_slice().unwrap(),
        ));
        out.push((
            "conv1d_2.b".into(),
            self.conv2_b.shape().to_vec(),
            self.conv2_b.as_slice().unwrap(),
        ));
        out.push((
            "dense.w".into(),
            self.dense_w.shape().to_vec(),
            self.dense_w.as_slice().unwrap(),
        ));
        out.push((
            "dense.b".into(),
            self.dense_b.shape().to_vec(),
            self.dense_b.as_slice().unwrap(),
        ));
        out.push((
            "out.w".into(),
            self.out_w.shape().to_vec(),
            self.out_w.as_slice().unwrap(),
        ));
        out.push((
            "out.b".into(),
            self.out_b.shape().to_vec(),
            self.out_b.as_slice().unwrap(),
        ));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = self
            .conv
            .iter_mut()
            .map(|w| w.as_slice_mut().unwrap())
            .collect();
        out.push(self.conv1_w.as_slice_mut().unwrap());
        out.push(self.conv1_b.as_slice_mut().unwrap());
        out.push(self.conv2_w.as_slice_mut().unwrap());
        out.push(self.conv2_b.as_slice_mut().unwrap());
        out.push(self.dense_w.as_slice_mut().unwrap());
        out.push(self.dense_b.as_slice_mut().unwrap());
        out.push(self.out_w.as_slice_mut().unwrap());
        out.push(self.out_b.as_slice_mut().unwrap());
        out
    }

    pub(crate) fn add_assign(&mut self, other: &Params) {
        let theirs: Vec<Vec<f64>> = other
            .tensors()
            .into_iter()
            .map(|(_, _, v)| v.to_vec())
            .collect();
        for (mine, theirs) in self.tensors_mut().into_iter().zip(theirs) {
            for (a, b) in mine.iter_mut().zip(theirs) {
                *a += b;
            }
        }
    }

    pub(crate) fn scale(&mut self, s: f64) {
        for t in self.tensors_mut() {
            for x in t {
                *x *= s;
            }
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, _, v)| v.len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GnnModel {
    pub spec: ModelSpec,
    pub params: Params,
}

impl GnnModel {
    pub fn new(spec: ModelSpec, seed: u64) -> Self {
        let params = Params::glorot(&spec, seed);
        GnnModel { spec, params }
    }

    /// Link-existence probability of one subgraph.
    pub fn forward(&self, g: &EnclosingSubgraph) -> Result<f64, GnnError> {
        self.check_sample(g)?;
        Ok(net::sigmoid(net::forward(self, g).logit))
    }

    /// Probabilities for many subgraphs, in input order.
    pub fn predict_batch(&self, graphs: &[EnclosingSubgraph]) -> Result<Vec<f64>, GnnError> {
        graphs.par_iter().map(|g| self.forward(g)).collect()
    }

    pub(crate) fn check_sample(&self, g: &EnclosingSubgraph) -> Result<(), GnnError> {
        let width = EnclosingSubgraph::feature_width(self.spec.max_drnl);
        if width != self.spec.input_width {
            return Err(GnnError::Width {
                expected: self.spec.input_width,
                got: width,
            });
        }
        if g.features.len() != g.len() || g.drnl.len() != g.len() {
            return Err(GnnError::Width {
                expected: g.len(),
                got: g.features.len().min(g.drnl.len()),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_shapes() {
        let cfg = GnnConfig::default();
        let spec = ModelSpec::from_config(&cfg, 30).unwrap();
        assert_eq!(spec.input_width, 61);
        assert_eq!(spec.embedding_width(), 97);
        assert_eq!(spec.pooled_len(), 15);
        assert_eq!(spec.conv2_len(), 11);
        let p = Params::zeros(&spec);
        assert_eq!(p.conv[0].dim(), (61, 32));
        assert_eq!(p.conv[3].dim(), (32, 1));
        assert_eq!(p.dense_w.dim(), (128, 32 * 11));
    }

    #[test]
    fn config_checks() {
        let c = GnnConfig {
            conv_channels: vec![32, 2],
            ..GnnConfig::default()
        };
        assert!(c.validate().is_err());
        let c = GnnConfig::default();
        assert!(ModelSpec::from_config(&c, 8).is_err());
        assert_eq!(
            "auc".parse::<CheckpointMetric>().unwrap(),
            CheckpointMetric::Auc
        );
    }
}
