// SPDX-License-Identifier: Apache-2.0

//! Forward pass with a recorded trace and the matching backward pass.

use ndarray::{s, Array1, Array2, Axis};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{GnnError, GnnModel, Params};
use crate::graphprep::{EnclosingSubgraph, FEATURE_WIDTH};

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy of a logit against a label, and its derivative.
pub(crate) fn bce_with_logit(logit: f64, label: bool) -> (f64, f64) {
    let y = if label { 1.0 } else { 0.0 };
    let loss = logit.max(0.0) - logit * y + (-logit.abs()).exp().ln_1p();
    (loss, sigmoid(logit) - y)
}

fn inv_degrees(adj: &[Vec<u32>]) -> Vec<f64> {
    adj.iter().map(|ns| 1.0 / (ns.len() as f64 + 1.0)).collect()
}

/// `D̃⁻¹ Ã M` with `Ã = A + I`.
fn propagate(adj: &[Vec<u32>], inv_deg: &[f64], m: &Array2<f64>) -> Array2<f64> {
    let mut out = m.clone();
    for (i, ns) in adj.iter().enumerate() {
        let mut row = out.row_mut(i);
        for &j in ns {
            row += &m.row(j as usize);
        }
        row *= inv_deg[i];
    }
    out
}

/// `(D̃⁻¹ Ã)ᵀ G`.
fn propagate_t(adj: &[Vec<u32>], inv_deg: &[f64], g: &Array2<f64>) -> Array2<f64> {
    let mut scaled = g.clone();
    for (i, mut row) in scaled.axis_iter_mut(Axis(0)).enumerate() {
        row *= inv_deg[i];
    }
    let mut out = scaled.clone();
    for (i, ns) in adj.iter().enumerate() {
        let mut row = out.row_mut(i);
        for &j in ns {
            row += &scaled.row(j as usize);
        }
    }
    out
}

/// One graph convolution `tanh(D̃⁻¹ Ã Z W)` over neighbour lists.
pub fn graph_conv_forward(
    z: &Array2<f64>,
    adj: &[Vec<u32>],
    w: &Array2<f64>,
) -> Result<Array2<f64>, GnnError> {
    if z.ncols() != w.nrows() || z.nrows() != adj.len() {
        return Err(GnnError::Width {
            expected: w.nrows(),
            got: z.ncols(),
        });
    }
    let mut out = propagate(adj, &inv_degrees(adj), &z.dot(w));
    out.mapv_inplace(f64::tanh);
    Ok(out)
}

/// Row order used by sort pooling: descending by the last column, ties by
/// index.
fn sort_order(z: &Array2<f64>) -> Vec<usize> {
    let last = z.ncols() - 1;
    let mut order: Vec<usize> = (0..z.nrows()).collect();
    order.sort_by(|&a, &b| {
        z[[b, last]]
            .partial_cmp(&z[[a, last]])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    order
}

/// Sorts rows descending by the last column and keeps `c` of them, padding
/// with zero rows.
pub fn sort_pool(z: &Array2<f64>, c: usize) -> Array2<f64> {
    let mut out = Array2::zeros((c, z.ncols()));
    for (r, i) in sort_order(z).into_iter().take(c).enumerate() {
        out.row_mut(r).assign(&z.row(i));
    }
    out
}

pub(crate) fn active_features(g: &EnclosingSubgraph, max_drnl: usize) -> Vec<Vec<usize>> {
    g.features
        .iter()
        .zip(&g.drnl)
        .map(|(&mask, &label)| {
            let mut a: Vec<usize> = (0..FEATURE_WIDTH).filter(|b| mask >> b & 1 == 1).collect();
            let l = label as usize;
            a.push(FEATURE_WIDTH + if l > max_drnl { 0 } else { l });
            a
        })
        .collect()
}

pub(crate) struct Trace {
    adj: Vec<Vec<u32>>,
    inv_deg: Vec<f64>,
    active: Vec<Vec<usize>>,
    layers: Vec<Array2<f64>>,
    order: Vec<usize>,
    pooled_in: Array2<f64>,
    conv1: Array2<f64>,
    pool: Array2<f64>,
    pool_arg: Array2<usize>,
    conv2: Array2<f64>,
    dense: Array1<f64>,
    /// Per-unit dropout scale on the dense layer (0 or `1/(1-p)`).
    dropout: Option<Array1<f64>>,
    pub logit: f64,
}

pub(crate) fn forward(model: &GnnModel, g: &EnclosingSubgraph) -> Trace {
    forward_with_dropout(model, g, None)
}

pub(crate) fn forward_with_dropout(
    model: &GnnModel,
    g: &EnclosingSubgraph,
    dropout: Option<Array1<f64>>,
) -> Trace {
    let spec = &model.spec;
    let p = &model.params;
    let n = g.len();
    let adj = g.neighbor_lists();
    let inv_deg = inv_degrees(&adj);
    let active = active_features(g, spec.max_drnl);

    let mut layers: Vec<Array2<f64>> = Vec::with_capacity(p.conv.len());
    for (l, w) in p.conv.iter().enumerate() {
        let lin = if l == 0 {
            let mut m = Array2::zeros((n, w.ncols()));
            for (i, feats) in active.iter().enumerate() {
                let mut row = m.row_mut(i);
                for &f in feats {
                    row += &w.row(f);
                }
            }
            m
        } else {
            layers[l - 1].dot(w)
        };
        let mut z = propagate(&adj, &inv_deg, &lin);
        z.mapv_inplace(f64::tanh);
        layers.push(z);
    }

    let c = spec.sortpool_k;
    let mut order = sort_order(layers.last().unwrap());
    order.truncate(c);
    let mut pooled_in = Array2::zeros((c, spec.embedding_width()));
    for (r, &i) in order.iter().enumerate() {
        let mut col = 0;
        for h in &layers {
            let k = h.ncols();
            pooled_in.slice_mut(s![r, col..col + k]).assign(&h.row(i));
            col += k;
        }
    }

    // First 1-D convolution: kernel and stride equal the embedding width,
    // so each kept node is one position.
    let mut conv1 = p.conv1_w.dot(&pooled_in.t());
    for (ch, mut row) in conv1.axis_iter_mut(Axis(0)).enumerate() {
        row.mapv_inplace(|x| (x + p.conv1_b[ch]).max(0.0));
    }

    let [c1, c2] = spec.conv1d_channels;
    let plen = spec.pooled_len();
    let mut pool = Array2::zeros((c1, plen));
    let mut pool_arg = Array2::zeros((c1, plen));
    for ch in 0..c1 {
        for t in 0..plen {
            let (a, b) = (conv1[[ch, 2 * t]], conv1[[ch, 2 * t + 1]]);
            let (v, arg) = if a >= b { (a, 2 * t) } else { (b, 2 * t + 1) };
            pool[[ch, t]] = v;
            pool_arg[[ch, t]] = arg;
        }
    }

    let k = spec.conv1d_kernel;
    let l2 = spec.conv2_len();
    let mut conv2 = Array2::zeros((c2, l2));
    for o in 0..c2 {
        for t in 0..l2 {
            let mut acc = p.conv2_b[o];
            for ch in 0..c1 {
                for q in 0..k {
                    acc += p.conv2_w[[o, ch, q]] * pool[[ch, t + q]];
                }
            }
            conv2[[o, t]] = acc.max(0.0);
        }
    }

    let flat = conv2.view().into_shape_with_order(c2 * l2).unwrap();
    let mut dense = p.dense_w.dot(&flat) + &p.dense_b;
    dense.mapv_inplace(|x| x.max(0.0));
    let logit = match &dropout {
        Some(scale) => p.out_w.dot(&(&dense * scale)),
        None => p.out_w.dot(&dense),
    } + p.out_b[0];

    Trace {
        adj,
        inv_deg,
        active,
        layers,
        order,
        pooled_in,
        conv1,
        pool,
        pool_arg,
        conv2,
        dense,
        dropout,
        logit,
    }
}

/// Gradient of the loss with respect to every parameter, given
/// `dloss/dlogit`.
pub(crate) fn backward(model: &GnnModel, tr: &Trace, dlogit: f64) -> Params {
    let spec = &model.spec;
    let p = &model.params;
    let mut g = Params::zeros(spec);

    g.out_b[0] = dlogit;
    let mut d_dense = &p.out_w * dlogit;
    match &tr.dropout {
        Some(scale) => {
            g.out_w = &tr.dense * scale * dlogit;
            d_dense *= scale;
        }
        None => g.out_w = &tr.dense * dlogit,
    }
    d_dense.zip_mut_with(&tr.dense, |d, &a| {
        if a <= 0.0 {
            *d = 0.0
        }
    });

    let [c1, c2] = spec.conv1d_channels;
    let l2 = spec.conv2_len();
    let flat = tr.conv2.view().into_shape_with_order(c2 * l2).unwrap();
    for (o, &d) in d_dense.iter().enumerate() {
        if d != 0.0 {
            g.dense_w.row_mut(o).scaled_add(d, &flat);
        }
    }
    g.dense_b = d_dense.clone();
    let mut d_conv2 = p
        .dense_w
        .t()
        .dot(&d_dense)
        .into_shape_with_order((c2, l2))
        .unwrap();
    d_conv2.zip_mut_with(&tr.conv2, |d, &a| {
        if a <= 0.0 {
            *d = 0.0
        }
    });

    let k = spec.conv1d_kernel;
    let mut d_pool = Array2::<f64>::zeros((c1, spec.pooled_len()));
    for o in 0..c2 {
        for t in 0..l2 {
            let d = d_conv2[[o, t]];
            if d == 0.0 {
                continue;
            }
            g.conv2_b[o] += d;
            for ch in 0..c1 {
                for q in 0..k {
                    g.conv2_w[[o, ch, q]] += d * tr.pool[[ch, t + q]];
                    d_pool[[ch, t + q]] += d * p.conv2_w[[o, ch, q]];
                }
            }
        }
    }

    let mut d_conv1 = Array2::<f64>::zeros(tr.conv1.dim());
    for ((ch, t), &d) in d_pool.indexed_iter() {
        let arg = tr.pool_arg[[ch, t]];
        if tr.conv1[[ch, arg]] > 0.0 {
            d_conv1[[ch, arg]] += d;
        }
    }
    g.conv1_b = d_conv1.sum_axis(Axis(1));
    g.conv1_w = d_conv1.dot(&tr.pooled_in);
    let d_pooled = d_conv1.t().dot(&p.conv1_w);

    let n = tr.adj.len();
    let mut d_layers: Vec<Array2<f64>> = tr
        .layers
        .iter()
        .map(|h| Array2::zeros((n, h.ncols())))
        .collect();
    for (r, &i) in tr.order.iter().enumerate() {
        let mut col = 0;
        for d in &mut d_layers {
            let k = d.ncols();
            d.row_mut(i).assign(&d_pooled.slice(s![r, col..col + k]));
            col += k;
        }
    }
    for l in (0..tr.layers.len()).rev() {
        let mut dz = d_layers[l].clone();
        dz.zip_mut_with(&tr.layers[l], |d, &h| *d *= 1.0 - h * h);
        let d_lin = propagate_t(&tr.adj, &tr.inv_deg, &dz);
        if l == 0 {
            for (i, feats) in tr.active.iter().enumerate() {
                for &f in feats {
                    g.conv[0].row_mut(f).scaled_add(1.0, &d_lin.row(i));
                }
            }
        } else {
            g.conv[l] = tr.layers[l - 1].t().dot(&d_lin);
            let back = d_lin.dot(&p.conv[l].t());
            d_layers[l - 1] += &back;
        }
    }
    g
}

pub(crate) fn loss_and_grad(model: &GnnModel, g: &EnclosingSubgraph, label: bool) -> (f64, Params) {
    let tr = forward(model, g);
    let (loss, dlogit) = bce_with_logit(tr.logit, label);
    (loss, backward(model, &tr, dlogit))
}

/// Relative error of one tensor's analytic gradient against central
/// differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub tensor: String,
    pub checked: usize,
    pub relative_error: f64,
}

/// Compares analytic and central-difference gradients of the summed loss
/// over `samples`, on up to `max_entries` randomly chosen entries per tensor.
pub fn gradient_check(
    model: &GnnModel,
    samples: &[(EnclosingSubgraph, bool)],
    step: f64,
    max_entries: usize,
    seed: u64,
) -> Vec<GradCheck> {
    let total_loss = |m: &GnnModel| -> f64 {
        samples
            .iter()
            .map(|(g, y)| bce_with_logit(forward(m, g).logit, *y).0)
            .sum()
    };
    let mut analytic = Params::zeros(&model.spec);
    for (g, y) in samples {
        analytic.add_assign(&loss_and_grad(model, g, *y).1);
    }
    let analytic: Vec<(String, Vec<f64>)> = analytic
        .tensors()
        .into_iter()
        .map(|(n, _, v)| (n, v.to_vec()))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = model.clone();
    let mut out = Vec::new();
    for (t, (name, grad)) in analytic.iter().enumerate() {
        let len = grad.len();
        let entries = sample(&mut rng, len, len.min(max_entries)).into_vec();
        let (mut diff, mut a_norm, mut n_norm) = (0.0f64, 0.0f64, 0.0f64);
        for &e in &entries {
            let orig = probe.params.tensors_mut()[t][e];
            probe.params.tensors_mut()[t][e] = orig + step;
            let up = total_loss(&probe);
            probe.params.tensors_mut()[t][e] = orig - step;
            let down = total_loss(&probe);
            probe.params.tensors_mut()[t][e] = orig;
            let numeric = (up - down) / (2.0 * step);
            diff += (numeric - grad[e]).powi(2);
            a_norm += grad[e].powi(2);
            n_norm += numeric.powi(2);
        }
        let denom = a_norm.sqrt().max(n_norm.sqrt());
        let relative_error = if denom < 1e-12 {
            0.0
        } else {
            diff.sqrt() / denom
        };
        out.push(GradCheck {
            tensor: name.clone(),
            checked: entries.len(),
            relative_error,
        });
    }
    out
}
