use rand::Rng;

use super::{Episode, TrainConfig};
use crate::data::BLOCK_LEN;
use crate::encoder::{EncoderWeights, Mode, Real, Tape};
use crate::error::{Error, Result};
use crate::preprocess::{minmax_normalize, AugmentConfig};

/// Loss, training accuracy and (optionally) embedding gradients of one
/// episode's prototype classifier.
#[derive(Clone, Debug)]
pub struct HeadOutput {
    pub loss: f64,
    /// Queries whose nearest prototype is their own class.
    pub correct: usize,
    /// `∂loss/∂support`, same layout as the support rows.
    pub d_support: Vec<f64>,
    /// `∂loss/∂query`, same layout as the query rows.
    pub d_query: Vec<f64>,
}

fn normalize_with_norm(v: &[f64]) -> Option<(Vec<f64>, f64)> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    (n > 0.0 && n.is_finite()).then(|| (v.iter().map(|x| x / n).collect(), n))
}

/// Backward of `v ↦ v / ‖v‖`.
fn normalize_backward(unit: &[f64], norm: f64, d_unit: &[f64]) -> Vec<f64> {
    let dot: f64 = unit.iter().zip(d_unit).map(|(u, g)| u * g).sum();
    unit.iter().zip(d_unit).map(|(u, g)| (g - u * dot) / norm).collect()
}

/// Prototype classifier on precomputed embeddings.
///
/// `support` holds `n_shot` rows per class and `query` holds `n_query` rows
/// per class, both class-major in the order of `classes`. The loss is the
/// mean over queries of `d(q, p_true) + log Σ_c exp(−d(q, p_c))` with `d` the
/// squared Euclidean distance; with `normalize`, prototypes and queries are
/// unit-normalized first. Gradients flow through the prototypes.
#[allow(clippy::too_many_arguments)]
pub fn prototype_head(
    classes: &[u8],
    support: &[f64],
    query: &[f64],
    n_shot: usize,
    n_query: usize,
    dim: usize,
    normalize: bool,
    with_grad: bool,
) -> Result<HeadOutput> {
    let n_way = classes.len();
    if n_way == 0 || n_shot == 0 || n_query == 0 || dim == 0 {
        return Err(Error::Argument("empty episode".into()));
    }
    if support.len() != n_way * n_shot * dim || query.len() != n_way * n_query * dim {
        return Err(Error::Argument(
            "episode embeddings do not match the episode shape".into(),
        ));
    }
    let mut protos = Vec::with_capacity(n_way);
    let mut proto_norms = Vec::with_capacity(n_way);
    for (c, &beam) in classes.iter().enumerate() {
        let mut p = vec![0.0; dim];
        for row in support[c * n_shot * dim..(c + 1) * n_shot * dim].chunks_exact(dim) {
            p.iter_mut().zip(row).for_each(|(a, x)| *a += x);
        }
        p.iter_mut().for_each(|a| *a /= n_shot as f64);
        if normalize {
            let (u, n) = normalize_with_norm(&p).ok_or(Error::DegeneratePrototype { beam })?;
            protos.push(u);
            proto_norms.push(n);
        } else {
            protos.push(p);
        }
    }

    let m = (n_way * n_query) as f64;
    let mut loss = 0.0;
    let mut correct = 0;
    let mut d_protos = vec![vec![0.0; dim]; if with_grad { n_way } else { 0 }];
    let mut d_query = vec![0.0; if with_grad { query.len() } else { 0 }];
    let mut dist = vec![0.0; n_way];
    for (i, raw) in query.chunks_exact(dim).enumerate() {
        let y = i / n_query;
        let (q, q_norm) = if normalize {
            normalize_with_norm(raw).ok_or_else(|| Error::DegenerateData("zero-norm query embedding".into()))?
        } else {
            (raw.to_vec(), 1.0)
        };
        for (c, p) in protos.iter().enumerate() {
            dist[c] = q.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum();
        }
        let d_min = dist.iter().copied().fold(f64::INFINITY, f64::min);
        let z: f64 = dist.iter().map(|d| (d_min - d).exp()).sum();
        loss += dist[y] - d_min + z.ln();
        if dist.iter().position(|&d| d == d_min) == Some(y) {
            correct += 1;
        }
        if !with_grad {
            continue;
        }
        let mut dq = vec![0.0; dim];
        for c in 0..n_way {
            let soft = (d_min - dist[c]).exp() / z;
            let g = ((c == y) as u8 as f64 - soft) / m;
            for k in 0..dim {
                let diff = 2.0 * g * (q[k] - protos[c][k]);
                dq[k] += diff;
                d_protos[c][k] -= diff;
            }
        }
        let dq = if normalize {
            normalize_backward(&q, q_norm, &dq)
        } else {
            dq
        };
        d_query[i * dim..(i + 1) * dim].copy_from_slice(&dq);
    }

    let mut d_support = vec![0.0; if with_grad { support.len() } else { 0 }];
    if with_grad {
        for c in 0..n_way {
            let dp = if normalize {
                normalize_backward(&protos[c], proto_norms[c], &d_protos[c])
            } else {
                d_protos[c].clone()
            };
            for j in 0..n_shot {
                let r = (c * n_shot + j) * dim;
                for k in 0..dim {
                    d_support[r + k] = dp[k] / n_shot as f64;
                }
            }
        }
    }
    Ok(HeadOutput {
        loss: loss / m,
        correct,
        d_support,
        d_query,
    })
}

/// Network input for an episode: support then query blocks, each min-max
/// scaled (when the weights carry statistics) and then augmented.
pub fn episode_input<F: Real>(
    weights: &EncoderWeights<F>,
    episode: &Episode,
    augment: &AugmentConfig,
    rng: &mut impl Rng,
) -> Vec<F> {
    let mut x = Vec::with_capacity((episode.blocks().count()) * 2 * BLOCK_LEN);
    for b in episode.blocks() {
        let scaled = match weights.minmax() {
            Some(st) => minmax_normalize(&b.block, st),
            None => (*b.block).clone(),
        };
        let aug = augment.apply(&scaled, rng);
        x.extend(aug.as_slice().iter().map(|&v| F::of(v as f64)));
    }
    x
}

/// Encodes an episode in training mode (batch statistics); running
/// statistics are not updated.
pub fn episode_embeddings<F: Real>(
    weights: &EncoderWeights<F>,
    episode: &Episode,
    augment: &AugmentConfig,
    rng: &mut impl Rng,
) -> Result<(Vec<F>, Tape<F>)> {
    let x = episode_input(weights, episode, augment, rng);
    let n = episode.blocks().count();
    weights.forward(&x, n, BLOCK_LEN, Mode::Train)
}

pub(crate) fn split_embeddings<F: Real>(emb: &[F], episode: &Episode, dim: usize) -> (Vec<f64>, Vec<f64>) {
    let n_support = episode.n_way() * episode.n_shot() * dim;
    let all: Vec<f64> = emb.iter().map(|v| v.f64()).collect();
    (all[..n_support].to_vec(), all[n_support..].to_vec())
}

/// Mean negative log-likelihood of the query labels, with the encoder in
/// training mode and augmentation drawn from `rng`.
pub fn episode_loss<F: Real>(
    episode: &Episode,
    weights: &EncoderWeights<F>,
    cfg: &TrainConfig,
    rng: &mut impl Rng,
) -> Result<f64> {
    let (emb, _) = episode_embeddings(weights, episode, &cfg.augment, rng)?;
    let dim = weights.embedding_dim();
    let (s, q) = split_embeddings(&emb, episode, dim);
    let out = prototype_head(
        &episode.classes,
        &s,
        &q,
        episode.n_shot(),
        episode.n_query(),
        dim,
        cfg.prototype_normalization,
        false,
    )?;
    Ok(out.loss)
}

/// Episode loss and its gradient with respect to every encoder parameter.
/// Running statistics are left untouched.
pub fn episode_loss_and_grad<F: Real>(
    episode: &Episode,
    weights: &EncoderWeights<F>,
    cfg: &TrainConfig,
    rng: &mut impl Rng,
) -> Result<(f64, Vec<F>)> {
    let (emb, tape) = episode_embeddings(weights, episode, &cfg.augment, rng)?;
    let dim = weights.embedding_dim();
    let (s, q) = split_embeddings(&emb, episode, dim);
    let out = prototype_head(
        &episode.classes,
        &s,
        &q,
        episode.n_shot(),
        episode.n_query(),
        dim,
        cfg.prototype_normalization,
        true,
    )?;
    let d_emb: Vec<F> = out.d_support.iter().chain(&out.d_query).map(|&v| F::of(v)).collect();
    Ok((out.loss, weights.backward(&tape, &d_emb)))
}
