//! Deployment-time evaluation: k-shot prototypes on a target domain,
//! exact and tolerance accuracy, confusion matrices, k-shot sweeps,
//! protocol runs and PCA diagnostics.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::data::{holdout, make_split, DatasetHandle, Protocol, NUM_BEAMS};
use crate::encoder::{EmbeddingMatrix, EncoderConfig, EncoderWeights};
use crate::error::{Error, Result};
use crate::preprocess::l2_normalized;
use crate::protonet::{classify, compute_prototypes, PrototypeSet, TrainConfig, Trainer, TrainingLog};
use crate::seed::{self, TAG_PCA, TAG_PROTOTYPES, TAG_VALIDATION};

/// Environment variable holding the number of worker threads used for
/// per-domain evaluation.
pub const WORKERS_ENV: &str = "BEAM_PROTONET_WORKERS";

/// Worker count from [`WORKERS_ENV`]; 1 when unset or invalid.
pub fn workers() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub domain: String,
    pub protocol: Protocol,
    pub k_shot: usize,
    pub tolerance: usize,
    pub exact_accuracy: f64,
    pub tolerance_accuracy: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<u64>>,
    /// NaN for beams without queries.
    pub per_class_accuracy: Vec<f64>,
    pub n_queries: usize,
}

impl EvalReport {
    pub fn class_counts(&self) -> Vec<u64> {
        self.confusion.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn trace(&self) -> u64 {
        (0..NUM_BEAMS).map(|i| self.confusion[i][i]).sum()
    }
}

/// Scores predicted labels against the truth. A prediction counts toward
/// tolerance accuracy when `|predicted − true| ≤ tolerance` (no wraparound).
pub fn score_predictions(
    domain: &str,
    protocol: Protocol,
    k_shot: usize,
    truth: &[u8],
    predicted: &[u8],
    tolerance: usize,
) -> Result<EvalReport> {
    if truth.is_empty() {
        return Err(Error::Argument("empty query pool".into()));
    }
    if truth.len() != predicted.len() {
        return Err(Error::Argument(format!(
            "{} labels for {} predictions",
            truth.len(),
            predicted.len()
        )));
    }
    let mut confusion = vec![vec![0u64; NUM_BEAMS]; NUM_BEAMS];
    let (mut exact, mut tol) = (0usize, 0usize);
    for (&t, &p) in truth.iter().zip(predicted) {
        if t as usize >= NUM_BEAMS || p as usize >= NUM_BEAMS {
            return Err(Error::Argument(format!("beam label out of range ({t}, {p})")));
        }
        confusion[t as usize][p as usize] += 1;
        exact += (t == p) as usize;
        tol += ((t as i32 - p as i32).unsigned_abs() as usize <= tolerance) as usize;
    }
    let per_class_accuracy = confusion
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let n: u64 = row.iter().sum();
            if n == 0 {
                f64::NAN
            } else {
                row[i] as f64 / n as f64
            }
        })
        .collect();
    let n = truth.len();
    Ok(EvalReport {
        domain: domain.to_string(),
        protocol,
        k_shot,
        tolerance,
        exact_accuracy: exact as f64 / n as f64,
        tolerance_accuracy: tol as f64 / n as f64,
        confusion,
        per_class_accuracy,
        n_queries: n,
    })
}

/// Fraction of misclassifications that land on an index-adjacent beam;
/// 1.0 when there are no errors.
pub fn confusion_neighbor_mass(report: &EvalReport) -> f64 {
    let total: u64 = report.confusion.iter().flatten().sum();
    let errors = total - report.trace();
    if errors == 0 {
        return 1.0;
    }
    let adjacent: u64 = (0..NUM_BEAMS)
        .flat_map(|i| {
            [i.checked_sub(1), (i + 1 < NUM_BEAMS).then_some(i + 1)]
                .into_iter()
                .flatten()
                .map(move |j| (i, j))
        })
        .map(|(i, j)| report.confusion[i][j])
        .sum();
    adjacent as f64 / errors as f64
}

/// Embeddings of every block of a pool, grouped by beam in canonical order.
#[derive(Clone, Debug)]
pub struct EncodedPool {
    pub by_beam: BTreeMap<u8, EmbeddingMatrix>,
}

impl EncodedPool {
    pub fn encode(weights: &EncoderWeights, pool: &DatasetHandle) -> Result<Self> {
        let by_beam = pool
            .beams()
            .into_iter()
            .map(|b| Ok((b, weights.encode_batch(pool.beam_blocks(b).iter().map(|x| &*x.block))?)))
            .collect::<Result<_>>()?;
        Ok(EncodedPool { by_beam })
    }

    /// All rows with their labels, in canonical order.
    pub fn labeled_rows(&self) -> (Vec<u8>, EmbeddingMatrix) {
        let dim = self.by_beam.values().next().map_or(1, |m| m.dim());
        let mut labels = Vec::new();
        let mut data = Vec::new();
        for (&b, m) in &self.by_beam {
            labels.extend(std::iter::repeat_n(b, m.nrows()));
            data.extend_from_slice(m.as_slice());
        }
        (labels, EmbeddingMatrix::new(dim, data).expect("rows share a width"))
    }
}

/// Indices of the `k` support blocks drawn for `beam`, ascending.
fn support_indices(pool_len: usize, k: usize, seed: u64, beam: u8) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::Argument("k must be at least 1".into()));
    }
    if pool_len < k {
        return Err(Error::Sampling {
            beam,
            needed: k,
            available: pool_len,
        });
    }
    let mut rng = seed::rng_for(seed, &[TAG_PROTOTYPES, beam as u64]);
    let mut idx = index::sample(&mut rng, pool_len, k).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

/// Samples `k` support blocks per beam (seeded, without replacement),
/// encodes them and averages per beam.
pub fn build_prototypes(
    weights: &EncoderWeights,
    support_pool: &DatasetHandle,
    k: usize,
    seed: u64,
    normalize: bool,
) -> Result<PrototypeSet> {
    let mut emb = BTreeMap::new();
    for beam in support_pool.beams() {
        let blocks = support_pool.beam_blocks(beam);
        let idx = support_indices(blocks.len(), k, seed, beam)?;
        emb.insert(beam, weights.encode_batch(idx.iter().map(|&i| &*blocks[i].block))?);
    }
    compute_prototypes(&emb, normalize)
}

/// [`build_prototypes`] on an already encoded pool; identical result.
pub fn prototypes_from_encoded(pool: &EncodedPool, k: usize, seed: u64, normalize: bool) -> Result<PrototypeSet> {
    let mut emb = BTreeMap::new();
    for (&beam, m) in &pool.by_beam {
        let idx = support_indices(m.nrows(), k, seed, beam)?;
        let rows: Vec<Vec<f64>> = idx.iter().map(|&i| m.row(i).to_vec()).collect();
        emb.insert(beam, EmbeddingMatrix::from_rows(m.dim(), &rows)?);
    }
    compute_prototypes(&emb, normalize)
}

/// Classifies pre-encoded queries against `protos`.
pub fn evaluate_encoded(
    protos: &PrototypeSet,
    queries: &EmbeddingMatrix,
    labels: &[u8],
    tolerance: usize,
    domain: &str,
    protocol: Protocol,
    k_shot: usize,
) -> Result<EvalReport> {
    if labels.len() != queries.nrows() {
        return Err(Error::Argument("query labels do not match embeddings".into()));
    }
    let predicted = queries
        .rows()
        .map(|q| classify(q, protos).map(|c| c.predicted))
        .collect::<Result<Vec<u8>>>()?;
    score_predictions(domain, protocol, k_shot, labels, &predicted, tolerance)
}

/// Encodes and classifies every block of `query_pool`. The report's
/// domain, protocol and k are placeholders for the caller to fill in.
pub fn evaluate(
    weights: &EncoderWeights,
    protos: &PrototypeSet,
    query_pool: &DatasetHandle,
    tolerance: usize,
) -> Result<EvalReport> {
    if query_pool.is_empty() {
        return Err(Error::Argument("empty query pool".into()));
    }
    let (labels, emb) = EncodedPool::encode(weights, query_pool)?.labeled_rows();
    evaluate_encoded(protos, &emb, &labels, tolerance, "", Protocol::Ttsa, 0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    pub repeats: usize,
    pub tolerance: usize,
    pub mean_exact: f64,
    pub std_exact: f64,
    pub mean_tolerance: f64,
    pub std_tolerance: f64,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.iter().all(|&x| x == v[0]) {
        return (v[0], 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// For each `k`, rebuilds prototypes `repeats` times with different
/// sub-seeds and reports mean and (population) standard deviation of the
/// exact and tolerance accuracies.
#[allow(clippy::too_many_arguments)]
pub fn kshot_sweep(
    weights: &EncoderWeights,
    support_pool: &DatasetHandle,
    query_pool: &DatasetHandle,
    ks: &[usize],
    repeats: usize,
    seed: u64,
    tolerance: usize,
    normalize: bool,
) -> Result<Vec<SweepRow>> {
    let support = EncodedPool::encode(weights, support_pool)?;
    let (labels, queries) = EncodedPool::encode(weights, query_pool)?.labeled_rows();
    sweep_encoded(&support, &queries, &labels, ks, repeats, seed, tolerance, normalize)
}

#[allow(clippy::too_many_arguments)]
pub fn sweep_encoded(
    support: &EncodedPool,
    queries: &EmbeddingMatrix,
    labels: &[u8],
    ks: &[usize],
    repeats: usize,
    seed: u64,
    tolerance: usize,
    normalize: bool,
) -> Result<Vec<SweepRow>> {
    if repeats == 0 || ks.is_empty() {
        return Err(Error::Argument("sweep needs at least one k and one repeat".into()));
    }
    ks.iter()
        .map(|&k| {
            let mut exact = Vec::with_capacity(repeats);
            let mut tol = Vec::with_capacity(repeats);
            for r in 0..repeats {
                let protos = prototypes_from_encoded(support, k, seed::derive(seed, &[r as u64]), normalize)?;
                let rep = evaluate_encoded(&protos, queries, labels, tolerance, "", Protocol::Ttsa, k)?;
                exact.push(rep.exact_accuracy);
                tol.push(rep.tolerance_accuracy);
            }
            let (mean_exact, std_exact) = mean_std(&exact);
            let (mean_tolerance, std_tolerance) = mean_std(&tol);
            Ok(SweepRow {
                k,
                repeats,
                tolerance,
                mean_exact,
                std_exact,
                mean_tolerance,
                std_tolerance,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    /// Fraction of each beam held out as queries.
    pub query_fraction: f64,
    /// Fraction of the training part held out for validation episodes.
    pub val_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            query_fraction: 0.2,
            val_fraction: 0.2,
        }
    }
}

/// Support and query pools of one evaluation domain.
#[derive(Clone, Debug)]
pub struct DomainSplit {
    pub protocol: Protocol,
    pub support: DatasetHandle,
    pub query: DatasetHandle,
}

/// Everything a protocol run needs, derived deterministically from the
/// domains and the seed.
#[derive(Clone, Debug)]
pub struct ProtocolSplits {
    pub train: DatasetHandle,
    pub val: DatasetHandle,
    pub domains: BTreeMap<String, DomainSplit>,
}

/// Splits the training domain into train / validation / TTSA query parts
/// and every other test domain into TOTA support / query pools. A test
/// domain identical to the training domain is evaluated as TTSA, with the
/// whole training part as its support pool.
pub fn protocol_splits(
    protocol: Protocol,
    train_domain: &DatasetHandle,
    test_domains: &[(String, DatasetHandle)],
    split: &SplitConfig,
    seed: u64,
) -> Result<ProtocolSplits> {
    if test_domains.is_empty() {
        return Err(Error::Argument("no test domains".into()));
    }
    let ttsa = make_split(train_domain, train_domain, Protocol::Ttsa, split.query_fraction, seed)?;
    let (train, val) = holdout(&ttsa.train, split.val_fraction, seed::derive(seed, &[TAG_VALIDATION]))?;
    let train_keys = train_domain.keys();
    let mut domains = BTreeMap::new();
    for (name, d) in test_domains {
        let same = d.keys() == train_keys;
        let ds = if same {
            DomainSplit {
                protocol: Protocol::Ttsa,
                support: ttsa.support.clone(),
                query: ttsa.query.clone(),
            }
        } else if protocol == Protocol::Ttsa {
            return Err(Error::Argument(format!(
                "TTSA evaluates on the training domain only; '{name}' differs"
            )));
        } else {
            let s = make_split(train_domain, d, Protocol::Tota, split.query_fraction, seed)?;
            DomainSplit {
                protocol: Protocol::Tota,
                support: s.support,
                query: s.query,
            }
        };
        if domains.insert(name.clone(), ds).is_some() {
            return Err(Error::Argument(format!("duplicate test domain '{name}'")));
        }
    }
    Ok(ProtocolSplits { train, val, domains })
}

/// Evaluates every domain of `splits` at `k` shots, using up to
/// [`workers`] threads; results are keyed by domain name.
pub fn evaluate_domains(
    weights: &EncoderWeights,
    splits: &ProtocolSplits,
    k: usize,
    tolerance: usize,
    normalize: bool,
    seed: u64,
) -> Result<BTreeMap<String, EvalReport>> {
    let jobs: Vec<(&String, &DomainSplit)> = splits.domains.iter().collect();
    let reports = parallel_map(&jobs, |&(name, ds)| {
        let d = evaluate_domain(weights, name, ds, k, tolerance, normalize, seed)?;
        Ok((name.clone(), d.report))
    })?;
    Ok(reports.into_iter().collect())
}

/// Evaluation of one domain together with the prototypes and query
/// embeddings it was computed from.
#[derive(Clone, Debug)]
pub struct DomainEvaluation {
    pub report: EvalReport,
    pub prototypes: PrototypeSet,
    pub query_labels: Vec<u8>,
    pub query_embeddings: EmbeddingMatrix,
}

pub fn evaluate_domain(
    weights: &EncoderWeights,
    name: &str,
    ds: &DomainSplit,
    k: usize,
    tolerance: usize,
    normalize: bool,
    seed: u64,
) -> Result<DomainEvaluation> {
    if ds.query.is_empty() {
        return Err(Error::Argument(format!("empty query pool for '{name}'")));
    }
    let prototypes = build_prototypes(weights, &ds.support, k, domain_seed(seed, name), normalize)?;
    let (query_labels, query_embeddings) = EncodedPool::encode(weights, &ds.query)?.labeled_rows();
    let report = evaluate_encoded(
        &prototypes,
        &query_embeddings,
        &query_labels,
        tolerance,
        name,
        ds.protocol,
        k,
    )?;
    Ok(DomainEvaluation {
        report,
        prototypes,
        query_labels,
        query_embeddings,
    })
}

/// Maps `f` over `items` on up to [`workers`] scoped threads. Results come
/// back in input order, so the outcome does not depend on the worker count.
pub fn parallel_map<T, R, F>(items: &[T], f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R> + Sync,
{
    let n_workers = workers().min(items.len()).max(1);
    if n_workers == 1 {
        return items.iter().map(f).collect();
    }
    let chunk = items.len().div_ceil(n_workers);
    let f = &f;
    std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|c| s.spawn(move || c.iter().map(f).collect::<Vec<_>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}

/// Prototype-sampling seed of one domain.
pub fn domain_seed(seed: u64, domain: &str) -> u64 {
    seed::derive(seed, &[TAG_PROTOTYPES, seed::hash_str(domain)])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct ProtocolConfig {
    pub train: TrainConfig,
    pub encoder: EncoderConfig,
    pub split: SplitConfig,
}


#[derive(Clone, Debug)]
pub struct ProtocolRun {
    pub weights: EncoderWeights,
    pub log: TrainingLog,
    pub splits: ProtocolSplits,
    pub reports: BTreeMap<String, EvalReport>,
}

impl ProtocolRun {
    /// Mean exact accuracy over the domains evaluated under `protocol`.
    pub fn mean_accuracy(&self, protocol: Protocol) -> Option<f64> {
        let v: Vec<f64> = self
            .reports
            .values()
            .filter(|r| r.protocol == protocol)
            .map(|r| r.exact_accuracy)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Trains once on the training part of `train_domain`, then builds k-shot
/// prototypes on every test domain and evaluates its query pool.
pub fn run_protocol(
    protocol: Protocol,
    train_domain: &DatasetHandle,
    test_domains: &[(String, DatasetHandle)],
    cfg: &ProtocolConfig,
    k: usize,
    tolerance: usize,
) -> Result<ProtocolRun> {
    let splits = protocol_splits(protocol, train_domain, test_domains, &cfg.split, cfg.train.seed)?;
    let mut trainer = Trainer::new(&cfg.encoder, &cfg.train, &splits.train)?;
    trainer.run(&splits.train, &splits.val)?;
    let (weights, log) = trainer.into_result();
    let reports = evaluate_domains(
        &weights,
        &splits,
        k,
        tolerance,
        cfg.train.prototype_normalization,
        cfg.train.seed,
    )?;
    Ok(ProtocolRun {
        weights,
        log,
        splits,
        reports,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PcaProjection {
    /// Two orthonormal principal directions.
    pub components: [Vec<f64>; 2],
    /// Variance along each component, non-increasing.
    pub explained_variance: [f64; 2],
    pub total_variance: f64,
    pub projected_prototypes: Vec<(u8, [f64; 2])>,
    pub projected_queries: Vec<([f64; 2], u8)>,
}

/// Top-2 principal components of the pooled prototypes and (at most
/// `max_queries`, seeded subsample) query embeddings. Each component's
/// largest-magnitude entry is positive.
pub fn pca_project(
    protos: &PrototypeSet,
    queries: &EmbeddingMatrix,
    labels: &[u8],
    max_queries: usize,
    seed: u64,
) -> Result<PcaProjection> {
    if labels.len() != queries.nrows() {
        return Err(Error::Argument("query labels do not match embeddings".into()));
    }
    let dim = protos.dim().max(queries.dim());
    if dim < 2 {
        return Err(Error::Argument("PCA needs at least two dimensions".into()));
    }
    if !protos.is_empty() && queries.nrows() > 0 && protos.dim() != queries.dim() {
        return Err(Error::Argument("prototype and query dimensions differ".into()));
    }
    let mut keep: Vec<usize> = (0..queries.nrows()).collect();
    if keep.len() > max_queries {
        let mut rng = seed::rng_for(seed, &[TAG_PCA]);
        keep = index::sample(&mut rng, queries.nrows(), max_queries).into_vec();
        keep.sort_unstable();
    }
    let q_rows: Vec<Vec<f64>> = keep
        .iter()
        .map(|&i| {
            let r = queries.row(i);
            if protos.is_normalized() {
                l2_normalized(r).unwrap_or_else(|| r.to_vec())
            } else {
                r.to_vec()
            }
        })
        .collect();
    let points: Vec<&[f64]> = protos
        .vectors()
        .iter()
        .map(Vec::as_slice)
        .chain(q_rows.iter().map(Vec::as_slice))
        .collect();
    let n = points.len();
    if n < 2 {
        return Err(Error::Argument(format!("PCA needs at least two points, got {n}")));
    }
    let mut mean = vec![0.0; dim];
    for p in &points {
        mean.iter_mut().zip(*p).for_each(|(m, x)| *m += x / n as f64);
    }
    let x = DMatrix::from_fn(n, dim, |i, j| points[i][j] - mean[j]);
    let cov = (x.transpose() * &x) / (n as f64 - 1.0);
    let total_variance = cov.trace();
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let component = |c: usize| -> Vec<f64> {
        let v: Vec<f64> = eig.eigenvectors.column(order[c]).iter().copied().collect();
        let big = v
            .iter()
            .copied()
            .fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let s = if big < 0.0 { -1.0 } else { 1.0 } / norm;
        v.iter().map(|x| x * s).collect()
    };
    let components = [component(0), component(1)];
    let project = |p: &[f64]| -> [f64; 2] {
        let d = |c: &[f64]| p.iter().zip(&mean).zip(c).map(|((x, m), w)| (x - m) * w).sum();
        [d(&components[0]), d(&components[1])]
    };
    let explained_variance = [eig.eigenvalues[order[0]].max(0.0), eig.eigenvalues[order[1]].max(0.0)];
    Ok(PcaProjection {
        projected_prototypes: protos
            .labels()
            .iter()
            .zip(protos.vectors())
            .map(|(&b, v)| (b, project(v)))
            .collect(),
        projected_queries: keep
            .iter()
            .zip(&q_rows)
            .map(|(&i, r)| (project(r), labels[i]))
            .collect(),
        components,
        explained_variance,
        total_variance,
    })
}
