//! The embedding network: a DenseNet-style 1-D convolutional encoder mapping
//! a `2 × T` I/Q signal to a fixed-length embedding.

mod checkpoint;
pub(crate) mod net;
pub(crate) mod ops;
mod real;

use serde::{Deserialize, Serialize};

use crate::data::{IqBlock, BLOCK_LEN};
use crate::error::{Error, Result};
use crate::preprocess::MinMaxStats;
use crate::seed::{self, TAG_INIT};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_FORMAT};
pub use net::{Mode, ParamEntry, Tape};
pub use real::Real;

pub(crate) use net::Network;

/// Blocks encoded per forward pass at inference time. Inference is
/// batch-independent, so this only bounds memory.
const INFERENCE_CHUNK: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub num_dense_blocks: usize,
    pub layers_per_block: usize,
    pub growth_rate: usize,
    pub stem_channels: usize,
    pub transition_compression: f64,
    pub embedding_dim: usize,
    /// Shrinks every width (1 block × 2 layers, growth 2, stem 4,
    /// embedding 4) so finite-difference checks are cheap.
    pub small_mode: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            num_dense_blocks: 3,
            layers_per_block: 5,
            growth_rate: 16,
            stem_channels: 32,
            transition_compression: 0.5,
            embedding_dim: 128,
            small_mode: false,
        }
    }
}

impl EncoderConfig {
    pub fn small() -> Self {
        EncoderConfig {
            small_mode: true,
            ..Default::default()
        }
    }

    /// The configuration actually built, with `small_mode` caps applied.
    pub fn effective(&self) -> EncoderConfig {
        if !self.small_mode {
            return self.clone();
        }
        EncoderConfig {
            num_dense_blocks: self.num_dense_blocks.min(1),
            layers_per_block: self.layers_per_block.min(2),
            growth_rate: self.growth_rate.min(2),
            stem_channels: self.stem_channels.min(4),
            embedding_dim: self.embedding_dim.min(4),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("num_dense_blocks", self.num_dense_blocks),
            ("layers_per_block", self.layers_per_block),
            ("growth_rate", self.growth_rate),
            ("stem_channels", self.stem_channels),
            ("embedding_dim", self.embedding_dim),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::Argument(format!("encoder {name} must be positive")));
            }
        }
        let c = self.transition_compression;
        if !(c > 0.0 && c <= 1.0) {
            return Err(Error::Argument(format!("transition_compression {c} outside (0, 1]")));
        }
        Ok(())
    }
}

/// Row-major `n × dim` matrix of embeddings.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::Argument(format!(
                "{} values do not form rows of length {dim}",
                data.len()
            )));
        }
        Ok(EmbeddingMatrix { dim, data })
    }

    pub fn from_rows(dim: usize, rows: &[Vec<f64>]) -> Result<Self> {
        if let Some(r) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::Argument(format!(
                "row of length {} in a {dim}-column matrix",
                r.len()
            )));
        }
        Self::new(dim, rows.concat())
    }

    pub fn nrows(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Encoder parameters, normalization running statistics and the input
/// scaling fitted on the training data.
#[derive(Clone, Debug)]
pub struct EncoderWeights<F: Real = f32> {
    config: EncoderConfig,
    init_seed: u64,
    net: Network,
    params: Vec<F>,
    buffers: Vec<F>,
    minmax: Option<MinMaxStats>,
}

/// Deterministically initialized `f32` weights.
pub fn encoder_init(config: &EncoderConfig, seed: u64) -> Result<EncoderWeights> {
    EncoderWeights::init(config, seed)
}

impl<F: Real> EncoderWeights<F> {
    pub fn init(config: &EncoderConfig, seed: u64) -> Result<Self> {
        let net = Network::new(config)?;
        let (params, buffers) = net.init(&mut seed::rng_for(seed, &[TAG_INIT]));
        Ok(EncoderWeights {
            config: config.clone(),
            init_seed: seed,
            net,
            params,
            buffers,
            minmax: None,
        })
    }

    pub(crate) fn from_parts(
        config: EncoderConfig,
        init_seed: u64,
        params: Vec<F>,
        buffers: Vec<F>,
        minmax: Option<MinMaxStats>,
    ) -> Result<Self> {
        let net = Network::new(&config)?;
        if params.len() != net.n_params || buffers.len() != net.n_buffers {
            return Err(Error::Format(format!(
                "weights have {} parameters and {} buffers, architecture expects {} and {}",
                params.len(),
                buffers.len(),
                net.n_params,
                net.n_buffers
            )));
        }
        Ok(EncoderWeights {
            config,
            init_seed,
            net,
            params,
            buffers,
            minmax,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn init_seed(&self) -> u64 {
        self.init_seed
    }

    pub fn embedding_dim(&self) -> usize {
        self.net.embedding_dim
    }

    pub fn minmax(&self) -> Option<&MinMaxStats> {
        self.minmax.as_ref()
    }

    /// Input scaling applied by [`encode`](Self::encode) before the network.
    pub fn set_minmax(&mut self, stats: Option<MinMaxStats>) {
        self.minmax = stats;
    }

    pub fn param_count(&self) -> usize {
        self.net.n_params
    }

    pub fn param_entries(&self) -> &[ParamEntry] {
        &self.net.params
    }

    pub fn buffer_entries(&self) -> &[ParamEntry] {
        &self.net.buffers
    }

    /// All trainable parameters as one flat vector, in
    /// [`param_entries`](Self::param_entries) order.
    pub fn params(&self) -> &[F] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [F] {
        &mut self.params
    }

    /// Normalization running statistics.
    pub fn buffers(&self) -> &[F] {
        &self.buffers
    }

    pub fn named_params(&self) -> impl Iterator<Item = (&ParamEntry, &[F])> {
        self.net.params.iter().map(|e| (e, &self.params[e.range()]))
    }

    pub fn param_norm(&self) -> f64 {
        self.params.iter().map(|v| v.f64().powi(2)).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().chain(&self.buffers).all(|v| v.is_finite())
    }

    /// Converts to another precision.
    pub fn cast<G: Real>(&self) -> EncoderWeights<G> {
        let conv = |v: &[F]| v.iter().map(|x| G::of(x.f64())).collect();
        EncoderWeights {
            config: self.config.clone(),
            init_seed: self.init_seed,
            net: self.net.clone(),
            params: conv(&self.params),
            buffers: conv(&self.buffers),
            minmax: self.minmax,
        }
    }

    /// Network input for one block: min-max scaled when statistics are set.
    pub fn prepare(&self, block: &IqBlock) -> Vec<F> {
        match &self.minmax {
            Some(st) => block.as_slice().iter().map(|&v| F::of(st.apply(v as f64))).collect(),
            None => block.as_slice().iter().map(|&v| F::of(v as f64)).collect(),
        }
    }

    /// Runs the network on `n` raw signals of shape `[2, t]` (no input
    /// scaling). Returns the `[n, embedding_dim]` output and the tape needed
    /// for [`backward`](Self::backward).
    pub fn forward(&self, x: &[F], n: usize, t: usize, mode: Mode) -> Result<(Vec<F>, Tape<F>)> {
        self.net.forward(&self.params, &self.buffers, x, n, t, mode)
    }

    /// Embeddings of `n` raw `[2, t]` signals in inference mode.
    pub fn forward_inference(&self, x: &[F], n: usize, t: usize) -> Result<Vec<F>> {
        Ok(self.forward(x, n, t, Mode::Inference)?.0)
    }

    /// Parameter gradient of `Σ d_emb · f(x)` for a training-mode tape.
    pub fn backward(&self, tape: &Tape<F>, d_emb: &[F]) -> Vec<F> {
        self.net.backward(&self.params, tape, d_emb)
    }

    /// Folds the batch statistics of a training-mode tape into the running
    /// statistics used at inference.
    pub fn commit_running_stats(&mut self, tape: &Tape<F>) {
        self.net.commit_running_stats(tape, &mut self.buffers);
    }

    /// Embedding of one block (inference mode).
    pub fn encode(&self, block: &IqBlock) -> Result<Vec<f64>> {
        let x = self.prepare(block);
        let out = self.forward_inference(&x, 1, BLOCK_LEN)?;
        finite_f64(out)
    }

    /// Embeddings of several blocks; row `i` belongs to `blocks[i]`.
    pub fn encode_batch<'a, I>(&self, blocks: I) -> Result<EmbeddingMatrix>
    where
        I: IntoIterator<Item = &'a IqBlock>,
    {
        let d = self.embedding_dim();
        let blocks: Vec<&IqBlock> = blocks.into_iter().collect();
        let mut data = Vec::with_capacity(blocks.len() * d);
        for chunk in blocks.chunks(INFERENCE_CHUNK) {
            let x: Vec<F> = chunk.iter().flat_map(|b| self.prepare(b)).collect();
            let out = self.forward_inference(&x, chunk.len(), BLOCK_LEN)?;
            data.extend(finite_f64(out)?);
        }
        EmbeddingMatrix::new(d, data)
    }
}

fn finite_f64<F: Real>(v: Vec<F>) -> Result<Vec<f64>> {
    let out: Vec<f64> = v.into_iter().map(|x| x.f64()).collect();
    if out.iter().any(|x| !x.is_finite()) {
        return Err(Error::DegenerateData("encoder produced a non-finite embedding".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_beam_block, SyntheticDomainConfig};

    /// Parameter count by walking the architecture independently of the
    /// layout builder.
    fn shape_walk(cfg: &EncoderConfig) -> usize {
        let bn = |c: usize| 2 * c;
        let mut n = 2 * cfg.stem_channels * 7 + bn(cfg.stem_channels);
        let mut c = cfg.stem_channels;
        for b in 0..cfg.num_dense_blocks {
            for _ in 0..cfg.layers_per_block {
                n += bn(c) + c * cfg.growth_rate * 3;
                c += cfg.growth_rate;
            }
            if b + 1 < cfg.num_dense_blocks {
                let c2 = ((c as f64) * cfg.transition_compression) as usize;
                n += bn(c) + c * c2;
                c = c2;
            }
        }
        n + bn(c) + c * cfg.embedding_dim + cfg.embedding_dim
    }

    fn block(beam: usize, seed: u64) -> IqBlock {
        synth_beam_block(beam, &SyntheticDomainConfig::default(), 10.0, seed).unwrap()
    }

    #[test]
    fn default_param_count_matches_shape_walk() {
        let cfg = EncoderConfig::default();
        let w = encoder_init(&cfg, 0).unwrap();
        assert_eq!(w.param_count(), shape_walk(&cfg));
        assert_eq!(w.embedding_dim(), 128);
        let shapes: usize = w.param_entries().iter().map(|e| e.len()).sum();
        assert_eq!(shapes, w.param_count());
    }

    #[test]
    fn small_mode_caps_widths() {
        let eff = EncoderConfig::small().effective();
        assert_eq!(
            (
                eff.num_dense_blocks,
                eff.layers_per_block,
                eff.growth_rate,
                eff.stem_channels,
                eff.embedding_dim
            ),
            (1, 2, 2, 4, 4)
        );
        let w = EncoderWeights::<f64>::init(&EncoderConfig::small(), 1).unwrap();
        assert_eq!(w.param_count(), shape_walk(&eff));
        let x: Vec<f64> = (0..128).map(|i| (i as f64 * 0.3).sin()).collect();
        assert_eq!(w.forward_inference(&x, 1, 64).unwrap().len(), 4);
    }

    #[test]
    fn init_is_deterministic() {
        let a = encoder_init(&EncoderConfig::default(), 5).unwrap();
        let b = encoder_init(&EncoderConfig::default(), 5).unwrap();
        let c = encoder_init(&EncoderConfig::default(), 6).unwrap();
        assert_eq!(a.params(), b.params());
        assert_ne!(a.params(), c.params());
    }

    #[test]
    fn invalid_config_is_rejected() {
        for cfg in [
            EncoderConfig {
                growth_rate: 0,
                ..Default::default()
            },
            EncoderConfig {
                transition_compression: 1.5,
                ..Default::default()
            },
        ] {
            assert!(matches!(encoder_init(&cfg, 0), Err(Error::Argument(_))));
        }
    }

    #[test]
    fn batch_matches_single_and_permutes() {
        let w = encoder_init(&EncoderConfig::default(), 3).unwrap();
        let blocks: Vec<IqBlock> = (0..3).map(|i| block(i * 7, i as u64)).collect();
        let m = w.encode_batch(&blocks).unwrap();
        assert_eq!((m.nrows(), m.dim()), (3, 128));
        for (i, b) in blocks.iter().enumerate() {
            let e = w.encode(b).unwrap();
            for (x, y) in e.iter().zip(m.row(i)) {
                assert!((x - y).abs() < 1e-5);
            }
        }
        let perm = [&blocks[2], &blocks[0], &blocks[1]];
        let p = w.encode_batch(perm).unwrap();
        for (i, &j) in [2, 0, 1].iter().enumerate() {
            for (x, y) in p.row(i).iter().zip(m.row(j)) {
                assert!((x - y).abs() < 1e-5);
            }
        }
        assert_eq!(w.encode_batch(std::iter::empty()).unwrap().nrows(), 0);
        assert_eq!(w.encode(&blocks[0]).unwrap(), w.encode(&blocks[0]).unwrap());
    }

    #[test]
    fn forward_rejects_bad_shapes() {
        let w = EncoderWeights::<f64>::init(&EncoderConfig::small(), 0).unwrap();
        assert!(w.forward_inference(&[0.0; 10], 1, 64).is_err());
        assert!(w.forward_inference(&[0.0; 4], 1, 2).is_err());
    }
}
