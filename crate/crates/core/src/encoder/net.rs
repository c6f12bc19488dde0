//! DenseNet-style 1-D encoder: parameter layout, forward pass with a tape,
//! and reverse-mode gradients.
//!
//! ```text
//! stem:        conv k7/s2 (2 → S) · BN · ReLU · maxpool k3/s2
//! dense block: L × [BN · ReLU · conv k3/p1 (c → g)], outputs concatenated
//! transition:  BN · ReLU · conv k1 (c → ⌊θc⌋) · avgpool k2/s2
//! head:        BN · ReLU · global average pool · linear (c → D)
//! ```

use rand::Rng;
use rand_distr::StandardNormal;

use super::ops::{
    avgpool2_forward, bn_batch_cache, bn_commit, bn_relu_backward, bn_relu_sample, bn_running_cache, conv_backward,
    conv_forward, maxpool3_forward, maxpool3_len, BnCache, ConvGeom, Lay,
};
use super::real::{gemm, Real, View};
use super::EncoderConfig;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics in normalization layers; records a tape.
    Train,
    /// Running statistics; every sample is processed independently.
    Inference,
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum Init {
    KaimingNormal { fan_in: usize },
    Uniform { bound: f64 },
    Ones,
    Zeros,
}

/// A named array inside the flat parameter or buffer vector.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub(crate) init: Init,
}

impl ParamEntry {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Default)]
struct LayoutBuilder {
    params: Vec<ParamEntry>,
    buffers: Vec<ParamEntry>,
    n_params: usize,
    n_buffers: usize,
}

impl LayoutBuilder {
    fn param(&mut self, name: String, shape: Vec<usize>, init: Init) -> usize {
        let offset = self.n_params;
        let e = ParamEntry {
            name,
            shape,
            offset,
            init,
        };
        self.n_params += e.len();
        self.params.push(e);
        offset
    }

    fn buffer(&mut self, name: String, shape: Vec<usize>, init: Init) -> usize {
        let offset = self.n_buffers;
        let e = ParamEntry {
            name,
            shape,
            offset,
            init,
        };
        self.n_buffers += e.len();
        self.buffers.push(e);
        offset
    }

    fn bn(&mut self, prefix: &str, c: usize) -> BnSlot {
        BnSlot {
            channels: c,
            gamma: self.param(format!("{prefix}.gamma"), vec![c], Init::Ones),
            beta: self.param(format!("{prefix}.beta"), vec![c], Init::Zeros),
            mean: self.buffer(format!("{prefix}.running_mean"), vec![c], Init::Zeros),
            var: self.buffer(format!("{prefix}.running_var"), vec![c], Init::Ones),
        }
    }

    fn conv(&mut self, prefix: &str, geom: ConvGeom) -> ConvSlot {
        let weight = self.param(
            format!("{prefix}.weight"),
            vec![geom.c_out, geom.c_in, geom.k],
            Init::KaimingNormal {
                fan_in: geom.c_in * geom.k,
            },
        );
        ConvSlot { geom, weight }
    }
}

#[derive(Clone, Copy, Debug)]
struct BnSlot {
    channels: usize,
    gamma: usize,
    beta: usize,
    mean: usize,
    var: usize,
}

impl BnSlot {
    fn gamma<'a, F>(&self, p: &'a [F]) -> &'a [F] {
        &p[self.gamma..self.gamma + self.channels]
    }

    fn beta<'a, F>(&self, p: &'a [F]) -> &'a [F] {
        &p[self.beta..self.beta + self.channels]
    }

    fn cache<F: Real>(&self, mode: Mode, x: &[F], lay: Lay, buffers: &[F]) -> BnCache<F> {
        match mode {
            Mode::Train => bn_batch_cache(x, lay, self.channels),
            Mode::Inference => bn_running_cache(
                &buffers[self.mean..self.mean + self.channels],
                &buffers[self.var..self.var + self.channels],
            ),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn backward<F: Real>(
        &self,
        params: &[F],
        grads: &mut [F],
        x: &[F],
        lay: Lay,
        cache: &BnCache<F>,
        d_r: &[F],
        dx: &mut [F],
    ) {
        let c = self.channels;
        // gamma and beta are adjacent in the layout.
        debug_assert_eq!(self.beta, self.gamma + c);
        let (dg, db) = grads[self.gamma..self.gamma + 2 * c].split_at_mut(c);
        bn_relu_backward(x, lay, c, cache, self.gamma(params), self.beta(params), d_r, dg, db, dx);
    }
}

#[derive(Clone, Copy, Debug)]
struct ConvSlot {
    geom: ConvGeom,
    weight: usize,
}

impl ConvSlot {
    fn len(&self) -> usize {
        self.geom.c_out * self.geom.c_in * self.geom.k
    }

    fn w<'a, F>(&self, p: &'a [F]) -> &'a [F] {
        &p[self.weight..self.weight + self.len()]
    }
}

#[derive(Clone, Debug)]
struct DenseBlock {
    c_out: usize,
    layers: Vec<(BnSlot, ConvSlot)>,
}

#[derive(Clone, Debug)]
struct Transition {
    bn: BnSlot,
    conv: ConvSlot,
}

/// Resolved architecture and the layout of its parameters.
#[derive(Clone, Debug)]
pub(crate) struct Network {
    stem_conv: ConvSlot,
    stem_bn: BnSlot,
    blocks: Vec<DenseBlock>,
    transitions: Vec<Transition>,
    final_bn: BnSlot,
    head_w: usize,
    head_b: usize,
    pub c_final: usize,
    pub embedding_dim: usize,
    pub params: Vec<ParamEntry>,
    pub buffers: Vec<ParamEntry>,
    pub n_params: usize,
    pub n_buffers: usize,
}

/// State recorded by a forward pass, consumed by the backward pass.
pub struct Tape<F> {
    n: usize,
    t_in: usize,
    input: Vec<F>,
    stem_out: Vec<F>,
    t_stem: usize,
    stem_bn: BnCache<F>,
    pool_idx: Vec<u32>,
    block_bufs: Vec<Vec<F>>,
    block_t: Vec<usize>,
    layer_bn: Vec<Vec<BnCache<F>>>,
    trans_bn: Vec<BnCache<F>>,
    final_bn: BnCache<F>,
    pooled: Vec<F>,
}

impl Network {
    pub fn new(cfg: &EncoderConfig) -> Result<Self> {
        let cfg = cfg.effective();
        cfg.validate()?;
        let mut b = LayoutBuilder::default();
        let stem_geom = ConvGeom {
            c_in: 2,
            c_out: cfg.stem_channels,
            k: 7,
            stride: 2,
            pad: 3,
        };
        let stem_conv = b.conv("stem.conv", stem_geom);
        let stem_bn = b.bn("stem.bn", cfg.stem_channels);
        let mut blocks = Vec::new();
        let mut transitions = Vec::new();
        let mut c = cfg.stem_channels;
        for bi in 0..cfg.num_dense_blocks {
            let mut layers = Vec::new();
            for li in 0..cfg.layers_per_block {
                let prefix = format!("block{bi}.layer{li}");
                let bn = b.bn(&format!("{prefix}.bn"), c);
                let conv = b.conv(
                    &format!("{prefix}.conv"),
                    ConvGeom {
                        c_in: c,
                        c_out: cfg.growth_rate,
                        k: 3,
                        stride: 1,
                        pad: 1,
                    },
                );
                layers.push((bn, conv));
                c += cfg.growth_rate;
            }
            blocks.push(DenseBlock { c_out: c, layers });
            if bi + 1 < cfg.num_dense_blocks {
                let c_next = ((c as f64 * cfg.transition_compression).floor() as usize).max(1);
                let bn = b.bn(&format!("transition{bi}.bn"), c);
                let conv = b.conv(
                    &format!("transition{bi}.conv"),
                    ConvGeom {
                        c_in: c,
                        c_out: c_next,
                        k: 1,
                        stride: 1,
                        pad: 0,
                    },
                );
                transitions.push(Transition { bn, conv });
                c = c_next;
            }
        }
        let final_bn = b.bn("final.bn", c);
        let bound = 1.0 / (c as f64).sqrt();
        let head_w = b.param(
            "head.weight".into(),
            vec![cfg.embedding_dim, c],
            Init::Uniform { bound },
        );
        let head_b = b.param("head.bias".into(), vec![cfg.embedding_dim], Init::Uniform { bound });
        Ok(Network {
            stem_conv,
            stem_bn,
            blocks,
            transitions,
            final_bn,
            head_w,
            head_b,
            c_final: c,
            embedding_dim: cfg.embedding_dim,
            params: b.params,
            buffers: b.buffers,
            n_params: b.n_params,
            n_buffers: b.n_buffers,
        })
    }

    pub fn init<F: Real>(&self, rng: &mut impl Rng) -> (Vec<F>, Vec<F>) {
        let params = fill_entries(&self.params, self.n_params, rng);
        let buffers = fill_entries(&self.buffers, self.n_buffers, rng);
        (params, buffers)
    }

    /// Temporal length after each stage for an input of length `t`:
    /// `(stem conv, block 0, block 1, ...)`.
    fn lengths(&self, t: usize) -> Result<(usize, Vec<usize>)> {
        if t < 4 {
            return Err(Error::Argument(format!("input length {t} too short")));
        }
        let t_stem = self.stem_conv.geom.t_out(t);
        let mut tb = vec![maxpool3_len(t_stem)];
        for _ in &self.transitions {
            let next = tb.last().unwrap() / 2;
            if next == 0 {
                return Err(Error::Argument(format!(
                    "input length {t} too short for {} dense blocks",
                    self.blocks.len()
                )));
            }
            tb.push(next);
        }
        Ok((t_stem, tb))
    }

    /// Forward pass over `n` signals of shape `[2, t]` stored contiguously.
    /// Returns `[n, embedding_dim]` embeddings and the tape.
    pub fn forward<F: Real>(
        &self,
        params: &[F],
        buffers: &[F],
        x: &[F],
        n: usize,
        t: usize,
        mode: Mode,
    ) -> Result<(Vec<F>, Tape<F>)> {
        if x.len() != n * 2 * t {
            return Err(Error::Argument(format!(
                "encoder input has {} values, expected {n}x2x{t}",
                x.len()
            )));
        }
        let (t_stem, block_t) = self.lengths(t)?;

        // Stem convolution.
        let sg = self.stem_conv.geom;
        let mut stem_out = vec![F::zero(); n * sg.c_out * t_stem];
        let mut xp = Vec::new();
        for s in 0..n {
            pad_rows(&x[s * 2 * t..(s + 1) * 2 * t], 2, t, sg.pad, &mut xp);
            conv_forward(
                &sg,
                t,
                self.stem_conv.w(params),
                &xp,
                &mut stem_out,
                s * sg.c_out * t_stem,
                t_stem,
            );
        }
        let stem_lay = Lay::dense(n, sg.c_out, t_stem);
        let stem_bn = self.stem_bn.cache(mode, &stem_out, stem_lay, buffers);

        // BN · ReLU · maxpool into the first block's buffer.
        let mut block_bufs: Vec<Vec<F>> = Vec::with_capacity(self.blocks.len());
        let mut layer_bn = Vec::with_capacity(self.blocks.len());
        let mut trans_bn = Vec::with_capacity(self.transitions.len());
        let b0 = &self.blocks[0];
        let t0 = block_t[0];
        let mut buf = vec![F::zero(); n * b0.c_out * t0];
        let mut pool_idx = vec![0u32; n * sg.c_out * t0];
        let mut act = vec![F::zero(); sg.c_out * t_stem];
        for s in 0..n {
            bn_relu_sample(
                &stem_out,
                stem_lay,
                s,
                sg.c_out,
                &stem_bn,
                self.stem_bn.gamma(params),
                self.stem_bn.beta(params),
                &mut act,
                0,
                t_stem,
            );
            for ch in 0..sg.c_out {
                let dst = s * b0.c_out * t0 + ch * t0;
                let ix = (s * sg.c_out + ch) * t0;
                maxpool3_forward(
                    &act[ch * t_stem..(ch + 1) * t_stem],
                    &mut buf[dst..dst + t0],
                    &mut pool_idx[ix..ix + t0],
                );
            }
        }

        for (bi, block) in self.blocks.iter().enumerate() {
            let tb = block_t[bi];
            let lay = Lay::dense(n, block.c_out, tb);
            let mut caches = Vec::with_capacity(block.layers.len());
            for (bn, conv) in &block.layers {
                let g = conv.geom;
                let cache = bn.cache(mode, &buf, lay, buffers);
                let t_pad = g.t_pad(tb);
                let mut xp = vec![F::zero(); g.c_in * t_pad];
                for s in 0..n {
                    bn_relu_sample(
                        &buf,
                        lay,
                        s,
                        g.c_in,
                        &cache,
                        bn.gamma(params),
                        bn.beta(params),
                        &mut xp,
                        g.pad,
                        t_pad,
                    );
                    conv_forward(&g, tb, conv.w(params), &xp, &mut buf, lay.row(s, g.c_in), tb);
                }
                caches.push(cache);
            }
            layer_bn.push(caches);

            if let Some(tr) = self.transitions.get(bi) {
                let g = tr.conv.geom;
                let cache = tr.bn.cache(mode, &buf, lay, buffers);
                let next = &self.blocks[bi + 1];
                let tn = block_t[bi + 1];
                let mut next_buf = vec![F::zero(); n * next.c_out * tn];
                let mut xr = vec![F::zero(); g.c_in * tb];
                let mut y = vec![F::zero(); g.c_out * tb];
                for s in 0..n {
                    bn_relu_sample(
                        &buf,
                        lay,
                        s,
                        g.c_in,
                        &cache,
                        tr.bn.gamma(params),
                        tr.bn.beta(params),
                        &mut xr,
                        0,
                        tb,
                    );
                    conv_forward(&g, tb, tr.conv.w(params), &xr, &mut y, 0, tb);
                    for ch in 0..g.c_out {
                        let dst = s * next.c_out * tn + ch * tn;
                        avgpool2_forward(&y[ch * tb..(ch + 1) * tb], &mut next_buf[dst..dst + tn]);
                    }
                }
                trans_bn.push(cache);
                block_bufs.push(std::mem::replace(&mut buf, next_buf));
            }
        }

        // Head.
        let t_last = *block_t.last().unwrap();
        let c = self.c_final;
        let lay = Lay::dense(n, c, t_last);
        let final_bn = self.final_bn.cache(mode, &buf, lay, buffers);
        let mut pooled = vec![F::zero(); n * c];
        let mut act = vec![F::zero(); c * t_last];
        let inv_t = F::of(1.0 / t_last as f64);
        for s in 0..n {
            bn_relu_sample(
                &buf,
                lay,
                s,
                c,
                &final_bn,
                self.final_bn.gamma(params),
                self.final_bn.beta(params),
                &mut act,
                0,
                t_last,
            );
            for ch in 0..c {
                pooled[s * c + ch] = act[ch * t_last..(ch + 1) * t_last].iter().copied().sum::<F>() * inv_t;
            }
        }
        block_bufs.push(buf);

        let d = self.embedding_dim;
        let w = &params[self.head_w..self.head_w + d * c];
        let bias = &params[self.head_b..self.head_b + d];
        let mut emb = vec![F::zero(); n * d];
        for s in 0..n {
            let out = &mut emb[s * d..(s + 1) * d];
            out.copy_from_slice(bias);
            gemm(
                d,
                c,
                1,
                F::one(),
                w,
                View::new(0, c, 1),
                &pooled,
                View::new(s * c, 1, 1),
                F::one(),
                out,
                View::new(0, 1, 1),
            );
        }

        let tape = Tape {
            n,
            t_in: t,
            input: x.to_vec(),
            stem_out,
            t_stem,
            stem_bn,
            pool_idx,
            block_bufs,
            block_t,
            layer_bn,
            trans_bn,
            final_bn,
            pooled,
        };
        Ok((emb, tape))
    }

    /// Folds the batch statistics recorded in a training tape into the
    /// running buffers.
    pub fn commit_running_stats<F: Real>(&self, tape: &Tape<F>, buffers: &mut [F]) {
        let mut commit = |slot: &BnSlot, cache: &BnCache<F>| {
            let c = slot.channels;
            let (head, tail) = buffers.split_at_mut(slot.var);
            bn_commit(cache, &mut head[slot.mean..slot.mean + c], &mut tail[..c]);
        };
        commit(&self.stem_bn, &tape.stem_bn);
        for (block, caches) in self.blocks.iter().zip(&tape.layer_bn) {
            for ((bn, _), cache) in block.layers.iter().zip(caches) {
                commit(bn, cache);
            }
        }
        for (tr, cache) in self.transitions.iter().zip(&tape.trans_bn) {
            commit(&tr.bn, cache);
        }
        commit(&self.final_bn, &tape.final_bn);
    }

    /// Gradient of `Σ d_emb · emb` with respect to every parameter, for a
    /// tape recorded in training mode.
    pub fn backward<F: Real>(&self, params: &[F], tape: &Tape<F>, d_emb: &[F]) -> Vec<F> {
        let n = tape.n;
        let d = self.embedding_dim;
        let c = self.c_final;
        assert_eq!(d_emb.len(), n * d);
        let mut grads = vec![F::zero(); self.n_params];

        // Head: emb = W·pooled + b.
        let w = &params[self.head_w..self.head_w + d * c];
        let mut dpooled = vec![F::zero(); n * c];
        for s in 0..n {
            let de = &d_emb[s * d..(s + 1) * d];
            for (gb, &v) in grads[self.head_b..self.head_b + d].iter_mut().zip(de) {
                *gb += v;
            }
            gemm(
                d,
                1,
                c,
                F::one(),
                de,
                View::new(0, 1, 1),
                &tape.pooled,
                View::new(s * c, 1, 1),
                F::one(),
                &mut grads[self.head_w..self.head_w + d * c],
                View::new(0, c, 1),
            );
            gemm(
                c,
                d,
                1,
                F::one(),
                w,
                View::new(0, 1, c),
                de,
                View::new(0, 1, 1),
                F::zero(),
                &mut dpooled,
                View::new(s * c, 1, 1),
            );
        }

        // Final BN · ReLU · GAP.
        let nb = self.blocks.len();
        let t_last = tape.block_t[nb - 1];
        let lay = Lay::dense(n, c, t_last);
        let inv_t = F::of(1.0 / t_last as f64);
        let mut d_r = vec![F::zero(); n * c * t_last];
        for s in 0..n {
            for ch in 0..c {
                let v = dpooled[s * c + ch] * inv_t;
                d_r[(s * c + ch) * t_last..(s * c + ch + 1) * t_last].fill(v);
            }
        }
        let mut dbuf = vec![F::zero(); n * c * t_last];
        self.final_bn.backward(
            params,
            &mut grads,
            &tape.block_bufs[nb - 1],
            lay,
            &tape.final_bn,
            &d_r,
            &mut dbuf,
        );

        for bi in (0..nb).rev() {
            let block = &self.blocks[bi];
            let tb = tape.block_t[bi];
            let buf = &tape.block_bufs[bi];
            let lay = Lay::dense(n, block.c_out, tb);
            for (li, (bn, conv)) in block.layers.iter().enumerate().rev() {
                let g = conv.geom;
                let cache = &tape.layer_bn[bi][li];
                let t_pad = g.t_pad(tb);
                let mut xp = vec![F::zero(); g.c_in * t_pad];
                let mut dxp = vec![F::zero(); g.c_in * t_pad];
                let mut d_r = vec![F::zero(); n * g.c_in * tb];
                for s in 0..n {
                    bn_relu_sample(
                        buf,
                        lay,
                        s,
                        g.c_in,
                        cache,
                        bn.gamma(params),
                        bn.beta(params),
                        &mut xp,
                        g.pad,
                        t_pad,
                    );
                    dxp.fill(F::zero());
                    let w = conv.w(params);
                    let dw = &mut grads[conv.weight..conv.weight + conv.len()];
                    conv_backward(&g, tb, w, &xp, &dbuf, lay.row(s, g.c_in), tb, dw, Some(&mut dxp));
                    unpad_rows(
                        &dxp,
                        g.c_in,
                        tb,
                        g.pad,
                        &mut d_r[s * g.c_in * tb..(s + 1) * g.c_in * tb],
                    );
                }
                bn.backward(params, &mut grads, buf, lay, cache, &d_r, &mut dbuf);
            }

            if bi == 0 {
                break;
            }
            // Transition bi-1 feeds channels [0, c') of block bi.
            let tr = &self.transitions[bi - 1];
            let g = tr.conv.geom;
            let prev = &self.blocks[bi - 1];
            let tp = tape.block_t[bi - 1];
            let pbuf = &tape.block_bufs[bi - 1];
            let play = Lay::dense(n, prev.c_out, tp);
            let cache = &tape.trans_bn[bi - 1];
            let mut xr = vec![F::zero(); g.c_in * tp];
            let mut dxr = vec![F::zero(); g.c_in * tp];
            let mut dy = vec![F::zero(); g.c_out * tp];
            let mut d_r = vec![F::zero(); n * g.c_in * tp];
            let half = F::of(0.5);
            for s in 0..n {
                dy.fill(F::zero());
                for ch in 0..g.c_out {
                    let src = lay.row(s, ch);
                    for j in 0..tb {
                        let v = dbuf[src + j] * half;
                        dy[ch * tp + 2 * j] = v;
                        dy[ch * tp + 2 * j + 1] = v;
                    }
                }
                bn_relu_sample(
                    pbuf,
                    play,
                    s,
                    g.c_in,
                    cache,
                    tr.bn.gamma(params),
                    tr.bn.beta(params),
                    &mut xr,
                    0,
                    tp,
                );
                dxr.fill(F::zero());
                let dw = &mut grads[tr.conv.weight..tr.conv.weight + tr.conv.len()];
                conv_backward(&g, tp, tr.conv.w(params), &xr, &dy, 0, tp, dw, Some(&mut dxr));
                d_r[s * g.c_in * tp..(s + 1) * g.c_in * tp].copy_from_slice(&dxr);
            }
            let mut dprev = vec![F::zero(); n * prev.c_out * tp];
            tr.bn.backward(params, &mut grads, pbuf, play, cache, &d_r, &mut dprev);
            dbuf = dprev;
        }

        // Maxpool · ReLU · BN · stem conv.
        let sg = self.stem_conv.geom;
        let b0 = &self.blocks[0];
        let t0 = tape.block_t[0];
        let ts = tape.t_stem;
        let mut d_r = vec![F::zero(); n * sg.c_out * ts];
        for s in 0..n {
            for ch in 0..sg.c_out {
                let src = s * b0.c_out * t0 + ch * t0;
                let ix = (s * sg.c_out + ch) * t0;
                let dst = (s * sg.c_out + ch) * ts;
                for j in 0..t0 {
                    d_r[dst + tape.pool_idx[ix + j] as usize] += dbuf[src + j];
                }
            }
        }
        let stem_lay = Lay::dense(n, sg.c_out, ts);
        let mut d_stem = vec![F::zero(); n * sg.c_out * ts];
        self.stem_bn.backward(
            params,
            &mut grads,
            &tape.stem_out,
            stem_lay,
            &tape.stem_bn,
            &d_r,
            &mut d_stem,
        );
        let t = tape.t_in;
        let mut xp = Vec::new();
        for s in 0..n {
            pad_rows(&tape.input[s * 2 * t..(s + 1) * 2 * t], 2, t, sg.pad, &mut xp);
            let dw = &mut grads[self.stem_conv.weight..self.stem_conv.weight + self.stem_conv.len()];
            conv_backward(
                &sg,
                t,
                self.stem_conv.w(params),
                &xp,
                &d_stem,
                s * sg.c_out * ts,
                ts,
                dw,
                None,
            );
        }
        grads
    }
}

fn fill_entries<F: Real>(entries: &[ParamEntry], total: usize, rng: &mut impl Rng) -> Vec<F> {
    let mut v = vec![F::zero(); total];
    for e in entries {
        for x in &mut v[e.range()] {
            *x = F::of(match e.init {
                Init::KaimingNormal { fan_in } => {
                    let z: f64 = rng.sample(StandardNormal);
                    z * (2.0 / fan_in as f64).sqrt()
                }
                Init::Uniform { bound } => rng.gen_range(-bound..bound),
                Init::Ones => 1.0,
                Init::Zeros => 0.0,
            });
        }
    }
    v
}

fn pad_rows<F: Real>(x: &[F], c: usize, t: usize, pad: usize, out: &mut Vec<F>) {
    let tp = t + 2 * pad;
    out.clear();
    out.resize(c * tp, F::zero());
    for i in 0..c {
        out[i * tp + pad..i * tp + pad + t].copy_from_slice(&x[i * t..(i + 1) * t]);
    }
}

fn unpad_rows<F: Real>(xp: &[F], c: usize, t: usize, pad: usize, out: &mut [F]) {
    let tp = t + 2 * pad;
    for i in 0..c {
        out[i * t..(i + 1) * t].copy_from_slice(&xp[i * tp + pad..i * tp + pad + t]);
    }
}
