//! Synthetic multi-domain beam captures.
//!
//! Each block is a QPSK burst shaped by a root-raised-cosine pulse, filtered
//! by a beam-specific complex FIR ("beam signature"), passed through the
//! domain's front-end impairments and finally buried in white noise at the
//! requested SNR. Beam signatures are global: the same beam looks the same in
//! every domain up to the impairments, which is what makes cross-domain
//! prototype transfer meaningful.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{check_beam, DataSource, DatasetHandle, DomainTag, IqBlock, LabeledBlock, BLOCK_LEN, NUM_BEAMS};
use crate::error::{Error, Result};
use crate::seed::{self, TAG_AWGN, TAG_BEAM_TAPS, TAG_DATASET, TAG_PHASE_NOISE, TAG_SYMBOLS};

const SAMPLES_PER_SYMBOL: usize = 4;
const NUM_SYMBOLS: usize = BLOCK_LEN / SAMPLES_PER_SYMBOL;
const RRC_ROLLOFF: f64 = 0.35;
const RRC_SPAN_SYMBOLS: usize = 8;
const BEAM_FIR_LEN: usize = 9;
/// Odd beams mix the two neighbouring anchors with this weight.
const NEIGHBOR_CROSSFADE: f64 = 0.5;

/// Front-end impairments of one synthetic domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticDomainConfig {
    pub name: String,
    /// Per-branch amplitude deviation: I is scaled by `+x` dB and Q by `-x` dB.
    pub iq_gain_imbalance_db: f64,
    pub iq_phase_imbalance_deg: f64,
    /// Carrier frequency offset in cycles per sample.
    pub cfo_normalized: f64,
    /// Standard deviation of the per-sample phase random-walk increment (rad).
    pub phase_noise_std: f64,
    pub gain_db: f64,
    pub seed_offset: i64,
}

impl Default for SyntheticDomainConfig {
    fn default() -> Self {
        SyntheticDomainConfig {
            name: "tx0".into(),
            iq_gain_imbalance_db: 0.0,
            iq_phase_imbalance_deg: 0.0,
            cfo_normalized: 0.0,
            phase_noise_std: 0.0,
            gain_db: 0.0,
            seed_offset: 0,
        }
    }
}

impl SyntheticDomainConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            self.iq_gain_imbalance_db,
            self.iq_phase_imbalance_deg,
            self.cfo_normalized,
            self.phase_noise_std,
            self.gain_db,
        ];
        if fields.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument(format!(
                "domain '{}' has non-finite impairments",
                self.name
            )));
        }
        if self.phase_noise_std < 0.0 {
            return Err(Error::Argument(format!("domain '{}': phase_noise_std < 0", self.name)));
        }
        if self.name.is_empty() {
            return Err(Error::Argument("synthetic domain needs a name".into()));
        }
        Ok(())
    }

    pub fn gain_setting(&self) -> String {
        format!("{}dB", self.gain_db)
    }
}

/// Four domains with progressively stronger impairments, standing in for
/// transmitters TX0..TX3.
pub fn default_domains() -> Vec<SyntheticDomainConfig> {
    let tx0 = SyntheticDomainConfig::default();
    let tx1 = SyntheticDomainConfig {
        name: "tx1".into(),
        iq_gain_imbalance_db: 1.0,
        iq_phase_imbalance_deg: 2.0,
        seed_offset: 1,
        ..tx0.clone()
    };
    let tx2 = SyntheticDomainConfig {
        name: "tx2".into(),
        cfo_normalized: 1e-4,
        seed_offset: 2,
        ..tx1.clone()
    };
    let tx3 = SyntheticDomainConfig {
        name: "tx3".into(),
        phase_noise_std: 0.01,
        seed_offset: 3,
        ..tx2.clone()
    };
    vec![tx0, tx1, tx2, tx3]
}

/// Unit-energy root-raised-cosine taps at `sps` samples per symbol.
pub fn rrc_pulse(rolloff: f64, span_symbols: usize, sps: usize) -> Vec<f64> {
    let n = span_symbols * sps + 1;
    let half = (n / 2) as f64;
    let b = rolloff;
    let mut taps: Vec<f64> = (0..n)
        .map(|i| {
            let t = (i as f64 - half) / sps as f64;
            if t == 0.0 {
                1.0 - b + 4.0 * b / PI
            } else if b > 0.0 && ((4.0 * b * t).abs() - 1.0).abs() < 1e-12 {
                b / 2f64.sqrt()
                    * ((1.0 + 2.0 / PI) * (PI / (4.0 * b)).sin() + (1.0 - 2.0 / PI) * (PI / (4.0 * b)).cos())
            } else {
                ((PI * t * (1.0 - b)).sin() + 4.0 * b * t * (PI * t * (1.0 + b)).cos())
                    / (PI * t * (1.0 - (4.0 * b * t).powi(2)))
            }
        })
        .collect();
    let energy: f64 = taps.iter().map(|v| v * v).sum();
    taps.iter_mut().for_each(|v| *v /= energy.sqrt());
    taps
}

fn base_taps(index: usize) -> [Complex64; BEAM_FIR_LEN] {
    let mut rng = seed::rng_for(TAG_BEAM_TAPS, &[index as u64]);
    let mut taps = [Complex64::new(0.0, 0.0); BEAM_FIR_LEN];
    for t in taps.iter_mut() {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        *t = Complex64::new(re, im);
    }
    taps
}

/// The complex FIR that distinguishes `beam`.
///
/// Even beams are anchors with their own random taps; every odd beam is a
/// crossfade of the anchors on either side. Any two adjacent beams therefore
/// share one anchor, and beams further apart share nothing or less.
pub fn beam_signature(beam: usize) -> Result<[Complex64; BEAM_FIR_LEN]> {
    check_beam(beam)?;
    let anchor = beam / 2;
    let mut taps = base_taps(anchor);
    if beam % 2 == 1 {
        let next = base_taps(anchor + 1);
        for (t, n) in taps.iter_mut().zip(next) {
            *t = *t * (1.0 - NEIGHBOR_CROSSFADE) + n * NEIGHBOR_CROSSFADE;
        }
    }
    let energy: f64 = taps.iter().map(|t| t.norm_sqr()).sum();
    taps.iter_mut().for_each(|t| *t /= energy.sqrt());
    Ok(taps)
}

/// "Same"-length convolution centred on the filter's middle tap.
fn convolve_same<T>(x: &[Complex64], h: &[T]) -> Vec<Complex64>
where
    T: Copy + Into<Complex64>,
{
    let delay = h.len() / 2;
    (0..x.len())
        .map(|n| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (k, &hk) in h.iter().enumerate() {
                let idx = n + delay;
                if idx >= k && idx - k < x.len() {
                    acc += x[idx - k] * hk.into();
                }
            }
            acc
        })
        .collect()
}

/// Generates one block for `beam` in `domain`. Pure function of its arguments.
pub fn synth_beam_block(beam: usize, domain: &SyntheticDomainConfig, snr_db: f64, seed: u64) -> Result<IqBlock> {
    check_beam(beam)?;
    domain.validate()?;
    if !snr_db.is_finite() {
        return Err(Error::Argument("snr must be finite".into()));
    }

    // (1) QPSK burst, zero-stuffed and RRC shaped to unit average power.
    let mut sym_rng = seed::rng_for(seed, &[TAG_SYMBOLS]);
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let mut stuffed = vec![Complex64::new(0.0, 0.0); BLOCK_LEN];
    for m in 0..NUM_SYMBOLS {
        let bits: u8 = sym_rng.gen_range(0..4);
        let re = if bits & 1 == 0 { scale } else { -scale };
        let im = if bits & 2 == 0 { scale } else { -scale };
        stuffed[m * SAMPLES_PER_SYMBOL] = Complex64::new(re, im) * (SAMPLES_PER_SYMBOL as f64).sqrt();
    }
    let pulse = rrc_pulse(RRC_ROLLOFF, RRC_SPAN_SYMBOLS, SAMPLES_PER_SYMBOL);
    let shaped = convolve_same(&stuffed, &pulse);

    // (2) Beam signature.
    let signature = beam_signature(beam)?;
    let mut z = convolve_same(&shaped, &signature);

    // (3) Front-end impairments: gain, IQ imbalance, CFO, phase noise.
    let gain = 10f64.powf(domain.gain_db / 20.0);
    let gi = 10f64.powf(domain.iq_gain_imbalance_db / 20.0);
    let gq = 10f64.powf(-domain.iq_gain_imbalance_db / 20.0);
    let phi = domain.iq_phase_imbalance_deg.to_radians();
    let (sin_phi, cos_phi) = phi.sin_cos();
    let mut pn_rng = seed::rng_for(seed, &[TAG_PHASE_NOISE]);
    let mut theta = 0.0f64;
    for (n, v) in z.iter_mut().enumerate() {
        let s = *v * gain;
        let i = gi * s.re;
        let q = gq * (s.im * cos_phi - s.re * sin_phi);
        if n > 0 && domain.phase_noise_std > 0.0 {
            let step: f64 = pn_rng.sample(StandardNormal);
            theta += domain.phase_noise_std * step;
        }
        let rot = 2.0 * PI * domain.cfo_normalized * n as f64 + theta;
        *v = Complex64::new(i, q) * Complex64::from_polar(1.0, rot);
    }

    // (4) AWGN relative to the impaired signal's power.
    let p_sig = z.iter().map(|v| v.norm_sqr()).sum::<f64>() / BLOCK_LEN as f64;
    let sigma = (p_sig / 10f64.powf(snr_db / 10.0) / 2.0).sqrt();
    let mut noise_rng = seed::rng_for(seed, &[TAG_AWGN]);
    for v in z.iter_mut() {
        let re: f64 = noise_rng.sample(StandardNormal);
        let im: f64 = noise_rng.sample(StandardNormal);
        *v += Complex64::new(re, im) * sigma;
    }

    // (5) Real/imag rows.
    IqBlock::from_complex(&z)
}

/// Seed of block `index` of `beam` in `domain`.
pub(crate) fn block_seed(root: u64, domain: &SyntheticDomainConfig, beam: usize, index: usize) -> u64 {
    seed::derive(
        root,
        &[
            TAG_DATASET,
            seed::hash_str(&domain.name),
            domain.seed_offset as u64,
            beam as u64,
            index as u64,
        ],
    )
}

/// One handle per domain, each holding `blocks_per_beam` blocks for all 24 beams.
pub fn synth_dataset(
    domains: &[SyntheticDomainConfig],
    blocks_per_beam: usize,
    snr_db: f64,
    seed: u64,
) -> Result<BTreeMap<String, DatasetHandle>> {
    if domains.is_empty() {
        return Err(Error::Argument("synth_dataset needs at least one domain".into()));
    }
    if blocks_per_beam == 0 {
        return Err(Error::Argument("blocks_per_beam must be >= 1".into()));
    }
    let mut out = BTreeMap::new();
    for domain in domains {
        domain.validate()?;
        let tag = Arc::new(DomainTag::new(domain.name.clone(), domain.gain_setting(), snr_db)?);
        let mut blocks = Vec::with_capacity(NUM_BEAMS * blocks_per_beam);
        for beam in 0..NUM_BEAMS {
            for index in 0..blocks_per_beam {
                let block = synth_beam_block(beam, domain, snr_db, block_seed(seed, domain, beam, index))?;
                blocks.push(LabeledBlock::new(block, beam as u8, tag.clone(), index as u32)?);
            }
        }
        if out
            .insert(domain.name.clone(), DatasetHandle::new(DataSource::Synthetic, blocks))
            .is_some()
        {
            return Err(Error::Argument(format!("duplicate domain name '{}'", domain.name)));
        }
    }
    Ok(out)
}
