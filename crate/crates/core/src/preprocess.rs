//! Input scaling, I/Q augmentations and prototype normalization.

use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{DatasetHandle, IqBlock, BLOCK_LEN};
use crate::error::{Error, Result};
use crate::protonet::PrototypeSet;

/// Dataset-wide extrema over every real entry of the training blocks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinMaxStats {
    pub x_min: f64,
    pub x_max: f64,
}

impl MinMaxStats {
    pub fn new(x_min: f64, x_max: f64) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite()) {
            return Err(Error::Argument("min-max statistics must be finite".into()));
        }
        if x_min >= x_max {
            return Err(Error::DegenerateData(format!("x_min {x_min} >= x_max {x_max}")));
        }
        Ok(MinMaxStats { x_min, x_max })
    }

    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        2.0 * ((x - self.x_min) / (self.x_max - self.x_min)) - 1.0
    }
}

pub fn fit_minmax(train_set: &DatasetHandle) -> Result<MinMaxStats> {
    if train_set.is_empty() {
        return Err(Error::Argument("cannot fit min-max statistics on an empty set".into()));
    }
    let (lo, hi) = train_set
        .iter()
        .flat_map(|b| b.block.as_slice().iter())
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if lo == hi {
        return Err(Error::DegenerateData(format!("constant training data ({lo})")));
    }
    MinMaxStats::new(lo as f64, hi as f64)
}

/// Maps `x` to `2 (x - x_min) / (x_max - x_min) - 1`. Values outside the
/// training extrema are not clipped.
pub fn minmax_normalize(block: &IqBlock, stats: &MinMaxStats) -> IqBlock {
    block
        .map(|v| stats.apply(v as f64) as f32)
        .expect("affine map of finite data with finite stats is finite")
}

/// Multiplies every sample by `e^{jθ}`.
pub fn augment_phase_rotation(block: &IqBlock, theta: f64) -> IqBlock {
    let (s, c) = theta.sin_cos();
    let mut out = vec![0.0f32; 2 * BLOCK_LEN];
    for (t, (&i, &q)) in block.i().iter().zip(block.q()).enumerate() {
        let (i, q) = (i as f64, q as f64);
        out[t] = (i * c - q * s) as f32;
        out[BLOCK_LEN + t] = (i * s + q * c) as f32;
    }
    IqBlock::new(out).expect("rotation preserves finiteness")
}

pub fn augment_scale(block: &IqBlock, s: f64) -> Result<IqBlock> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::Argument(format!("scale factor must be positive, got {s}")));
    }
    block.map(|v| (v as f64 * s) as f32)
}

/// Random phase rotation and scaling applied to training blocks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    /// Half-open interval `[lo, hi)` for θ.
    pub phase_range_rad: (f64, f64),
    pub scale_range: (f64, f64),
    pub enabled: bool,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            phase_range_rad: (0.0, TAU),
            scale_range: (0.8, 1.2),
            enabled: true,
        }
    }
}

impl AugmentConfig {
    pub fn disabled() -> Self {
        AugmentConfig {
            enabled: false,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (plo, phi) = self.phase_range_rad;
        let (slo, shi) = self.scale_range;
        if !(plo.is_finite() && phi.is_finite() && plo <= phi) {
            return Err(Error::Config(format!("bad phase range {:?}", self.phase_range_rad)));
        }
        if !(slo > 0.0 && shi.is_finite() && slo <= shi) {
            return Err(Error::Config(format!(
                "scale range {:?} must be a strictly positive interval",
                self.scale_range
            )));
        }
        Ok(())
    }

    /// Draws `(θ, s)` independently.
    pub fn sample(&self, rng: &mut impl Rng) -> (f64, f64) {
        let theta = draw(rng, self.phase_range_rad);
        let scale = draw(rng, self.scale_range);
        (theta, scale)
    }

    /// Applies a freshly drawn rotation and scaling, or returns the block
    /// unchanged when disabled.
    pub fn apply(&self, block: &IqBlock, rng: &mut impl Rng) -> IqBlock {
        if !self.enabled {
            return block.clone();
        }
        let (theta, s) = self.sample(rng);
        let rotated = augment_phase_rotation(block, theta);
        augment_scale(&rotated, s).expect("validated scale range")
    }
}

fn draw(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

/// Scales `v` to unit L2 norm; `None` if its norm is zero.
pub fn l2_normalized(v: &[f64]) -> Option<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    (norm > 0.0 && norm.is_finite()).then(|| v.iter().map(|x| x / norm).collect())
}

/// Divides every prototype by its Euclidean norm.
pub fn normalize_prototypes(protos: &PrototypeSet) -> Result<PrototypeSet> {
    let vectors = protos
        .labels()
        .iter()
        .zip(protos.vectors())
        .map(|(&beam, v)| l2_normalized(v).ok_or(Error::DegeneratePrototype { beam }))
        .collect::<Result<Vec<_>>>()?;
    PrototypeSet::from_parts(protos.labels().to_vec(), vectors, true)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{FRAC_PI_2, PI};
    use std::sync::Arc;

    use proptest::prelude::*;
    use rand::Rng;

    use super::*;
    use crate::data::{DataSource, DomainTag, LabeledBlock};
    use crate::seed;

    fn block_from(f: impl FnMut(usize) -> f32) -> IqBlock {
        IqBlock::new((0..2 * BLOCK_LEN).map(f).collect()).unwrap()
    }

    fn random_block(seed_value: u64, amp: f32) -> IqBlock {
        let mut rng = seed::rng(seed_value);
        block_from(|_| rng.gen_range(-amp..amp))
    }

    fn handle(blocks: Vec<IqBlock>) -> DatasetHandle {
        let tag = Arc::new(DomainTag::new("t", "g", 0.0).unwrap());
        let lb = blocks
            .into_iter()
            .enumerate()
            .map(|(i, b)| LabeledBlock::new(b, 0, tag.clone(), i as u32).unwrap())
            .collect();
        DatasetHandle::new(DataSource::Synthetic, lb)
    }

    #[test]
    fn fit_single_block_extrema() {
        let b = block_from(|i| match i {
            17 => -3.0,
            4000 => 5.0,
            _ => 0.5,
        });
        let s = fit_minmax(&handle(vec![b])).unwrap();
        assert_eq!((s.x_min, s.x_max), (-3.0, 5.0));
    }

    #[test]
    fn fit_two_blocks_is_min_max_of_extrema() {
        let a = random_block(1, 2.0);
        let b = random_block(2, 3.0);
        let sa = fit_minmax(&handle(vec![a.clone()])).unwrap();
        let sb = fit_minmax(&handle(vec![b.clone()])).unwrap();
        let s = fit_minmax(&handle(vec![a, b])).unwrap();
        assert_eq!(s.x_min, sa.x_min.min(sb.x_min));
        assert_eq!(s.x_max, sa.x_max.max(sb.x_max));
    }

    #[test]
    fn fit_matches_brute_force_scan() {
        let blocks: Vec<IqBlock> = (0..10).map(|i| random_block(100 + i, 1.0 + i as f32)).collect();
        let mut lo = f64::MAX;
        let mut hi = f64::MIN;
        for b in &blocks {
            for row in 0..2 {
                for t in 0..BLOCK_LEN {
                    let v = b.as_slice()[row * BLOCK_LEN + t] as f64;
                    if v < lo {
                        lo = v;
                    }
                    if v > hi {
                        hi = v;
                    }
                }
            }
        }
        let s = fit_minmax(&handle(blocks)).unwrap();
        assert_eq!((s.x_min, s.x_max), (lo, hi));
    }

    #[test]
    fn fit_errors() {
        assert!(matches!(fit_minmax(&handle(vec![])), Err(Error::Argument(_))));
        assert!(matches!(
            fit_minmax(&handle(vec![block_from(|_| 1.5)])),
            Err(Error::DegenerateData(_))
        ));
    }

    #[test]
    fn normalize_endpoints_and_midpoint() {
        let s = MinMaxStats::new(-3.0, 5.0).unwrap();
        let b = block_from(|i| match i % 3 {
            0 => -3.0,
            1 => 5.0,
            _ => 1.0,
        });
        let n = minmax_normalize(&b, &s);
        for (i, &v) in n.as_slice().iter().enumerate() {
            let expected = [-1.0, 1.0, 0.0][i % 3];
            assert_eq!(v, expected);
        }
    }

    #[test]
    fn normalize_fixed_point_and_substitution() {
        let s = MinMaxStats::new(-1.0, 1.0).unwrap();
        let b = random_block(5, 1.0);
        assert_eq!(minmax_normalize(&b, &s).as_slice(), b.as_slice());

        let s = MinMaxStats::new(0.0, 4.0).unwrap();
        let n = minmax_normalize(&block_from(|_| 3.0), &s);
        assert!(n.as_slice().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn normalize_matches_scalar_loop_and_does_not_clip() {
        let s = MinMaxStats::new(-0.5, 0.25).unwrap();
        let b = random_block(9, 2.0);
        let n = minmax_normalize(&b, &s);
        let mut outside = 0;
        for (x, y) in b.as_slice().iter().zip(n.as_slice()) {
            let expected = 2.0 * ((*x as f64 + 0.5) / 0.75) - 1.0;
            assert_eq!(*y, expected as f32);
            if y.abs() > 1.0 {
                outside += 1;
            }
        }
        assert!(outside > 0);
    }

    #[test]
    fn degenerate_stats_rejected() {
        assert!(MinMaxStats::new(1.0, 1.0).is_err());
        assert!(MinMaxStats::new(2.0, 1.0).is_err());
    }

    #[test]
    fn rotation_special_angles() {
        let b = random_block(3, 1.0);
        assert_eq!(augment_phase_rotation(&b, 0.0).as_slice(), b.as_slice());
        let neg = augment_phase_rotation(&b, PI);
        for (x, y) in b.as_slice().iter().zip(neg.as_slice()) {
            assert!((x + y).abs() < 1e-6);
        }
        let unit = block_from(|i| if i < BLOCK_LEN { 1.0 } else { 0.0 });
        let r = augment_phase_rotation(&unit, FRAC_PI_2);
        assert!(r.i().iter().all(|v| v.abs() < 1e-7));
        assert!(r.q().iter().all(|v| (v - 1.0).abs() < 1e-7));
    }

    #[test]
    fn scale_cases() {
        let b = random_block(4, 1.0);
        assert_eq!(augment_scale(&b, 1.0).unwrap().as_slice(), b.as_slice());
        let q = augment_scale(&block_from(|_| 0.25), 2.0).unwrap();
        assert!(q.as_slice().iter().all(|&v| v == 0.5));
        assert!(augment_scale(&b, 0.0).is_err());
        assert!(augment_scale(&b, -1.0).is_err());
        let twice = augment_scale(&augment_scale(&b, 1.5).unwrap(), 0.5).unwrap();
        let once = augment_scale(&b, 0.75).unwrap();
        for (x, y) in twice.as_slice().iter().zip(once.as_slice()) {
            assert!((x - y).abs() <= 1e-6 * x.abs().max(1.0));
        }
    }

    #[test]
    fn prototype_normalization_cases() {
        let mut v = vec![0.0; 128];
        v[0] = 3.0;
        v[1] = 4.0;
        let p = PrototypeSet::from_parts(vec![2], vec![v], false).unwrap();
        let n = normalize_prototypes(&p).unwrap();
        assert!(n.is_normalized());
        assert!((n.vectors()[0][0] - 0.6).abs() < 1e-12);
        assert!((n.vectors()[0][1] - 0.8).abs() < 1e-12);
        let again = normalize_prototypes(&n).unwrap();
        for (a, b) in again.vectors()[0].iter().zip(&n.vectors()[0]) {
            assert!((a - b).abs() < 1e-6);
        }
        let zero = PrototypeSet::from_parts(vec![5], vec![vec![0.0; 4]], false).unwrap();
        assert!(matches!(
            normalize_prototypes(&zero),
            Err(Error::DegeneratePrototype { beam: 5 })
        ));
    }

    #[test]
    fn random_prototype_has_unit_norm() {
        let mut rng = seed::rng(8);
        let v: Vec<f64> = (0..128).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let p = PrototypeSet::from_parts(vec![0], vec![v], false).unwrap();
        let n = normalize_prototypes(&p).unwrap();
        let norm: f64 = n.vectors()[0].iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-6);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn normalization_is_strictly_increasing(lo in -10.0f64..0.0, width in 0.1f64..20.0, x in -30.0f64..30.0, dx in 1e-3f64..5.0) {
            let s = MinMaxStats::new(lo, lo + width).unwrap();
            prop_assert!(s.apply(x) < s.apply(x + dx));
        }

        #[test]
        fn rotation_preserves_magnitude_and_composes(seed_value in 0u64..1000, t1 in -7.0f64..7.0, t2 in -7.0f64..7.0) {
            let b = random_block(seed_value, 2.0);
            let r = augment_phase_rotation(&b, t1);
            for t in 0..BLOCK_LEN {
                let m0 = (b.i()[t] as f64).hypot(b.q()[t] as f64);
                let m1 = (r.i()[t] as f64).hypot(r.q()[t] as f64);
                prop_assert!((m0 - m1).abs() < 1e-6);
            }
            let composed = augment_phase_rotation(&r, t2);
            let direct = augment_phase_rotation(&b, t1 + t2);
            for (x, y) in composed.as_slice().iter().zip(direct.as_slice()) {
                prop_assert!((x - y).abs() < 1e-6);
            }
        }

        #[test]
        fn prototype_normalization_keeps_direction(v in proptest::collection::vec(-5.0f64..5.0, 16)) {
            prop_assume!(v.iter().any(|x| x.abs() > 1e-3));
            let p = PrototypeSet::from_parts(vec![0], vec![v.clone()], false).unwrap();
            let n = normalize_prototypes(&p).unwrap();
            let u = &n.vectors()[0];
            let norm_v = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let cos = v.iter().zip(u).map(|(a, b)| a * b).sum::<f64>() / norm_v;
            prop_assert!((cos - 1.0).abs() < 1e-6);
            let nn = normalize_prototypes(&n).unwrap();
            for (a, b) in nn.vectors()[0].iter().zip(u) {
                prop_assert!((a - b).abs() < 1e-6);
            }
        }
    }
}
