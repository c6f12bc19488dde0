use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{DatasetHandle, LabeledBlock};
use crate::error::{Error, Result};
use crate::seed::{self, TAG_SPLIT};

/// Evaluation protocol: same antenna (TTSA) or train on one, test on another (TOTA).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Ttsa,
    Tota,
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::Ttsa => "ttsa",
            Protocol::Tota => "tota",
        })
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ttsa" => Ok(Protocol::Ttsa),
            "tota" => Ok(Protocol::Tota),
            other => Err(Error::Argument(format!(
                "unknown protocol '{other}' (expected ttsa or tota)"
            ))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Split {
    pub train: DatasetHandle,
    /// Test-domain blocks available for building k-shot prototypes.
    pub support: DatasetHandle,
    pub query: DatasetHandle,
}

/// Per-beam random partition: returns `(rest, held)` with
/// `round(n * fraction)` blocks of every beam held out (at least one on
/// each side).
pub fn holdout(handle: &DatasetHandle, fraction: f64, seed: u64) -> Result<(DatasetHandle, DatasetHandle)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Argument(format!("split fraction {fraction} outside (0, 1)")));
    }
    let mut rest: Vec<LabeledBlock> = Vec::new();
    let mut held: Vec<LabeledBlock> = Vec::new();
    for beam in handle.beams() {
        let blocks = handle.beam_blocks(beam);
        let n = blocks.len();
        if n < 2 {
            return Err(Error::Argument(format!("beam {beam} has {n} block(s); cannot split")));
        }
        let n_held = ((n as f64 * fraction).round() as usize).clamp(1, n - 1);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut seed::rng_for(seed, &[TAG_SPLIT, beam as u64]));
        held.extend(order[..n_held].iter().map(|&i| blocks[i].clone()));
        rest.extend(order[n_held..].iter().map(|&i| blocks[i].clone()));
    }
    Ok((handle.with_blocks(rest), handle.with_blocks(held)))
}

/// First `n` blocks of each beam in canonical order.
pub fn subset_per_beam(handle: &DatasetHandle, n: usize) -> DatasetHandle {
    let blocks = handle
        .beams()
        .into_iter()
        .flat_map(|b| handle.beam_blocks(b).iter().take(n).cloned())
        .collect();
    handle.with_blocks(blocks)
}

/// Builds train / support / query sets.
///
/// TTSA: `train_domain` and `test_domain` must be the same handle; a
/// `query_fraction` of every beam becomes the query pool and the remainder is
/// both the training set and the support pool.
///
/// TOTA: the domains must not share a tag; the whole of `train_domain` is the
/// training set and `test_domain` is partitioned into support and query pools.
pub fn make_split(
    train_domain: &DatasetHandle,
    test_domain: &DatasetHandle,
    protocol: Protocol,
    query_fraction: f64,
    seed: u64,
) -> Result<Split> {
    let split_seed = seed::derive(seed, &[TAG_SPLIT]);
    match protocol {
        Protocol::Ttsa => {
            if train_domain.keys() != test_domain.keys() {
                return Err(Error::Argument(
                    "TTSA requires the same dataset for training and testing".into(),
                ));
            }
            let (train, query) = holdout(train_domain, query_fraction, split_seed)?;
            Ok(Split {
                support: train.clone(),
                train,
                query,
            })
        }
        Protocol::Tota => {
            let test_tags = test_domain.domains();
            if train_domain.domains().iter().any(|t| test_tags.contains(t)) {
                return Err(Error::Argument(
                    "TOTA requires train and test domains with different tags".into(),
                ));
            }
            let (support, query) = holdout(test_domain, query_fraction, split_seed)?;
            Ok(Split {
                train: train_domain.clone(),
                support,
                query,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::*;
    use crate::data::{synth_dataset, SyntheticDomainConfig};

    fn two_domains(per_beam: usize) -> (DatasetHandle, DatasetHandle) {
        let domains = vec![
            SyntheticDomainConfig::default(),
            SyntheticDomainConfig {
                name: "tx1".into(),
                iq_gain_imbalance_db: 1.0,
                ..Default::default()
            },
        ];
        let mut sets = synth_dataset(&domains, per_beam, 10.0, 9).unwrap();
        (sets.remove("tx0").unwrap(), sets.remove("tx1").unwrap())
    }

    #[test]
    fn ttsa_partition_arithmetic() {
        let (a, _) = two_domains(10);
        let s = make_split(&a, &a, Protocol::Ttsa, 0.2, 1).unwrap();
        for beam in 0..24u8 {
            assert_eq!(s.train.count(beam), 8);
            assert_eq!(s.query.count(beam), 2);
        }
        let train: HashSet<_> = s.train.keys().into_iter().collect();
        assert!(s.query.keys().iter().all(|k| !train.contains(k)));
    }

    #[test]
    fn ttsa_hundred_blocks_per_beam() {
        // Partition arithmetic only; reuse 100 clones of one block per beam.
        let (a, _) = two_domains(1);
        let mut blocks = Vec::new();
        for b in a.iter() {
            for i in 0..100u32 {
                let mut c = b.clone();
                c.index = i;
                blocks.push(c);
            }
        }
        let h = a.with_blocks(blocks);
        let s = make_split(&h, &h, Protocol::Ttsa, 0.2, 4).unwrap();
        assert!((0..24u8).all(|b| s.train.count(b) == 80 && s.query.count(b) == 20));
    }

    #[test]
    fn tota_keeps_test_domain_out_of_training() {
        let (a, b) = two_domains(6);
        let s = make_split(&a, &b, Protocol::Tota, 0.5, 2).unwrap();
        assert!(s.train.iter().all(|x| x.domain.antenna_id == "tx0"));
        assert!(s
            .support
            .iter()
            .chain(s.query.iter())
            .all(|x| x.domain.antenna_id == "tx1"));
        let sup: HashSet<_> = s.support.keys().into_iter().collect();
        assert!(s.query.keys().iter().all(|k| !sup.contains(k)));
        assert_eq!(s.train.len(), a.len());
    }

    #[test]
    fn split_is_deterministic() {
        let (a, b) = two_domains(6);
        let s1 = make_split(&a, &b, Protocol::Tota, 0.3, 77).unwrap();
        let s2 = make_split(&a, &b, Protocol::Tota, 0.3, 77).unwrap();
        assert_eq!(s1.query.keys(), s2.query.keys());
        assert_eq!(s1.support.keys(), s2.support.keys());
        let s3 = make_split(&a, &b, Protocol::Tota, 0.3, 78).unwrap();
        assert_ne!(s1.query.keys(), s3.query.keys());
    }

    #[test]
    fn protocol_domain_mismatch_is_rejected() {
        let (a, b) = two_domains(4);
        assert!(make_split(&a, &b, Protocol::Ttsa, 0.2, 0).is_err());
        assert!(make_split(&a, &a, Protocol::Tota, 0.2, 0).is_err());
        assert!(make_split(&a, &a, Protocol::Ttsa, 1.0, 0).is_err());
    }

    #[test]
    fn subset_takes_canonical_prefix() {
        let (a, _) = two_domains(5);
        let s = subset_per_beam(&a, 2);
        assert_eq!(s.len(), 48);
        assert!(s.iter().all(|b| b.index < 2));
    }
}
