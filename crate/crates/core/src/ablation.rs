//! Cumulative study of the three preprocessing options: data
//! normalization, augmentation and prototype normalization.

use serde::{Deserialize, Serialize};

use crate::data::{subset_per_beam, DatasetHandle, Protocol};
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::eval::{evaluate_domains, parallel_map, protocol_splits, SplitConfig};
use crate::protonet::{TrainConfig, Trainer};

/// One row of the study: the flags under test.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationVariant {
    pub name: String,
    pub data_normalization: bool,
    pub augment: bool,
    pub prototype_normalization: bool,
}

impl AblationVariant {
    fn new(name: &str, data_normalization: bool, augment: bool, prototype_normalization: bool) -> Self {
        AblationVariant {
            name: name.into(),
            data_normalization,
            augment,
            prototype_normalization,
        }
    }

    /// `base` with this variant's flags applied; nothing else changes.
    pub fn apply(&self, base: &TrainConfig) -> TrainConfig {
        let mut cfg = base.clone();
        cfg.data_normalization = self.data_normalization;
        cfg.augment.enabled = self.augment;
        cfg.prototype_normalization = self.prototype_normalization;
        cfg
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationPlan {
    pub variants: Vec<AblationVariant>,
    pub base: TrainConfig,
    pub encoder: EncoderConfig,
    pub split: SplitConfig,
    pub ks: Vec<usize>,
    /// Blocks per beam kept from every domain before splitting.
    pub subset_blocks: usize,
}

impl Default for AblationPlan {
    fn default() -> Self {
        AblationPlan {
            variants: AblationPlan::standard_variants(),
            base: TrainConfig::default(),
            encoder: EncoderConfig::default(),
            split: SplitConfig::default(),
            ks: vec![2, 32],
            subset_blocks: 500,
        }
    }
}

impl AblationPlan {
    /// The four cumulative rows, from raw inputs to the full stack.
    pub fn standard_variants() -> Vec<AblationVariant> {
        vec![
            AblationVariant::new("raw", false, false, false),
            AblationVariant::new("+data_norm", true, false, false),
            AblationVariant::new("+data_norm+augment", true, true, false),
            AblationVariant::new("+proto_norm+data_norm+augment", true, true, true),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if self.variants.is_empty() {
            return Err(Error::Config("ablation needs at least one variant".into()));
        }
        if self.ks.is_empty() || self.ks.contains(&0) {
            return Err(Error::Config("ablation ks must be non-empty and positive".into()));
        }
        if self.subset_blocks == 0 {
            return Err(Error::Config("subset_blocks must be >= 1".into()));
        }
        self.base.validate()?;
        self.encoder.validate().map_err(|e| Error::Config(e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: AblationVariant,
    /// Exact accuracy on the training domain, one entry per k.
    pub ttsa: Vec<f64>,
    /// Mean exact accuracy over the other domains, one entry per k; empty
    /// when there are none.
    pub tota: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub ks: Vec<usize>,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = ["config", "data_norm", "augment", "proto_norm"]
            .map(String::from)
            .into();
        for p in ["ttsa", "tota"] {
            h.extend(self.ks.iter().map(|k| format!("{p}_k{k}")));
        }
        h
    }

    pub fn records(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                let v = &r.variant;
                let mut rec = vec![
                    v.name.clone(),
                    v.data_normalization.to_string(),
                    v.augment.to_string(),
                    v.prototype_normalization.to_string(),
                ];
                for acc in [&r.ttsa, &r.tota] {
                    rec.extend((0..self.ks.len()).map(|i| acc.get(i).map_or("NaN".into(), |a| a.to_string())));
                }
                rec
            })
            .collect()
    }

    pub fn row(&self, name: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant.name == name)
    }
}

/// Trains one model per variant with identical seeds (so every variant
/// sees the same episodes) and evaluates TTSA on `train_domain` and TOTA on
/// every other test domain at each k.
pub fn run_ablation(
    plan: &AblationPlan,
    train_domain: &DatasetHandle,
    test_domains: &[(String, DatasetHandle)],
    seed: u64,
) -> Result<AblationTable> {
    plan.validate()?;
    let train_domain = subset_per_beam(train_domain, plan.subset_blocks);
    let mut tests: Vec<(String, DatasetHandle)> = test_domains
        .iter()
        .map(|(n, d)| (n.clone(), subset_per_beam(d, plan.subset_blocks)))
        .collect();
    // TTSA needs the training domain among the test domains.
    if !tests.iter().any(|(_, d)| d.keys() == train_domain.keys()) {
        tests.insert(0, ("train".into(), train_domain.clone()));
    }
    let splits = protocol_splits(Protocol::Tota, &train_domain, &tests, &plan.split, seed)?;

    let rows = parallel_map(&plan.variants, |variant| {
        let mut cfg = variant.apply(&plan.base);
        cfg.seed = seed;
        let mut trainer = Trainer::new(&plan.encoder, &cfg, &splits.train)?;
        trainer.run(&splits.train, &splits.val)?;
        let (weights, _) = trainer.into_result();
        let (mut ttsa, mut tota) = (Vec::new(), Vec::new());
        for &k in &plan.ks {
            let reports = evaluate_domains(&weights, &splits, k, 0, cfg.prototype_normalization, seed)?;
            let mean = |p: Protocol| {
                let v: Vec<f64> = reports
                    .values()
                    .filter(|r| r.protocol == p)
                    .map(|r| r.exact_accuracy)
                    .collect();
                (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
            };
            ttsa.extend(mean(Protocol::Ttsa));
            tota.extend(mean(Protocol::Tota));
        }
        Ok(AblationRow {
            variant: variant.clone(),
            ttsa,
            tota,
        })
    })?;
    Ok(AblationTable {
        ks: plan.ks.clone(),
        rows,
    })
}
