use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ablation::AblationPlan;
use crate::data::{
    default_domains, load_deepbeam_hdf5, synth_dataset, DatasetHandle, GainSelection, Hdf5Layout, Protocol,
    SyntheticDomainConfig,
};
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::eval::SplitConfig;
use crate::protonet::TrainConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSourceKind {
    Synthetic,
    Hdf5,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSourceKind,
    /// Synthetic: blocks generated per beam. HDF5: maximum loaded per beam.
    pub blocks_per_beam: usize,
    pub snr_db: f64,
    /// Directory of `<domain>.h5` files (HDF5 source, and `synth-data` output).
    pub dir: PathBuf,
    pub gain: GainSelection,
    pub layout: Hdf5Layout,
    pub train_domain: String,
    /// Domains to evaluate; empty means every domain.
    pub test_domains: Vec<String>,
    /// Domain definitions. For the HDF5 source only the names are used.
    pub domains: Vec<SyntheticDomainConfig>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            source: DataSourceKind::Synthetic,
            blocks_per_beam: 60,
            snr_db: 5.0,
            dir: PathBuf::from("data"),
            gain: GainSelection::All,
            layout: Hdf5Layout::default(),
            train_domain: "tx0".into(),
            test_domains: Vec::new(),
            domains: default_domains(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub protocol: Protocol,
    pub k: usize,
    pub tolerance: usize,
    /// Shot counts of `sweep`.
    pub ks: Vec<usize>,
    pub repeats: usize,
    pub pca_max_queries: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            protocol: Protocol::Tota,
            k: 16,
            tolerance: 1,
            ks: vec![1, 2, 4, 8, 16],
            repeats: 5,
            pca_max_queries: 2000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    pub ks: Vec<usize>,
    pub subset_blocks: usize,
}

impl Default for AblationConfig {
    fn default() -> Self {
        let plan = AblationPlan::default();
        AblationConfig {
            ks: plan.ks,
            subset_blocks: plan.subset_blocks,
        }
    }
}

/// Everything a command needs. Parsed strictly from TOML; each command
/// writes the resolved version next to its outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Root seed; overrides `train.seed`.
    pub seed: u64,
    pub out_dir: PathBuf,
    pub data: DataConfig,
    pub encoder: EncoderConfig,
    pub train: TrainConfig,
    pub split: SplitConfig,
    pub eval: EvalConfig,
    pub ablation: AblationConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out_dir: PathBuf::from("runs/default"),
            data: DataConfig::default(),
            encoder: EncoderConfig::default(),
            train: TrainConfig::default(),
            split: SplitConfig::default(),
            eval: EvalConfig::default(),
            ablation: AblationConfig::default(),
        }
    }
}

pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.toml";

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is serializable")
    }

    /// Applies command-line overrides and propagates the root seed.
    pub fn resolve(mut self, seed: Option<u64>, out: Option<&Path>) -> Result<Self> {
        if let Some(s) = seed {
            self.seed = s;
        }
        if let Some(o) = out {
            self.out_dir = o.to_path_buf();
        }
        self.train.seed = self.seed;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.encoder.validate().map_err(|e| Error::Config(e.to_string()))?;
        let names = self.domain_names();
        if names.is_empty() {
            return Err(Error::Config("data.domains is empty".into()));
        }
        if !names.contains(&self.data.train_domain) {
            return Err(Error::Config(format!(
                "train_domain '{}' is not among the configured domains",
                self.data.train_domain
            )));
        }
        if let Some(d) = self.data.test_domains.iter().find(|d| !names.contains(d)) {
            return Err(Error::Config(format!(
                "test domain '{d}' is not among the configured domains"
            )));
        }
        if self.data.blocks_per_beam == 0 {
            return Err(Error::Config("data.blocks_per_beam must be >= 1".into()));
        }
        if self.eval.k == 0 || self.eval.repeats == 0 || self.eval.ks.is_empty() || self.eval.ks.contains(&0) {
            return Err(Error::Config(
                "eval.k, eval.ks and eval.repeats must be positive".into(),
            ));
        }
        for f in [self.split.query_fraction, self.split.val_fraction] {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::Config(format!("split fraction {f} outside (0, 1)")));
            }
        }
        Ok(())
    }

    pub fn domain_names(&self) -> Vec<String> {
        self.data.domains.iter().map(|d| d.name.clone()).collect()
    }

    /// Names evaluated under `protocol`: the training domain only for TTSA.
    pub fn eval_domain_names(&self, protocol: Protocol) -> Vec<String> {
        match protocol {
            Protocol::Ttsa => vec![self.data.train_domain.clone()],
            Protocol::Tota if self.data.test_domains.is_empty() => self.domain_names(),
            Protocol::Tota => self.data.test_domains.clone(),
        }
    }

    pub fn hdf5_path(&self, domain: &str) -> PathBuf {
        self.data.dir.join(format!("{domain}.h5"))
    }

    pub fn ablation_plan(&self) -> AblationPlan {
        AblationPlan {
            base: self.train.clone(),
            encoder: self.encoder.clone(),
            split: self.split.clone(),
            ks: self.ablation.ks.clone(),
            subset_blocks: self.ablation.subset_blocks,
            ..Default::default()
        }
    }

    /// Generates or loads every configured domain.
    pub fn load_domains(&self) -> Result<BTreeMap<String, DatasetHandle>> {
        match self.data.source {
            DataSourceKind::Synthetic => synth_dataset(
                &self.data.domains,
                self.data.blocks_per_beam,
                self.data.snr_db,
                self.seed,
            ),
            DataSourceKind::Hdf5 => self
                .domain_names()
                .into_iter()
                .map(|name| {
                    let h = load_deepbeam_hdf5(
                        &self.hdf5_path(&name),
                        &name,
                        &self.data.gain,
                        self.data.blocks_per_beam,
                        &self.data.layout,
                    )?;
                    Ok((name, h))
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        assert_eq!(RunConfig::from_toml("").unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in ["bogus = 1", "[train]\nlearning_rat = 0.1", "[data]\nsnr = 3.0"] {
            let e = RunConfig::from_toml(text).unwrap_err();
            assert_eq!(e.exit_code(), 2, "{text}");
        }
    }

    #[test]
    fn resolve_propagates_seed_and_checks_domains() {
        let cfg = RunConfig::default().resolve(Some(9), Some(Path::new("o"))).unwrap();
        assert_eq!(cfg.train.seed, 9);
        assert_eq!(cfg.out_dir, PathBuf::from("o"));
        let bad = RunConfig {
            data: DataConfig {
                train_domain: "nope".into(),
                ..Default::default()
            },
            ..Default::default()
        };
        assert!(matches!(bad.resolve(None, None), Err(Error::Config(_))));
    }

    #[test]
    fn protocol_selects_domains() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.eval_domain_names(Protocol::Ttsa), vec!["tx0".to_string()]);
        assert_eq!(cfg.eval_domain_names(Protocol::Tota).len(), 4);
    }
}
