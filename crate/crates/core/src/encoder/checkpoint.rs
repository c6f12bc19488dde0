//! Weight container: a safetensors archive holding every parameter and
//! running statistic by name, with the encoder config, init seed, input
//! scaling and caller-defined training state in the header metadata.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use safetensors::tensor::TensorView;
use safetensors::SafeTensors;

use super::{EncoderConfig, EncoderWeights, Real};
use crate::error::{Error, Result};
use crate::output::write_atomic;
use crate::preprocess::MinMaxStats;

pub const CHECKPOINT_FORMAT: &str = "beam-protonet-weights/1";

const EXTRA_PREFIX: &str = "extra/";
const RESERVED: [&str; 5] = ["format", "encoder_config", "init_seed", "minmax", "dtype"];

#[derive(Clone, Debug)]
pub struct Checkpoint<F: Real = f32> {
    pub weights: EncoderWeights<F>,
    /// Free-form string metadata, e.g. training progress.
    pub metadata: BTreeMap<String, String>,
    /// Additional flat tensors, e.g. optimizer moments.
    pub extra: BTreeMap<String, Vec<F>>,
}

impl<F: Real> Checkpoint<F> {
    pub fn new(weights: EncoderWeights<F>) -> Self {
        Checkpoint {
            weights,
            metadata: BTreeMap::new(),
            extra: BTreeMap::new(),
        }
    }
}

pub fn save_checkpoint<F: Real>(path: &Path, ckpt: &Checkpoint<F>) -> Result<()> {
    let w = &ckpt.weights;
    let mut meta: HashMap<String, String> = HashMap::new();
    for (k, v) in &ckpt.metadata {
        if RESERVED.contains(&k.as_str()) {
            return Err(Error::Argument(format!("checkpoint metadata key '{k}' is reserved")));
        }
        meta.insert(k.clone(), v.clone());
    }
    meta.insert("format".into(), CHECKPOINT_FORMAT.into());
    meta.insert(
        "encoder_config".into(),
        serde_json::to_string(w.config()).map_err(|e| Error::Format(e.to_string()))?,
    );
    meta.insert("init_seed".into(), w.init_seed().to_string());
    meta.insert(
        "minmax".into(),
        serde_json::to_string(&w.minmax()).map_err(|e| Error::Format(e.to_string()))?,
    );
    meta.insert("dtype".into(), F::NAME.into());

    let mut named: Vec<(String, Vec<usize>, Vec<u8>)> = Vec::new();
    for e in w.param_entries() {
        named.push((e.name.clone(), e.shape.clone(), F::to_le_bytes(&w.params()[e.range()])));
    }
    for e in w.buffer_entries() {
        named.push((e.name.clone(), e.shape.clone(), F::to_le_bytes(&w.buffers()[e.range()])));
    }
    for (k, v) in &ckpt.extra {
        named.push((format!("{EXTRA_PREFIX}{k}"), vec![v.len()], F::to_le_bytes(v)));
    }
    let views = named
        .iter()
        .map(|(n, s, b)| Ok((n.as_str(), TensorView::new(F::DTYPE, s.clone(), b)?)))
        .collect::<std::result::Result<Vec<_>, safetensors::SafeTensorError>>()
        .map_err(|e| Error::Format(e.to_string()))?;
    let bytes = safetensors::serialize(views, &Some(meta)).map_err(|e| Error::Format(e.to_string()))?;
    write_atomic(path, |f| f.write_all(&bytes))
}

pub fn load_checkpoint<F: Real>(path: &Path) -> Result<Checkpoint<F>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |msg: String| Error::Format(format!("{}: {msg}", path.display()));
    let (_, header) = SafeTensors::read_metadata(&bytes).map_err(|e| bad(e.to_string()))?;
    let st = SafeTensors::deserialize(&bytes).map_err(|e| bad(e.to_string()))?;
    let mut meta: BTreeMap<String, String> = header.metadata().clone().unwrap_or_default().into_iter().collect();
    let mut take = |k: &str| meta.remove(k).ok_or_else(|| bad(format!("missing metadata '{k}'")));
    let format = take("format")?;
    if format != CHECKPOINT_FORMAT {
        return Err(bad(format!("unsupported format '{format}'")));
    }
    let dtype = take("dtype")?;
    if dtype != F::NAME {
        return Err(bad(format!("stored as {dtype}, requested {}", F::NAME)));
    }
    let config: EncoderConfig = serde_json::from_str(&take("encoder_config")?).map_err(|e| bad(e.to_string()))?;
    let init_seed: u64 = take("init_seed")?.parse().map_err(|e| bad(format!("init_seed: {e}")))?;
    let minmax: Option<MinMaxStats> = serde_json::from_str(&take("minmax")?).map_err(|e| bad(e.to_string()))?;

    let shell = EncoderWeights::<F>::init(&config, init_seed)?;
    let read = |name: &str, shape: &[usize]| -> Result<Vec<F>> {
        let t = st.tensor(name).map_err(|_| bad(format!("missing tensor '{name}'")))?;
        if t.dtype() != F::DTYPE || t.shape() != shape {
            return Err(bad(format!(
                "tensor '{name}' has shape {:?}, expected {shape:?}",
                t.shape()
            )));
        }
        let v = F::from_le_bytes(t.data());
        if v.iter().any(|x| !x.is_finite()) {
            return Err(bad(format!("tensor '{name}' contains non-finite values")));
        }
        Ok(v)
    };
    let mut params = Vec::with_capacity(shell.param_count());
    for e in shell.param_entries() {
        params.extend(read(&e.name, &e.shape)?);
    }
    let mut buffers = Vec::new();
    for e in shell.buffer_entries() {
        buffers.extend(read(&e.name, &e.shape)?);
    }
    let mut extra = BTreeMap::new();
    for name in st.names() {
        if let Some(k) = name.strip_prefix(EXTRA_PREFIX) {
            let t = st.tensor(name).map_err(|e| bad(e.to_string()))?;
            extra.insert(k.to_string(), read(name, t.shape())?);
        }
    }
    let weights = EncoderWeights::from_parts(config, init_seed, params, buffers, minmax)?;
    Ok(Checkpoint {
        weights,
        metadata: meta,
        extra,
    })
}
