use rand::seq::{index, SliceRandom};
use rand::Rng;

use super::TrainConfig;
use crate::data::{DatasetHandle, LabeledBlock};
use crate::error::{Error, Result};

/// One few-shot task: `classes.len()` beams with disjoint support and query
/// blocks. `support[i]` and `query[i]` belong to `classes[i]`.
#[derive(Clone, Debug)]
pub struct Episode {
    pub classes: Vec<u8>,
    pub support: Vec<Vec<LabeledBlock>>,
    pub query: Vec<Vec<LabeledBlock>>,
}

impl Episode {
    pub fn n_way(&self) -> usize {
        self.classes.len()
    }

    pub fn n_shot(&self) -> usize {
        self.support.first().map_or(0, Vec::len)
    }

    pub fn n_query(&self) -> usize {
        self.query.first().map_or(0, Vec::len)
    }

    /// Support blocks then query blocks, each class-major.
    pub fn blocks(&self) -> impl Iterator<Item = &LabeledBlock> {
        self.support.iter().flatten().chain(self.query.iter().flatten())
    }
}

pub fn sample_episode(data: &DatasetHandle, cfg: &TrainConfig, rng: &mut impl Rng) -> Result<Episode> {
    sample_episode_with(data, cfg.n_way, cfg.n_shot, cfg.n_query, rng)
}

/// Draws `n_way` beams without replacement, then for each beam `n_shot`
/// support blocks and `n_query` query blocks from the remainder.
pub fn sample_episode_with(
    data: &DatasetHandle,
    n_way: usize,
    n_shot: usize,
    n_query: usize,
    rng: &mut impl Rng,
) -> Result<Episode> {
    if n_way == 0 || n_shot == 0 || n_query == 0 {
        return Err(Error::Argument("episode sizes must be positive".into()));
    }
    let beams = data.beams();
    if beams.len() < n_way {
        return Err(Error::Argument(format!(
            "{n_way}-way episode from a dataset with {} beams",
            beams.len()
        )));
    }
    let classes: Vec<u8> = beams.choose_multiple(rng, n_way).copied().collect();
    let mut support = Vec::with_capacity(n_way);
    let mut query = Vec::with_capacity(n_way);
    for &beam in &classes {
        let pool = data.beam_blocks(beam);
        let needed = n_shot + n_query;
        if pool.len() < needed {
            return Err(Error::Sampling {
                beam,
                needed,
                available: pool.len(),
            });
        }
        let picks = index::sample(rng, pool.len(), needed);
        let mut it = picks.iter().map(|i| pool[i].clone());
        support.push(it.by_ref().take(n_shot).collect());
        query.push(it.collect());
    }
    Ok(Episode {
        classes,
        support,
        query,
    })
}
