use std::collections::BTreeMap;

use crate::encoder::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::preprocess::{l2_normalized, normalize_prototypes};

const UNIT_TOL: f64 = 1e-6;

/// Class prototypes, sorted by beam label.
#[derive(Clone, Debug, PartialEq)]
pub struct PrototypeSet {
    labels: Vec<u8>,
    vectors: Vec<Vec<f64>>,
    normalized: bool,
}

impl PrototypeSet {
    pub fn from_parts(labels: Vec<u8>, vectors: Vec<Vec<f64>>, normalized: bool) -> Result<Self> {
        if labels.len() != vectors.len() {
            return Err(Error::Argument(format!(
                "{} labels for {} prototypes",
                labels.len(),
                vectors.len()
            )));
        }
        if labels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Argument("prototype labels must be strictly increasing".into()));
        }
        let dim = vectors.first().map_or(0, Vec::len);
        for (&beam, v) in labels.iter().zip(&vectors) {
            if v.len() != dim || dim == 0 {
                return Err(Error::Argument(format!(
                    "prototype for beam {beam} has length {}",
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::DegenerateData(format!(
                    "prototype for beam {beam} is not finite"
                )));
            }
            if normalized {
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if (n - 1.0).abs() > UNIT_TOL {
                    return Err(Error::Argument(format!("prototype for beam {beam} has norm {n}")));
                }
            }
        }
        Ok(PrototypeSet {
            labels,
            vectors,
            normalized,
        })
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }

    pub fn get(&self, beam: u8) -> Option<&[f64]> {
        self.labels
            .binary_search(&beam)
            .ok()
            .map(|i| self.vectors[i].as_slice())
    }
}

/// Mean support embedding per class, optionally unit-normalized.
pub fn compute_prototypes(embeddings: &BTreeMap<u8, EmbeddingMatrix>, normalize: bool) -> Result<PrototypeSet> {
    let mut labels = Vec::with_capacity(embeddings.len());
    let mut vectors = Vec::with_capacity(embeddings.len());
    for (&beam, m) in embeddings {
        if m.nrows() == 0 {
            return Err(Error::Argument(format!("no support embeddings for beam {beam}")));
        }
        let mut mean = vec![0.0; m.dim()];
        for row in m.rows() {
            for (a, x) in mean.iter_mut().zip(row) {
                *a += x;
            }
        }
        let n = m.nrows() as f64;
        mean.iter_mut().for_each(|a| *a /= n);
        labels.push(beam);
        vectors.push(mean);
    }
    let protos = PrototypeSet::from_parts(labels, vectors, false)?;
    if normalize {
        normalize_prototypes(&protos)
    } else {
        Ok(protos)
    }
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Classification {
    /// Posterior over `protos.labels()`, in that order.
    pub probs: Vec<f64>,
    pub distances: Vec<f64>,
    pub predicted: u8,
}

/// Softmax over negative squared distances to every prototype. The query is
/// unit-normalized when the prototypes are. Ties go to the smaller beam.
pub fn classify(embedding: &[f64], protos: &PrototypeSet) -> Result<Classification> {
    if protos.is_empty() {
        return Err(Error::Argument("empty prototype set".into()));
    }
    if embedding.len() != protos.dim() {
        return Err(Error::Argument(format!(
            "embedding length {} does not match prototype length {}",
            embedding.len(),
            protos.dim()
        )));
    }
    let normalized;
    let q = if protos.is_normalized() {
        normalized =
            l2_normalized(embedding).ok_or_else(|| Error::DegenerateData("zero-norm query embedding".into()))?;
        normalized.as_slice()
    } else {
        embedding
    };
    let distances: Vec<f64> = protos.vectors().iter().map(|p| squared_distance(q, p)).collect();
    let mut best = 0;
    for (i, &d) in distances.iter().enumerate() {
        if d < distances[best] {
            best = i;
        }
    }
    let m = distances[best];
    let w: Vec<f64> = distances.iter().map(|d| (m - d).exp()).collect();
    let z: f64 = w.iter().sum();
    Ok(Classification {
        probs: w.iter().map(|x| x / z).collect(),
        distances,
        predicted: protos.labels()[best],
    })
}
