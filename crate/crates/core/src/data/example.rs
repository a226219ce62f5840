use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fedcore::ClientId;

/// Sparse feature vector with a set of tags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseExample {
    indices: Vec<usize>,
    values: Vec<f64>,
    labels: Vec<usize>,
}

impl SparseExample {
    /// `indices` must be strictly increasing; `labels` are deduplicated and
    /// sorted.
    pub fn new(indices: Vec<usize>, values: Vec<f64>, mut labels: Vec<usize>) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} feature indices with {} values",
                indices.len(),
                values.len()
            )));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::BadConfig("feature indices must be strictly increasing".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::BadConfig("feature values must be finite".into()));
        }
        labels.sort_unstable();
        labels.dedup();
        Ok(SparseExample {
            indices,
            values,
            labels,
        })
    }

    /// Binary indicator vector over `indices`.
    pub fn indicator(indices: Vec<usize>, labels: Vec<usize>) -> Result<Self> {
        let values = vec![1.0; indices.len()];
        Self::new(indices, values, labels)
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    /// Drops every feature for which `keep` is false.
    pub fn restricted(&self, mut keep: impl FnMut(usize) -> bool) -> SparseExample {
        let (indices, values) = self.features().filter(|&(i, _)| keep(i)).unzip();
        SparseExample {
            indices,
            values,
            labels: self.labels.clone(),
        }
    }
}

/// Dense feature vector with a single class label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseExample {
    pub features: Vec<f64>,
    pub label: usize,
}

impl DenseExample {
    pub fn new(features: Vec<f64>, label: usize) -> Result<Self> {
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::BadConfig("features must be finite".into()));
        }
        Ok(DenseExample { features, label })
    }
}

/// Access to an example's target labels: the tag set of a sparse example or
/// the single class of a dense one.
pub trait Labelled {
    fn target_labels(&self) -> &[usize];
}

impl<T: Labelled + ?Sized> Labelled for &T {
    fn target_labels(&self) -> &[usize] {
        (**self).target_labels()
    }
}

impl Labelled for SparseExample {
    fn target_labels(&self) -> &[usize] {
        &self.labels
    }
}

impl Labelled for DenseExample {
    fn target_labels(&self) -> &[usize] {
        std::slice::from_ref(&self.label)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Valid,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientData<E> {
    pub id: ClientId,
    pub examples: Vec<E>,
}

/// Examples grouped by client.
#[derive(Debug, Clone, PartialEq)]
pub struct FederatedDataset<E> {
    pub clients: Vec<ClientData<E>>,
    /// Vocabulary size `n` (sparse) or feature dimension `d` (dense).
    pub input_dim: usize,
    /// Tag count `t` (sparse) or class count `c` (dense).
    pub label_dim: usize,
    pub split: Split,
}

impl<E> FederatedDataset<E> {
    pub fn num_clients(&self) -> usize {
        self.clients.len()
    }

    pub fn num_examples(&self) -> usize {
        self.clients.iter().map(|c| c.examples.len()).sum()
    }

    pub fn all_examples(&self) -> impl Iterator<Item = &E> {
        self.clients.iter().flat_map(|c| c.examples.iter())
    }

    pub fn client_ids(&self) -> Vec<ClientId> {
        self.clients.iter().map(|c| c.id).collect()
    }
}

impl FederatedDataset<SparseExample> {
    /// Checks every example against the declared dimensions.
    pub fn validate(&self) -> Result<()> {
        validate_clients(&self.clients)?;
        for ex in self.all_examples() {
            if ex.indices().last().is_some_and(|&i| i >= self.input_dim) {
                return Err(Error::BadConfig(format!(
                    "feature index beyond vocabulary size {}",
                    self.input_dim
                )));
            }
            if ex.labels().last().is_some_and(|&l| l >= self.label_dim) {
                return Err(Error::BadConfig(format!("tag beyond tag count {}", self.label_dim)));
            }
        }
        Ok(())
    }
}

impl FederatedDataset<DenseExample> {
    pub fn validate(&self) -> Result<()> {
        validate_clients(&self.clients)?;
        for ex in self.all_examples() {
            if ex.features.len() != self.input_dim {
                return Err(Error::BadConfig(format!(
                    "example has {} features, expected {}",
                    ex.features.len(),
                    self.input_dim
                )));
            }
            if ex.label >= self.label_dim {
                return Err(Error::BadConfig(format!(
                    "label {} beyond class count {}",
                    ex.label, self.label_dim
                )));
            }
        }
        Ok(())
    }
}

fn validate_clients<E>(clients: &[ClientData<E>]) -> Result<()> {
    if clients.is_empty() {
        return Err(Error::BadConfig("dataset has no clients".into()));
    }
    if let Some(c) = clients.iter().find(|c| c.examples.is_empty()) {
        return Err(Error::BadConfig(format!("{} has no examples", c.id)));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparse_example_invariants() {
        assert!(SparseExample::indicator(vec![0, 5], vec![3, 7]).is_ok());
        assert!(SparseExample::indicator(vec![5, 0], vec![1]).is_err());
        assert!(SparseExample::indicator(vec![2, 2], vec![1]).is_err());
        assert!(SparseExample::new(vec![1], vec![], vec![1]).is_err());
        let ex = SparseExample::indicator(vec![1], vec![4, 2, 4]).unwrap();
        assert_eq!(ex.labels(), &[2, 4]);
    }

    #[test]
    fn restriction_keeps_labels() {
        let ex = SparseExample::new(vec![1, 3, 8], vec![1.0, 2.0, 3.0], vec![0]).unwrap();
        let r = ex.restricted(|i| i != 3);
        assert_eq!(r.indices(), &[1, 8]);
        assert_eq!(r.values(), &[1.0, 3.0]);
        assert_eq!(r.labels(), &[0]);
    }
}
