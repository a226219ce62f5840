use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Integer select key in `[0, K)`.
pub type SelectKey = usize;

/// Index of a client, stable within a round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ClientId(pub usize);

impl std::fmt::Display for ClientId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "client {}", self.0)
    }
}

/// Ordered select keys of one client. Duplicates are allowed and order is
/// significant.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KeySeq(Vec<SelectKey>);

impl KeySeq {
    pub fn new(keys: Vec<SelectKey>) -> Self {
        KeySeq(keys)
    }

    pub fn as_slice(&self) -> &[SelectKey] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<SelectKey> {
        self.0
    }
}

impl From<Vec<SelectKey>> for KeySeq {
    fn from(v: Vec<SelectKey>) -> Self {
        KeySeq(v)
    }
}

impl Deref for KeySeq {
    type Target = [SelectKey];

    fn deref(&self) -> &[SelectKey] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    Server,
    Clients,
}

/// A value placed at the server (`x@S`).
#[derive(Debug, Clone, PartialEq)]
pub struct AtServer<T>(pub T);

impl<T> AtServer<T> {
    pub fn into_inner(self) -> T {
        self.0
    }

    pub fn get(&self) -> &T {
        &self.0
    }
}

/// One value per cohort member (`{x_1, ..., x_N}@C`), in cohort order.
#[derive(Debug, Clone, PartialEq)]
pub struct AtClients<T> {
    cohort: Vec<ClientId>,
    values: Vec<T>,
}

impl<T> AtClients<T> {
    /// Fails if lengths differ or a client id repeats.
    pub fn new(cohort: Vec<ClientId>, values: Vec<T>) -> Result<Self> {
        if cohort.len() != values.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} client ids for {} values",
                cohort.len(),
                values.len()
            )));
        }
        let mut sorted = cohort.clone();
        sorted.sort();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::BadConfig(format!("{} appears twice in the cohort", w[0])));
        }
        Ok(AtClients { cohort, values })
    }

    /// Clients numbered `0..values.len()`.
    pub fn from_values(values: Vec<T>) -> Self {
        AtClients {
            cohort: (0..values.len()).map(ClientId).collect(),
            values,
        }
    }

    pub fn cohort(&self) -> &[ClientId] {
        &self.cohort
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ClientId, &T)> {
        self.cohort.iter().copied().zip(self.values.iter())
    }

    pub fn into_parts(self) -> (Vec<ClientId>, Vec<T>) {
        (self.cohort, self.values)
    }

    /// Client-local transformation; the placement does not change.
    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> AtClients<U> {
        AtClients {
            cohort: self.cohort.clone(),
            values: self.values.iter().map(f).collect(),
        }
    }

    pub fn try_map<U>(&self, mut f: impl FnMut(ClientId, &T) -> Result<U>) -> Result<AtClients<U>> {
        let values = self.iter().map(|(id, v)| f(id, v)).collect::<Result<Vec<_>>>()?;
        Ok(AtClients {
            cohort: self.cohort.clone(),
            values,
        })
    }

    /// Positions of the entries in ascending client id order.
    pub(crate) fn ascending_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.cohort.len()).collect();
        order.sort_by_key(|&i| self.cohort[i]);
        order
    }

    pub(crate) fn same_cohort<U>(&self, other: &AtClients<U>) -> bool {
        self.cohort == other.cohort
    }
}

/// A value together with its placement.
#[derive(Debug, Clone, PartialEq)]
pub enum FederatedValue<T> {
    Server(AtServer<T>),
    Clients(AtClients<T>),
}

impl<T> FederatedValue<T> {
    pub fn placement(&self) -> Placement {
        match self {
            FederatedValue::Server(_) => Placement::Server,
            FederatedValue::Clients(_) => Placement::Clients,
        }
    }
}

impl<T> From<AtServer<T>> for FederatedValue<T> {
    fn from(v: AtServer<T>) -> Self {
        FederatedValue::Server(v)
    }
}

impl<T> From<AtClients<T>> for FederatedValue<T> {
    fn from(v: AtClients<T>) -> Self {
        FederatedValue::Clients(v)
    }
}

/// Number of scalars a value occupies on the wire.
pub trait ScalarCount {
    fn scalar_count(&self) -> usize;
}

impl ScalarCount for f64 {
    fn scalar_count(&self) -> usize {
        1
    }
}

impl<T: ScalarCount> ScalarCount for [T] {
    fn scalar_count(&self) -> usize {
        self.iter().map(ScalarCount::scalar_count).sum()
    }
}

impl<T: ScalarCount> ScalarCount for Vec<T> {
    fn scalar_count(&self) -> usize {
        self.as_slice().scalar_count()
    }
}

impl<A: ScalarCount, B: ScalarCount> ScalarCount for (A, B) {
    fn scalar_count(&self) -> usize {
        self.0.scalar_count() + self.1.scalar_count()
    }
}

impl ScalarCount for crate::selection::BlockedParams {
    fn scalar_count(&self) -> usize {
        self.len()
    }
}

/// Scalars moved between server and clients.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CommLedger {
    pub scalars_down: usize,
    pub scalars_up: usize,
}

impl CommLedger {
    pub fn record_down(&mut self, scalars: usize) {
        self.scalars_down += scalars;
    }

    pub fn record_up(&mut self, scalars: usize) {
        self.scalars_up += scalars;
    }
}
