//! Learning tasks: a model plus federated train and evaluation data.

use std::collections::HashMap;

use crate::data::{FederatedDataset, SparseExample, Split};
use crate::error::{Error, Result};
use crate::fedcore::ClientId;
use crate::models::logreg::{self, LogregObjective, LogregView, SparseLinearModel};
use crate::models::mlp::{self, MlpExample, MlpModel, MlpObjective, MlpView};
use crate::models::{evaluate, Metric, Objective};
use crate::seeds::SimRng;
use crate::selection::{BlockedParams, KeyCounts};

/// What the training loop needs from a model and its data.
pub trait Task: Sync {
    /// Parameter layout of the server model.
    fn layout(&self) -> &BlockedParams;

    fn init_params(&self, rng: &mut SimRng) -> BlockedParams;

    /// Training clients, in ascending id order.
    fn client_pool(&self) -> Vec<ClientId>;

    fn num_examples(&self, client: ClientId) -> Result<usize>;

    /// Per-key counts of `client`'s data for a row-selected `block`: how many
    /// of its examples use each row.
    fn key_counts(&self, client: ClientId, block: &str) -> Result<KeyCounts>;

    /// `client`'s local objective over the parameters `gather` points at
    /// (`None` for the whole model).
    fn objective(&self, client: ClientId, gather: Option<&[usize]>) -> Result<Box<dyn Objective + '_>>;

    /// Metrics of the full model on an evaluation split.
    fn evaluate(&self, params: &BlockedParams, split: Split) -> Result<Vec<(Metric, f64)>>;
}

/// Held-out data and the metrics reported on it.
#[derive(Debug, Clone)]
pub struct EvalSets<E> {
    pub valid: Option<FederatedDataset<E>>,
    pub test: Option<FederatedDataset<E>>,
    pub metrics: Vec<Metric>,
}

impl<E: Clone> EvalSets<E> {
    fn flat(&self, split: Split) -> Option<Vec<E>> {
        let ds = match split {
            Split::Valid => self.valid.as_ref(),
            Split::Test => self.test.as_ref(),
            Split::Train => None,
        }?;
        Some(ds.all_examples().cloned().collect())
    }
}

fn index_clients<E>(train: &FederatedDataset<E>) -> Result<HashMap<ClientId, usize>> {
    if train.clients.is_empty() {
        return Err(Error::BadConfig("training federation has no clients".into()));
    }
    Ok(train.clients.iter().enumerate().map(|(i, c)| (c.id, i)).collect())
}

fn document_frequencies(examples: &[SparseExample]) -> KeyCounts {
    KeyCounts::from_pairs(examples.iter().flat_map(|e| e.indices().iter().map(|&f| (f, 1.0))))
}

/// Sparse one-vs-rest logistic regression on a bag-of-words federation.
pub struct LogregTask {
    model: SparseLinearModel,
    layout: BlockedParams,
    train: FederatedDataset<SparseExample>,
    position: HashMap<ClientId, usize>,
    counts: Vec<KeyCounts>,
    valid: Option<Vec<SparseExample>>,
    test: Option<Vec<SparseExample>>,
    metrics: Vec<Metric>,
}

impl LogregTask {
    pub fn new(train: FederatedDataset<SparseExample>, eval: EvalSets<SparseExample>) -> Result<Self> {
        train.validate()?;
        let model = SparseLinearModel::new(train.input_dim, train.label_dim)?;
        let position = index_clients(&train)?;
        let counts = train
            .clients
            .iter()
            .map(|c| document_frequencies(&c.examples))
            .collect();
        Ok(LogregTask {
            layout: model.init(),
            model,
            position,
            counts,
            valid: eval.flat(Split::Valid),
            test: eval.flat(Split::Test),
            metrics: eval.metrics,
            train,
        })
    }

    pub fn model(&self) -> &SparseLinearModel {
        &self.model
    }

    fn client(&self, id: ClientId) -> Result<usize> {
        self.position
            .get(&id)
            .copied()
            .ok_or_else(|| Error::BadConfig(format!("{id} is not a training client")))
    }
}

impl Task for LogregTask {
    fn layout(&self) -> &BlockedParams {
        &self.layout
    }

    fn init_params(&self, _rng: &mut SimRng) -> BlockedParams {
        self.model.init()
    }

    fn client_pool(&self) -> Vec<ClientId> {
        let mut ids = self.train.client_ids();
        ids.sort();
        ids
    }

    fn num_examples(&self, client: ClientId) -> Result<usize> {
        Ok(self.train.clients[self.client(client)?].examples.len())
    }

    fn key_counts(&self, client: ClientId, block: &str) -> Result<KeyCounts> {
        if block != logreg::WEIGHTS {
            return Err(Error::BadConfig(format!("no per-client counts for block `{block}`")));
        }
        Ok(self.counts[self.client(client)?].clone())
    }

    fn objective(&self, client: ClientId, gather: Option<&[usize]>) -> Result<Box<dyn Objective + '_>> {
        let examples = &self.train.clients[self.client(client)?].examples;
        let view = match gather {
            None => LogregView::full(&self.model),
            Some(g) => LogregView::from_gather(&self.model, &self.layout, g)?,
        };
        Ok(Box::new(LogregObjective::projected(view, examples)))
    }

    fn evaluate(&self, params: &BlockedParams, split: Split) -> Result<Vec<(Metric, f64)>> {
        let set = match split {
            Split::Valid => &self.valid,
            Split::Test => &self.test,
            Split::Train => &None,
        };
        let Some(examples) = set else {
            return Ok(Vec::new());
        };
        let view = LogregView::full(&self.model);
        self.metrics
            .iter()
            .map(|&m| Ok((m, evaluate(examples, m, |e| view.scores(params.values(), e))?)))
            .collect()
    }
}

/// One hidden layer MLP over dense or sparse examples.
pub struct MlpTask<E> {
    model: MlpModel,
    layout: BlockedParams,
    train: FederatedDataset<E>,
    position: HashMap<ClientId, usize>,
    valid: Option<Vec<E>>,
    test: Option<Vec<E>>,
    metrics: Vec<Metric>,
    counts: Vec<Option<KeyCounts>>,
}

/// Examples that may expose per-feature counts for structured keys.
pub trait FeatureCounts {
    fn feature_counts(examples: &[Self]) -> Option<KeyCounts>
    where
        Self: Sized;
}

impl FeatureCounts for SparseExample {
    fn feature_counts(examples: &[Self]) -> Option<KeyCounts> {
        Some(document_frequencies(examples))
    }
}

impl FeatureCounts for crate::data::DenseExample {
    fn feature_counts(_: &[Self]) -> Option<KeyCounts> {
        None
    }
}

impl<E: MlpExample + FeatureCounts> MlpTask<E> {
    pub fn new(model: MlpModel, train: FederatedDataset<E>, eval: EvalSets<E>) -> Result<Self> {
        let position = index_clients(&train)?;
        let counts = train.clients.iter().map(|c| E::feature_counts(&c.examples)).collect();
        Ok(MlpTask {
            layout: model.layout(),
            model,
            position,
            valid: eval.flat(Split::Valid),
            test: eval.flat(Split::Test),
            metrics: eval.metrics,
            counts,
            train,
        })
    }

    pub fn model(&self) -> &MlpModel {
        &self.model
    }

    fn client(&self, id: ClientId) -> Result<usize> {
        self.position
            .get(&id)
            .copied()
            .ok_or_else(|| Error::BadConfig(format!("{id} is not a training client")))
    }
}

impl<E: MlpExample + FeatureCounts> Task for MlpTask<E> {
    fn layout(&self) -> &BlockedParams {
        &self.layout
    }

    fn init_params(&self, rng: &mut SimRng) -> BlockedParams {
        self.model.init(rng)
    }

    fn client_pool(&self) -> Vec<ClientId> {
        let mut ids = self.train.client_ids();
        ids.sort();
        ids
    }

    fn num_examples(&self, client: ClientId) -> Result<usize> {
        Ok(self.train.clients[self.client(client)?].examples.len())
    }

    fn key_counts(&self, client: ClientId, block: &str) -> Result<KeyCounts> {
        match &self.counts[self.client(client)?] {
            Some(c) if block == mlp::EMBEDDING => Ok(c.clone()),
            _ => Err(Error::BadConfig(format!("no per-client counts for block `{block}`"))),
        }
    }

    fn objective(&self, client: ClientId, gather: Option<&[usize]>) -> Result<Box<dyn Objective + '_>> {
        let examples = &self.train.clients[self.client(client)?].examples;
        let view = match gather {
            None => MlpView::full(&self.model),
            Some(g) => MlpView::from_gather(&self.model, &self.layout, g)?,
        };
        Ok(Box::new(MlpObjective::projected(view, examples)))
    }

    fn evaluate(&self, params: &BlockedParams, split: Split) -> Result<Vec<(Metric, f64)>> {
        let set = match split {
            Split::Valid => &self.valid,
            Split::Test => &self.test,
            Split::Train => &None,
        };
        let Some(examples) = set else {
            return Ok(Vec::new());
        };
        let view = MlpView::full(&self.model);
        self.metrics
            .iter()
            .map(|&m| {
                Ok((
                    m,
                    evaluate(examples, m, |e| view.scores(params.values(), e.mlp_input()))?,
                ))
            })
            .collect()
    }
}
