//! Seeded synthetic federations.
//!
//! The tag task mimics bag-of-words tagging: global Zipf word frequencies,
//! clients that write about a few topics each (so each client touches a
//! small part of the vocabulary), and tags produced by a planted sparse
//! linear scorer with noise. The dense task is a Gaussian-mixture
//! classification problem with Dirichlet label skew across clients.

use rand::distr::weighted::WeightedIndex;
use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::data::example::{ClientData, DenseExample, FederatedDataset, SparseExample, Split};
use crate::error::{Error, Result};
use crate::fedcore::ClientId;
use crate::seeds::{rng_from, SimRng};

const TAG_STREAM: u64 = 0x7A6;
const DENSE_STREAM: u64 = 0xDE5;

/// Train / validation / test federations over disjoint client ids.
#[derive(Debug, Clone, PartialEq)]
pub struct FederatedSplits<E> {
    pub train: FederatedDataset<E>,
    pub valid: FederatedDataset<E>,
    pub test: FederatedDataset<E>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticTagConfig {
    /// Training clients.
    pub clients: usize,
    pub valid_clients: usize,
    pub test_clients: usize,
    pub vocab: usize,
    pub tags: usize,
    /// Inclusive range of examples per client.
    pub examples_per_client: (usize, usize),
    /// Inclusive range of word draws per example (duplicates collapse).
    pub words_per_example: (usize, usize),
    pub zipf_exponent: f64,
    pub topics: usize,
    pub topics_per_client: usize,
    /// Vocabulary entries per topic.
    pub topic_size: usize,
    /// Vocabulary entries with a nonzero planted weight, per tag.
    pub signal_words: usize,
    /// Standard deviation of the score noise.
    pub score_noise: f64,
    /// Tags scoring within this margin of the best one are also assigned.
    pub label_margin: f64,
    pub max_labels: usize,
    pub seed: u64,
}

impl Default for SyntheticTagConfig {
    fn default() -> Self {
        SyntheticTagConfig {
            clients: 100,
            valid_clients: 20,
            test_clients: 20,
            vocab: 500,
            tags: 10,
            examples_per_client: (20, 40),
            words_per_example: (8, 20),
            zipf_exponent: 1.1,
            topics: 20,
            topics_per_client: 2,
            topic_size: 30,
            signal_words: 150,
            score_noise: 0.3,
            label_margin: 0.5,
            max_labels: 3,
            seed: 0,
        }
    }
}

impl SyntheticTagConfig {
    fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::BadConfig(msg.to_string()));
        if self.clients == 0 {
            return bad("synthetic federation needs at least one training client");
        }
        if self.tags < 2 || self.vocab < self.tags {
            return bad("need vocab >= tags >= 2");
        }
        let zipf_ok = self.zipf_exponent.is_finite() && self.zipf_exponent > 1.0;
        if !zipf_ok {
            return bad("zipf exponent must exceed 1");
        }
        let (lo, hi) = self.examples_per_client;
        let (wlo, whi) = self.words_per_example;
        if lo == 0 || lo > hi || wlo == 0 || wlo > whi {
            return bad("example and word ranges must be non-empty and start at 1 or more");
        }
        if self.topics == 0 || self.topics_per_client == 0 || self.topics_per_client > self.topics {
            return bad("need 1 <= topics_per_client <= topics");
        }
        if self.topic_size == 0 || self.topic_size > self.vocab {
            return bad("topic size must lie in [1, vocab]");
        }
        if self.signal_words == 0 || self.signal_words > self.vocab {
            return bad("signal words must lie in [1, vocab]");
        }
        // written so that NaN fails
        let nonneg = self.score_noise >= 0.0 && self.label_margin >= 0.0;
        if !nonneg || self.max_labels == 0 {
            return bad("noise and margin must be non-negative, max_labels positive");
        }
        Ok(())
    }
}

/// Generates the sparse tag federation. Pure in `cfg`.
pub fn gen_sparse_tag_dataset(cfg: &SyntheticTagConfig) -> Result<FederatedSplits<SparseExample>> {
    cfg.validate()?;
    let mut rng = rng_from(&[cfg.seed, TAG_STREAM]);
    let n = cfg.vocab;

    let zipf: Vec<f64> = (0..n).map(|r| ((r + 1) as f64).powf(-cfg.zipf_exponent)).collect();
    let topics: Vec<Vec<usize>> = (0..cfg.topics)
        .map(|_| {
            let mut words = index::sample(&mut rng, n, cfg.topic_size).into_vec();
            words.sort_unstable();
            words
        })
        .collect();

    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut planted = vec![0.0; cfg.tags * n];
    for j in 0..cfg.tags {
        for w in index::sample(&mut rng, n, cfg.signal_words) {
            planted[j * n + w] = std_normal.sample(&mut rng);
        }
    }

    let total = cfg.clients + cfg.valid_clients + cfg.test_clients;
    let mut clients = Vec::with_capacity(total);
    for c in 0..total {
        let chosen = index::sample(&mut rng, cfg.topics, cfg.topics_per_client);
        let mut vocab: Vec<usize> = chosen.iter().flat_map(|t| topics[t].iter().copied()).collect();
        vocab.sort_unstable();
        vocab.dedup();
        let weights = WeightedIndex::new(vocab.iter().map(|&w| zipf[w])).expect("positive weights");
        let count = rng.random_range(cfg.examples_per_client.0..=cfg.examples_per_client.1);
        let mut examples = Vec::with_capacity(count);
        for _ in 0..count {
            let draws = rng.random_range(cfg.words_per_example.0..=cfg.words_per_example.1);
            let mut words: Vec<usize> = (0..draws).map(|_| vocab[weights.sample(&mut rng)]).collect();
            words.sort_unstable();
            words.dedup();
            let labels = planted_labels(cfg, &planted, &words, &mut rng, &std_normal);
            examples.push(SparseExample::indicator(words, labels)?);
        }
        clients.push(ClientData {
            id: ClientId(c),
            examples,
        });
    }
    Ok(split_clients(clients, cfg.clients, cfg.valid_clients, n, cfg.tags))
}

fn planted_labels(
    cfg: &SyntheticTagConfig,
    planted: &[f64],
    words: &[usize],
    rng: &mut SimRng,
    noise: &Normal<f64>,
) -> Vec<usize> {
    let n = cfg.vocab;
    let norm = (words.len() as f64).sqrt();
    let scores: Vec<f64> = (0..cfg.tags)
        .map(|j| words.iter().map(|&w| planted[j * n + w]).sum::<f64>() / norm + cfg.score_noise * noise.sample(rng))
        .collect();
    let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut ranked: Vec<usize> = (0..cfg.tags)
        .filter(|&j| scores[j] >= best - cfg.label_margin)
        .collect();
    ranked.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    ranked.truncate(cfg.max_labels);
    ranked
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticDenseConfig {
    pub clients: usize,
    pub valid_clients: usize,
    pub test_clients: usize,
    pub dim: usize,
    pub classes: usize,
    /// Gaussian components per class; more than one makes the task
    /// non-linear.
    pub modes_per_class: usize,
    /// Standard deviation of the component means.
    pub separation: f64,
    pub examples_per_client: (usize, usize),
    /// `0` gives every client the uniform label marginal; otherwise client
    /// marginals are drawn from a symmetric Dirichlet with concentration
    /// `1 / heterogeneity`.
    pub heterogeneity: f64,
    pub seed: u64,
}

impl Default for SyntheticDenseConfig {
    fn default() -> Self {
        SyntheticDenseConfig {
            clients: 100,
            valid_clients: 20,
            test_clients: 20,
            dim: 20,
            classes: 10,
            modes_per_class: 3,
            separation: 1.0,
            examples_per_client: (20, 40),
            heterogeneity: 1.0,
            seed: 0,
        }
    }
}

impl SyntheticDenseConfig {
    fn validate(&self) -> Result<()> {
        let (lo, hi) = self.examples_per_client;
        if self.clients == 0 || self.dim == 0 || self.classes < 2 || self.modes_per_class == 0 {
            return Err(Error::BadConfig(
                "dense task needs clients, a positive dimension, at least two classes and one mode".into(),
            ));
        }
        if lo == 0 || lo > hi {
            return Err(Error::BadConfig("examples per client range must be non-empty".into()));
        }
        let ok = self.heterogeneity >= 0.0 && self.heterogeneity.is_finite() && self.separation > 0.0;
        if !ok {
            return Err(Error::BadConfig(
                "heterogeneity must be finite and >= 0, separation > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Generates the dense classification federation. Pure in `cfg`.
pub fn gen_dense_task(cfg: &SyntheticDenseConfig) -> Result<FederatedSplits<DenseExample>> {
    cfg.validate()?;
    let mut rng = rng_from(&[cfg.seed, DENSE_STREAM]);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let means: Vec<Vec<f64>> = (0..cfg.classes * cfg.modes_per_class)
        .map(|_| {
            (0..cfg.dim)
                .map(|_| cfg.separation * std_normal.sample(&mut rng))
                .collect()
        })
        .collect();

    let total = cfg.clients + cfg.valid_clients + cfg.test_clients;
    let mut clients = Vec::with_capacity(total);
    for c in 0..total {
        let marginal = label_marginal(cfg.classes, cfg.heterogeneity, &mut rng)?;
        let labels = WeightedIndex::new(&marginal).map_err(|e| Error::BadConfig(e.to_string()))?;
        let count = rng.random_range(cfg.examples_per_client.0..=cfg.examples_per_client.1);
        let mut examples = Vec::with_capacity(count);
        for _ in 0..count {
            let y = labels.sample(&mut rng);
            let mode = rng.random_range(0..cfg.modes_per_class);
            let mean = &means[y * cfg.modes_per_class + mode];
            let features = mean.iter().map(|m| m + std_normal.sample(&mut rng)).collect();
            examples.push(DenseExample::new(features, y)?);
        }
        clients.push(ClientData {
            id: ClientId(c),
            examples,
        });
    }
    Ok(split_clients(
        clients,
        cfg.clients,
        cfg.valid_clients,
        cfg.dim,
        cfg.classes,
    ))
}

/// Per-client label distribution: uniform at zero heterogeneity, else a
/// Dirichlet draw built from normalised Gamma variates.
pub fn label_marginal(classes: usize, heterogeneity: f64, rng: &mut SimRng) -> Result<Vec<f64>> {
    if heterogeneity == 0.0 {
        return Ok(vec![1.0 / classes as f64; classes]);
    }
    let gamma = Gamma::new(1.0 / heterogeneity, 1.0).map_err(|e| Error::BadConfig(e.to_string()))?;
    loop {
        let draws: Vec<f64> = (0..classes).map(|_| gamma.sample(rng)).collect();
        let sum: f64 = draws.iter().sum();
        // tiny concentrations can underflow every draw
        if sum > 0.0 && sum.is_finite() {
            return Ok(draws.into_iter().map(|g| g / sum).collect());
        }
    }
}

fn split_clients<E>(
    mut clients: Vec<ClientData<E>>,
    train: usize,
    valid: usize,
    input_dim: usize,
    label_dim: usize,
) -> FederatedSplits<E> {
    let test = clients.split_off(train + valid);
    let valid_part = clients.split_off(train);
    let make = |clients, split| FederatedDataset {
        clients,
        input_dim,
        label_dim,
        split,
    };
    FederatedSplits {
        train: make(clients, Split::Train),
        valid: make(valid_part, Split::Valid),
        test: make(test, Split::Test),
    }
}
