//! Federated datasets: example types, synthetic generators and the shard
//! loader.

pub mod example;
pub mod shards;
pub mod synthetic;

pub use example::{ClientData, DenseExample, FederatedDataset, Labelled, SparseExample, Split};
pub use shards::{load_client_shards, ShardDataset};
pub use synthetic::{
    gen_dense_task, gen_sparse_tag_dataset, FederatedSplits, SyntheticDenseConfig, SyntheticTagConfig,
};
