//! Loader for client-sharded text files.
//!
//! One UTF-8 file per client with extension `.fdc`, read in lexicographic
//! file-name order; the i-th file becomes client `i`. Lines starting with `#`
//! and blank lines are skipped. Example lines are either
//!
//! ```text
//! 3,7<TAB>0:1 5:1        sparse: labels, then sorted idx:val pairs
//! 2<TAB>0.5,-1.0         dense: one label, then the feature vector
//! ```
//!
//! The kind is decided by the first example line of the first file; every
//! other line must agree.

use std::fs;
use std::path::{Path, PathBuf};

use crate::data::example::{ClientData, DenseExample, FederatedDataset, SparseExample, Split};
use crate::error::{Error, Result};
use crate::fedcore::ClientId;

pub const SHARD_EXTENSION: &str = "fdc";

#[derive(Debug, Clone, PartialEq)]
pub enum ShardDataset {
    Sparse(FederatedDataset<SparseExample>),
    Dense(FederatedDataset<DenseExample>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Sparse,
    Dense,
}

enum Parsed {
    Sparse(SparseExample),
    Dense(DenseExample),
}

/// Loads every `.fdc` file of `dir` as one client. Dimensions are inferred
/// from the largest index and label seen.
pub fn load_client_shards(dir: &Path) -> Result<ShardDataset> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .map(|entry| entry.map(|e| e.path()))
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == SHARD_EXTENSION))
        .collect();
    if files.is_empty() {
        return Err(Error::BadConfig(format!(
            "no .{SHARD_EXTENSION} files in {}",
            dir.display()
        )));
    }
    files.sort();

    let mut kind = None;
    let mut sparse = Vec::new();
    let mut dense = Vec::new();
    for (i, file) in files.iter().enumerate() {
        let text = fs::read_to_string(file)?;
        let mut sp = Vec::new();
        let mut de = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| Error::Parse {
                file: file.clone(),
                line: lineno + 1,
                message,
            };
            let parsed = parse_line(line, kind).map_err(err)?;
            match parsed {
                Parsed::Sparse(e) => {
                    kind.get_or_insert(Kind::Sparse);
                    sp.push(e);
                }
                Parsed::Dense(e) => {
                    kind.get_or_insert(Kind::Dense);
                    de.push(e);
                }
            }
        }
        if sp.is_empty() && de.is_empty() {
            return Err(Error::BadConfig(format!("{} holds no examples", file.display())));
        }
        sparse.push(ClientData {
            id: ClientId(i),
            examples: sp,
        });
        dense.push(ClientData {
            id: ClientId(i),
            examples: de,
        });
    }

    match kind.expect("at least one example was parsed") {
        Kind::Sparse => {
            let input_dim = sparse
                .iter()
                .flat_map(|c| &c.examples)
                .filter_map(|e| e.indices().last())
                .max()
                .map_or(0, |m| m + 1);
            let label_dim = sparse
                .iter()
                .flat_map(|c| &c.examples)
                .filter_map(|e| e.labels().last())
                .max()
                .map_or(0, |m| m + 1);
            let ds = FederatedDataset {
                clients: sparse,
                input_dim,
                label_dim,
                split: Split::Train,
            };
            ds.validate()?;
            Ok(ShardDataset::Sparse(ds))
        }
        Kind::Dense => {
            let input_dim = dense[0].examples[0].features.len();
            let label_dim = dense
                .iter()
                .flat_map(|c| &c.examples)
                .map(|e| e.label)
                .max()
                .map_or(0, |m| m + 1);
            let ds = FederatedDataset {
                clients: dense,
                input_dim,
                label_dim,
                split: Split::Train,
            };
            ds.validate()?;
            Ok(ShardDataset::Dense(ds))
        }
    }
}

fn parse_line(line: &str, kind: Option<Kind>) -> Result<Parsed, String> {
    let (labels, features) = line
        .split_once('\t')
        .ok_or_else(|| "expected `<labels><TAB><features>`".to_string())?;
    let this = if features.contains(':') || features.trim().is_empty() {
        Kind::Sparse
    } else {
        Kind::Dense
    };
    if kind.is_some_and(|k| k != this) {
        return Err("line mixes sparse and dense example formats".into());
    }
    let label_ids = labels
        .split(',')
        .map(|l| l.trim().parse::<usize>().map_err(|e| format!("bad label `{l}`: {e}")))
        .collect::<Result<Vec<_>, _>>()?;
    match this {
        Kind::Sparse => {
            let mut indices = Vec::new();
            let mut values = Vec::new();
            for pair in features.split_whitespace() {
                let (i, v) = pair.split_once(':').ok_or_else(|| format!("bad pair `{pair}`"))?;
                let i: usize = i.parse().map_err(|e| format!("bad index `{i}`: {e}"))?;
                let v = parse_f64(v)?;
                if indices.last().is_some_and(|&last| last >= i) {
                    return Err(format!("feature indices not strictly increasing at `{pair}`"));
                }
                indices.push(i);
                values.push(v);
            }
            SparseExample::new(indices, values, label_ids)
                .map(Parsed::Sparse)
                .map_err(|e| e.to_string())
        }
        Kind::Dense => {
            let [label] = label_ids[..] else {
                return Err("dense examples carry exactly one label".into());
            };
            let features = features.split(',').map(parse_f64).collect::<Result<Vec<_>, _>>()?;
            DenseExample::new(features, label)
                .map(Parsed::Dense)
                .map_err(|e| e.to_string())
        }
    }
}

fn parse_f64(s: &str) -> Result<f64, String> {
    // accept the typographic minus sign as well
    let s = s.trim().replace('\u{2212}', "-");
    s.parse::<f64>().map_err(|e| format!("bad number `{s}`: {e}"))
}
