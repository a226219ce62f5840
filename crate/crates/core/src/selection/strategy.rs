//! Client key-selection strategies.
//!
//! Structured strategies read per-key frequencies from the client's own data;
//! random strategies draw from the whole keyspace. Every strategy emits
//! distinct in-range keys and is a pure function of its inputs and RNG state.

use rand::seq::index;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fedcore::{KeySeq, SelectKey};
use crate::seeds::{self, SimRng};

/// Non-negative per-key frequencies. Only positive entries are stored, sorted
/// by key.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyCounts {
    entries: Vec<(SelectKey, f64)>,
}

impl KeyCounts {
    /// Sums duplicate keys; drops keys whose total is not positive.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (SelectKey, f64)>) -> Self {
        let mut entries: Vec<(SelectKey, f64)> = pairs.into_iter().collect();
        entries.sort_by_key(|&(k, _)| k);
        let mut merged: Vec<(SelectKey, f64)> = Vec::with_capacity(entries.len());
        for (k, c) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == k => last.1 += c,
                _ => merged.push((k, c)),
            }
        }
        merged.retain(|&(_, c)| c > 0.0);
        KeyCounts { entries: merged }
    }

    pub fn from_dense(counts: &[f64]) -> Self {
        Self::from_pairs(counts.iter().copied().enumerate())
    }

    pub fn entries(&self) -> &[(SelectKey, f64)] {
        &self.entries
    }

    /// Keys with positive count, ascending.
    pub fn positive_keys(&self) -> Vec<SelectKey> {
        self.entries.iter().map(|&(k, _)| k).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// The `m` most frequent keys, by count descending then key ascending.
pub fn keys_top_m(counts: &KeyCounts, m: usize) -> KeySeq {
    let mut ranked: Vec<(SelectKey, f64)> = counts.entries().to_vec();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(m);
    KeySeq::from(ranked.into_iter().map(|(k, _)| k).collect::<Vec<_>>())
}

fn sample_from(pool: &[SelectKey], m: usize, rng: &mut SimRng) -> KeySeq {
    let take = m.min(pool.len());
    let picked = index::sample(rng, pool.len(), take);
    KeySeq::from(picked.into_iter().map(|i| pool[i]).collect::<Vec<_>>())
}

/// Uniform sample of `m` keys without replacement from the keys with positive
/// count.
pub fn keys_random_from_local(counts: &KeyCounts, m: usize, rng: &mut SimRng) -> KeySeq {
    sample_from(&counts.positive_keys(), m, rng)
}

/// Uniform sample of `m` keys from the `2m` most frequent.
pub fn keys_random_top(counts: &KeyCounts, m: usize, rng: &mut SimRng) -> KeySeq {
    let pool = keys_top_m(counts, m.saturating_mul(2));
    sample_from(pool.as_slice(), m, rng)
}

/// Uniform sample of `m` distinct keys from `[0, keyspace)`.
///
/// With `shared_per_round` the draw depends on `round_seed` only, so every
/// client of the round receives the same keys; otherwise `rng` is used.
pub fn keys_uniform_random(
    keyspace: usize,
    m: usize,
    rng: &mut SimRng,
    shared_per_round: bool,
    round_seed: u64,
) -> Result<KeySeq> {
    if m > keyspace {
        return Err(Error::TooManyKeys { requested: m, keyspace });
    }
    let draw = |r: &mut SimRng| KeySeq::from(index::sample(r, keyspace, m).into_vec());
    if shared_per_round {
        let mut shared = seeds::rng_from(&[round_seed, seeds::stream::SHARED_KEYS]);
        Ok(draw(&mut shared))
    } else {
        Ok(draw(rng))
    }
}

/// Key counts `(round(alpha * n), round(alpha * h))`, rounding half away from
/// zero and never below one.
pub fn mixed_key_counts(alpha: f64, n: usize, h: usize) -> Result<(usize, usize)> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::BadAlpha(alpha));
    }
    let scaled = |size: usize| ((alpha * size as f64).round() as usize).max(1);
    Ok((scaled(n), scaled(h)))
}

/// Structured keys from the client's counts plus random keys over `[0, h)`.
pub fn keys_mixed_alpha(
    alpha: f64,
    structured_counts: &KeyCounts,
    n: usize,
    h: usize,
    rng: &mut SimRng,
) -> Result<(KeySeq, KeySeq)> {
    let (m, d) = mixed_key_counts(alpha, n, h)?;
    let structured = keys_top_m(structured_counts, m);
    let random = keys_uniform_random(h, d, rng, false, 0)?;
    Ok((structured, random))
}

/// How a client picks its keys for one select component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum KeyStrategy {
    /// Every key of the keyspace in ascending order.
    All,
    TopM {
        m: usize,
    },
    RandomFromLocal {
        m: usize,
    },
    RandomTop {
        m: usize,
    },
    UniformRandom {
        m: usize,
        shared_per_round: bool,
    },
    /// Structured plus random keys; see [`KeyStrategy::split_mixed`].
    Mixed {
        alpha: f64,
    },
}

impl KeyStrategy {
    /// Whether the strategy reads the client's local key counts.
    pub fn is_structured(&self) -> bool {
        matches!(
            self,
            KeyStrategy::TopM { .. } | KeyStrategy::RandomFromLocal { .. } | KeyStrategy::RandomTop { .. }
        )
    }

    /// Splits a mixed strategy into its structured (`TopM`) and random
    /// (`UniformRandom`) halves for keyspaces `n` and `h`.
    pub fn split_mixed(alpha: f64, n: usize, h: usize, shared_per_round: bool) -> Result<(KeyStrategy, KeyStrategy)> {
        let (m, d) = mixed_key_counts(alpha, n, h)?;
        Ok((
            KeyStrategy::TopM { m },
            KeyStrategy::UniformRandom { m: d, shared_per_round },
        ))
    }

    pub fn choose(
        &self,
        keyspace: usize,
        counts: Option<&KeyCounts>,
        rng: &mut SimRng,
        round_seed: u64,
    ) -> Result<KeySeq> {
        let need_counts = || counts.ok_or_else(|| Error::BadConfig(format!("{self:?} needs per-client key counts")));
        let keys = match *self {
            KeyStrategy::All => KeySeq::from((0..keyspace).collect::<Vec<_>>()),
            KeyStrategy::TopM { m } => keys_top_m(need_counts()?, m),
            KeyStrategy::RandomFromLocal { m } => keys_random_from_local(need_counts()?, m, rng),
            KeyStrategy::RandomTop { m } => keys_random_top(need_counts()?, m, rng),
            KeyStrategy::UniformRandom { m, shared_per_round } => {
                keys_uniform_random(keyspace, m, rng, shared_per_round, round_seed)?
            }
            KeyStrategy::Mixed { .. } => {
                return Err(Error::BadConfig(
                    "a mixed strategy must be split into its structured and random parts".into(),
                ))
            }
        };
        if let Some(&bad) = keys.iter().find(|&&k| k >= keyspace) {
            return Err(Error::KeyOutOfRange {
                client: 0,
                position: keys.iter().position(|&k| k == bad).unwrap_or(0),
                key: bad,
                keyspace,
            });
        }
        Ok(keys)
    }
}
