//! Select plans: a keyspace `K` plus the select function `psi` and the
//! deselect function `phi` over a [`BlockedParams`] layout.
//!
//! Every plan in this module is a *gather plan*: key `k` resolves to an
//! ordered list of flat coordinates of `x`, `psi(x, k)` gathers them, and
//! `phi` scatter-adds slice updates back onto the same coordinates. Coordinates
//! contributed by a fused broadcast part are marked shared; `phi` writes those
//! verbatim instead of accumulating, so a broadcast block carried by several
//! slices of the same client is placed once.

use crate::error::{shape_err, Error, Result};
use crate::fedcore::{Deselect, SelectFn, SelectKey, TouchedSet};
use crate::selection::params::{BlockSpec, BlockedParams};

/// One flat coordinate of a slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Coord {
    pub index: usize,
    /// Set for coordinates of a fused broadcast part.
    pub shared: bool,
}

/// Resolved reference to a block of the plan's layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockRef {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

impl From<&BlockSpec> for BlockRef {
    fn from(b: &BlockSpec) -> Self {
        BlockRef {
            name: b.name.clone(),
            offset: b.offset,
            len: b.len,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlanKind {
    /// `K = 1`, `psi(x, 0) = x`.
    Identity { blocks: Vec<String> },
    /// `psi(x, k)` is row `k` of a block.
    RowSelect { block: BlockRef, row_len: usize },
    /// `psi(x, i) = a_i`, one whole block per key.
    BlockSelect { blocks: Vec<BlockRef> },
    /// `psi(x, j)` is hidden unit `j`: column `j` of the input weights, entry
    /// `j` of the hidden bias and row `j` of the output weights.
    NeuronSelect {
        w_in: BlockRef,
        b_in: BlockRef,
        w_out: BlockRef,
        fan_in: usize,
        hidden: usize,
        fan_out: usize,
    },
    /// `psi'((x, y), k) = (psi(x, k), y)`.
    Fused {
        inner: Box<SelectPlan>,
        broadcast: Vec<BlockRef>,
    },
    /// Composite key `k1 * K2 + k2`; `psi' = (psi1(k1), psi2(k2))`.
    Merged {
        first: Box<SelectPlan>,
        second: Box<SelectPlan>,
    },
    /// Composite key `sum_i z_i K^(m-i)`; `psi' = [psi(z_1), ..., psi(z_m)]`.
    Flattened { inner: Box<SelectPlan>, count: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectPlan {
    kind: PlanKind,
    keyspace: usize,
    model_len: usize,
}

impl SelectPlan {
    /// The trivial plan: one key, whose slice is the whole model.
    pub fn identity(params: &BlockedParams) -> Self {
        SelectPlan {
            kind: PlanKind::Identity {
                blocks: params.blocks().iter().map(|b| b.name.clone()).collect(),
            },
            keyspace: 1,
            model_len: params.len(),
        }
    }

    pub fn row_select(params: &BlockedParams, block: &str) -> Result<Self> {
        let spec = params.block(block)?;
        if spec.shape.is_empty() {
            return Err(shape_err(format!(
                "row select needs a block with rows, `{block}` is scalar"
            )));
        }
        Ok(SelectPlan {
            kind: PlanKind::RowSelect {
                block: spec.into(),
                row_len: spec.row_len(),
            },
            keyspace: spec.rows(),
            model_len: params.len(),
        })
    }

    pub fn block_select(params: &BlockedParams, blocks: &[&str]) -> Result<Self> {
        let refs = blocks
            .iter()
            .map(|name| params.block(name).map(BlockRef::from))
            .collect::<Result<Vec<_>>>()?;
        check_distinct(refs.iter().map(|b| b.name.as_str()))?;
        Ok(SelectPlan {
            keyspace: refs.len(),
            kind: PlanKind::BlockSelect { blocks: refs },
            model_len: params.len(),
        })
    }

    /// Hidden-unit selection over `w_in: d x h`, `b_in: h`, `w_out: h x c`.
    pub fn neuron_select(params: &BlockedParams, w_in: &str, b_in: &str, w_out: &str) -> Result<Self> {
        let wi = params.block(w_in)?;
        let bi = params.block(b_in)?;
        let wo = params.block(w_out)?;
        check_distinct([w_in, b_in, w_out].into_iter())?;
        if wi.shape.len() != 2 || bi.shape.len() != 1 || wo.shape.len() != 2 {
            return Err(shape_err("neuron select needs matrix, vector, matrix blocks"));
        }
        let (fan_in, hidden) = (wi.shape[0], wi.shape[1]);
        if bi.shape[0] != hidden || wo.shape[0] != hidden {
            return Err(shape_err(format!(
                "hidden sizes disagree: {:?}, {:?}, {:?}",
                wi.shape, bi.shape, wo.shape
            )));
        }
        Ok(SelectPlan {
            kind: PlanKind::NeuronSelect {
                w_in: wi.into(),
                b_in: bi.into(),
                w_out: wo.into(),
                fan_in,
                hidden,
                fan_out: wo.shape[1],
            },
            keyspace: hidden,
            model_len: params.len(),
        })
    }

    pub(crate) fn from_parts(kind: PlanKind, keyspace: usize, model_len: usize) -> Self {
        SelectPlan {
            kind,
            keyspace,
            model_len,
        }
    }

    pub fn kind(&self) -> &PlanKind {
        &self.kind
    }

    /// Keyspace size `K`.
    pub fn keyspace(&self) -> usize {
        self.keyspace
    }

    /// Scalar count `s` of the model the plan was built for.
    pub fn model_len(&self) -> usize {
        self.model_len
    }

    /// Names of every block the plan reads.
    pub fn blocks(&self) -> Vec<String> {
        match &self.kind {
            PlanKind::Identity { blocks } => blocks.clone(),
            PlanKind::RowSelect { block, .. } => vec![block.name.clone()],
            PlanKind::BlockSelect { blocks } => blocks.iter().map(|b| b.name.clone()).collect(),
            PlanKind::NeuronSelect { w_in, b_in, w_out, .. } => {
                vec![w_in.name.clone(), b_in.name.clone(), w_out.name.clone()]
            }
            PlanKind::Fused { inner, broadcast } => {
                let mut names = inner.blocks();
                names.extend(broadcast.iter().map(|b| b.name.clone()));
                names
            }
            PlanKind::Merged { first, second } => {
                let mut names = first.blocks();
                names.extend(second.blocks());
                names
            }
            PlanKind::Flattened { inner, .. } => inner.blocks(),
        }
    }

    pub fn check_key(&self, key: SelectKey) -> Result<()> {
        if key < self.keyspace {
            Ok(())
        } else {
            Err(Error::KeyOutOfRange {
                client: 0,
                position: 0,
                key,
                keyspace: self.keyspace,
            })
        }
    }

    /// Appends the coordinates of `psi(x, key)` to `out`. `key` must be in range.
    pub fn push_coords(&self, key: SelectKey, out: &mut Vec<Coord>) {
        debug_assert!(key < self.keyspace);
        let plain = |index| Coord { index, shared: false };
        match &self.kind {
            PlanKind::Identity { .. } => out.extend((0..self.model_len).map(plain)),
            PlanKind::RowSelect { block, row_len } => {
                let start = block.offset + key * row_len;
                out.extend((start..start + row_len).map(plain));
            }
            PlanKind::BlockSelect { blocks } => {
                let b = &blocks[key];
                out.extend((b.offset..b.offset + b.len).map(plain));
            }
            PlanKind::NeuronSelect {
                w_in,
                b_in,
                w_out,
                fan_in,
                hidden,
                fan_out,
            } => {
                out.extend((0..*fan_in).map(|i| plain(w_in.offset + i * hidden + key)));
                out.push(plain(b_in.offset + key));
                let row = w_out.offset + key * fan_out;
                out.extend((row..row + fan_out).map(plain));
            }
            PlanKind::Fused { inner, broadcast } => {
                inner.push_coords(key, out);
                for b in broadcast {
                    out.extend((b.offset..b.offset + b.len).map(|index| Coord { index, shared: true }));
                }
            }
            PlanKind::Merged { first, second } => {
                let (k1, k2) = split_merged_key(key, second.keyspace);
                first.push_coords(k1, out);
                second.push_coords(k2, out);
            }
            PlanKind::Flattened { inner, count } => {
                for k in decode_flat_key(key, inner.keyspace, *count) {
                    inner.push_coords(k, out);
                }
            }
        }
    }

    pub fn coords(&self, key: SelectKey) -> Result<Vec<Coord>> {
        self.check_key(key)?;
        let mut out = Vec::new();
        self.push_coords(key, &mut out);
        Ok(out)
    }

    /// Scalar count of `psi(x, key)`.
    pub fn slice_len(&self, key: SelectKey) -> Result<usize> {
        self.check_key(key)?;
        Ok(self.slice_len_unchecked(key))
    }

    fn slice_len_unchecked(&self, key: SelectKey) -> usize {
        match &self.kind {
            PlanKind::Identity { .. } => self.model_len,
            PlanKind::RowSelect { row_len, .. } => *row_len,
            PlanKind::BlockSelect { blocks } => blocks[key].len,
            PlanKind::NeuronSelect { fan_in, fan_out, .. } => fan_in + 1 + fan_out,
            PlanKind::Fused { inner, broadcast } => {
                inner.slice_len_unchecked(key) + broadcast.iter().map(|b| b.len).sum::<usize>()
            }
            PlanKind::Merged { first, second } => {
                let (k1, k2) = split_merged_key(key, second.keyspace);
                first.slice_len_unchecked(k1) + second.slice_len_unchecked(k2)
            }
            PlanKind::Flattened { inner, count } => decode_flat_key(key, inner.keyspace, *count)
                .into_iter()
                .map(|k| inner.slice_len_unchecked(k))
                .sum(),
        }
    }

    fn check_model(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.model_len {
            return Err(shape_err(format!(
                "plan built for a model of {} scalars, got {}",
                self.model_len,
                x.len()
            )));
        }
        Ok(())
    }

    /// `psi(x, key)`. Never mutates `x`.
    pub fn psi(&self, x: &BlockedParams, key: SelectKey) -> Result<Vec<f64>> {
        self.psi_flat(x.values(), key)
    }

    pub fn psi_flat(&self, x: &[f64], key: SelectKey) -> Result<Vec<f64>> {
        self.check_model(x)?;
        let coords = self.coords(key)?;
        Ok(coords.iter().map(|c| x[c.index]).collect())
    }

    /// Adds `phi(update, key)` into `out` (length `s`). Shared coordinates are
    /// overwritten rather than accumulated.
    pub fn deselect_into(&self, update: &[f64], key: SelectKey, out: &mut [f64]) -> Result<()> {
        self.check_model(out)?;
        let coords = self.coords(key)?;
        if coords.len() != update.len() {
            return Err(shape_err(format!(
                "slice for key {key} holds {} scalars, update has {}",
                coords.len(),
                update.len()
            )));
        }
        for (c, &u) in coords.iter().zip(update) {
            if c.shared {
                out[c.index] = u;
            } else {
                out[c.index] += u;
            }
        }
        Ok(())
    }

    /// `phi(slices, keys)`: scatter-add each slice onto its coordinates, zero
    /// elsewhere.
    pub fn phi(&self, slices: &[Vec<f64>], keys: &[SelectKey]) -> Result<Vec<f64>> {
        if slices.len() != keys.len() {
            return Err(shape_err(format!(
                "{} slice updates for {} keys",
                slices.len(),
                keys.len()
            )));
        }
        let mut out = vec![0.0; self.model_len];
        for (slice, &key) in slices.iter().zip(keys) {
            self.deselect_into(slice, key, &mut out)?;
        }
        Ok(out)
    }
}

impl SelectFn for SelectPlan {
    type Model = BlockedParams;
    type Slice = Vec<f64>;

    fn keyspace(&self) -> usize {
        self.keyspace
    }

    fn select(&self, x: &BlockedParams, key: SelectKey) -> Result<Vec<f64>> {
        self.psi(x, key)
    }
}

impl Deselect for SelectPlan {
    fn output_len(&self) -> usize {
        self.model_len
    }

    fn deselect_into(&self, update: &[f64], key: SelectKey, out: &mut [f64]) -> Result<()> {
        SelectPlan::deselect_into(self, update, key, out)
    }

    fn mark_touched(&self, key: SelectKey, touched: &mut TouchedSet) -> Result<()> {
        for c in self.coords(key)? {
            touched.mark(c.index);
        }
        Ok(())
    }
}

fn check_distinct<'a>(names: impl Iterator<Item = &'a str>) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for n in names {
        if !seen.insert(n) {
            return Err(Error::BlockCollision(n.to_string()));
        }
    }
    Ok(())
}

pub(crate) fn split_merged_key(key: usize, second_keyspace: usize) -> (usize, usize) {
    (key / second_keyspace, key % second_keyspace)
}

/// Digits of a flattened key, most significant first.
pub(crate) fn decode_flat_key(mut key: usize, keyspace: usize, count: usize) -> Vec<usize> {
    let mut digits = vec![0; count];
    for d in digits.iter_mut().rev() {
        *d = key % keyspace;
        key /= keyspace;
    }
    digits
}
