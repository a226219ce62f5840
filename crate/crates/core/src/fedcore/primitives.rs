use std::marker::PhantomData;

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::fedcore::values::{AtClients, AtServer, ClientId, CommLedger, KeySeq, ScalarCount, SelectKey};

/// A select function `psi` over a finite keyspace.
pub trait SelectFn {
    type Model;
    type Slice;

    fn keyspace(&self) -> usize;

    /// `psi(x, key)` for an in-range key.
    fn select(&self, x: &Self::Model, key: SelectKey) -> Result<Self::Slice>;
}

/// A deselect function `phi` onto a flat vector of length `output_len`.
pub trait Deselect {
    fn output_len(&self) -> usize;

    /// Adds `phi(update, key)` into `out`.
    fn deselect_into(&self, update: &[f64], key: SelectKey, out: &mut [f64]) -> Result<()>;

    /// Marks the coordinates written by `key`.
    fn mark_touched(&self, key: SelectKey, touched: &mut TouchedSet) -> Result<()>;
}

/// Coordinates written by one client's deselect, kept as a mask plus the
/// list of marked indices so clearing costs only what was marked.
#[derive(Debug, Clone)]
pub struct TouchedSet {
    mask: Vec<bool>,
    marked: Vec<usize>,
}

impl TouchedSet {
    pub fn new(len: usize) -> Self {
        TouchedSet {
            mask: vec![false; len],
            marked: Vec::new(),
        }
    }

    /// Panics if `i` is out of range, like slice indexing.
    pub fn mark(&mut self, i: usize) {
        if !self.mask[i] {
            self.mask[i] = true;
            self.marked.push(i);
        }
    }

    pub fn mark_range(&mut self, range: std::ops::Range<usize>) {
        for i in range {
            self.mark(i);
        }
    }

    pub fn contains(&self, i: usize) -> bool {
        self.mask[i]
    }

    /// Marked indices in marking order.
    pub fn indices(&self) -> &[usize] {
        &self.marked
    }

    pub fn clear(&mut self) {
        for &i in &self.marked {
            self.mask[i] = false;
        }
        self.marked.clear();
    }
}

/// Select function backed by a closure.
pub struct FnSelect<M, S, F> {
    keyspace: usize,
    f: F,
    _marker: PhantomData<fn(&M) -> S>,
}

impl<M, S, F: Fn(&M, SelectKey) -> S> FnSelect<M, S, F> {
    pub fn new(keyspace: usize, f: F) -> Self {
        FnSelect {
            keyspace,
            f,
            _marker: PhantomData,
        }
    }
}

impl<M, S, F: Fn(&M, SelectKey) -> S> SelectFn for FnSelect<M, S, F> {
    type Model = M;
    type Slice = S;

    fn keyspace(&self) -> usize {
        self.keyspace
    }

    fn select(&self, x: &M, key: SelectKey) -> Result<S> {
        Ok((self.f)(x, key))
    }
}

/// Sends the same server value to every cohort member and records `|x|`
/// scalars down per client.
pub fn broadcast<T: Clone + ScalarCount>(
    x: &AtServer<T>,
    cohort: &[ClientId],
    ledger: &mut CommLedger,
) -> Result<AtClients<T>> {
    if cohort.is_empty() {
        return Err(Error::EmptyCohort);
    }
    let per_client = x.0.scalar_count();
    let out = AtClients::new(cohort.to_vec(), vec![x.0.clone(); cohort.len()])?;
    ledger.record_down(per_client * cohort.len());
    Ok(out)
}

/// Elementwise mean of client vectors, summed in ascending client id order.
pub fn aggregate_mean<T: AsRef<[f64]>>(values: &AtClients<T>) -> Result<AtServer<Vec<f64>>> {
    if values.is_empty() {
        return Err(Error::EmptyCohort);
    }
    let order = values.ascending_order();
    let dim = values.values()[order[0]].as_ref().len();
    let mut sum = vec![0.0; dim];
    for &i in &order {
        let v = values.values()[i].as_ref();
        if v.len() != dim {
            return Err(shape_err(format!(
                "{} sent {} scalars, expected {dim}",
                values.cohort()[i],
                v.len()
            )));
        }
        for (s, x) in sum.iter_mut().zip(v) {
            *s += x;
        }
    }
    let n = values.len() as f64;
    Ok(AtServer(sum.into_iter().map(|s| s / n).collect()))
}

/// `{[psi(x, z_n1), ..., psi(x, z_nm)]}@C`, in each client's key order.
pub fn fed_select<P: SelectFn>(
    x: &AtServer<P::Model>,
    keys: &AtClients<KeySeq>,
    plan: &P,
) -> Result<AtClients<Vec<P::Slice>>> {
    validate_keys(keys, plan.keyspace())?;
    keys.try_map(|_, seq| seq.iter().map(|&k| plan.select(&x.0, k)).collect())
}

pub(crate) fn validate_keys(keys: &AtClients<KeySeq>, keyspace: usize) -> Result<()> {
    for (id, seq) in keys.iter() {
        if let Some(position) = seq.iter().position(|&k| k >= keyspace) {
            return Err(Error::KeyOutOfRange {
                client: id.0,
                position,
                key: seq[position],
                keyspace,
            });
        }
    }
    Ok(())
}

/// Denominator of the deselect mean.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeselectNormalization {
    /// Divide every coordinate by the cohort size `N`.
    #[default]
    Cohort,
    /// Divide each coordinate by the number of clients whose keys touched it.
    PerKeyCount,
}

/// Drives a deselect mean over `cohort`: `deselect(position, buf, touched)`
/// adds client `cohort[position]`'s `phi` into a zeroed buffer and must mark
/// every coordinate it writes. Clients are folded in ascending id order.
pub fn aggregate_mean_deselect_with<F>(
    cohort: &[ClientId],
    output_len: usize,
    normalization: DeselectNormalization,
    mut deselect: F,
) -> Result<Vec<f64>>
where
    F: FnMut(usize, &mut [f64], &mut TouchedSet) -> Result<()>,
{
    if cohort.is_empty() {
        return Err(Error::EmptyCohort);
    }
    let mut order: Vec<usize> = (0..cohort.len()).collect();
    order.sort_by_key(|&i| cohort[i]);

    let mut total = vec![0.0; output_len];
    let mut touch_count = vec![0usize; output_len];
    let mut buf = vec![0.0; output_len];
    let mut touched = TouchedSet::new(output_len);
    for &pos in &order {
        deselect(pos, &mut buf, &mut touched)?;
        // untouched coordinates would only add +0.0, which leaves the sum as is
        for &i in touched.indices() {
            total[i] += buf[i];
            touch_count[i] += 1;
            buf[i] = 0.0;
        }
        touched.clear();
    }
    match normalization {
        DeselectNormalization::Cohort => {
            let n = cohort.len() as f64;
            total.iter_mut().for_each(|t| *t /= n);
        }
        DeselectNormalization::PerKeyCount => {
            for (t, &c) in total.iter_mut().zip(&touch_count) {
                if c > 0 {
                    *t /= c as f64;
                }
            }
        }
    }
    Ok(total)
}

/// `(1/N) sum_n phi(u_n, z_n)` placed at the server.
pub fn aggregate_mean_deselect<D: Deselect>(
    updates: &AtClients<Vec<Vec<f64>>>,
    keys: &AtClients<KeySeq>,
    plan: &D,
    normalization: DeselectNormalization,
) -> Result<AtServer<Vec<f64>>> {
    if !updates.same_cohort(keys) {
        return Err(shape_err("updates and keys are placed on different cohorts"));
    }
    let total = aggregate_mean_deselect_with(
        updates.cohort(),
        plan.output_len(),
        normalization,
        |pos, buf, touched| {
            let slices = &updates.values()[pos];
            let seq = &keys.values()[pos];
            if slices.len() != seq.len() {
                return Err(shape_err(format!(
                    "{} sent {} slice updates for {} keys",
                    updates.cohort()[pos],
                    slices.len(),
                    seq.len()
                )));
            }
            for (u, &k) in slices.iter().zip(seq.iter()) {
                plan.deselect_into(u, k, buf)?;
                plan.mark_touched(k, touched)?;
            }
            Ok(())
        },
    )?;
    Ok(AtServer(total))
}
