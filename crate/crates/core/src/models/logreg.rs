//! Sparse one-vs-rest logistic regression over bag-of-words inputs.
//!
//! The weight matrix is stored transposed, one row of `t` tag weights per
//! vocabulary entry, so that a row select on block `w` hands a client exactly
//! the parameters its features touch.

use std::collections::HashMap;

use crate::data::SparseExample;
use crate::error::{shape_err, Error, Result};
use crate::models::objective::Objective;
use crate::selection::{BlockRole, BlockedParams};

pub const WEIGHTS: &str = "w";
pub const BIAS: &str = "b";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SparseLinearModel {
    pub vocab: usize,
    pub tags: usize,
}

impl SparseLinearModel {
    pub fn new(vocab: usize, tags: usize) -> Result<Self> {
        if vocab == 0 || tags == 0 {
            return Err(Error::BadConfig("vocabulary and tag count must be positive".into()));
        }
        Ok(SparseLinearModel { vocab, tags })
    }

    /// Zero-initialised parameters: `w` as `n x t` (selectable), `b` as `t`
    /// (broadcast).
    pub fn init(&self) -> BlockedParams {
        BlockedParams::new()
            .with_zeros(WEIGHTS, &[self.vocab, self.tags], BlockRole::Selectable)
            .and_then(|p| p.with_zeros(BIAS, &[self.tags], BlockRole::Broadcast))
            .expect("fresh layout has unique block names")
    }

    pub fn num_params(&self) -> usize {
        (self.vocab + 1) * self.tags
    }
}

/// Where each feature row and the bias live inside a (possibly sliced)
/// parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct LogregView {
    tags: usize,
    rows: HashMap<usize, usize>,
    bias: usize,
    len: usize,
}

impl LogregView {
    /// View of the full model.
    pub fn full(model: &SparseLinearModel) -> Self {
        LogregView {
            tags: model.tags,
            rows: (0..model.vocab).map(|f| (f, f * model.tags)).collect(),
            bias: model.vocab * model.tags,
            len: model.num_params(),
        }
    }

    /// View of a local vector whose entry `i` holds global coordinate
    /// `gather[i]` of `layout`. Feature rows may appear in any order but each
    /// must be contiguous; the bias must be present.
    pub fn from_gather(model: &SparseLinearModel, layout: &BlockedParams, gather: &[usize]) -> Result<Self> {
        let t = model.tags;
        let w = layout.block(WEIGHTS)?;
        let b = layout.block(BIAS)?;
        if w.len != model.vocab * t || b.len != t {
            return Err(shape_err("layout does not match the sparse linear model"));
        }
        let contiguous =
            |local: usize, global: usize| gather.len() >= local + t && (0..t).all(|j| gather[local + j] == global + j);
        let mut rows = HashMap::new();
        let mut bias = None;
        for (local, &g) in gather.iter().enumerate() {
            if w.range().contains(&g) && (g - w.offset) % t == 0 {
                if !contiguous(local, g) {
                    return Err(shape_err(format!(
                        "feature row {} is split in the slice",
                        (g - w.offset) / t
                    )));
                }
                rows.insert((g - w.offset) / t, local);
            } else if g == b.offset {
                if !contiguous(local, g) {
                    return Err(shape_err("bias is split in the slice"));
                }
                bias = Some(local);
            }
        }
        let bias = bias.ok_or_else(|| shape_err("slice carries no bias"))?;
        Ok(LogregView {
            tags: t,
            rows,
            bias,
            len: gather.len(),
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn has_feature(&self, f: usize) -> bool {
        self.rows.contains_key(&f)
    }

    fn row(&self, f: usize) -> Result<usize> {
        self.rows.get(&f).copied().ok_or(Error::FeatureNotInSlice(f))
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.len {
            return Err(shape_err(format!(
                "view expects {} parameters, got {}",
                self.len,
                params.len()
            )));
        }
        Ok(())
    }

    /// Per-tag logits `b_j + w_j . v`.
    pub fn scores(&self, params: &[f64], ex: &SparseExample) -> Result<Vec<f64>> {
        self.check_params(params)?;
        let mut z = params[self.bias..self.bias + self.tags].to_vec();
        for (f, v) in ex.features() {
            let row = self.row(f)?;
            for (zj, w) in z.iter_mut().zip(&params[row..row + self.tags]) {
                *zj += v * w;
            }
        }
        Ok(z)
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean over the batch of the summed per-tag binary cross-entropy, and its
/// gradient in the view's layout. Rows of features absent from every example
/// get an exactly zero gradient.
pub fn loss_and_grad_logreg(params: &[f64], view: &LogregView, batch: &[&SparseExample]) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let t = view.tags;
    let mut grad = vec![0.0; view.len];
    let mut loss = 0.0;
    let mut dz = vec![0.0; t];
    for ex in batch {
        let z = view.scores(params, ex)?;
        let labels = ex.labels();
        for (j, (&zj, d)) in z.iter().zip(dz.iter_mut()).enumerate() {
            let y = if labels.binary_search(&j).is_ok() { 1.0 } else { 0.0 };
            loss += softplus(zj) - y * zj;
            *d = sigmoid(zj) - y;
        }
        for (g, d) in grad[view.bias..view.bias + t].iter_mut().zip(&dz) {
            *g += d;
        }
        for (f, v) in ex.features() {
            let row = view.row(f)?;
            for (g, d) in grad[row..row + t].iter_mut().zip(&dz) {
                *g += v * d;
            }
        }
    }
    let scale = 1.0 / batch.len() as f64;
    grad.iter_mut().for_each(|g| *g *= scale);
    Ok((loss * scale, grad))
}

/// A client's logistic regression loss over its examples, projected onto the
/// features the view carries.
#[derive(Debug, Clone)]
pub struct LogregObjective {
    view: LogregView,
    examples: Vec<SparseExample>,
}

impl LogregObjective {
    /// Drops features the view does not carry.
    pub fn projected(view: LogregView, examples: &[SparseExample]) -> Self {
        let examples = examples.iter().map(|e| e.restricted(|f| view.has_feature(f))).collect();
        LogregObjective { view, examples }
    }

    /// Fails with `FeatureNotInSlice` if an example reaches outside the view.
    pub fn strict(view: LogregView, examples: &[SparseExample]) -> Result<Self> {
        for ex in examples {
            if let Some(&f) = ex.indices().iter().find(|&&f| !view.has_feature(f)) {
                return Err(Error::FeatureNotInSlice(f));
            }
        }
        Ok(LogregObjective {
            view,
            examples: examples.to_vec(),
        })
    }

    pub fn view(&self) -> &LogregView {
        &self.view
    }
}

impl Objective for LogregObjective {
    fn num_params(&self) -> usize {
        self.view.len
    }

    fn num_examples(&self) -> usize {
        self.examples.len()
    }

    fn loss_and_grad(&self, params: &[f64], batch: &[usize]) -> Result<(f64, Vec<f64>)> {
        let refs: Vec<&SparseExample> = batch.iter().map(|&i| &self.examples[i]).collect();
        loss_and_grad_logreg(params, &self.view, &refs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::objective::{grad_check, GradCheckConfig};
    use crate::seeds::SimRng;
    use crate::selection::SelectPlan;
    use rand::{Rng, SeedableRng};

    fn ex(idx: &[usize], labels: &[usize]) -> SparseExample {
        SparseExample::indicator(idx.to_vec(), labels.to_vec()).unwrap()
    }

    #[test]
    fn zero_model_single_tag() {
        let model = SparseLinearModel::new(2, 1).unwrap();
        let view = LogregView::full(&model);
        let (loss, grad) = loss_and_grad_logreg(&[0.0; 3], &view, &[&ex(&[0], &[0])]).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
        // w rows 0 and 1, then bias
        assert_eq!(grad, vec![-0.5, 0.0, -0.5]);
    }

    #[test]
    fn absent_features_get_zero_gradient() {
        let model = SparseLinearModel::new(6, 3).unwrap();
        let view = LogregView::full(&model);
        let mut rng = SimRng::seed_from_u64(5);
        let params: Vec<f64> = (0..model.num_params()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (_, grad) = loss_and_grad_logreg(&params, &view, &[&ex(&[1, 4], &[0, 2]), &ex(&[4], &[1])]).unwrap();
        for f in [0, 2, 3, 5] {
            assert!(grad[f * 3..f * 3 + 3].iter().all(|&g| g == 0.0));
        }
    }

    #[test]
    fn slice_view_requires_features() {
        let model = SparseLinearModel::new(5, 2).unwrap();
        let layout = model.init();
        let plan = SelectPlan::row_select(&layout, WEIGHTS).unwrap();
        let mut gather: Vec<usize> = [3, 1]
            .iter()
            .flat_map(|&k| plan.coords(k).unwrap())
            .map(|c| c.index)
            .collect();
        gather.extend(layout.block(BIAS).unwrap().range());
        let view = LogregView::from_gather(&model, &layout, &gather).unwrap();
        assert!(view.has_feature(3) && view.has_feature(1) && !view.has_feature(0));
        let params = vec![0.0; view.len()];
        assert_eq!(
            loss_and_grad_logreg(&params, &view, &[&ex(&[0, 1], &[0])]).unwrap_err(),
            Error::FeatureNotInSlice(0)
        );
        assert!(LogregObjective::strict(view.clone(), &[ex(&[2], &[0])]).is_err());
        let projected = LogregObjective::projected(view, &[ex(&[1, 2], &[0])]);
        assert_eq!(projected.examples[0].indices(), &[1]);
    }

    #[test]
    fn finite_differences_agree() {
        let model = SparseLinearModel::new(30, 4).unwrap();
        let view = LogregView::full(&model);
        let mut rng = SimRng::seed_from_u64(11);
        let params: Vec<f64> = (0..model.num_params()).map(|_| rng.random_range(-0.5..0.5)).collect();
        let batch = [ex(&[0, 3, 7, 29], &[1]), ex(&[3, 8], &[0, 3]), ex(&[12], &[2])];
        let refs: Vec<&SparseExample> = batch.iter().collect();
        let (_, grad) = loss_and_grad_logreg(&params, &view, &refs).unwrap();
        let report = grad_check(
            |p| loss_and_grad_logreg(p, &view, &refs).unwrap().0,
            &grad,
            &params,
            &GradCheckConfig::default(),
            &mut rng,
        );
        assert!(report.passed, "{report:?}");
        assert_eq!(report.coords_checked, 100);
    }
}
