//! One hidden layer MLP with tanh units and hand-written backpropagation.
//!
//! Inputs are either dense feature vectors or sparse bag-of-words vectors
//! embedded through a selectable embedding table (`emb`, one row per
//! vocabulary entry, summed). The hidden layer is `w1: fan_in x h`, `b1: h`,
//! `w2: h x c`, which is exactly what a neuron select plan slices; `b2` is
//! broadcast.

use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::data::{DenseExample, Labelled, SparseExample};
use crate::error::{shape_err, Error, Result};
use crate::models::objective::Objective;
use crate::seeds::SimRng;
use crate::selection::{BlockRole, BlockedParams};

pub const EMBEDDING: &str = "emb";
pub const W1: &str = "w1";
pub const B1: &str = "b1";
pub const W2: &str = "w2";
pub const B2: &str = "b2";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MlpHead {
    /// Softmax cross-entropy over exclusive classes.
    Softmax,
    /// Independent sigmoid cross-entropy per output (multi-label).
    Sigmoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MlpInput {
    Dense { dim: usize },
    SparseEmbedding { vocab: usize, embed: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpModel {
    pub input: MlpInput,
    pub hidden: usize,
    pub outputs: usize,
    pub head: MlpHead,
}

impl MlpModel {
    pub fn new(input: MlpInput, hidden: usize, outputs: usize, head: MlpHead) -> Result<Self> {
        let dims_ok = match input {
            MlpInput::Dense { dim } => dim > 0,
            MlpInput::SparseEmbedding { vocab, embed } => vocab > 0 && embed > 0,
        };
        if !dims_ok || hidden == 0 || outputs == 0 {
            return Err(Error::BadConfig("mlp dimensions must be positive".into()));
        }
        Ok(MlpModel {
            input,
            hidden,
            outputs,
            head,
        })
    }

    /// Width of the vector feeding the hidden layer.
    pub fn fan_in(&self) -> usize {
        match self.input {
            MlpInput::Dense { dim } => dim,
            MlpInput::SparseEmbedding { embed, .. } => embed,
        }
    }

    pub fn layout(&self) -> BlockedParams {
        let mut p = BlockedParams::new();
        if let MlpInput::SparseEmbedding { vocab, embed } = self.input {
            p.push_block(
                EMBEDDING,
                &[vocab, embed],
                BlockRole::Selectable,
                vec![0.0; vocab * embed],
            )
            .expect("fresh layout");
        }
        p.with_zeros(W1, &[self.fan_in(), self.hidden], BlockRole::Selectable)
            .and_then(|p| p.with_zeros(B1, &[self.hidden], BlockRole::Selectable))
            .and_then(|p| p.with_zeros(W2, &[self.hidden, self.outputs], BlockRole::Selectable))
            .and_then(|p| p.with_zeros(B2, &[self.outputs], BlockRole::Broadcast))
            .expect("fresh layout has unique block names")
    }

    /// Glorot-uniform weights, small uniform embeddings, zero biases.
    pub fn init(&self, rng: &mut SimRng) -> BlockedParams {
        let mut p = self.layout();
        let mut fill = |p: &mut BlockedParams, name: &str, limit: f64| {
            let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
            for v in p.block_values_mut(name).expect("block exists") {
                *v = dist.sample(rng);
            }
        };
        if matches!(self.input, MlpInput::SparseEmbedding { .. }) {
            fill(&mut p, EMBEDDING, 0.1);
        }
        let (d, h, c) = (self.fan_in() as f64, self.hidden as f64, self.outputs as f64);
        fill(&mut p, W1, (6.0 / (d + h)).sqrt());
        fill(&mut p, W2, (6.0 / (h + c)).sqrt());
        p
    }

    /// Random parameters of the given scale, biases included; for tests.
    pub fn random(&self, rng: &mut SimRng, scale: f64) -> BlockedParams {
        let mut p = self.layout();
        for v in p.values_mut() {
            *v = rng.random_range(-scale..scale);
        }
        p
    }
}

/// Input side of an example as the MLP consumes it.
pub enum MlpInputRef<'a> {
    Dense(&'a [f64]),
    Sparse(&'a SparseExample),
}

pub trait MlpExample: Labelled + Clone + Send + Sync {
    fn mlp_input(&self) -> MlpInputRef<'_>;

    /// The example as seen through `view`: sparse features without an
    /// embedding row in the view are dropped.
    fn project(&self, view: &MlpView) -> Self;
}

impl MlpExample for DenseExample {
    fn mlp_input(&self) -> MlpInputRef<'_> {
        MlpInputRef::Dense(&self.features)
    }

    fn project(&self, _view: &MlpView) -> Self {
        self.clone()
    }
}

impl MlpExample for SparseExample {
    fn mlp_input(&self) -> MlpInputRef<'_> {
        MlpInputRef::Sparse(self)
    }

    fn project(&self, view: &MlpView) -> Self {
        self.restricted(|f| view.has_feature(f))
    }
}

#[derive(Debug, Clone, PartialEq)]
struct NeuronIdx {
    w_in: Vec<usize>,
    bias: usize,
    w_out: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
enum InputView {
    Dense { dim: usize },
    Sparse { rows: HashMap<usize, usize>, embed: usize },
}

/// Local positions of every parameter of the (sub-)network a client holds.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpView {
    input: InputView,
    neurons: Vec<NeuronIdx>,
    out_bias: usize,
    outputs: usize,
    head: MlpHead,
    len: usize,
}

impl MlpView {
    pub fn full(model: &MlpModel) -> Self {
        let layout = model.layout();
        let gather: Vec<usize> = (0..layout.len()).collect();
        Self::from_gather(model, &layout, &gather).expect("identity gather is a valid view")
    }

    /// View of a local vector whose entry `i` holds global coordinate
    /// `gather[i]`. A hidden unit is present when its bias is; its whole fan
    /// must then be present too. Units keep the order of their biases.
    pub fn from_gather(model: &MlpModel, layout: &BlockedParams, gather: &[usize]) -> Result<Self> {
        let local: HashMap<usize, usize> = gather.iter().enumerate().map(|(i, &g)| (g, i)).collect();
        if local.len() != gather.len() {
            return Err(shape_err("gather map repeats a coordinate"));
        }
        let find = |g: usize, what: &str| {
            local
                .get(&g)
                .copied()
                .ok_or_else(|| shape_err(format!("slice lacks {what}")))
        };
        let (d, h, c) = (model.fan_in(), model.hidden, model.outputs);
        let w1 = layout.block(W1)?;
        let b1 = layout.block(B1)?;
        let w2 = layout.block(W2)?;
        let b2 = layout.block(B2)?;
        if w1.len != d * h || b1.len != h || w2.len != h * c || b2.len != c {
            return Err(shape_err("layout does not match the mlp"));
        }

        let input = match model.input {
            MlpInput::Dense { dim } => InputView::Dense { dim },
            MlpInput::SparseEmbedding { vocab, embed } => {
                let emb = layout.block(EMBEDDING)?;
                if emb.len != vocab * embed {
                    return Err(shape_err("embedding block does not match the mlp"));
                }
                let mut rows = HashMap::new();
                for (i, &g) in gather.iter().enumerate() {
                    if emb.range().contains(&g) && (g - emb.offset) % embed == 0 {
                        if gather.len() < i + embed || (0..embed).any(|e| gather[i + e] != g + e) {
                            return Err(shape_err("embedding row is split in the slice"));
                        }
                        rows.insert((g - emb.offset) / embed, i);
                    }
                }
                InputView::Sparse { rows, embed }
            }
        };

        let mut neurons = Vec::new();
        for j in 0..h {
            let Some(&bias) = local.get(&(b1.offset + j)) else {
                continue;
            };
            let w_in = (0..d)
                .map(|i| find(w1.offset + i * h + j, "an input weight of a present unit"))
                .collect::<Result<Vec<_>>>()?;
            let w_out = (0..c)
                .map(|o| find(w2.offset + j * c + o, "an output weight of a present unit"))
                .collect::<Result<Vec<_>>>()?;
            neurons.push(NeuronIdx { w_in, bias, w_out });
        }
        neurons.sort_by_key(|n| n.bias);
        let out_bias = find(b2.offset, "the output bias")?;
        if (0..c).any(|o| local.get(&(b2.offset + o)) != Some(&(out_bias + o))) {
            return Err(shape_err("output bias is split in the slice"));
        }
        Ok(MlpView {
            input,
            neurons,
            out_bias,
            outputs: c,
            head: model.head,
            len: gather.len(),
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn active_units(&self) -> usize {
        self.neurons.len()
    }

    /// Whether the embedding row of feature `f` is present (always true for
    /// dense inputs).
    pub fn has_feature(&self, f: usize) -> bool {
        match &self.input {
            InputView::Dense { .. } => true,
            InputView::Sparse { rows, .. } => rows.contains_key(&f),
        }
    }

    fn hidden_input(&self, params: &[f64], x: MlpInputRef<'_>) -> Result<Vec<f64>> {
        match (&self.input, x) {
            (InputView::Dense { dim }, MlpInputRef::Dense(v)) => {
                if v.len() != *dim {
                    return Err(shape_err(format!("expected {dim} features, got {}", v.len())));
                }
                Ok(v.to_vec())
            }
            (InputView::Sparse { rows, embed }, MlpInputRef::Sparse(ex)) => {
                let mut a = vec![0.0; *embed];
                for (f, v) in ex.features() {
                    let row = *rows.get(&f).ok_or(Error::FeatureNotInSlice(f))?;
                    for (ai, w) in a.iter_mut().zip(&params[row..row + embed]) {
                        *ai += v * w;
                    }
                }
                Ok(a)
            }
            _ => Err(shape_err("example kind does not match the mlp input")),
        }
    }

    fn forward(&self, params: &[f64], x: MlpInputRef<'_>) -> Result<Forward> {
        if params.len() != self.len {
            return Err(shape_err(format!(
                "view expects {} parameters, got {}",
                self.len,
                params.len()
            )));
        }
        let a = self.hidden_input(params, x)?;
        let mut z = params[self.out_bias..self.out_bias + self.outputs].to_vec();
        let mut hidden = Vec::with_capacity(self.neurons.len());
        for n in &self.neurons {
            let mut pre = params[n.bias];
            for (ai, &wi) in a.iter().zip(&n.w_in) {
                pre += ai * params[wi];
            }
            let act = pre.tanh();
            for (zo, &wo) in z.iter_mut().zip(&n.w_out) {
                *zo += act * params[wo];
            }
            hidden.push(act);
        }
        Ok(Forward { a, hidden, z })
    }

    /// Output logits.
    pub fn scores(&self, params: &[f64], x: MlpInputRef<'_>) -> Result<Vec<f64>> {
        Ok(self.forward(params, x)?.z)
    }

    /// Loss of one example and `dL/dz`.
    fn head_loss(&self, z: &[f64], labels: &[usize]) -> Result<(f64, Vec<f64>)> {
        match self.head {
            MlpHead::Softmax => {
                let &[y] = labels else {
                    return Err(shape_err(format!(
                        "softmax head needs exactly one label, got {}",
                        labels.len()
                    )));
                };
                if y >= z.len() {
                    return Err(shape_err(format!("label {y} beyond {} outputs", z.len())));
                }
                let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let sum: f64 = z.iter().map(|v| (v - max).exp()).sum();
                let lse = max + sum.ln();
                let mut dz: Vec<f64> = z.iter().map(|v| (v - lse).exp()).collect();
                dz[y] -= 1.0;
                Ok((lse - z[y], dz))
            }
            MlpHead::Sigmoid => {
                let mut loss = 0.0;
                let mut dz = Vec::with_capacity(z.len());
                for (j, &zj) in z.iter().enumerate() {
                    let y = if labels.binary_search(&j).is_ok() { 1.0 } else { 0.0 };
                    loss += zj.max(0.0) + (-zj.abs()).exp().ln_1p() - y * zj;
                    let s = if zj >= 0.0 {
                        1.0 / (1.0 + (-zj).exp())
                    } else {
                        zj.exp() / (1.0 + zj.exp())
                    };
                    dz.push(s - y);
                }
                Ok((loss, dz))
            }
        }
    }
}

struct Forward {
    a: Vec<f64>,
    hidden: Vec<f64>,
    z: Vec<f64>,
}

/// Mean loss over the batch and its exact gradient for the sub-network the
/// view describes; absent units contribute nothing.
pub fn loss_and_grad_mlp<E: MlpExample>(params: &[f64], view: &MlpView, batch: &[&E]) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut grad = vec![0.0; view.len];
    let mut loss = 0.0;
    for ex in batch {
        let input = ex.mlp_input();
        let fwd = view.forward(params, ex.mlp_input())?;
        let (l, dz) = view.head_loss(&fwd.z, ex.target_labels())?;
        loss += l;
        for (g, d) in grad[view.out_bias..view.out_bias + view.outputs].iter_mut().zip(&dz) {
            *g += d;
        }
        let mut da = vec![0.0; fwd.a.len()];
        for (n, &act) in view.neurons.iter().zip(&fwd.hidden) {
            let mut dh = 0.0;
            for (&wo, d) in n.w_out.iter().zip(&dz) {
                grad[wo] += act * d;
                dh += params[wo] * d;
            }
            let dpre = dh * (1.0 - act * act);
            grad[n.bias] += dpre;
            for ((&wi, ai), dai) in n.w_in.iter().zip(&fwd.a).zip(da.iter_mut()) {
                grad[wi] += ai * dpre;
                *dai += params[wi] * dpre;
            }
        }
        if let (InputView::Sparse { rows, embed }, MlpInputRef::Sparse(sp)) = (&view.input, input) {
            for (f, v) in sp.features() {
                let row = rows[&f];
                for (g, dai) in grad[row..row + embed].iter_mut().zip(&da) {
                    *g += v * dai;
                }
            }
        }
    }
    let scale = 1.0 / batch.len() as f64;
    grad.iter_mut().for_each(|g| *g *= scale);
    Ok((loss * scale, grad))
}

/// A client's MLP loss; sparse examples are projected onto the embedding rows
/// the view carries.
#[derive(Debug, Clone)]
pub struct MlpObjective<E> {
    view: MlpView,
    examples: Vec<E>,
}

impl<E: MlpExample> MlpObjective<E> {
    pub fn projected(view: MlpView, examples: &[E]) -> Self {
        let examples = examples.iter().map(|e| e.project(&view)).collect();
        MlpObjective { view, examples }
    }

    pub fn view(&self) -> &MlpView {
        &self.view
    }
}

impl<E: MlpExample> Objective for MlpObjective<E> {
    fn num_params(&self) -> usize {
        self.view.len
    }

    fn num_examples(&self) -> usize {
        self.examples.len()
    }

    fn loss_and_grad(&self, params: &[f64], batch: &[usize]) -> Result<(f64, Vec<f64>)> {
        let refs: Vec<&E> = batch.iter().map(|&i| &self.examples[i]).collect();
        loss_and_grad_mlp(params, &self.view, &refs)
    }
}
