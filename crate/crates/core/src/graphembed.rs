//! Relational graph-convolution node embeddings trained by link prediction.
//!
//! Each layer computes, for every node `v`,
//!
//! ```text
//! z_v = W_0 h_v + Σ_r Σ_{u ∈ N_r(v)} (1 / |N_r(v)|) W_r h_u
//! ```
//!
//! with a rectifier between layers and identity at the output, followed by
//! ℓ2 normalization. Messages flow along each relation and along its
//! inverse, so jobs aggregate their skills and skills aggregate their jobs.
//! Node inputs are free learned base embeddings.
//!
//! Edges are scored with a bilinear-diagonal decoder `s = Σ_i h_i r_i t_i`
//! over the normalized embeddings and trained with binary cross-entropy
//! against corrupted-tail negatives.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::embed::EmbeddingStore;
use crate::error::{Error, Result};
use crate::hash::keyed_rng;
use crate::kg::{KnowledgeGraph, Relation};

/// Message channels: each relation forwards and inverted.
pub const MESSAGE_CHANNELS: usize = 2 * Relation::ALL.len();

fn channel(relation: Relation, inverse: bool) -> usize {
    2 * relation.index() + usize::from(inverse)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphTrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub negatives_per_positive: usize,
    pub optimizer: Optimizer,
    /// Set by the pipeline from the global seed.
    #[serde(skip)]
    pub seed: u64,
    pub num_layers: usize,
    pub base_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
}

impl Default for GraphTrainConfig {
    fn default() -> Self {
        GraphTrainConfig {
            epochs: 15,
            learning_rate: 0.01,
            negatives_per_positive: 1,
            optimizer: Optimizer::Adam,
            seed: 0,
            num_layers: 2,
            base_dim: 64,
            hidden_dim: 256,
            output_dim: 500,
        }
    }
}

impl GraphTrainConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.epochs < 1 {
            errs.push("graph.epochs must be >= 1".to_string());
        }
        if !(self.learning_rate > 0.0) {
            errs.push(format!("graph.learning_rate must be > 0 (got {})", self.learning_rate));
        }
        if self.num_layers < 1 {
            errs.push("graph.num_layers must be >= 1".to_string());
        }
        for (name, v) in [
            ("base_dim", self.base_dim),
            ("hidden_dim", self.hidden_dim),
            ("output_dim", self.output_dim),
        ] {
            if v == 0 {
                errs.push(format!("graph.{name} must be >= 1"));
            }
        }
        errs
    }

    /// Input/output widths of each layer.
    fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.num_layers);
        let mut d_in = self.base_dim;
        for l in 0..self.num_layers {
            let d_out = if l + 1 == self.num_layers {
                self.output_dim
            } else {
                self.hidden_dim
            };
            dims.push((d_in, d_out));
            d_in = d_out;
        }
        dims
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RgcnLayer {
    pub self_weight: Array2<f64>,
    /// One matrix per message channel, each `d_in × d_out`.
    pub relation_weights: Vec<Array2<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelGraphModel {
    /// Row order of `base`.
    pub node_ids: Vec<String>,
    pub base: Array2<f64>,
    pub layers: Vec<RgcnLayer>,
    /// Decoder vectors, one row per relation.
    pub relation_vectors: Array2<f64>,
}

impl RelGraphModel {
    pub fn output_dim(&self) -> usize {
        self.relation_vectors.ncols()
    }

    fn tensors(&self) -> Vec<&Array2<f64>> {
        let mut out = vec![&self.base];
        for l in &self.layers {
            out.push(&l.self_weight);
            out.extend(l.relation_weights.iter());
        }
        out.push(&self.relation_vectors);
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut out = vec![&mut self.base];
        for l in &mut self.layers {
            out.push(&mut l.self_weight);
            out.extend(l.relation_weights.iter_mut());
        }
        out.push(&mut self.relation_vectors);
        out
    }

    fn zeros_like(&self) -> Self {
        let z = |a: &Array2<f64>| Array2::zeros(a.raw_dim());
        RelGraphModel {
            node_ids: self.node_ids.clone(),
            base: z(&self.base),
            layers: self
                .layers
                .iter()
                .map(|l| RgcnLayer {
                    self_weight: z(&l.self_weight),
                    relation_weights: l.relation_weights.iter().map(z).collect(),
                })
                .collect(),
            relation_vectors: z(&self.relation_vectors),
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = ModelFile::from(self);
        let text = serde_json::to_string(&file)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: ModelFile = serde_json::from_str(&text)?;
        file.into_model()
    }
}

#[derive(Serialize, Deserialize)]
struct MatrixFile {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl MatrixFile {
    fn from_array(a: &Array2<f64>) -> Self {
        MatrixFile {
            rows: a.nrows(),
            cols: a.ncols(),
            data: a.iter().copied().collect(),
        }
    }

    fn into_array(self) -> Result<Array2<f64>> {
        Array2::from_shape_vec((self.rows, self.cols), self.data)
            .map_err(|e| Error::OutOfRange(format!("bad matrix shape: {e}")))
    }
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    self_weight: MatrixFile,
    relation_weights: Vec<MatrixFile>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    node_ids: Vec<String>,
    base: MatrixFile,
    layers: Vec<LayerFile>,
    relation_vectors: MatrixFile,
}

impl From<&RelGraphModel> for ModelFile {
    fn from(m: &RelGraphModel) -> Self {
        ModelFile {
            node_ids: m.node_ids.clone(),
            base: MatrixFile::from_array(&m.base),
            layers: m
                .layers
                .iter()
                .map(|l| LayerFile {
                    self_weight: MatrixFile::from_array(&l.self_weight),
                    relation_weights: l.relation_weights.iter().map(MatrixFile::from_array).collect(),
                })
                .collect(),
            relation_vectors: MatrixFile::from_array(&m.relation_vectors),
        }
    }
}

impl ModelFile {
    fn into_model(self) -> Result<RelGraphModel> {
        Ok(RelGraphModel {
            node_ids: self.node_ids,
            base: self.base.into_array()?,
            layers: self
                .layers
                .into_iter()
                .map(|l| {
                    Ok(RgcnLayer {
                        self_weight: l.self_weight.into_array()?,
                        relation_weights: l
                            .relation_weights
                            .into_iter()
                            .map(MatrixFile::into_array)
                            .collect::<Result<_>>()?,
                    })
                })
                .collect::<Result<_>>()?,
            relation_vectors: self.relation_vectors.into_array()?,
        })
    }
}

fn uniform_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, fan_in: usize) -> Array2<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(-bound..=bound))
}

/// Seeded initialization; every parameter is drawn from `U(-b, b)` with
/// `b = 1/√fan_in`.
pub fn init_model(kg: &KnowledgeGraph, config: &GraphTrainConfig) -> Result<RelGraphModel> {
    if kg.nodes().is_empty() {
        return Err(Error::Empty("knowledge graph has no nodes".into()));
    }
    let errs = config.validate();
    if !errs.is_empty() {
        return Err(Error::InvalidConfig(errs));
    }
    let mut rng = keyed_rng(config.seed, "graph-init");
    let node_ids: Vec<String> = kg.nodes().iter().map(|n| n.id.clone()).collect();
    let base = uniform_matrix(&mut rng, node_ids.len(), config.base_dim, config.base_dim);
    let layers = config
        .layer_dims()
        .into_iter()
        .map(|(d_in, d_out)| RgcnLayer {
            self_weight: uniform_matrix(&mut rng, d_in, d_out, d_in),
            relation_weights: (0..MESSAGE_CHANNELS)
                .map(|_| uniform_matrix(&mut rng, d_in, d_out, d_in))
                .collect(),
        })
        .collect();
    let relation_vectors = uniform_matrix(
        &mut rng,
        Relation::ALL.len(),
        config.output_dim,
        config.output_dim,
    );
    Ok(RelGraphModel {
        node_ids,
        base,
        layers,
        relation_vectors,
    })
}

/// Mean-normalized sparse adjacency per message channel, in graph node order.
struct Adjacency {
    /// `(receiver, sender, 1/|N_r(receiver)|)`
    channels: Vec<Vec<(usize, usize, f64)>>,
}

impl Adjacency {
    fn new(kg: &KnowledgeGraph) -> Self {
        let mut lists: Vec<Vec<(usize, usize)>> = vec![Vec::new(); MESSAGE_CHANNELS];
        for e in kg.edges() {
            let s = kg.node_index(&e.source).expect("validated graph");
            let t = kg.node_index(&e.target).expect("validated graph");
            lists[channel(e.relation, false)].push((t, s));
            lists[channel(e.relation, true)].push((s, t));
        }
        let channels = lists
            .into_iter()
            .map(|list| {
                let mut deg: HashMap<usize, usize> = HashMap::new();
                for &(v, _) in &list {
                    *deg.entry(v).or_default() += 1;
                }
                list.into_iter()
                    .map(|(v, u)| (v, u, 1.0 / deg[&v] as f64))
                    .collect()
            })
            .collect();
        Adjacency { channels }
    }

    fn aggregate(&self, c: usize, h: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros(h.raw_dim());
        for &(v, u, coef) in &self.channels[c] {
            out.row_mut(v).scaled_add(coef, &h.row(u));
        }
        out
    }

    fn aggregate_transposed(&self, c: usize, g: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros(g.raw_dim());
        for &(v, u, coef) in &self.channels[c] {
            out.row_mut(u).scaled_add(coef, &g.row(v));
        }
        out
    }
}

struct Forward {
    /// Base rows gathered into graph order, model row per graph node.
    rows: Vec<usize>,
    inputs: Vec<Array2<f64>>,
    messages: Vec<Vec<Array2<f64>>>,
    pre: Vec<Array2<f64>>,
}

fn model_rows(kg: &KnowledgeGraph, model: &RelGraphModel) -> Result<Vec<usize>> {
    let index: HashMap<&str, usize> = model
        .node_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    kg.nodes()
        .iter()
        .map(|n| {
            index
                .get(n.id.as_str())
                .copied()
                .ok_or_else(|| Error::UnknownId(format!("{} (not in graph model)", n.id)))
        })
        .collect()
}

fn check_shapes(model: &RelGraphModel) -> Result<()> {
    let mut d = model.base.ncols();
    for l in &model.layers {
        if l.self_weight.nrows() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: l.self_weight.nrows(),
            });
        }
        if l.relation_weights.len() != MESSAGE_CHANNELS {
            return Err(Error::DimensionMismatch {
                expected: MESSAGE_CHANNELS,
                found: l.relation_weights.len(),
            });
        }
        for w in &l.relation_weights {
            if w.raw_dim() != l.self_weight.raw_dim() {
                return Err(Error::DimensionMismatch {
                    expected: l.self_weight.ncols(),
                    found: w.ncols(),
                });
            }
        }
        d = l.self_weight.ncols();
    }
    if model.relation_vectors.ncols() != d || model.relation_vectors.nrows() != Relation::ALL.len() {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: model.relation_vectors.ncols(),
        });
    }
    Ok(())
}

fn forward(kg: &KnowledgeGraph, adj: &Adjacency, model: &RelGraphModel) -> Result<Forward> {
    check_shapes(model)?;
    if model.layers.is_empty() {
        return Err(Error::Empty("graph model has no layers".into()));
    }
    let rows = model_rows(kg, model)?;
    let mut h = model.base.select(Axis(0), &rows);
    let mut inputs = Vec::with_capacity(model.layers.len());
    let mut messages = Vec::with_capacity(model.layers.len());
    let mut pre = Vec::with_capacity(model.layers.len());
    for (l, layer) in model.layers.iter().enumerate() {
        let msgs: Vec<Array2<f64>> = (0..MESSAGE_CHANNELS).map(|c| adj.aggregate(c, &h)).collect();
        let mut z = h.dot(&layer.self_weight);
        for (m, w) in msgs.iter().zip(&layer.relation_weights) {
            z += &m.dot(w);
        }
        let next = if l + 1 < model.layers.len() {
            z.mapv(|x| x.max(0.0))
        } else {
            z.clone()
        };
        inputs.push(std::mem::replace(&mut h, next));
        messages.push(msgs);
        pre.push(z);
    }
    Ok(Forward {
        rows,
        inputs,
        messages,
        pre,
    })
}

/// Pre-activations of every layer, rows in graph node order.
pub fn pre_activations(kg: &KnowledgeGraph, model: &RelGraphModel) -> Result<Vec<Array2<f64>>> {
    Ok(forward(kg, &Adjacency::new(kg), model)?.pre)
}

fn normalized_rows(z: &Array2<f64>) -> Result<(Array2<f64>, Array1<f64>)> {
    let norms = z.map_axis(Axis(1), |r| r.dot(&r).sqrt());
    if norms.iter().any(|&n| n == 0.0 || !n.is_finite()) {
        return Err(Error::ZeroNorm);
    }
    let h = z / &norms.view().insert_axis(Axis(1));
    Ok((h, norms))
}

/// Unit-norm output embedding per graph node, keyed by node id.
pub fn encode(kg: &KnowledgeGraph, model: &RelGraphModel) -> Result<EmbeddingStore> {
    let fwd = forward(kg, &Adjacency::new(kg), model)?;
    let (h, _) = normalized_rows(fwd.pre.last().expect("at least one layer"))?;
    let mut store = EmbeddingStore::new(model.output_dim())?;
    for (node, row) in kg.nodes().iter().zip(h.rows()) {
        store.insert(node.id.clone(), row.to_vec())?;
    }
    Ok(store)
}

/// Bilinear-diagonal score `Σ_i h_i r_i t_i`.
pub fn score_edge(h: &[f64], r: &[f64], t: &[f64]) -> Result<f64> {
    if h.len() != r.len() || t.len() != r.len() {
        return Err(Error::DimensionMismatch {
            expected: r.len(),
            found: if h.len() != r.len() { h.len() } else { t.len() },
        });
    }
    Ok(h.iter().zip(r).zip(t).map(|((a, b), c)| a * b * c).sum())
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy of a logit against a 0/1 label.
fn bce_with_logit(s: f64, y: f64) -> f64 {
    s.max(0.0) - s * y + (-s.abs()).exp().ln_1p()
}

/// A labeled triple over graph node indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triple {
    pub head: usize,
    pub relation: Relation,
    pub tail: usize,
    pub label: f64,
}

pub fn positive_triples(kg: &KnowledgeGraph) -> Vec<Triple> {
    kg.edges()
        .iter()
        .map(|e| Triple {
            head: kg.node_index(&e.source).expect("validated graph"),
            relation: e.relation,
            tail: kg.node_index(&e.target).expect("validated graph"),
            label: 1.0,
        })
        .collect()
}

/// For each positive, draw `per_positive` tails of the same node kind that
/// do not form a true edge. Positives with no valid corruption are skipped.
pub fn sample_negatives<R: Rng>(
    kg: &KnowledgeGraph,
    positives: &[Triple],
    per_positive: usize,
    rng: &mut R,
) -> Vec<Triple> {
    let truth: HashSet<(usize, Relation, usize)> =
        positives.iter().map(|t| (t.head, t.relation, t.tail)).collect();
    let nodes = kg.nodes();
    let mut by_kind: HashMap<_, Vec<usize>> = HashMap::new();
    for (i, n) in nodes.iter().enumerate() {
        by_kind.entry(n.kind).or_default().push(i);
    }
    let mut out = Vec::with_capacity(positives.len() * per_positive);
    for p in positives {
        let pool = &by_kind[&nodes[p.tail].kind];
        for _ in 0..per_positive {
            for _attempt in 0..64 {
                let cand = pool[rng.gen_range(0..pool.len())];
                if cand != p.head && !truth.contains(&(p.head, p.relation, cand)) {
                    out.push(Triple {
                        head: p.head,
                        relation: p.relation,
                        tail: cand,
                        label: 0.0,
                    });
                    break;
                }
            }
        }
    }
    out
}

/// Mean BCE over `triples` and its gradient with respect to every model
/// parameter.
pub fn loss_and_grad(
    kg: &KnowledgeGraph,
    model: &RelGraphModel,
    triples: &[Triple],
) -> Result<(f64, RelGraphModel)> {
    let adj = Adjacency::new(kg);
    loss_and_grad_with(kg, &adj, model, triples)
}

fn loss_and_grad_with(
    kg: &KnowledgeGraph,
    adj: &Adjacency,
    model: &RelGraphModel,
    triples: &[Triple],
) -> Result<(f64, RelGraphModel)> {
    if triples.is_empty() {
        return Err(Error::Empty("no triples to score".into()));
    }
    let fwd = forward(kg, adj, model)?;
    let z_out = fwd.pre.last().expect("at least one layer");
    let (h, norms) = normalized_rows(z_out)?;
    let mut grad = model.zeros_like();
    let mut dh = Array2::<f64>::zeros(h.raw_dim());
    let n = triples.len() as f64;
    let mut loss = 0.0;
    for t in triples {
        let r = model.relation_vectors.row(t.relation.index());
        let (hh, ht) = (h.row(t.head), h.row(t.tail));
        let s: f64 = hh.iter().zip(r.iter()).zip(ht.iter()).map(|((a, b), c)| a * b * c).sum();
        loss += bce_with_logit(s, t.label);
        let g = (sigmoid(s) - t.label) / n;
        let rt = &r * &ht;
        let rh = &r * &hh;
        let ht_h = &hh * &ht;
        dh.row_mut(t.head).scaled_add(g, &rt);
        dh.row_mut(t.tail).scaled_add(g, &rh);
        grad.relation_vectors
            .row_mut(t.relation.index())
            .scaled_add(g, &ht_h);
    }
    loss /= n;

    // through the row normalization
    let proj = (&h * &dh).sum_axis(Axis(1)).insert_axis(Axis(1));
    let mut dz = (&dh - &(&h * &proj)) / &norms.view().insert_axis(Axis(1));

    for l in (0..model.layers.len()).rev() {
        let input = &fwd.inputs[l];
        let layer = &model.layers[l];
        let gl = &mut grad.layers[l];
        gl.self_weight = input.t().dot(&dz);
        let mut dinput = dz.dot(&layer.self_weight.t());
        for c in 0..MESSAGE_CHANNELS {
            gl.relation_weights[c] = fwd.messages[l][c].t().dot(&dz);
            let back = dz.dot(&layer.relation_weights[c].t());
            dinput += &adj.aggregate_transposed(c, &back);
        }
        if l > 0 {
            let mask = fwd.pre[l - 1].mapv(|x| if x > 0.0 { 1.0 } else { 0.0 });
            dz = dinput * mask;
        } else {
            for (graph_row, &model_row) in fwd.rows.iter().enumerate() {
                grad.base
                    .row_mut(model_row)
                    .scaled_add(1.0, &dinput.row(graph_row));
            }
        }
    }
    Ok((loss, grad))
}

pub fn loss(kg: &KnowledgeGraph, model: &RelGraphModel, triples: &[Triple]) -> Result<f64> {
    Ok(loss_and_grad(kg, model, triples)?.0)
}

/// Max relative error between analytic gradients and central finite
/// differences over every parameter. Intended for tiny models.
pub fn gradient_check_graph(
    kg: &KnowledgeGraph,
    model: &RelGraphModel,
    triples: &[Triple],
    step: f64,
) -> Result<f64> {
    let adj = Adjacency::new(kg);
    let (_, grad) = loss_and_grad_with(kg, &adj, model, triples)?;
    let analytic: Vec<f64> = grad.tensors().iter().flat_map(|t| t.iter().copied()).collect();
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    let mut k = 0;
    let n_tensors = probe.tensors().len();
    for ti in 0..n_tensors {
        let len = probe.tensors()[ti].len();
        for j in 0..len {
            let orig = probe.tensors()[ti].as_slice().expect("standard layout")[j];
            let eval_at = |x: f64, probe: &mut RelGraphModel| -> Result<f64> {
                probe.tensors_mut()[ti].as_slice_mut().expect("standard layout")[j] = x;
                Ok(loss_and_grad_with(kg, &adj, probe, triples)?.0)
            };
            let plus = eval_at(orig + step, &mut probe)?;
            let minus = eval_at(orig - step, &mut probe)?;
            eval_at(orig, &mut probe)?;
            let numeric = (plus - minus) / (2.0 * step);
            worst = worst.max(relative_error(analytic[k], numeric));
            k += 1;
        }
    }
    Ok(worst)
}

/// `|a - b| / max(|a|, |b|)`, with an absolute floor of 1e-5 on the
/// denominator. A central difference with step 1e-6 on an O(1) loss cannot
/// resolve entries much below that to 1e-5 relative in f64, so they compare
/// absolutely instead.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-5)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphTrainReport {
    /// Loss of the initial model on the fixed evaluation triples.
    pub initial_loss: f64,
    /// Loss of the final model on the same triples.
    pub final_loss: f64,
    /// Training loss of each epoch, measured before its update.
    pub epoch_losses: Vec<f64>,
    pub positives: usize,
}

struct AdamState {
    m: RelGraphModel,
    v: RelGraphModel,
    t: i32,
}

fn apply_update(
    model: &mut RelGraphModel,
    grad: &RelGraphModel,
    lr: f64,
    adam: Option<&mut AdamState>,
) {
    match adam {
        None => {
            for (p, g) in model.tensors_mut().into_iter().zip(grad.tensors()) {
                p.scaled_add(-lr, g);
            }
        }
        Some(state) => {
            const B1: f64 = 0.9;
            const B2: f64 = 0.999;
            const EPS: f64 = 1e-8;
            state.t += 1;
            let c1 = 1.0 - B1.powi(state.t);
            let c2 = 1.0 - B2.powi(state.t);
            let params = model.tensors_mut();
            let ms = state.m.tensors_mut();
            let vs = state.v.tensors_mut();
            for (((p, g), m), v) in params.into_iter().zip(grad.tensors()).zip(ms).zip(vs) {
                ndarray::Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                    *m = B1 * *m + (1.0 - B1) * g;
                    *v = B2 * *v + (1.0 - B2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + EPS);
                });
            }
        }
    }
}

/// Full-batch training by link prediction. Negatives are resampled each
/// epoch; the reported initial and final losses share one fixed negative
/// set so they are comparable.
pub fn train_graph(
    kg: &KnowledgeGraph,
    config: &GraphTrainConfig,
) -> Result<(RelGraphModel, EmbeddingStore, GraphTrainReport)> {
    let positives = positive_triples(kg);
    if positives.is_empty() {
        return Err(Error::Empty("knowledge graph has no edges".into()));
    }
    let mut model = init_model(kg, config)?;
    let adj = Adjacency::new(kg);

    let mut fixed = positives.clone();
    fixed.extend(sample_negatives(
        kg,
        &positives,
        config.negatives_per_positive.max(1),
        &mut keyed_rng(config.seed, "graph-eval-negatives"),
    ));
    let initial_loss = loss_and_grad_with(kg, &adj, &model, &fixed)?.0;

    let mut rng = keyed_rng(config.seed, "graph-negatives");
    let mut adam = (config.optimizer == Optimizer::Adam).then(|| AdamState {
        m: model.zeros_like(),
        v: model.zeros_like(),
        t: 0,
    });
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut batch = positives.clone();
        batch.extend(sample_negatives(kg, &positives, config.negatives_per_positive, &mut rng));
        let (loss, grad) = loss_and_grad_with(kg, &adj, &model, &batch)?;
        log::debug!("graph epoch {}: loss {loss:.6}", epoch + 1);
        epoch_losses.push(loss);
        apply_update(&mut model, &grad, config.learning_rate, adam.as_mut());
    }
    let final_loss = loss_and_grad_with(kg, &adj, &model, &fixed)?.0;
    let table = encode(kg, &model)?;
    Ok((
        model,
        table,
        GraphTrainReport {
            initial_loss,
            final_loss,
            epoch_losses,
            positives: positives.len(),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::l2_norm;
    use crate::kg::{KgEdge, KgNode, NodeKind};

    fn node(id: &str, kind: NodeKind) -> KgNode {
        KgNode {
            id: id.into(),
            kind,
            label: id.into(),
        }
    }

    fn has(j: &str, s: &str) -> KgEdge {
        KgEdge {
            source: j.into(),
            target: s.into(),
            relation: Relation::HasSkill,
            weight: 0.7,
        }
    }

    fn tiny_config(layers: usize, d: usize) -> GraphTrainConfig {
        GraphTrainConfig {
            num_layers: layers,
            base_dim: d,
            hidden_dim: d,
            output_dim: d,
            seed: 5,
            ..Default::default()
        }
    }

    fn toy_graph() -> KnowledgeGraph {
        let mut nodes = Vec::new();
        for i in 0..4 {
            nodes.push(node(&format!("job:j{i}"), NodeKind::Job));
            nodes.push(node(&format!("skill:s{i}"), NodeKind::Skill));
        }
        let edges = vec![
            has("job:j0", "skill:s0"),
            has("job:j0", "skill:s1"),
            has("job:j1", "skill:s0"),
            has("job:j1", "skill:s1"),
            has("job:j2", "skill:s2"),
            has("job:j2", "skill:s3"),
            has("job:j3", "skill:s2"),
            has("job:j3", "skill:s3"),
        ];
        KnowledgeGraph::from_parts(nodes, edges).unwrap()
    }

    #[test]
    fn init_is_seeded_shaped_and_bounded() {
        let g = toy_graph();
        let cfg = GraphTrainConfig::default();
        let a = init_model(&g, &cfg).unwrap();
        assert_eq!(a, init_model(&g, &cfg).unwrap());
        assert_eq!(a.base.dim(), (8, 64));
        assert_eq!(a.layers[0].self_weight.dim(), (64, 256));
        assert_eq!(a.layers[1].self_weight.dim(), (256, 500));
        for l in &a.layers {
            assert_eq!(l.relation_weights.len(), MESSAGE_CHANNELS);
            let bound = 1.0 / (l.self_weight.nrows() as f64).sqrt();
            for w in std::iter::once(&l.self_weight).chain(&l.relation_weights) {
                assert!(w.iter().all(|x| x.is_finite() && x.abs() <= bound));
            }
        }
        assert_eq!(a.relation_vectors.dim(), (2, 500));
        let empty = KnowledgeGraph::from_parts(vec![], vec![]).unwrap();
        assert!(init_model(&empty, &cfg).is_err());
    }

    #[test]
    fn single_edge_pre_activation_by_hand() {
        let nodes = vec![node("job:a", NodeKind::Job), node("skill:b", NodeKind::Skill)];
        let g = KnowledgeGraph::from_parts(nodes, vec![has("job:a", "skill:b")]).unwrap();
        let model = init_model(&g, &tiny_config(1, 4)).unwrap();
        let z = &pre_activations(&g, &model).unwrap()[0];
        let l = &model.layers[0];
        let (ha, hb) = (model.base.row(0), model.base.row(1));
        // hand-rolled matrix-vector products
        for k in 0..4 {
            let mut want_b = 0.0;
            let mut want_a = 0.0;
            for i in 0..4 {
                want_b += l.relation_weights[channel(Relation::HasSkill, false)][[i, k]] * ha[i]
                    + l.self_weight[[i, k]] * hb[i];
                want_a += l.relation_weights[channel(Relation::HasSkill, true)][[i, k]] * hb[i]
                    + l.self_weight[[i, k]] * ha[i];
            }
            assert!((z[[1, k]] - want_b).abs() < 1e-14);
            assert!((z[[0, k]] - want_a).abs() < 1e-14);
        }
    }

    #[test]
    fn isolated_node_uses_self_loop_only() {
        let nodes = vec![
            node("job:a", NodeKind::Job),
            node("job:lonely", NodeKind::Job),
            node("skill:b", NodeKind::Skill),
        ];
        let g = KnowledgeGraph::from_parts(nodes, vec![has("job:a", "skill:b")]).unwrap();
        let model = init_model(&g, &tiny_config(2, 4)).unwrap();
        let table = encode(&g, &model).unwrap();
        let h0 = model.base.row(1).to_owned();
        let h1 = h0.dot(&model.layers[0].self_weight).mapv(|x| x.max(0.0));
        let mut z = h1.dot(&model.layers[1].self_weight).to_vec();
        crate::embed::normalize(&mut z).unwrap();
        for (a, b) in z.iter().zip(table.get("job:lonely").unwrap()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn relabeling_nodes_preserves_embeddings() {
        let g = toy_graph();
        let model = init_model(&g, &tiny_config(2, 6)).unwrap();
        let table = encode(&g, &model).unwrap();
        // reverse the sort order of ids
        let rename = |id: &str| {
            let (kind, rest) = id.split_once(':').unwrap();
            let n: u32 = rest[1..].parse().unwrap();
            format!("{kind}:z{}", 9 - n)
        };
        let nodes: Vec<KgNode> = g
            .nodes()
            .iter()
            .map(|n| KgNode { id: rename(&n.id), ..n.clone() })
            .collect();
        let edges: Vec<KgEdge> = g
            .edges()
            .iter()
            .map(|e| KgEdge { source: rename(&e.source), target: rename(&e.target), ..e.clone() })
            .collect();
        let g2 = KnowledgeGraph::from_parts(nodes, edges).unwrap();
        let mut m2 = model.clone();
        m2.node_ids = model.node_ids.iter().map(|id| rename(id)).collect();
        let t2 = encode(&g2, &m2).unwrap();
        for (id, v) in table.iter() {
            for (a, b) in v.iter().zip(t2.get(&rename(id)).unwrap()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn score_edge_examples() {
        assert_eq!(score_edge(&[1.0, 0.0], &[1.0, 1.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(score_edge(&[0.3, -2.0], &[0.0, 0.0], &[5.0, 1.0]).unwrap(), 0.0);
        assert!(score_edge(&[1.0], &[1.0, 1.0], &[1.0, 1.0]).is_err());
        // values from an exact rational evaluation
        let h = [0.5, -1.25, 2.0, 0.125, -3.0];
        let r = [1.5, 0.5, -0.25, 4.0, 1.0];
        let t = [2.0, 1.0, 1.0, -2.0, 0.5];
        // 1.5 - 0.625 - 0.5 - 1.0 - 1.5
        assert!((score_edge(&h, &r, &t).unwrap() - (-2.125)).abs() < 1e-12);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let nodes = vec![node("job:a", NodeKind::Job), node("skill:b", NodeKind::Skill)];
        let g = KnowledgeGraph::from_parts(nodes, vec![has("job:a", "skill:b")]).unwrap();
        let model = init_model(&g, &tiny_config(2, 4)).unwrap();
        let triples = vec![
            Triple { head: 0, relation: Relation::HasSkill, tail: 1, label: 1.0 },
            Triple { head: 1, relation: Relation::SubskillOf, tail: 0, label: 0.0 },
        ];
        let err = gradient_check_graph(&g, &model, &triples, 1e-6).unwrap();
        assert!(err < 1e-5, "max rel err {err}");
    }

    #[test]
    fn zero_step_and_zero_gradient_leave_loss_unchanged() {
        let g = toy_graph();
        let mut model = init_model(&g, &tiny_config(2, 4)).unwrap();
        let triples = positive_triples(&g);
        let (l0, grad) = loss_and_grad(&g, &model, &triples).unwrap();
        apply_update(&mut model, &grad, 0.0, None);
        assert_eq!(loss(&g, &model, &triples).unwrap(), l0);
        // a base row of a node outside every triple and neighborhood has zero gradient
        let nodes = vec![
            node("job:a", NodeKind::Job),
            node("job:x", NodeKind::Job),
            node("skill:b", NodeKind::Skill),
        ];
        let g = KnowledgeGraph::from_parts(nodes, vec![has("job:a", "skill:b")]).unwrap();
        let mut model = init_model(&g, &tiny_config(2, 4)).unwrap();
        let triples = vec![Triple { head: 0, relation: Relation::HasSkill, tail: 2, label: 1.0 }];
        let (l0, grad) = loss_and_grad(&g, &model, &triples).unwrap();
        assert!(grad.base.row(1).iter().all(|&x| x == 0.0));
        model.base.row_mut(1).mapv_inplace(|x| 2.0 * x);
        assert!((loss(&g, &model, &triples).unwrap() - l0).abs() < 1e-12);
    }

    #[test]
    fn training_reduces_loss_and_separates_edges() {
        let g = toy_graph();
        let cfg = GraphTrainConfig { seed: 42, ..Default::default() };
        let (model, table, report) = train_graph(&g, &cfg).unwrap();
        assert_eq!(report.epoch_losses.len(), 15);
        assert!(report.final_loss < report.initial_loss, "{report:?}");
        for (_, v) in table.iter() {
            assert!((l2_norm(v) - 1.0).abs() < 1e-9);
        }
        let (model2, _, _) = train_graph(&g, &cfg).unwrap();
        assert_eq!(model, model2);

        let pos = positive_triples(&g);
        let neg = sample_negatives(&g, &pos, 1, &mut keyed_rng(3, "t"));
        let mean = |ts: &[Triple]| {
            ts.iter()
                .map(|t| {
                    score_edge(
                        table.get(&g.nodes()[t.head].id).unwrap(),
                        model.relation_vectors.row(t.relation.index()).as_slice().unwrap(),
                        table.get(&g.nodes()[t.tail].id).unwrap(),
                    )
                    .unwrap()
                })
                .sum::<f64>()
                / ts.len() as f64
        };
        assert!(mean(&pos) > mean(&neg));
        let empty = KnowledgeGraph::from_parts(vec![node("job:a", NodeKind::Job)], vec![]).unwrap();
        assert!(train_graph(&empty, &cfg).is_err());
    }

    #[test]
    fn model_file_round_trip() {
        let g = toy_graph();
        let model = init_model(&g, &tiny_config(2, 3)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        model.save(&p).unwrap();
        assert_eq!(RelGraphModel::load(&p).unwrap(), model);
    }
}
