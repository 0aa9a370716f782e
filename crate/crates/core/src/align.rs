//! Feed-forward map from text embeddings into the graph embedding space.
//!
//! One hidden rectifier layer, ℓ2-normalized output. Training minimizes the
//! mean squared error between the normalized prediction and the normalized
//! target, averaged over batch rows and output dimensions.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::embed::{str_score, TextEmbedder};
use crate::error::{Error, Result};
use crate::graphembed::Optimizer;
use crate::hash::keyed_rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlignTrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub hidden_dim: usize,
    pub patience: usize,
    /// Share of training pairs held out for best-model selection.
    pub validation_fraction: f64,
    pub optimizer: Optimizer,
    /// Set by the pipeline from the global seed.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for AlignTrainConfig {
    fn default() -> Self {
        AlignTrainConfig {
            epochs: 50,
            learning_rate: 1e-3,
            batch_size: 32,
            hidden_dim: 1024,
            patience: 5,
            validation_fraction: 0.1,
            optimizer: Optimizer::Sgd,
            seed: 0,
        }
    }
}

impl AlignTrainConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.epochs < 1 {
            errs.push("align.epochs must be >= 1".to_string());
        }
        if !(self.learning_rate > 0.0) {
            errs.push(format!("align.learning_rate must be > 0 (got {})", self.learning_rate));
        }
        if self.batch_size < 1 {
            errs.push("align.batch_size must be >= 1".to_string());
        }
        if self.hidden_dim < 1 {
            errs.push("align.hidden_dim must be >= 1".to_string());
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            errs.push(format!(
                "align.validation_fraction must lie in [0, 1) (got {})",
                self.validation_fraction
            ));
        }
        errs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentModel {
    pub seed: u64,
    /// `input × hidden`
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    /// `hidden × output`
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

impl AlignmentModel {
    pub fn input_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.w2.ncols()
    }

    /// PyTorch-style init: weights and biases of each layer drawn from
    /// `U(-1/√fan_in, 1/√fan_in)`.
    pub fn init(input: usize, hidden: usize, output: usize, seed: u64) -> Self {
        let mut rng = keyed_rng(seed, "align-init");
        let mut draw = |rows: usize, cols: usize, fan_in: usize| {
            let b = 1.0 / (fan_in as f64).sqrt();
            Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(-b..=b))
        };
        let w1 = draw(input, hidden, input);
        let b1 = draw(1, hidden, input).remove_axis(Axis(0));
        let w2 = draw(hidden, output, hidden);
        let b2 = draw(1, output, hidden).remove_axis(Axis(0));
        AlignmentModel { seed, w1, b1, w2, b2 }
    }

    pub fn zeros(input: usize, hidden: usize, output: usize) -> Self {
        AlignmentModel {
            seed: 0,
            w1: Array2::zeros((input, hidden)),
            b1: Array1::zeros(hidden),
            w2: Array2::zeros((hidden, output)),
            b2: Array1::zeros(output),
        }
    }

    fn params_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.w1.as_slice_mut().expect("standard layout"),
            self.b1.as_slice_mut().expect("standard layout"),
            self.w2.as_slice_mut().expect("standard layout"),
            self.b2.as_slice_mut().expect("standard layout"),
        ]
    }

    fn params(&self) -> [&[f64]; 4] {
        [
            self.w1.as_slice().expect("standard layout"),
            self.b1.as_slice().expect("standard layout"),
            self.w2.as_slice().expect("standard layout"),
            self.b2.as_slice().expect("standard layout"),
        ]
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(&CheckpointFile::from(self))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: CheckpointFile = serde_json::from_str(&text)?;
        file.into_model()
    }
}

/// On-disk checkpoint: dimensions, seed and row-major parameter arrays.
#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    input_dim: usize,
    hidden_dim: usize,
    output_dim: usize,
    seed: u64,
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
}

impl From<&AlignmentModel> for CheckpointFile {
    fn from(m: &AlignmentModel) -> Self {
        CheckpointFile {
            input_dim: m.input_dim(),
            hidden_dim: m.hidden_dim(),
            output_dim: m.output_dim(),
            seed: m.seed,
            w1: m.w1.iter().copied().collect(),
            b1: m.b1.to_vec(),
            w2: m.w2.iter().copied().collect(),
            b2: m.b2.to_vec(),
        }
    }
}

impl CheckpointFile {
    fn into_model(self) -> Result<AlignmentModel> {
        let shape_err = |e: ndarray::ShapeError| Error::OutOfRange(format!("checkpoint shape: {e}"));
        let model = AlignmentModel {
            seed: self.seed,
            w1: Array2::from_shape_vec((self.input_dim, self.hidden_dim), self.w1).map_err(shape_err)?,
            b1: Array1::from(self.b1),
            w2: Array2::from_shape_vec((self.hidden_dim, self.output_dim), self.w2).map_err(shape_err)?,
            b2: Array1::from(self.b2),
        };
        if model.b1.len() != self.hidden_dim || model.b2.len() != self.output_dim {
            return Err(Error::OutOfRange("checkpoint bias length mismatch".into()));
        }
        Ok(model)
    }
}

struct Cache {
    z1: Array2<f64>,
    a1: Array2<f64>,
    y: Array2<f64>,
    norms: Array1<f64>,
}

fn forward(model: &AlignmentModel, x: ArrayView2<f64>) -> Result<Cache> {
    if x.ncols() != model.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim(),
            found: x.ncols(),
        });
    }
    let z1 = x.dot(&model.w1) + &model.b1;
    let a1 = z1.mapv(|v| v.max(0.0));
    let z2 = a1.dot(&model.w2) + &model.b2;
    let norms = z2.map_axis(Axis(1), |r| r.dot(&r).sqrt());
    if norms.iter().any(|&n| n == 0.0 || !n.is_finite()) {
        return Err(Error::ZeroNorm);
    }
    let y = z2 / &norms.view().insert_axis(Axis(1));
    Ok(Cache { z1, a1, y, norms })
}

/// Map one text embedding into the graph space (unit norm).
pub fn map_text_to_graph(text_emb: &[f64], model: &AlignmentModel) -> Result<Vec<f64>> {
    let x = ArrayView2::from_shape((1, text_emb.len()), text_emb)
        .map_err(|e| Error::OutOfRange(e.to_string()))?;
    Ok(forward(model, x)?.y.row(0).to_vec())
}

/// Map many text embeddings (rows) at once.
pub fn map_batch(x: ArrayView2<f64>, model: &AlignmentModel) -> Result<Array2<f64>> {
    Ok(forward(model, x)?.y)
}

fn mse(y: &Array2<f64>, t: ArrayView2<f64>) -> f64 {
    let d = y - &t;
    d.mapv(|v| v * v).mean().unwrap_or(0.0)
}

/// MSE of the normalized prediction against `targets` and its gradient.
pub fn loss_and_grad(
    model: &AlignmentModel,
    x: ArrayView2<f64>,
    targets: ArrayView2<f64>,
) -> Result<(f64, AlignmentModel)> {
    let c = forward(model, x)?;
    if targets.dim() != c.y.dim() {
        return Err(Error::DimensionMismatch {
            expected: c.y.ncols(),
            found: targets.ncols(),
        });
    }
    let loss = mse(&c.y, targets);
    let scale = 2.0 / c.y.len() as f64;
    let dy = (&c.y - &targets) * scale;
    let proj = (&c.y * &dy).sum_axis(Axis(1)).insert_axis(Axis(1));
    let dz2 = (&dy - &(&c.y * &proj)) / &c.norms.view().insert_axis(Axis(1));
    let dw2 = c.a1.t().dot(&dz2);
    let db2 = dz2.sum_axis(Axis(0));
    let mut dz1 = dz2.dot(&model.w2.t());
    ndarray::Zip::from(&mut dz1).and(&c.z1).for_each(|g, &z| {
        if z <= 0.0 {
            *g = 0.0;
        }
    });
    let dw1 = x.t().dot(&dz1);
    let db1 = dz1.sum_axis(Axis(0));
    Ok((
        loss,
        AlignmentModel {
            seed: model.seed,
            w1: dw1,
            b1: db1,
            w2: dw2,
            b2: db2,
        },
    ))
}

/// Max relative error of analytic gradients against central differences.
pub fn gradient_check_alignment(
    model: &AlignmentModel,
    x: ArrayView2<f64>,
    targets: ArrayView2<f64>,
    step: f64,
) -> Result<f64> {
    let (_, grad) = loss_and_grad(model, x, targets)?;
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for p in 0..4 {
        for j in 0..grad.params()[p].len() {
            let orig = probe.params()[p][j];
            probe.params_mut()[p][j] = orig + step;
            let plus = loss_and_grad(&probe, x, targets)?.0;
            probe.params_mut()[p][j] = orig - step;
            let minus = loss_and_grad(&probe, x, targets)?.0;
            probe.params_mut()[p][j] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            worst = worst.max(crate::graphembed::relative_error(grad.params()[p][j], numeric));
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignTrainReport {
    pub train_size: usize,
    pub validation_size: usize,
    pub initial_validation_mse: f64,
    pub best_validation_mse: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub train_mse: Vec<f64>,
    pub validation_mse: Vec<f64>,
}

struct Adam {
    m: AlignmentModel,
    v: AlignmentModel,
    t: i32,
}

fn step(model: &mut AlignmentModel, grad: &AlignmentModel, lr: f64, adam: Option<&mut Adam>) {
    match adam {
        None => {
            for (p, g) in model.params_mut().into_iter().zip(grad.params()) {
                p.iter_mut().zip(g).for_each(|(p, g)| *p -= lr * g);
            }
        }
        Some(state) => {
            const B1: f64 = 0.9;
            const B2: f64 = 0.999;
            const EPS: f64 = 1e-8;
            state.t += 1;
            let c1 = 1.0 - B1.powi(state.t);
            let c2 = 1.0 - B2.powi(state.t);
            let ps = model.params_mut();
            let ms = state.m.params_mut();
            let vs = state.v.params_mut();
            for (((p, g), m), v) in ps.into_iter().zip(grad.params()).zip(ms).zip(vs) {
                for i in 0..p.len() {
                    m[i] = B1 * m[i] + (1.0 - B1) * g[i];
                    v[i] = B2 * v[i] + (1.0 - B2) * g[i] * g[i];
                    p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + EPS);
                }
            }
        }
    }
}

fn stack(rows: &[&[f64]], dim: usize) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((rows.len(), dim));
    for (i, r) in rows.iter().enumerate() {
        if r.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: r.len(),
            });
        }
        out.row_mut(i).assign(&ndarray::ArrayView1::from(*r));
    }
    Ok(out)
}

/// Mini-batch training with best-validation selection and early stopping.
/// `pairs` holds `(text embedding, graph embedding)`; targets are
/// normalized before use. A seeded share of the pairs is held out for
/// validation (all pairs validate when that share rounds to zero).
pub fn train_alignment(
    pairs: &[(Vec<f64>, Vec<f64>)],
    config: &AlignTrainConfig,
) -> Result<(AlignmentModel, AlignTrainReport)> {
    if pairs.is_empty() {
        return Err(Error::Empty("alignment training set".into()));
    }
    let errs = config.validate();
    if !errs.is_empty() {
        return Err(Error::InvalidConfig(errs));
    }
    let in_dim = pairs[0].0.len();
    let out_dim = pairs[0].1.len();
    let xs: Vec<&[f64]> = pairs.iter().map(|p| p.0.as_slice()).collect();
    let ts: Vec<&[f64]> = pairs.iter().map(|p| p.1.as_slice()).collect();
    let x = stack(&xs, in_dim)?;
    let mut t = stack(&ts, out_dim)?;
    for mut row in t.rows_mut() {
        let n = row.dot(&row).sqrt();
        if n == 0.0 {
            return Err(Error::ZeroNorm);
        }
        row /= n;
    }

    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.shuffle(&mut keyed_rng(config.seed, "align-validation"));
    let n_val = ((pairs.len() as f64) * config.validation_fraction).round() as usize;
    let n_val = n_val.min(pairs.len() - 1);
    let (val_idx, train_idx) = if n_val == 0 {
        (order.clone(), order)
    } else {
        let (v, tr) = order.split_at(n_val);
        let (mut v, mut tr) = (v.to_vec(), tr.to_vec());
        v.sort_unstable();
        tr.sort_unstable();
        (v, tr)
    };
    let xv = x.select(Axis(0), &val_idx);
    let tv = t.select(Axis(0), &val_idx);

    let mut model = AlignmentModel::init(in_dim, config.hidden_dim, out_dim, config.seed);
    let val_mse = |m: &AlignmentModel| -> Result<f64> { Ok(mse(&map_batch(xv.view(), m)?, tv.view())) };
    let initial = val_mse(&model)?;
    let mut best = (model.clone(), initial, 0usize);
    let mut adam = (config.optimizer == Optimizer::Adam).then(|| Adam {
        m: AlignmentModel::zeros(in_dim, config.hidden_dim, out_dim),
        v: AlignmentModel::zeros(in_dim, config.hidden_dim, out_dim),
        t: 0,
    });
    let mut rng = keyed_rng(config.seed, "align-batches");
    let mut shuffled = train_idx.clone();
    let mut report = AlignTrainReport {
        train_size: train_idx.len(),
        validation_size: val_idx.len(),
        initial_validation_mse: initial,
        best_validation_mse: initial,
        best_epoch: 0,
        epochs_run: 0,
        train_mse: Vec::new(),
        validation_mse: Vec::new(),
    };
    let mut stale = 0;
    for epoch in 1..=config.epochs {
        shuffled.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in shuffled.chunks(config.batch_size) {
            let xb = x.select(Axis(0), batch);
            let tb = t.select(Axis(0), batch);
            let (l, g) = loss_and_grad(&model, xb.view(), tb.view())?;
            total += l * batch.len() as f64;
            step(&mut model, &g, config.learning_rate, adam.as_mut());
        }
        let v = val_mse(&model)?;
        report.train_mse.push(total / shuffled.len() as f64);
        report.validation_mse.push(v);
        report.epochs_run = epoch;
        log::debug!("align epoch {epoch}: val mse {v:.6}");
        if v < best.1 {
            best = (model.clone(), v, epoch);
            stale = 0;
        } else {
            stale += 1;
            if config.patience > 0 && stale >= config.patience {
                break;
            }
        }
    }
    report.best_validation_mse = best.1;
    report.best_epoch = best.2;
    Ok((best.0, report))
}

/// Predicted relatedness of two titles in graph space.
pub fn predict_str<E: TextEmbedder + ?Sized>(
    title_a: &str,
    title_b: &str,
    embedder: &E,
    model: &AlignmentModel,
) -> Result<f64> {
    if title_a.trim().is_empty() || title_b.trim().is_empty() {
        return Err(Error::Empty("job title".into()));
    }
    let a = map_text_to_graph(&embedder.embed(title_a)?, model)?;
    let b = map_text_to_graph(&embedder.embed(title_b)?, model)?;
    str_score(&a, &b)
}
