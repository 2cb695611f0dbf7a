use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{design_nvgf_from_gcnn, Architecture, Mode, Model, ModelSpec, Params, Readout};
use crate::design::Nonlinearity;
use crate::error::{Error, Result};
use crate::graph::GraphShift;
use crate::ingest::{Dataset, Split, Task};

const ADAM_EPS: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub dropout: f64,
    pub seed: u64,
    pub validation_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epochs: 25,
            batch_size: 20,
            dropout: 0.5,
            seed: 0,
            validation_every: 5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(what.to_string()));
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad("learning rate must be finite and nonnegative");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("Adam forgetting factors must lie in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout probability must lie in [0, 1)");
        }
        if self.batch_size == 0 || self.validation_every == 0 {
            return bad("batch size and validation interval must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Loss {
    CrossEntropy,
    /// Smooth L1 with threshold one on the single model output.
    SmoothL1,
}

impl Loss {
    pub fn for_task(task: Task) -> Self {
        match task {
            Task::Classification { .. } => Loss::CrossEntropy,
            Task::Regression { .. } => Loss::SmoothL1,
        }
    }

    /// `(loss, d loss / d output)`.
    pub fn eval(self, out: &DVector<f64>, y: f64) -> (f64, DVector<f64>) {
        match self {
            Loss::CrossEntropy => {
                let m = out.max();
                let exp = out.map(|v| (v - m).exp());
                let z = exp.sum();
                let c = y as usize;
                let mut d = exp / z;
                let loss = z.ln() + m - out[c];
                d[c] -= 1.0;
                (loss, d)
            }
            Loss::SmoothL1 => {
                let r = out[0] - y;
                let (loss, d) = if r.abs() < 1.0 {
                    (0.5 * r * r, r)
                } else {
                    (r.abs() - 0.5, r.signum())
                };
                (loss, DVector::from_element(1, d))
            }
        }
    }
}

fn predicted_class(out: &DVector<f64>) -> usize {
    // ties go to the lowest class index
    let mut best = 0;
    for i in 1..out.len() {
        if out[i] > out[best] {
            best = i;
        }
    }
    best
}

/// Per-sample contribution to the metric: a 0/1 error or a squared error.
fn metric_term(task: Task, out: &DVector<f64>, y: f64) -> f64 {
    match task {
        Task::Classification { .. } => f64::from(predicted_class(out) != y as usize),
        Task::Regression { .. } => (out[0] - y).powi(2),
    }
}

fn finish_metric(task: Task, sum: f64, count: usize) -> f64 {
    match task {
        Task::Classification { .. } => sum / count as f64,
        Task::Regression { .. } => (sum / count as f64).sqrt(),
    }
}

pub(crate) fn as_input(x: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(x.len(), 1, x.as_slice())
}

fn sample_seed(batch_seed: u64, i: usize) -> u64 {
    batch_seed ^ (i as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Mean loss, mean metric term and mean gradients over `idx`.
///
/// With `dropout = Some((seed, p))` the forward passes run in training mode
/// with per-sample masks derived from `seed`.
pub fn loss_and_grad(
    model: &Model,
    g: &GraphShift,
    data: &Dataset,
    idx: &[usize],
    dropout: Option<(u64, f64)>,
) -> Result<(f64, f64, Params)> {
    if idx.is_empty() {
        return Err(Error::InsufficientData("empty batch".into()));
    }
    let task = data.task();
    let loss_fn = Loss::for_task(task);
    let parts: Vec<(f64, f64, Params)> = idx
        .par_iter()
        .enumerate()
        .map(|(pos, &i)| {
            let mode = match dropout {
                Some((seed, p)) => Mode::Train {
                    seed: sample_seed(seed, pos),
                    p,
                },
                None => Mode::Eval,
            };
            let (out, cache) = model.forward(g, &as_input(data.signal(i)), mode)?;
            let (loss, d) = loss_fn.eval(&out, data.label(i));
            let grads = model.backward(g, &cache, &d)?;
            Ok((loss, metric_term(task, &out, data.label(i)), grads))
        })
        .collect::<Result<_>>()?;

    let scale = 1.0 / idx.len() as f64;
    let mut total = model.params.zeros_like();
    let (mut loss, mut metric) = (0.0, 0.0);
    for (l, m, gr) in &parts {
        loss += l;
        metric += m;
        total.axpy(scale, gr);
    }
    Ok((loss * scale, metric, total))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub loss: f64,
    /// Error rate for classification, RMSE for regression.
    pub metric: f64,
}

/// Loss and metric over `idx` with dropout disabled.
pub fn evaluate(model: &Model, g: &GraphShift, data: &Dataset, idx: &[usize]) -> Result<Evaluation> {
    if idx.is_empty() {
        return Err(Error::InsufficientData("cannot evaluate on an empty split".into()));
    }
    let task = data.task();
    let loss_fn = Loss::for_task(task);
    let parts: Vec<(f64, f64)> = idx
        .par_iter()
        .map(|&i| {
            let out = model.predict(g, &as_input(data.signal(i)))?;
            Ok((loss_fn.eval(&out, data.label(i)).0, metric_term(task, &out, data.label(i))))
        })
        .collect::<Result<_>>()?;
    let (loss, metric) = parts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    Ok(Evaluation {
        loss: loss / idx.len() as f64,
        metric: finish_metric(task, metric, idx.len()),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl AdamState {
    pub fn new(model: &Model) -> Self {
        let mut m = Vec::new();
        model.params.visit_trainable(&model.spec, |s| m.push(vec![0.0; s.len()]));
        Self {
            v: m.clone(),
            m,
            t: 0,
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(model: &mut Model, grads: &Params, state: &mut AdamState, cfg: &TrainConfig) {
    let mut flat = Vec::with_capacity(state.m.len());
    grads.visit_trainable(&model.spec, |s| flat.push(s.to_vec()));
    state.t += 1;
    let c1 = 1.0 - cfg.beta1.powi(state.t);
    let c2 = 1.0 - cfg.beta2.powi(state.t);
    let mut idx = 0;
    let (m, v) = (&mut state.m, &mut state.v);
    model.params.visit_trainable_mut(&model.spec, |p| {
        let (g, m, v) = (&flat[idx], &mut m[idx], &mut v[idx]);
        for j in 0..p.len() {
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
            p[j] -= cfg.lr * (m[j] / c1) / ((v[j] / c2).sqrt() + ADAM_EPS);
        }
        idx += 1;
    });
    model.params.touch();
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub step: usize,
    pub split: String,
    pub loss: f64,
    pub metric: f64,
}

/// History CSV with header `step,split,loss,metric`.
pub fn write_history_csv<W: Write>(out: W, rows: &[HistoryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Adam training with periodic validation; returns the parameters with the
/// lowest validation metric seen (the initial parameters included).
pub fn train(
    mut model: Model,
    g: &GraphShift,
    data: &Dataset,
    split: &Split,
    cfg: &TrainConfig,
) -> Result<(Model, Vec<HistoryRow>)> {
    cfg.validate()?;
    if split.train.is_empty() || split.valid.is_empty() {
        return Err(Error::InsufficientData(
            "training needs non-empty train and validation splits".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = AdamState::new(&model);
    let mut history = Vec::new();

    let first = evaluate(&model, g, data, &split.valid)?;
    history.push(HistoryRow {
        step: 0,
        split: "valid".into(),
        loss: first.loss,
        metric: first.metric,
    });
    let mut best = (first.metric, model.clone());

    let mut order = split.train.clone();
    let mut step = 0;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            step += 1;
            let batch_seed: u64 = rng.random();
            let (loss, errs, grads) = loss_and_grad(&model, g, data, batch, Some((batch_seed, cfg.dropout)))?;
            history.push(HistoryRow {
                step,
                split: "train".into(),
                loss,
                metric: finish_metric(data.task(), errs, batch.len()),
            });
            adam_step(&mut model, &grads, &mut state, cfg);

            if step % cfg.validation_every == 0 {
                let e = evaluate(&model, g, data, &split.valid)?;
                history.push(HistoryRow {
                    step,
                    split: "valid".into(),
                    loss: e.loss,
                    metric: e.metric,
                });
                if e.metric < best.0 {
                    best = (e.metric, model.clone());
                }
            }
        }
    }
    log::debug!("{}: best validation metric {:.4} after {step} steps", model.arch, best.0);
    Ok((best.1, history))
}

#[derive(Clone, Debug)]
pub struct FitResult {
    pub model: Model,
    pub history: Vec<HistoryRow>,
    pub valid: Evaluation,
    pub test: Option<Evaluation>,
}

/// Build, train and evaluate a single-layer model with `f` features and
/// order `k`. The Design NVGF is obtained from a GCNN trained with the same
/// configuration.
#[allow(clippy::too_many_arguments)]
pub fn fit(
    arch: Architecture,
    g: &GraphShift,
    data: &Dataset,
    split: &Split,
    f: usize,
    k: usize,
    readout: Readout,
    cfg: &TrainConfig,
) -> Result<FitResult> {
    let base = if arch == Architecture::DesignNvgf {
        Architecture::Gcnn
    } else {
        arch
    };
    let spec = ModelSpec::single_layer(base, data.n(), f, k, readout, data.task());
    let init = Model::new(base, spec, cfg.seed)?;
    let (mut model, history) = train(init, g, data, split, cfg)?;
    if arch == Architecture::DesignNvgf {
        let inputs: Vec<DVector<f64>> = split.train.iter().map(|&i| data.signal(i).clone()).collect();
        model = design_nvgf_from_gcnn(&model, g, &inputs, Nonlinearity::Relu)?;
    }
    let valid = evaluate(&model, g, data, &split.valid)?;
    let test = if split.test.is_empty() {
        None
    } else {
        Some(evaluate(&model, g, data, &split.test)?)
    };
    Ok(FitResult {
        model,
        history,
        valid,
        test,
    })
}
