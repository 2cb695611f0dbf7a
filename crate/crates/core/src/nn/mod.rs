//! Graph neural architectures built from filter banks, with manual backprop.
//!
//! Every layer computes `Z = Σ_k Sᵏ X A_k` with a bank of `K + 1` matrices
//! `A_k ∈ R^{F_in × F_out}`, followed by an activation:
//!
//! | architecture | activation |
//! |---|---|
//! | [`Architecture::Lsigf`] | none |
//! | [`Architecture::Gcnn`] | ReLU |
//! | [`Architecture::LearnNvgf`] | a trainable node-variant filter per feature |
//! | [`Architecture::DesignNvgf`] | a node-variant filter per feature designed to mimic ReLU |
//!
//! A linear readout maps the last layer's `N × F` output to logits.

mod design;
mod grid;
mod train;

pub use design::design_nvgf_from_gcnn;
pub use grid::{grid_search, write_ranking_csv, GridCell, GridSpec};
pub use train::{
    adam_step, evaluate, fit, loss_and_grad, train, write_history_csv, AdamState, Evaluation, FitResult,
    HistoryRow, Loss, TrainConfig,
};

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::GraphShift;
use crate::ingest::Task;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    Lsigf,
    Gcnn,
    DesignNvgf,
    LearnNvgf,
}

impl Architecture {
    pub const ALL: [Architecture; 4] = [
        Architecture::Lsigf,
        Architecture::Gcnn,
        Architecture::DesignNvgf,
        Architecture::LearnNvgf,
    ];

    pub fn activation(self) -> Activation {
        match self {
            Architecture::Lsigf => Activation::None,
            Architecture::Gcnn => Activation::Relu,
            Architecture::DesignNvgf => Activation::NvDesigned,
            Architecture::LearnNvgf => Activation::NvLearned,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Architecture::Lsigf => "lsigf",
            Architecture::Gcnn => "gcnn",
            Architecture::DesignNvgf => "design-nvgf",
            Architecture::LearnNvgf => "learn-nvgf",
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Architecture::ALL
            .into_iter()
            .find(|a| a.name() == s.to_ascii_lowercase().replace('_', "-"))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown architecture `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    None,
    Relu,
    NvLearned,
    NvDesigned,
}

impl Activation {
    pub fn is_node_variant(self) -> bool {
        matches!(self, Activation::NvLearned | Activation::NvDesigned)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub f_in: usize,
    pub f_out: usize,
    pub k: usize,
    pub activation: Activation,
}

/// How the last layer's `N × F` output becomes the readout input.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Readout {
    /// All `N·F` entries, node-major.
    Flatten,
    /// The mean over nodes of each feature.
    Pooled,
    /// The `F` features of a single node.
    Node { target: usize },
}

impl Readout {
    pub fn input_dim(self, n: usize, f: usize) -> usize {
        match self {
            Readout::Flatten => n * f,
            Readout::Pooled | Readout::Node { .. } => f,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub n: usize,
    pub layers: Vec<LayerSpec>,
    pub readout: Readout,
    pub outputs: usize,
}

impl ModelSpec {
    /// One filter layer of `f` features and order `k` on single-feature input.
    pub fn single_layer(arch: Architecture, n: usize, f: usize, k: usize, readout: Readout, task: Task) -> Self {
        Self {
            n,
            layers: vec![LayerSpec {
                f_in: 1,
                f_out: f,
                k,
                activation: arch.activation(),
            }],
            readout,
            outputs: match task {
                Task::Classification { classes } => classes,
                Task::Regression { .. } => 1,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.outputs == 0 || self.layers.is_empty() {
            return Err(Error::InvalidArgument(
                "model needs nodes, outputs and at least one layer".into(),
            ));
        }
        let mut f = self.layers[0].f_in;
        for l in &self.layers {
            if l.f_in == 0 || l.f_out == 0 {
                return Err(Error::InvalidArgument("feature counts must be positive".into()));
            }
            if l.f_in != f {
                return Err(Error::dims("layer input features", f, l.f_in));
            }
            f = l.f_out;
        }
        if let Readout::Node { target } = self.readout {
            if target >= self.n {
                return Err(Error::IndexOutOfRange {
                    index: target,
                    n: self.n,
                });
            }
        }
        Ok(())
    }

    pub fn out_features(&self) -> usize {
        self.layers.last().map_or(0, |l| l.f_out)
    }
}

static GENERATION: AtomicU64 = AtomicU64::new(1);

fn next_generation() -> u64 {
    GENERATION.fetch_add(1, Ordering::Relaxed)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    /// `K + 1` matrices of shape `F_in × F_out`.
    pub bank: Vec<DMatrix<f64>>,
    /// One `N × (K + 1)` tap matrix per output feature; empty without a
    /// node-variant activation.
    pub nv: Vec<DMatrix<f64>>,
    /// `N × F_out` additive term of a designed activation.
    pub offset: Option<DMatrix<f64>>,
}

#[derive(Clone, Debug)]
pub struct Params {
    pub layers: Vec<LayerParams>,
    /// `input_dim × outputs`.
    pub readout_w: DMatrix<f64>,
    pub readout_b: DVector<f64>,
    generation: u64,
}

impl PartialEq for Params {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers && self.readout_w == other.readout_w && self.readout_b == other.readout_b
    }
}

impl Params {
    pub fn new(layers: Vec<LayerParams>, readout_w: DMatrix<f64>, readout_b: DVector<f64>) -> Self {
        Self {
            layers,
            readout_w,
            readout_b,
            generation: next_generation(),
        }
    }

    /// Uniform `±1/√(fan_in·(K+1))` initialization.
    pub fn init(spec: &ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut uniform = |rows: usize, cols: usize, fan: usize| {
            let a = 1.0 / (fan as f64).sqrt();
            DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-a..=a))
        };
        let mut layers = Vec::with_capacity(spec.layers.len());
        for l in &spec.layers {
            let fan = l.f_in * (l.k + 1);
            let bank = (0..=l.k).map(|_| uniform(l.f_in, l.f_out, fan)).collect();
            let nv = if l.activation.is_node_variant() {
                (0..l.f_out).map(|_| uniform(spec.n, l.k + 1, l.k + 1)).collect()
            } else {
                Vec::new()
            };
            let offset = (l.activation == Activation::NvDesigned).then(|| DMatrix::zeros(spec.n, l.f_out));
            layers.push(LayerParams { bank, nv, offset });
        }
        let dim = spec.readout.input_dim(spec.n, spec.out_features());
        let readout_w = uniform(dim, spec.outputs, dim);
        let readout_b = uniform(spec.outputs, 1, dim).column(0).into_owned();
        Ok(Self::new(layers, readout_w, readout_b))
    }

    pub fn zeros_like(&self) -> Self {
        let z = |m: &DMatrix<f64>| DMatrix::zeros(m.nrows(), m.ncols());
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    bank: l.bank.iter().map(z).collect(),
                    nv: l.nv.iter().map(z).collect(),
                    offset: l.offset.as_ref().map(z),
                })
                .collect(),
            readout_w: z(&self.readout_w),
            readout_b: DVector::zeros(self.readout_b.len()),
            generation: 0,
        }
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub(crate) fn touch(&mut self) {
        self.generation = next_generation();
    }

    /// Visit every trainable tensor as a flat slice, in a fixed order.
    /// Taps of designed activations and offsets are not trainable.
    pub fn visit_trainable(&self, spec: &ModelSpec, mut f: impl FnMut(&[f64])) {
        for (l, p) in spec.layers.iter().zip(&self.layers) {
            p.bank.iter().for_each(|m| f(m.as_slice()));
            if l.activation == Activation::NvLearned {
                p.nv.iter().for_each(|m| f(m.as_slice()));
            }
        }
        f(self.readout_w.as_slice());
        f(self.readout_b.as_slice());
    }

    pub fn visit_trainable_mut(&mut self, spec: &ModelSpec, mut f: impl FnMut(&mut [f64])) {
        for (l, p) in spec.layers.iter().zip(self.layers.iter_mut()) {
            p.bank.iter_mut().for_each(|m| f(m.as_mut_slice()));
            if l.activation == Activation::NvLearned {
                p.nv.iter_mut().for_each(|m| f(m.as_mut_slice()));
            }
        }
        f(self.readout_w.as_mut_slice());
        f(self.readout_b.as_mut_slice());
    }

    /// `self += scale · other`, over every tensor.
    pub fn axpy(&mut self, scale: f64, other: &Params) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.bank.iter_mut().zip(&b.bank) {
                *x += y * scale;
            }
            for (x, y) in a.nv.iter_mut().zip(&b.nv) {
                *x += y * scale;
            }
        }
        self.readout_w += &other.readout_w * scale;
        self.readout_b.axpy(scale, &other.readout_b, 1.0);
    }

    fn check(&self, spec: &ModelSpec) -> Result<()> {
        if self.layers.len() != spec.layers.len() {
            return Err(Error::dims("parameter layers", spec.layers.len(), self.layers.len()));
        }
        for (l, p) in spec.layers.iter().zip(&self.layers) {
            if p.bank.len() != l.k + 1 {
                return Err(Error::dims("filter bank taps", l.k + 1, p.bank.len()));
            }
            if let Some(m) = p.bank.iter().find(|m| m.shape() != (l.f_in, l.f_out)) {
                return Err(Error::dims("filter bank rows", l.f_in, m.nrows()));
            }
            if l.activation.is_node_variant() {
                if p.nv.len() != l.f_out {
                    return Err(Error::dims("node-variant tap sets", l.f_out, p.nv.len()));
                }
                if let Some(m) = p.nv.iter().find(|m| m.shape() != (spec.n, l.k + 1)) {
                    return Err(Error::dims("node-variant tap rows", spec.n, m.nrows()));
                }
            }
        }
        let dim = spec.readout.input_dim(spec.n, spec.out_features());
        if self.readout_w.shape() != (dim, spec.outputs) {
            return Err(Error::dims("readout input dimension", dim, self.readout_w.nrows()));
        }
        if self.readout_b.len() != spec.outputs {
            return Err(Error::dims("readout bias", spec.outputs, self.readout_b.len()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Mode {
    Eval,
    /// Dropout with probability `p` before the readout, mask drawn from `seed`.
    Train { seed: u64, p: f64 },
}

struct LayerCache {
    /// `Sᵏ X` for `k = 0..=K`.
    shifted_in: Vec<DMatrix<f64>>,
    z: DMatrix<f64>,
    /// `Sᵏ Z`, only for node-variant activations.
    shifted_z: Vec<DMatrix<f64>>,
}

/// Intermediates of one forward pass.
pub struct Cache {
    layers: Vec<LayerCache>,
    mask: Option<DMatrix<f64>>,
    readout_in: DVector<f64>,
    generation: u64,
}

/// A model specification with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub arch: Architecture,
    pub spec: ModelSpec,
    pub params: Params,
}

fn shifts(g: &GraphShift, x: &DMatrix<f64>, k: usize) -> Vec<DMatrix<f64>> {
    let mut out = Vec::with_capacity(k + 1);
    out.push(x.clone());
    for i in 1..=k {
        out.push(g.matrix() * &out[i - 1]);
    }
    out
}

impl Model {
    pub fn new(arch: Architecture, spec: ModelSpec, seed: u64) -> Result<Self> {
        if spec.layers.iter().any(|l| l.activation != arch.activation()) {
            return Err(Error::InvalidArgument(format!(
                "layer activations must all be {:?} for {arch}",
                arch.activation()
            )));
        }
        let params = Params::init(&spec, seed)?;
        Ok(Self { arch, spec, params })
    }

    pub fn from_parts(arch: Architecture, spec: ModelSpec, params: Params) -> Result<Self> {
        spec.validate()?;
        params.check(&spec)?;
        Ok(Self { arch, spec, params })
    }

    fn check_input(&self, g: &GraphShift, x: &DMatrix<f64>) -> Result<()> {
        if g.n() != self.spec.n {
            return Err(Error::dims("graph size", self.spec.n, g.n()));
        }
        let f = self.spec.layers[0].f_in;
        if x.shape() != (self.spec.n, f) {
            return Err(Error::dims("input signal rows", self.spec.n, x.nrows()));
        }
        Ok(())
    }

    /// The last layer's `N × F` output in eval mode.
    pub fn features(&self, g: &GraphShift, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_input(g, x)?;
        let mut h = x.clone();
        for (l, p) in self.spec.layers.iter().zip(&self.params.layers) {
            h = layer_forward(g, l, p, &h)?.0;
        }
        Ok(h)
    }

    pub fn forward(&self, g: &GraphShift, x: &DMatrix<f64>, mode: Mode) -> Result<(DVector<f64>, Cache)> {
        self.check_input(g, x)?;
        let mut h = x.clone();
        let mut layers = Vec::with_capacity(self.spec.layers.len());
        for (l, p) in self.spec.layers.iter().zip(&self.params.layers) {
            let (y, cache) = layer_forward(g, l, p, &h)?;
            layers.push(cache);
            h = y;
        }
        let mask = match mode {
            Mode::Train { seed, p } if p > 0.0 => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let keep = 1.0 / (1.0 - p);
                let m = DMatrix::from_fn(h.nrows(), h.ncols(), |_, _| {
                    if rng.random::<f64>() < p {
                        0.0
                    } else {
                        keep
                    }
                });
                h.component_mul_assign(&m);
                Some(m)
            }
            _ => None,
        };
        let readout_in = readout_input(self.spec.readout, &h);
        let logits = self.params.readout_w.tr_mul(&readout_in) + &self.params.readout_b;
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("model output"));
        }
        Ok((
            logits,
            Cache {
                layers,
                mask,
                readout_in,
                generation: self.params.generation,
            },
        ))
    }

    pub fn predict(&self, g: &GraphShift, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        Ok(self.forward(g, x, Mode::Eval)?.0)
    }

    /// Gradients of a scalar loss with respect to every tensor, given the
    /// gradient `d_logits` at the output.
    pub fn backward(&self, g: &GraphShift, cache: &Cache, d_logits: &DVector<f64>) -> Result<Params> {
        if cache.generation != self.params.generation {
            return Err(Error::StaleCache("parameters changed since the forward pass"));
        }
        if d_logits.len() != self.spec.outputs {
            return Err(Error::dims("output gradient", self.spec.outputs, d_logits.len()));
        }
        let mut grads = self.params.zeros_like();
        grads.readout_w = &cache.readout_in * d_logits.transpose();
        grads.readout_b = d_logits.clone();
        let d_in = &self.params.readout_w * d_logits;

        let f = self.spec.out_features();
        let mut dy = readout_input_grad(self.spec.readout, self.spec.n, f, &d_in);
        if let Some(m) = &cache.mask {
            dy.component_mul_assign(m);
        }

        for li in (0..self.spec.layers.len()).rev() {
            let l = &self.spec.layers[li];
            let p = &self.params.layers[li];
            let c = &cache.layers[li];
            let gl = &mut grads.layers[li];

            let dz = match l.activation {
                Activation::None => dy,
                Activation::Relu => dy.zip_map(&c.z, |d, z| if z > 0.0 { d } else { 0.0 }),
                Activation::NvLearned | Activation::NvDesigned => {
                    let mut dz = DMatrix::zeros(self.spec.n, l.f_out);
                    for (fo, taps) in p.nv.iter().enumerate() {
                        let dyf = dy.column(fo);
                        if l.activation == Activation::NvLearned {
                            for k in 0..=l.k {
                                gl.nv[fo].set_column(k, &c.shifted_z[k].column(fo).component_mul(&dyf));
                            }
                        }
                        // Horner form of Σ_k Sᵏ (h_k ∘ dy)
                        let mut back = DVector::zeros(self.spec.n);
                        for k in (0..=l.k).rev() {
                            back = g.matrix() * back + taps.column(k).component_mul(&dyf);
                        }
                        dz.set_column(fo, &back);
                    }
                    dz
                }
            };

            for k in 0..=l.k {
                gl.bank[k] = c.shifted_in[k].tr_mul(&dz);
            }
            if li == 0 {
                break;
            }
            // Horner form of Σ_k Sᵏ dZ A_kᵀ
            let mut dx = DMatrix::zeros(self.spec.n, l.f_in);
            for k in (0..=l.k).rev() {
                dx = g.matrix() * &dx + &dz * p.bank[k].transpose();
            }
            dy = dx;
        }
        Ok(grads)
    }

    pub fn to_checkpoint(&self, config: Option<&TrainConfig>, metrics: serde_json::Value) -> Checkpoint {
        Checkpoint {
            arch: self.arch,
            spec: self.spec.clone(),
            params: ParamsFile::from(&self.params),
            config: config.cloned(),
            metrics,
        }
    }
}

fn layer_forward(
    g: &GraphShift,
    l: &LayerSpec,
    p: &LayerParams,
    x: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, LayerCache)> {
    let shifted_in = shifts(g, x, l.k);
    let mut z = DMatrix::zeros(x.nrows(), l.f_out);
    for (sx, a) in shifted_in.iter().zip(&p.bank) {
        z += sx * a;
    }
    let mut shifted_z = Vec::new();
    let y = match l.activation {
        Activation::None => z.clone(),
        Activation::Relu => z.map(|v| v.max(0.0)),
        Activation::NvLearned | Activation::NvDesigned => {
            shifted_z = shifts(g, &z, l.k);
            let mut y = DMatrix::zeros(z.nrows(), l.f_out);
            for (fo, taps) in p.nv.iter().enumerate() {
                let mut col = y.column_mut(fo);
                for (k, sz) in shifted_z.iter().enumerate() {
                    col += taps.column(k).component_mul(&sz.column(fo));
                }
            }
            if let Some(c) = &p.offset {
                y += c;
            }
            y
        }
    };
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("layer activation"));
    }
    Ok((
        y,
        LayerCache {
            shifted_in,
            z,
            shifted_z,
        },
    ))
}

fn readout_input(readout: Readout, y: &DMatrix<f64>) -> DVector<f64> {
    match readout {
        Readout::Flatten => DVector::from_iterator(y.len(), y.row_iter().flat_map(|r| r.iter().copied().collect::<Vec<_>>())),
        Readout::Pooled => y.row_mean().transpose(),
        Readout::Node { target } => y.row(target).transpose(),
    }
}

fn readout_input_grad(readout: Readout, n: usize, f: usize, d: &DVector<f64>) -> DMatrix<f64> {
    match readout {
        Readout::Flatten => DMatrix::from_fn(n, f, |i, j| d[i * f + j]),
        Readout::Pooled => DMatrix::from_fn(n, f, |_, j| d[j] / n as f64),
        Readout::Node { target } => DMatrix::from_fn(n, f, |i, j| if i == target { d[j] } else { 0.0 }),
    }
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

type Rows = Vec<Vec<f64>>;

fn to_rows(m: &DMatrix<f64>) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_rows(rows: &Rows, cols_hint: usize) -> Result<DMatrix<f64>> {
    let cols = rows.first().map_or(cols_hint, Vec::len);
    if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
        return Err(Error::dims("checkpoint matrix row length", cols, bad.len()));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerFile {
    pub bank: Vec<Rows>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub nv: Vec<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<Rows>,
}

/// Parameters as row-major nested arrays.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamsFile {
    pub layers: Vec<LayerFile>,
    pub readout_w: Rows,
    pub readout_b: Vec<f64>,
}

impl From<&Params> for ParamsFile {
    fn from(p: &Params) -> Self {
        Self {
            layers: p
                .layers
                .iter()
                .map(|l| LayerFile {
                    bank: l.bank.iter().map(to_rows).collect(),
                    nv: l.nv.iter().map(to_rows).collect(),
                    offset: l.offset.as_ref().map(to_rows),
                })
                .collect(),
            readout_w: to_rows(&p.readout_w),
            readout_b: p.readout_b.iter().copied().collect(),
        }
    }
}

impl ParamsFile {
    pub fn to_params(&self, spec: &ModelSpec) -> Result<Params> {
        let mut layers = Vec::with_capacity(self.layers.len());
        for (l, s) in self.layers.iter().zip(&spec.layers) {
            layers.push(LayerParams {
                bank: l.bank.iter().map(|m| from_rows(m, s.f_out)).collect::<Result<_>>()?,
                nv: l.nv.iter().map(|m| from_rows(m, s.k + 1)).collect::<Result<_>>()?,
                offset: l.offset.as_ref().map(|m| from_rows(m, s.f_out)).transpose()?,
            });
        }
        let params = Params::new(
            layers,
            from_rows(&self.readout_w, spec.outputs)?,
            DVector::from_column_slice(&self.readout_b),
        );
        params.check(spec)?;
        Ok(params)
    }
}

/// Layer specs, tensors, training configuration and metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub arch: Architecture,
    pub spec: ModelSpec,
    pub params: ParamsFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<TrainConfig>,
    #[serde(default)]
    pub metrics: serde_json::Value,
}

impl Checkpoint {
    pub fn to_model(&self) -> Result<Model> {
        Model::from_parts(self.arch, self.spec.clone(), self.params.to_params(&self.spec)?)
    }
}
