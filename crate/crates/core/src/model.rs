//! Model mathematics: hidden layer, the three output objectives, their
//! losses, gradients and SGD updates.
//!
//! Every step computes the full gradient of the instance loss at a single
//! parameter point before any weight is written. In particular `EH` (the
//! error back-propagated to the hidden layer) always uses the output vectors
//! as they were before the step's output update.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::huffman::{HuffmanTree, PathSpec};
use crate::matrix::{axpy, dot, Matrix};
use crate::noise::{NoiseDistribution, Rng};
use crate::vocab::Instance;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Cbow,
    #[serde(alias = "sg", alias = "skip-gram")]
    SkipGram,
}

impl Architecture {
    pub const ALL: [Architecture; 2] = [Architecture::Cbow, Architecture::SkipGram];

    pub fn name(self) -> &'static str {
        match self {
            Architecture::Cbow => "cbow",
            Architecture::SkipGram => "skipgram",
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
        match s {
            "cbow" => Ok(Architecture::Cbow),
            "sg" | "skipgram" | "skip-gram" => Ok(Architecture::SkipGram),
            _ => Err(Error::InvalidConfig(format!("unknown architecture {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Objective {
    #[serde(rename = "softmax")]
    Softmax,
    #[serde(rename = "hs")]
    Hierarchical,
    #[serde(rename = "ns")]
    Negative,
}

impl Objective {
    pub const ALL: [Objective; 3] = [Objective::Softmax, Objective::Hierarchical, Objective::Negative];

    pub fn name(self) -> &'static str {
        match self {
            Objective::Softmax => "softmax",
            Objective::Hierarchical => "hs",
            Objective::Negative => "ns",
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "softmax" => Ok(Objective::Softmax),
            "hs" => Ok(Objective::Hierarchical),
            "ns" => Ok(Objective::Negative),
            _ => Err(Error::InvalidConfig(format!("unknown objective {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub dim: usize,
    pub architecture: Architecture,
    pub objective: Objective,
    /// Negatives drawn per output word; only used by negative sampling.
    pub negatives: usize,
    pub eta: f64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 2 {
            return Err(Error::InvalidConfig(format!(
                "vocabulary size must be at least 2, got {}",
                self.vocab_size
            )));
        }
        if self.dim == 0 {
            return Err(Error::InvalidConfig("dimension must be at least 1".into()));
        }
        if self.negatives == 0 {
            return Err(Error::InvalidConfig("negatives must be at least 1".into()));
        }
        if self.objective == Objective::Negative && self.negatives >= self.vocab_size {
            return Err(Error::InvalidConfig(format!(
                "negatives ({}) must be smaller than the vocabulary size ({})",
                self.negatives, self.vocab_size
            )));
        }
        if !(self.eta.is_finite() && self.eta >= 0.0) {
            return Err(Error::InvalidConfig(format!("learning rate must be finite and >= 0, got {}", self.eta)));
        }
        Ok(())
    }

    /// Rows of the output-side matrix: one per word, or one per inner unit
    /// of the Huffman tree.
    pub fn output_rows(&self) -> usize {
        match self.objective {
            Objective::Hierarchical => self.vocab_size - 1,
            _ => self.vocab_size,
        }
    }
}

/// Input vectors `W` (one row per word) and output-side vectors `W'`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub input: Matrix,
    pub output: Matrix,
}

impl ModelState {
    /// Input vectors uniform in `[-0.5/N, 0.5/N)`, drawn row by row; output
    /// vectors zero.
    pub fn init(config: &ModelConfig, rng: &mut Rng) -> Self {
        let n = config.dim;
        let half = 0.5 / n as f64;
        let input = Matrix::from_fn(config.vocab_size, n, |_, _| rng.uniform_in(-half, half));
        Self { input, output: Matrix::zeros(config.output_rows(), n) }
    }

    pub fn is_finite(&self) -> bool {
        self.input.is_finite() && self.output.is_finite()
    }
}

/// Logistic function. The negative branch avoids overflow in `exp`; the
/// result is clamped to the smallest positive `f64` so it never reaches 0.
pub fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        (e / (1.0 + e)).max(f64::from_bits(1))
    }
}

/// `log σ(u)` without overflow or `log(0)`.
pub fn log_sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        -(-u).exp().ln_1p()
    } else {
        u - u.exp().ln_1p()
    }
}

fn log_sum_exp(u: &[f64]) -> f64 {
    let max = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + u.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Average of the context words' input vectors; a row copy when `C = 1`.
pub fn hidden(state: &ModelState, context: &[usize]) -> Vec<f64> {
    assert!(!context.is_empty(), "empty context");
    if let [only] = context {
        return state.input.row(*only).to_vec();
    }
    let mut h = vec![0.0; state.input.cols()];
    for &w in context {
        axpy(1.0, state.input.row(w), &mut h);
    }
    let c = context.len() as f64;
    h.iter_mut().for_each(|x| *x /= c);
    h
}

/// Scores `u_j = v'_j·h` and their softmax `y`.
pub fn softmax_forward(state: &ModelState, h: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let u: Vec<f64> = state.output.iter_rows().map(|row| dot(row, h)).collect();
    let y = softmax(&u);
    (u, y)
}

pub fn softmax(u: &[f64]) -> Vec<f64> {
    let max = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = u.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn softmax_loss(y: &[f64], target: usize) -> f64 {
    -y[target].ln()
}

/// `y_j - t_j` summed over every target: `e` for one target (CBOW), `EI`
/// for a skip-gram context.
pub fn softmax_errors(y: &[f64], targets: &[usize]) -> Vec<f64> {
    let c = targets.len() as f64;
    let mut err: Vec<f64> = y.iter().map(|p| c * p).collect();
    for &t in targets {
        err[t] -= 1.0;
    }
    err
}

/// `v'_j -= eta * err_j * h` for every row.
pub fn softmax_update_output(state: &mut ModelState, err: &[f64], h: &[f64], eta: f64) {
    for (j, &e) in err.iter().enumerate() {
        let alpha = -eta * e;
        if alpha != 0.0 {
            axpy(alpha, h, state.output.row_mut(j));
        }
    }
}

/// `EH = Σ_j err_j v'_j`.
pub fn softmax_eh(state: &ModelState, err: &[f64]) -> Vec<f64> {
    let mut eh = vec![0.0; state.output.cols()];
    for (j, &e) in err.iter().enumerate() {
        axpy(e, state.output.row(j), &mut eh);
    }
    eh
}

/// Per-node terms of one hierarchical-softmax path: loss, `EH`, and
/// `(inner node, σ(v'·h) - t)` pairs.
fn hs_terms(state: &ModelState, path: &PathSpec, h: &[f64]) -> (f64, Vec<f64>, Vec<(usize, f64)>) {
    let mut loss = 0.0;
    let mut eh = vec![0.0; h.len()];
    let mut rows = Vec::with_capacity(path.len());
    for (node, left) in path.steps() {
        let v = state.output.row(node);
        let f = dot(v, h);
        let (sign, t) = if left { (1.0, 1.0) } else { (-1.0, 0.0) };
        loss -= log_sigmoid(sign * f);
        let g = sigmoid(f) - t;
        axpy(g, v, &mut eh);
        rows.push((node, g));
    }
    (loss, eh, rows)
}

pub fn hs_loss(state: &ModelState, path: &PathSpec, h: &[f64]) -> f64 {
    path.steps()
        .map(|(node, left)| {
            let f = dot(state.output.row(node), h);
            -log_sigmoid(if left { f } else { -f })
        })
        .sum()
}

/// Updates the inner-unit vectors on `path` and returns `EH`, computed from
/// the vectors before the update.
pub fn hs_update(state: &mut ModelState, path: &PathSpec, h: &[f64], eta: f64) -> Vec<f64> {
    let (_, eh, rows) = hs_terms(state, path, h);
    apply_rows(&mut state.output, &rows, h, eta);
    eh
}

fn ns_terms(
    state: &ModelState,
    target: usize,
    negatives: &[usize],
    h: &[f64],
) -> (f64, Vec<f64>, Vec<(usize, f64)>) {
    let mut loss = 0.0;
    let mut eh = vec![0.0; h.len()];
    let mut rows = Vec::with_capacity(negatives.len() + 1);
    let labelled = std::iter::once((target, 1.0)).chain(negatives.iter().map(|&w| (w, 0.0)));
    for (w, t) in labelled {
        let v = state.output.row(w);
        let f = dot(v, h);
        loss -= if t == 1.0 { log_sigmoid(f) } else { log_sigmoid(-f) };
        let g = sigmoid(f) - t;
        axpy(g, v, &mut eh);
        rows.push((w, g));
    }
    (loss, eh, rows)
}

pub fn ns_loss(state: &ModelState, target: usize, negatives: &[usize], h: &[f64]) -> f64 {
    let pos = -log_sigmoid(dot(state.output.row(target), h));
    let neg: f64 = negatives
        .iter()
        .map(|&w| -log_sigmoid(-dot(state.output.row(w), h)))
        .sum();
    pos + neg
}

/// Updates the target and each negative (duplicates once per occurrence, in
/// list order) and returns `EH` from the pre-update vectors.
pub fn ns_update(
    state: &mut ModelState,
    target: usize,
    negatives: &[usize],
    h: &[f64],
    eta: f64,
) -> Vec<f64> {
    let (_, eh, rows) = ns_terms(state, target, negatives, h);
    apply_rows(&mut state.output, &rows, h, eta);
    eh
}

fn apply_rows(m: &mut Matrix, rows: &[(usize, f64)], h: &[f64], eta: f64) {
    for &(r, g) in rows {
        let alpha = -eta * g;
        if alpha != 0.0 {
            axpy(alpha, h, m.row_mut(r));
        }
    }
}

/// CBOW: every context occurrence gets `-(eta/C)·EH`. Skip-gram: the single
/// input word gets `-eta·EH`.
pub fn update_input(state: &mut ModelState, architecture: Architecture, inputs: &[usize], eh: &[f64], eta: f64) {
    let rows = input_rows(architecture, inputs);
    apply_rows(&mut state.input, &rows, eh, eta);
}

fn input_rows(architecture: Architecture, inputs: &[usize]) -> Vec<(usize, f64)> {
    match architecture {
        Architecture::Cbow => {
            let scale = 1.0 / inputs.len() as f64;
            inputs.iter().map(|&w| (w, scale)).collect()
        }
        Architecture::SkipGram => inputs.iter().map(|&w| (w, 1.0)).collect(),
    }
}

/// The output side that goes with an objective.
#[derive(Debug, Clone, PartialEq)]
pub enum OutputLayer {
    Softmax,
    Hierarchical(HuffmanTree),
    Negative(NoiseDistribution),
}

impl OutputLayer {
    pub fn for_objective(objective: Objective, counts: &[u64]) -> Result<Self> {
        Ok(match objective {
            Objective::Softmax => OutputLayer::Softmax,
            Objective::Hierarchical => OutputLayer::Hierarchical(HuffmanTree::build(counts)?),
            Objective::Negative => OutputLayer::Negative(NoiseDistribution::unigram(counts)?),
        })
    }

    pub fn objective(&self) -> Objective {
        match self {
            OutputLayer::Softmax => Objective::Softmax,
            OutputLayer::Hierarchical(_) => Objective::Hierarchical,
            OutputLayer::Negative(_) => Objective::Negative,
        }
    }
}

/// Gradient of one instance's loss at the current parameters, in sparse form.
///
/// Output row `r` has gradient `g·h` for each `(r, g)` in `output_rows`;
/// input row `r` has gradient `s·EH` for each `(r, s)` in `input_rows`.
/// Repeated rows accumulate.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub loss: f64,
    pub hidden: Vec<f64>,
    pub eh: Vec<f64>,
    pub output_rows: Vec<(usize, f64)>,
    pub input_rows: Vec<(usize, f64)>,
}

impl Gradient {
    pub fn output_dense(&self, rows: usize) -> Matrix {
        let mut m = Matrix::zeros(rows, self.hidden.len());
        for &(r, g) in &self.output_rows {
            axpy(g, &self.hidden, m.row_mut(r));
        }
        m
    }

    pub fn input_dense(&self, rows: usize) -> Matrix {
        let mut m = Matrix::zeros(rows, self.eh.len());
        for &(r, s) in &self.input_rows {
            axpy(s, &self.eh, m.row_mut(r));
        }
        m
    }

    pub fn is_finite(&self) -> bool {
        self.loss.is_finite() && self.eh.iter().all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    /// Loss before the update.
    pub loss: f64,
    /// Output-side row writes performed, counting repeats.
    pub touched_output_rows: usize,
}

/// Forward pass at fixed weights, for inspection.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Activation {
    pub hidden: Vec<f64>,
    /// Softmax: `u_j`. Negative sampling: `v'_j·h`. Hierarchical: empty.
    pub scores: Vec<f64>,
    /// Softmax: `y_j`. Negative sampling: `σ(v'_j·h)`. Hierarchical: `p(w)`.
    pub outputs: Vec<f64>,
    /// Hierarchical only: `σ(v'_n·h)`, the probability of going left at each inner unit.
    pub inner: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub state: ModelState,
    pub layer: OutputLayer,
}

impl Model {
    /// Validates the config, builds the output layer from `counts` and
    /// initializes the weights from `rng`.
    pub fn new(config: ModelConfig, counts: &[u64], rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        if counts.len() != config.vocab_size {
            return Err(Error::InvalidConfig(format!(
                "{} counts for vocabulary size {}",
                counts.len(),
                config.vocab_size
            )));
        }
        let layer = OutputLayer::for_objective(config.objective, counts)?;
        let state = ModelState::init(&config, rng);
        Ok(Self { config, state, layer })
    }

    pub fn from_parts(config: ModelConfig, layer: OutputLayer, state: ModelState) -> Result<Self> {
        config.validate()?;
        if layer.objective() != config.objective
            || state.input.rows() != config.vocab_size
            || state.output.rows() != config.output_rows()
            || state.input.cols() != config.dim
            || state.output.cols() != config.dim
        {
            return Err(Error::InvalidConfig("state shape or layer does not match config".into()));
        }
        Ok(Self { config, state, layer })
    }

    pub fn validate_instance(&self, instance: &Instance) -> Result<()> {
        if instance.architecture() != self.config.architecture {
            return Err(Error::ArchitectureMismatch(self.config.architecture.name()));
        }
        if instance.inputs().is_empty() || instance.outputs().is_empty() {
            return Err(Error::InvalidConfig("instance has an empty side".into()));
        }
        let id = instance.max_id();
        if id >= self.config.vocab_size {
            return Err(Error::WordOutOfRange { id, vocab_size: self.config.vocab_size });
        }
        Ok(())
    }

    /// One list of negatives per output word (empty lists unless the
    /// objective is negative sampling).
    pub fn draw_negatives(&self, instance: &Instance, rng: &mut Rng) -> Vec<Vec<usize>> {
        match &self.layer {
            OutputLayer::Negative(noise) => instance
                .outputs()
                .iter()
                .map(|&o| noise.sample_negatives(self.config.negatives, o, rng))
                .collect(),
            _ => vec![Vec::new(); instance.outputs().len()],
        }
    }

    /// Loss of an instance, evaluated directly from the loss formulas.
    pub fn loss(&self, instance: &Instance, negatives: &[Vec<usize>]) -> f64 {
        let h = hidden(&self.state, instance.inputs());
        match &self.layer {
            OutputLayer::Softmax => {
                let (u, _) = softmax_forward(&self.state, &h);
                let lse = log_sum_exp(&u);
                instance.outputs().iter().map(|&o| lse - u[o]).sum()
            }
            OutputLayer::Hierarchical(tree) => instance
                .outputs()
                .iter()
                .map(|&o| hs_loss(&self.state, tree.path(o), &h))
                .sum(),
            OutputLayer::Negative(_) => instance
                .outputs()
                .iter()
                .zip(negatives)
                .map(|(&o, neg)| ns_loss(&self.state, o, neg, &h))
                .sum(),
        }
    }

    /// Loss and gradient of an instance at the current weights. Skip-gram
    /// contexts are processed one output word at a time and their `EH`
    /// contributions summed.
    pub fn gradient(&self, instance: &Instance, negatives: &[Vec<usize>]) -> Gradient {
        let h = hidden(&self.state, instance.inputs());
        let outputs = instance.outputs();
        let (loss, eh, output_rows) = match &self.layer {
            OutputLayer::Softmax => {
                let (u, y) = softmax_forward(&self.state, &h);
                let lse = log_sum_exp(&u);
                let loss = outputs.iter().map(|&o| lse - u[o]).sum();
                let err = softmax_errors(&y, outputs);
                let eh = softmax_eh(&self.state, &err);
                (loss, eh, err.into_iter().enumerate().collect())
            }
            OutputLayer::Hierarchical(tree) => {
                let mut acc = (0.0, vec![0.0; h.len()], Vec::new());
                for &o in outputs {
                    let (l, eh, rows) = hs_terms(&self.state, tree.path(o), &h);
                    acc.0 += l;
                    axpy(1.0, &eh, &mut acc.1);
                    acc.2.extend(rows);
                }
                acc
            }
            OutputLayer::Negative(_) => {
                let mut acc = (0.0, vec![0.0; h.len()], Vec::new());
                for (&o, neg) in outputs.iter().zip(negatives) {
                    let (l, eh, rows) = ns_terms(&self.state, o, neg, &h);
                    acc.0 += l;
                    axpy(1.0, &eh, &mut acc.1);
                    acc.2.extend(rows);
                }
                acc
            }
        };
        Gradient {
            loss,
            hidden: h,
            eh,
            output_rows,
            input_rows: input_rows(self.config.architecture, instance.inputs()),
        }
    }

    /// Applies `θ -= eta·∇` (output side first, then input side). Returns the
    /// number of output row writes, or `None` if any written value would be
    /// non-finite, in which case the weights are left untouched.
    pub fn apply(&mut self, grad: &Gradient, eta: f64) -> Option<usize> {
        let out = stage(&self.state.output, &grad.output_rows, &grad.hidden, eta)?;
        let inp = stage(&self.state.input, &grad.input_rows, &grad.eh, eta)?;
        for (r, row) in out {
            self.state.output.row_mut(r).copy_from_slice(&row);
        }
        for (r, row) in inp {
            self.state.input.row_mut(r).copy_from_slice(&row);
        }
        Some(grad.output_rows.len())
    }

    /// One SGD step with `self.config.eta`: hidden layer, objective-specific
    /// errors and `EH`, output update, input update.
    pub fn train_step(&mut self, instance: &Instance, rng: &mut Rng) -> Result<StepReport> {
        self.validate_instance(instance)?;
        let negatives = self.draw_negatives(instance, rng);
        let grad = self.gradient(instance, &negatives);
        let eta = self.config.eta;
        if !grad.loss.is_finite() {
            return Err(Error::NonFiniteLoss { loss: grad.loss, instance: 0, eta });
        }
        let touched = self
            .apply(&grad, eta)
            .ok_or(Error::NonFiniteWeights { instance: 0, eta })?;
        Ok(StepReport { loss: grad.loss, touched_output_rows: touched })
    }

    /// Forward pass for the given input words without touching the weights.
    pub fn activate(&self, inputs: &[usize]) -> Result<Activation> {
        if inputs.is_empty() {
            return Err(Error::InvalidConfig("no input words".into()));
        }
        if let Some(&id) = inputs.iter().find(|&&w| w >= self.config.vocab_size) {
            return Err(Error::WordOutOfRange { id, vocab_size: self.config.vocab_size });
        }
        let h = hidden(&self.state, inputs);
        Ok(match &self.layer {
            OutputLayer::Softmax => {
                let (u, y) = softmax_forward(&self.state, &h);
                Activation { hidden: h, scores: u, outputs: y, inner: Vec::new() }
            }
            OutputLayer::Negative(_) => {
                let u: Vec<f64> = self.state.output.iter_rows().map(|r| dot(r, &h)).collect();
                let p = u.iter().map(|&x| sigmoid(x)).collect();
                Activation { hidden: h, scores: u, outputs: p, inner: Vec::new() }
            }
            OutputLayer::Hierarchical(tree) => {
                let inner: Vec<f64> = self.state.output.iter_rows().map(|r| sigmoid(dot(r, &h))).collect();
                let outputs = tree
                    .paths()
                    .iter()
                    .map(|p| {
                        p.steps()
                            .map(|(n, left)| if left { inner[n] } else { 1.0 - inner[n] })
                            .product()
                    })
                    .collect();
                Activation { hidden: h, scores: Vec::new(), outputs, inner }
            }
        })
    }
}

fn stage(m: &Matrix, rows: &[(usize, f64)], x: &[f64], eta: f64) -> Option<BTreeMap<usize, Vec<f64>>> {
    let mut staged: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for &(r, g) in rows {
        let row = staged.entry(r).or_insert_with(|| m.row(r).to_vec());
        let alpha = -eta * g;
        if alpha != 0.0 {
            axpy(alpha, x, row);
        }
    }
    staged.values().all(|row| row.iter().all(|v| v.is_finite())).then_some(staged)
}
