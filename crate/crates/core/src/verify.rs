//! Gradient certification and small reference networks.
//!
//! [`numeric_grad`] is the finite-difference oracle: it only ever calls a
//! loss function and never looks at analytic gradients. [`check_all`] runs
//! it against [`Model::gradient`] for every architecture and objective over
//! a grid of small random configurations.

use std::fmt::{self, Write as _};

use serde::Serialize;

use crate::matrix::{dot, Matrix};
use crate::model::{sigmoid, Architecture, Model, ModelConfig, ModelState, Objective, OutputLayer};
use crate::noise::{NoiseDistribution, Rng};
use crate::vocab::Instance;

pub const DEFAULT_EPSILON: f64 = 1e-6;
pub const DEFAULT_THRESHOLD: f64 = 1e-6;

/// `|a - n| / max(|a|, |n|, 1e-12)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12)
}

/// Central differences of `f` at `params`, entry by entry. The divisor is
/// the perturbation actually representable in floating point.
pub fn central_differences(params: &[f64], epsilon: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = params.to_vec();
    (0..params.len())
        .map(|i| {
            let x = params[i];
            let (hi, lo) = (x + epsilon, x - epsilon);
            probe[i] = hi;
            let up = f(&probe);
            probe[i] = lo;
            let down = f(&probe);
            probe[i] = x;
            (up - down) / (hi - lo)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Block {
    /// Output vectors, or inner-unit vectors under hierarchical softmax.
    Output,
    Input,
}

impl Block {
    pub fn of(self, state: &ModelState) -> &Matrix {
        match self {
            Block::Output => &state.output,
            Block::Input => &state.input,
        }
    }

    fn of_mut(self, state: &mut ModelState) -> &mut Matrix {
        match self {
            Block::Output => &mut state.output,
            Block::Input => &mut state.input,
        }
    }
}

impl fmt::Display for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Block::Output => "output",
            Block::Input => "input",
        })
    }
}

/// Finite-difference estimate of `∂loss/∂block`, shaped like the block.
pub fn numeric_grad(loss: impl Fn(&ModelState) -> f64, state: &ModelState, block: Block, epsilon: f64) -> Matrix {
    let mut probe = state.clone();
    let m = block.of(state);
    let (rows, cols) = (m.rows(), m.cols());
    let params = m.as_slice().to_vec();
    let grads = central_differences(&params, epsilon, |p| {
        block.of_mut(&mut probe).as_mut_slice().copy_from_slice(p);
        loss(&probe)
    });
    Matrix::from_fn(rows, cols, |r, c| grads[r * cols + c])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradReport {
    pub architecture: Architecture,
    pub objective: Objective,
    pub block: Block,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub threshold: f64,
    pub configs: usize,
    pub passed: bool,
}

impl GradReport {
    fn new(architecture: Architecture, objective: Objective, block: Block, threshold: f64) -> Self {
        Self {
            architecture,
            objective,
            block,
            max_rel_error: 0.0,
            max_abs_error: 0.0,
            threshold,
            configs: 0,
            passed: true,
        }
    }

    fn absorb(&mut self, analytic: &Matrix, numeric: &Matrix) {
        for (a, n) in analytic.as_slice().iter().zip(numeric.as_slice()) {
            self.max_rel_error = self.max_rel_error.max(relative_error(*a, *n));
            self.max_abs_error = self.max_abs_error.max((a - n).abs());
        }
        self.configs += 1;
        self.passed = self.max_rel_error < self.threshold;
    }
}

/// Configurations swept by [`check_all`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradGrid {
    pub seeds: Vec<u64>,
    pub vocab_sizes: Vec<usize>,
    pub dims: Vec<usize>,
    pub context_sizes: Vec<usize>,
    pub architectures: Vec<Architecture>,
    pub objectives: Vec<Objective>,
    pub negatives: usize,
    pub epsilon: f64,
    pub threshold: f64,
}

impl Default for GradGrid {
    fn default() -> Self {
        Self {
            seeds: vec![1, 2, 3],
            vocab_sizes: vec![8, 20],
            dims: vec![3, 6],
            context_sizes: vec![1, 3],
            architectures: Architecture::ALL.to_vec(),
            objectives: Objective::ALL.to_vec(),
            negatives: 3,
            epsilon: DEFAULT_EPSILON,
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

/// A random model, instance and fixed negative draws for gradient checks.
#[derive(Debug, Clone)]
pub struct Probe {
    pub model: Model,
    pub instance: Instance,
    pub negatives: Vec<Vec<usize>>,
}

impl Probe {
    /// Weights uniform in `[-1, 1)`, random counts in `1..=20`, a random
    /// instance with `context` words, and `k` distinct negatives per output
    /// word that never include that word.
    pub fn random(
        architecture: Architecture,
        objective: Objective,
        vocab_size: usize,
        dim: usize,
        context: usize,
        k: usize,
        rng: &mut Rng,
    ) -> Self {
        let k = k.min(vocab_size - 1);
        let counts: Vec<u64> = (0..vocab_size).map(|_| 1 + rng.below(20) as u64).collect();
        let config = ModelConfig { vocab_size, dim, architecture, objective, negatives: k.max(1), eta: 0.1 };
        let layer = OutputLayer::for_objective(objective, &counts).expect("valid counts");
        let state = ModelState {
            input: Matrix::from_fn(vocab_size, dim, |_, _| rng.uniform_in(-1.0, 1.0)),
            output: Matrix::from_fn(config.output_rows(), dim, |_, _| rng.uniform_in(-1.0, 1.0)),
        };
        let model = Model::from_parts(config, layer, state).expect("consistent parts");
        let mut ids = |n: usize| -> Vec<usize> { (0..n).map(|_| rng.below(vocab_size)).collect() };
        let instance = match architecture {
            Architecture::Cbow => Instance::Cbow { context: ids(context), target: ids(1)[0] },
            Architecture::SkipGram => Instance::SkipGram { center: ids(1)[0], outputs: ids(context) },
        };
        let negatives = match &model.layer {
            OutputLayer::Negative(noise) => instance
                .outputs()
                .iter()
                .map(|&o| distinct_negatives(noise, k, o, rng))
                .collect(),
            _ => vec![Vec::new(); instance.outputs().len()],
        };
        Self { model, instance, negatives }
    }

    pub fn analytic(&self, block: Block) -> Matrix {
        let g = self.model.gradient(&self.instance, &self.negatives);
        match block {
            Block::Output => g.output_dense(self.model.config.output_rows()),
            Block::Input => g.input_dense(self.model.config.vocab_size),
        }
    }

    pub fn numeric(&self, block: Block, epsilon: f64) -> Matrix {
        let loss = |s: &ModelState| {
            let m = Model { config: self.model.config.clone(), state: s.clone(), layer: self.model.layer.clone() };
            m.loss(&self.instance, &self.negatives)
        };
        numeric_grad(loss, &self.model.state, block, epsilon)
    }
}

fn distinct_negatives(noise: &NoiseDistribution, k: usize, exclude: usize, rng: &mut Rng) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::with_capacity(k);
    while out.len() < k {
        let w = noise.sample_negatives(1, exclude, rng)[0];
        if !out.contains(&w) {
            out.push(w);
        }
    }
    out
}

/// One report per `(architecture, objective, block)`, aggregated over the grid.
pub fn check_all(grid: &GradGrid) -> Vec<GradReport> {
    let mut reports = Vec::new();
    for &arch in &grid.architectures {
        for &obj in &grid.objectives {
            let mut out = GradReport::new(arch, obj, Block::Output, grid.threshold);
            let mut inp = GradReport::new(arch, obj, Block::Input, grid.threshold);
            for &seed in &grid.seeds {
                let mut rng = Rng::new(seed);
                for &v in &grid.vocab_sizes {
                    for &n in &grid.dims {
                        for &c in &grid.context_sizes {
                            let probe = Probe::random(arch, obj, v, n, c, grid.negatives, &mut rng);
                            out.absorb(&probe.analytic(Block::Output), &probe.numeric(Block::Output, grid.epsilon));
                            inp.absorb(&probe.analytic(Block::Input), &probe.numeric(Block::Input, grid.epsilon));
                        }
                    }
                }
            }
            reports.push(out);
            reports.push(inp);
        }
    }
    reports
}

/// Plain-text table, one row per report.
pub fn format_table(reports: &[GradReport]) -> String {
    let mut s = String::new();
    writeln!(s, "{:<9} {:<9} {:<7} {:>7} {:>12} {:>12}  status", "arch", "objective", "block", "configs", "max_rel", "max_abs")
        .unwrap();
    for r in reports {
        let block = match (r.objective, r.block) {
            (Objective::Hierarchical, Block::Output) => "inner".to_string(),
            (_, b) => b.to_string(),
        };
        writeln!(
            s,
            "{:<9} {:<9} {:<7} {:>7} {:>12.3e} {:>12.3e}  {}",
            r.architecture.name(),
            r.objective.name(),
            block,
            r.configs,
            r.max_rel_error,
            r.max_abs_error,
            if r.passed { "PASS" } else { "FAIL" }
        )
        .unwrap();
    }
    s
}

/// Unit step: 1 if `u > 0`, else 0 (so exactly 0 maps to 0).
pub fn step(u: f64) -> f64 {
    if u > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// `w - eta·(y - t)·x` with `y = step(w·x)`.
pub fn perceptron_update(w: &[f64], x: &[f64], t: f64, eta: f64) -> Vec<f64> {
    let y = step(dot(w, x));
    w.iter().zip(x).map(|(wi, xi)| wi - eta * (y - t) * xi).collect()
}

/// `w - eta·(y - t)·y(1 - y)·x` with `y = σ(w·x)`.
pub fn logistic_unit_update(w: &[f64], x: &[f64], t: f64, eta: f64) -> Vec<f64> {
    let y = sigmoid(dot(w, x));
    let scale = eta * (y - t) * y * (1.0 - y);
    w.iter().zip(x).map(|(wi, xi)| wi - scale * xi).collect()
}

/// `½(t - σ(w·x))²`
pub fn logistic_unit_loss(w: &[f64], x: &[f64], t: f64) -> f64 {
    0.5 * (t - sigmoid(dot(w, x))).powi(2)
}

/// One-hidden-layer network with logistic hidden and output units and no
/// bias terms. `w` is `K×N` (input→hidden), `w_out` is `N×M`.
#[derive(Debug, Clone, PartialEq)]
pub struct RefNet {
    pub w: Matrix,
    pub w_out: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub hidden: Vec<f64>,
    pub output: Vec<f64>,
}

/// Error terms of one backprop pass: `EI'_j = ∂E/∂u'_j` at the output
/// layer and `EI_i = ∂E/∂u_i` at the hidden layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Backprop {
    pub ei_output: Vec<f64>,
    pub ei_hidden: Vec<f64>,
}

impl RefNet {
    pub fn new(w: Matrix, w_out: Matrix) -> Self {
        assert_eq!(w.cols(), w_out.rows(), "hidden sizes disagree");
        Self { w, w_out }
    }

    pub fn zeros(k: usize, n: usize, m: usize) -> Self {
        Self::new(Matrix::zeros(k, n), Matrix::zeros(n, m))
    }

    pub fn forward(&self, x: &[f64]) -> Forward {
        let (k, n) = (self.w.rows(), self.w.cols());
        let m = self.w_out.cols();
        let hidden: Vec<f64> = (0..n)
            .map(|i| sigmoid((0..k).map(|kk| self.w.row(kk)[i] * x[kk]).sum()))
            .collect();
        let output = (0..m)
            .map(|j| sigmoid((0..n).map(|i| self.w_out.row(i)[j] * hidden[i]).sum()))
            .collect();
        Forward { hidden, output }
    }

    /// `½ Σ_j (y_j - t_j)²`
    pub fn loss(&self, x: &[f64], t: &[f64]) -> f64 {
        let f = self.forward(x);
        0.5 * f.output.iter().zip(t).map(|(y, t)| (y - t).powi(2)).sum::<f64>()
    }

    pub fn error_terms(&self, x: &[f64], t: &[f64]) -> (Forward, Backprop) {
        let f = self.forward(x);
        let ei_output: Vec<f64> = f.output.iter().zip(t).map(|(y, t)| (y - t) * y * (1.0 - y)).collect();
        let ei_hidden = f
            .hidden
            .iter()
            .enumerate()
            .map(|(i, h)| dot(&ei_output, self.w_out.row(i)) * h * (1.0 - h))
            .collect();
        (f, Backprop { ei_output, ei_hidden })
    }

    /// Gradients `(∂E/∂W, ∂E/∂W')`.
    pub fn gradients(&self, x: &[f64], t: &[f64]) -> (Matrix, Matrix) {
        let (f, b) = self.error_terms(x, t);
        let dw = Matrix::from_fn(self.w.rows(), self.w.cols(), |k, i| b.ei_hidden[i] * x[k]);
        let dw_out = Matrix::from_fn(self.w_out.rows(), self.w_out.cols(), |i, j| b.ei_output[j] * f.hidden[i]);
        (dw, dw_out)
    }

    /// Output layer first, then the hidden layer; both error terms come
    /// from the weights before this update.
    pub fn mlp_backprop(&mut self, x: &[f64], t: &[f64], eta: f64) -> Backprop {
        let (f, b) = self.error_terms(x, t);
        for i in 0..self.w_out.rows() {
            for (j, w) in self.w_out.row_mut(i).iter_mut().enumerate() {
                *w -= eta * b.ei_output[j] * f.hidden[i];
            }
        }
        for (k, xk) in x.iter().enumerate() {
            for (i, w) in self.w.row_mut(k).iter_mut().enumerate() {
                *w -= eta * b.ei_hidden[i] * xk;
            }
        }
        b
    }
}
