//! Deterministic layers: dense, LSTM, batch normalization.
//!
//! Each layer owns its parameters and offers two forward paths: a taped one
//! for training (gradients via [`crate::tape::Tape::backward`]) and a plain
//! one for inference. Layers register their parameters on a tape in a fixed
//! order so the training loop can associate gradients with parameters.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::tape::{softplus_sharpened_scalar, Tape, Var};

/// Activation applied after the affine map of a dense layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Linear,
    Relu,
}

/// One named parameter matrix.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub value: Matrix,
    pub trainable: bool,
}

impl Param {
    pub fn new(name: impl Into<String>, value: Matrix) -> Self {
        Param {
            name: name.into(),
            value,
            trainable: true,
        }
    }
}

/// Named weight matrices and bias vectors for one layer.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ParameterSet {
    params: Vec<Param>,
}

impl ParameterSet {
    pub fn new(params: Vec<Param>) -> Self {
        ParameterSet { params }
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar entries across all parameters.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }
}

/// Glorot-style uniform init: U(-l, l) with l = sqrt(6 / (fan_in + fan_out)).
pub fn glorot_uniform(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.gen_range(-limit..limit))
        .collect();
    Matrix::from_vec(rows, cols, data).expect("sized by construction")
}

/// Fully connected layer `activation(x·W + b)` with W of shape (in x out).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Dense {
    pub weights: Param,
    pub bias: Param,
    pub activation: Activation,
}

impl Dense {
    pub fn new(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut impl Rng) -> Self {
        Dense {
            weights: Param::new("weights", glorot_uniform(in_dim, out_dim, rng)),
            bias: Param::new("bias", Matrix::zeros(1, out_dim)),
            activation,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.value.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.value.cols()
    }

    pub fn params(&self) -> Vec<&Param> {
        vec![&self.weights, &self.bias]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weights, &mut self.bias]
    }

    /// Taped forward over a batch (n x in). `vars` must hold the leaves for
    /// `[weights, bias]` in that order.
    pub fn forward_tape(&self, tape: &Tape, x: Var, vars: &[Var]) -> Var {
        let rows = tape.shape(x).0;
        let affine = tape.matmul(x, vars[0]);
        let bias = tape.broadcast_rows(vars[1], rows);
        let pre = tape.add(affine, bias);
        match self.activation {
            Activation::Linear => pre,
            Activation::Relu => tape.relu(pre),
        }
    }

    /// Plain forward over a batch (n x in).
    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.in_dim() {
            return Err(Error::Shape {
                context: "dense forward",
                expected: format!("{} input columns", self.in_dim()),
                got: format!("{}", x.cols()),
            });
        }
        let mut out = Matrix::zeros(x.rows(), self.out_dim());
        for r in 0..x.rows() {
            out.row_mut(r).copy_from_slice(self.bias.value.row(0));
        }
        crate::linalg::matmul_acc(&mut out, x, &self.weights.value);
        if self.activation == Activation::Relu {
            for v in out.data_mut() {
                *v = v.max(0.0);
            }
        }
        Ok(out)
    }
}

/// `activation(W·x + b)` for a single input vector.
pub fn dense_forward(layer: &Dense, x: &[f64], activation: Activation) -> Result<Vec<f64>> {
    let mut layer = layer.clone();
    layer.activation = activation;
    let out = layer.forward(&Matrix::row_vector(x.to_vec()))?;
    Ok(out.into_vec())
}

/// LSTM layer: gate weights for input and recurrent paths plus bias, gate
/// order `[input, forget, candidate, output]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LstmLayer {
    pub input_weights: Param,     // (in x 4·hidden)
    pub recurrent_weights: Param, // (hidden x 4·hidden)
    pub bias: Param,              // (1 x 4·hidden)
    hidden: usize,
}

impl LstmLayer {
    pub fn new(in_dim: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let mut bias = Matrix::zeros(1, 4 * hidden);
        // Forget-gate bias starts at +1 so early training keeps cell memory.
        for j in hidden..2 * hidden {
            bias.set(0, j, 1.0);
        }
        LstmLayer {
            input_weights: Param::new("input_weights", glorot_uniform(in_dim, 4 * hidden, rng)),
            recurrent_weights: Param::new(
                "recurrent_weights",
                glorot_uniform(hidden, 4 * hidden, rng),
            ),
            bias: Param::new("bias", bias),
            hidden,
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden
    }

    pub fn in_dim(&self) -> usize {
        self.input_weights.value.rows()
    }

    pub fn params(&self) -> Vec<&Param> {
        vec![&self.input_weights, &self.recurrent_weights, &self.bias]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![
            &mut self.input_weights,
            &mut self.recurrent_weights,
            &mut self.bias,
        ]
    }

    /// Taped forward over a sequence of step batches, all (n x in).
    /// Starts from zero state and returns the final hidden state (n x hidden).
    pub fn forward_tape(&self, tape: &Tape, steps: &[Var], vars: &[Var]) -> Result<Var> {
        if steps.is_empty() {
            return Err(Error::InvalidInput("empty LSTM sequence".into()));
        }
        let n = tape.shape(steps[0]).0;
        let mut h = tape.leaf(Matrix::zeros(n, self.hidden));
        let mut c = tape.leaf(Matrix::zeros(n, self.hidden));
        for &x in steps {
            let (nh, nc) = tape.lstm_step(x, h, c, vars[0], vars[1], vars[2]);
            h = nh;
            c = nc;
        }
        Ok(h)
    }

    /// One plain cell update for a batch.
    pub fn step(&self, x: &Matrix, h_prev: &Matrix, c_prev: &Matrix) -> Result<(Matrix, Matrix)> {
        if x.cols() != self.in_dim() || h_prev.cols() != self.hidden || c_prev.cols() != self.hidden
        {
            return Err(Error::Shape {
                context: "lstm step",
                expected: format!("input {}, state {}", self.in_dim(), self.hidden),
                got: format!("input {}, state {}/{}", x.cols(), h_prev.cols(), c_prev.cols()),
            });
        }
        let n = x.rows();
        let hidden = self.hidden;
        let mut pre = Matrix::zeros(n, 4 * hidden);
        for r in 0..n {
            pre.row_mut(r).copy_from_slice(self.bias.value.row(0));
        }
        crate::linalg::matmul_acc(&mut pre, x, &self.input_weights.value);
        crate::linalg::matmul_acc(&mut pre, h_prev, &self.recurrent_weights.value);

        let mut h = Matrix::zeros(n, hidden);
        let mut c = Matrix::zeros(n, hidden);
        for r in 0..n {
            for j in 0..hidden {
                let p = pre.row(r);
                let i_g = stable_sigmoid(p[j]);
                let f_g = stable_sigmoid(p[hidden + j]);
                let g_g = p[2 * hidden + j].tanh();
                let o_g = stable_sigmoid(p[3 * hidden + j]);
                let c_new = f_g * c_prev.get(r, j) + i_g * g_g;
                c.set(r, j, c_new);
                h.set(r, j, o_g * c_new.tanh());
            }
        }
        Ok((h, c))
    }

    /// Runs the cell over the `l` columns of a feature matrix (features x l)
    /// from zero initial state and returns the final hidden state.
    pub fn forward_sequence(&self, input: &Matrix) -> Result<Vec<f64>> {
        if input.cols() == 0 {
            return Err(Error::InvalidInput("empty LSTM sequence".into()));
        }
        let mut h = Matrix::zeros(1, self.hidden);
        let mut c = Matrix::zeros(1, self.hidden);
        for t in 0..input.cols() {
            let step: Vec<f64> = (0..input.rows()).map(|r| input.get(r, t)).collect();
            let (nh, nc) = self.step(&Matrix::row_vector(step), &h, &c)?;
            h = nh;
            c = nc;
        }
        Ok(h.into_vec())
    }
}

fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Batch normalization over the batch dimension.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Param, // (1 x d)
    pub beta: Param,  // (1 x d)
    pub running_mean: Matrix,
    pub running_var: Matrix,
    pub momentum: f64,
    pub epsilon: f64,
}

/// Batch statistics observed during a taped training pass; fold into the
/// running stats with [`BatchNorm::update_running`] once the step is done.
#[derive(Clone, Debug)]
pub struct BatchStats {
    pub mean: Matrix,
    pub var: Matrix,
}

impl BatchNorm {
    pub fn new(dim: usize) -> Self {
        BatchNorm {
            gamma: Param::new("gamma", Matrix::filled(1, dim, 1.0)),
            beta: Param::new("beta", Matrix::zeros(1, dim)),
            running_mean: Matrix::zeros(1, dim),
            running_var: Matrix::filled(1, dim, 1.0),
            momentum: 0.99,
            epsilon: 1e-3,
        }
    }

    pub fn dim(&self) -> usize {
        self.gamma.value.cols()
    }

    pub fn params(&self) -> Vec<&Param> {
        vec![&self.gamma, &self.beta]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.gamma, &mut self.beta]
    }

    /// Taped train-mode forward: normalizes by batch mean and population
    /// variance. Batches of fewer than two rows are rejected.
    pub fn forward_tape_train(
        &self,
        tape: &Tape,
        x: Var,
        vars: &[Var],
    ) -> Result<(Var, BatchStats)> {
        let (n, _d) = tape.shape(x);
        if n < 2 {
            return Err(Error::DegenerateBatch(format!(
                "batch normalization needs at least 2 rows in train mode, got {n}"
            )));
        }
        let mean = tape.mean_rows(x);
        let centered = tape.sub(x, tape.broadcast_rows(mean, n));
        let var = tape.mean_rows(tape.square(centered));
        let std = tape.sqrt(tape.add_scalar(var, self.epsilon));
        let normalized = tape.div(centered, tape.broadcast_rows(std, n));
        let scaled = tape.mul(normalized, tape.broadcast_rows(vars[0], n));
        let out = tape.add(scaled, tape.broadcast_rows(vars[1], n));
        Ok((
            out,
            BatchStats {
                mean: tape.value(mean),
                var: tape.value(var),
            },
        ))
    }

    /// Inference-mode forward using the running statistics.
    pub fn forward_infer(&self, x: &Matrix) -> Matrix {
        let d = self.dim();
        debug_assert_eq!(x.cols(), d);
        let mut out = Matrix::zeros(x.rows(), d);
        let gamma = self.gamma.value.row(0);
        let beta = self.beta.value.row(0);
        let mean = self.running_mean.row(0);
        let var = self.running_var.row(0);
        for r in 0..x.rows() {
            let src = x.row(r);
            let dst = out.row_mut(r);
            for j in 0..d {
                dst[j] = gamma[j] * (src[j] - mean[j]) / (var[j] + self.epsilon).sqrt() + beta[j];
            }
        }
        out
    }

    /// Folds fresh batch statistics into the running estimates.
    pub fn update_running(&mut self, stats: &BatchStats) {
        let m = self.momentum;
        for (r, &b) in self
            .running_mean
            .data_mut()
            .iter_mut()
            .zip(stats.mean.data())
        {
            *r = m * *r + (1.0 - m) * b;
        }
        for (r, &b) in self
            .running_var
            .data_mut()
            .iter_mut()
            .zip(stats.var.data())
        {
            *r = m * *r + (1.0 - m) * b;
        }
    }
}

/// `(1/rho)·ln(1 + exp(rho·a))`, strictly positive and monotone in `a`.
pub fn softplus_sharpened(a: f64, rho: f64) -> Result<f64> {
    if rho <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "sharpening factor must be positive, got {rho}"
        )));
    }
    Ok(softplus_sharpened_scalar(a, rho))
}
