//! Token embedding -> single LSTM layer -> dense softmax over two classes.
//!
//! The LSTM uses ReLU where the classic cell uses tanh (candidate and output
//! activations); gates stay sigmoid. Gate blocks are ordered input, forget,
//! candidate, output. All parameters live in one flat vector so the
//! optimizer, gradient checks and the model file treat them uniformly.

use rand::Rng as _;

use crate::rng::Rng;

pub const CLASSES: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub vocab: usize,
    pub embed: usize,
    pub hidden: usize,
}

impl Shape {
    fn gates(&self) -> usize {
        4 * self.hidden
    }

    pub fn embedding(&self) -> usize {
        0
    }

    pub fn input_kernel(&self) -> usize {
        self.vocab * self.embed
    }

    pub fn recurrent_kernel(&self) -> usize {
        self.input_kernel() + self.gates() * self.embed
    }

    pub fn gate_bias(&self) -> usize {
        self.recurrent_kernel() + self.gates() * self.hidden
    }

    pub fn dense_kernel(&self) -> usize {
        self.gate_bias() + self.gates()
    }

    pub fn dense_bias(&self) -> usize {
        self.dense_kernel() + CLASSES * self.hidden
    }

    pub fn len(&self) -> usize {
        self.dense_bias() + CLASSES
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn relu(x: f64) -> f64 {
    x.max(0.0)
}

fn relu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Keras-style initialization: uniform(-0.05, 0.05) embeddings, Glorot
/// uniform kernels, zero biases except forget-gate bias 1.
pub fn init_params(shape: Shape, rng: &mut Rng) -> Vec<f64> {
    let mut p = vec![0.0; shape.len()];
    let h = shape.hidden;
    let mut fill = |range: std::ops::Range<usize>, limit: f64| {
        for x in &mut p[range] {
            *x = rng.gen_range(-limit..limit);
        }
    };
    fill(shape.embedding()..shape.input_kernel(), 0.05);
    let gates = shape.gates();
    fill(
        shape.input_kernel()..shape.recurrent_kernel(),
        (6.0 / (shape.embed + gates) as f64).sqrt(),
    );
    fill(
        shape.recurrent_kernel()..shape.gate_bias(),
        (6.0 / (h + gates) as f64).sqrt(),
    );
    fill(
        shape.dense_kernel()..shape.dense_bias(),
        (6.0 / (h + CLASSES) as f64).sqrt(),
    );
    for x in &mut p[shape.gate_bias() + h..shape.gate_bias() + 2 * h] {
        *x = 1.0;
    }
    p
}

/// Per-step activations kept for backpropagation.
#[derive(Debug, Default)]
pub struct Trace {
    /// gate activations per step, `4 * hidden` each: i, f, g, o
    gates: Vec<f64>,
    /// pre-activation of the candidate block per step
    cand_pre: Vec<f64>,
    /// cell state per step, with the zero initial state first
    cells: Vec<f64>,
    /// hidden state per step, with the zero initial state first
    hiddens: Vec<f64>,
}

pub fn forward(shape: Shape, p: &[f64], seq: &[usize], trace: &mut Trace) -> [f64; CLASSES] {
    let (e, h) = (shape.embed, shape.hidden);
    let g4 = shape.gates();
    let w = &p[shape.input_kernel()..shape.recurrent_kernel()];
    let u = &p[shape.recurrent_kernel()..shape.gate_bias()];
    let bias = &p[shape.gate_bias()..shape.dense_kernel()];

    trace.gates.clear();
    trace.cand_pre.clear();
    trace.cells.clear();
    trace.hiddens.clear();
    trace.cells.resize(h, 0.0);
    trace.hiddens.resize(h, 0.0);

    let mut z = vec![0.0; g4];
    for (t, &tok) in seq.iter().enumerate() {
        let x = &p[tok * e..(tok + 1) * e];
        let h_prev = &trace.hiddens[t * h..(t + 1) * h];
        for (r, zr) in z.iter_mut().enumerate() {
            let wr = &w[r * e..(r + 1) * e];
            let ur = &u[r * h..(r + 1) * h];
            let mut acc = bias[r];
            for k in 0..e {
                acc += wr[k] * x[k];
            }
            for k in 0..h {
                acc += ur[k] * h_prev[k];
            }
            *zr = acc;
        }
        trace.cand_pre.extend_from_slice(&z[2 * h..3 * h]);
        for j in 0..h {
            let i = sigmoid(z[j]);
            let f = sigmoid(z[h + j]);
            let g = relu(z[2 * h + j]);
            let o = sigmoid(z[3 * h + j]);
            let c = f * trace.cells[t * h + j] + i * g;
            trace.cells.push(c);
            trace.hiddens.push(o * relu(c));
            z[j] = i;
            z[h + j] = f;
            z[2 * h + j] = g;
            z[3 * h + j] = o;
        }
        trace.gates.extend_from_slice(&z);
    }

    let last = &trace.hiddens[seq.len() * h..(seq.len() + 1) * h];
    let wd = &p[shape.dense_kernel()..shape.dense_bias()];
    let bd = &p[shape.dense_bias()..];
    let mut logits = [0.0; CLASSES];
    for (c, l) in logits.iter_mut().enumerate() {
        *l = bd[c] + (0..h).map(|k| wd[c * h + k] * last[k]).sum::<f64>();
    }
    logits
}

/// Adds d(loss)/d(params) for one sequence to `grad`, given the gradient of
/// the loss with respect to the logits.
pub fn backward(
    shape: Shape,
    p: &[f64],
    seq: &[usize],
    trace: &Trace,
    dlogits: [f64; CLASSES],
    grad: &mut [f64],
) {
    let (e, h) = (shape.embed, shape.hidden);
    let g4 = shape.gates();
    let t_len = seq.len();

    let last = &trace.hiddens[t_len * h..(t_len + 1) * h];
    let dk = shape.dense_kernel();
    let mut dh = vec![0.0; h];
    for (c, &dl) in dlogits.iter().enumerate() {
        grad[shape.dense_bias() + c] += dl;
        for k in 0..h {
            grad[dk + c * h + k] += dl * last[k];
            dh[k] += dl * p[dk + c * h + k];
        }
    }

    let (wi, ui, bi) = (shape.input_kernel(), shape.recurrent_kernel(), shape.gate_bias());
    let mut dc = vec![0.0; h];
    let mut dz = vec![0.0; g4];
    for t in (0..t_len).rev() {
        let gates = &trace.gates[t * g4..(t + 1) * g4];
        let c_prev = &trace.cells[t * h..(t + 1) * h];
        let c = &trace.cells[(t + 1) * h..(t + 2) * h];
        let h_prev = &trace.hiddens[t * h..(t + 1) * h];
        let cand_pre = &trace.cand_pre[t * h..(t + 1) * h];
        for j in 0..h {
            let (i, f, g, o) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
            dc[j] += dh[j] * o * relu_grad(c[j]);
            dz[j] = dc[j] * g * i * (1.0 - i);
            dz[h + j] = dc[j] * c_prev[j] * f * (1.0 - f);
            dz[2 * h + j] = dc[j] * i * relu_grad(cand_pre[j]);
            dz[3 * h + j] = dh[j] * relu(c[j]) * o * (1.0 - o);
            dc[j] *= f;
        }
        let tok = seq[t];
        dh.iter_mut().for_each(|x| *x = 0.0);
        for (r, &d) in dz.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            grad[bi + r] += d;
            for k in 0..e {
                grad[wi + r * e + k] += d * p[tok * e + k];
                grad[tok * e + k] += d * p[wi + r * e + k];
            }
            for k in 0..h {
                grad[ui + r * h + k] += d * h_prev[k];
                dh[k] += d * p[ui + r * h + k];
            }
        }
    }
}

/// Numerically stable softmax over the two logits.
pub fn softmax(logits: [f64; CLASSES]) -> [f64; CLASSES] {
    let m = logits[0].max(logits[1]);
    let e0 = (logits[0] - m).exp();
    let e1 = (logits[1] - m).exp();
    [e0 / (e0 + e1), e1 / (e0 + e1)]
}

/// Cross-entropy loss of one sequence; accumulates its gradient into `grad`.
pub fn loss_and_grad(
    shape: Shape,
    p: &[f64],
    seq: &[usize],
    target: usize,
    trace: &mut Trace,
    grad: &mut [f64],
) -> f64 {
    let probs = softmax(forward(shape, p, seq, trace));
    let mut dlogits = probs;
    dlogits[target] -= 1.0;
    backward(shape, p, seq, trace, dlogits, grad);
    -probs[target].max(1e-300).ln()
}

/// Adam with the usual defaults (beta1 0.9, beta2 0.999, eps 1e-7).
pub struct Adam {
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    pub fn new(len: usize, lr: f64) -> Self {
        Self {
            lr,
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }

    pub fn update(&mut self, params: &mut [f64], grad: &[f64]) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const EPS: f64 = 1e-7;
        self.step += 1;
        let c1 = 1.0 - B1.powi(self.step);
        let c2 = 1.0 - B2.powi(self.step);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = B1 * self.m[i] + (1.0 - B1) * g;
            self.v[i] = B2 * self.v[i] + (1.0 - B2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + EPS);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    /// Central finite differences against the analytic gradient.
    #[test]
    fn gradient_matches_finite_differences() {
        let shape = Shape {
            vocab: 6,
            embed: 3,
            hidden: 4,
        };
        let mut rng = seeded(11);
        let mut p = init_params(shape, &mut rng);
        // widen the weights so most ReLU units are away from their kink
        for x in p.iter_mut() {
            *x *= 3.0;
        }
        let seq = [1, 4, 2, 5, 1];
        let mut trace = Trace::default();
        let mut grad = vec![0.0; shape.len()];
        loss_and_grad(shape, &p, &seq, 1, &mut trace, &mut grad);

        let eps = 1e-6;
        let mut checked = 0;
        for i in 0..shape.len() {
            let mut plus = p.clone();
            plus[i] += eps;
            let mut minus = p.clone();
            minus[i] -= eps;
            let mut scratch = vec![0.0; shape.len()];
            let lp = loss_and_grad(shape, &plus, &seq, 1, &mut trace, &mut scratch);
            let lm = loss_and_grad(shape, &minus, &seq, 1, &mut trace, &mut scratch);
            let numeric = (lp - lm) / (2.0 * eps);
            let err = (numeric - grad[i]).abs();
            assert!(
                err < 1e-5 * (1.0 + numeric.abs()),
                "param {i}: analytic {} numeric {numeric}",
                grad[i]
            );
            checked += 1;
        }
        assert_eq!(checked, shape.len());
    }

    #[test]
    fn empty_sequence_uses_dense_bias_only() {
        let shape = Shape {
            vocab: 3,
            embed: 2,
            hidden: 2,
        };
        let mut p = init_params(shape, &mut seeded(1));
        p[shape.dense_bias()] = 0.25;
        p[shape.dense_bias() + 1] = -0.5;
        let logits = forward(shape, &p, &[], &mut Trace::default());
        assert_eq!(logits, [0.25, -0.5]);
    }
}
