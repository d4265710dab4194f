//! Softmax MLP policy with hand-written backpropagation, Adam, and
//! parameter checkpoints.

mod adam;
mod checkpoint;
mod params;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use params::ParamVector;

use rand::Rng;

use crate::rng::RngStream;
use crate::{Error, Result};

/// Hidden widths of the policy network.
pub const POLICY_HIDDEN: [usize; 3] = [500, 250, 120];

/// Fully connected network: ReLU after every layer but the last, softmax
/// over the last layer's logits.
///
/// Parameters are stored flat, layer by layer: the weight matrix
/// (`fan_out x fan_in`, row-major) followed by the bias vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mlp {
    sizes: Vec<usize>,
}

/// `C (m x n) = A (m x k) * B (k x n)` with arbitrary strides; `beta` scales the old `C`.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(k == 0 || (m - 1) * rsa + (k - 1) * csa < a.len());
    assert!(k == 0 || (k - 1) * rsb + (n - 1) * csb < b.len());
    assert!(c.len() >= m * n);
    // SAFETY: the asserts above keep every strided access inside the slices,
    // and `c` does not alias `a` or `b` (distinct borrows).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Numerically stable log-softmax, in place.
pub fn log_softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = z.iter().map(|v| (v - max).exp()).sum();
    let lse = max + sum.ln();
    for v in z.iter_mut() {
        *v -= lse;
    }
}

/// Softmax of `z`; entries sum to one within rounding.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Activations kept for the backward pass: `acts[0]` is the input batch,
/// `acts[l]` the post-ReLU output of layer `l`, last entry the logits.
struct Tape {
    acts: Vec<Vec<f64>>,
}

impl Mlp {
    pub fn new(input: usize, hidden: &[usize], output: usize) -> Result<Self> {
        let mut sizes = vec![input];
        sizes.extend_from_slice(hidden);
        sizes.push(output);
        if sizes.contains(&0) {
            return Err(Error::invalid(format!("layer sizes must be positive, got {sizes:?}")));
        }
        Ok(Mlp { sizes })
    }

    /// The 500/250/120 policy network for the given observation and action counts.
    pub fn policy(observation_len: usize, num_actions: usize) -> Result<Self> {
        Mlp::new(observation_len, &POLICY_HIDDEN, num_actions)
    }

    pub fn from_sizes(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::invalid("a network needs at least input and output sizes"));
        }
        Mlp::new(sizes[0], &sizes[1..sizes.len() - 1], sizes[sizes.len() - 1])
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_len(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_len(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    fn layers(&self) -> usize {
        self.sizes.len() - 1
    }

    /// Offsets of layer `l`'s weights and bias in the flat vector.
    fn offsets(&self, l: usize) -> (usize, usize) {
        let before: usize = (0..l).map(|i| (self.sizes[i] + 1) * self.sizes[i + 1]).sum();
        (before, before + self.sizes[l] * self.sizes[l + 1])
    }

    pub fn param_len(&self) -> usize {
        (0..self.layers()).map(|i| (self.sizes[i] + 1) * self.sizes[i + 1]).sum()
    }

    /// He-uniform weights for the ReLU layers, Glorot-uniform for the
    /// softmax layer, zero biases.
    pub fn init_params(&self, rng: &mut RngStream) -> ParamVector {
        let mut p = ParamVector::zeros(self.param_len());
        for l in 0..self.layers() {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let bound = if l + 1 < self.layers() {
                (6.0 / fan_in as f64).sqrt()
            } else {
                (6.0 / (fan_in + fan_out) as f64).sqrt()
            };
            let (w, b) = self.offsets(l);
            for v in &mut p[w..b] {
                *v = rng.gen_range(-bound..bound);
            }
        }
        p
    }

    fn check(&self, params: &ParamVector, obs: &[f64], batch: usize) -> Result<()> {
        if params.len() != self.param_len() {
            return Err(Error::dim(format!("network has {} parameters, got {}", self.param_len(), params.len())));
        }
        if obs.len() != batch * self.input_len() {
            return Err(Error::dim(format!(
                "expected {batch} observations of length {}, got {} values",
                self.input_len(),
                obs.len()
            )));
        }
        if obs.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("observation contains non-finite values"));
        }
        Ok(())
    }

    fn forward_tape(&self, params: &ParamVector, obs: &[f64], batch: usize) -> Tape {
        let mut acts = Vec::with_capacity(self.sizes.len());
        acts.push(obs.to_vec());
        for l in 0..self.layers() {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let (w, b) = self.offsets(l);
            let mut z = Vec::with_capacity(batch * fan_out);
            for _ in 0..batch {
                z.extend_from_slice(&params[b..b + fan_out]);
            }
            // z (B x out) += x (B x in) * W^T (in x out)
            gemm(batch, fan_in, fan_out, &acts[l], (fan_in, 1), &params[w..b], (1, fan_in), 1.0, &mut z);
            if l + 1 < self.layers() {
                for v in &mut z {
                    *v = v.max(0.0);
                }
            }
            acts.push(z);
        }
        Tape { acts }
    }

    /// Raw logits for a batch of observations (row-major, `batch x output`).
    pub fn logits_batch(&self, params: &ParamVector, obs: &[f64], batch: usize) -> Result<Vec<f64>> {
        self.check(params, obs, batch)?;
        Ok(self.forward_tape(params, obs, batch).acts.pop().unwrap())
    }

    /// Log-probabilities for a batch of observations.
    pub fn log_probs_batch(&self, params: &ParamVector, obs: &[f64], batch: usize) -> Result<Vec<f64>> {
        let mut z = self.logits_batch(params, obs, batch)?;
        for row in z.chunks_mut(self.output_len()) {
            log_softmax_in_place(row);
        }
        Ok(z)
    }

    /// Action distribution for one observation.
    pub fn forward(&self, params: &ParamVector, obs: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits_batch(params, obs, 1)?))
    }

    pub fn log_probs(&self, params: &ParamVector, obs: &[f64]) -> Result<Vec<f64>> {
        self.log_probs_batch(params, obs, 1)
    }

    /// `sum_i weights[i] * grad log pi(actions[i] | obs_i)` over a batch.
    pub fn score_sum(
        &self,
        params: &ParamVector,
        obs: &[f64],
        actions: &[usize],
        weights: &[f64],
    ) -> Result<ParamVector> {
        let batch = actions.len();
        if weights.len() != batch {
            return Err(Error::dim("one weight per action required"));
        }
        self.check(params, obs, batch)?;
        let out = self.output_len();
        if let Some(&a) = actions.iter().find(|&&a| a >= out) {
            return Err(Error::invalid(format!("action {a} out of range for {out} outputs")));
        }
        let tape = self.forward_tape(params, obs, batch);
        let mut grad = ParamVector::zeros(self.param_len());
        // d log pi(a) / d logits = onehot(a) - pi
        let mut delta = tape.acts[self.layers()].clone();
        for (i, row) in delta.chunks_mut(out).enumerate() {
            let p = softmax(row);
            for (j, v) in row.iter_mut().enumerate() {
                let onehot = if j == actions[i] { 1.0 } else { 0.0 };
                *v = weights[i] * (onehot - p[j]);
            }
        }
        for l in (0..self.layers()).rev() {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let (w, b) = self.offsets(l);
            // dW (out x in) = delta^T (out x B) * x (B x in)
            gemm(fan_out, batch, fan_in, &delta, (1, fan_out), &tape.acts[l], (fan_in, 1), 0.0, &mut grad[w..b]);
            let db = &mut grad[b..b + fan_out];
            for row in delta.chunks(fan_out) {
                for (g, d) in db.iter_mut().zip(row) {
                    *g += d;
                }
            }
            if l > 0 {
                // delta_prev (B x in) = delta (B x out) * W (out x in), masked by ReLU
                let mut prev = vec![0.0; batch * fan_in];
                gemm(batch, fan_out, fan_in, &delta, (fan_out, 1), &params[w..b], (fan_in, 1), 0.0, &mut prev);
                for (d, a) in prev.iter_mut().zip(&tape.acts[l]) {
                    if *a <= 0.0 {
                        *d = 0.0;
                    }
                }
                delta = prev;
            }
        }
        Ok(grad)
    }

    /// Gradient of `log pi(action | obs)` with respect to every parameter.
    pub fn grad_logprob(&self, params: &ParamVector, obs: &[f64], action: usize) -> Result<ParamVector> {
        self.score_sum(params, obs, &[action], &[1.0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    fn tiny() -> (Mlp, ParamVector) {
        // 2-4-3 network with hand-picked weights
        let net = Mlp::new(2, &[4], 3).unwrap();
        let p: Vec<f64> = vec![
            0.5, -0.2, // h0
            -0.3, 0.8, // h1
            0.1, 0.1, // h2
            -0.6, -0.4, // h3
            0.05, -0.05, 0.0, 0.2, // hidden bias
            1.0, -1.0, 0.5, 0.0, // out0
            0.0, 0.5, -0.5, 1.0, // out1
            -0.2, 0.3, 0.7, -0.1, // out2
            0.1, 0.0, -0.1, // out bias
        ];
        (net, ParamVector::from(p))
    }

    #[test]
    fn hand_evaluated_forward() {
        let (net, p) = tiny();
        let x = [1.0, 2.0];
        // hidden: relu([0.15, 1.25, 0.3, -1.2]) = [0.15, 1.25, 0.3, 0]
        let z = [0.15 - 1.25 + 0.15 + 0.1, 0.625 - 0.15 + 0.0, -0.03 + 0.375 + 0.21 - 0.1];
        let e: Vec<f64> = z.iter().map(|v: &f64| v.exp()).collect();
        let s: f64 = e.iter().sum();
        let probs = net.forward(&p, &x).unwrap();
        for i in 0..3 {
            assert!((probs[i] - e[i] / s).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_params_uniform() {
        let net = Mlp::new(5, &[7, 3], 6).unwrap();
        let p = ParamVector::zeros(net.param_len());
        let probs = net.forward(&p, &[0.3, -1.0, 2.0, 0.0, 1.0]).unwrap();
        for v in probs {
            assert!((v - 1.0 / 6.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_shift_and_overflow() {
        let a = softmax(&[1.0, 2.0, 3.0]);
        let b = softmax(&[1001.0, 1002.0, 1003.0]);
        for i in 0..3 {
            assert!((a[i] - b[i]).abs() < 1e-15);
        }
        let c = softmax(&[1e4, -1e4, 0.0]);
        assert!(c.iter().all(|v| v.is_finite()));
        assert!((c.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let mut l = vec![1e4, -1e4];
        log_softmax_in_place(&mut l);
        assert_eq!(l[0], 0.0);
        assert!(l[1].is_finite());
    }

    #[test]
    fn simplex_on_random_net() {
        let net = Mlp::new(23, &[50, 25, 12], 16).unwrap();
        let p = net.init_params(&mut stream(3, Stream::PolicyInit));
        let x: Vec<f64> = (0..23).map(|i| (i as f64 * 0.37).sin()).collect();
        let probs = net.forward(&p, &x).unwrap();
        assert!(probs.iter().all(|&v| v > 0.0));
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn non_finite_input_rejected() {
        let (net, p) = tiny();
        assert!(net.forward(&p, &[f64::NAN, 0.0]).is_err());
        assert!(net.forward(&p, &[0.0]).is_err());
    }

    #[test]
    fn init_is_deterministic_with_zero_bias() {
        let net = Mlp::policy(23, 16).unwrap();
        let a = net.init_params(&mut stream(5, Stream::PolicyInit));
        let b = net.init_params(&mut stream(5, Stream::PolicyInit));
        assert_eq!(a, b);
        for l in 0..net.layers() {
            let (_, bias) = net.offsets(l);
            assert!(a[bias..bias + net.sizes[l + 1]].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn he_variance_on_wide_layer() {
        let net = Mlp::new(500, &[250], 4).unwrap();
        let p = net.init_params(&mut stream(6, Stream::PolicyInit));
        let w = &p[..500 * 250];
        let var = w.iter().map(|v| v * v).sum::<f64>() / w.len() as f64;
        let target = 2.0 / 500.0;
        assert!((var - target).abs() < 0.1 * target, "{var} vs {target}");
    }

    #[test]
    fn score_identity() {
        let net = Mlp::new(4, &[6, 5], 5).unwrap();
        let p = net.init_params(&mut stream(8, Stream::PolicyInit));
        let x = [0.2, -0.4, 1.1, 0.5];
        let probs = net.forward(&p, &x).unwrap();
        let mut acc = ParamVector::zeros(net.param_len());
        for (a, pa) in probs.iter().enumerate() {
            acc.axpy(*pa, &net.grad_logprob(&p, &x, a).unwrap());
        }
        assert!(acc.norm_inf() < 1e-8);
    }

    #[test]
    fn uniform_linear_policy_gradient() {
        // no hidden layer: logits = W x + b with W = 0
        let net = Mlp::new(3, &[], 2).unwrap();
        let p = ParamVector::zeros(net.param_len());
        let x = [1.0, -2.0, 0.5];
        let g = net.grad_logprob(&p, &x, 0).unwrap();
        let expected = [0.5, -1.0, 0.25, -0.5, 1.0, -0.25, 0.5, -0.5];
        for (a, b) in g.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn batch_score_matches_sum_of_singles() {
        let net = Mlp::new(4, &[8, 6], 3).unwrap();
        let p = net.init_params(&mut stream(2, Stream::PolicyInit));
        let obs = [0.1, 0.2, -0.3, 0.9, 1.0, -1.0, 0.5, 0.0, -0.7, 0.3, 0.3, 0.1];
        let actions = [2, 0, 1];
        let w = [1.5, -0.5, 2.0];
        let batch = net.score_sum(&p, &obs, &actions, &w).unwrap();
        let mut acc = ParamVector::zeros(net.param_len());
        for i in 0..3 {
            acc.axpy(w[i], &net.grad_logprob(&p, &obs[i * 4..(i + 1) * 4], actions[i]).unwrap());
        }
        for (a, b) in batch.iter().zip(acc.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
