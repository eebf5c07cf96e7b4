//! Single-layer LSTM cell with a linear output head.
//!
//! All meta-parameters Φ live in one flat vector so that perturbation-based
//! training, Adam and checkpointing work on a single slice. Layout:
//!
//! | block     | shape              |
//! |-----------|--------------------|
//! | `w_gates` | `4H × (D + H)`     |
//! | `b_gates` | `4H`               |
//! | `w_out`   | `N × H`            |
//! | `b_out`   | `N`                |
//!
//! Gate rows are stacked in the order input, forget, candidate, output. The
//! cell input is the concatenation `[x; h]`.

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Identifier written into every checkpoint.
pub const CHECKPOINT_FORMAT: &str = "qmeta-lstm/1";

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmWeights {
    input_size: usize,
    hidden_size: usize,
    output_size: usize,
    params: Vec<f64>,
}

/// Activations of one forward step, kept for backpropagation through time.
#[derive(Debug, Clone)]
pub struct StepCache {
    concat: Vec<f64>,
    c_prev: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    tanh_c: Vec<f64>,
    h: Vec<f64>,
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl LstmWeights {
    pub fn zeros(input_size: usize, hidden_size: usize, output_size: usize) -> Self {
        let len = Self::param_count(input_size, hidden_size, output_size);
        Self {
            input_size,
            hidden_size,
            output_size,
            params: vec![0.0; len],
        }
    }

    /// Weights `N(0, std²)`, zero biases except the forget gate at `+1`.
    pub fn random<R: Rng + ?Sized>(
        input_size: usize,
        hidden_size: usize,
        output_size: usize,
        std: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let normal = Normal::new(0.0, std)
            .map_err(|_| Error::config(format!("invalid weight init std {std}")))?;
        let mut w = Self::zeros(input_size, hidden_size, output_size);
        let (wg, bg, wo, _) = w.offsets();
        for v in &mut w.params[wg.0..wg.1] {
            *v = normal.sample(rng);
        }
        for v in &mut w.params[bg.0 + hidden_size..bg.0 + 2 * hidden_size] {
            *v = 1.0;
        }
        for v in &mut w.params[wo.0..wo.1] {
            *v = normal.sample(rng);
        }
        Ok(w)
    }

    fn param_count(d: usize, h: usize, n: usize) -> usize {
        4 * h * (d + h) + 4 * h + n * h + n
    }

    fn offsets(&self) -> ((usize, usize), (usize, usize), (usize, usize), (usize, usize)) {
        let (d, h, n) = (self.input_size, self.hidden_size, self.output_size);
        let wg = (0, 4 * h * (d + h));
        let bg = (wg.1, wg.1 + 4 * h);
        let wo = (bg.1, bg.1 + n * h);
        let bo = (wo.1, wo.1 + n);
        (wg, bg, wo, bo)
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden_size
    }

    pub fn output_size(&self) -> usize {
        self.output_size
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.params
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Same shapes, new flat values.
    pub fn with_params(&self, params: Vec<f64>) -> Result<Self> {
        if params.len() != self.params.len() {
            return Err(Error::config("flat parameter vector has the wrong length"));
        }
        Ok(Self {
            params,
            ..self.clone()
        })
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|v| v.is_finite())
    }

    pub fn w_gates(&self) -> &[f64] {
        let (wg, ..) = self.offsets();
        &self.params[wg.0..wg.1]
    }

    pub fn b_gates(&self) -> &[f64] {
        let (_, bg, ..) = self.offsets();
        &self.params[bg.0..bg.1]
    }

    pub fn w_out(&self) -> &[f64] {
        let (_, _, wo, _) = self.offsets();
        &self.params[wo.0..wo.1]
    }

    pub fn b_out(&self) -> &[f64] {
        let (.., bo) = self.offsets();
        &self.params[bo.0..bo.1]
    }

    fn check_shapes(&self, input: &[f64], state: &LstmState) -> Result<()> {
        if input.len() != self.input_size
            || state.h.len() != self.hidden_size
            || state.c.len() != self.hidden_size
        {
            return Err(Error::config(format!(
                "LSTM expects input {} and hidden {}, got input {}, h {}, c {}",
                self.input_size,
                self.hidden_size,
                input.len(),
                state.h.len(),
                state.c.len()
            )));
        }
        Ok(())
    }

    /// One cell step: returns the head output `Ω` and the next state.
    pub fn forward(&self, input: &[f64], state: &LstmState) -> Result<(Vec<f64>, LstmState)> {
        let (omega, next, _) = self.forward_cached(input, state)?;
        Ok((omega, next))
    }

    pub fn forward_cached(
        &self,
        input: &[f64],
        state: &LstmState,
    ) -> Result<(Vec<f64>, LstmState, StepCache)> {
        self.check_shapes(input, state)?;
        let hs = self.hidden_size;
        let width = self.input_size + hs;
        let mut concat = Vec::with_capacity(width);
        concat.extend_from_slice(input);
        concat.extend_from_slice(&state.h);

        let w = self.w_gates();
        let b = self.b_gates();
        let pre: Vec<f64> = (0..4 * hs)
            .map(|r| {
                let row = &w[r * width..(r + 1) * width];
                b[r] + row.iter().zip(&concat).map(|(a, x)| a * x).sum::<f64>()
            })
            .collect();
        let i: Vec<f64> = pre[..hs].iter().map(|&z| sigmoid(z)).collect();
        let f: Vec<f64> = pre[hs..2 * hs].iter().map(|&z| sigmoid(z)).collect();
        let g: Vec<f64> = pre[2 * hs..3 * hs].iter().map(|&z| z.tanh()).collect();
        let o: Vec<f64> = pre[3 * hs..].iter().map(|&z| sigmoid(z)).collect();
        let c: Vec<f64> = (0..hs).map(|k| f[k] * state.c[k] + i[k] * g[k]).collect();
        let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
        let h: Vec<f64> = (0..hs).map(|k| o[k] * tanh_c[k]).collect();

        let wo = self.w_out();
        let bo = self.b_out();
        let omega: Vec<f64> = (0..self.output_size)
            .map(|r| bo[r] + wo[r * hs..(r + 1) * hs].iter().zip(&h).map(|(a, x)| a * x).sum::<f64>())
            .collect();

        let cache = StepCache {
            concat,
            c_prev: state.c.clone(),
            i,
            f,
            g,
            o,
            tanh_c,
            h: h.clone(),
        };
        Ok((omega, LstmState { h, c }, cache))
    }

    /// Backpropagation through a sequence of steps started from a fixed
    /// initial state. `d_omega[t]` is `∂loss/∂Ω_t`; returns `∂loss/∂Φ` in the
    /// flat layout.
    pub fn backward(&self, caches: &[StepCache], d_omega: &[Vec<f64>]) -> Result<Vec<f64>> {
        if caches.len() != d_omega.len() {
            return Err(Error::config("one output gradient per cached step is required"));
        }
        let hs = self.hidden_size;
        let d = self.input_size;
        let width = d + hs;
        let (wg, bg, wo, bo) = self.offsets();
        let mut grad = vec![0.0; self.params.len()];
        let w = self.w_gates();
        let w_out = self.w_out();
        let mut dh_next = vec![0.0; hs];
        let mut dc_next = vec![0.0; hs];

        for (cache, dw) in caches.iter().zip(d_omega).rev() {
            if dw.len() != self.output_size {
                return Err(Error::config("output gradient has the wrong length"));
            }
            let mut dh = dh_next.clone();
            for (r, &g_r) in dw.iter().enumerate() {
                grad[bo.0 + r] += g_r;
                for k in 0..hs {
                    grad[wo.0 + r * hs + k] += g_r * cache.h[k];
                    dh[k] += w_out[r * hs + k] * g_r;
                }
            }
            let mut dz = vec![0.0; 4 * hs];
            for k in 0..hs {
                let d_o = dh[k] * cache.tanh_c[k];
                let dc = dh[k] * cache.o[k] * (1.0 - cache.tanh_c[k] * cache.tanh_c[k]) + dc_next[k];
                let di = dc * cache.g[k];
                let dg = dc * cache.i[k];
                let df = dc * cache.c_prev[k];
                dc_next[k] = dc * cache.f[k];
                dz[k] = di * cache.i[k] * (1.0 - cache.i[k]);
                dz[hs + k] = df * cache.f[k] * (1.0 - cache.f[k]);
                dz[2 * hs + k] = dg * (1.0 - cache.g[k] * cache.g[k]);
                dz[3 * hs + k] = d_o * cache.o[k] * (1.0 - cache.o[k]);
            }
            let mut d_concat = vec![0.0; width];
            for (r, &dz_r) in dz.iter().enumerate() {
                if dz_r == 0.0 {
                    continue;
                }
                grad[bg.0 + r] += dz_r;
                let row = wg.0 + r * width;
                for col in 0..width {
                    grad[row + col] += dz_r * cache.concat[col];
                    d_concat[col] += w[r * width + col] * dz_r;
                }
            }
            dh_next.copy_from_slice(&d_concat[d..]);
        }
        Ok(grad)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let (d, h, n) = (self.input_size, self.hidden_size, self.output_size);
        let tensor = |name: &str, shape: Vec<usize>, values: &[f64]| Tensor {
            name: name.to_string(),
            shape,
            values: values.to_vec(),
        };
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            input_size: d,
            hidden_size: h,
            output_size: n,
            tensors: vec![
                tensor("w_gates", vec![4 * h, d + h], self.w_gates()),
                tensor("b_gates", vec![4 * h], self.b_gates()),
                tensor("w_out", vec![n, h], self.w_out()),
                tensor("b_out", vec![n], self.b_out()),
            ],
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(Error::input(format!("unsupported checkpoint format `{}`", ckpt.format)));
        }
        let mut w = Self::zeros(ckpt.input_size, ckpt.hidden_size, ckpt.output_size);
        let expected = w.to_checkpoint().tensors;
        if ckpt.tensors.len() != expected.len() {
            return Err(Error::input("checkpoint must contain w_gates, b_gates, w_out, b_out"));
        }
        let mut params = Vec::with_capacity(w.params.len());
        for (got, want) in ckpt.tensors.iter().zip(&expected) {
            if got.name != want.name || got.shape != want.shape {
                return Err(Error::input(format!(
                    "checkpoint tensor `{}` {:?} does not match expected `{}` {:?}",
                    got.name, got.shape, want.name, want.shape
                )));
            }
            if got.values.len() != got.shape.iter().product::<usize>() {
                return Err(Error::input(format!("tensor `{}` has the wrong number of values", got.name)));
            }
            params.extend_from_slice(&got.values);
        }
        w.params = params;
        if !w.is_finite() {
            return Err(Error::input("checkpoint contains non-finite values"));
        }
        Ok(w)
    }

    pub fn save_json<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer_pretty(writer, &self.to_checkpoint())
            .map_err(|e| Error::Io(std::io::Error::other(e)))
    }

    pub fn load_json<R: Read>(reader: R) -> Result<Self> {
        let ckpt: Checkpoint =
            serde_json::from_reader(reader).map_err(|e| Error::input(format!("bad checkpoint: {e}")))?;
        Self::from_checkpoint(&ckpt)
    }
}

/// Serialized Φ: a shape header plus named row-major tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub input_size: usize,
    pub hidden_size: usize,
    pub output_size: usize,
    pub tensors: Vec<Tensor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}
