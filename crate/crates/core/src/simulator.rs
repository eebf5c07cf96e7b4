//! Dense statevector simulation.
//!
//! Gates act in place on the amplitude vector through strided pair updates;
//! no `2^q × 2^q` matrix is ever built. Rotations follow the half-angle
//! convention `R_P(φ) = exp(−iφP/2)`, so `⟨Z⟩ = cos φ` for `RY(φ)|0⟩`.
//!
//! Qubit `k` corresponds to bit `k` of the basis-state index (little endian).

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Binomial, Distribution};

use crate::{Error, Result};

/// Largest register the simulator accepts.
pub const MAX_QUBITS: usize = 20;

/// A single gate application.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GateOp {
    Rx { target: usize, angle: f64 },
    Ry { target: usize, angle: f64 },
    Rz { target: usize, angle: f64 },
    Cz { control: usize, target: usize },
}

impl GateOp {
    fn validate(&self, num_qubits: usize) -> Result<()> {
        let check = |q: usize| {
            if q >= num_qubits {
                Err(Error::config(format!(
                    "qubit index {q} out of range for {num_qubits} qubits"
                )))
            } else {
                Ok(())
            }
        };
        match *self {
            GateOp::Rx { target, angle }
            | GateOp::Ry { target, angle }
            | GateOp::Rz { target, angle } => {
                check(target)?;
                if !angle.is_finite() {
                    return Err(Error::numeric(format!("non-finite rotation angle {angle}")));
                }
                Ok(())
            }
            GateOp::Cz { control, target } => {
                check(control)?;
                check(target)?;
                if control == target {
                    return Err(Error::config("CZ control and target must differ"));
                }
                Ok(())
            }
        }
    }
}

/// Pure state of `num_qubits` qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct Statevector {
    num_qubits: usize,
    amplitudes: Vec<Complex64>,
}

/// `|0…0⟩` on `q` qubits.
pub fn init_zero_state(q: usize) -> Result<Statevector> {
    Statevector::zero(q)
}

impl Statevector {
    pub fn zero(num_qubits: usize) -> Result<Self> {
        if !(1..=MAX_QUBITS).contains(&num_qubits) {
            return Err(Error::config(format!(
                "qubit count must be in 1..={MAX_QUBITS}, got {num_qubits}"
            )));
        }
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1 << num_qubits];
        amplitudes[0] = Complex64::new(1.0, 0.0);
        Ok(Self {
            num_qubits,
            amplitudes,
        })
    }

    /// Wraps an explicit amplitude vector. The length must be a power of two
    /// and the vector must be normalised within `1e-10`.
    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self> {
        let len = amplitudes.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(Error::config(format!(
                "amplitude vector length {len} is not a power of two ≥ 2"
            )));
        }
        let num_qubits = len.trailing_zeros() as usize;
        if num_qubits > MAX_QUBITS {
            return Err(Error::config("too many qubits"));
        }
        let state = Self {
            num_qubits,
            amplitudes,
        };
        if (state.norm_sqr() - 1.0).abs() > 1e-10 {
            return Err(Error::config("amplitudes are not normalised"));
        }
        Ok(state)
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Probability of measuring basis state `index`.
    pub fn probability(&self, index: usize) -> f64 {
        self.amplitudes[index].norm_sqr()
    }

    pub fn apply(&mut self, op: &GateOp) -> Result<()> {
        op.validate(self.num_qubits)?;
        match *op {
            GateOp::Rx { target, angle } => {
                let (s, c) = (angle / 2.0).sin_cos();
                let diag = Complex64::new(c, 0.0);
                let off = Complex64::new(0.0, -s);
                self.apply_single(target, [diag, off, off, diag]);
            }
            GateOp::Ry { target, angle } => {
                let (s, c) = (angle / 2.0).sin_cos();
                self.apply_single(
                    target,
                    [
                        Complex64::new(c, 0.0),
                        Complex64::new(-s, 0.0),
                        Complex64::new(s, 0.0),
                        Complex64::new(c, 0.0),
                    ],
                );
            }
            GateOp::Rz { target, angle } => {
                let (s, c) = (angle / 2.0).sin_cos();
                let lo = Complex64::new(c, -s);
                let hi = Complex64::new(c, s);
                let bit = 1usize << target;
                for (i, amp) in self.amplitudes.iter_mut().enumerate() {
                    *amp *= if i & bit == 0 { lo } else { hi };
                }
            }
            GateOp::Cz { control, target } => {
                let mask = (1usize << control) | (1usize << target);
                for (i, amp) in self.amplitudes.iter_mut().enumerate() {
                    if i & mask == mask {
                        *amp = -*amp;
                    }
                }
            }
        }
        Ok(())
    }

    /// Applies the row-major 2×2 matrix `[m00, m01, m10, m11]` to `target`.
    fn apply_single(&mut self, target: usize, m: [Complex64; 4]) {
        let bit = 1usize << target;
        let len = self.amplitudes.len();
        let mut block = 0;
        while block < len {
            for i0 in block..block + bit {
                let i1 = i0 | bit;
                let a0 = self.amplitudes[i0];
                let a1 = self.amplitudes[i1];
                self.amplitudes[i0] = m[0] * a0 + m[1] * a1;
                self.amplitudes[i1] = m[2] * a0 + m[3] * a1;
            }
            block += 2 * bit;
        }
    }

    fn parity_mask(&self, qubits: &[usize]) -> Result<usize> {
        if qubits.is_empty() {
            return Err(Error::config("observable needs at least one qubit"));
        }
        let mut mask = 0usize;
        for &q in qubits {
            if q >= self.num_qubits {
                return Err(Error::config(format!(
                    "observable qubit {q} out of range for {} qubits",
                    self.num_qubits
                )));
            }
            if mask & (1 << q) != 0 {
                return Err(Error::config(format!("duplicate observable qubit {q}")));
            }
            mask |= 1 << q;
        }
        Ok(mask)
    }

    /// Exact `⟨ψ| ⊗_{k∈qubits} Z_k |ψ⟩`.
    pub fn expectation_z(&self, qubits: &[usize]) -> Result<f64> {
        let mask = self.parity_mask(qubits)?;
        Ok(self.parity_expectation(mask))
    }

    fn parity_expectation(&self, mask: usize) -> f64 {
        let value: f64 = self
            .amplitudes
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let p = a.norm_sqr();
                if (i & mask).count_ones() % 2 == 0 {
                    p
                } else {
                    -p
                }
            })
            .sum();
        value.clamp(-1.0, 1.0)
    }

    /// Mean of `shots` independent ±1 outcomes of the `⊗Z` measurement.
    pub fn sample_expectation_z<R: Rng + ?Sized>(
        &self,
        qubits: &[usize],
        shots: u64,
        rng: &mut R,
    ) -> Result<f64> {
        if shots == 0 {
            return Err(Error::config("shot count must be at least 1"));
        }
        let mask = self.parity_mask(qubits)?;
        Ok(sample_from_expectation(self.parity_expectation(mask), shots, rng))
    }
}

/// Draws the shot-average of a ±1 observable with exact mean `expectation`.
pub(crate) fn sample_from_expectation<R: Rng + ?Sized>(
    expectation: f64,
    shots: u64,
    rng: &mut R,
) -> f64 {
    let p_plus = ((1.0 + expectation) / 2.0).clamp(0.0, 1.0);
    let plus = Binomial::new(shots, p_plus)
        .expect("probability clamped to [0, 1]")
        .sample(rng);
    (2.0 * plus as f64 - shots as f64) / shots as f64
}
