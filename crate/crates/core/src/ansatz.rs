//! Circuit families and the model output `f(x, θ) = ⟨0|U₀†(x) U†(θ) Ô U(θ) U₀(x)|0⟩`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::qnn::{check_theta, EvalCounter, ShotBudget};
use crate::simulator::{sample_from_expectation, GateOp, Statevector};
use crate::{Error, Result, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    /// RX data embedding, then layers of RY plus a CZ ring.
    LayeredRxRy,
    /// Three-qubit RY data embedding, then layers of RY plus a CZ ring.
    SpheresRy,
    /// No embedding; layers of RZ·RY·RZ per qubit plus all-to-all CZ.
    StronglyEntangling,
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "layered" | "layered_rx_ry" => Ok(Family::LayeredRxRy),
            "spheres" | "spheres_ry" => Ok(Family::SpheresRy),
            "strongly_entangling" | "strong" => Ok(Family::StronglyEntangling),
            other => Err(Error::config(format!("unknown ansatz family `{other}`"))),
        }
    }
}

/// How the measured qubits are reduced to a scalar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Reduction {
    /// `⟨Z⟩` of the single observable qubit.
    SingleZ,
    /// `⟨Z ⊗ Z ⊗ … ⊗ Z⟩` measured as one parity observable.
    ProductZ,
    /// `∏ ⟨Z_k⟩`, each marginal estimated separately.
    MarginalProduct,
}

impl FromStr for Reduction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "single_z" => Ok(Reduction::SingleZ),
            "product_z" => Ok(Reduction::ProductZ),
            "marginal_product" => Ok(Reduction::MarginalProduct),
            other => Err(Error::config(format!("unknown reduction `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Axis {
    X,
    Y,
    Z,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum AngleSource {
    Data(usize),
    Param(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Instruction {
    Rotate {
        axis: Axis,
        qubit: usize,
        angle: AngleSource,
    },
    Cz {
        control: usize,
        target: usize,
    },
}

/// Circuit topology plus observable. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct AnsatzSpec {
    family: Family,
    num_qubits: usize,
    num_layers: usize,
    observable: Vec<usize>,
    reduction: Reduction,
    instructions: Vec<Instruction>,
    num_params: usize,
}

fn ring(q: usize) -> Vec<(usize, usize)> {
    match q {
        1 => Vec::new(),
        2 => vec![(0, 1)],
        _ => (0..q).map(|i| (i, (i + 1) % q)).collect(),
    }
}

fn ry_ring_layers(instructions: &mut Vec<Instruction>, q: usize, layers: usize) -> usize {
    let mut param = 0;
    for _ in 0..layers {
        for qubit in 0..q {
            instructions.push(Instruction::Rotate {
                axis: Axis::Y,
                qubit,
                angle: AngleSource::Param(param),
            });
            param += 1;
        }
        for (control, target) in ring(q) {
            instructions.push(Instruction::Cz { control, target });
        }
    }
    param
}

/// RX(x_j) embedding on every qubit followed by `layers` of RY + CZ ring.
pub fn build_layered(q: usize, layers: usize) -> Result<AnsatzSpec> {
    if q == 0 || layers == 0 {
        return Err(Error::config("layered ansatz needs q ≥ 1 and L ≥ 1"));
    }
    let mut instructions: Vec<Instruction> = (0..q)
        .map(|j| Instruction::Rotate {
            axis: Axis::X,
            qubit: j,
            angle: AngleSource::Data(j),
        })
        .collect();
    let num_params = ry_ring_layers(&mut instructions, q, layers);
    AnsatzSpec::assemble(Family::LayeredRxRy, q, layers, vec![0], Reduction::SingleZ, instructions, num_params)
}

/// Three-qubit RY embedding followed by `layers` of RY + CZ ring.
pub fn build_spheres(layers: usize) -> Result<AnsatzSpec> {
    if layers == 0 {
        return Err(Error::config("spheres ansatz needs L ≥ 1"));
    }
    let q = 3;
    let mut instructions: Vec<Instruction> = (0..q)
        .map(|j| Instruction::Rotate {
            axis: Axis::Y,
            qubit: j,
            angle: AngleSource::Data(j),
        })
        .collect();
    let num_params = ry_ring_layers(&mut instructions, q, layers);
    AnsatzSpec::assemble(Family::SpheresRy, q, layers, vec![0], Reduction::SingleZ, instructions, num_params)
}

/// Layers of RZ·RY·RZ on every qubit followed by CZ on every pair `i < j`.
/// The register starts in `|0…0⟩`; the observable is `Z⊗…⊗Z` on all qubits.
pub fn build_strongly_entangling(q: usize, layers: usize) -> Result<AnsatzSpec> {
    if q < 2 || layers == 0 {
        return Err(Error::config(
            "strongly entangling ansatz needs q ≥ 2 and L ≥ 1",
        ));
    }
    let mut instructions = Vec::new();
    let mut param = 0;
    for _ in 0..layers {
        for qubit in 0..q {
            for axis in [Axis::Z, Axis::Y, Axis::Z] {
                instructions.push(Instruction::Rotate {
                    axis,
                    qubit,
                    angle: AngleSource::Param(param),
                });
                param += 1;
            }
        }
        for control in 0..q {
            for target in control + 1..q {
                instructions.push(Instruction::Cz { control, target });
            }
        }
    }
    AnsatzSpec::assemble(
        Family::StronglyEntangling,
        q,
        layers,
        (0..q).collect(),
        Reduction::ProductZ,
        instructions,
        param,
    )
}

impl AnsatzSpec {
    fn assemble(
        family: Family,
        num_qubits: usize,
        num_layers: usize,
        observable: Vec<usize>,
        reduction: Reduction,
        instructions: Vec<Instruction>,
        num_params: usize,
    ) -> Result<Self> {
        if num_qubits > crate::simulator::MAX_QUBITS {
            return Err(Error::config(format!("{num_qubits} qubits exceeds the simulator limit")));
        }
        let spec = Self {
            family,
            num_qubits,
            num_layers,
            observable: Vec::new(),
            reduction,
            instructions,
            num_params,
        };
        spec.with_observable(observable, reduction)
    }

    /// Same circuit with a different measured set and reduction.
    pub fn with_observable(mut self, qubits: Vec<usize>, reduction: Reduction) -> Result<Self> {
        if qubits.is_empty() {
            return Err(Error::config("observable needs at least one qubit"));
        }
        let mut seen = vec![false; self.num_qubits];
        for &q in &qubits {
            if q >= self.num_qubits {
                return Err(Error::config(format!("observable qubit {q} out of range")));
            }
            if std::mem::replace(&mut seen[q], true) {
                return Err(Error::config(format!("duplicate observable qubit {q}")));
            }
        }
        if reduction == Reduction::SingleZ && qubits.len() != 1 {
            return Err(Error::config("single_z reduction measures exactly one qubit"));
        }
        self.observable = qubits;
        self.reduction = reduction;
        Ok(self)
    }

    pub fn with_reduction(self, reduction: Reduction) -> Result<Self> {
        let qubits = self.observable.clone();
        self.with_observable(qubits, reduction)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn num_layers(&self) -> usize {
        self.num_layers
    }

    pub fn num_params(&self) -> usize {
        self.num_params
    }

    pub fn observable(&self) -> &[usize] {
        &self.observable
    }

    pub fn reduction(&self) -> Reduction {
        self.reduction
    }

    /// Whether the circuit starts with a data-embedding layer.
    pub fn embeds_data(&self) -> bool {
        self.family != Family::StronglyEntangling
    }

    /// Number of gates in the resolved circuit.
    pub fn gate_count(&self) -> usize {
        self.instructions.len()
    }

    pub fn entangler_count(&self) -> usize {
        self.instructions
            .iter()
            .filter(|i| matches!(i, Instruction::Cz { .. }))
            .count()
    }

    /// The concrete gate list for data point `x` and parameters `theta`.
    pub fn gates(&self, x: &[f64], theta: &[f64]) -> Result<Vec<GateOp>> {
        let expected_dim = if self.embeds_data() { self.num_qubits } else { 0 };
        if x.len() != expected_dim {
            return Err(Error::config(format!(
                "data point has dimension {}, ansatz expects {expected_dim}",
                x.len()
            )));
        }
        check_theta(theta, self.num_params)?;
        Ok(self
            .instructions
            .iter()
            .map(|inst| match *inst {
                Instruction::Rotate { axis, qubit, angle } => {
                    let angle = match angle {
                        AngleSource::Data(j) => x[j],
                        AngleSource::Param(i) => theta[i],
                    };
                    match axis {
                        Axis::X => GateOp::Rx { target: qubit, angle },
                        Axis::Y => GateOp::Ry { target: qubit, angle },
                        Axis::Z => GateOp::Rz { target: qubit, angle },
                    }
                }
                Instruction::Cz { control, target } => GateOp::Cz { control, target },
            })
            .collect())
    }

    /// Prepared state `U(θ) U₀(x) |0⟩`.
    pub fn state(&self, x: &[f64], theta: &[f64]) -> Result<Statevector> {
        let mut state = Statevector::zero(self.num_qubits)?;
        for op in self.gates(x, theta)? {
            state.apply(&op)?;
        }
        Ok(state)
    }

    /// Model output without touching any counter. `rng` is required for
    /// finite shot budgets.
    pub(crate) fn evaluate(
        &self,
        x: &[f64],
        theta: &[f64],
        shots: ShotBudget,
        rng: Option<&mut SimRng>,
    ) -> Result<f64> {
        let state = self.state(x, theta)?;
        match (shots, rng) {
            (ShotBudget::Exact, _) => self.reduce_exact(&state),
            (ShotBudget::Finite(n), Some(rng)) => self.reduce_sampled(&state, n.get(), rng),
            (ShotBudget::Finite(_), None) => {
                Err(Error::config("finite shot budget requires a random source"))
            }
        }
    }

    fn reduce_exact(&self, state: &Statevector) -> Result<f64> {
        match self.reduction {
            Reduction::SingleZ | Reduction::ProductZ => state.expectation_z(&self.observable),
            Reduction::MarginalProduct => self
                .observable
                .iter()
                .map(|&q| state.expectation_z(&[q]))
                .product(),
        }
    }

    fn reduce_sampled(&self, state: &Statevector, shots: u64, rng: &mut SimRng) -> Result<f64> {
        match self.reduction {
            Reduction::SingleZ | Reduction::ProductZ => {
                state.sample_expectation_z(&self.observable, shots, rng)
            }
            Reduction::MarginalProduct => {
                let mut product = 1.0;
                for &q in &self.observable {
                    let exact = state.expectation_z(&[q])?;
                    product *= sample_from_expectation(exact, shots, rng);
                }
                Ok(product)
            }
        }
    }

    /// `f(x, θ)` for one data point; charges one circuit evaluation.
    pub fn forward(
        &self,
        x: &[f64],
        theta: &[f64],
        shots: ShotBudget,
        counter: &EvalCounter,
        rng: &mut SimRng,
    ) -> Result<f64> {
        let out = self.evaluate(x, theta, shots, Some(rng))?;
        counter.add(1);
        Ok(out)
    }
}

impl fmt::Display for AnsatzSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:?}(q={}, L={}, N={}, {:?} on {:?})",
            self.family, self.num_qubits, self.num_layers, self.num_params, self.reduction, self.observable
        )
    }
}
