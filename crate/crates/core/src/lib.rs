//! Gradient-free meta-optimization of variational quantum circuits.
//!
//! The crate is organised bottom-up:
//!
//! * [`simulator`]: dense statevector simulation with exact and shot-sampled
//!   Pauli-Z expectations.
//! * [`ansatz`]: the three circuit families used in the experiments and the
//!   model output `f(x, θ)`.
//! * [`datasets`]: seeded generators (Gaussian clusters, spirals, spheres) and
//!   the binary Iris loader.
//! * [`qnn`]: the optimizee cost, circuit-evaluation accounting and shot budgets.
//! * [`estimators`]: parameter-shift and SPSA gradient estimators.
//! * [`baseline`]: SGD, Adam and RMSProp.
//! * [`meta`]: the LSTM meta-optimizer with replay-buffer seeding.
//! * [`harness`]: configuration, experiment runners and trace output.

pub mod ansatz;
pub mod baseline;
pub mod datasets;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod meta;
pub mod qnn;
pub mod simulator;

pub use error::{Error, Result};

/// Random source used everywhere randomness enters a run.
///
/// ChaCha8 is portable across platforms and crate versions, which keeps seeded
/// traces reproducible.
pub type SimRng = rand_chacha::ChaCha8Rng;

/// Builds the random stream `stream` of the experiment seeded with `seed`.
pub fn seeded_rng(seed: u64, stream: u64) -> SimRng {
    use rand::SeedableRng;
    let mut rng = SimRng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
