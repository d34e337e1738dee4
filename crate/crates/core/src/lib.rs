//! Asymptotic key-rate analysis for a single-state semi-quantum key
//! distribution protocol.
//!
//! The quantum user sends `|+>` every round; the classical user either
//! reflects it (raw key bit 0) or measures and resends in the Z basis (raw
//! key bit 1). An adversary running a restricted collective attack replaces
//! the forward qubit by a biased state and probes the return leg with a
//! single unitary. This crate provides:
//!
//! * [`qmath`]: small dense complex linear algebra and entropy functions,
//! * [`attack`]: the `(b, U)` attack model, its derived states and the exact
//!   statistics / conditional entropy it induces,
//! * [`bound`]: the key-rate lower bound computed from observable statistics,
//! * [`depol`]: the depolarizing-channel scenario in closed form and as a
//!   concrete unitary dilation,
//! * [`sim`]: a seeded Monte-Carlo simulator of the protocol and estimators,
//! * [`sweep`]: parameter sweeps and the noise-threshold solver.
//!
//! All numerics are generic over [`Real`] (`f32` or `f64`). The aliases at
//! the crate root fix the scalar to `f64`, which is what the tolerances in
//! this crate are tuned for.

pub mod attack;
pub mod bound;
pub mod depol;
mod error;
pub mod qmath;
mod real;
pub mod sim;
pub mod sweep;

pub use error::{Error, Result};
pub use real::Real;

/// Complex scalar over `f64`.
pub type C64 = num_complex::Complex<f64>;
pub type ComplexVec64 = qmath::ComplexVec<f64>;
pub type HermitianMatrix64 = qmath::HermitianMatrix<f64>;
pub type AttackSpec64 = attack::AttackSpec<f64>;
pub type DerivedStates64 = attack::DerivedStates<f64>;
pub type ChannelStatistics64 = attack::ChannelStatistics<f64>;
pub type JointKeyDistribution64 = attack::JointKeyDistribution<f64>;
pub type KeyRateReport64 = bound::KeyRateReport<f64>;
pub type DepolScenario64 = depol::DepolScenario<f64>;
pub type SimulationConfig64 = sim::SimulationConfig<f64>;
pub type Estimate64 = sim::Estimate<f64>;
pub type SweepGrid64 = sweep::SweepGrid<f64>;
pub type SweepRow64 = sweep::SweepRow<f64>;
