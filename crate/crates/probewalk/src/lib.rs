//! Decompose a two-outcome generalized quantum measurement into a continuous
//! stochastic process of probe-mediated weak measurements.
//!
//! A qubit probe repeatedly interacts with the system through a fixed joint
//! Hamiltonian and is then read out projectively; each readout nudges a
//! classical pointer x by ±δ. Step operators come from the exact contraction
//! of the joint unitary, so every two-outcome family is complete to machine
//! precision and the pointer performs a Born-rule random walk whose absorbing
//! boundaries realize the target measurement. The crate provides:
//!
//! - [`linalg`]: dense complex operators, Hermitian eigendecomposition,
//!   exponentials, tensor products and probe contractions;
//! - [`probe`]: probe bases, frame rotations of the interaction Hamiltonian,
//!   and exact step operators;
//! - [`reversal`]: the second-order expansion of reversal products, correction
//!   pulses, and structural admissibility checks;
//! - [`riccati`]: the scalar Riccati flow of the diagonal eigenvalues, its
//!   closed-form family and admissible integration constants;
//! - [`zz`]: the fully worked diagonal-qubit scheme driven by Z⊗Z;
//! - [`walk`]: the trajectory engine and reproducible parallel ensembles;
//! - [`config`], [`output`], [`verify`]: the command-line surface.

pub mod config;
pub mod linalg;
pub mod output;
pub mod probe;
pub mod reversal;
pub mod riccati;
pub mod verify;
pub mod walk;
pub mod zz;

pub use linalg::{BlochVector, Operator, QuantumState};
pub use probe::{InteractionHamiltonian, ProbeBasis, ProbeScheme};
pub use walk::{StepTable, WalkConfig};
pub use zz::{build_zz_scheme, DiagonalTarget, ZzScheme};
