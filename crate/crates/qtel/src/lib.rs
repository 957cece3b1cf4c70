//! Quantum-jump simulation of atomic-state teleportation mediated by cavity
//! decay, with detection of the leaking photons at a beam-splitter output.
//!
//! The library is split by responsibility:
//!
//! * [`hilbert`]: labelled tensor-product state vectors, operators, and the
//!   linear algebra used everywhere else (embedding, partial trace,
//!   non-unitary evolution).
//! * [`model`]: physical parameters, the effective Raman Hamiltonians, decay
//!   channels, and regime validation.
//! * [`dynamics`]: the Monte Carlo trajectory engine (waiting-time sampling,
//!   jump collapse, detector thinning) and a dense master-equation integrator
//!   used for cross-checks.
//! * [`protocol`]: the teleportation and entanglement-distribution protocols
//!   built on top of the engine: state preparation, detection window,
//!   conditional corrections, and the insurance encoding for failure recovery.
//! * [`analytics`]: closed-form predictions (fidelity, success probability,
//!   averages over input states) and entanglement measures for the produced
//!   mixed states.

pub mod analytics;
pub mod dynamics;
pub mod hilbert;
pub mod model;
pub mod protocol;

pub use num_complex::Complex64;

/// Shorthand used throughout: all amplitudes are double-precision complex.
pub type C64 = Complex64;
