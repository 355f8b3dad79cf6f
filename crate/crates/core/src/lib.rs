//! Constructive steering of the 3D Navier-Stokes system on the torus by a
//! finite-dimensional force, at desk scale.
//!
//! The crate is organized around six subsystems:
//!
//! - [`lattice`]: integer-lattice algebra on Z^3 — generator testing via the
//!   gcd-of-determinants criterion, span membership via Hermite normal form,
//!   and the mode-set ladder `K_j`.
//! - [`fourier`]: exact coefficient-level calculus for finite divergence-free
//!   trigonometric vector fields — Leray projection, Stokes operator, the
//!   bilinear transport term `B`, Sobolev norms, pointwise evaluation.
//! - [`space`] / [`saturation`]: finite-dimensional control subspaces, the
//!   pair-construction extension operator `F(E)` with machine-checkable
//!   witnesses, the saturation ladder, and certificate verification.
//! - [`signal`] / [`nse`]: time-parameterized controls and the spectral
//!   Galerkin solver for the controlled system (exponential treatment of the
//!   diagonal Stokes operator, explicit transport term).
//! - [`flow`] / [`isotopy`]: Lagrangian flow-map integration with Jacobian
//!   transport, the C^1 grid distance, the relaxation norm, and closed-form
//!   isotopies for the supported diffeomorphism targets.
//! - [`control`]: the synthesis staircase — exact reference control,
//!   projection, fast-oscillation convexification, and ζ-absorption.
//!
//! All state is immutable after construction; operations are pure functions.

pub mod control;
pub mod error;
pub mod flow;
pub mod fourier;
pub mod isotopy;
pub mod lattice;
pub mod nse;
pub mod rng;
pub mod sample;
pub mod saturation;
pub mod signal;
pub mod space;
pub mod vec3;

pub use control::{
    run_staircase, LevelRecord, StaircaseOutcome, StaircaseTrace, SteeringProblem,
};
pub use error::CoreError;
pub use flow::{c1_distance, integrate_flow, relaxation_norm, stability_probe, FlowMap};
pub use fourier::{bilinear, leray_project, sobolev_norm, stokes_apply, Mode, RawField, TrigField, TrigKind};
pub use isotopy::{build_isotopy, Isotopy, IsotopyTarget, Shear};
pub use lattice::{grow_ladder, integer_span_membership, is_generator, LatticeMode, LatticeSet};
pub use nse::{solve, SimConfig, Trajectory};
pub use saturation::{f_extend, ladder, lemma_closure_check, verify_certificate, SaturationCertificate, Witness};
pub use signal::ControlSignal;
pub use space::ModeSpace;
pub use vec3::{Mat3, Vec3};
