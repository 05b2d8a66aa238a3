//! Numerics for sub-semi-Riemannian manifolds given by a degenerate
//! cometric `g^{jk}(x)` with polynomial entries.
//!
//! The crate parses field definitions, evaluates the cometric and its
//! derivatives, builds the Christoffel tensor `Γ^{kpq}`, integrates normal
//! extremals of `H = ½ g^{pq} ξ_p ξ_q`, and analyses the exponential map.

pub mod christoffel;
pub mod cometric;
pub mod error;
pub mod expmap;
pub mod expr;
pub mod fixtures;
pub mod flow;
pub mod models;
pub mod ode;
pub mod verify;

pub use christoffel::{
    annihilator_section, bracket_form, christoffel_at, gamma_contract, is_two_step_generator, lie_bracket_fd,
    pushed_covector_field, sym_covariant_derivative, ChristoffelTensor, GeneratorTest,
};
pub use cometric::{
    pairing, CausalCharacter, CausalClass, CometricField, Covector, EntryDefinition, FieldDefinition, FieldJet,
    Point, PointSplit, Signature, TangentVector,
};
pub use error::{Error, Result};
pub use expmap::{
    calibrate_delta, diffeo_scan, exp, exp_jacobian, exp_with, gauss_lemma_check, local_diffeo_test,
    scan_directions, taylor_coefficients, taylor_exp, truncated_jacobian, AdaptedFrame, DeltaCalibration,
    DiffeoScanRow, DiffeoTest, ExpJacobianBlocks, ExpansionCoefficients, GaussLemmaCheck, JacobianMethod,
    LeadingOrderJacobian, TruncatedJacobian,
};
pub use expr::{parse, Expression, ParseError, Polynomial};
pub use flow::{
    canonical_cotangent_lift, curve_energy, curve_natural_parameter, energy, hamiltonian, hamiltonian_rhs,
    integrate_extremal, natural_parameter, time_cone, CanonicalLift, HorizontalCurve, PhaseState, TimeCone,
    Trajectory,
};
pub use models::{ModelId, QuaternionExtremalParams};
pub use ode::StepControl;
