//! Small hand-built fields for tests and examples.

use crate::cometric::CometricField;
use crate::expr::Expression;

/// Constant cometric `diag(-1, 1, 0)` on `ℝ³`. Flat, so every Christoffel
/// tensor vanishes and no covector is a two-step generator.
pub fn constant_field() -> CometricField {
    CometricField::new(
        3,
        2,
        1,
        [((1, 1), Expression::constant(-1.0)), ((2, 2), Expression::constant(1.0))],
    )
    .expect("constant field is well formed")
}
