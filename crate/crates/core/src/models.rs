//! Built-in models: the Heisenberg group with a Lorentzian metric on its
//! horizontal plane, and the quaternion H-type group with an index-2 metric.
//!
//! Both are left-invariant, so their cometrics are assembled from frames,
//! `g = Σ ε_a F_a ⊗ F_a`. The quaternion model also carries a closed form for
//! extremals leaving the identity, used as an oracle for the integrator.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use nalgebra::{Matrix4, Quaternion};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cometric::{CometricField, Covector, Point, TangentVector};
use crate::error::{Error, Result};
use crate::expr::Expression;

/// Smallest `|k| = |θ₂ + iθ₃|` accepted by the quaternion closed form.
pub const MIN_K: f64 = 1e-6;
/// Imaginary residue tolerated in real outputs of the closed form.
pub const IMAGINARY_RESIDUE_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelId {
    #[serde(rename = "heisenberg-lorentz")]
    HeisenbergLorentz,
    #[serde(rename = "quaternion-h-type")]
    QuaternionHType,
}

impl ModelId {
    pub const ALL: [ModelId; 2] = [ModelId::HeisenbergLorentz, ModelId::QuaternionHType];

    pub fn name(self) -> &'static str {
        match self {
            ModelId::HeisenbergLorentz => "heisenberg-lorentz",
            ModelId::QuaternionHType => "quaternion-h-type",
        }
    }

    /// The cached cometric field of the model.
    pub fn field(self) -> &'static CometricField {
        match self {
            ModelId::HeisenbergLorentz => heisenberg_lorentz(),
            ModelId::QuaternionHType => quaternion_group(),
        }
    }

    /// Orthonormal frame `F_a(x)` of the distribution.
    pub fn frames(self, x: &[f64]) -> Vec<TangentVector> {
        match self {
            ModelId::HeisenbergLorentz => heisenberg_frames(x).to_vec(),
            ModelId::QuaternionHType => quaternion_frames(x).to_vec(),
        }
    }

    /// `Q(F_a, F_a)` for each frame field.
    pub fn frame_signs(self) -> &'static [f64] {
        match self {
            ModelId::HeisenbergLorentz => &HEISENBERG_SIGNS,
            ModelId::QuaternionHType => &QUATERNION_SIGNS,
        }
    }

    /// Empirical lower-bound constant `δ` for the local-diffeomorphism test
    /// at the identity, calibrated once per process.
    pub fn calibrated_delta(self) -> f64 {
        static HEISENBERG: OnceLock<f64> = OnceLock::new();
        static QUATERNION: OnceLock<f64> = OnceLock::new();
        let cell = match self {
            ModelId::HeisenbergLorentz => &HEISENBERG,
            ModelId::QuaternionHType => &QUATERNION,
        };
        *cell.get_or_init(|| {
            let field = self.field();
            crate::expmap::calibrate_delta(
                field,
                &Point::zeros(field.dim()),
                crate::expmap::CALIBRATION_SAMPLES,
                crate::expmap::CALIBRATION_SEED,
            )
            .map(|c| c.delta)
            .unwrap_or(0.0)
        })
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "heisenberg-lorentz" => Ok(ModelId::HeisenbergLorentz),
            "quaternion-h-type" => Ok(ModelId::QuaternionHType),
            other => Err(Error::InvalidArgument(format!(
                "unknown model '{other}' (expected heisenberg-lorentz or quaternion-h-type)"
            ))),
        }
    }
}

const HEISENBERG_SIGNS: [f64; 2] = [-1.0, 1.0];
const QUATERNION_SIGNS: [f64; 4] = [-1.0, -1.0, 1.0, 1.0];

fn c(v: f64) -> Expression {
    Expression::constant(v)
}

fn x(i: usize) -> Expression {
    Expression::coordinate(i)
}

fn field_from_frames(
    dim: usize,
    rank: usize,
    index: usize,
    frames: &[Vec<Expression>],
    signs: &[f64],
) -> CometricField {
    let mut upper = Vec::new();
    for j in 0..dim {
        for k in j..dim {
            let mut entry = Expression::zero();
            for (frame, &eps) in frames.iter().zip(signs) {
                let term = frame[j].clone() * frame[k].clone();
                entry = if eps < 0.0 { entry - term } else { entry + term };
            }
            if !entry.is_zero() {
                upper.push(((j + 1, k + 1), entry));
            }
        }
    }
    CometricField::new(dim, rank, index, upper).expect("built-in model is well formed")
}

/// Heisenberg group `ℝ³` with `Q(X,X) = -1`, `Q(Y,Y) = 1`, where
/// `X = ∂x + (y/2)∂z`, `Y = ∂y - (x/2)∂z`.
pub fn heisenberg_lorentz() -> &'static CometricField {
    static FIELD: OnceLock<CometricField> = OnceLock::new();
    FIELD.get_or_init(|| {
        let frames = vec![
            vec![c(1.0), Expression::zero(), c(0.5) * x(2)],
            vec![Expression::zero(), c(1.0), c(-0.5) * x(1)],
        ];
        field_from_frames(3, 2, 1, &frames, &HEISENBERG_SIGNS)
    })
}

/// Frames `(X, Y)` of the Heisenberg model at `p`.
pub fn heisenberg_frames(p: &[f64]) -> [TangentVector; 2] {
    [
        TangentVector(vec![1.0, 0.0, 0.5 * p[1]]),
        TangentVector(vec![0.0, 1.0, -0.5 * p[0]]),
    ]
}

/// Quaternion H-type group `ℝ⁷ = (x₁..x₄, z₁..z₃)` with frame signs
/// `(-1, -1, 1, 1)`.
pub fn quaternion_group() -> &'static CometricField {
    static FIELD: OnceLock<CometricField> = OnceLock::new();
    FIELD.get_or_init(|| {
        let h = |sign: f64, i: usize| c(0.5 * sign) * x(i);
        let unit = |i: usize| -> Vec<Expression> {
            (0..4)
                .map(|j| if j == i { c(1.0) } else { Expression::zero() })
                .collect()
        };
        let with_z = |i: usize, z: [Expression; 3]| -> Vec<Expression> {
            let mut v = unit(i);
            v.extend(z);
            v
        };
        let frames = vec![
            with_z(0, [h(1.0, 2), h(-1.0, 4), h(-1.0, 3)]),
            with_z(1, [h(-1.0, 1), h(-1.0, 3), h(1.0, 4)]),
            with_z(2, [h(1.0, 4), h(1.0, 2), h(1.0, 1)]),
            with_z(3, [h(-1.0, 3), h(1.0, 1), h(-1.0, 2)]),
        ];
        field_from_frames(7, 4, 2, &frames, &QUATERNION_SIGNS)
    })
}

/// Frames `X₁..X₄` of the quaternion model at `p`.
pub fn quaternion_frames(p: &[f64]) -> [TangentVector; 4] {
    let (x1, x2, x3, x4) = (p[0], p[1], p[2], p[3]);
    let frame = |i: usize, z: [f64; 3]| {
        let mut v = vec![0.0; 7];
        v[i] = 1.0;
        v[4..].copy_from_slice(&z);
        TangentVector(v)
    };
    [
        frame(0, [0.5 * x2, -0.5 * x4, -0.5 * x3]),
        frame(1, [-0.5 * x1, -0.5 * x3, 0.5 * x4]),
        frame(2, [0.5 * x4, 0.5 * x2, 0.5 * x1]),
        frame(3, [-0.5 * x3, 0.5 * x1, -0.5 * x2]),
    ]
}

/// A group element in the model's global chart.
pub type GroupElement = Point;

fn as_quaternion(x: &[f64]) -> Quaternion<f64> {
    Quaternion::new(x[0], -x[1], x[2], x[3])
}

/// Left multiplication `a · b` in the model group.
pub fn group_multiply(model: ModelId, a: &GroupElement, b: &GroupElement) -> Result<GroupElement> {
    let n = model.field().dim();
    for len in [a.len(), b.len()] {
        if len != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: len,
            });
        }
    }
    Ok(match model {
        ModelId::HeisenbergLorentz => Point(vec![
            a[0] + b[0],
            a[1] + b[1],
            a[2] + b[2] + 0.5 * (a[1] * b[0] - a[0] * b[1]),
        ]),
        ModelId::QuaternionHType => {
            let prod = as_quaternion(a).conjugate() * as_quaternion(b);
            let mut out: Vec<f64> = (0..4).map(|i| a[i] + b[i]).collect();
            out.push(a[4] + b[4] + 0.5 * prod.i);
            out.push(a[5] + b[5] + 0.5 * prod.k);
            out.push(a[6] + b[6] + 0.5 * prod.j);
            Point(out)
        }
    })
}

/// `‖(x, z)‖ = ((-x₁²-x₂²+x₃²+x₄²)² + z₁² + z₂² + z₃²)^{1/4}`.
pub fn homogeneous_norm(point: &[f64]) -> Result<f64> {
    if point.len() != 7 {
        return Err(Error::DimensionMismatch {
            expected: 7,
            got: point.len(),
        });
    }
    let q = signed_square(point);
    let z2: f64 = point[4..].iter().map(|v| v * v).sum();
    Ok((q * q + z2).powf(0.25))
}

fn signed_square(p: &[f64]) -> f64 {
    -p[0] * p[0] - p[1] * p[1] + p[2] * p[2] + p[3] * p[3]
}

/// Initial data of an extremal of the quaternion model leaving the
/// identity: horizontal velocity `ẋ⁰` and first integrals `θ`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuaternionExtremalParams {
    pub velocity: [f64; 4],
    pub theta: [f64; 3],
    pub k: Complex64,
    pub k_abs: f64,
    pub a: Complex64,
    pub c: [Complex64; 4],
    pub w1: Complex64,
    pub w2: Complex64,
}

impl QuaternionExtremalParams {
    pub fn new(velocity: [f64; 4], theta: [f64; 3]) -> Result<Self> {
        let k = Complex64::new(theta[1], theta[2]);
        let k_abs = k.norm();
        if !(k_abs >= MIN_K) {
            return Err(Error::InvalidArgument(format!(
                "|k| = {k_abs:e} below {MIN_K:e}; closed form undefined"
            )));
        }
        let i = Complex64::i();
        let a = Complex64::new(k_abs, theta[0]);
        let (ab, kb) = (a.conj(), k.conj());
        let [x1, x2, x3, x4] = velocity;
        let p = Complex64::new(x1, x2);
        let q = Complex64::new(x4, x3);
        let c1 = (k * p + k_abs * q) / (4.0 * i * a * k * k_abs);
        let c2 = (-kb * p.conj() + k_abs * q.conj()) / (4.0 * i * a * kb * k_abs);
        let c3 = (kb * p.conj() + k_abs * q.conj()) / (4.0 * i * ab * kb * k_abs);
        let c4 = (-k * p + k_abs * q) / (4.0 * i * ab * k * k_abs);
        Ok(Self {
            velocity,
            theta,
            k,
            k_abs,
            a,
            c: [c1, c2, c3, c4],
            w1: k / k_abs * p,
            w2: q,
        })
    }

    /// Inverts `ẋ = g ξ` at the identity: `ξ = (-ẋ₁, -ẋ₂, ẋ₃, ẋ₄, θ)`.
    pub fn initial_covector(&self) -> Covector {
        let [x1, x2, x3, x4] = self.velocity;
        let [t1, t2, t3] = self.theta;
        Covector(vec![-x1, -x2, x3, x4, t1, t2, t3])
    }

    pub fn from_covector(xi: &Covector) -> Result<Self> {
        if xi.len() != 7 {
            return Err(Error::DimensionMismatch {
                expected: 7,
                got: xi.len(),
            });
        }
        Self::new([-xi[0], -xi[1], xi[2], xi[3]], [xi[4], xi[5], xi[6]])
    }

    /// The matrix `A(θ)` with `ẍ = A ẋ` along the extremal.
    pub fn theta_matrix(&self) -> Matrix4<f64> {
        theta_matrix(self.theta)
    }
}

pub fn theta_matrix(theta: [f64; 3]) -> Matrix4<f64> {
    let [t1, t2, t3] = theta;
    Matrix4::new(
        0.0, -t1, t3, t2, //
        t1, 0.0, t2, -t3, //
        t3, t2, 0.0, t1, //
        t2, -t3, -t1, 0.0,
    )
}

fn real_part(value: Complex64, what: &str) -> Result<f64> {
    if value.im.abs() > IMAGINARY_RESIDUE_TOL * value.re.abs().max(1.0) {
        return Err(Error::Consistency(format!(
            "{what} has imaginary residue {:e}",
            value.im
        )));
    }
    Ok(value.re)
}

/// Closed-form extremal `(x(t), z(t))` from the identity.
pub fn closed_form_extremal(params: &QuaternionExtremalParams, t: f64) -> Result<Point> {
    let z = closed_form_complex(params, t);
    let mut out = Vec::with_capacity(7);
    for (i, v) in z.iter().enumerate() {
        out.push(real_part(*v, &format!("coordinate {}", i + 1))?);
    }
    Ok(Point(out))
}

fn closed_form_complex(params: &QuaternionExtremalParams, t: f64) -> [Complex64; 7] {
    let i = Complex64::i();
    let [c1, c2, c3, c4] = params.c;
    let (k, kk, a) = (params.k, params.k_abs, params.a);
    let (ab, kb) = (a.conj(), k.conj());
    let [t1, t2, t3] = params.theta;
    let e = |w: Complex64| (w * t).exp();
    let (ea, ema, eb, emb) = (e(a), e(-a), e(ab), e(-ab));
    let e2k = (2.0 * kk * t).exp();
    let em2k = (-2.0 * kk * t).exp();

    let x1 = i * kk * (c1 * ea + c2 * ema + c3 * eb + c4 * emb) - i * kk * (c1 + c2 + c3 + c4);
    let x2 = kk * (c1 * ea - c2 * ema - c3 * eb + c4 * emb) - kk * (c1 - c2 - c3 + c4);
    let x3 = c1 * k * ea + c2 * kb * ema - c3 * kb * eb - c4 * k * emb
        - (c1 * k + c2 * kb - c3 * kb - c4 * k);
    let x4 = i * (c1 * k * ea - c2 * kb * ema + c3 * kb * eb - c4 * k * emb)
        - i * (c1 * k - c2 * kb + c3 * kb - c4 * k);

    let (c12, c34, c13, c24) = (c1 * c2, c3 * c4, c1 * c3, c2 * c4);
    let z1 = 2.0 * i * kk * kk
        * (-2.0 * (c12 * a - c34 * ab) * t + c12 * (ea - ema) - c34 * (eb - emb));
    let common = -2.0 * (c12 * a + c34 * ab) * t + c12 * (ea - ema) + c34 * (eb - emb);
    let real_exp = c13 * e2k + c24 * em2k - c13 - c24;
    let mixed = c13 * ea + c24 * ema - c13 * eb - c24 * emb;
    let z2 = 2.0 * t2 * kk * common + 2.0 * t1 * t3 * real_exp + 2.0 * i * t3 * kk * mixed;
    let z3 = 2.0 * t3 * kk * common - 2.0 * t1 * t2 * real_exp - 2.0 * i * t2 * kk * mixed;
    [x1, x2, x3, x4, z1, z2, z3]
}

/// `-x₁²-x₂²+x₃²+x₄²` along the closed form, as `-64|k|² Re(c₁c₂ sinh²(at/2))`.
pub fn quaternion_xnorm_closed_form(params: &QuaternionExtremalParams, t: f64) -> f64 {
    let s = (params.a * (t / 2.0)).sinh();
    -64.0 * params.k_abs * params.k_abs * (params.c[0] * params.c[1] * s * s).re
}

/// `z₁²+z₂²+z₃²` along the closed form, without evaluating the coordinates.
pub fn quaternion_znorm_closed_form(params: &QuaternionExtremalParams, t: f64) -> Result<f64> {
    let [c1, c2, c3, c4] = params.c;
    let kk = params.k_abs;
    let t1 = params.theta[0];
    let p = real_part(
        c1 * c3 * (kk * t).exp() - c2 * c4 * (-kk * t).exp(),
        "c1c3 e^{|k|t} - c2c4 e^{-|k|t}",
    )?;
    let prod = real_part(c1 * c2 * c3 * c4, "c1c2c3c4")?;
    let (sh, ch) = ((kk * t).sinh(), (kk * t).cosh());
    let (s, co) = ((t1 * t).sin(), (t1 * t).cos());
    let first = 16.0 * kk * kk * p * p * (t1 * sh - kk * s).powi(2);
    let second = 64.0 * kk.powi(4) * prod * ((kk * t - sh * co).powi(2) + (t1 * t - ch * s).powi(2));
    Ok(first + second)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lie_bracket(model: ModelId, a: usize, b: usize, p: &[f64]) -> Vec<f64> {
        let n = p.len();
        let h = 1e-5;
        let field = |i: usize, q: &[f64]| model.frames(q)[i].0.clone();
        // [A,B] = DB·A - DA·B
        let directional = |i: usize, dir: &[f64]| -> Vec<f64> {
            let plus: Vec<f64> = p.iter().zip(dir).map(|(x, d)| x + h * d).collect();
            let minus: Vec<f64> = p.iter().zip(dir).map(|(x, d)| x - h * d).collect();
            field(i, &plus)
                .iter()
                .zip(field(i, &minus))
                .map(|(u, v)| (u - v) / (2.0 * h))
                .collect()
        };
        let db = directional(b, &field(a, p));
        let da = directional(a, &field(b, p));
        (0..n).map(|k| db[k] - da[k]).collect()
    }

    fn assert_close(a: &[f64], b: &[f64], tol: f64) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn cometrics_at_origin() {
        let h = heisenberg_lorentz().values(&[0.0; 3]);
        assert_eq!(h, vec![-1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        let q = quaternion_group().values(&[0.0; 7]);
        for j in 0..7 {
            for k in 0..7 {
                let expected = if j == k && j < 4 { QUATERNION_SIGNS[j] } else { 0.0 };
                assert_eq!(q[j * 7 + k], expected);
            }
        }
    }

    #[test]
    fn heisenberg_entries_match_frames() {
        let f = heisenberg_lorentz();
        assert_eq!(f.entry(2, 2).evaluate(&[2.0, 1.0, 0.0]), 0.25 * (4.0 - 1.0));
        assert_eq!(f.entry(0, 2).evaluate(&[2.0, 1.0, 0.0]), -0.5);
    }

    #[test]
    fn heisenberg_commutator() {
        // with these frames the bracket is -∂z
        for p in [[0.0, 0.0, 0.0], [0.4, -1.2, 3.0]] {
            assert_close(&lie_bracket(ModelId::HeisenbergLorentz, 0, 1, &p), &[0.0, 0.0, -1.0], 1e-8);
        }
    }

    #[test]
    fn quaternion_commutators() {
        let p = [0.3, -0.7, 1.1, 0.2, 0.5, -0.4, 0.9];
        let z = |i: usize, s: f64| {
            let mut v = vec![0.0; 7];
            v[4 + i] = s;
            v
        };
        let expected = [
            ((0, 1), z(0, -1.0)),
            ((0, 2), z(2, 1.0)),
            ((0, 3), z(1, 1.0)),
            ((1, 2), z(1, 1.0)),
            ((1, 3), z(2, -1.0)),
            ((2, 3), z(0, -1.0)),
        ];
        for ((a, b), e) in expected {
            assert_close(&lie_bracket(ModelId::QuaternionHType, a, b, &p), &e, 1e-8);
        }
    }

    #[test]
    fn group_law_examples() {
        let m = ModelId::HeisenbergLorentz;
        let prod = group_multiply(m, &Point(vec![1.0, 0.0, 0.0]), &Point(vec![0.0, 1.0, 0.0])).unwrap();
        assert_eq!(prod.0, vec![1.0, 1.0, -0.5]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for model in ModelId::ALL {
            let n = model.field().dim();
            let e = Point::zeros(n);
            for _ in 0..100 {
                let mut draw = || Point((0..n).map(|_| rng.random_range(-2.0..2.0)).collect());
                let (a, b, c) = (draw(), draw(), draw());
                assert_close(&group_multiply(model, &e, &a).unwrap(), &a, 0.0);
                assert_close(&group_multiply(model, &a, &e).unwrap(), &a, 0.0);
                let left = group_multiply(model, &group_multiply(model, &a, &b).unwrap(), &c).unwrap();
                let right = group_multiply(model, &a, &group_multiply(model, &b, &c).unwrap()).unwrap();
                assert_close(&left, &right, 1e-12);
            }
        }
    }

    #[test]
    fn frames_are_left_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h = 1e-6;
        for model in ModelId::ALL {
            let n = model.field().dim();
            let a = Point((0..n).map(|_| rng.random_range(-1.0..1.0)).collect());
            let b = Point((0..n).map(|_| rng.random_range(-1.0..1.0)).collect());
            let ab = group_multiply(model, &a, &b).unwrap();
            for (frame_b, frame_ab) in model.frames(&b).iter().zip(model.frames(&ab)) {
                let plus = Point(b.axpy(h, &Point(frame_b.0.clone())).0);
                let minus = Point(b.axpy(-h, &Point(frame_b.0.clone())).0);
                let pa = group_multiply(model, &a, &plus).unwrap();
                let ma = group_multiply(model, &a, &minus).unwrap();
                let push: Vec<f64> = pa.iter().zip(ma.iter()).map(|(p, m)| (p - m) / (2.0 * h)).collect();
                assert_close(&push, &frame_ab, 1e-7);
            }
        }
    }

    #[test]
    fn homogeneous_norm_examples() {
        assert_eq!(homogeneous_norm(&[0.0; 7]).unwrap(), 0.0);
        assert_eq!(homogeneous_norm(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap(), 1.0);
        assert!(homogeneous_norm(&[0.0; 3]).is_err());
    }

    #[test]
    fn degenerate_k_is_rejected() {
        assert!(QuaternionExtremalParams::new([1.0, 0.0, 0.0, 0.0], [0.3, 0.0, 0.0]).is_err());
    }

    #[test]
    fn closed_form_starts_at_identity_with_given_velocity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let v = [0; 4].map(|_| rng.random_range(-1.0..1.0));
            let th = [0; 3].map(|_| rng.random_range(-1.0..1.0));
            let Ok(params) = QuaternionExtremalParams::new(v, th) else { continue };
            let origin = closed_form_extremal(&params, 0.0).unwrap();
            assert!(origin.norm() < 1e-12);
            let h = 1e-5;
            let p = closed_form_extremal(&params, h).unwrap();
            let m = closed_form_extremal(&params, -h).unwrap();
            for i in 0..4 {
                assert!(((p[i] - m[i]) / (2.0 * h) - v[i]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn c_constant_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..100 {
            let v = [0; 4].map(|_| rng.random_range(-1.0..1.0));
            let th = [0; 3].map(|_| rng.random_range(-1.0..1.0));
            let Ok(p) = QuaternionExtremalParams::new(v, th) else { continue };
            let [c1, c2, c3, c4] = p.c;
            assert!((c1 * c2 - (c3 * c4).conj()).norm() < 1e-10);
            let a2 = p.a.norm_sqr();
            let k2 = p.k_abs * p.k_abs;
            let c13 = -(p.w2 + p.w1).norm_sqr() / (16.0 * a2 * k2);
            let c24 = -(p.w2 - p.w1).norm_sqr() / (16.0 * a2 * k2);
            assert!((c1 * c3 - c13).norm() < 1e-10 * c13.abs().max(1.0));
            assert!((c2 * c4 - c24).norm() < 1e-10 * c24.abs().max(1.0));
            let all = (p.w2 * p.w2 - p.w1 * p.w1).norm_sqr() / (256.0 * a2 * a2 * k2 * k2);
            assert!((c1 * c2 * c3 * c4 - all).norm() < 1e-10 * all.max(1.0));
        }
    }

    #[test]
    fn theta_matrix_structure() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let q = Matrix4::from_diagonal(&nalgebra::Vector4::new(-1.0, -1.0, 1.0, 1.0));
        for _ in 0..100 {
            let th = [0; 3].map(|_| rng.random_range(-2.0..2.0));
            let a = theta_matrix(th);
            assert!((q * a + a.transpose() * q).abs().max() <= 1e-14);
            let lam = Complex64::new((th[1] * th[1] + th[2] * th[2]).sqrt(), th[0]);
            for root in [lam, -lam, lam.conj(), -lam.conj()] {
                assert!(characteristic(&a, root).norm() < 1e-9);
            }
        }
    }

    fn characteristic(a: &Matrix4<f64>, z: Complex64) -> Complex64 {
        let m = a.map(|v| Complex64::new(v, 0.0)) - nalgebra::Matrix4::<Complex64>::identity() * z;
        m.determinant()
    }

    #[test]
    fn norms_along_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for draw in 0..50 {
            let v = [0; 4].map(|_| rng.random_range(-1.0..1.0));
            let mut th = [0; 3].map(|_| rng.random_range(-1.0..1.0));
            if draw == 0 {
                th[0] = 0.0;
            }
            let Ok(p) = QuaternionExtremalParams::new(v, th) else { continue };
            for t in [0.0, 0.25, 0.5, 1.0] {
                let pt = closed_form_extremal(&p, t).unwrap();
                assert!((signed_square(&pt) - quaternion_xnorm_closed_form(&p, t)).abs() < 1e-8);
                let zz: f64 = pt[4..].iter().map(|c| c * c).sum();
                let cf = quaternion_znorm_closed_form(&p, t).unwrap();
                assert!((zz - cf).abs() <= 1e-8 * zz.abs().max(1e-12), "{zz} vs {cf}");
            }
        }
    }

    #[test]
    fn model_ids_parse() {
        assert_eq!("heisenberg-lorentz".parse::<ModelId>().unwrap(), ModelId::HeisenbergLorentz);
        assert_eq!("quaternion-h-type".parse::<ModelId>().unwrap(), ModelId::QuaternionHType);
        assert!("sphere".parse::<ModelId>().is_err());
    }
}
