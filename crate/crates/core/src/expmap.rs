//! The exponential map `exp_p(u) = x_u(1)` and its first-order analysis:
//! Taylor coefficients to third order, the Jacobian `W = d(exp_p)_u`, its
//! leading-order truncation `W̃` in adapted coordinates, the
//! local-diffeomorphism criterion and a Gauss-lemma check.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::christoffel::christoffel_at;
use crate::cometric::{classify, dot, norm, CausalClass, CometricField, Covector, Point, CAUSAL_TOL};
use crate::error::{Error, Result};
use crate::flow::integrate_extremal;
use crate::ode::{self, StepControl};

pub const CALIBRATION_SAMPLES: usize = 500;
pub const CALIBRATION_SEED: u64 = 42;
/// Calibration only uses covectors with `|<gu, u>|` above this.
pub const CALIBRATION_MIN_SCALAR: f64 = 0.1;
/// Relative step of the finite-difference Jacobian.
pub const FD_JACOBIAN_STEP: f64 = 1e-6;
/// Tolerance on the horizontality part of the Gauss lemma check.
pub const GAUSS_HORIZONTAL_TOL: f64 = 1e-7;

/// `exp_p(u)` with the default fixed step.
pub fn exp(field: &CometricField, p: &Point, u: &Covector) -> Result<Point> {
    exp_with(field, p, u, StepControl::default())
}

pub fn exp_with(field: &CometricField, p: &Point, u: &Covector, control: StepControl) -> Result<Point> {
    let traj = integrate_extremal(field, p, u, 1.0, control)?;
    Ok(traj.endpoint().clone())
}

/// Taylor data of `exp_p` at `p`:
/// `exp_p(u)^k = p^k + γ₁^{ka}u_a + ½γ₂^{kab}u_a u_b + ⅙γ₃^{kabc}u_a u_b u_c + …`.
#[derive(Clone, Debug)]
pub struct ExpansionCoefficients {
    pub base: Point,
    n: usize,
    order: usize,
    gamma1: Vec<f64>,
    gamma2: Vec<f64>,
    gamma3: Vec<f64>,
}

impl ExpansionCoefficients {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn gamma1(&self, k: usize, a: usize) -> f64 {
        self.gamma1[k * self.n + a]
    }

    pub fn gamma2(&self, k: usize, a: usize, b: usize) -> f64 {
        self.gamma2[(k * self.n + a) * self.n + b]
    }

    pub fn gamma3(&self, k: usize, a: usize, b: usize, c: usize) -> f64 {
        self.gamma3[((k * self.n + a) * self.n + b) * self.n + c]
    }

    pub fn gamma3_slice(&self) -> &[f64] {
        &self.gamma3
    }
}

fn symmetrize_last_two(n: usize, raw: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; n * n * n];
    for k in 0..n {
        for a in 0..n {
            for b in 0..n {
                out[(k * n + a) * n + b] = 0.5 * (raw[(k * n + a) * n + b] + raw[(k * n + b) * n + a]);
            }
        }
    }
    out
}

/// Taylor coefficients of `exp_p` up to `order` (1 to 3) from the recursion
/// `γ_{r+1} = sym(g^{q·} ∂_q γ_r - (r/2) γ_r ∂g)`.
pub fn taylor_coefficients(field: &CometricField, p: &Point, order: usize) -> Result<ExpansionCoefficients> {
    field.check_len(p.len())?;
    if !(1..=3).contains(&order) {
        return Err(Error::InvalidArgument(format!("Taylor order {order} outside 1..=3")));
    }
    let n = field.dim();
    let jet = field.jet(p, order >= 3);
    let g = |a: usize, b: usize| jet.g(a, b);
    let d = |a: usize, b: usize, s: usize| jet.dg(a, b, s);
    let dd = |a: usize, b: usize, s: usize, t: usize| jet.ddg(a, b, s, t);

    let gamma1: Vec<f64> = (0..n * n).map(|i| g(i / n, i % n)).collect();
    let mut gamma2 = vec![0.0; n * n * n];
    let mut gamma3 = vec![0.0; n * n * n * n];
    if order >= 2 {
        let mut raw = vec![0.0; n * n * n];
        for k in 0..n {
            for a in 0..n {
                for b in 0..n {
                    let mut s = 0.0;
                    for q in 0..n {
                        s += g(q, b) * d(k, a, q) - 0.5 * g(k, q) * d(a, b, q);
                    }
                    raw[(k * n + a) * n + b] = s;
                }
            }
        }
        gamma2 = symmetrize_last_two(n, &raw);
    }
    if order >= 3 {
        // ∂_s γ₂^{kab}
        let mut dg2 = vec![0.0; n * n * n * n];
        for k in 0..n {
            for a in 0..n {
                for b in 0..n {
                    for s in 0..n {
                        let mut ab = 0.0;
                        let mut ba = 0.0;
                        for q in 0..n {
                            ab += d(q, b, s) * d(k, a, q) + g(q, b) * dd(k, a, q, s);
                            ba += d(q, a, s) * d(k, b, q) + g(q, a) * dd(k, b, q, s);
                            let common = -0.5 * d(k, q, s) * d(a, b, q) - 0.5 * g(k, q) * dd(a, b, q, s);
                            ab += common;
                            ba += common;
                        }
                        dg2[((k * n + a) * n + b) * n + s] = 0.5 * (ab + ba);
                    }
                }
            }
        }
        let idx3 = |k: usize, a: usize, b: usize| (k * n + a) * n + b;
        let idx4 = |k: usize, a: usize, b: usize, c: usize| ((k * n + a) * n + b) * n + c;
        let mut raw = vec![0.0; n * n * n * n];
        for k in 0..n {
            for a in 0..n {
                for b in 0..n {
                    for c in 0..n {
                        let mut s = 0.0;
                        for q in 0..n {
                            s += g(q, c) * dg2[idx4(k, a, b, q)] - gamma2[idx3(k, a, q)] * d(b, c, q);
                        }
                        raw[idx4(k, a, b, c)] = s;
                    }
                }
            }
        }
        for k in 0..n {
            for a in 0..n {
                for b in 0..n {
                    for c in 0..n {
                        let s = raw[idx4(k, a, b, c)]
                            + raw[idx4(k, a, c, b)]
                            + raw[idx4(k, b, a, c)]
                            + raw[idx4(k, b, c, a)]
                            + raw[idx4(k, c, a, b)]
                            + raw[idx4(k, c, b, a)];
                        gamma3[idx4(k, a, b, c)] = s / 6.0;
                    }
                }
            }
        }
    }
    Ok(ExpansionCoefficients {
        base: p.clone(),
        n,
        order,
        gamma1,
        gamma2,
        gamma3,
    })
}

/// The truncated Taylor polynomial of `exp_p` at `u`.
pub fn taylor_exp(coeffs: &ExpansionCoefficients, u: &Covector) -> Result<Point> {
    let n = coeffs.n;
    if u.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: u.len(),
        });
    }
    let mut out = coeffs.base.0.clone();
    for (k, o) in out.iter_mut().enumerate() {
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        let mut s3 = 0.0;
        for a in 0..n {
            if u[a] == 0.0 {
                continue;
            }
            s1 += coeffs.gamma1(k, a) * u[a];
            for b in 0..n {
                if coeffs.order >= 2 {
                    s2 += coeffs.gamma2(k, a, b) * u[a] * u[b];
                }
                if coeffs.order >= 3 {
                    for c in 0..n {
                        s3 += coeffs.gamma3(k, a, b, c) * u[a] * u[b] * u[c];
                    }
                }
            }
        }
        *o += s1 + 0.5 * s2 + s3 / 6.0;
    }
    Ok(Point(out))
}

/// Linear coordinates `y = M x` at `p` in which `g(p) = diag(ε₁..ε_m, 0..0)`,
/// negative directions first.
#[derive(Clone, Debug)]
pub struct AdaptedFrame {
    /// `M`; rows are the scaled eigenvectors of `g(p)`.
    pub m: DMatrix<f64>,
    /// `M^{-T}`, which maps covector components to adapted ones.
    pub m_inv_t: DMatrix<f64>,
    /// Diagonal of `M g(p) Mᵀ`.
    pub eps: Vec<f64>,
    pub rank: usize,
}

impl AdaptedFrame {
    pub fn at(field: &CometricField, p: &Point) -> Result<Self> {
        let split = field.split(p)?;
        let n = field.dim();
        let mut m = DMatrix::zeros(n, n);
        let mut m_inv_t = DMatrix::zeros(n, n);
        let mut eps = vec![0.0; n];
        for (row, (lambda, v)) in split.horizontal.iter().enumerate() {
            let s = lambda.abs().sqrt();
            for j in 0..n {
                m[(row, j)] = v[j] / s;
                m_inv_t[(row, j)] = v[j] * s;
            }
            eps[row] = lambda.signum();
        }
        let rank = split.horizontal.len();
        for (i, v) in split.kernel.iter().enumerate() {
            for j in 0..n {
                m[(rank + i, j)] = v[j];
                m_inv_t[(rank + i, j)] = v[j];
            }
        }
        Ok(Self { m, m_inv_t, eps, rank })
    }

    pub fn dim(&self) -> usize {
        self.eps.len()
    }

    /// `ũ = M^{-T} u`.
    pub fn covector_to_adapted(&self, u: &[f64]) -> Vec<f64> {
        (&self.m_inv_t * nalgebra::DVector::from_column_slice(u)).iter().copied().collect()
    }

    /// `u = Mᵀ ũ`.
    pub fn covector_from_adapted(&self, u: &[f64]) -> Vec<f64> {
        (self.m.transpose() * nalgebra::DVector::from_column_slice(u)).iter().copied().collect()
    }

    /// Pushes every (contravariant) index of a flat rank-`r` tensor through `M`.
    pub fn transform_tensor(&self, data: &[f64], rank: usize) -> Vec<f64> {
        let n = self.dim();
        let mut cur = data.to_vec();
        for axis in 0..rank {
            let stride = n.pow((rank - 1 - axis) as u32);
            let mut next = vec![0.0; cur.len()];
            for (idx, out) in next.iter_mut().enumerate() {
                let i = (idx / stride) % n;
                let base = idx - i * stride;
                let mut s = 0.0;
                for a in 0..n {
                    let mv = self.m[(i, a)];
                    if mv != 0.0 {
                        s += mv * cur[base + a * stride];
                    }
                }
                *out = s;
            }
            cur = next;
        }
        cur
    }
}

/// Leading-order truncation `W̃` of the Jacobian in adapted coordinates.
#[derive(Clone, Debug)]
pub struct TruncatedJacobian {
    pub w_tilde: DMatrix<f64>,
    pub det: f64,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    /// `ε₁..ε_m`.
    pub eps: Vec<f64>,
}

impl TruncatedJacobian {
    /// `det(⅓ B̃ᵀ diag(ε) B̃)`, whose modulus equals `|det W̃|`.
    pub fn reduced_determinant(&self) -> f64 {
        let eps = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&self.eps));
        (self.b.transpose() * eps * &self.b / 3.0).determinant()
    }
}

/// Precomputed adapted tensors at `p` from which `W̃(u)` is read off for
/// any `u`.
#[derive(Clone, Debug)]
pub struct LeadingOrderJacobian {
    pub frame: AdaptedFrame,
    gamma: Vec<f64>,
    gamma3: Vec<f64>,
    n: usize,
}

impl LeadingOrderJacobian {
    pub fn at(field: &CometricField, p: &Point) -> Result<Self> {
        let frame = AdaptedFrame::at(field, p)?;
        let gamma = frame.transform_tensor(christoffel_at(field, p)?.as_slice(), 3);
        let coeffs = taylor_coefficients(field, p, 3)?;
        let gamma3 = frame.transform_tensor(coeffs.gamma3_slice(), 4);
        Ok(Self {
            frame,
            gamma,
            gamma3,
            n: field.dim(),
        })
    }

    /// `γ₃` in adapted coordinates, flat.
    pub fn adapted_gamma3(&self) -> &[f64] {
        &self.gamma3
    }

    /// `Γ` in adapted coordinates, flat.
    pub fn adapted_christoffel(&self) -> &[f64] {
        &self.gamma
    }

    /// `W̃(u)` for a covector `u` in the original coordinates.
    pub fn evaluate(&self, u: &[f64]) -> TruncatedJacobian {
        let n = self.n;
        let m = self.frame.rank;
        let c = n - m;
        let ut = self.frame.covector_to_adapted(u);
        let g3 = |k: usize, a: usize, p: usize, q: usize| self.gamma3[((k * n + a) * n + p) * n + q];
        let gam = |k: usize, a: usize, p: usize| self.gamma[(k * n + a) * n + p];
        let mut w = DMatrix::zeros(n, n);
        for a in 0..m {
            w[(a, a)] = self.frame.eps[a];
        }
        for a in 0..m {
            for beta in 0..c {
                w[(a, m + beta)] = -(0..n).map(|p| gam(a, m + beta, p) * ut[p]).sum::<f64>();
                w[(m + beta, a)] = -(0..n).map(|p| gam(m + beta, a, p) * ut[p]).sum::<f64>();
            }
        }
        for alpha in 0..c {
            for beta in 0..c {
                let mut s = 0.0;
                for p in 0..n {
                    for q in 0..n {
                        s += g3(m + alpha, m + beta, p, q) * ut[p] * ut[q];
                    }
                }
                w[(m + alpha, m + beta)] = 0.5 * s;
            }
        }
        let det = w.determinant();
        TruncatedJacobian {
            b: w.view((0, m), (m, c)).into_owned(),
            c: w.view((m, 0), (c, m)).into_owned(),
            d: w.view((m, m), (c, c)).into_owned(),
            eps: self.frame.eps[..m].to_vec(),
            w_tilde: w,
            det,
        }
    }
}

pub fn truncated_jacobian(field: &CometricField, p: &Point, u: &Covector) -> Result<TruncatedJacobian> {
    field.check_len(u.len())?;
    Ok(LeadingOrderJacobian::at(field, p)?.evaluate(u))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum JacobianMethod {
    Variational,
    FiniteDifference,
}

/// `W = d(exp_p)_u` with its block decomposition in adapted coordinates.
#[derive(Clone, Debug)]
pub struct ExpJacobianBlocks {
    pub u: Covector,
    /// `W^{kj} = ∂ exp_p(u)^k / ∂u_j` in the original coordinates.
    pub w: DMatrix<f64>,
    /// `M W Mᵀ`.
    pub w_adapted: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub truncated: TruncatedJacobian,
}

/// Endpoint of the flow together with `W` from the linearized system.
pub struct VariationalFlow {
    pub x: Point,
    pub xi: Covector,
    pub w: DMatrix<f64>,
}

/// Integrates the Hamiltonian system with its linearization
/// `δẋ = ∂_s g(ξ) δx^s + g δξ`,
/// `δξ̇_k = -½ ∂_k∂_s g(ξ, ξ) δx^s - ∂_k g^{jq} ξ_q δξ_j`,
/// from `δx = 0`, `δξ = I`.
pub fn variational_flow(
    field: &CometricField,
    p: &Point,
    u: &Covector,
    control: StepControl,
) -> Result<VariationalFlow> {
    field.check_len(p.len())?;
    field.check_len(u.len())?;
    let n = field.dim();
    let nn = n * n;
    let mut y0 = vec![0.0; 2 * n + 2 * nn];
    y0[..n].copy_from_slice(p);
    y0[n..2 * n].copy_from_slice(u);
    for j in 0..n {
        y0[2 * n + nn + j * n + j] = 1.0;
    }
    let sol = ode::integrate(
        |_, y, out| {
            let (x, xi) = (&y[..n], &y[n..2 * n]);
            let dx_mat = &y[2 * n..2 * n + nn];
            let dxi_mat = &y[2 * n + nn..];
            let jet = field.jet(x, true);
            // pk[k][s] = ∂_s g^{ki} ξ_i ; rk[i][k] = ∂_k g^{iq} ξ_q ; hk[k][s] = ½ ∂_k∂_s g(ξ,ξ)
            let mut pk = vec![0.0; nn];
            let mut hk = vec![0.0; nn];
            for k in 0..n {
                for s in 0..n {
                    pk[k * n + s] = (0..n).map(|i| jet.dg(k, i, s) * xi[i]).sum();
                    let mut h = 0.0;
                    for a in 0..n {
                        if xi[a] == 0.0 {
                            continue;
                        }
                        for b in 0..n {
                            h += jet.ddg(a, b, k, s) * xi[a] * xi[b];
                        }
                    }
                    hk[k * n + s] = 0.5 * h;
                }
            }
            let dx = jet.apply(xi);
            out[..n].copy_from_slice(&dx);
            for k in 0..n {
                let mut acc = 0.0;
                for a in 0..n {
                    for b in 0..n {
                        acc += jet.dg(a, b, k) * xi[a] * xi[b];
                    }
                }
                out[n + k] = -0.5 * acc;
            }
            for k in 0..n {
                for j in 0..n {
                    let mut a = 0.0;
                    let mut b = 0.0;
                    for s in 0..n {
                        a += pk[k * n + s] * dx_mat[s * n + j] + jet.g(k, s) * dxi_mat[s * n + j];
                        // pk[i][k] = Σ_q ∂_k g^{iq} ξ_q
                        b += -hk[k * n + s] * dx_mat[s * n + j] - pk[s * n + k] * dxi_mat[s * n + j];
                    }
                    out[2 * n + k * n + j] = a;
                    out[2 * n + nn + k * n + j] = b;
                }
            }
        },
        &y0,
        1.0,
        control,
    )?;
    let y = sol.states.last().unwrap();
    Ok(VariationalFlow {
        x: Point(y[..n].to_vec()),
        xi: Covector(y[n..2 * n].to_vec()),
        w: DMatrix::from_row_slice(n, n, &y[2 * n..2 * n + nn]),
    })
}

fn finite_difference_jacobian(
    field: &CometricField,
    p: &Point,
    u: &Covector,
    control: StepControl,
) -> Result<DMatrix<f64>> {
    let n = field.dim();
    let h = FD_JACOBIAN_STEP * norm(u).max(1.0);
    let columns: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut plus = u.clone();
            plus[j] += h;
            let mut minus = u.clone();
            minus[j] -= h;
            let a = exp_with(field, p, &plus, control)?;
            let b = exp_with(field, p, &minus, control)?;
            Ok((0..n).map(|k| (a[k] - b[k]) / (2.0 * h)).collect())
        })
        .collect::<Result<_>>()?;
    Ok(DMatrix::from_fn(n, n, |k, j| columns[j][k]))
}

pub fn exp_jacobian(
    field: &CometricField,
    p: &Point,
    u: &Covector,
    method: JacobianMethod,
    control: StepControl,
) -> Result<ExpJacobianBlocks> {
    field.check_len(p.len())?;
    field.check_len(u.len())?;
    let w = match method {
        JacobianMethod::Variational => variational_flow(field, p, u, control)?.w,
        JacobianMethod::FiniteDifference => finite_difference_jacobian(field, p, u, control)?,
    };
    let leading = LeadingOrderJacobian::at(field, p)?;
    let frame = &leading.frame;
    let w_adapted = &frame.m * &w * frame.m.transpose();
    let (n, m) = (field.dim(), frame.rank);
    let c = n - m;
    Ok(ExpJacobianBlocks {
        u: u.clone(),
        a: w_adapted.view((0, 0), (m, m)).into_owned(),
        b: w_adapted.view((0, m), (m, c)).into_owned(),
        c: w_adapted.view((m, 0), (c, m)).into_owned(),
        d: w_adapted.view((m, m), (c, c)).into_owned(),
        truncated: leading.evaluate(u),
        w_adapted,
        w,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffeoTest {
    pub det_w_tilde: f64,
    pub cometric_scalar: f64,
    pub is_local_diffeo: bool,
}

fn diffeo_verdict(field: &CometricField, g_u: &[f64], u: &[f64], det: f64, delta: f64) -> DiffeoTest {
    let class = classify(g_u, u, CAUSAL_TOL);
    let scalar = class.scalar;
    let nondegenerate = !matches!(class.class, CausalClass::Null | CausalClass::Annihilator);
    let bound = delta * scalar.abs().powi(field.corank() as i32);
    DiffeoTest {
        det_w_tilde: det,
        cometric_scalar: scalar,
        is_local_diffeo: nondegenerate && det.abs() >= bound,
    }
}

/// `|det W̃(u)| ≥ δ |<g_p u, u>|^{n-m}` for non-null, non-annihilator `u`.
pub fn local_diffeo_test(field: &CometricField, p: &Point, u: &Covector, delta: f64) -> Result<DiffeoTest> {
    let jac = truncated_jacobian(field, p, u)?;
    let g_u = field.apply_cometric(p, u)?;
    Ok(diffeo_verdict(field, &g_u, u, jac.det, delta))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaCalibration {
    /// `min |det W̃(u)| / |<gu, u>|^{n-m}` over the samples.
    pub delta_hat: f64,
    /// Threshold used by the test, `δ̂ / 10`.
    pub delta: f64,
    pub samples: usize,
}

/// Empirical `δ̂` over `samples` seeded unit covectors with
/// `|<g_p u, u>| > 0.1`.
pub fn calibrate_delta(field: &CometricField, p: &Point, samples: usize, seed: u64) -> Result<DeltaCalibration> {
    let leading = LeadingOrderJacobian::at(field, p)?;
    let g = field.matrix_at(p)?;
    let n = field.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draws = Vec::with_capacity(samples);
    let mut attempts = 0usize;
    while draws.len() < samples {
        attempts += 1;
        if attempts > samples * 1000 {
            return Err(Error::Consistency("could not draw calibration covectors".into()));
        }
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let len = norm(&v);
        if len == 0.0 || len > 1.0 {
            continue;
        }
        let u: Vec<f64> = v.iter().map(|c| c / len).collect();
        let gu = &g * nalgebra::DVector::from_column_slice(&u);
        let scalar = dot(gu.as_slice(), &u);
        if scalar.abs() > CALIBRATION_MIN_SCALAR {
            draws.push((u, scalar));
        }
    }
    let corank = field.corank() as i32;
    let delta_hat = draws
        .par_iter()
        .map(|(u, s)| leading.evaluate(u).det.abs() / s.abs().powi(corank))
        .collect::<Vec<_>>()
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    Ok(DeltaCalibration {
        delta_hat,
        delta: delta_hat / 10.0,
        samples,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussLemmaCheck {
    /// `<g_p u, w>`.
    pub lhs: f64,
    /// `<d(exp_p)_u w, ξ(1)>`.
    pub rhs: f64,
    pub residual: f64,
    /// `|<g_p u, w> - Q(d exp w, d exp u)|` when `d exp w` is horizontal.
    pub horizontal_residual: Option<f64>,
}

pub fn gauss_lemma_check(
    field: &CometricField,
    p: &Point,
    u: &Covector,
    w: &Covector,
    control: StepControl,
) -> Result<GaussLemmaCheck> {
    field.check_len(w.len())?;
    if norm(u) == 0.0 {
        return Err(Error::InvalidArgument("Gauss lemma needs u ≠ 0".into()));
    }
    let flow = variational_flow(field, p, u, control)?;
    let g_u = field.apply_cometric(p, u)?;
    let lhs = dot(&g_u, w);
    let dw: Vec<f64> = (&flow.w * nalgebra::DVector::from_column_slice(w)).iter().copied().collect();
    let rhs = dot(&dw, &flow.xi);
    let split = field.split(&flow.x)?;
    let proj = split.project_horizontal(&dw);
    let distance = norm(&dw.iter().zip(&proj).map(|(a, b)| a - b).collect::<Vec<_>>());
    let horizontal_residual = if distance <= GAUSS_HORIZONTAL_TOL * norm(&dw).max(1.0) {
        let du: Vec<f64> = (&flow.w * nalgebra::DVector::from_column_slice(u)).iter().copied().collect();
        let du_h = split.project_horizontal(&du);
        let q = dot(&proj, &split.pseudo_solve(&du_h));
        Some((lhs - q).abs())
    } else {
        None
    };
    Ok(GaussLemmaCheck {
        lhs,
        rhs,
        residual: (lhs - rhs).abs(),
        horizontal_residual,
    })
}

/// One point of a diffeo-region scan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffeoScanRow {
    pub u: Vec<f64>,
    pub cometric_scalar: f64,
    #[serde(rename = "detW")]
    pub det_w: f64,
    pub local_diffeo: bool,
}

/// Unit covectors `cos φ e₋ + sin φ e₊` in the adapted basis at `p`, with
/// `φ_i = π/4 + 2πi/N`. `e₋` is the first timelike adapted direction and
/// `e₊` the first spacelike one (the first two directions if the metric is
/// definite).
pub fn scan_directions(field: &CometricField, p: &Point, resolution: usize) -> Result<Vec<Covector>> {
    if resolution == 0 {
        return Err(Error::InvalidArgument("resolution must be positive".into()));
    }
    let frame = AdaptedFrame::at(field, p)?;
    let nu = field.index();
    let (first, second) = if nu == 0 || nu == field.rank() { (0, 1) } else { (0, nu) };
    let n = field.dim();
    Ok((0..resolution)
        .map(|i| {
            let phi = std::f64::consts::FRAC_PI_4 + 2.0 * std::f64::consts::PI * i as f64 / resolution as f64;
            let mut ut = vec![0.0; n];
            ut[first] = phi.cos();
            ut[second] = phi.sin();
            Covector(frame.covector_from_adapted(&ut))
        })
        .collect())
}

/// Evaluates the local-diffeomorphism test on the given covectors, in
/// parallel, keeping input order.
pub fn diffeo_scan(field: &CometricField, p: &Point, directions: &[Covector], delta: f64) -> Result<Vec<DiffeoScanRow>> {
    let leading = LeadingOrderJacobian::at(field, p)?;
    directions
        .par_iter()
        .map(|u| {
            let g_u = field.apply_cometric(p, u)?;
            let det = leading.evaluate(u).det;
            let t = diffeo_verdict(field, &g_u, u, det, delta);
            Ok(DiffeoScanRow {
                u: u.0.clone(),
                cometric_scalar: t.cometric_scalar,
                det_w: t.det_w_tilde,
                local_diffeo: t.is_local_diffeo,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::constant_field;
    use crate::models::{heisenberg_lorentz, quaternion_group, ModelId};

    fn rand_vec(rng: &mut ChaCha8Rng, n: usize, s: f64) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-s..s)).collect()
    }

    #[test]
    fn exp_fixed_points() {
        let h = heisenberg_lorentz();
        let p = Point(vec![0.2, -0.4, 1.0]);
        assert_eq!(exp(h, &p, &Covector::zeros(3)).unwrap(), p);
        let omega = Covector(vec![-0.5 * p[1], 0.5 * p[0], 1.0]);
        let e = exp(h, &p, &omega.scaled(2.5)).unwrap();
        for (a, b) in e.iter().zip(p.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn exp_homogeneity_in_time() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for f in [heisenberg_lorentz(), quaternion_group()] {
            let n = f.dim();
            for _ in 0..5 {
                let p = Point(rand_vec(&mut rng, n, 0.5));
                let u = Covector(rand_vec(&mut rng, n, 1.0));
                let s: f64 = rng.random_range(0.1..1.0);
                let traj = integrate_extremal(f, &p, &u, s, StepControl::adaptive(1e-12)).unwrap();
                let e = exp_with(f, &p, &u.scaled(s), StepControl::adaptive(1e-12)).unwrap();
                for (a, b) in e.iter().zip(traj.endpoint().iter()) {
                    assert!((a - b).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn taylor_coefficients_match_cometric_and_christoffel() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        for f in [heisenberg_lorentz(), quaternion_group()] {
            let n = f.dim();
            let p = Point(rand_vec(&mut rng, n, 1.0));
            let c = taylor_coefficients(f, &p, 3).unwrap();
            let g = f.values(&p);
            let gamma = christoffel_at(f, &p).unwrap();
            for k in 0..n {
                for a in 0..n {
                    assert_eq!(c.gamma1(k, a), g[k * n + a]);
                    for b in 0..n {
                        assert!((c.gamma2(k, a, b) + gamma.get(k, a, b)).abs() < 1e-12);
                        for d in 0..n {
                            let v = c.gamma3(k, a, b, d);
                            assert!((v - c.gamma3(k, b, a, d)).abs() < 1e-12);
                            assert!((v - c.gamma3(k, a, d, b)).abs() < 1e-12);
                        }
                    }
                }
            }
        }
        let c = taylor_coefficients(&constant_field(), &Point(vec![1.0, 2.0, 3.0]), 3).unwrap();
        for k in 0..3 {
            for a in 0..3 {
                for b in 0..3 {
                    assert_eq!(c.gamma2(k, a, b), 0.0);
                    for d in 0..3 {
                        assert_eq!(c.gamma3(k, a, b, d), 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn taylor_first_order_term_on_heisenberg() {
        let h = heisenberg_lorentz();
        let p = Point(vec![0.3, 0.8, -0.2]);
        let c = taylor_coefficients(h, &p, 1).unwrap();
        let eps = 1e-3;
        let t = taylor_exp(&c, &Covector::basis(3, 0).scaled(eps)).unwrap();
        let expected = [-eps, 0.0, -eps * 0.5 * p[1]];
        for k in 0..3 {
            assert!((t[k] - p[k] - expected[k]).abs() < 1e-15);
        }
        assert_eq!(taylor_exp(&c, &Covector::zeros(3)).unwrap(), p);
    }

    #[test]
    fn taylor_remainder_is_fourth_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for f in [heisenberg_lorentz(), quaternion_group()] {
            let n = f.dim();
            let p = Point(rand_vec(&mut rng, n, 0.5));
            let c = taylor_coefficients(f, &p, 3).unwrap();
            let mut u = rand_vec(&mut rng, n, 1.0);
            let len = norm(&u);
            u.iter_mut().for_each(|v| *v /= len);
            let u = Covector(u);
            let errs: Vec<f64> = [0.1, 0.05, 0.025]
                .iter()
                .map(|&s| {
                    let e = exp_with(f, &p, &u.scaled(s), StepControl::adaptive(1e-13)).unwrap();
                    let t = taylor_exp(&c, &u.scaled(s)).unwrap();
                    norm(&e.iter().zip(t.iter()).map(|(a, b)| a - b).collect::<Vec<_>>())
                })
                .collect();
            assert!(errs[0] / errs[1] >= 14.0, "{errs:?}");
            assert!(errs[1] / errs[2] >= 14.0, "{errs:?}");
        }
    }

    #[test]
    fn gamma3_vanishes_on_vertical_triples_in_adapted_coordinates() {
        for f in [heisenberg_lorentz(), quaternion_group()] {
            let p = Point::zeros(f.dim());
            let lead = LeadingOrderJacobian::at(f, &p).unwrap();
            let (n, m) = (f.dim(), f.rank());
            let g3 = lead.adapted_gamma3();
            for k in 0..n {
                for a in m..n {
                    for pp in m..n {
                        for q in m..n {
                            assert!(g3[((k * n + a) * n + pp) * n + q].abs() < 1e-14);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn jacobian_methods_agree_and_limit_is_cometric() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        for f in [heisenberg_lorentz(), quaternion_group()] {
            let n = f.dim();
            for _ in 0..3 {
                let p = Point(rand_vec(&mut rng, n, 0.5));
                let u = Covector(rand_vec(&mut rng, n, 1.0));
                let v = exp_jacobian(f, &p, &u, JacobianMethod::Variational, StepControl::default()).unwrap();
                let d = exp_jacobian(f, &p, &u, JacobianMethod::FiniteDifference, StepControl::default()).unwrap();
                assert!((&v.w - &d.w).abs().max() < 1e-5);
            }
            let p = Point(rand_vec(&mut rng, n, 0.5));
            let z = exp_jacobian(f, &p, &Covector::zeros(n), JacobianMethod::Variational, StepControl::default()).unwrap();
            let g = f.matrix_at(&p).unwrap();
            assert!((&z.w - g).abs().max() < 1e-12);
            let m = f.rank();
            let eps = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&z.truncated.eps));
            assert!((&z.a - eps).abs().max() < 1e-12);
            assert!(z.b.abs().max() < 1e-12 && z.c.abs().max() < 1e-12 && z.d.abs().max() < 1e-12);
            assert_eq!(z.a.nrows(), m);
        }
    }

    #[test]
    fn b_block_is_linear_to_leading_order() {
        let f = quaternion_group();
        let p = Point::zeros(7);
        let u = Covector(vec![0.3, -0.2, 0.5, 0.1, 0.4, -0.3, 0.2]);
        let rel = |s: f64| {
            let j = exp_jacobian(f, &p, &u.scaled(s), JacobianMethod::Variational, StepControl::default()).unwrap();
            (&j.b - &j.truncated.b).abs().max()
        };
        let ratio = rel(0.02) / rel(0.01);
        assert!(ratio > 3.0, "{ratio}");
    }

    #[test]
    fn truncated_determinant_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        for f in [heisenberg_lorentz(), quaternion_group()] {
            let n = f.dim();
            let p = Point(rand_vec(&mut rng, n, 0.5));
            let lead = LeadingOrderJacobian::at(f, &p).unwrap();
            let degree = 2 * f.corank() as i32;
            for _ in 0..10 {
                let u = rand_vec(&mut rng, n, 1.0);
                let base = lead.evaluate(&u);
                assert!((base.det.abs() - base.reduced_determinant().abs()).abs() < 1e-10 * base.det.abs().max(1e-12));
                for s in [0.5, 2.0, 3.0] {
                    let scaled: Vec<f64> = u.iter().map(|v| v * s).collect();
                    let det = lead.evaluate(&scaled).det;
                    assert!((det / base.det - s.powi(degree)).abs() < 1e-8 * s.powi(degree));
                }
            }
        }
        let f = constant_field();
        let t = truncated_jacobian(&f, &Point::zeros(3), &Covector(vec![1.0, 0.3, 0.2])).unwrap();
        assert_eq!(t.det, 0.0);
    }

    #[test]
    fn heisenberg_timelike_direction_is_local_diffeo() {
        let h = heisenberg_lorentz();
        let delta = ModelId::HeisenbergLorentz.calibrated_delta();
        assert!(delta > 0.0);
        let t = local_diffeo_test(h, &Point::zeros(3), &Covector::basis(3, 0), delta).unwrap();
        assert!(t.det_w_tilde != 0.0 && t.is_local_diffeo);
        let null = local_diffeo_test(h, &Point::zeros(3), &Covector(vec![1.0, 1.0, 0.0]), delta).unwrap();
        assert!(!null.is_local_diffeo);
        let annihilator = local_diffeo_test(h, &Point::zeros(3), &Covector::basis(3, 2), delta).unwrap();
        assert!(!annihilator.is_local_diffeo);
    }

    #[test]
    fn gauss_lemma_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(36);
        for f in [heisenberg_lorentz(), quaternion_group()] {
            let n = f.dim();
            let p = Point(rand_vec(&mut rng, n, 0.5));
            let u = Covector(rand_vec(&mut rng, n, 1.0));
            let radial = gauss_lemma_check(f, &p, &u, &u, StepControl::default()).unwrap();
            assert!(radial.residual < 1e-7);
            let h0 = 0.5 * dot(&f.apply_cometric(&p, &u).unwrap(), &u);
            assert!((radial.lhs - 2.0 * h0).abs() < 1e-12);
            assert!(radial.horizontal_residual.unwrap() < 1e-7);
            let v = f.annihilator_basis(&p).unwrap().remove(0);
            let ann = gauss_lemma_check(f, &p, &u, &v, StepControl::default()).unwrap();
            assert!(ann.lhs.abs() < 1e-12 && ann.residual < 1e-7);
            let w = Covector(rand_vec(&mut rng, n, 1.0));
            assert!(gauss_lemma_check(f, &p, &u, &w, StepControl::default()).unwrap().residual < 1e-6);
        }
    }

    #[test]
    fn heisenberg_scan_flags_null_directions() {
        let h = heisenberg_lorentz();
        let o = Point::zeros(3);
        let dirs = scan_directions(h, &o, 100).unwrap();
        let rows = diffeo_scan(h, &o, &dirs, ModelId::HeisenbergLorentz.calibrated_delta()).unwrap();
        for (i, r) in rows.iter().enumerate() {
            let null = i % 25 == 0;
            assert_eq!(r.local_diffeo, !null, "row {i}: {r:?}");
        }
        assert!(scan_directions(h, &o, 0).is_err());
    }
}
