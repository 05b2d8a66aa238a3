//! Normal extremals: the Hamiltonian `H = ½<g_x ξ, ξ>` and its flow
//!
//! `ẋ^k = g^{kj} ξ_j`, `ξ̇_k = -½ ∂_k g^{pq} ξ_p ξ_q`,
//!
//! plus the length functionals, causal bookkeeping and the canonical
//! cotangent lift of a horizontal curve.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::christoffel::{annihilator_section, christoffel_at, is_two_step_generator};
use crate::cometric::{
    classify, dot, norm, CausalClass, CometricField, Covector, FieldJet, Point, TangentVector,
    CAUSAL_TOL, HORIZONTAL_TOL,
};
use crate::error::{Error, Result};
use crate::ode::{self, StepControl};

/// Hamiltonian drift that is reported as a warning.
pub const DRIFT_WARNING: f64 = 1e-9;
/// Hamiltonian drift that aborts an integration.
pub const DRIFT_ERROR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseState {
    pub x: Point,
    pub xi: Covector,
}

impl PhaseState {
    pub fn new(x: Point, xi: Covector) -> Self {
        Self { x, xi }
    }

    fn flat(&self) -> Vec<f64> {
        let mut v = self.x.0.clone();
        v.extend_from_slice(&self.xi);
        v
    }

    fn from_flat(n: usize, y: &[f64]) -> Self {
        Self {
            x: Point(y[..n].to_vec()),
            xi: Covector(y[n..2 * n].to_vec()),
        }
    }
}

/// Time-ordered samples of a biextremal `(x(t), ξ(t))`.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<PhaseState>,
    /// `H` at the first sample.
    pub h0: f64,
    /// Causal class of the initial covector.
    pub causal: CausalClass,
    /// `max_i |H(x_i, ξ_i) - H₀|`.
    pub max_drift: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> &PhaseState {
        self.states.last().expect("trajectory has samples")
    }

    pub fn endpoint(&self) -> &Point {
        &self.last().x
    }

    pub fn drift_warning(&self) -> bool {
        self.max_drift > DRIFT_WARNING
    }

    /// Cubic Hermite reconstruction of the state at `t`, using the
    /// Hamiltonian vector field at the bracketing samples.
    pub fn state_at(&self, field: &CometricField, t: f64) -> Result<PhaseState> {
        let (t0, t1) = (self.times[0], *self.times.last().unwrap());
        if !(t >= t0 && t <= t1) {
            return Err(Error::InvalidArgument(format!(
                "t = {t} outside the trajectory span [{t0}, {t1}]"
            )));
        }
        let i = match self.times.binary_search_by(|s| s.partial_cmp(&t).unwrap()) {
            Ok(i) => return Ok(self.states[i].clone()),
            Err(i) => i - 1,
        };
        let (ta, tb) = (self.times[i], self.times[i + 1]);
        let h = tb - ta;
        let s = (t - ta) / h;
        let (ya, yb) = (self.states[i].flat(), self.states[i + 1].flat());
        let (da, db) = (
            flat_rhs(field, &self.states[i]),
            flat_rhs(field, &self.states[i + 1]),
        );
        let h00 = 2.0 * s * s * s - 3.0 * s * s + 1.0;
        let h10 = s * s * s - 2.0 * s * s + s;
        let h01 = -2.0 * s * s * s + 3.0 * s * s;
        let h11 = s * s * s - s * s;
        let y: Vec<f64> = (0..ya.len())
            .map(|j| h00 * ya[j] + h10 * h * da[j] + h01 * yb[j] + h11 * h * db[j])
            .collect();
        Ok(PhaseState::from_flat(field.dim(), &y))
    }

    /// The same extremal sampled at `times` (within the original span).
    pub fn resampled(&self, field: &CometricField, times: &[f64]) -> Result<Trajectory> {
        let states = times
            .iter()
            .map(|&t| self.state_at(field, t))
            .collect::<Result<Vec<_>>>()?;
        Ok(Trajectory {
            times: times.to_vec(),
            states,
            h0: self.h0,
            causal: self.causal,
            max_drift: self.max_drift,
        })
    }
}

fn flat_rhs(field: &CometricField, s: &PhaseState) -> Vec<f64> {
    let (dx, dxi) = rhs_from_jet(&field.jet(&s.x, false), &s.xi);
    let mut v = dx;
    v.extend(dxi);
    v
}

/// `H(x, ξ) = ½<g_x ξ, ξ>`.
pub fn hamiltonian(field: &CometricField, state: &PhaseState) -> Result<f64> {
    let v = field.apply_cometric(&state.x, &state.xi)?;
    Ok(0.5 * dot(&v, &state.xi))
}

fn rhs_from_jet(jet: &FieldJet, xi: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = jet.dim();
    let dx = jet.apply(xi);
    let mut dxi = vec![0.0; n];
    for (k, d) in dxi.iter_mut().enumerate() {
        let mut s = 0.0;
        for p in 0..n {
            if xi[p] == 0.0 {
                continue;
            }
            let mut inner = 0.0;
            for q in 0..n {
                inner += jet.dg(p, q, k) * xi[q];
            }
            s += xi[p] * inner;
        }
        *d = -0.5 * s;
    }
    (dx, dxi)
}

/// Right-hand side of the Hamiltonian system at `state`.
pub fn hamiltonian_rhs(field: &CometricField, state: &PhaseState) -> Result<(TangentVector, Covector)> {
    field.check_len(state.x.len())?;
    field.check_len(state.xi.len())?;
    let (dx, dxi) = rhs_from_jet(&field.jet(&state.x, false), &state.xi);
    Ok((TangentVector(dx), Covector(dxi)))
}

/// Integrates the Hamiltonian system from `(x₀, ξ₀)` over `[0, t_end]`.
///
/// Fails on blow-up, on Hamiltonian drift above [`DRIFT_ERROR`], and when
/// the causal class of `ξ(t)` leaves the class of `ξ₀`.
pub fn integrate_extremal(
    field: &CometricField,
    x0: &Point,
    xi0: &Covector,
    t_end: f64,
    control: StepControl,
) -> Result<Trajectory> {
    field.check_len(x0.len())?;
    field.check_len(xi0.len())?;
    let n = field.dim();
    let start = PhaseState::new(x0.clone(), xi0.clone());
    let solution = ode::integrate(
        |_, y, out| {
            let (dx, dxi) = rhs_from_jet(&field.jet(&y[..n], false), &y[n..]);
            out[..n].copy_from_slice(&dx);
            out[n..].copy_from_slice(&dxi);
        },
        &start.flat(),
        t_end,
        control,
    )?;
    let states: Vec<PhaseState> = solution
        .states
        .iter()
        .map(|y| PhaseState::from_flat(n, y))
        .collect();
    let g0 = field.apply_cometric(x0, xi0)?;
    let initial = classify(&g0, xi0, CAUSAL_TOL);
    let h0 = 0.5 * initial.scalar;
    let mut max_drift = 0.0f64;
    for (t, s) in solution.times.iter().zip(&states) {
        let g = field.apply_cometric(&s.x, &s.xi)?;
        let c = classify(&g, &s.xi, CAUSAL_TOL);
        let drift = (0.5 * c.scalar - h0).abs();
        if drift > DRIFT_ERROR {
            return Err(Error::HamiltonianDrift {
                drift,
                t: *t,
                limit: DRIFT_ERROR,
            });
        }
        if c.class != initial.class {
            return Err(Error::CausalFlip { t: *t });
        }
        max_drift = max_drift.max(drift);
    }
    Ok(Trajectory {
        times: solution.times,
        states,
        h0,
        causal: initial.class,
        max_drift,
    })
}

/// Composite Simpson rule on a possibly nonuniform grid.
pub fn simpson(times: &[f64], values: &[f64]) -> f64 {
    let n = times.len();
    assert_eq!(n, values.len());
    if n < 2 {
        return 0.0;
    }
    if n == 2 {
        return 0.5 * (times[1] - times[0]) * (values[0] + values[1]);
    }
    let intervals = n - 1;
    let paired = intervals - intervals % 2;
    let mut total = 0.0;
    let mut i = 0;
    while i < paired {
        let h0 = times[i + 1] - times[i];
        let h1 = times[i + 2] - times[i + 1];
        let (f0, f1, f2) = (values[i], values[i + 1], values[i + 2]);
        total += (h0 + h1) / 6.0
            * ((2.0 - h1 / h0) * f0 + (h0 + h1) * (h0 + h1) / (h0 * h1) * f1 + (2.0 - h0 / h1) * f2);
        i += 2;
    }
    if intervals % 2 == 1 {
        let h0 = times[n - 2] - times[n - 3];
        let h1 = times[n - 1] - times[n - 2];
        let alpha = (2.0 * h1 * h1 + 3.0 * h0 * h1) / (6.0 * (h0 + h1));
        let beta = (h1 * h1 + 3.0 * h0 * h1) / (6.0 * h0);
        let eta = h1 * h1 * h1 / (6.0 * h0 * (h0 + h1));
        total += alpha * values[n - 1] + beta * values[n - 2] - eta * values[n - 3];
    }
    total
}

fn hamiltonian_samples(field: &CometricField, traj: &Trajectory) -> Result<Vec<f64>> {
    traj.states.iter().map(|s| hamiltonian(field, s)).collect()
}

/// `L = ∫ |Q(ẋ, ẋ)|^{1/2} dt = ∫ |2H|^{1/2} dt` along the extremal.
pub fn natural_parameter(field: &CometricField, traj: &Trajectory) -> Result<f64> {
    let v: Vec<f64> = hamiltonian_samples(field, traj)?
        .into_iter()
        .map(|h| (2.0 * h).abs().sqrt())
        .collect();
    Ok(simpson(&traj.times, &v))
}

/// `E = ∫ |Q(ẋ, ẋ)| dt = ∫ |2H| dt` along the extremal.
pub fn energy(field: &CometricField, traj: &Trajectory) -> Result<f64> {
    let v: Vec<f64> = hamiltonian_samples(field, traj)?
        .into_iter()
        .map(|h| (2.0 * h).abs())
        .collect();
    Ok(simpson(&traj.times, &v))
}

/// A sampled curve with its velocities.
#[derive(Clone, Debug)]
pub struct HorizontalCurve {
    pub times: Vec<f64>,
    pub points: Vec<Point>,
    pub velocities: Vec<TangentVector>,
}

impl HorizontalCurve {
    fn validate(&self, field: &CometricField) -> Result<()> {
        let n = self.times.len();
        if n < 2 || self.points.len() != n || self.velocities.len() != n {
            return Err(Error::InvalidArgument(
                "curve needs at least two samples with one point and one velocity each".into(),
            ));
        }
        if self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("curve times must increase strictly".into()));
        }
        for (p, v) in self.points.iter().zip(&self.velocities) {
            field.check_len(p.len())?;
            field.check_len(v.len())?;
        }
        Ok(())
    }

    /// Curve traced by an extremal, with velocities `g ξ`.
    pub fn from_trajectory(field: &CometricField, traj: &Trajectory) -> Result<Self> {
        let velocities = traj
            .states
            .iter()
            .map(|s| field.apply_cometric(&s.x, &s.xi))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            times: traj.times.clone(),
            points: traj.states.iter().map(|s| s.x.clone()).collect(),
            velocities,
        })
    }
}

/// `Q(ċ, ċ)` at every sample; fails if a velocity is not horizontal.
pub fn curve_speeds(field: &CometricField, curve: &HorizontalCurve) -> Result<Vec<f64>> {
    curve.validate(field)?;
    curve
        .points
        .iter()
        .zip(&curve.velocities)
        .map(|(p, v)| field.metric_from_cometric(p, v, v))
        .collect()
}

/// Natural parameter `∫ |Q(ċ, ċ)|^{1/2} dt` of a horizontal curve.
pub fn curve_natural_parameter(field: &CometricField, curve: &HorizontalCurve) -> Result<f64> {
    let v: Vec<f64> = curve_speeds(field, curve)?
        .into_iter()
        .map(|q| q.abs().sqrt())
        .collect();
    Ok(simpson(&curve.times, &v))
}

/// Energy `∫ |Q(ċ, ċ)| dt` of a horizontal curve.
pub fn curve_energy(field: &CometricField, curve: &HorizontalCurve) -> Result<f64> {
    let v: Vec<f64> = curve_speeds(field, curve)?.into_iter().map(f64::abs).collect();
    Ok(simpson(&curve.times, &v))
}

/// `ẍ = ∂_s g(ξ) ẋ^s + g ξ̇`, the acceleration implied by the Hamiltonian
/// system at `state`.
pub fn reconstructed_acceleration(field: &CometricField, state: &PhaseState) -> Result<TangentVector> {
    field.check_len(state.x.len())?;
    field.check_len(state.xi.len())?;
    let jet = field.jet(&state.x, false);
    let (dx, dxi) = rhs_from_jet(&jet, &state.xi);
    let n = field.dim();
    let mut out = jet.apply(&dxi);
    for (k, o) in out.iter_mut().enumerate() {
        for s in 0..n {
            if dx[s] == 0.0 {
                continue;
            }
            let mut inner = 0.0;
            for j in 0..n {
                inner += jet.dg(k, j, s) * state.xi[j];
            }
            *o += inner * dx[s];
        }
    }
    Ok(TangentVector(out))
}

/// First-derivative weights at `z` for the stencil `x` (Fornberg).
fn derivative_weights(z: f64, x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut c = vec![[0.0f64; 2]; n];
    let mut c1 = 1.0;
    let mut c4 = x[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(1);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - z;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.iter().map(|w| w[1]).collect()
}

/// Derivative of sampled vector data with 5-point (or shorter) stencils.
pub(crate) fn sample_derivative(times: &[f64], values: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = times.len();
    let width = n.min(5);
    (0..n)
        .map(|i| {
            let start = i.saturating_sub(width / 2).min(n - width);
            let idx = start..start + width;
            let w = derivative_weights(times[i], &times[idx.clone()]);
            let dim = values[i].len();
            let mut d = vec![0.0; dim];
            for (wk, k) in w.iter().zip(idx) {
                for (dj, vj) in d.iter_mut().zip(&values[k]) {
                    *dj += wk * vj;
                }
            }
            d
        })
        .collect()
}

/// A cotangent lift `ξ(t)` of a horizontal curve with its diagnostics.
#[derive(Clone, Debug)]
pub struct CanonicalLift {
    pub times: Vec<f64>,
    pub covectors: Vec<Covector>,
    /// Annihilator coefficients `a_k(t)` relative to the minimum-norm lift.
    pub coefficients: Vec<Vec<f64>>,
    /// `max_l |<ω, Γ(ξ, v_l)>|` per sample.
    pub orthogonality_residuals: Vec<f64>,
    /// `‖g ξ - ẋ‖` per sample.
    pub lift_residuals: Vec<f64>,
}

/// The canonical cotangent lift: the lift `ξ = η + a_k v^k` of `ẋ` for which
/// `ω_j = ξ̇_j + ½ ∂_j g^{pq} ξ_p ξ_q` is orthogonal to every `Γ(ξ, v^l)`.
///
/// The `ȧ_k` terms drop out of these conditions (they pair an annihilator with
/// a horizontal vector), so the `a_k` solve a linear system at each sample.
/// Time derivatives are taken by finite differences over the samples.
pub fn canonical_cotangent_lift(
    field: &CometricField,
    curve: &HorizontalCurve,
    eta0: &Covector,
) -> Result<CanonicalLift> {
    curve.validate(field)?;
    field.check_len(eta0.len())?;
    let n = field.dim();
    let count = curve.times.len();

    let mut etas = Vec::with_capacity(count);
    for (p, v) in curve.points.iter().zip(&curve.velocities) {
        let split = field.split(p)?;
        let proj = split.project_horizontal(v);
        let distance = norm(&v.iter().zip(&proj).map(|(a, b)| a - b).collect::<Vec<_>>());
        if distance > HORIZONTAL_TOL * norm(v).max(1.0) {
            return Err(Error::NotHorizontal { distance });
        }
        etas.push(split.pseudo_solve(v));
    }
    let g_eta0 = field.apply_cometric(&curve.points[0], eta0)?;
    let distance = norm(
        &g_eta0
            .iter()
            .zip(curve.velocities[0].iter())
            .map(|(a, b)| a - b)
            .collect::<Vec<_>>(),
    );
    if distance > HORIZONTAL_TOL * norm(&curve.velocities[0]).max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "initial lift does not project to the initial velocity (residual {distance:e})"
        )));
    }

    let mut frames: Vec<Vec<Covector>> = Vec::with_capacity(count);
    let initial = field.annihilator_basis(&curve.points[0])?;
    frames.push(initial);
    for p in &curve.points[1..] {
        let next = annihilator_section(field, p, frames.last().unwrap())?;
        frames.push(next);
    }
    let c = frames[0].len();

    let d_eta = sample_derivative(&curve.times, &etas);
    let d_frames: Vec<Vec<Vec<f64>>> = (0..c)
        .map(|k| {
            let series: Vec<Vec<f64>> = frames.iter().map(|f| f[k].0.clone()).collect();
            sample_derivative(&curve.times, &series)
        })
        .collect();

    let mut covectors = Vec::with_capacity(count);
    let mut coefficients = Vec::with_capacity(count);
    let mut images_all = Vec::with_capacity(count);
    for i in 0..count {
        let x = &curve.points[i];
        let eta = Covector(etas[i].clone());
        let test = is_two_step_generator(field, x, &eta)?;
        if !test.generates {
            return Err(Error::NotInjective {
                smallest: test.smallest_singular_value,
            });
        }
        let gamma = christoffel_at(field, x)?;
        let jet = field.jet(x, false);
        let images: Vec<Vec<f64>> = frames[i]
            .iter()
            .map(|v| gamma.contract_unchecked(&eta, v))
            .collect();
        let half_dg = |a: &[f64], b: &[f64]| -> Vec<f64> {
            (0..n)
                .map(|j| {
                    let mut s = 0.0;
                    for p in 0..n {
                        for q in 0..n {
                            s += jet.dg(p, q, j) * a[p] * b[q];
                        }
                    }
                    s
                })
                .collect()
        };
        let mut omega_eta = half_dg(&eta, &eta);
        for (o, d) in omega_eta.iter_mut().zip(&d_eta[i]) {
            *o = 0.5 * *o + d;
        }
        let mut system = vec![0.0; c * c];
        let mut rhs = vec![0.0; c];
        for l in 0..c {
            rhs[l] = -dot(&images[l], &omega_eta);
            for k in 0..c {
                let cross = half_dg(&eta, &frames[i][k]);
                let col: Vec<f64> = d_frames[k][i].iter().zip(&cross).map(|(a, b)| a + b).collect();
                system[l * c + k] = dot(&images[l], &col);
            }
        }
        let a = crate::cometric::solve_dense(c, system, &rhs).ok_or(Error::NotInjective {
            smallest: 0.0,
        })?;
        let mut xi = eta.0.clone();
        for (ak, v) in a.iter().zip(&frames[i]) {
            for (x, vj) in xi.iter_mut().zip(v.iter()) {
                *x += ak * vj;
            }
        }
        covectors.push(Covector(xi));
        coefficients.push(a);
        images_all.push(images);
    }

    let series: Vec<Vec<f64>> = covectors.iter().map(|c| c.0.clone()).collect();
    let d_xi = sample_derivative(&curve.times, &series);
    let mut orthogonality_residuals = Vec::with_capacity(count);
    let mut lift_residuals = Vec::with_capacity(count);
    for i in 0..count {
        let jet = field.jet(&curve.points[i], false);
        let xi = &covectors[i];
        let (_, flow) = rhs_from_jet(&jet, xi);
        // ω = ξ̇ - (Hamiltonian ξ̇)
        let omega: Vec<f64> = d_xi[i].iter().zip(&flow).map(|(a, b)| a - b).collect();
        let worst = images_all[i]
            .iter()
            .map(|im| dot(im, &omega).abs())
            .fold(0.0, f64::max);
        orthogonality_residuals.push(worst);
        let g_xi = jet.apply(xi);
        lift_residuals.push(norm(
            &g_xi
                .iter()
                .zip(curve.velocities[i].iter())
                .map(|(a, b)| a - b)
                .collect::<Vec<_>>(),
        ));
    }
    Ok(CanonicalLift {
        times: curve.times.clone(),
        covectors,
        coefficients,
        orthogonality_residuals,
        lift_residuals,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TimeCone {
    Future,
    Past,
}

fn require_lorentzian(field: &CometricField) -> Result<()> {
    if field.index() != 1 {
        return Err(Error::InvalidArgument(format!(
            "time orientation needs index 1, field has index {}",
            field.index()
        )));
    }
    Ok(())
}

/// Future/past label of a nonspacelike horizontal `w` with respect to the
/// timelike orientation field value `orientation` at `x`. `None` for
/// spacelike or zero `w`.
pub fn time_cone(
    field: &CometricField,
    x: &Point,
    orientation: &TangentVector,
    w: &TangentVector,
) -> Result<Option<TimeCone>> {
    require_lorentzian(field)?;
    let tt = field.metric_from_cometric(x, orientation, orientation)?;
    if tt >= -CAUSAL_TOL {
        return Err(Error::InvalidArgument("orientation vector is not timelike".into()));
    }
    let ww = field.metric_from_cometric(x, w, w)?;
    if ww > CAUSAL_TOL || norm(w) == 0.0 {
        return Ok(None);
    }
    let tw = field.metric_from_cometric(x, orientation, w)?;
    Ok(Some(if tw < 0.0 { TimeCone::Future } else { TimeCone::Past }))
}

/// `cosh⁻¹(|Q(v,w)| / (|v| |w|))` for timelike `v`, `w` in a Lorentz fiber.
pub fn hyperbolic_angle(
    field: &CometricField,
    x: &Point,
    v: &TangentVector,
    w: &TangentVector,
) -> Result<f64> {
    require_lorentzian(field)?;
    let vv = field.metric_from_cometric(x, v, v)?;
    let ww = field.metric_from_cometric(x, w, w)?;
    if vv >= -CAUSAL_TOL || ww >= -CAUSAL_TOL {
        return Err(Error::InvalidArgument("hyperbolic angle needs timelike vectors".into()));
    }
    let vw = field.metric_from_cometric(x, v, w)?;
    Ok((vw.abs() / (vv * ww).sqrt()).max(1.0).acosh())
}

/// Writes `t, x1..xn, xi1..xin, H` rows with 17 significant digits.
pub fn write_trajectory_csv<W: Write>(
    field: &CometricField,
    traj: &Trajectory,
    writer: W,
) -> Result<()> {
    let n = field.dim();
    let mut out = csv::Writer::from_writer(writer);
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    header.extend((1..=n).map(|i| format!("xi{i}")));
    header.push("H".into());
    out.write_record(&header)?;
    for (t, s) in traj.times.iter().zip(&traj.states) {
        let mut row = vec![fmt17(*t)];
        row.extend(s.x.iter().map(|v| fmt17(*v)));
        row.extend(s.xi.iter().map(|v| fmt17(*v)));
        row.push(fmt17(hamiltonian(field, s)?));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// 17 significant digits in scientific notation.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}
