//! Randomized property suites, runnable from the CLI.
//!
//! Every property draws from its own `ChaCha8Rng`, seeded from the run seed
//! and the property's name, so a property reports the same residual whether
//! it runs alone or inside `all`. Properties run in parallel; results keep
//! declaration order.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, Matrix4};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::christoffel::{
    annihilator_section, bracket_form, christoffel_at, is_two_step_generator, pushed_covector_field, ChristoffelTensor,
};
use crate::cometric::{dot, norm, CometricField, Covector, FieldJet, Point};
use crate::error::{Error, Result};
use crate::expmap::{
    calibrate_delta, exp_jacobian, exp_with, gauss_lemma_check, taylor_coefficients, taylor_exp, JacobianMethod,
    LeadingOrderJacobian, CALIBRATION_SAMPLES,
};
use crate::expr::{parse, Expression};
use crate::flow::{integrate_extremal, reconstructed_acceleration, sample_derivative, simpson};
use crate::models::{
    closed_form_extremal, group_multiply, quaternion_xnorm_closed_form, quaternion_znorm_closed_form, theta_matrix,
    ModelId, QuaternionExtremalParams,
};
use crate::ode::StepControl;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Tensor,
    Christoffel,
    Flow,
    Expmap,
    Models,
    All,
}

impl Suite {
    pub const EACH: [Suite; 5] = [Suite::Tensor, Suite::Christoffel, Suite::Flow, Suite::Expmap, Suite::Models];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Tensor => "tensor",
            Suite::Christoffel => "christoffel",
            Suite::Flow => "flow",
            Suite::Expmap => "expmap",
            Suite::Models => "models",
            Suite::All => "all",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Suite::All]
            .into_iter()
            .chain(Suite::EACH)
            .find(|suite| suite.name() == s)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown suite '{s}' (expected tensor, christoffel, flow, expmap, models or all)"
                ))
            })
    }
}

/// How a measured value is judged.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Check {
    AtMost(f64),
    AtLeast(f64),
    Between(f64, f64),
    Positive,
}

impl Check {
    fn accepts(self, v: f64) -> bool {
        match self {
            Check::AtMost(t) => v <= t,
            Check::AtLeast(t) => v >= t,
            Check::Between(lo, hi) => lo <= v && v <= hi,
            Check::Positive => v > 0.0,
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Check::AtMost(t) => write!(f, "<= {t:e}"),
            Check::AtLeast(t) => write!(f, ">= {t}"),
            Check::Between(lo, hi) => write!(f, "in [{lo}, {hi}]"),
            Check::Positive => write!(f, "> 0"),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PropertyResult {
    pub suite: Suite,
    pub target: String,
    pub property: &'static str,
    /// `NaN` when the property errored.
    pub measured: f64,
    pub check: Check,
    pub passed: bool,
    pub error: Option<String>,
}

impl fmt::Display for PropertyResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(
            f,
            "{verdict} [{}] {} :: {} = {:.16e} ({})",
            self.suite, self.target, self.property, self.measured, self.check
        )?;
        if let Some(e) = &self.error {
            write!(f, " error: {e}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Report {
    pub results: Vec<PropertyResult>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &PropertyResult> {
        self.results.iter().filter(|r| !r.passed)
    }
}

/// A field under test. Built-in models also get their model-specific
/// properties.
#[derive(Clone, Copy)]
pub struct Target<'a> {
    pub name: &'a str,
    pub field: &'a CometricField,
    pub model: Option<ModelId>,
}

impl Target<'static> {
    pub fn builtin(model: ModelId) -> Self {
        Target {
            name: model.name(),
            field: model.field(),
            model: Some(model),
        }
    }

    pub fn builtins() -> Vec<Self> {
        ModelId::ALL.into_iter().map(Target::builtin).collect()
    }
}

impl<'a> Target<'a> {
    pub fn custom(name: &'a str, field: &'a CometricField) -> Self {
        Target { name, field, model: None }
    }
}

type Runner<'a> = Box<dyn Fn(&mut ChaCha8Rng) -> Result<f64> + Send + Sync + 'a>;

struct Property<'a> {
    suite: Suite,
    target: String,
    name: &'static str,
    check: Check,
    run: Runner<'a>,
}

fn property_seed(seed: u64, suite: Suite, target: &str, name: &str) -> u64 {
    // FNV-1a
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed;
    for b in suite.name().bytes().chain(target.bytes()).chain(name.bytes()) {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Runs `suite` (or every suite) over `targets`.
pub fn run(suite: Suite, targets: &[Target<'_>], seed: u64) -> Report {
    let suites: Vec<Suite> = if suite == Suite::All { Suite::EACH.to_vec() } else { vec![suite] };
    let mut props = Vec::new();
    for s in suites {
        match s {
            Suite::Tensor => {
                dsl_properties(&mut props);
                for t in targets {
                    tensor_properties(&mut props, *t);
                }
            }
            Suite::Christoffel => targets.iter().for_each(|t| christoffel_properties(&mut props, *t)),
            Suite::Flow => targets.iter().for_each(|t| flow_properties(&mut props, *t)),
            Suite::Expmap => targets.iter().for_each(|t| expmap_properties(&mut props, *t)),
            Suite::Models => model_properties(&mut props),
            Suite::All => unreachable!(),
        }
    }
    let results = props
        .par_iter()
        .map(|p| {
            let mut rng = ChaCha8Rng::seed_from_u64(property_seed(seed, p.suite, &p.target, p.name));
            let (measured, error) = match (p.run)(&mut rng) {
                Ok(v) => (v, None),
                Err(e) => (f64::NAN, Some(e.to_string())),
            };
            PropertyResult {
                suite: p.suite,
                target: p.target.clone(),
                property: p.name,
                measured,
                check: p.check,
                passed: error.is_none() && p.check.accepts(measured),
                error,
            }
        })
        .collect();
    Report { results }
}

fn push<'a>(
    props: &mut Vec<Property<'a>>,
    suite: Suite,
    target: &str,
    name: &'static str,
    check: Check,
    run: impl Fn(&mut ChaCha8Rng) -> Result<f64> + Send + Sync + 'a,
) {
    props.push(Property {
        suite,
        target: target.to_string(),
        name,
        check,
        run: Box::new(run),
    });
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

fn random_point(rng: &mut ChaCha8Rng, n: usize) -> Point {
    Point(uniform(rng, n, 1.0))
}

fn random_covector(rng: &mut ChaCha8Rng, n: usize) -> Covector {
    Covector(uniform(rng, n, 1.0))
}

fn unit_covector(rng: &mut ChaCha8Rng, n: usize) -> Covector {
    loop {
        let v = uniform(rng, n, 1.0);
        let len = norm(&v);
        if len > 1e-3 && len <= 1.0 {
            return Covector(v.iter().map(|c| c / len).collect());
        }
    }
}

fn random_annihilator(field: &CometricField, rng: &mut ChaCha8Rng, x: &Point) -> Result<Covector> {
    let basis = field.annihilator_basis(x)?;
    let mut v = vec![0.0; field.dim()];
    for b in basis {
        let c: f64 = rng.random_range(-1.0..1.0);
        for (vi, bi) in v.iter_mut().zip(b.iter()) {
            *vi += c * bi;
        }
    }
    Ok(Covector(v))
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Random polynomial expression tree of the given depth in `dim`
/// coordinates.
pub fn random_expression<R: Rng>(rng: &mut R, dim: usize, depth: usize) -> Expression {
    if depth == 0 || rng.random_bool(0.25) {
        return if rng.random_bool(0.4) {
            Expression::constant((rng.random_range(-3.0..3.0f64) * 100.0).round() / 100.0)
        } else {
            Expression::coordinate(rng.random_range(1..=dim))
        };
    }
    let a = random_expression(rng, dim, depth - 1);
    match rng.random_range(0..4) {
        0 => a + random_expression(rng, dim, depth - 1),
        1 => a - random_expression(rng, dim, depth - 1),
        2 => a * random_expression(rng, dim, depth - 1),
        _ => -a,
    }
}

const DSL_DIM: usize = 4;

fn dsl_properties(props: &mut Vec<Property<'_>>) {
    let s = Suite::Tensor;
    push(props, s, "expressions", "derivative vs central difference (rel)", Check::AtMost(1e-6), |rng| {
        let mut worst = 0.0f64;
        for _ in 0..1000 {
            let e = random_expression(rng, DSL_DIM, 4);
            let x = uniform(rng, DSL_DIM, 1.0);
            let p = rng.random_range(1..=DSL_DIM);
            let d = e.differentiate(p).evaluate(&x);
            let h = 1e-5;
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[p - 1] += h;
            xm[p - 1] -= h;
            let fd = (e.evaluate(&xp) - e.evaluate(&xm)) / (2.0 * h);
            let scale = 1f64.max(d.abs()).max(e.evaluate(&x).abs());
            worst = worst.max((d - fd).abs() / scale);
        }
        Ok(worst)
    });
    push(props, s, "expressions", "mixed partials commute (rel)", Check::AtMost(1e-12), |rng| {
        let mut worst = 0.0f64;
        for _ in 0..500 {
            let e = random_expression(rng, DSL_DIM, 4);
            let x = uniform(rng, DSL_DIM, 1.0);
            let (p, q) = (rng.random_range(1..=DSL_DIM), rng.random_range(1..=DSL_DIM));
            let a = e.differentiate(p).differentiate(q).evaluate(&x);
            let b = e.differentiate(q).differentiate(p).evaluate(&x);
            worst = worst.max((a - b).abs() / a.abs().max(1.0));
        }
        Ok(worst)
    });
    push(props, s, "expressions", "parse(print(e)) round trip (rel)", Check::AtMost(1e-12), |rng| {
        let mut worst = 0.0f64;
        for _ in 0..100 {
            let e = random_expression(rng, DSL_DIM, 4);
            let back = parse(&e.to_string(), DSL_DIM)?;
            for _ in 0..100 {
                let x = uniform(rng, DSL_DIM, 2.0);
                let (a, b) = (e.evaluate(&x), back.evaluate(&x));
                worst = worst.max((a - b).abs() / a.abs().max(1.0));
            }
        }
        Ok(worst)
    });
}

fn tensor_properties<'a>(props: &mut Vec<Property<'a>>, t: Target<'a>) {
    let (s, f, n) = (Suite::Tensor, t.field, t.field.dim());
    push(props, s, t.name, "duality Q(W, gξ) = <W, ξ>", Check::AtMost(1e-9), move |rng| {
        let mut worst = 0.0f64;
        for _ in 0..100 {
            let x = random_point(rng, n);
            let xi = random_covector(rng, n);
            let w = f.apply_cometric(&x, &random_covector(rng, n))?;
            let gxi = f.apply_cometric(&x, &xi)?;
            let q = f.metric_from_cometric(&x, &w, &gxi)?;
            worst = worst.max((q - dot(&w, &xi)).abs());
        }
        Ok(worst)
    });
    push(props, s, t.name, "annihilators vanish on horizontal vectors", Check::AtMost(1e-10), move |rng| {
        let mut worst = 0.0f64;
        for _ in 0..100 {
            let x = random_point(rng, n);
            let horizontal = f.horizontal_basis(&x)?;
            for v in f.annihilator_basis(&x)? {
                for w in &horizontal {
                    worst = worst.max(dot(&v, w).abs());
                }
            }
        }
        Ok(worst)
    });
    push(props, s, t.name, "signature mismatches at random points", Check::AtMost(0.0), move |rng| {
        let mut bad = 0usize;
        for _ in 0..100 {
            let sig = f.signature(&random_point(rng, n))?;
            let expected = (f.index(), f.rank() - f.index(), f.corank());
            if (sig.negative, sig.positive, sig.zero) != expected {
                bad += 1;
            }
        }
        Ok(bad as f64)
    });
    push(props, s, t.name, "apply_cometric linearity (rel)", Check::AtMost(1e-12), move |rng| {
        let mut worst = 0.0f64;
        for _ in 0..100 {
            let x = random_point(rng, n);
            let (xi, eta) = (random_covector(rng, n), random_covector(rng, n));
            let (a, b): (f64, f64) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let combo = Covector(xi.iter().zip(eta.iter()).map(|(p, q)| a * p + b * q).collect());
            let lhs = f.apply_cometric(&x, &combo)?;
            let (gx, ge) = (f.apply_cometric(&x, &xi)?, f.apply_cometric(&x, &eta)?);
            let rhs: Vec<f64> = gx.iter().zip(ge.iter()).map(|(p, q)| a * p + b * q).collect();
            worst = worst.max(max_abs_diff(&lhs, &rhs) / norm(&rhs).max(1.0));
        }
        Ok(worst)
    });
}

/// `Γ` at `y = x + B(x, x)` computed from the transformed cometric
/// `J g Jᵀ`, together with `J = ∂y/∂x`.
fn transformed_christoffel(field: &CometricField, x: &Point, b: &[f64]) -> (ChristoffelTensor, DMatrix<f64>) {
    let n = field.dim();
    let bi = |k: usize, i: usize, j: usize| b[(k * n + i) * n + j];
    let jac = DMatrix::from_fn(n, n, |k, c| {
        f64::from(u8::from(k == c)) + 2.0 * (0..n).map(|j| bi(k, c, j) * x[j]).sum::<f64>()
    });
    let jet = field.jet(x, false);
    let g = jet.matrix();
    let gt = &jac * &g * jac.transpose();
    let j_inv = jac.clone().try_inverse().expect("coordinate change is invertible near the origin");
    // ∂g̃/∂x^c
    let dx: Vec<DMatrix<f64>> = (0..n)
        .map(|c| {
            let dj = DMatrix::from_fn(n, n, |k, i| 2.0 * bi(k, i, c));
            let dg = DMatrix::from_fn(n, n, |p, q| jet.dg(p, q, c));
            &dj * &g * jac.transpose() + &jac * dg * jac.transpose() + &jac * &g * dj.transpose()
        })
        .collect();
    let mut dgt = vec![0.0; n * n * n];
    for p in 0..n {
        for q in 0..n {
            for s in 0..n {
                dgt[(p * n + q) * n + s] = (0..n).map(|c| dx[c][(p, q)] * j_inv[(c, s)]).sum();
            }
        }
    }
    let y: Vec<f64> = (0..n)
        .map(|k| x[k] + (0..n).map(|i| (0..n).map(|j| bi(k, i, j) * x[i] * x[j]).sum::<f64>()).sum::<f64>())
        .collect();
    let jet_t = FieldJet::from_parts(n, gt.iter().copied().collect::<Vec<_>>(), dgt, Vec::new());
    // FieldJet expects row-major g; gt is symmetric so column-major order is the same.
    (ChristoffelTensor::from_jet(Point(y), &jet_t), jac)
}

fn christoffel_properties<'a>(props: &mut Vec<Property<'a>>, t: Target<'a>) {
    let (s, f, n) = (Suite::Christoffel, t.field, t.field.dim());
    push(props, s, t.name, "bracket identity <[gξ,gη],v> = -2<Γ(ξ,v),η>", Check::AtMost(1e-9), move |rng| {
        let mut worst = 0.0f64;
        for _ in 0..200 {
            let x = random_point(rng, n);
            let (xi, eta) = (random_covector(rng, n), random_covector(rng, n));
            let v = random_annihilator(f, rng, &x)?;
            let bf = bracket_form(f, &x, &xi, &eta, &v)?;
            let gamma = christoffel_at(f, &x)?.gamma_contract(&xi, &v)?;
            worst = worst.max((bf + 2.0 * dot(&gamma, &eta)).abs());
        }
        Ok(worst)
    });
    push(props, s, t.name, "bracket form vs symbolic Lie bracket", Check::AtMost(1e-8), move |rng| {
        let mut worst = 0.0f64;
        for _ in 0..200 {
            let x = random_point(rng, n);
            let (xi, eta) = (random_covector(rng, n), random_covector(rng, n));
            let v = random_annihilator(f, rng, &x)?;
            let a = pushed_covector_field(f, &xi)?;
            let b = pushed_covector_field(f, &eta)?;
            let av: Vec<f64> = a.iter().map(|e| e.evaluate(&x)).collect();
            let bv: Vec<f64> = b.iter().map(|e| e.evaluate(&x)).collect();
            let bracket: Vec<f64> = (0..n)
                .map(|k| {
                    (0..n)
                        .map(|j| av[j] * b[k].differentiate(j + 1).evaluate(&x) - bv[j] * a[k].differentiate(j + 1).evaluate(&x))
                        .sum()
                })
                .collect();
            let bf = bracket_form(f, &x, &xi, &eta, &v)?;
            worst = worst.max((bf - dot(&bracket, &v)).abs());
        }
        Ok(worst)
    });
    push(props, s, t.name, "tensoriality under quadratic coordinate changes", Check::AtMost(1e-7), move |rng| {
        let mut worst = 0.0f64;
        for _ in 0..20 {
            let mut b = uniform(rng, n * n * n, 0.1);
            for k in 0..n {
                for i in 0..n {
                    for j in 0..i {
                        b[(k * n + i) * n + j] = b[(k * n + j) * n + i];
                    }
                }
            }
            let x = Point(uniform(rng, n, 0.5));
            let xi = random_covector(rng, n);
            let v = random_annihilator(f, rng, &x)?;
            let gamma = christoffel_at(f, &x)?.contract_unchecked(&xi, &v);
            let (gamma_t, jac) = transformed_christoffel(f, &x, &b);
            let j_inv_t = jac.clone().try_inverse().expect("invertible").transpose();
            let xi_t = &j_inv_t * DVector::from_column_slice(&xi);
            let v_t = &j_inv_t * DVector::from_column_slice(&v);
            let lhs = gamma_t.contract_unchecked(xi_t.as_slice(), v_t.as_slice());
            let rhs = &jac * DVector::from_column_slice(&gamma);
            worst = worst.max(max_abs_diff(&lhs, rhs.as_slice()));
        }
        Ok(worst)
    });
    push(props, s, t.name, "Γ(ξ,v) is annihilated by S⊥", Check::AtMost(1e-10), move |rng| {
        let mut worst = 0.0f64;
        for _ in 0..200 {
            let x = random_point(rng, n);
            let xi = random_covector(rng, n);
            let v = random_annihilator(f, rng, &x)?;
            let gamma = christoffel_at(f, &x)?.gamma_contract(&xi, &v)?;
            for w in f.annihilator_basis(&x)? {
                worst = worst.max(dot(&gamma, &w).abs());
            }
        }
        Ok(worst)
    });
    push(props, s, t.name, "annihilator sections: g ∂v = -(∂g) v", Check::AtMost(1e-7), move |rng| {
        let mut worst = 0.0f64;
        let h = 1e-5;
        for _ in 0..20 {
            let x = random_point(rng, n);
            let reference = f.annihilator_basis(&x)?;
            let section = annihilator_section(f, &x, &reference)?;
            let jet = f.jet(&x, false);
            for p in 0..n {
                let (mut xp, mut xm) = (x.clone(), x.clone());
                xp[p] += h;
                xm[p] -= h;
                let sp = annihilator_section(f, &xp, &reference)?;
                let sm = annihilator_section(f, &xm, &reference)?;
                for (l, v) in section.iter().enumerate() {
                    let dv: Vec<f64> = (0..n).map(|k| (sp[l][k] - sm[l][k]) / (2.0 * h)).collect();
                    for j in 0..n {
                        let r: f64 = (0..n).map(|k| jet.g(j, k) * dv[k] + jet.dg(j, k, p) * v[k]).sum();
                        worst = worst.max(r.abs());
                    }
                }
            }
        }
        Ok(worst)
    });
    push(props, s, t.name, "random covectors failing the generator test", Check::AtMost(0.0), move |rng| {
        let mut bad = 0usize;
        for _ in 0..100 {
            let x = random_point(rng, n);
            if !is_two_step_generator(f, &x, &random_covector(rng, n))?.generates {
                bad += 1;
            }
        }
        Ok(bad as f64)
    });
}

fn flow_properties<'a>(props: &mut Vec<Property<'a>>, t: Target<'a>) {
    let (s, f, n) = (Suite::Flow, t.field, t.field.dim());
    push(props, s, t.name, "Hamiltonian drift, step 1e-3", Check::AtMost(1e-9), move |rng| {
        let mut worst = 0.0f64;
        for _ in 0..50 {
            let traj = integrate_extremal(f, &random_point(rng, n), &random_covector(rng, n), 1.0, StepControl::default())?;
            worst = worst.max(traj.max_drift);
        }
        Ok(worst)
    });
    push(props, s, t.name, "causal class changes along extremals", Check::AtMost(0.0), move |rng| {
        let mut flips = 0usize;
        for _ in 0..50 {
            match integrate_extremal(f, &random_point(rng, n), &random_covector(rng, n), 1.0, StepControl::default()) {
                Ok(_) => {}
                Err(Error::CausalFlip { .. }) => flips += 1,
                Err(e) => return Err(e),
            }
        }
        Ok(flips as f64)
    });
    push(props, s, t.name, "distance of ẋ from S", Check::AtMost(1e-8), move |rng| {
        let mut worst = 0.0f64;
        for _ in 0..10 {
            let traj = integrate_extremal(f, &random_point(rng, n), &random_covector(rng, n), 1.0, StepControl::default())?;
            for st in traj.states.iter().step_by(50) {
                let v = f.apply_cometric(&st.x, &st.xi)?;
                let proj = f.split(&st.x)?.project_horizontal(&v);
                worst = worst.max(max_abs_diff(&v, &proj));
            }
        }
        Ok(worst)
    });
    push(props, s, t.name, "finite-difference ẍ vs Hamiltonian reconstruction", Check::AtMost(1e-6), move |rng| {
        let mut worst = 0.0f64;
        for _ in 0..5 {
            let traj = integrate_extremal(f, &random_point(rng, n), &random_covector(rng, n), 1.0, StepControl::default())?;
            let velocities: Vec<Vec<f64>> =
                traj.states.iter().map(|st| f.apply_cometric(&st.x, &st.xi).map(|v| v.0)).collect::<Result<_>>()?;
            let acc = sample_derivative(&traj.times, &velocities);
            for (st, a) in traj.states.iter().zip(&acc) {
                worst = worst.max(max_abs_diff(&reconstructed_acceleration(f, st)?, a));
            }
        }
        Ok(worst)
    });
    match t.model {
        Some(ModelId::QuaternionHType) => {
            push(props, s, t.name, "RK4 error ratio per step halving", Check::Between(12.8, 19.2), |rng| {
                let params = random_quaternion_params(rng, 0.1)?;
                convergence_ratio(&params, 0.05)
            });
        }
        Some(ModelId::HeisenbergLorentz) => {
            push(props, s, t.name, "excess length of timelike perturbations", Check::AtMost(1e-6), |rng| {
                Ok(longest_curve_sampling(100, rng.random())?.max_excess)
            });
        }
        None => {}
    }
}

/// Endpoint error against the closed form at step `h` divided by the error
/// at `h/2`.
pub fn convergence_ratio(params: &QuaternionExtremalParams, h: f64) -> Result<f64> {
    let field = ModelId::QuaternionHType.field();
    let exact = closed_form_extremal(params, 1.0)?;
    let err = |step: f64| -> Result<f64> {
        let traj = integrate_extremal(field, &Point::zeros(7), &params.initial_covector(), 1.0, StepControl::fixed(step))?;
        Ok(norm(&traj.endpoint().iter().zip(exact.iter()).map(|(a, b)| a - b).collect::<Vec<_>>()))
    };
    Ok(err(h)? / err(h / 2.0)?)
}

/// Random closed-form parameters with velocity and `θ` in `[-1, 1]` and
/// `|k| > min_k`.
pub fn random_quaternion_params<R: Rng>(rng: &mut R, min_k: f64) -> Result<QuaternionExtremalParams> {
    loop {
        let v = [0; 4].map(|_| rng.random_range(-1.0..1.0f64));
        let th = [0; 3].map(|_| rng.random_range(-1.0..1.0f64));
        if (th[1] * th[1] + th[2] * th[2]).sqrt() > min_k {
            return QuaternionExtremalParams::new(v, th);
        }
    }
}

/// Outcome of [`longest_curve_sampling`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LongestCurveSample {
    /// Natural parameter of the reference extremal.
    pub extremal_length: f64,
    /// `max(L(perturbed) - L(extremal))` over accepted draws.
    pub max_excess: f64,
    pub draws: usize,
    /// Draws discarded because they were not timelike or the endpoint
    /// constraint had no small real solution.
    pub rejected: usize,
}

const LONGEST_CURVE_XI0: [f64; 3] = [1.0, 0.3, 0.8];

/// Compares the timelike Heisenberg extremal from the origin with covector
/// `(1, 0.3, 0.8)` on `[0, 1]` against `draws` horizontal timelike curves
/// with the same endpoints.
///
/// A competitor's planar part is the extremal's plus sine modes, a hat
/// function, and a multiple `λ ψ` of the fixing mode `ψ = (sin πt, sin 2πt)`;
/// `λ` solves the quadratic that restores the enclosed-area constraint, so
/// the lifted `z` endpoint is unchanged.
pub fn longest_curve_sampling(draws: usize, seed: u64) -> Result<LongestCurveSample> {
    let field = ModelId::HeisenbergLorentz.field();
    let traj = integrate_extremal(field, &Point::zeros(3), &Covector(LONGEST_CURVE_XI0.to_vec()), 1.0, StepControl::default())?;
    let times = traj.times.clone();
    let steps = times.len() - 1;
    let mut base_pos = Vec::with_capacity(times.len());
    let mut base_vel = Vec::with_capacity(times.len());
    for st in &traj.states {
        let v = field.apply_cometric(&st.x, &st.xi)?;
        base_pos.push([st.x[0], st.x[1]]);
        base_vel.push([v[0], v[1]]);
    }
    let length = |vel: &[[f64; 2]]| -> Option<f64> {
        let speeds: Option<Vec<f64>> = vel
            .iter()
            .map(|[a, b]| {
                let q = a * a - b * b;
                (q > 1e-12).then(|| q.sqrt())
            })
            .collect();
        speeds.map(|s| simpson(&times, &s))
    };
    // ½∫ (p_y q̇_x - p_x q̇_y)
    let area = |p: &[[f64; 2]], qv: &[[f64; 2]]| -> f64 {
        let integrand: Vec<f64> = p.iter().zip(qv).map(|(p, q)| 0.5 * (p[1] * q[0] - p[0] * q[1])).collect();
        simpson(&times, &integrand)
    };
    let pi = std::f64::consts::PI;
    let psi_pos: Vec<[f64; 2]> = times.iter().map(|&t| [(pi * t).sin(), (2.0 * pi * t).sin()]).collect();
    let psi_vel: Vec<[f64; 2]> = times.iter().map(|&t| [pi * (pi * t).cos(), 2.0 * pi * (2.0 * pi * t).cos()]).collect();
    let reference_area = area(&base_pos, &base_vel);
    let extremal_length = length(&base_vel).ok_or_else(|| Error::Consistency("reference extremal is not timelike".into()))?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_excess = f64::NEG_INFINITY;
    let mut accepted = 0usize;
    let mut rejected = 0usize;
    while accepted < draws {
        if rejected > 100 * draws.max(1) {
            return Err(Error::Consistency("could not draw timelike perturbations".into()));
        }
        let amp: f64 = rng.random_range(0.005..0.08);
        let coeffs: Vec<[f64; 2]> = (0..3).map(|_| [amp * rng.random_range(-1.0..1.0), amp * rng.random_range(-1.0..1.0)]).collect();
        // hat with kinks on grid nodes
        let centre = rng.random_range(200..=800usize);
        let half = rng.random_range(50..=150usize);
        let hat_amp = amp * rng.random_range(-1.0..1.0);
        let hat_axis = rng.random_range(0..2usize);
        let dt = 1.0 / steps as f64;
        let mut pos = base_pos.clone();
        let mut vel = base_vel.clone();
        for (i, &t) in times.iter().enumerate() {
            for (j, c) in coeffs.iter().enumerate() {
                let w = (j + 1) as f64 * pi;
                for axis in 0..2 {
                    pos[i][axis] += c[axis] * (w * t).sin();
                    vel[i][axis] += c[axis] * w * (w * t).cos();
                }
            }
            let offset = i as f64 - centre as f64;
            if offset.abs() < half as f64 {
                pos[i][hat_axis] += hat_amp * (1.0 - offset.abs() / half as f64);
                // one-sided slope at the apex; Simpson sees a kink either way
                let slope = hat_amp / (half as f64 * dt);
                vel[i][hat_axis] += if offset < 0.0 { slope } else if offset > 0.0 { -slope } else { 0.0 };
            }
        }
        let a0 = area(&pos, &vel) - reference_area;
        let a1 = area(&pos, &psi_vel) + area(&psi_pos, &vel);
        let a2 = area(&psi_pos, &psi_vel);
        let disc = a1 * a1 - 4.0 * a2 * a0;
        if disc < 0.0 {
            rejected += 1;
            continue;
        }
        let roots = [(-a1 + disc.sqrt()) / (2.0 * a2), (-a1 - disc.sqrt()) / (2.0 * a2)];
        let lambda = if roots[0].abs() < roots[1].abs() { roots[0] } else { roots[1] };
        if lambda.abs() > 0.2 {
            rejected += 1;
            continue;
        }
        for i in 0..times.len() {
            for axis in 0..2 {
                pos[i][axis] += lambda * psi_pos[i][axis];
                vel[i][axis] += lambda * psi_vel[i][axis];
            }
        }
        match length(&vel) {
            Some(l) => {
                max_excess = max_excess.max(l - extremal_length);
                accepted += 1;
            }
            None => rejected += 1,
        }
    }
    Ok(LongestCurveSample {
        extremal_length,
        max_excess,
        draws,
        rejected,
    })
}

fn expmap_properties<'a>(props: &mut Vec<Property<'a>>, t: Target<'a>) {
    let (s, f, n) = (Suite::Expmap, t.field, t.field.dim());
    let degree = 2 * f.corank() as i32;
    push(props, s, t.name, "order-3 Taylor remainder shrink per halving", Check::AtLeast(14.0), move |rng| {
        let mut worst = f64::INFINITY;
        for _ in 0..3 {
            let p = Point(uniform(rng, n, 0.5));
            let u = unit_covector(rng, n);
            let coeffs = taylor_coefficients(f, &p, 3)?;
            let errs = [0.1, 0.05, 0.025]
                .iter()
                .map(|&sc| {
                    let e = exp_with(f, &p, &u.scaled(sc), StepControl::adaptive(1e-13))?;
                    let tay = taylor_exp(&coeffs, &u.scaled(sc))?;
                    Ok(norm(&e.iter().zip(tay.iter()).map(|(a, b)| a - b).collect::<Vec<_>>()))
                })
                .collect::<Result<Vec<f64>>>()?;
            worst = worst.min(errs[0] / errs[1]).min(errs[1] / errs[2]);
        }
        Ok(worst)
    });
    push(props, s, t.name, "|W(0) v| for annihilators v", Check::AtMost(1e-12), move |rng| {
        let mut worst = 0.0f64;
        for _ in 0..5 {
            let p = random_point(rng, n);
            let w = exp_jacobian(f, &p, &Covector::zeros(n), JacobianMethod::Variational, StepControl::default())?.w;
            for v in f.annihilator_basis(&p)? {
                worst = worst.max((&w * DVector::from_column_slice(&v)).norm());
            }
        }
        Ok(worst)
    });
    push(props, s, t.name, "growth of (det W - det W̃)/s^(2(n-m)+1) per halving", Check::AtMost(1.5), move |rng| {
        let p = Point::zeros(n);
        let lead = LeadingOrderJacobian::at(f, &p)?;
        let mut worst = 0.0f64;
        for _ in 0..3 {
            let u = unit_covector(rng, n);
            let r = [0.1, 0.05, 0.025]
                .iter()
                .map(|&sc| {
                    let us = u.scaled(sc);
                    let w = exp_jacobian(f, &p, &us, JacobianMethod::Variational, StepControl::adaptive(1e-13))?.w;
                    Ok((w.determinant() - lead.evaluate(&us).det) / sc.powi(degree + 1))
                })
                .collect::<Result<Vec<f64>>>()?;
            let floor = r[0].abs().max(1e-12);
            worst = worst.max(r[1].abs() / floor).max(r[2].abs() / floor);
        }
        Ok(worst)
    });
    push(props, s, t.name, "calibrated δ̂", Check::Positive, move |_| {
        Ok(calibrate_delta(f, &Point::zeros(n), CALIBRATION_SAMPLES, crate::expmap::CALIBRATION_SEED)?.delta_hat)
    });
    push(props, s, t.name, "det W̃(su)/det W̃(u) vs s^(2(n-m)) (rel)", Check::AtMost(1e-8), move |rng| {
        let mut worst = 0.0f64;
        for _ in 0..20 {
            let p = Point(uniform(rng, n, 0.5));
            let lead = LeadingOrderJacobian::at(f, &p)?;
            let u = random_covector(rng, n);
            let base = lead.evaluate(&u).det;
            if base.abs() < 1e-10 {
                continue;
            }
            for sc in [0.5, 2.0, 3.0] {
                let d = lead.evaluate(&u.scaled(sc)).det;
                worst = worst.max((d / base / sc.powi(degree) - 1.0).abs());
            }
        }
        Ok(worst)
    });
    push(props, s, t.name, "Gauss lemma residual", Check::AtMost(1e-6), move |rng| {
        let mut worst = 0.0f64;
        for _ in 0..50 {
            let p = random_point(rng, n);
            let u = random_covector(rng, n);
            let w = random_covector(rng, n);
            worst = worst.max(gauss_lemma_check(f, &p, &u, &w, StepControl::default())?.residual);
        }
        Ok(worst)
    });
    push(props, s, t.name, "|det W̃| vs ε-weighted reduced determinant (rel)", Check::AtMost(1e-10), move |rng| {
        let mut worst = 0.0f64;
        for _ in 0..50 {
            let p = Point(uniform(rng, n, 0.5));
            let j = LeadingOrderJacobian::at(f, &p)?.evaluate(&random_covector(rng, n));
            let (a, b) = (j.det.abs(), j.reduced_determinant().abs());
            worst = worst.max((a - b).abs() / a.max(1e-300));
        }
        Ok(worst)
    });
}

fn characteristic(a: &Matrix4<f64>, lambda: Complex64) -> Complex64 {
    let m = a.map(|v| Complex64::new(v, 0.0)) - Matrix4::<Complex64>::identity() * lambda;
    m.determinant()
}

fn model_properties(props: &mut Vec<Property<'_>>) {
    let s = Suite::Models;
    let q = ModelId::QuaternionHType.name();
    push(props, s, q, "eigenvalues ±a, ±ā of A(θ)", Check::AtMost(1e-9), |rng| {
        let mut worst = 0.0f64;
        for _ in 0..100 {
            let th = [0; 3].map(|_| rng.random_range(-2.0..2.0));
            let a = theta_matrix(th);
            let lam = Complex64::new((th[1] * th[1] + th[2] * th[2]).sqrt(), th[0]);
            for root in [lam, -lam, lam.conj(), -lam.conj()] {
                worst = worst.max(characteristic(&a, root).norm());
            }
        }
        Ok(worst)
    });
    push(props, s, q, "QA + AᵀQ", Check::AtMost(1e-14), |rng| {
        let qm = Matrix4::from_diagonal(&nalgebra::Vector4::new(-1.0, -1.0, 1.0, 1.0));
        let mut worst = 0.0f64;
        for _ in 0..100 {
            let a = theta_matrix([0; 3].map(|_| rng.random_range(-2.0..2.0)));
            worst = worst.max((qm * a + a.transpose() * qm).abs().max());
        }
        Ok(worst)
    });
    push(props, s, q, "θ drift along extremals", Check::AtMost(1e-10), |rng| {
        let field = ModelId::QuaternionHType.field();
        let mut worst = 0.0f64;
        for _ in 0..10 {
            let xi = random_covector(rng, 7);
            let traj = integrate_extremal(field, &random_point(rng, 7), &xi, 1.0, StepControl::default())?;
            for st in &traj.states {
                worst = worst.max(max_abs_diff(&st.xi[4..], &xi[4..]));
            }
        }
        Ok(worst)
    });
    for model in ModelId::ALL {
        push(props, s, model.name(), "left-invariance of frames", Check::AtMost(1e-7), move |rng| {
            let n = model.field().dim();
            let h = 1e-6;
            let mut worst = 0.0f64;
            for _ in 0..20 {
                let (g1, g2) = (random_point(rng, n), random_point(rng, n));
                let prod = group_multiply(model, &g1, &g2)?;
                let at_prod = model.frames(&prod);
                for (i, fr) in model.frames(&g2).iter().enumerate() {
                    let plus = Point(g2.iter().zip(fr.iter()).map(|(a, b)| a + h * b).collect());
                    let minus = Point(g2.iter().zip(fr.iter()).map(|(a, b)| a - h * b).collect());
                    let (lp, lm) = (group_multiply(model, &g1, &plus)?, group_multiply(model, &g1, &minus)?);
                    let pushed: Vec<f64> = (0..n).map(|k| (lp[k] - lm[k]) / (2.0 * h)).collect();
                    worst = worst.max(max_abs_diff(&pushed, &at_prod[i]));
                }
            }
            Ok(worst)
        });
    }
    push(props, s, q, "c-constant identities", Check::AtMost(1e-10), |rng| {
        let mut worst = 0.0f64;
        for _ in 0..100 {
            let p = random_quaternion_params(rng, 0.1)?;
            let [c1, c2, c3, c4] = p.c;
            worst = worst.max((c1 * c2 - (c3 * c4).conj()).norm());
            for c in [c1 * c3, c2 * c4] {
                worst = worst.max(c.im.abs()).max(c.re.max(0.0));
            }
            let (a2, k2) = (p.a.norm_sqr(), p.k_abs * p.k_abs);
            let all = (p.w2 * p.w2 - p.w1 * p.w1).norm_sqr() / (256.0 * a2 * a2 * k2 * k2);
            worst = worst.max((c1 * c2 * c3 * c4 - all).norm() / all.max(1.0));
        }
        Ok(worst)
    });
    push(props, s, q, "closed form vs integrator, step 1e-3", Check::AtMost(1e-6), |rng| {
        let field = ModelId::QuaternionHType.field();
        let mut worst = 0.0f64;
        for _ in 0..10 {
            let p = random_quaternion_params(rng, 0.1)?;
            let traj = integrate_extremal(field, &Point::zeros(7), &p.initial_covector(), 1.0, StepControl::default())?;
            for (t, st) in traj.times.iter().zip(&traj.states).step_by(10) {
                worst = worst.max(norm(
                    &closed_form_extremal(&p, *t)?.iter().zip(st.x.iter()).map(|(a, b)| a - b).collect::<Vec<_>>(),
                ));
            }
        }
        Ok(worst)
    });
    push(props, s, q, "z-norm closed form vs coordinates (rel)", Check::AtMost(1e-8), |rng| {
        let mut worst = 0.0f64;
        for _ in 0..50 {
            let p = random_quaternion_params(rng, 0.1)?;
            for t in [0.25, 0.5, 1.0] {
                let x = closed_form_extremal(&p, t)?;
                let direct = x[4] * x[4] + x[5] * x[5] + x[6] * x[6];
                let closed = quaternion_znorm_closed_form(&p, t)?;
                worst = worst.max((closed - direct).abs() / direct.abs().max(1e-12));
            }
        }
        Ok(worst)
    });
    push(props, s, q, "x-norm closed form vs coordinates", Check::AtMost(1e-8), |rng| {
        let mut worst = 0.0f64;
        for _ in 0..50 {
            let p = random_quaternion_params(rng, 0.1)?;
            for t in [0.25, 0.5, 1.0] {
                let x = closed_form_extremal(&p, t)?;
                let direct = -x[0] * x[0] - x[1] * x[1] + x[2] * x[2] + x[3] * x[3];
                worst = worst.max((quaternion_xnorm_closed_form(&p, t) - direct).abs() / direct.abs().max(1.0));
            }
        }
        Ok(worst)
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::EACH.into_iter().chain([Suite::All]) {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert!("bogus".parse::<Suite>().is_err());
    }

    #[test]
    fn property_seeds_do_not_depend_on_suite_selection() {
        let a = run(Suite::Models, &Target::builtins(), 42);
        let b = run(Suite::Models, &Target::builtins(), 42);
        assert_eq!(a.results.len(), b.results.len());
        for (x, y) in a.results.iter().zip(&b.results) {
            assert_eq!(x.measured.to_bits(), y.measured.to_bits());
        }
    }

    #[test]
    fn longest_curve_sampling_finds_no_longer_curve() {
        let s = longest_curve_sampling(20, 7).unwrap();
        assert!(s.extremal_length > 0.0);
        assert!(s.max_excess <= 1e-6, "{s:?}");
    }
}
