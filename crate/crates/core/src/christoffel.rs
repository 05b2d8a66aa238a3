//! The raised-index Christoffel tensor of a degenerate cometric,
//!
//! `Γ^{kpq} = ½(g^{kj}∂_j g^{pq} - g^{pj}∂_j g^{kq} - g^{qj}∂_j g^{kp})`,
//!
//! together with the bracket form it encodes and the 2-step generator test.
//!
//! For an annihilator `v` at `x` the contraction `Γ(ξ, v)` is horizontal and
//! only depends on `ξ` modulo annihilators. The trilinear bracket form
//! satisfies `<[gξ, gη], v> = -2 <Γ(ξ, v), η> = 2 <Γ(η, v), ξ>`.

use nalgebra::DMatrix;

use crate::cometric::{dot, norm, CometricField, Covector, FieldJet, Point, TangentVector};
use crate::error::{Error, Result};
use crate::expr::Expression;

/// Tolerance for the annihilator check on contraction inputs.
pub const ANNIHILATOR_TOL: f64 = 1e-8;
/// Relative singular-value cutoff of the generator test.
pub const INJECTIVITY_CUTOFF: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct ChristoffelTensor {
    point: Point,
    n: usize,
    g: Vec<f64>,
    data: Vec<f64>,
}

impl ChristoffelTensor {
    pub(crate) fn from_jet(point: Point, jet: &FieldJet) -> Self {
        let n = jet.dim();
        let mut data = vec![0.0; n * n * n];
        for k in 0..n {
            for p in 0..n {
                for q in p..n {
                    let mut s = 0.0;
                    for j in 0..n {
                        s += jet.g(k, j) * jet.dg(p, q, j)
                            - jet.g(p, j) * jet.dg(k, q, j)
                            - jet.g(q, j) * jet.dg(k, p, j);
                    }
                    data[(k * n + p) * n + q] = 0.5 * s;
                    data[(k * n + q) * n + p] = 0.5 * s;
                }
            }
        }
        let g = (0..n * n).map(|i| jet.g(i / n, i % n)).collect();
        ChristoffelTensor { point, n, g, data }
    }

    pub fn point(&self) -> &Point {
        &self.point
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// `Γ^{kpq}`, 0-based.
    #[inline]
    pub fn get(&self, k: usize, p: usize, q: usize) -> f64 {
        self.data[(k * self.n + p) * self.n + q]
    }

    /// Flat `(k, p, q)` row-major storage.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Nested `[k][p][q]` array, the JSON dump layout.
    pub fn to_nested(&self) -> Vec<Vec<Vec<f64>>> {
        let n = self.n;
        (0..n)
            .map(|k| (0..n).map(|p| (0..n).map(|q| self.get(k, p, q)).collect()).collect())
            .collect()
    }

    /// `Γ^{kpq} ξ_p v_q` without the annihilator check.
    pub fn contract_unchecked(&self, xi: &[f64], v: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n];
        for (k, o) in out.iter_mut().enumerate() {
            let mut s = 0.0;
            for p in 0..n {
                if xi[p] == 0.0 {
                    continue;
                }
                let row = &self.data[(k * n + p) * n..(k * n + p + 1) * n];
                s += xi[p] * dot(row, v);
            }
            *o = s;
        }
        out
    }

    fn check_annihilator(&self, v: &[f64]) -> Result<()> {
        let n = self.n;
        let gv: Vec<f64> = (0..n)
            .map(|k| (0..n).map(|j| self.g[k * n + j] * v[j]).sum())
            .collect();
        let residual = norm(&gv);
        if residual > ANNIHILATOR_TOL * norm(v) {
            return Err(Error::NotAnnihilator { residual });
        }
        Ok(())
    }

    /// `Γ(ξ, v)` for an annihilator `v` at the base point.
    pub fn gamma_contract(&self, xi: &Covector, v: &Covector) -> Result<TangentVector> {
        for len in [xi.len(), v.len()] {
            if len != self.n {
                return Err(Error::DimensionMismatch {
                    expected: self.n,
                    got: len,
                });
            }
        }
        self.check_annihilator(v)?;
        Ok(TangentVector(self.contract_unchecked(xi, v)))
    }
}

pub fn christoffel_at(field: &CometricField, x: &Point) -> Result<ChristoffelTensor> {
    field.check_len(x.len())?;
    Ok(ChristoffelTensor::from_jet(x.clone(), &field.jet(x, false)))
}

/// `Γ(ξ, v)` at `x`; `v` must be an annihilator there.
pub fn gamma_contract(
    field: &CometricField,
    x: &Point,
    xi: &Covector,
    v: &Covector,
) -> Result<TangentVector> {
    christoffel_at(field, x)?.gamma_contract(xi, v)
}

/// `<[gξ, gη], v> = (g^{jp}∂_j g^{rq} - g^{jq}∂_j g^{rp}) ξ_p η_q v_r`, with
/// `ξ`, `η` extended as constant-coefficient covector fields.
pub fn bracket_form(
    field: &CometricField,
    x: &Point,
    xi: &Covector,
    eta: &Covector,
    v: &Covector,
) -> Result<f64> {
    field.check_len(x.len())?;
    for len in [xi.len(), eta.len(), v.len()] {
        field.check_len(len)?;
    }
    let jet = field.jet(x, false);
    let g_v = jet.apply(v);
    let residual = norm(&g_v);
    if residual > ANNIHILATOR_TOL * norm(v) {
        return Err(Error::NotAnnihilator { residual });
    }
    let n = field.dim();
    let g_xi = jet.apply(xi);
    let g_eta = jet.apply(eta);
    // (gξ)^j ∂_j (gη)^r - (gη)^j ∂_j (gξ)^r, with ∂_j acting on g only
    let mut total = 0.0;
    for r in 0..n {
        if v[r] == 0.0 {
            continue;
        }
        let mut s = 0.0;
        for j in 0..n {
            let mut d_eta = 0.0;
            let mut d_xi = 0.0;
            for q in 0..n {
                let d = jet.dg(r, q, j);
                d_eta += d * eta[q];
                d_xi += d * xi[q];
            }
            s += g_xi[j] * d_eta - g_eta[j] * d_xi;
        }
        total += s * v[r];
    }
    Ok(total)
}

/// Finite-difference Lie bracket `[gξ, gη](x)` of the constant-coefficient
/// covector fields `ξ`, `η` pushed through the cometric.
pub fn lie_bracket_fd(
    field: &CometricField,
    x: &Point,
    xi: &Covector,
    eta: &Covector,
    step: f64,
) -> Result<TangentVector> {
    let n = field.dim();
    let a = field.apply_cometric(x, xi)?;
    let b = field.apply_cometric(x, eta)?;
    let directional = |w: &Covector, dir: &TangentVector| -> Result<Vec<f64>> {
        let plus = Point(x.iter().zip(dir.iter()).map(|(p, d)| p + step * d).collect());
        let minus = Point(x.iter().zip(dir.iter()).map(|(p, d)| p - step * d).collect());
        let fp = field.apply_cometric(&plus, w)?;
        let fm = field.apply_cometric(&minus, w)?;
        Ok((0..n).map(|k| (fp[k] - fm[k]) / (2.0 * step)).collect())
    };
    let db = directional(eta, &a)?;
    let da = directional(xi, &b)?;
    Ok(TangentVector((0..n).map(|k| db[k] - da[k]).collect()))
}

/// `(∇_sym Y)^{kq} = g^{kj}∂_j Y^q + g^{qj}∂_j Y^k - Y^j ∂_j g^{kq}` at `x`.
pub fn sym_covariant_derivative(
    field: &CometricField,
    x: &Point,
    y: &[Expression],
) -> Result<DMatrix<f64>> {
    field.check_len(x.len())?;
    field.check_len(y.len())?;
    let n = field.dim();
    if let Some(bad) = y.iter().find(|e| e.max_coordinate() > n) {
        return Err(Error::InvalidArgument(format!(
            "vector field component references x{} beyond dimension {n}",
            bad.max_coordinate()
        )));
    }
    let jet = field.jet(x, false);
    let values: Vec<f64> = y.iter().map(|e| e.evaluate(x)).collect();
    // dy[q][j] = ∂_j Y^q
    let dy: Vec<Vec<f64>> = y
        .iter()
        .map(|e| (1..=n).map(|j| e.differentiate(j).evaluate(x)).collect())
        .collect();
    let mut out = DMatrix::zeros(n, n);
    for k in 0..n {
        for q in 0..n {
            let mut s = 0.0;
            for j in 0..n {
                s += jet.g(k, j) * dy[q][j] + jet.g(q, j) * dy[k][j] - values[j] * jet.dg(k, q, j);
            }
            out[(k, q)] = s;
        }
    }
    Ok(out)
}

/// Components of `g ξ` as expressions, for a constant covector `ξ`.
pub fn pushed_covector_field(field: &CometricField, xi: &Covector) -> Result<Vec<Expression>> {
    field.check_len(xi.len())?;
    let n = field.dim();
    Ok((0..n)
        .map(|k| {
            (0..n).fold(Expression::zero(), |acc, j| {
                if xi[j] == 0.0 || field.entry(k, j).is_zero() {
                    acc
                } else {
                    acc + Expression::constant(xi[j]) * field.entry(k, j).clone()
                }
            })
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeneratorTest {
    pub generates: bool,
    pub smallest_singular_value: f64,
    pub largest_singular_value: f64,
}

/// Whether `Γ(ξ, ·): S⊥_x → S_x` is injective, i.e. whether `ξ` witnesses
/// 2-step bracket generation at `x`.
pub fn is_two_step_generator(
    field: &CometricField,
    x: &Point,
    xi: &Covector,
) -> Result<GeneratorTest> {
    field.check_len(xi.len())?;
    let split = field.split(x)?;
    let gamma = christoffel_at(field, x)?;
    let g_xi = field.apply_cometric(x, xi)?;
    if norm(&g_xi) <= crate::cometric::CAUSAL_TOL * norm(xi) || norm(xi) == 0.0 {
        return Err(Error::AnnihilatorInput);
    }
    let m = split.horizontal.len();
    let c = split.kernel.len();
    if c == 0 {
        return Ok(GeneratorTest {
            generates: true,
            smallest_singular_value: f64::INFINITY,
            largest_singular_value: f64::INFINITY,
        });
    }
    let mut map = DMatrix::zeros(m, c);
    for (l, v) in split.kernel.iter().enumerate() {
        let image = gamma.contract_unchecked(xi, v);
        for (i, (_, h)) in split.horizontal.iter().enumerate() {
            map[(i, l)] = dot(&image, h);
        }
    }
    let sv = map.singular_values();
    let largest = sv.iter().fold(0.0f64, |a, &s| a.max(s));
    let smallest = sv.iter().fold(f64::INFINITY, |a, &s| a.min(s));
    Ok(GeneratorTest {
        generates: largest > 0.0 && smallest > INJECTIVITY_CUTOFF * largest,
        smallest_singular_value: smallest,
        largest_singular_value: largest,
    })
}

/// Annihilator frame at `x` that varies smoothly with `x`: each reference
/// covector is projected onto `ker g(x)` and the results are
/// orthonormalized in order.
pub fn annihilator_section(
    field: &CometricField,
    x: &Point,
    reference: &[Covector],
) -> Result<Vec<Covector>> {
    let kernel = field.annihilator_basis(x)?;
    if reference.len() != kernel.len() {
        return Err(Error::InvalidArgument(format!(
            "reference frame has {} covectors, annihilator has dimension {}",
            reference.len(),
            kernel.len()
        )));
    }
    let mut out: Vec<Covector> = Vec::with_capacity(kernel.len());
    for r in reference {
        let mut v = vec![0.0; r.len()];
        for k in &kernel {
            let c = dot(k, r);
            for (vi, ki) in v.iter_mut().zip(k.iter()) {
                *vi += c * ki;
            }
        }
        for prev in &out {
            let c = dot(prev, &v);
            for (vi, pi) in v.iter_mut().zip(prev.iter()) {
                *vi -= c * pi;
            }
        }
        let len = norm(&v);
        if len < 1e-8 {
            return Err(Error::Consistency(
                "reference frame degenerates on the annihilator".into(),
            ));
        }
        out.push(Covector(v.iter().map(|c| c / len).collect()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{heisenberg_lorentz, quaternion_group};
    use crate::fixtures::constant_field;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn omega(x: &Point) -> Covector {
        Covector(vec![-0.5 * x[1], 0.5 * x[0], 1.0])
    }

    #[test]
    fn constant_field_has_zero_christoffel() {
        let f = constant_field();
        let x = Point(vec![0.3, 1.0, -2.0]);
        let gamma = christoffel_at(&f, &x).unwrap();
        assert!(gamma.as_slice().iter().all(|&v| v == 0.0));
        let v = Covector::basis(3, 2);
        let r = gamma.gamma_contract(&Covector::basis(3, 0), &v).unwrap();
        assert_eq!(r.norm(), 0.0);
        assert_eq!(
            bracket_form(&f, &x, &Covector::basis(3, 0), &Covector::basis(3, 1), &v).unwrap(),
            0.0
        );
    }

    #[test]
    fn heisenberg_values_at_origin() {
        let f = heisenberg_lorentz();
        let o = Point::zeros(3);
        let gamma = christoffel_at(f, &o).unwrap();
        assert!((gamma.get(0, 1, 2) - 0.5).abs() < 1e-15);
        let r = gamma.gamma_contract(&Covector::basis(3, 0), &omega(&o)).unwrap();
        for (a, b) in r.iter().zip([0.0, -0.5, 0.0]) {
            assert!((a - b).abs() < 1e-15);
        }
        let shifted = Covector(vec![1.0, 0.0, 3.0]);
        let r2 = gamma.gamma_contract(&shifted, &omega(&o)).unwrap();
        for (a, b) in r.iter().zip(r2.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(matches!(
            gamma.gamma_contract(&Covector::basis(3, 0), &Covector::basis(3, 0)),
            Err(Error::NotAnnihilator { .. })
        ));
    }

    #[test]
    fn heisenberg_bracket_form_sign() {
        let f = heisenberg_lorentz();
        let o = Point::zeros(3);
        let (dx, dy) = (Covector::basis(3, 0), Covector::basis(3, 1));
        // [g dx, g dy] = [-X, Y] = ∂z for these frames
        let b = bracket_form(f, &o, &dx, &dy, &omega(&o)).unwrap();
        assert!((b - 1.0).abs() < 1e-15);
        let swapped = bracket_form(f, &o, &dy, &dx, &omega(&o)).unwrap();
        assert!((swapped + 1.0).abs() < 1e-15);
        let fd = lie_bracket_fd(f, &o, &dx, &dy, 1e-5).unwrap();
        assert!((dot(&fd, &omega(&o)) - b).abs() < 1e-8);
    }

    #[test]
    fn bracket_identity_and_horizontality() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for f in [heisenberg_lorentz(), quaternion_group()] {
            let n = f.dim();
            for _ in 0..50 {
                let mut draw = |s: f64| -> Vec<f64> { (0..n).map(|_| rng.random_range(-s..s)).collect() };
                let x = Point(draw(1.0));
                let xi = Covector(draw(1.0));
                let eta = Covector(draw(1.0));
                let kernel = f.annihilator_basis(&x).unwrap();
                let coeffs = draw(1.0);
                let mut v = vec![0.0; n];
                for (c, k) in coeffs.iter().zip(&kernel) {
                    for (vi, ki) in v.iter_mut().zip(k.iter()) {
                        *vi += c * ki;
                    }
                }
                let v = Covector(v);
                let gamma = christoffel_at(f, &x).unwrap();
                let gv = gamma.gamma_contract(&xi, &v).unwrap();
                let b = bracket_form(f, &x, &xi, &eta, &v).unwrap();
                assert!((b + 2.0 * dot(&gv, &eta)).abs() < 1e-9);
                let fd = lie_bracket_fd(f, &x, &xi, &eta, 1e-5).unwrap();
                assert!((dot(&fd, &v) - b).abs() < 1e-8);
                for w in &kernel {
                    assert!(dot(&gv, w).abs() < 1e-10);
                }
                for p in 0..n {
                    for q in 0..n {
                        for k in 0..n {
                            assert_eq!(gamma.get(k, p, q), gamma.get(k, q, p));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn sym_covariant_derivative_examples() {
        let f = constant_field();
        let y = vec![Expression::constant(1.0), Expression::zero(), Expression::constant(2.0)];
        let d = sym_covariant_derivative(&f, &Point(vec![1.0, 2.0, 3.0]), &y).unwrap();
        assert!(d.iter().all(|&v| v == 0.0));

        let h = heisenberg_lorentz();
        let o = Point::zeros(3);
        let y = pushed_covector_field(h, &Covector::basis(3, 0)).unwrap();
        let d = sym_covariant_derivative(h, &o, &y).unwrap();
        let w = omega(&o);
        let contracted: Vec<f64> = (0..3).map(|k| (0..3).map(|q| d[(k, q)] * w[q]).sum()).collect();
        for (a, b) in contracted.iter().zip([0.0, -1.0, 0.0]) {
            assert!((a - b).abs() < 1e-14);
        }

        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let q = quaternion_group();
        for _ in 0..20 {
            let x = Point((0..7).map(|_| rng.random_range(-1.0..1.0)).collect());
            let xi = Covector((0..7).map(|_| rng.random_range(-1.0..1.0)).collect());
            let y = pushed_covector_field(q, &xi).unwrap();
            let d = sym_covariant_derivative(q, &x, &y).unwrap();
            assert!((&d - d.transpose()).abs().max() < 1e-12);
            let gamma = christoffel_at(q, &x).unwrap();
            for v in q.annihilator_basis(&x).unwrap() {
                let lhs: Vec<f64> = (0..7).map(|k| (0..7).map(|j| d[(k, j)] * v[j]).sum()).collect();
                let rhs = gamma.contract_unchecked(&xi, &v);
                for (a, b) in lhs.iter().zip(rhs) {
                    assert!((a - 2.0 * b).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn generator_examples() {
        let h = heisenberg_lorentz();
        let t = is_two_step_generator(h, &Point::zeros(3), &Covector::basis(3, 0)).unwrap();
        assert!(t.generates);
        let q = quaternion_group();
        let t = is_two_step_generator(q, &Point::zeros(7), &Covector::basis(7, 0)).unwrap();
        assert!(t.generates);
        let f = constant_field();
        let t = is_two_step_generator(&f, &Point::zeros(3), &Covector::basis(3, 0)).unwrap();
        assert!(!t.generates);
        assert!(matches!(
            is_two_step_generator(h, &Point::zeros(3), &Covector::basis(3, 2)),
            Err(Error::AnnihilatorInput)
        ));
    }

    #[test]
    fn annihilator_sections_satisfy_derivative_lemma() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for f in [heisenberg_lorentz(), quaternion_group()] {
            let n = f.dim();
            let x = Point((0..n).map(|_| rng.random_range(-1.0..1.0)).collect());
            let reference = f.annihilator_basis(&x).unwrap();
            let h = 1e-5;
            let jet = f.jet(&x, false);
            for p in 0..n {
                let mut xp = x.clone();
                xp[p] += h;
                let mut xm = x.clone();
                xm[p] -= h;
                let sp = annihilator_section(f, &xp, &reference).unwrap();
                let sm = annihilator_section(f, &xm, &reference).unwrap();
                for (l, v) in reference.iter().enumerate() {
                    let dv: Vec<f64> = (0..n).map(|k| (sp[l][k] - sm[l][k]) / (2.0 * h)).collect();
                    for j in 0..n {
                        let lhs: f64 = (0..n).map(|k| jet.g(j, k) * dv[k]).sum();
                        let rhs: f64 = -(0..n).map(|k| jet.dg(j, k, p) * v[k]).sum::<f64>();
                        assert!((lhs - rhs).abs() < 1e-7);
                    }
                }
            }
        }
    }
}
