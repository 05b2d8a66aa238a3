//! Cometric fields and the pointwise linear algebra on them.
//!
//! A sub-semi-Riemannian structure is encoded by a symmetric, degenerate
//! cometric `g^{jk}(x)`. Its image at `x` is the horizontal space `S_x`; its
//! kernel is the annihilator `S⊥_x`. The rank `m` and index `ν` are declared
//! up front and checked at probe points on construction.

use std::fmt;
use std::ops::{Deref, DerefMut};
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{parse, Expression, Polynomial};

/// Relative eigenvalue cutoff below which a direction counts as degenerate.
pub const RANK_CUTOFF: f64 = 1e-10;
/// Default tolerance on `<gξ, ξ>` for causal classification.
pub const CAUSAL_TOL: f64 = 1e-9;
/// Distance to `S_x` accepted for "horizontal" inputs.
pub const HORIZONTAL_TOL: f64 = 1e-8;

macro_rules! coordinate_vector {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub Vec<f64>);

        impl $name {
            pub fn new(components: Vec<f64>) -> Self {
                Self(components)
            }

            pub fn zeros(n: usize) -> Self {
                Self(vec![0.0; n])
            }

            /// The `i`-th standard basis element (0-based).
            pub fn basis(n: usize, i: usize) -> Self {
                let mut v = vec![0.0; n];
                v[i] = 1.0;
                Self(v)
            }

            pub fn norm(&self) -> f64 {
                self.0.iter().map(|c| c * c).sum::<f64>().sqrt()
            }

            pub fn scaled(&self, s: f64) -> Self {
                Self(self.0.iter().map(|c| c * s).collect())
            }

            /// `self + s * other`.
            pub fn axpy(&self, s: f64, other: &Self) -> Self {
                Self(self.0.iter().zip(&other.0).map(|(a, b)| a + s * b).collect())
            }

            pub fn is_finite(&self) -> bool {
                self.0.iter().all(|c| c.is_finite())
            }
        }

        impl Deref for $name {
            type Target = [f64];
            fn deref(&self) -> &[f64] {
                &self.0
            }
        }

        impl DerefMut for $name {
            fn deref_mut(&mut self) -> &mut [f64] {
                &mut self.0
            }
        }

        impl From<Vec<f64>> for $name {
            fn from(v: Vec<f64>) -> Self {
                Self(v)
            }
        }

        impl<const N: usize> From<[f64; N]> for $name {
            fn from(v: [f64; N]) -> Self {
                Self(v.to_vec())
            }
        }
    };
}

coordinate_vector!(
    /// A point of the chart.
    Point
);
coordinate_vector!(
    /// An element of `T*_x`.
    Covector
);
coordinate_vector!(
    /// An element of `T_x`.
    TangentVector
);

/// `<Y, ξ> = Σ Y^k ξ_k`.
pub fn pairing(vector: &TangentVector, covector: &Covector) -> f64 {
    vector.iter().zip(covector.iter()).map(|(a, b)| a * b).sum()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CausalClass {
    Timelike,
    Null,
    Spacelike,
    Annihilator,
}

impl fmt::Display for CausalClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CausalClass::Timelike => "timelike",
            CausalClass::Null => "null",
            CausalClass::Spacelike => "spacelike",
            CausalClass::Annihilator => "annihilator",
        };
        f.write_str(s)
    }
}

/// A causal class together with the value `<g ξ, ξ>` it was derived from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CausalCharacter {
    pub class: CausalClass,
    pub scalar: f64,
}

/// Counts of negative, positive and zero eigenvalues.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Signature {
    pub negative: usize,
    pub positive: usize,
    pub zero: usize,
}

/// Values and derivatives of `g^{jk}` at one point, 0-based indices.
#[derive(Clone, Debug)]
pub struct FieldJet {
    n: usize,
    g: Vec<f64>,
    dg: Vec<f64>,
    ddg: Vec<f64>,
}

impl FieldJet {
    pub(crate) fn from_parts(n: usize, g: Vec<f64>, dg: Vec<f64>, ddg: Vec<f64>) -> Self {
        Self { n, g, dg, ddg }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn g(&self, j: usize, k: usize) -> f64 {
        self.g[j * self.n + k]
    }

    /// `∂g^{jk}/∂x^p`.
    #[inline]
    pub fn dg(&self, j: usize, k: usize, p: usize) -> f64 {
        self.dg[(j * self.n + k) * self.n + p]
    }

    /// `∂²g^{jk}/∂x^p∂x^q`; zero unless the jet was built with second order.
    #[inline]
    pub fn ddg(&self, j: usize, k: usize, p: usize, q: usize) -> f64 {
        if self.ddg.is_empty() {
            0.0
        } else {
            self.ddg[((j * self.n + k) * self.n + p) * self.n + q]
        }
    }

    pub fn has_second_order(&self) -> bool {
        !self.ddg.is_empty()
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.g)
    }

    /// `g ξ` at the jet's base point.
    pub fn apply(&self, xi: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|k| (0..self.n).map(|j| self.g(k, j) * xi[j]).sum())
            .collect()
    }
}

/// Orthogonal split of `T_x`/`T*_x` into the image and kernel of `g(x)`.
#[derive(Clone, Debug)]
pub struct PointSplit {
    /// Nonzero eigenpairs, ordered negatives first (most negative first),
    /// then positives (largest first).
    pub horizontal: Vec<(f64, Vec<f64>)>,
    /// Orthonormal kernel vectors.
    pub kernel: Vec<Vec<f64>>,
}

impl PointSplit {
    pub fn project_horizontal(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for (_, h) in &self.horizontal {
            let c = dot(h, v);
            for (o, hi) in out.iter_mut().zip(h) {
                *o += c * hi;
            }
        }
        out
    }

    /// Minimum-norm solution of `g ξ = v`, assuming `v` horizontal.
    pub fn pseudo_solve(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for (lambda, h) in &self.horizontal {
            let c = dot(h, v) / lambda;
            for (o, hi) in out.iter_mut().zip(h) {
                *o += c * hi;
            }
        }
        out
    }
}

/// A cometric field: dimension `n`, distribution rank `m`, index `ν`, and
/// polynomial entries with exact first and second derivatives.
#[derive(Clone, Debug)]
pub struct CometricField {
    dim: usize,
    rank: usize,
    index: usize,
    entries: Vec<Expression>,
    first: Vec<Expression>,
    second: Vec<Expression>,
    g_poly: Vec<(usize, Polynomial)>,
    dg_poly: Vec<(usize, Polynomial)>,
    ddg_poly: Vec<(usize, Polynomial)>,
}

/// On-disk field definition. `j` and `k` are 1-based with `j <= k`;
/// unlisted entries are zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldDefinition {
    pub dim: usize,
    pub rank: usize,
    pub index: usize,
    pub entries: Vec<EntryDefinition>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntryDefinition {
    pub j: usize,
    pub k: usize,
    pub expr: String,
}

const PROBE_POINTS: usize = 8;
const PROBE_SEED: u64 = 0x5eed_c0de;

impl CometricField {
    /// Builds a field from its upper-triangular entries `((j, k), g^{jk})`,
    /// 1-based with `j <= k`, and checks rank and index at probe points.
    pub fn new(
        dim: usize,
        rank: usize,
        index: usize,
        upper: impl IntoIterator<Item = ((usize, usize), Expression)>,
    ) -> Result<Self> {
        if dim < 3 {
            return Err(Error::InvalidField(format!("dimension {dim} < 3")));
        }
        if !(1 < rank && rank < dim) {
            return Err(Error::InvalidField(format!(
                "rank {rank} must satisfy 1 < m < n = {dim}"
            )));
        }
        if index > rank {
            return Err(Error::InvalidField(format!(
                "index {index} exceeds rank {rank}"
            )));
        }
        let mut entries = vec![Expression::zero(); dim * dim];
        let mut seen = vec![false; dim * dim];
        for ((j, k), expr) in upper {
            if j == 0 || k == 0 || j > dim || k > dim {
                return Err(Error::InvalidField(format!(
                    "entry ({j}, {k}) outside 1..={dim}"
                )));
            }
            if j > k {
                return Err(Error::InvalidField(format!(
                    "entry ({j}, {k}) below the diagonal; give (j, k) with j <= k"
                )));
            }
            if expr.max_coordinate() > dim {
                return Err(Error::InvalidField(format!(
                    "entry ({j}, {k}) references x{} beyond dimension {dim}",
                    expr.max_coordinate()
                )));
            }
            let (a, b) = (j - 1, k - 1);
            if seen[a * dim + b] {
                return Err(Error::InvalidField(format!("entry ({j}, {k}) given twice")));
            }
            seen[a * dim + b] = true;
            entries[b * dim + a] = expr.clone();
            entries[a * dim + b] = expr;
        }

        let n = dim;
        let mut first = Vec::with_capacity(n * n * n);
        for e in &entries {
            for p in 1..=n {
                first.push(e.differentiate(p));
            }
        }
        let mut second = Vec::with_capacity(n * n * n * n);
        for d in &first {
            for q in 1..=n {
                second.push(d.differentiate(q));
            }
        }
        let compile = |exprs: &[Expression]| -> Vec<(usize, Polynomial)> {
            exprs
                .iter()
                .enumerate()
                .filter(|(_, e)| !e.is_zero())
                .map(|(i, e)| (i, e.to_polynomial(n)))
                .filter(|(_, p)| !p.is_zero())
                .collect()
        };
        let field = CometricField {
            dim,
            rank,
            index,
            g_poly: compile(&entries),
            dg_poly: compile(&first),
            ddg_poly: compile(&second),
            entries,
            first,
            second,
        };
        field.check_probe_points()?;
        Ok(field)
    }

    fn check_probe_points(&self) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(PROBE_SEED);
        let mut probes = vec![Point::zeros(self.dim)];
        for _ in 0..PROBE_POINTS {
            probes.push(Point(
                (0..self.dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
            ));
        }
        for x in &probes {
            let sig = self.signature(x)?;
            if sig.negative != self.index || sig.positive != self.rank - self.index {
                return Err(Error::SignatureMismatch {
                    negative: sig.negative,
                    positive: sig.positive,
                    index: self.index,
                    rank: self.rank,
                    point: x.0.clone(),
                });
            }
        }
        Ok(())
    }

    pub fn from_definition(def: &FieldDefinition) -> Result<Self> {
        let mut upper = Vec::with_capacity(def.entries.len());
        for e in &def.entries {
            upper.push(((e.j, e.k), parse(&e.expr, def.dim)?));
        }
        Self::new(def.dim, def.rank, def.index, upper)
    }

    /// Parses either a [`FieldDefinition`] or `{"model": "<model id>"}`.
    pub fn from_json_str(json: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(json)?;
        if let Some(model) = value.get("model") {
            let id: crate::models::ModelId = serde_json::from_value(model.clone())?;
            return Ok(id.field().clone());
        }
        let def: FieldDefinition = serde_json::from_value(value)?;
        Self::from_definition(&def)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn to_definition(&self) -> FieldDefinition {
        let mut entries = Vec::new();
        for j in 0..self.dim {
            for k in j..self.dim {
                let e = &self.entries[j * self.dim + k];
                if !e.is_zero() {
                    entries.push(EntryDefinition {
                        j: j + 1,
                        k: k + 1,
                        expr: e.to_string(),
                    });
                }
            }
        }
        FieldDefinition {
            dim: self.dim,
            rank: self.rank,
            index: self.index,
            entries,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn index(&self) -> usize {
        self.index
    }

    /// Codimension `n - m` of the distribution.
    pub fn corank(&self) -> usize {
        self.dim - self.rank
    }

    /// Entry tree `g^{jk}`, 0-based.
    pub fn entry(&self, j: usize, k: usize) -> &Expression {
        &self.entries[j * self.dim + k]
    }

    /// `∂g^{jk}/∂x^p`, 0-based.
    pub fn first_derivative(&self, j: usize, k: usize, p: usize) -> &Expression {
        &self.first[(j * self.dim + k) * self.dim + p]
    }

    /// `∂²g^{jk}/∂x^p∂x^q`, 0-based.
    pub fn second_derivative(&self, j: usize, k: usize, p: usize, q: usize) -> &Expression {
        &self.second[((j * self.dim + k) * self.dim + p) * self.dim + q]
    }

    pub(crate) fn check_len(&self, len: usize) -> Result<()> {
        if len != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: len,
            });
        }
        Ok(())
    }

    fn eval_into(polys: &[(usize, Polynomial)], x: &[f64], out: &mut [f64]) {
        for (i, p) in polys {
            out[*i] = p.evaluate(x);
        }
    }

    /// Cometric values and first derivatives at `x`; second derivatives
    /// too when `second_order` is set.
    pub fn jet(&self, x: &[f64], second_order: bool) -> FieldJet {
        let n = self.dim;
        let mut g = vec![0.0; n * n];
        let mut dg = vec![0.0; n * n * n];
        Self::eval_into(&self.g_poly, x, &mut g);
        Self::eval_into(&self.dg_poly, x, &mut dg);
        let ddg = if second_order {
            let mut ddg = vec![0.0; n * n * n * n];
            Self::eval_into(&self.ddg_poly, x, &mut ddg);
            ddg
        } else {
            Vec::new()
        };
        FieldJet { n, g, dg, ddg }
    }

    /// Row-major `g(x)` as a flat vector.
    pub fn values(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim * self.dim];
        Self::eval_into(&self.g_poly, x, &mut g);
        g
    }

    pub fn matrix_at(&self, x: &Point) -> Result<DMatrix<f64>> {
        self.check_len(x.len())?;
        Ok(DMatrix::from_row_slice(self.dim, self.dim, &self.values(x)))
    }

    /// Eigen-split of `g(x)` into horizontal and kernel parts, checking the
    /// declared rank.
    pub fn split(&self, x: &Point) -> Result<PointSplit> {
        self.check_len(x.len())?;
        let split = split_symmetric(self.dim, &self.values(x));
        if split.horizontal.len() != self.rank {
            return Err(Error::RankMismatch {
                expected: self.rank,
                found: split.horizontal.len(),
                point: x.0.clone(),
            });
        }
        Ok(split)
    }

    /// `v^k = g^{kj}(x) ξ_j`.
    pub fn apply_cometric(&self, x: &Point, xi: &Covector) -> Result<TangentVector> {
        self.check_len(x.len())?;
        self.check_len(xi.len())?;
        let g = self.values(x);
        let n = self.dim;
        Ok(TangentVector(
            (0..n)
                .map(|k| (0..n).map(|j| g[k * n + j] * xi[j]).sum())
                .collect(),
        ))
    }

    /// Orthonormal basis of `ker g(x) = S⊥_x`.
    pub fn annihilator_basis(&self, x: &Point) -> Result<Vec<Covector>> {
        Ok(self.split(x)?.kernel.into_iter().map(Covector).collect())
    }

    /// Orthonormal basis of the column space `S_x`.
    pub fn horizontal_basis(&self, x: &Point) -> Result<Vec<TangentVector>> {
        Ok(self
            .split(x)?
            .horizontal
            .into_iter()
            .map(|(_, v)| TangentVector(v))
            .collect())
    }

    pub fn signature(&self, x: &Point) -> Result<Signature> {
        self.check_len(x.len())?;
        let split = split_symmetric(self.dim, &self.values(x));
        let negative = split.horizontal.iter().filter(|(l, _)| *l < 0.0).count();
        Ok(Signature {
            negative,
            positive: split.horizontal.len() - negative,
            zero: split.kernel.len(),
        })
    }

    /// Classifies `ξ` by the sign of `<g(x) ξ, ξ>`.
    pub fn causal_character(&self, x: &Point, xi: &Covector, tol: f64) -> Result<CausalCharacter> {
        let v = self.apply_cometric(x, xi)?;
        Ok(classify(&v, xi, tol))
    }

    /// `Q_x(V, W)` for horizontal `V`, `W`: solve `g ξ = V`, return `<W, ξ>`.
    pub fn metric_from_cometric(
        &self,
        x: &Point,
        v: &TangentVector,
        w: &TangentVector,
    ) -> Result<f64> {
        self.check_len(v.len())?;
        self.check_len(w.len())?;
        let split = self.split(x)?;
        for u in [v, w] {
            let proj = split.project_horizontal(u);
            let distance = norm(
                &u.iter()
                    .zip(&proj)
                    .map(|(a, b)| a - b)
                    .collect::<Vec<_>>(),
            );
            if distance > HORIZONTAL_TOL * norm(u).max(1.0) {
                return Err(Error::NotHorizontal { distance });
            }
        }
        let xi = split.pseudo_solve(v);
        Ok(dot(w, &xi))
    }

    /// Minimum-norm covector with `g(x) ξ = v` for horizontal `v`.
    pub fn lift(&self, x: &Point, v: &TangentVector) -> Result<Covector> {
        let split = self.split(x)?;
        Ok(Covector(split.pseudo_solve(v)))
    }
}

pub(crate) fn classify(g_xi: &[f64], xi: &[f64], tol: f64) -> CausalCharacter {
    let scalar = dot(g_xi, xi);
    let class = if norm(g_xi) <= tol * norm(xi) {
        CausalClass::Annihilator
    } else if scalar.abs() <= tol {
        CausalClass::Null
    } else if scalar < 0.0 {
        CausalClass::Timelike
    } else {
        CausalClass::Spacelike
    };
    CausalCharacter { class, scalar }
}

/// Eigen-split of a symmetric row-major matrix with the relative cutoff
/// [`RANK_CUTOFF`].
pub(crate) fn split_symmetric(n: usize, values: &[f64]) -> PointSplit {
    let m = DMatrix::from_row_slice(n, n, values);
    let eig = SymmetricEigen::new(m);
    let largest = eig.eigenvalues.iter().fold(0.0f64, |a, l| a.max(l.abs()));
    let cutoff = RANK_CUTOFF * largest;
    let mut horizontal = Vec::new();
    let mut kernel = Vec::new();
    for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
        let v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
        if largest == 0.0 || lambda.abs() <= cutoff {
            kernel.push(v);
        } else {
            horizontal.push((lambda, v));
        }
    }
    horizontal.sort_by(|a, b| {
        let key = |l: f64| if l < 0.0 { (0, l) } else { (1, -l) };
        key(a.0).partial_cmp(&key(b.0)).unwrap()
    });
    PointSplit { horizontal, kernel }
}

/// Solves the small dense system `a x = b` by LU; `None` when singular.
pub(crate) fn solve_dense(n: usize, a: Vec<f64>, b: &[f64]) -> Option<Vec<f64>> {
    let m = DMatrix::from_row_slice(n, n, &a);
    let rhs = DVector::from_column_slice(b);
    m.lu().solve(&rhs).map(|x| x.iter().copied().collect())
}
