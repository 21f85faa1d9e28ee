//! Quadratic forms, periodic forms and their tangent geometry.

mod json;

pub use json::{FormJson, FormSpec};

use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::scalar::{Field, Rational, Real};

/// Disjointness tolerance for `u_i - u_j` against the integer lattice.
pub const COSET_TOL: f64 = 1e-9;

/// Integer Gram numerators over a common positive denominator.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactGram {
    dim: usize,
    numer: Vec<i128>,
    denom: i128,
}

impl ExactGram {
    pub fn from_rationals(gram: &Mat<Rational>) -> Result<Self> {
        let dim = gram.rows();
        let mut denom = num_bigint::BigInt::one();
        for v in gram.as_slice() {
            denom = denom.lcm(v.denom());
        }
        let mut numer = Vec::with_capacity(dim * dim);
        for v in gram.as_slice() {
            let n = v.numer() * (&denom / v.denom());
            numer.push(n.to_i128().ok_or(Error::Overflow)?);
        }
        Ok(ExactGram { dim, numer, denom: denom.to_i128().ok_or(Error::Overflow)? })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn denominator(&self) -> i128 {
        self.denom
    }

    pub fn numerator(&self, i: usize, j: usize) -> i128 {
        self.numer[i * self.dim + j]
    }

    /// `denom · Q[x]` for an integer vector, with overflow checking.
    pub fn scaled_norm(&self, x: &[i128]) -> Result<i128> {
        let mut acc: i128 = 0;
        for i in 0..self.dim {
            if x[i] == 0 {
                continue;
            }
            let mut row: i128 = 0;
            for j in 0..self.dim {
                let p = self.numer[i * self.dim + j].checked_mul(x[j]).ok_or(Error::Overflow)?;
                row = row.checked_add(p).ok_or(Error::Overflow)?;
            }
            acc = acc.checked_add(row.checked_mul(x[i]).ok_or(Error::Overflow)?).ok_or(Error::Overflow)?;
        }
        Ok(acc)
    }

    /// `denom · xᵗ Q y`.
    pub fn scaled_bilinear(&self, x: &[i128], y: &[i128]) -> Result<i128> {
        let mut acc: i128 = 0;
        for i in 0..self.dim {
            if x[i] == 0 {
                continue;
            }
            let mut row: i128 = 0;
            for j in 0..self.dim {
                let p = self.numer[i * self.dim + j].checked_mul(y[j]).ok_or(Error::Overflow)?;
                row = row.checked_add(p).ok_or(Error::Overflow)?;
            }
            acc = acc.checked_add(row.checked_mul(x[i]).ok_or(Error::Overflow)?).ok_or(Error::Overflow)?;
        }
        Ok(acc)
    }

    pub fn to_rationals(&self) -> Mat<Rational> {
        Mat::from_fn(self.dim, self.dim, |i, j| Rational::from_ratio(self.numerator(i, j), self.denom))
    }
}

/// Positive definite Gram matrix with its Cholesky data.
#[derive(Debug, Clone)]
pub struct QuadForm<T> {
    gram: Mat<T>,
    chol: Mat<T>,
    chol_inv: Mat<T>,
    inverse: Mat<T>,
    det: T,
    exact: Option<ExactGram>,
}

impl<T: Real> QuadForm<T> {
    pub fn new(gram: Mat<T>) -> Result<Self> {
        Self::build(gram, None)
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        Self::new(Mat::from_rows(rows)?)
    }

    /// Exact form from integer rows.
    pub fn from_integer_rows(rows: &[Vec<i64>]) -> Result<Self> {
        let exact = Mat::from_rows(
            &rows.iter().map(|r| r.iter().map(|&v| Rational::from_int(v as i128)).collect()).collect::<Vec<_>>(),
        )?;
        Self::from_exact(&exact)
    }

    pub fn from_exact(gram: &Mat<Rational>) -> Result<Self> {
        if !gram.is_square() {
            return Err(Error::DimensionMismatch { expected: gram.rows(), found: gram.cols() });
        }
        if !gram.is_symmetric() {
            return Err(Error::InvalidForm("gram matrix is not symmetric".into()));
        }
        // Exact positive definiteness via leading principal minors.
        for k in 1..=gram.rows() {
            let minor = Mat::from_fn(k, k, |i, j| gram[(i, j)].clone());
            if minor.determinant() <= Rational::zero() {
                return Err(Error::InvalidForm(format!("leading minor {k} is not positive")));
            }
        }
        let exact = ExactGram::from_rationals(gram)?;
        Self::build(gram.map(T::from_rational), Some(exact))
    }

    fn build(gram: Mat<T>, exact: Option<ExactGram>) -> Result<Self> {
        if !gram.is_square() {
            return Err(Error::DimensionMismatch { expected: gram.rows(), found: gram.cols() });
        }
        if gram.rows() == 0 {
            return Err(Error::InvalidForm("dimension must be positive".into()));
        }
        if !gram.as_slice().iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidForm("gram matrix has non-finite entries".into()));
        }
        if !gram.is_symmetric() {
            return Err(Error::InvalidForm("gram matrix is not symmetric".into()));
        }
        let chol = gram
            .cholesky_upper()
            .ok_or_else(|| Error::InvalidForm("gram matrix is not positive definite".into()))?;
        let chol_inv = chol.upper_triangular_inverse();
        let inverse = chol_inv.matmul(&chol_inv.transpose());
        let inverse = inverse.symmetrized();
        let det = (0..gram.rows()).fold(T::one(), |acc, i| acc * chol[(i, i)] * chol[(i, i)]);
        Ok(QuadForm { gram, chol, chol_inv, inverse, det, exact })
    }

    pub fn dim(&self) -> usize {
        self.gram.rows()
    }

    pub fn gram(&self) -> &Mat<T> {
        &self.gram
    }

    /// Upper-triangular `R` with `Q = RᵗR`; columns of `R` form a basis of the lattice.
    pub fn chol(&self) -> &Mat<T> {
        &self.chol
    }

    pub fn chol_inv(&self) -> &Mat<T> {
        &self.chol_inv
    }

    pub fn inverse(&self) -> &Mat<T> {
        &self.inverse
    }

    pub fn det(&self) -> T {
        self.det
    }

    /// Covolume `sqrt(det Q)`.
    pub fn covolume(&self) -> T {
        self.det.sqrt()
    }

    pub fn exact(&self) -> Option<&ExactGram> {
        self.exact.as_ref()
    }

    pub fn exact_gram(&self) -> Option<Mat<Rational>> {
        self.exact.as_ref().map(ExactGram::to_rationals)
    }

    /// `Q[x]`.
    pub fn norm_sq(&self, x: &[T]) -> T {
        let y = self.euclidean(x);
        y.iter().fold(T::zero(), |acc, v| acc + *v * *v)
    }

    /// Euclidean coordinates `R x`.
    pub fn euclidean(&self, x: &[T]) -> Vec<T> {
        let d = self.dim();
        (0..d).map(|i| (i..d).fold(T::zero(), |acc, j| acc + self.chol[(i, j)] * x[j])).collect()
    }

    /// Lattice coordinates `R⁻¹ y` of a Euclidean vector.
    pub fn lattice_coords(&self, y: &[T]) -> Vec<T> {
        let d = self.dim();
        (0..d).map(|i| (i..d).fold(T::zero(), |acc, j| acc + self.chol_inv[(i, j)] * y[j])).collect()
    }

    /// Euclidean coordinates of a dual-lattice vector with integer coordinates `z`: `R⁻ᵗ z`.
    pub fn dual_euclidean(&self, z: &[T]) -> Vec<T> {
        let d = self.dim();
        (0..d).map(|i| (0..=i).fold(T::zero(), |acc, j| acc + self.chol_inv[(j, i)] * z[j])).collect()
    }

    /// `λ · Q`, keeping exactness when `λ` is given as a rational.
    pub fn scaled(&self, factor: T) -> Result<Self> {
        Self::new(self.gram.scale(&factor))
    }

    pub fn scaled_exact(&self, factor: &Rational) -> Result<Self> {
        match self.exact_gram() {
            Some(g) => Self::from_exact(&g.scale(factor)),
            None => Self::new(self.gram.scale(&T::from_rational(factor))),
        }
    }

    /// The form of the dual lattice, `Q⁻¹`.
    pub fn dual(&self) -> Result<Self> {
        match self.exact_gram() {
            Some(g) => {
                let inv = g.inverse().ok_or_else(|| Error::InvalidForm("singular gram".into()))?;
                Self::from_exact(&inv)
            }
            None => Self::new(self.inverse.clone()),
        }
    }

    /// `UᵗQU`, exact when the form is exact.
    pub fn transform(&self, u: &Mat<i64>) -> Result<Self> {
        let d = self.dim();
        if u.rows() != d || u.cols() != d {
            return Err(Error::DimensionMismatch { expected: d, found: u.rows() });
        }
        match self.exact_gram() {
            Some(g) => {
                let ur = u.map(|&v| Rational::from_int(v as i128));
                Self::from_exact(&ur.transpose().matmul(&g).matmul(&ur))
            }
            None => {
                let ut = u.map(|&v| T::from_int(v as i128));
                Self::new(ut.transpose().matmul(&self.gram).matmul(&ut).symmetrized())
            }
        }
    }

    pub fn convert<S: Real>(&self) -> Result<QuadForm<S>> {
        match self.exact_gram() {
            Some(g) => QuadForm::from_exact(&g),
            None => QuadForm::new(self.gram.map(|v| S::lit(v.as_f64()))),
        }
    }
}

/// Reduces a coordinate into `[0, 1)`.
pub fn reduce_unit<T: Real>(x: T) -> T {
    let r = x - x.floor();
    if r >= T::one() || r < T::zero() {
        T::zero()
    } else {
        r
    }
}

fn reduce_unit_exact(x: &Rational) -> Rational {
    x - x.floor()
}

/// Distance from `x` to the nearest integer vector (sup norm).
pub fn integer_distance<T: Real>(x: &[T]) -> T {
    x.iter().fold(T::zero(), |acc, v| acc.max((*v - v.round()).abs()))
}

/// Periodic form `(Q, u_1..u_m)` with `u_1 = 0` and coordinates in `[0,1)`.
#[derive(Debug, Clone)]
pub struct PeriodicForm<T> {
    q: QuadForm<T>,
    translations: Vec<Vec<T>>,
    exact_translations: Option<Vec<Vec<Rational>>>,
}

impl<T: Real> PeriodicForm<T> {
    pub fn lattice(q: QuadForm<T>) -> Self {
        let d = q.dim();
        let exact = q.exact().map(|_| vec![vec![Rational::zero(); d]]);
        PeriodicForm { q, translations: vec![vec![T::zero(); d]], exact_translations: exact }
    }

    pub fn new(q: QuadForm<T>, translations: Vec<Vec<T>>) -> Result<Self> {
        let d = q.dim();
        if translations.is_empty() {
            return Err(Error::InvalidForm("at least one translation is required".into()));
        }
        for u in &translations {
            if u.len() != d {
                return Err(Error::DimensionMismatch { expected: d, found: u.len() });
            }
            if !u.iter().all(|v| v.is_finite()) {
                return Err(Error::InvalidForm("non-finite translation".into()));
            }
        }
        let base = translations[0].clone();
        let normalized: Vec<Vec<T>> = translations
            .iter()
            .map(|u| u.iter().zip(&base).map(|(a, b)| reduce_unit(*a - *b)).collect())
            .collect();
        check_disjoint(&normalized)?;
        Ok(PeriodicForm { q, translations: normalized, exact_translations: None })
    }

    /// Exact translations; the form keeps them when `q` is exact.
    pub fn from_exact(q: QuadForm<T>, translations: &[Vec<Rational>]) -> Result<Self> {
        let d = q.dim();
        if translations.is_empty() {
            return Err(Error::InvalidForm("at least one translation is required".into()));
        }
        for u in translations {
            if u.len() != d {
                return Err(Error::DimensionMismatch { expected: d, found: u.len() });
            }
        }
        let base = translations[0].clone();
        let normalized: Vec<Vec<Rational>> = translations
            .iter()
            .map(|u| u.iter().zip(&base).map(|(a, b)| reduce_unit_exact(&(a - b))).collect())
            .collect();
        for i in 0..normalized.len() {
            for j in 0..i {
                if normalized[i] == normalized[j] {
                    return Err(Error::CoincidentCosets { i: j, j: i });
                }
            }
        }
        let float: Vec<Vec<T>> =
            normalized.iter().map(|u| u.iter().map(T::from_rational).collect()).collect();
        check_disjoint(&float)?;
        let exact = if q.exact().is_some() { Some(normalized) } else { None };
        Ok(PeriodicForm { q, translations: float, exact_translations: exact })
    }

    pub fn q(&self) -> &QuadForm<T> {
        &self.q
    }

    pub fn dim(&self) -> usize {
        self.q.dim()
    }

    /// Number of cosets `m`.
    pub fn m(&self) -> usize {
        self.translations.len()
    }

    pub fn translations(&self) -> &[Vec<T>] {
        &self.translations
    }

    pub fn exact_translations(&self) -> Option<&[Vec<Rational>]> {
        self.exact_translations.as_deref()
    }

    pub fn is_exact(&self) -> bool {
        self.exact_translations.is_some()
    }

    /// Point density `m / sqrt(det Q)`.
    pub fn point_density(&self) -> T {
        T::count(self.m()) / self.q.covolume()
    }

    /// Replaces the Gram matrix, keeping translations.
    pub fn with_form(&self, q: QuadForm<T>) -> Result<Self> {
        if q.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: q.dim() });
        }
        match &self.exact_translations {
            Some(u) if q.exact().is_some() => Self::from_exact(q, u),
            _ => Self::new(q, self.translations.clone()),
        }
    }

    /// `(UᵗQU, U⁻¹ u_i mod Z^d)`.
    pub fn apply_unimodular(&self, u: &Mat<i64>) -> Result<Self> {
        let d = self.dim();
        if u.rows() != d || u.cols() != d {
            return Err(Error::DimensionMismatch { expected: d, found: u.rows() });
        }
        let ur = u.map(|&v| Rational::from_int(v as i128));
        let det = ur.determinant();
        if det.abs() != Rational::one() {
            return Err(Error::InvalidTransform(format!("determinant {det} is not ±1")));
        }
        let inv = ur.inverse().ok_or_else(|| Error::InvalidTransform("singular transform".into()))?;
        let q = self.q.transform(u)?;
        match &self.exact_translations {
            Some(us) if q.exact().is_some() => {
                let moved: Vec<Vec<Rational>> = us.iter().map(|x| inv.matvec(x)).collect();
                Self::from_exact(q, &moved)
            }
            _ => {
                let invt = inv.map(T::from_rational);
                let moved = self.translations.iter().map(|x| invt.matvec(x)).collect();
                Self::new(q, moved)
            }
        }
    }

    /// Adds a common vector to every translation (then renormalizes).
    pub fn translated(&self, shift: &[T]) -> Result<Self> {
        let moved = self.translations.iter().map(|u| u.iter().zip(shift).map(|(a, b)| *a + *b).collect()).collect();
        Self::new(self.q.clone(), moved)
    }

    /// Reorders the translations (then renormalizes so the new first one is 0).
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        match &self.exact_translations {
            Some(us) => {
                let moved: Vec<Vec<Rational>> = order.iter().map(|&i| us[i].clone()).collect();
                Self::from_exact(self.q.clone(), &moved)
            }
            None => Self::new(self.q.clone(), order.iter().map(|&i| self.translations[i].clone()).collect()),
        }
    }

    /// Lattice `Q` rewritten as the `m` cosets of the sublattice spanned by the
    /// columns of `T`, where column `p` of `T` is `m e_p + Σ_{i<p} a_i e_i` and
    /// the other columns are unit vectors. Representatives are `k e_p`.
    pub fn sublattice_decomposition(q: &QuadForm<T>, m: usize, pivot: usize, offsets: &[i64]) -> Result<Self> {
        let d = q.dim();
        if pivot >= d || offsets.len() != pivot || m == 0 {
            return Err(Error::InvalidForm("bad sublattice description".into()));
        }
        let mut t = Mat::<i64>::identity_int(d);
        t[(pivot, pivot)] = m as i64;
        for (i, a) in offsets.iter().enumerate() {
            t[(i, pivot)] = *a;
        }
        let tr = t.map(|&v| Rational::from_int(v as i128));
        let tinv = tr.inverse().expect("triangular with nonzero diagonal");
        let sub = match q.exact_gram() {
            Some(g) => QuadForm::from_exact(&tr.transpose().matmul(&g).matmul(&tr))?,
            None => {
                let tt = t.map(|&v| T::from_int(v as i128));
                QuadForm::new(tt.transpose().matmul(q.gram()).matmul(&tt).symmetrized())?
            }
        };
        let reps: Vec<Vec<Rational>> = (0..m)
            .map(|k| {
                let mut e = vec![Rational::zero(); d];
                e[pivot] = Rational::from_int(k as i128);
                tinv.matvec(&e)
            })
            .collect();
        Self::from_exact(sub, &reps)
    }

    /// A random index-`m` decomposition of the lattice `q` (see [`Self::sublattice_decomposition`]).
    pub fn random_decomposition(q: &QuadForm<T>, m: usize, rng: &mut impl Rng) -> Result<Self> {
        let d = q.dim();
        let pivot = rng.random_range(0..d);
        let offsets: Vec<i64> = (0..pivot).map(|_| rng.random_range(0..m.max(1) as i64)).collect();
        Self::sublattice_decomposition(q, m, pivot, &offsets)
    }

    /// Gram matrix of the lattice spanned by all points, in a Hermite basis.
    ///
    /// Meaningful when the periodic set is a lattice `Λ0 ⊃ L`; then `m u_i` is
    /// integral and `Λ0 = (1/m) ⟨m Z^d, m u_i⟩`. Fails with `NotALattice` when
    /// some `m u_i` is not integral.
    pub fn generated_lattice(&self) -> Result<QuadForm<T>> {
        let b = self.generated_lattice_basis()?;
        match self.q.exact_gram() {
            Some(g) => QuadForm::from_exact(&b.transpose().matmul(&g).matmul(&b)),
            None => {
                let bt = b.map(T::from_rational);
                QuadForm::new(bt.transpose().matmul(self.q.gram()).matmul(&bt).symmetrized())
            }
        }
    }

    /// Basis of `Λ0` in the lattice coordinates of `q` (columns), as used by
    /// [`Self::generated_lattice`].
    pub fn generated_lattice_basis(&self) -> Result<Mat<Rational>> {
        let d = self.dim();
        let m = self.m() as i128;
        let mut cols: Vec<Vec<i128>> = (0..d).map(|i| (0..d).map(|j| if i == j { m } else { 0 }).collect()).collect();
        for (k, u) in self.translations.iter().enumerate().skip(1) {
            let col: Vec<i128> = match &self.exact_translations {
                Some(ex) => ex[k]
                    .iter()
                    .map(|v| {
                        let s = v * Rational::from_int(m);
                        if s.is_integer() { s.to_integer().to_i128().ok_or(Error::Overflow) } else { Err(Error::NotALattice { k, i: 0 }) }
                    })
                    .collect::<Result<_>>()?,
                None => u
                    .iter()
                    .map(|v| {
                        let s = *v * T::from_int(m);
                        if (s - s.round()).abs() > T::lit(COSET_TOL) * T::from_int(m) {
                            Err(Error::NotALattice { k, i: 0 })
                        } else {
                            s.round().to_i128().ok_or(Error::Overflow)
                        }
                    })
                    .collect::<Result<_>>()?,
            };
            cols.push(col);
        }
        let basis = hermite_columns(d, cols)?;
        Ok(Mat::from_fn(d, d, |i, j| Rational::from_ratio(basis[j][i], m)))
    }

    pub fn convert<S: Real>(&self) -> Result<PeriodicForm<S>> {
        let q = self.q.convert::<S>()?;
        match &self.exact_translations {
            Some(u) => PeriodicForm::from_exact(q, u),
            None => PeriodicForm::new(
                q,
                self.translations.iter().map(|u| u.iter().map(|v| S::lit(v.as_f64())).collect()).collect(),
            ),
        }
    }
}

/// Basis of the full-rank lattice spanned by integer columns, by column
/// operations row by row (lower-triangular Hermite shape).
fn hermite_columns(d: usize, mut cols: Vec<Vec<i128>>) -> Result<Vec<Vec<i128>>> {
    for row in 0..d {
        loop {
            // Column with the smallest nonzero entry in this row among the unpivoted ones.
            let Some(piv) = (row..cols.len()).filter(|&c| cols[c][row] != 0).min_by_key(|&c| cols[c][row].abs()) else {
                return Err(Error::InvalidForm("generators do not span a full-rank lattice".into()));
            };
            cols.swap(row, piv);
            let mut done = true;
            for c in row + 1..cols.len() {
                let q = cols[c][row].div_euclid(cols[row][row]);
                if q != 0 {
                    for i in 0..d {
                        let v = cols[row][i].checked_mul(q).ok_or(Error::Overflow)?;
                        cols[c][i] = cols[c][i].checked_sub(v).ok_or(Error::Overflow)?;
                    }
                }
                if cols[c][row] != 0 {
                    done = false;
                }
            }
            if done {
                break;
            }
        }
    }
    cols.truncate(d);
    Ok(cols)
}

fn check_disjoint<T: Real>(translations: &[Vec<T>]) -> Result<()> {
    let tol = T::lit(COSET_TOL);
    for i in 0..translations.len() {
        for j in 0..i {
            let diff: Vec<T> = translations[i].iter().zip(&translations[j]).map(|(a, b)| *a - *b).collect();
            if integer_distance(&diff) <= tol {
                return Err(Error::CoincidentCosets { i: j, j: i });
            }
        }
    }
    Ok(())
}

impl Mat<i64> {
    pub fn identity_int(n: usize) -> Self {
        Mat::from_data(n, n, (0..n * n).map(|k| i64::from(k % (n + 1) == 0)).collect())
    }

    pub fn from_int_rows(rows: &[Vec<i64>]) -> Self {
        let c = rows.first().map_or(0, Vec::len);
        Mat::from_data(rows.len(), c, rows.iter().flat_map(|row| row.iter().copied()).collect())
    }
}

/// Tangent direction `(K, u)` at a periodic form; `t_1` is pinned to zero.
#[derive(Debug, Clone)]
pub struct TangentVec<T> {
    pub h: Mat<T>,
    pub t: Vec<Vec<T>>,
}

impl<T: Real> TangentVec<T> {
    pub fn zero(d: usize, m: usize) -> Self {
        TangentVec { h: Mat::zeros(d, d), t: vec![vec![T::zero(); d]; m] }
    }

    /// Validates the tangent constraints at `base`.
    pub fn new(h: Mat<T>, t: Vec<Vec<T>>, base: &PeriodicForm<T>) -> Result<Self> {
        let v = TangentVec { h, t };
        v.validate(base)?;
        Ok(v)
    }

    pub fn validate(&self, base: &PeriodicForm<T>) -> Result<()> {
        let d = base.dim();
        if self.h.rows() != d || self.h.cols() != d {
            return Err(Error::DimensionMismatch { expected: d, found: self.h.rows() });
        }
        if self.t.len() != base.m() {
            return Err(Error::DimensionMismatch { expected: base.m(), found: self.t.len() });
        }
        if let Some(bad) = self.t.iter().find(|t| t.len() != d) {
            return Err(Error::DimensionMismatch { expected: d, found: bad.len() });
        }
        let scale = self.h.max_abs().max(T::one());
        if self.h.asymmetry() > T::lit(1e-12) * scale {
            return Err(Error::InvalidTangent("h is not symmetric".into()));
        }
        let trace = base.q().inverse().trace_product(&self.h);
        let trace_scale = base.q().inverse().max_abs() * scale * T::count(d);
        if trace.abs() > T::lit(1e-12) * trace_scale.max(T::one()) {
            return Err(Error::InvalidTangent(format!("Tr(Q⁻¹h) = {trace:e} is not zero")));
        }
        if self.t[0].iter().any(|v| *v != T::zero()) {
            return Err(Error::InvalidTangent("t_1 must be zero".into()));
        }
        Ok(())
    }

    pub fn scale(&self, s: T) -> Self {
        TangentVec {
            h: self.h.scale(&s),
            t: self.t.iter().map(|t| t.iter().map(|v| *v * s).collect()).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        TangentVec {
            h: self.h.add(&other.h),
            t: self.t.iter().zip(&other.t).map(|(a, b)| a.iter().zip(b).map(|(x, y)| *x + *y).collect()).collect(),
        }
    }

    /// Projects an arbitrary symmetric `h` and translation list onto the tangent space at `base`.
    pub fn project(h: &Mat<T>, t: &[Vec<T>], base: &PeriodicForm<T>) -> Self {
        let q = base.q();
        let d = T::count(q.dim());
        let h = h.symmetrized();
        let tr = q.inverse().trace_product(&h);
        let h = h.sub(&q.gram().scale(&(tr / d)));
        let t0 = t[0].clone();
        let t = t.iter().map(|ti| ti.iter().zip(&t0).map(|(a, b)| *a - *b).collect()).collect();
        TangentVec { h, t }
    }
}

/// `Tr(Q⁻¹ a.h Q⁻¹ b.h) + Σ a.t_iᵗ b.t_i`.
pub fn inner_product<T: Real>(a: &TangentVec<T>, b: &TangentVec<T>, at: &QuadForm<T>) -> Result<T> {
    let d = at.dim();
    for h in [&a.h, &b.h] {
        if h.rows() != d || h.cols() != d {
            return Err(Error::DimensionMismatch { expected: d, found: h.rows() });
        }
    }
    if a.t.len() != b.t.len() {
        return Err(Error::DimensionMismatch { expected: a.t.len(), found: b.t.len() });
    }
    let qa = at.inverse().matmul(&a.h);
    let qb = at.inverse().matmul(&b.h);
    let mut acc = qa.trace_product(&qb);
    for (x, y) in a.t.iter().zip(&b.t) {
        if x.len() != d || y.len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: x.len().min(y.len()) });
        }
        acc = acc + x.iter().zip(y).fold(T::zero(), |s, (p, q)| s + *p * *q);
    }
    Ok(acc)
}

/// `(Q0 exp(Q0⁻¹ s K), u0 + s u)` with determinant drift removed and
/// translations reduced.
pub fn retract<T: Real>(base: &PeriodicForm<T>, dir: &TangentVec<T>, scale: T) -> Result<PeriodicForm<T>> {
    dir.validate(base)?;
    if scale == T::zero() {
        return Ok(base.clone());
    }
    let q0 = base.q();
    let d = q0.dim();
    let r = q0.chol();
    let rinv = q0.chol_inv();
    // Q0 exp(Q0⁻¹K) = Rᵗ exp(R⁻ᵗ K R⁻¹) R.
    let inner = rinv.transpose().matmul(&dir.h.scale(&scale)).matmul(rinv).symmetrized();
    let e = inner.symmetric_exp();
    let mut gram = r.transpose().matmul(&e).matmul(r).symmetrized();
    let det0 = q0.det();
    let det = gram.determinant();
    if !(det > T::zero()) || !det.is_finite() {
        return Err(Error::PerturbationTooLarge("retracted form is degenerate".into()));
    }
    let fix = (det0 / det).powf(T::one() / T::count(d));
    gram = gram.scale(&fix);
    let q = QuadForm::new(gram).map_err(|e| Error::PerturbationTooLarge(e.to_string()))?;
    let moved: Vec<Vec<T>> = base
        .translations()
        .iter()
        .zip(&dir.t)
        .map(|(u, t)| u.iter().zip(t).map(|(a, b)| *a + scale * *b).collect())
        .collect();
    PeriodicForm::new(q, moved).map_err(|e| match e {
        Error::CoincidentCosets { i, j } => {
            Error::PerturbationTooLarge(format!("translations {i} and {j} collide after the step"))
        }
        other => other,
    })
}

/// Velocity of the retraction curve at `scale`: the tangent `(Q1 Q0⁻¹ s K, s u)`
/// at the endpoint. Retracting the endpoint along its negative returns to `base`.
pub fn retract_velocity<T: Real>(base: &PeriodicForm<T>, dir: &TangentVec<T>, scale: T) -> Result<TangentVec<T>> {
    let end = retract(base, dir, scale)?;
    let k = end.q().gram().matmul(base.q().inverse()).matmul(&dir.h.scale(&scale)).symmetrized();
    Ok(TangentVec { h: k, t: dir.scale(scale).t })
}

/// Basis matrix `A` (columns are basis vectors) with Gram `AᵗA`.
#[derive(Debug, Clone)]
pub struct LatticeBasis<T> {
    basis: Mat<T>,
    gram: Mat<T>,
}

impl<T: Real> LatticeBasis<T> {
    pub fn new(basis: Mat<T>) -> Result<Self> {
        if !basis.is_square() {
            return Err(Error::DimensionMismatch { expected: basis.rows(), found: basis.cols() });
        }
        if basis.determinant() == T::zero() || basis.inverse().is_none() {
            return Err(Error::InvalidForm("basis is singular".into()));
        }
        let gram = basis.transpose().matmul(&basis).symmetrized();
        Ok(LatticeBasis { basis, gram })
    }

    pub fn basis(&self) -> &Mat<T> {
        &self.basis
    }

    pub fn gram(&self) -> &Mat<T> {
        &self.gram
    }

    pub fn quad_form(&self) -> Result<QuadForm<T>> {
        QuadForm::new(self.gram.clone())
    }

    /// Euclidean image `A u`.
    pub fn apply(&self, u: &[T]) -> Vec<T> {
        self.basis.matvec(u)
    }
}
