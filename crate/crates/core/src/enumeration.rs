//! Fincke–Pohst enumeration of lattice and coset vectors, shells, and the
//! lattice test for periodic sets.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering as AtomicOrdering};

use num_integer::Integer;
use num_traits::ToPrimitive;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::forms::{integer_distance, PeriodicForm, QuadForm, COSET_TOL};
use crate::scalar::{format_rational, rational_from_f64, Field, Rational, Real};

/// Default cap on the number of enumerated points per call.
pub const DEFAULT_BUDGET: usize = 40_000_000;

/// Relative tolerance used to group floating norms into shells.
pub const SHELL_TOL: f64 = 1e-9;

/// Enumeration options.
#[derive(Debug, Clone, Copy)]
pub struct EnumOptions {
    pub budget: usize,
    pub exclude_zero: bool,
}

impl Default for EnumOptions {
    fn default() -> Self {
        EnumOptions { budget: DEFAULT_BUDGET, exclude_zero: true }
    }
}

/// Visits every `z ∈ Z^d` with `Q[z + shift] <= bound`.
///
/// The outermost coordinate is split across threads; one accumulator is
/// returned per outer value, in ascending order, so a sequential reduction of
/// the result is independent of the thread count. The visitor receives the
/// integer vector `z` and the squared norm `Q[z + shift]`.
pub fn fold_coset<T, A, I, F>(
    q: &QuadForm<T>,
    shift: &[T],
    bound: T,
    opts: EnumOptions,
    init: I,
    visit: F,
) -> Result<Vec<A>>
where
    T: Real,
    A: Send,
    I: Fn() -> A + Sync,
    F: Fn(&mut A, &[i64], T) + Sync,
{
    let d = q.dim();
    if shift.len() != d {
        return Err(Error::DimensionMismatch { expected: d, found: shift.len() });
    }
    if !(bound >= T::zero()) || !bound.is_finite() {
        return Err(Error::DomainError(format!("enumeration bound {bound} must be finite and non-negative")));
    }
    let r = q.chol();
    // mu[i][j] = R_ij / R_ii for j > i.
    let diag: Vec<T> = (0..d).map(|i| r[(i, i)]).collect();
    let mu: Vec<Vec<T>> = (0..d).map(|i| (0..d).map(|j| if j > i { r[(i, j)] / diag[i] } else { T::zero() }).collect()).collect();
    let slack = bound * T::lit(1e-9) + T::lit(1e-300).max(T::min_positive_value());
    let limit = bound + slack;
    let zero_is_member = integer_distance(shift) == T::zero();

    let top = d - 1;
    let radius = (limit / (diag[top] * diag[top])).sqrt();
    let lo = (-radius - shift[top]).ceil().to_i64().unwrap_or(i64::MIN);
    let hi = (radius - shift[top]).floor().to_i64().unwrap_or(i64::MAX);
    if hi < lo {
        return Ok(Vec::new());
    }
    let count = AtomicUsize::new(0);
    let overflow = AtomicBool::new(false);
    let ctx = Ctx { d, shift, diag: &diag, mu: &mu, limit, opts, zero_is_member, count: &count, overflow: &overflow };

    let outer: Vec<i64> = (lo..=hi).collect();
    let results: Vec<A> = outer
        .par_iter()
        .map(|&z_top| {
            let mut acc = init();
            let mut z = vec![0i64; d];
            z[top] = z_top;
            let x_top = T::from_int(z_top as i128) + shift[top];
            let partial = diag[top] * diag[top] * x_top * x_top;
            if partial <= limit {
                let mut x = vec![T::zero(); d];
                x[top] = x_top;
                ctx.descend(top, &mut z, &mut x, partial, &mut acc, &visit);
            }
            acc
        })
        .collect();
    if overflow.load(AtomicOrdering::Relaxed) {
        return Err(Error::CutoffOverflow { budget: opts.budget });
    }
    Ok(results)
}

struct Ctx<'a, T> {
    d: usize,
    shift: &'a [T],
    diag: &'a [T],
    mu: &'a [Vec<T>],
    limit: T,
    opts: EnumOptions,
    zero_is_member: bool,
    count: &'a AtomicUsize,
    overflow: &'a AtomicBool,
}

impl<T: Real> Ctx<'_, T> {
    fn descend<A, F>(&self, level: usize, z: &mut [i64], x: &mut [T], partial: T, acc: &mut A, visit: &F)
    where
        F: Fn(&mut A, &[i64], T),
    {
        if self.overflow.load(AtomicOrdering::Relaxed) {
            return;
        }
        if level == 0 {
            if self.opts.exclude_zero && self.zero_is_member && z.iter().zip(self.shift).all(|(zi, s)| T::from_int(*zi as i128) + *s == T::zero()) {
                return;
            }
            if self.count.fetch_add(1, AtomicOrdering::Relaxed) >= self.opts.budget {
                self.overflow.store(true, AtomicOrdering::Relaxed);
                return;
            }
            visit(acc, z, partial);
            return;
        }
        let i = level - 1;
        let center = -(i + 1..self.d).fold(T::zero(), |s, j| s + self.mu[i][j] * x[j]);
        let rem = self.limit - partial;
        if rem < T::zero() {
            return;
        }
        let radius = (rem / (self.diag[i] * self.diag[i])).sqrt();
        let lo = (center - radius - self.shift[i]).ceil().to_i64().unwrap_or(i64::MIN);
        let hi = (center + radius - self.shift[i]).floor().to_i64().unwrap_or(i64::MAX);
        for zi in lo..=hi {
            let xi = T::from_int(zi as i128) + self.shift[i];
            let dev = xi - center;
            let p = partial + self.diag[i] * self.diag[i] * dev * dev;
            if p > self.limit {
                continue;
            }
            z[i] = zi;
            x[i] = xi;
            self.descend(i, z, x, p, acc, visit);
        }
        z[i] = 0;
        x[i] = T::zero();
    }
}

/// All `z` with `0 < Q[z + shift] <= bound`, sorted by norm then lexicographically.
pub fn enumerate_coset<T: Real>(q: &QuadForm<T>, shift: &[T], bound: T, opts: EnumOptions) -> Result<Vec<(Vec<i64>, T)>> {
    let parts = fold_coset(q, shift, bound, opts, Vec::new, |acc: &mut Vec<(Vec<i64>, T)>, z, n| acc.push((z.to_vec(), n)))?;
    let mut all: Vec<(Vec<i64>, T)> = parts.into_iter().flatten().collect();
    all.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal).then_with(|| a.0.cmp(&b.0)));
    Ok(all)
}

/// Lattice vectors sharing one squared norm.
#[derive(Debug, Clone, Serialize)]
pub struct Shell<T> {
    pub alpha: T,
    /// Exact squared norm on the rational path.
    #[serde(serialize_with = "ser_opt_rational")]
    pub exact_alpha: Option<Rational>,
    pub vectors: Vec<Vec<i64>>,
}

fn ser_opt_rational<S: serde::Serializer>(v: &Option<Rational>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(r) => s.serialize_some(&format_rational(r)),
        None => s.serialize_none(),
    }
}

impl<T: Real> Shell<T> {
    pub fn count(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_antipodal(&self) -> bool {
        let mut sorted = self.vectors.clone();
        sorted.sort();
        self.vectors.iter().all(|v| {
            let neg: Vec<i64> = v.iter().map(|x| -x).collect();
            sorted.binary_search(&neg).is_ok()
        })
    }

    /// Builds a shell from an explicit vector list (norm taken from `q`).
    pub fn from_vectors(q: &QuadForm<T>, vectors: Vec<Vec<i64>>) -> Result<Self> {
        let first = vectors.first().ok_or(Error::EmptyShell)?;
        let alpha = q.norm_sq(&first.iter().map(|&v| T::from_int(v as i128)).collect::<Vec<_>>());
        let exact_alpha = match q.exact() {
            Some(g) => Some(Rational::from_ratio(g.scaled_norm(&first.iter().map(|&v| v as i128).collect::<Vec<_>>())?, g.denominator())),
            None => None,
        };
        Ok(Shell { alpha, exact_alpha, vectors })
    }
}

/// All shells with `0 < α <= max_norm_sq`, ascending.
pub fn enumerate_shells<T: Real>(q: &QuadForm<T>, max_norm_sq: T) -> Result<Vec<Shell<T>>> {
    enumerate_shells_with(q, max_norm_sq, DEFAULT_BUDGET)
}

pub fn enumerate_shells_with<T: Real>(q: &QuadForm<T>, max_norm_sq: T, budget: usize) -> Result<Vec<Shell<T>>> {
    if !(max_norm_sq > T::zero()) {
        return Err(Error::DomainError("max_norm_sq must be positive".into()));
    }
    let d = q.dim();
    let points = enumerate_coset(q, &vec![T::zero(); d], max_norm_sq, EnumOptions { budget, exclude_zero: true })?;
    match q.exact() {
        Some(g) => {
            let den = g.denominator();
            let mut groups: BTreeMap<i128, Vec<Vec<i64>>> = BTreeMap::new();
            for (z, _) in points {
                let key = g.scaled_norm(&z.iter().map(|&v| v as i128).collect::<Vec<_>>())?;
                groups.entry(key).or_default().push(z);
            }
            // The bound arrives as a float; allow for its rounding.
            let max_exact = rational_from_f64(max_norm_sq.as_f64() * (1.0 + 1e-12));
            let mut shells = Vec::with_capacity(groups.len());
            for (key, mut vectors) in groups {
                let exact = Rational::from_ratio(key, den);
                if max_exact.as_ref().is_some_and(|m| &exact > m) {
                    continue;
                }
                vectors.sort();
                shells.push(Shell { alpha: T::from_rational(&exact), exact_alpha: Some(exact), vectors });
            }
            Ok(shells)
        }
        None => Ok(group_float(points)),
    }
}

fn group_float<T: Real>(points: Vec<(Vec<i64>, T)>) -> Vec<Shell<T>> {
    let tol = T::lit(SHELL_TOL);
    let mut shells: Vec<Shell<T>> = Vec::new();
    let mut norms: Vec<T> = Vec::new();
    for (z, n) in points {
        match shells.last_mut() {
            Some(last) if (n - last.alpha).abs() <= tol * last.alpha => {
                last.vectors.push(z);
                norms.push(n);
            }
            _ => {
                if let Some(last) = shells.last_mut() {
                    finish_group(last, &norms);
                }
                norms.clear();
                norms.push(n);
                shells.push(Shell { alpha: n, exact_alpha: None, vectors: vec![z] });
            }
        }
    }
    if let Some(last) = shells.last_mut() {
        finish_group(last, &norms);
    }
    shells
}

fn finish_group<T: Real>(shell: &mut Shell<T>, norms: &[T]) {
    shell.alpha = norms.iter().copied().sum::<T>() / T::count(norms.len());
    shell.vectors.sort();
}

/// Lower bound `min_i R_ii²` on the minimum of `Q`.
fn min_lower_bound<T: Real>(q: &QuadForm<T>) -> T {
    (0..q.dim()).map(|i| q.chol()[(i, i)] * q.chol()[(i, i)]).fold(T::infinity(), T::min)
}

/// Smallest nonzero squared norm of the lattice.
pub fn min_norm<T: Real>(q: &QuadForm<T>) -> T {
    min_norm_shell(q).map(|s| s.alpha).expect("a positive definite form always has a nonzero vector")
}

/// The first shell, found by enumerating with a growing bound.
pub fn min_norm_shell<T: Real>(q: &QuadForm<T>) -> Result<Shell<T>> {
    let cap = (0..q.dim()).map(|i| q.gram()[(i, i)]).fold(T::infinity(), T::min);
    let mut bound = min_lower_bound(q).min(cap);
    loop {
        let shells = enumerate_shells(q, bound)?;
        if let Some(first) = shells.into_iter().next() {
            return Ok(first);
        }
        if bound >= cap {
            return Err(Error::InternalInconsistency("no lattice vector within the diagonal bound".into()));
        }
        bound = (bound * T::lit(2.0)).min(cap);
    }
}

/// Smallest `Q[v]` over nonzero `v ∈ shift + Z^d`.
pub fn coset_min_norm<T: Real>(q: &QuadForm<T>, shift: &[T]) -> Result<T> {
    let nearest: Vec<T> = shift.iter().map(|s| *s - s.round()).collect();
    let bound = if nearest.iter().all(|v| *v == T::zero()) {
        return Ok(min_norm(q));
    } else {
        q.norm_sq(&nearest)
    };
    let pts = fold_coset(q, shift, bound, EnumOptions::default(), || T::infinity(), |acc: &mut T, _, n| {
        if n < *acc {
            *acc = n
        }
    })?;
    Ok(pts.into_iter().fold(bound, T::min))
}

/// Minimum squared distance between distinct points of the periodic set.
pub fn min_distance_sq<T: Real>(p: &PeriodicForm<T>) -> Result<T> {
    let mut best = min_norm(p.q());
    let u = p.translations();
    for i in 0..p.m() {
        for j in 0..i {
            let b: Vec<T> = u[i].iter().zip(&u[j]).map(|(a, c)| *a - *c).collect();
            best = best.min(coset_min_norm(p.q(), &b)?);
        }
    }
    Ok(best)
}

/// `sigma[k][i] = σ_k(i)`, the coset index of `u_i - u_k` (0-based).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PermutationTable {
    pub m: usize,
    pub sigma: Vec<Vec<usize>>,
}

impl PermutationTable {
    pub fn identity(m: usize) -> Self {
        PermutationTable { m, sigma: (0..m).map(|_| (0..m).collect()).collect() }
    }

    pub fn apply(&self, k: usize, i: usize) -> usize {
        self.sigma[k][i]
    }

    pub fn is_permutation_table(&self) -> bool {
        self.sigma.iter().all(|row| {
            let mut seen = vec![false; self.m];
            row.len() == self.m && row.iter().all(|&j| j < self.m && !std::mem::replace(&mut seen[j], true))
        })
    }
}

/// Outcome of the lattice test.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LatticeCheck {
    Lattice(PermutationTable),
    NotALattice { k: usize, i: usize },
}

impl LatticeCheck {
    pub fn table(&self) -> Option<&PermutationTable> {
        match self {
            LatticeCheck::Lattice(t) => Some(t),
            LatticeCheck::NotALattice { .. } => None,
        }
    }

    pub fn into_result(self) -> Result<PermutationTable> {
        match self {
            LatticeCheck::Lattice(t) => Ok(t),
            LatticeCheck::NotALattice { k, i } => Err(Error::NotALattice { k, i }),
        }
    }
}

/// Finds `σ_k(i)` with `u_{σ_k(i)} ≡ u_i − u_k (mod Z^d)` for every `k, i`.
pub fn detect_lattice<T: Real>(p: &PeriodicForm<T>) -> LatticeCheck {
    let m = p.m();
    let mut sigma = vec![vec![0usize; m]; m];
    if let Some(u) = p.exact_translations() {
        for k in 0..m {
            for i in 0..m {
                let target: Vec<Rational> = u[i].iter().zip(&u[k]).map(|(a, b)| a - b).collect();
                let hit = (0..m).find(|&j| u[j].iter().zip(&target).all(|(a, b)| (a - b).is_integer()));
                match hit {
                    Some(j) => sigma[k][i] = j,
                    None => return LatticeCheck::NotALattice { k, i },
                }
            }
        }
    } else {
        let u = p.translations();
        let tol = T::lit(COSET_TOL);
        for k in 0..m {
            for i in 0..m {
                let hit = (0..m).find(|&j| {
                    let diff: Vec<T> = (0..p.dim()).map(|e| u[i][e] - u[k][e] - u[j][e]).collect();
                    integer_distance(&diff) <= tol
                });
                match hit {
                    Some(j) => sigma[k][i] = j,
                    None => return LatticeCheck::NotALattice { k, i },
                }
            }
        }
    }
    let table = PermutationTable { m, sigma };
    match table.sigma.iter().enumerate().find(|(_, row)| !PermutationTable { m, sigma: vec![row.to_vec()] }.is_permutation_table()) {
        Some((k, _)) => LatticeCheck::NotALattice { k, i: 0 },
        None => LatticeCheck::Lattice(table),
    }
}

/// Vectors of one coset difference grouped by norm.
#[derive(Debug, Clone, Serialize)]
pub struct CosetShell<T> {
    pub alpha: T,
    #[serde(serialize_with = "ser_opt_rational")]
    pub exact_alpha: Option<Rational>,
    /// Integer parts `z`; the vector is `z + u_i − u_j`.
    pub vectors: Vec<Vec<i64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CosetPairShells<T> {
    pub i: usize,
    pub j: usize,
    /// `u_i − u_j` in lattice coordinates.
    pub offset: Vec<T>,
    pub shells: Vec<CosetShell<T>>,
}

/// For every ordered pair `(i, j)`, the nonzero `v ≡ u_i − u_j` with `Q[v] <= max_norm_sq`.
pub fn periodic_difference_shells<T: Real>(p: &PeriodicForm<T>, max_norm_sq: T) -> Result<Vec<CosetPairShells<T>>> {
    if !(max_norm_sq > T::zero()) {
        return Err(Error::DomainError("max_norm_sq must be positive".into()));
    }
    let m = p.m();
    let u = p.translations();
    let mut out = Vec::with_capacity(m * m);
    for i in 0..m {
        for j in 0..m {
            let offset: Vec<T> = u[i].iter().zip(&u[j]).map(|(a, b)| *a - *b).collect();
            let points = enumerate_coset(p.q(), &offset, max_norm_sq, EnumOptions::default())?;
            let shells = match (p.q().exact(), p.exact_translations()) {
                (Some(g), Some(ue)) => {
                    let off: Vec<Rational> = ue[i].iter().zip(&ue[j]).map(|(a, b)| a - b).collect();
                    let lcm = off.iter().fold(num_bigint::BigInt::from(1), |acc, r| acc.lcm(r.denom()));
                    let den = lcm.to_i128().ok_or(Error::Overflow)?;
                    let scaled_off: Vec<i128> =
                        off.iter().map(|r| (r.numer() * (&lcm / r.denom())).to_i128().ok_or(Error::Overflow)).collect::<Result<_>>()?;
                    let mut groups: BTreeMap<i128, Vec<Vec<i64>>> = BTreeMap::new();
                    for (z, _) in points {
                        let v: Vec<i128> = z
                            .iter()
                            .zip(&scaled_off)
                            .map(|(&zi, &o)| (zi as i128).checked_mul(den).and_then(|a| a.checked_add(o)).ok_or(Error::Overflow))
                            .collect::<Result<_>>()?;
                        groups.entry(g.scaled_norm(&v)?).or_default().push(z);
                    }
                    let scale = g.denominator().checked_mul(den.checked_mul(den).ok_or(Error::Overflow)?).ok_or(Error::Overflow)?;
                    groups
                        .into_iter()
                        .map(|(key, mut vectors)| {
                            vectors.sort();
                            let exact = Rational::from_ratio(key, scale);
                            CosetShell { alpha: T::from_rational(&exact), exact_alpha: Some(exact), vectors }
                        })
                        .collect()
                }
                _ => group_float(points)
                    .into_iter()
                    .map(|s| CosetShell { alpha: s.alpha, exact_alpha: None, vectors: s.vectors })
                    .collect(),
            };
            out.push(CosetPairShells { i, j, offset, shells });
        }
    }
    Ok(out)
}

/// Number of `(x_1..x_d) ∈ Z^d` with `Σ x_i² = n`, by the theta-series recursion
/// `r_d(n) = Σ_k r_1(k²) r_{d-1}(n - k²)`.
pub fn sum_of_squares_count(d: usize, n: u64) -> u64 {
    if d == 0 {
        return u64::from(n == 0);
    }
    let mut total = 0;
    let mut k: i64 = 0;
    while (k * k) as u64 <= n {
        let ways = if k == 0 { 1 } else { 2 };
        total += ways * sum_of_squares_count(d - 1, n - (k * k) as u64);
        k += 1;
    }
    total
}

impl<T: Real> Shell<T> {
    /// Integer key of the exact norm, if available.
    pub fn exact_key(&self) -> Option<(i128, i128)> {
        self.exact_alpha.as_ref().and_then(|r| Some((r.numer().to_i128()?, r.denom().to_i128()?)))
    }
}

/// `true` when two norms agree within the shell grouping tolerance.
pub fn same_norm<T: Real>(a: T, b: T) -> bool {
    (a - b).abs() <= T::lit(SHELL_TOL) * a.abs().max(b.abs())
}
