//! Spherical design tests for lattice shells.
//!
//! Exact forms are checked in lattice coordinates with integer moment sums, so
//! a true design has residual exactly zero. Floating forms are checked in
//! Euclidean coordinates with a relative tolerance.

use num_traits::{Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::enumeration::{enumerate_shells, Shell};
use crate::error::{Error, Result};
use crate::forms::QuadForm;
use crate::linalg::Mat;
use crate::scalar::{format_rational, Field, Rational, Real};

/// Relative tolerance on the floating path.
pub const DESIGN_TOL: f64 = 1e-9;

/// Random directions used by the generic even-`t` test.
pub const RANDOM_DIRECTIONS: usize = 50;

const DIRECTION_SEED: u64 = 0x5eed_d1e5;

#[derive(Debug, Clone, Serialize)]
pub struct DesignReport {
    pub alpha: f64,
    pub exact_alpha: Option<String>,
    pub count: usize,
    pub t_checked: u32,
    pub is_design: bool,
    pub max_residual: f64,
    pub c_t: Option<f64>,
    pub exact: bool,
    /// `false` when the verdict rests on sampled directions only.
    pub certifying: bool,
}

fn precheck<T: Real>(shell: &Shell<T>, q: &QuadForm<T>) -> Result<()> {
    if shell.vectors.is_empty() {
        return Err(Error::EmptyShell);
    }
    if let Some(bad) = shell.vectors.iter().find(|v| v.len() != q.dim()) {
        return Err(Error::DimensionMismatch { expected: q.dim(), found: bad.len() });
    }
    if !shell.is_antipodal() {
        return Err(Error::NotAntipodal);
    }
    Ok(())
}

fn exact_alpha<T: Real>(shell: &Shell<T>) -> Option<String> {
    shell.exact_alpha.as_ref().map(format_rational)
}

fn wide(v: &[i64]) -> Vec<i128> {
    v.iter().map(|&x| x as i128).collect()
}

fn checked_add(a: i128, b: i128) -> Result<i128> {
    a.checked_add(b).ok_or(Error::Overflow)
}

fn checked_mul(a: i128, b: i128) -> Result<i128> {
    a.checked_mul(b).ok_or(Error::Overflow)
}

fn rational_residual(diff: &Rational, scale: &Rational) -> f64 {
    if diff.is_zero() {
        0.0
    } else if scale.is_zero() {
        f64::INFINITY
    } else {
        (diff.abs() / scale.abs()).to_f64_lossy()
    }
}

/// `Σ wwᵗ = (α·count/d) Id` in Euclidean coordinates.
pub fn check_2design<T: Real>(shell: &Shell<T>, q: &QuadForm<T>) -> Result<DesignReport> {
    precheck(shell, q)?;
    let d = q.dim();
    let count = shell.count();
    let c2 = shell.alpha * T::count(count) / T::count(d);
    match (q.exact_gram(), &shell.exact_alpha) {
        (Some(gram), Some(alpha)) => {
            // Σ wwᵗ · Q = c I with c = α·count/d.
            let mut moment = vec![0i128; d * d];
            for w in &shell.vectors {
                for i in 0..d {
                    for j in 0..d {
                        moment[i * d + j] = checked_add(moment[i * d + j], checked_mul(w[i] as i128, w[j] as i128)?)?;
                    }
                }
            }
            let m = Mat::from_data(d, d, moment.iter().map(|&v| Rational::from_int(v)).collect());
            let c = alpha * Rational::from_int(count as i128) / Rational::from_int(d as i128);
            let lhs = m.matmul(&gram);
            let mut worst = 0.0f64;
            for i in 0..d {
                for j in 0..d {
                    let target = if i == j { c.clone() } else { Rational::zero() };
                    worst = worst.max(rational_residual(&(&lhs[(i, j)] - &target), &c));
                }
            }
            Ok(DesignReport {
                alpha: shell.alpha.as_f64(),
                exact_alpha: exact_alpha(shell),
                count,
                t_checked: 2,
                is_design: worst == 0.0,
                max_residual: worst,
                c_t: (worst == 0.0).then(|| c.to_f64_lossy()),
                exact: true,
                certifying: true,
            })
        }
        _ => {
            let mut m = Mat::<T>::zeros(d, d);
            for w in &shell.vectors {
                let x = q.euclidean(&to_t::<T>(w));
                for i in 0..d {
                    for j in 0..d {
                        m[(i, j)] = m[(i, j)] + x[i] * x[j];
                    }
                }
            }
            let worst = m.sub(&Mat::identity(d).scale(&c2)).max_abs() / c2;
            let ok = worst.as_f64() <= DESIGN_TOL;
            Ok(DesignReport {
                alpha: shell.alpha.as_f64(),
                exact_alpha: exact_alpha(shell),
                count,
                t_checked: 2,
                is_design: ok,
                max_residual: worst.as_f64(),
                c_t: ok.then(|| c2.as_f64()),
                exact: false,
                certifying: true,
            })
        }
    }
}

fn to_t<T: Real>(w: &[i64]) -> Vec<T> {
    w.iter().map(|&v| T::from_int(v as i128)).collect()
}

/// Symmetric basis `E_ii`, `E_ij + E_ji` (i < j) as index pairs.
fn symmetric_basis(d: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(d * (d + 1) / 2);
    for i in 0..d {
        for j in i..d {
            out.push((i, j));
        }
    }
    out
}

fn basis_matrix<F: Field>(d: usize, (i, j): (usize, usize)) -> Mat<F> {
    let mut e = Mat::zeros(d, d);
    e[(i, j)] = F::one();
    e[(j, i)] = F::one();
    e
}

/// `(Σ_w H[Aw]², α²·count/(d(d+2))·((Tr H)² + 2 Tr H²))` for a Euclidean `H`.
pub fn fourth_moment<T: Real>(shell: &Shell<T>, q: &QuadForm<T>, h: &Mat<T>) -> (T, T) {
    let d = q.dim();
    let lhs = shell
        .vectors
        .iter()
        .map(|w| {
            let v = h.quad(&q.euclidean(&to_t::<T>(w)));
            v * v
        })
        .sum::<T>();
    let k = shell.alpha * shell.alpha * T::count(shell.count()) / T::count(d * (d + 2));
    let tr = h.trace();
    (lhs, k * (tr * tr + T::lit(2.0) * h.trace_product(h)))
}

/// `Σ_w H[Aw]² = α²·count/(d(d+2))·((Tr H)² + 2 Tr H²)` for all symmetric `H`.
///
/// The identity is quadratic in `H`, so it is checked in polarized form on
/// every pair of basis elements; ten random symmetric `H` are added as a
/// redundant check.
pub fn check_4design<T: Real>(shell: &Shell<T>, q: &QuadForm<T>) -> Result<DesignReport> {
    precheck(shell, q)?;
    let d = q.dim();
    let count = shell.count();
    let basis = symmetric_basis(d);
    let mut rng = ChaCha8Rng::seed_from_u64(DIRECTION_SEED);
    match (q.exact_gram(), &shell.exact_alpha) {
        (Some(gram), Some(alpha)) => {
            // Lattice coordinates: H = R⁻ᵗ E R⁻¹ gives H[Rw] = wᵗEw, Tr H = Tr(Q⁻¹E).
            let qinv = gram.inverse().ok_or_else(|| Error::InvalidForm("singular gram".into()))?;
            let k = alpha * alpha * Rational::from_int(count as i128) / Rational::from_int((d * (d + 2)) as i128);
            let mut mats: Vec<Mat<Rational>> = basis.iter().map(|&p| basis_matrix(d, p)).collect();
            for _ in 0..10 {
                mats.push(random_integer_symmetric(d, &mut rng));
            }
            // p_a(w) = wᵗ E_a w as integers.
            let int_mats: Vec<Vec<i128>> = mats
                .iter()
                .map(|m| m.as_slice().iter().map(|v| v.to_integer().to_i128().expect("small integer")).collect())
                .collect();
            let n = mats.len();
            let mut gram_moments = vec![0i128; n * n];
            for w in &shell.vectors {
                let w = wide(w);
                let mut p = Vec::with_capacity(n);
                for e in &int_mats {
                    let mut acc = 0i128;
                    for i in 0..d {
                        if w[i] == 0 {
                            continue;
                        }
                        let mut row = 0i128;
                        for j in 0..d {
                            row = checked_add(row, checked_mul(e[i * d + j], w[j])?)?;
                        }
                        acc = checked_add(acc, checked_mul(row, w[i])?)?;
                    }
                    p.push(acc);
                }
                for a in 0..n {
                    for b in a..n {
                        gram_moments[a * n + b] = checked_add(gram_moments[a * n + b], checked_mul(p[a], p[b])?)?;
                    }
                }
            }
            let qe: Vec<Mat<Rational>> = mats.iter().map(|m| qinv.matmul(m)).collect();
            let traces: Vec<Rational> = qe.iter().map(Mat::trace).collect();
            let mut worst = 0.0f64;
            for a in 0..n {
                for b in a..n {
                    let rhs = &k * (&traces[a] * &traces[b] + Rational::from_int(2) * qe[a].trace_product(&qe[b]));
                    let lhs = Rational::from_int(gram_moments[a * n + b]);
                    let scale = if rhs.is_zero() { k.clone() } else { rhs.clone() };
                    worst = worst.max(rational_residual(&(lhs - &rhs), &scale));
                }
            }
            let ok = worst == 0.0;
            Ok(DesignReport {
                alpha: shell.alpha.as_f64(),
                exact_alpha: exact_alpha(shell),
                count,
                t_checked: 4,
                is_design: ok,
                max_residual: worst,
                c_t: ok.then(|| fourth_constant(shell.alpha.as_f64(), count, d)),
                exact: true,
                certifying: true,
            })
        }
        _ => {
            let mut mats: Vec<Mat<T>> = basis.iter().map(|&p| basis_matrix(d, p)).collect();
            for _ in 0..10 {
                mats.push(random_integer_symmetric::<Rational>(d, &mut rng).map(T::from_rational));
            }
            let n = mats.len();
            let xs: Vec<Vec<T>> = shell.vectors.iter().map(|w| q.euclidean(&to_t::<T>(w))).collect();
            let p: Vec<Vec<T>> = xs.iter().map(|x| mats.iter().map(|m| m.quad(x)).collect()).collect();
            let k = shell.alpha * shell.alpha * T::count(count) / T::count(d * (d + 2));
            let mut worst = T::zero();
            let mut entries = Vec::new();
            for a in 0..n {
                for b in a..n {
                    let lhs: T = p.iter().map(|row| row[a] * row[b]).sum();
                    let rhs = k * (mats[a].trace() * mats[b].trace() + T::lit(2.0) * mats[a].trace_product(&mats[b]));
                    entries.push((lhs, rhs));
                }
            }
            let scale = entries.iter().fold(T::zero(), |acc, (_, r)| acc.max(r.abs()));
            for (lhs, rhs) in entries {
                worst = worst.max((lhs - rhs).abs() / scale);
            }
            let ok = worst.as_f64() <= DESIGN_TOL;
            Ok(DesignReport {
                alpha: shell.alpha.as_f64(),
                exact_alpha: exact_alpha(shell),
                count,
                t_checked: 4,
                is_design: ok,
                max_residual: worst.as_f64(),
                c_t: ok.then(|| fourth_constant(shell.alpha.as_f64(), count, d)),
                exact: false,
                certifying: true,
            })
        }
    }
}

/// Venkov constant `c_4 = 3 α² count / (d(d+2))` for a 4-design shell.
fn fourth_constant(alpha: f64, count: usize, d: usize) -> f64 {
    3.0 * alpha * alpha * count as f64 / (d * (d + 2)) as f64
}

fn random_integer_symmetric<F: Field>(d: usize, rng: &mut impl Rng) -> Mat<F> {
    let mut m = Mat::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let v = F::from_int(rng.random_range(-3i128..=3));
            m[(i, j)] = v.clone();
            m[(j, i)] = v;
        }
    }
    m
}

/// Integer directions in lattice coordinates: `e_i`, `e_i ± e_j` and random vectors.
fn integer_directions(d: usize, extra: usize) -> Vec<Vec<i64>> {
    let mut dirs = Vec::new();
    for i in 0..d {
        let mut e = vec![0; d];
        e[i] = 1;
        dirs.push(e);
    }
    for i in 0..d {
        for j in i + 1..d {
            for s in [1, -1] {
                let mut e = vec![0; d];
                e[i] = 1;
                e[j] = s;
                dirs.push(e);
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(DIRECTION_SEED);
    while dirs.len() < d + d * (d - 1) + extra {
        let z: Vec<i64> = (0..d).map(|_| rng.random_range(-4..=4)).collect();
        if z.iter().any(|&v| v != 0) {
            dirs.push(z);
        }
    }
    dirs
}

/// `Σ_w (w·y)^t / (y·y)^{t/2}` constant over many directions `y`.
///
/// Not a certificate for `t >= 6`: only finitely many directions are sampled.
pub fn check_design_even_t<T: Real>(shell: &Shell<T>, q: &QuadForm<T>, t: u32) -> Result<DesignReport> {
    if t == 0 || t % 2 == 1 {
        return Err(Error::UnsupportedParity(t));
    }
    precheck(shell, q)?;
    let d = q.dim();
    let count = shell.count();
    let dirs = integer_directions(d, RANDOM_DIRECTIONS);
    match q.exact() {
        Some(g) => {
            // y = R z: w·y = wᵗQz and y·y = Q[z], both rational.
            let den = Rational::from_int(g.denominator());
            let mut values = Vec::with_capacity(dirs.len());
            for z in &dirs {
                let z = wide(z);
                let yy = Rational::from_int(g.scaled_norm(&z)?) / &den;
                let mut sum = Rational::zero();
                for w in &shell.vectors {
                    let dot = Rational::from_int(g.scaled_bilinear(&wide(w), &z)?) / &den;
                    sum += num_traits::pow(dot, t as usize);
                }
                values.push(sum / num_traits::pow(yy, (t / 2) as usize));
            }
            let first = values[0].clone();
            let worst = values.iter().map(|v| rational_residual(&(v - &first), &first)).fold(0.0, f64::max);
            let ok = worst == 0.0;
            Ok(DesignReport {
                alpha: shell.alpha.as_f64(),
                exact_alpha: exact_alpha(shell),
                count,
                t_checked: t,
                is_design: ok,
                max_residual: worst,
                c_t: ok.then(|| first.to_f64_lossy()),
                exact: true,
                certifying: t <= 2,
            })
        }
        None => {
            let xs: Vec<Vec<T>> = shell.vectors.iter().map(|w| q.euclidean(&to_t::<T>(w))).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(DIRECTION_SEED ^ 1);
            let mut ys: Vec<Vec<T>> = dirs.iter().take(d + d * (d - 1)).map(|z| q.euclidean(&to_t::<T>(z))).collect();
            for i in 0..d {
                let mut e = vec![T::zero(); d];
                e[i] = T::one();
                ys.push(e);
            }
            for _ in 0..RANDOM_DIRECTIONS {
                let y: Vec<T> = (0..d).map(|_| T::lit(rng.sample::<f64, _>(rand_distr::StandardNormal))).collect();
                ys.push(y);
            }
            let values: Vec<T> = ys
                .iter()
                .map(|y| {
                    let yy = y.iter().map(|v| *v * *v).sum::<T>();
                    let s: T = xs.iter().map(|x| crate::linalg::dot(x, y).powi(t as i32)).sum();
                    s / yy.powi((t / 2) as i32)
                })
                .collect();
            let mean = values.iter().copied().sum::<T>() / T::count(values.len());
            let worst = values.iter().fold(T::zero(), |acc, v| acc.max((*v - mean).abs())) / mean.abs();
            let ok = worst.as_f64() <= DESIGN_TOL;
            Ok(DesignReport {
                alpha: shell.alpha.as_f64(),
                exact_alpha: exact_alpha(shell),
                count,
                t_checked: t,
                is_design: ok,
                max_residual: worst.as_f64(),
                c_t: ok.then(|| mean.as_f64()),
                exact: false,
                certifying: t <= 2,
            })
        }
    }
}

/// Dispatches to the complete test for `t = 2, 4` and the sampled one otherwise.
pub fn check_design<T: Real>(shell: &Shell<T>, q: &QuadForm<T>, t: u32) -> Result<DesignReport> {
    match t {
        2 => check_2design(shell, q),
        4 => check_4design(shell, q),
        _ => check_design_even_t(shell, q, t),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AllShellsReport {
    pub t: u32,
    pub verified_up_to: f64,
    pub all_designs: bool,
    /// Human-readable scope of the verdict.
    pub label: String,
    pub reports: Vec<DesignReport>,
}

/// One report per shell with `α <= max_norm_sq`; the verdict covers only those shells.
pub fn all_shells_design<T: Real>(q: &QuadForm<T>, t: u32, max_norm_sq: T) -> Result<AllShellsReport> {
    if t == 0 || t % 2 == 1 {
        return Err(Error::UnsupportedParity(t));
    }
    let shells = enumerate_shells(q, max_norm_sq)?;
    let reports = shells.iter().map(|s| check_design(s, q, t)).collect::<Result<Vec<_>>>()?;
    let all = reports.iter().all(|r| r.is_design);
    Ok(AllShellsReport {
        t,
        verified_up_to: max_norm_sq.as_f64(),
        all_designs: all,
        label: format!("verified up to max_norm_sq = {}", max_norm_sq),
        reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enumeration::enumerate_shells;

    fn z2() -> QuadForm<f64> {
        QuadForm::from_integer_rows(&[vec![1, 0], vec![0, 1]]).unwrap()
    }

    #[test]
    fn z2_first_shell() {
        let q = z2();
        let shell = &enumerate_shells(&q, 1.0).unwrap()[0];
        let r2 = check_2design(shell, &q).unwrap();
        assert!(r2.is_design && r2.exact);
        assert_eq!(r2.c_t, Some(2.0));
        let r4 = check_4design(shell, &q).unwrap();
        assert!(!r4.is_design);
        let (lhs, rhs) = fourth_moment(shell, &q, &Mat::diagonal(&[1.0, -1.0]));
        assert_eq!((lhs, rhs), (4.0, 2.0));
        assert!(!check_design_even_t(shell, &q, 4).unwrap().is_design);
    }

    #[test]
    fn a2_hexagon() {
        let q = QuadForm::<f64>::from_integer_rows(&[vec![2, 1], vec![1, 2]]).unwrap();
        let shell = &enumerate_shells(&q, 2.0).unwrap()[0];
        let r = check_2design(shell, &q).unwrap();
        assert!(r.is_design);
        assert_eq!(r.c_t, Some(6.0));
        assert!(check_4design(shell, &q).unwrap().is_design);
        assert!(check_design_even_t(shell, &q, 4).unwrap().is_design);
        assert!(!check_design_even_t(shell, &q, 6).unwrap().is_design);
    }

    #[test]
    fn rank_deficient_shell() {
        let q = z2();
        let shell = Shell::from_vectors(&q, vec![vec![1, 0], vec![-1, 0]]).unwrap();
        assert!(!check_2design(&shell, &q).unwrap().is_design);
        let one_sided = Shell::from_vectors(&q, vec![vec![1, 0]]).unwrap();
        assert!(matches!(check_2design(&one_sided, &q), Err(Error::NotAntipodal)));
        let empty = Shell::<f64> { alpha: 1.0, exact_alpha: None, vectors: vec![] };
        assert!(matches!(check_4design(&empty, &q), Err(Error::EmptyShell)));
        assert!(matches!(check_design_even_t(&shell, &q, 3), Err(Error::UnsupportedParity(3))));
    }

    #[test]
    fn float_path_agrees() {
        let q = QuadForm::<f64>::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let shell = &enumerate_shells(&q, 2.0).unwrap()[0];
        let r = check_4design(shell, &q).unwrap();
        assert!(r.is_design && !r.exact && r.max_residual < 1e-12);
        assert!(check_design_even_t(shell, &q, 4).unwrap().is_design);
    }

    #[test]
    fn z2_all_shells_are_2_designs() {
        let rep = all_shells_design(&z2(), 2, 4.0).unwrap();
        assert!(rep.all_designs);
        assert_eq!(rep.reports.len(), 3);
        assert!(!all_shells_design(&z2(), 4, 1.0).unwrap().all_designs);
    }
}
