//! Gradient and Hessian of the energy on the space of periodic forms.
//!
//! Tangent coordinates are Euclidean: a symmetric traceless `H` perturbs the
//! Gram matrix as `Rᵗ exp(H) R`, and coset `l` (for `l >= 1`) moves by the
//! Euclidean vector `t_l`. The first `nh = d(d+1)/2 − 1` coordinates expand `H`
//! in an orthonormal basis of traceless symmetric matrices, the remaining
//! `(m−1)d` are the entries of `t_1..t_{m−1}`. In these coordinates the metric
//! `Tr(H H') + Σ t_lᵗ t'_l` is the identity.
//!
//! All Hessians are true second derivatives. The paper's quadratic forms are
//! second-order Taylor terms, so they are one half of the matrices built here.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::designs::check_4design;
use crate::energy::{energy_with, jet, EnergyOptions, Jet, Potential, TailTarget};
use crate::energy::kernel::exp_tail;
use crate::enumeration::{
    detect_lattice, enumerate_shells, fold_coset, min_distance_sq, min_norm, EnumOptions, PermutationTable, DEFAULT_BUDGET,
};
use crate::error::{Error, Result};
use crate::forms::{retract, PeriodicForm, QuadForm, TangentVec};
use crate::linalg::Mat;
use crate::scalar::Real;

/// Tail target used by finite differences, far below the differencing noise.
pub const FD_RELATIVE_TAIL: f64 = 1e-15;

/// Default finite-difference step relative to `sqrt(min distance²)`.
pub const FD_STEP: f64 = 1e-5;

/// Default step for second differences, where rounding is amplified by `1/h²`.
pub const FD_STEP_HESSIAN: f64 = 1e-3;

/// The fixed ordered tangent basis.
#[derive(Debug, Clone)]
pub struct TangentBasis<T> {
    pub dim: usize,
    pub m: usize,
    h_basis: Vec<Mat<T>>,
    labels: Vec<String>,
}

impl<T: Real> TangentBasis<T> {
    pub fn new(dim: usize, m: usize) -> Self {
        let mut h_basis = Vec::new();
        let mut labels = Vec::new();
        // Helmert contrasts: orthonormal and traceless.
        for k in 1..dim {
            let kf = T::count(k);
            let norm = (kf * (kf + T::one())).sqrt();
            let mut b = Mat::zeros(dim, dim);
            for i in 0..k {
                b[(i, i)] = T::one() / norm;
            }
            b[(k, k)] = -kf / norm;
            h_basis.push(b);
            labels.push(format!("h:diag{k}"));
        }
        let r = T::one() / T::lit(2.0).sqrt();
        for i in 0..dim {
            for j in i + 1..dim {
                let mut b = Mat::zeros(dim, dim);
                b[(i, j)] = r;
                b[(j, i)] = r;
                h_basis.push(b);
                labels.push(format!("h:sym({i},{j})"));
            }
        }
        for l in 1..m {
            for e in 0..dim {
                labels.push(format!("t{l}[{e}]"));
            }
        }
        TangentBasis { dim, m, h_basis, labels }
    }

    pub fn nh(&self) -> usize {
        self.h_basis.len()
    }

    pub fn len(&self) -> usize {
        self.nh() + (self.m - 1) * self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// The `a`-th traceless basis matrix (Euclidean coordinates).
    pub fn h_matrix(&self, a: usize) -> &Mat<T> {
        &self.h_basis[a]
    }

    /// `Σ ξ_a B_a` over the first `nh` coordinates.
    pub fn h_of(&self, xi: &[T]) -> Mat<T> {
        let d = self.dim;
        let mut h = Mat::zeros(d, d);
        for (b, x) in self.h_basis.iter().zip(xi) {
            if *x != T::zero() {
                h = h.add(&b.scale(x));
            }
        }
        h
    }

    /// Coordinates `⟨H, B_a⟩` of a symmetric matrix; the trace part is dropped.
    pub fn h_coordinates(&self, h: &Mat<T>) -> Vec<T> {
        self.h_basis.iter().map(|b| b.trace_product(h)).collect()
    }

    /// The tangent vector at `p` with coordinates `xi`.
    pub fn to_tangent(&self, p: &PeriodicForm<T>, xi: &[T]) -> Result<TangentVec<T>> {
        if xi.len() != self.len() || p.dim() != self.dim || p.m() != self.m {
            return Err(Error::DimensionMismatch { expected: self.len(), found: xi.len() });
        }
        let r = p.q().chol();
        let rinv = p.q().chol_inv();
        let h = self.h_of(&xi[..self.nh()]);
        let k = r.transpose().matmul(&h).matmul(r).symmetrized();
        let mut t = vec![vec![T::zero(); self.dim]; self.m];
        for l in 1..self.m {
            let off = self.nh() + (l - 1) * self.dim;
            t[l] = rinv.matvec(&xi[off..off + self.dim]);
        }
        Ok(TangentVec { h: k, t })
    }
}

/// Gradient and (optionally) Hessian in tangent coordinates.
#[derive(Debug, Clone, Serialize)]
pub struct GradHess<T> {
    pub value: T,
    pub gradient: Vec<T>,
    /// Row-major `n × n` with `n = gradient.len()`.
    pub hessian: Option<Vec<T>>,
    pub basis: Vec<String>,
    pub dim: usize,
    pub m: usize,
    pub nh: usize,
    pub tail_bound: f64,
    /// Bound on the truncation error of each gradient and Hessian entry.
    pub derivative_tail_bound: f64,
}

impl<T: Real> GradHess<T> {
    pub fn len(&self) -> usize {
        self.gradient.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gradient.is_empty()
    }

    pub fn gradient_h(&self) -> &[T] {
        &self.gradient[..self.nh]
    }

    pub fn gradient_t(&self) -> &[T] {
        &self.gradient[self.nh..]
    }

    pub fn gradient_norm(&self) -> T {
        self.gradient.iter().fold(T::zero(), |s, g| s + *g * *g).sqrt()
    }

    pub fn hessian_matrix(&self) -> Option<Mat<T>> {
        self.hessian.as_ref().map(|h| Mat::from_data(self.len(), self.len(), h.clone()))
    }

    fn block(&self, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> Option<Mat<T>> {
        let n = self.len();
        let h = self.hessian.as_ref()?;
        let c0 = cols.start;
        let r0 = rows.start;
        Some(Mat::from_fn(rows.len(), cols.len(), |i, j| h[(r0 + i) * n + c0 + j]))
    }

    pub fn h_block(&self) -> Option<Mat<T>> {
        self.block(0..self.nh, 0..self.nh)
    }

    pub fn t_block(&self) -> Option<Mat<T>> {
        self.block(self.nh..self.len(), self.nh..self.len())
    }

    /// Rows are `H` coordinates, columns `t` coordinates.
    pub fn cross_block(&self) -> Option<Mat<T>> {
        self.block(0..self.nh, self.nh..self.len())
    }

    pub fn cross_block_max(&self) -> Option<T> {
        self.cross_block().map(|b| b.as_slice().iter().fold(T::zero(), |a, v| a.max(v.abs())))
    }

    pub fn asymmetry(&self) -> Option<T> {
        self.hessian_matrix().map(|h| h.asymmetry())
    }

    /// Ascending eigenvalues of the Hessian.
    pub fn eigenvalues(&self) -> Option<Vec<T>> {
        let mut ev = self.hessian_matrix()?.symmetrized().symmetric_eigenvalues();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        Some(ev)
    }

    pub fn min_eigenvalue(&self) -> Option<T> {
        self.eigenvalues().and_then(|e| e.first().copied())
    }
}

fn t4_contract<T: Real>(t4: &[T], d: usize, a: &Mat<T>, b: &Mat<T>) -> T {
    let mut acc = T::zero();
    for i in 0..d {
        for j in 0..d {
            let aij = a[(i, j)];
            if aij == T::zero() {
                continue;
            }
            let base = (i * d + j) * d * d;
            for k in 0..d {
                for l in 0..d {
                    acc = acc + aij * t4[base + k * d + l] * b[(k, l)];
                }
            }
        }
    }
    acc
}

fn as_mat<T: Real>(v: &[T], d: usize) -> Mat<T> {
    Mat::from_data(d, d, v.to_vec())
}

/// `s_l(i, j) = [i == l] − [j == l]`.
fn sign(l: usize, i: usize, j: usize) -> i32 {
    i32::from(i == l) - i32::from(j == l)
}

fn assemble<T: Real>(basis: &TangentBasis<T>, j: &Jet<T>, with_hessian: bool) -> GradHess<T> {
    let mo = &j.moments;
    let d = mo.dim;
    let m = mo.m;
    let nh = basis.nh();
    let n = basis.len();
    let grad_h = as_mat(&mo.grad_h, d);
    let mut gradient = basis.h_coordinates(&grad_h);
    for l in 1..m {
        for e in 0..d {
            let mut g = T::zero();
            for i in 0..m {
                for jj in 0..m {
                    let s = sign(l, i, jj);
                    if i != jj && s != 0 {
                        g = g + T::from_int(s as i128) * mo.pairs[i * m + jj].w[e];
                    }
                }
            }
            gradient.push(g);
        }
    }
    let hessian = with_hessian.then(|| {
        let mut h = vec![T::zero(); n * n];
        let m2 = as_mat(&mo.m2, d);
        for a in 0..nh {
            let ba = basis.h_matrix(a);
            let bam2 = ba.matmul(&m2);
            for b in a..nh {
                let bb = basis.h_matrix(b);
                let v = t4_contract(&mo.t4, d, ba, bb) + bam2.trace_product(bb);
                h[a * n + b] = v;
                h[b * n + a] = v;
            }
        }
        for i in 0..m {
            for jj in 0..m {
                if i == jj {
                    continue;
                }
                let pm = &mo.pairs[i * m + jj];
                // Mixed block: t3(B_a)_e + (B_a u)_e.
                for a in 0..nh {
                    let ba = basis.h_matrix(a);
                    let bu = ba.matvec(&pm.u);
                    for e in 0..d {
                        let mut v = bu[e];
                        for f in 0..d {
                            for g in 0..d {
                                v = v + pm.t3[(e * d + f) * d + g] * ba[(f, g)];
                            }
                        }
                        for l in 1..m {
                            let s = sign(l, i, jj);
                            if s != 0 {
                                let col = nh + (l - 1) * d + e;
                                let add = T::from_int(s as i128) * v;
                                h[a * n + col] = h[a * n + col] + add;
                                h[col * n + a] = h[col * n + a] + add;
                            }
                        }
                    }
                }
                for l in 1..m {
                    let sl = sign(l, i, jj);
                    if sl == 0 {
                        continue;
                    }
                    for l2 in 1..m {
                        let s2 = sign(l2, i, jj);
                        if s2 == 0 {
                            continue;
                        }
                        let s = T::from_int((sl * s2) as i128);
                        for e in 0..d {
                            for f in 0..d {
                                let r = nh + (l - 1) * d + e;
                                let c = nh + (l2 - 1) * d + f;
                                h[r * n + c] = h[r * n + c] + s * pm.wmat[e * d + f];
                            }
                        }
                    }
                }
            }
        }
        h
    });
    let scale = (d * d) as f64;
    GradHess {
        value: mo.value,
        gradient,
        hessian,
        basis: basis.labels().to_vec(),
        dim: d,
        m,
        nh,
        tail_bound: j.tail_bound,
        derivative_tail_bound: scale * j.derivative_tail_bound,
    }
}

/// Analytic gradient at any periodic form.
pub fn gradient_general<T: Real>(p: &PeriodicForm<T>, pot: Potential, opts: &EnergyOptions) -> Result<GradHess<T>> {
    let j = jet(p, pot, 1, opts)?;
    Ok(assemble(&TangentBasis::new(p.dim(), p.m()), &j, false))
}

/// Analytic gradient and Hessian at any periodic form, by differentiating the
/// coset sums term by term.
pub fn hessian_general<T: Real>(p: &PeriodicForm<T>, pot: Potential, opts: &EnergyOptions) -> Result<GradHess<T>> {
    let j = jet(p, pot, 2, opts)?;
    Ok(assemble(&TangentBasis::new(p.dim(), p.m()), &j, true))
}

/// Gradient of the energy of a lattice with respect to `H`.
#[derive(Debug, Clone, Serialize)]
pub struct LatticeGradient<T> {
    /// Traceless part of `Σ f'(‖w‖²) w wᵗ`, Euclidean coordinates, row-major.
    pub matrix: Vec<T>,
    /// Coordinates in the traceless basis.
    pub coordinates: Vec<T>,
    pub norm: T,
    /// `Tr(Σ f'(‖w‖²) w wᵗ) / d`, the removed multiple of the identity.
    pub trace_part: T,
    pub tail_bound: f64,
}

/// `Σ_{w != 0} f'(‖w‖²) w wᵗ`, projected to trace zero; the form is read as a lattice.
pub fn gradient_at_lattice<T: Real>(q: &QuadForm<T>, pot: Potential, opts: &EnergyOptions) -> Result<LatticeGradient<T>> {
    let d = q.dim();
    let j = jet(&PeriodicForm::lattice(q.clone()), pot, 1, opts)?;
    let g = as_mat(&j.moments.grad_h, d);
    let trace_part = g.trace() / T::count(d);
    let proj = g.sub(&Mat::identity(d).scale(&trace_part));
    let coordinates = TangentBasis::new(d, 1).h_coordinates(&proj);
    let norm = proj.frobenius_norm();
    Ok(LatticeGradient {
        matrix: proj.as_slice().to_vec(),
        coordinates,
        norm,
        trace_part,
        tail_bound: (d * d) as f64 * j.derivative_tail_bound,
    })
}

/// Rotation taking the Euclidean frame of `Λ0`'s Hermite basis to the frame of `p`.
fn frame_rotation<T: Real>(p: &PeriodicForm<T>, lam0: &QuadForm<T>) -> Result<Mat<T>> {
    let b = p.generated_lattice_basis()?.map(T::from_rational);
    Ok(p.q().chol().matmul(&b).matmul(lam0.chol_inv()))
}

/// The closed-form gradient and Hessian at a lattice written as `m` cosets.
///
/// The `H` block and the gradient are the lattice sums over `Λ0`. The `t` block
/// is the quadratic form in `t_i − t_{σ_k(i)}` obtained from the re-indexed
/// energy, with weight `(1/m²) Σ_w (f'(‖w‖²) I + 2 f''(‖w‖²) w wᵗ)`. The mixed
/// block is zero by construction.
pub fn hessian_at_lattice<T: Real>(p: &PeriodicForm<T>, pot: Potential, opts: &EnergyOptions) -> Result<GradHess<T>> {
    let table: PermutationTable = detect_lattice(p).into_result()?;
    let d = p.dim();
    let m = p.m();
    let lam0 = p.generated_lattice()?;
    let rot = frame_rotation(p, &lam0)?;
    let lat = PeriodicForm::lattice(lam0);
    let basis = TangentBasis::<T>::new(d, m);
    let nh = basis.nh();
    let n = basis.len();
    let j0 = jet(&lat, pot, 2, opts)?;
    let mo = &j0.moments;
    let rot_t = rot.transpose();
    let to_p = |v: &[T]| rot.matmul(&as_mat(v, d)).matmul(&rot_t).symmetrized();
    // Basis matrices seen from the frame of Λ0.
    let local: Vec<Mat<T>> = (0..nh).map(|a| rot_t.matmul(basis.h_matrix(a)).matmul(&rot)).collect();
    let mut h = vec![T::zero(); n * n];
    let m2 = as_mat(&mo.m2, d);
    for a in 0..nh {
        let am2 = local[a].matmul(&m2);
        for b in a..nh {
            let v = t4_contract(&mo.t4, d, &local[a], &local[b]) + am2.trace_product(&local[b]);
            h[a * n + b] = v;
            h[b * n + a] = v;
        }
    }
    let mut tail = j0.derivative_tail_bound;
    if m > 1 {
        // P0 = Σ f'(‖w‖²), M = Σ f''(‖w‖²) w wᵗ.
        let (p0, mm) = match pot {
            Potential::Exponential(c) => {
                let c = T::lit(c);
                (-c * (mo.value), to_p(&mo.grad_h).scale(&(-c)))
            }
            Potential::InversePower(s) => {
                let j1 = jet(&lat, Potential::inverse_power(s + 1.0)?, 1, opts)?;
                tail += s * (j1.tail_bound + j1.derivative_tail_bound);
                let s = T::lit(s);
                (-s * j1.moments.value, to_p(&j1.moments.grad_h).scale(&(-s)))
            }
        };
        let a_mat = Mat::identity(d).scale(&p0).add(&mm.scale(&T::lit(2.0)));
        let w = T::lit(2.0) / T::count(m * m);
        for i in 0..m {
            for k in 0..m {
                let jj = table.apply(k, i);
                for l in 1..m {
                    let sl = sign(l, i, jj);
                    if sl == 0 {
                        continue;
                    }
                    for l2 in 1..m {
                        let s2 = sign(l2, i, jj);
                        if s2 == 0 {
                            continue;
                        }
                        let s = w * T::from_int((sl * s2) as i128);
                        for e in 0..d {
                            for f in 0..d {
                                let r = nh + (l - 1) * d + e;
                                let c = nh + (l2 - 1) * d + f;
                                h[r * n + c] = h[r * n + c] + s * a_mat[(e, f)];
                            }
                        }
                    }
                }
            }
        }
    }
    let grad = to_p(&mo.grad_h);
    let mut gradient = basis.h_coordinates(&grad);
    gradient.extend(std::iter::repeat(T::zero()).take(n - nh));
    Ok(GradHess {
        value: mo.value,
        gradient,
        hessian: Some(h),
        basis: basis.labels().to_vec(),
        dim: d,
        m,
        nh,
        tail_bound: j0.tail_bound,
        derivative_tail_bound: (d * d) as f64 * tail,
    })
}

/// `F(y)` and `G(y)` for a lattice, with the coefficients of the split
/// `hess = y[Tr(H²)/(d(d+2)) G(y) + (2π/(d m²)) Σ_{i,k} ‖t_i − t_{σ_k(i)}‖² F(y)]`.
///
/// The coefficients are those of the displayed quadratic form, i.e. of the
/// second-order Taylor term. On the orthonormal basis the true `H` block of the
/// Hessian is `2 · lattice_coefficient · I`.
#[derive(Debug, Clone, Serialize)]
pub struct HessianSplit<T> {
    pub y: f64,
    pub d: usize,
    pub m: usize,
    #[serde(rename = "F")]
    pub f_value: T,
    #[serde(rename = "G")]
    pub g_value: T,
    pub f_tail: f64,
    pub g_tail: f64,
    /// Multiplies `Tr(H²)`: `y G / (d(d+2))`.
    pub lattice_coefficient: T,
    /// Multiplies `Σ_{i,k} ‖t_i − t_{σ_k(i)}‖²`: `2π y F / (d m²)`.
    pub translation_coefficient: T,
    /// Shells `(α, count)` checked as 4-designs, ascending.
    pub shell_data: Vec<(f64, usize)>,
    /// `F` and `G` summed over `shell_data` only.
    pub f_shells: T,
    pub g_shells: T,
    pub design_verified_up_to: f64,
}

impl<T: Real> HessianSplit<T> {
    /// The displayed quadratic form at given `Tr(H²)` and `Σ ‖t_i − t_{σ_k(i)}‖²`.
    pub fn displayed(&self, tr_h2: T, delta_sq: T) -> T {
        let d = T::count(self.d);
        let y = T::lit(self.y);
        y * (tr_h2 / (d * (d + T::lit(2.0))) * self.g_value
            + T::lit(2.0 * PI) / (d * T::count(self.m * self.m)) * delta_sq * self.f_value)
    }

    /// The same form through the stored coefficients.
    pub fn from_coefficients(&self, tr_h2: T, delta_sq: T) -> T {
        self.lattice_coefficient * tr_h2 + self.translation_coefficient * delta_sq
    }

    /// Relative disagreement of the two storage forms on a few probes.
    pub fn consistency_residual(&self) -> T {
        let probes = [(1.0, 0.0), (0.0, 1.0), (0.37, 2.5), (3.0, 0.125)];
        probes
            .iter()
            .map(|&(a, b)| {
                let (a, b) = (T::lit(a), T::lit(b));
                let x = self.displayed(a, b);
                let y = self.from_coefficients(a, b);
                (x - y).abs() / x.abs().max(y.abs()).max(T::min_positive_value())
            })
            .fold(T::zero(), |a, v| a.max(v))
    }
}

/// `(F, G)` truncated to the given shells `(α, count)`.
pub fn split_shell_sums(shells: &[(f64, usize)], d: usize, y: f64) -> (f64, f64) {
    let half = d as f64 / 2.0;
    shells.iter().fold((0.0, 0.0), |(f, g), &(a, n)| {
        let e = n as f64 * (-PI * y * a).exp();
        (f + (PI * y * a - half) * e, g + PI * a * (PI * y * a - half - 1.0) * e)
    })
}

/// `(F, G, F tail, G tail)` from the Gaussian energy jet at `c = πy`, with
/// `F = −Tr(Σ f' wwᵗ) − (d/2) E` and `G = (Σ f'' ‖w‖⁴ + (d/2+1) Tr(Σ f' wwᵗ)) / y`.
///
/// These combinations cancel badly when `y` is small; [`SplitEvaluator`] is the
/// well-conditioned route. This one serves as a cross-check at moderate `y`.
pub fn split_values_jet<T: Real>(q: &QuadForm<T>, y: f64, opts: &EnergyOptions) -> Result<(T, T, f64, f64)> {
    if !(y > 0.0 && y.is_finite()) {
        return Err(Error::DomainError(format!("y must be positive, got {y}")));
    }
    let d = q.dim();
    let j = jet(&PeriodicForm::lattice(q.clone()), Potential::exponential(PI * y)?, 2, opts)?;
    let mo = &j.moments;
    let tr = (0..d).fold(T::zero(), |s, e| s + mo.grad_h[e * d + e]);
    let mut t4ii = T::zero();
    for e in 0..d {
        for f in 0..d {
            t4ii = t4ii + mo.t4[((e * d + e) * d + f) * d + f];
        }
    }
    let half = T::lit(d as f64 / 2.0);
    let f = -tr - half * mo.value;
    let g = (t4ii + (half + T::one()) * tr) / T::lit(y);
    let df = d as f64;
    let f_tail = df * j.derivative_tail_bound + df / 2.0 * j.tail_bound;
    let g_tail = (df * df + (df / 2.0 + 1.0) * df) * j.derivative_tail_bound / y;
    Ok((f, g, f_tail, g_tail))
}

/// Which sum an [`SplitValue`] came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SplitRoute {
    /// Shells of the lattice: `F = Σ (πyα − d/2) N e^{−πyα}`.
    Direct,
    /// Shells of the dual through the theta transformation:
    /// `F = d/2 − V⁻¹ y^{−d/2−1} Σ π‖k‖² e^{−π‖k‖²/y}`.
    Dual,
}

/// `F(y)`, `G(y)` with rigorous truncation bounds.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SplitValue {
    pub y: f64,
    #[serde(rename = "F")]
    pub f: f64,
    #[serde(rename = "G")]
    pub g: f64,
    /// `F` minus its `y`-independent part (`d/2` on the dual route).
    pub f_varying: f64,
    pub f_tail: f64,
    pub g_tail: f64,
    pub route: SplitRoute,
    pub cutoff_norm_sq: f64,
    pub terms: usize,
}

impl SplitValue {
    /// `F(self.y) > F(next.y)`, compared without the constant `d/2` when both
    /// values come from the dual route. At small `y` the varying part is far
    /// below the rounding unit of `d/2`.
    pub fn f_exceeds(&self, next: &SplitValue) -> bool {
        if self.route == next.route {
            self.f_varying > next.f_varying
        } else {
            self.f > next.f
        }
    }
}

/// Evaluates `F` and `G` of one lattice at many `y`.
///
/// The route is the one whose terms all share a sign, so nothing cancels:
/// the direct shells when `y² min Λ0 >= min Λ0*`, the dual shells otherwise.
#[derive(Debug, Clone)]
pub struct SplitEvaluator<T> {
    q: QuadForm<T>,
    dual: QuadForm<T>,
    d: usize,
    covolume: f64,
    min: f64,
    min_dual: f64,
}

/// Relative accuracy targeted for `F` and `G`.
pub const SPLIT_RELATIVE_TAIL: f64 = 1e-15;

impl<T: Real> SplitEvaluator<T> {
    pub fn new(q: &QuadForm<T>) -> Result<Self> {
        let dual = q.dual()?;
        Ok(SplitEvaluator {
            d: q.dim(),
            covolume: q.covolume().as_f64(),
            min: min_norm(q).as_f64(),
            min_dual: min_norm(&dual).as_f64(),
            q: q.clone(),
            dual,
        })
    }

    pub fn min_norm(&self) -> f64 {
        self.min
    }

    /// `(F tail, G tail)` beyond `r2` on the given route.
    fn tails(&self, route: SplitRoute, y: f64, r2: f64) -> (f64, f64) {
        let d = self.d;
        let half = d as f64 / 2.0;
        match route {
            SplitRoute::Direct => {
                let rho = self.min.sqrt();
                let b = PI * y;
                (
                    exp_tail(d, rho, r2, b + half, b, 1.0),
                    exp_tail(d, rho, r2, PI * (b + half + 1.0), b, 2.0),
                )
            }
            SplitRoute::Dual => {
                let rho = self.min_dual.sqrt();
                let b = PI / y;
                let pre = y.powf(-half - 1.0) / self.covolume;
                (
                    exp_tail(d, rho, r2, pre * PI, b, 1.0),
                    exp_tail(d, rho, r2, pre / (y * y) * PI * (PI + (half + 1.0) * y), b, 2.0),
                )
            }
        }
    }

    /// Magnitudes of the first-shell terms, which set the accuracy scale.
    fn leading(&self, route: SplitRoute, y: f64) -> (f64, f64) {
        let half = self.d as f64 / 2.0;
        match route {
            SplitRoute::Direct => {
                let a = self.min;
                let e = (-PI * y * a).exp();
                ((PI * y * a + half) * e, PI * a * (PI * y * a + half + 1.0) * e)
            }
            SplitRoute::Dual => {
                let n = self.min_dual;
                let pre = y.powf(-half - 1.0) / self.covolume;
                let e = (-PI * n / y).exp();
                (half.max(pre * PI * n * e), pre / (y * y) * PI * n * (PI * n + (half + 1.0) * y) * e)
            }
        }
    }

    pub fn route_for(&self, y: f64) -> SplitRoute {
        if y * y * self.min >= self.min_dual {
            SplitRoute::Direct
        } else {
            SplitRoute::Dual
        }
    }

    pub fn eval(&self, y: f64) -> Result<SplitValue> {
        self.eval_route(y, self.route_for(y))
    }

    pub fn eval_route(&self, y: f64, route: SplitRoute) -> Result<SplitValue> {
        if !(y > 0.0 && y.is_finite()) {
            return Err(Error::DomainError(format!("y must be positive, got {y}")));
        }
        let (lf, lg) = self.leading(route, y);
        let (tf, tg) = (SPLIT_RELATIVE_TAIL * lf, SPLIT_RELATIVE_TAIL * lg);
        let ok = |r2: f64| {
            let (a, b) = self.tails(route, y, r2);
            a <= tf && b <= tg
        };
        let start = match route {
            SplitRoute::Direct => self.min,
            SplitRoute::Dual => self.min_dual,
        };
        let mut hi = start;
        let mut doublings = 0;
        while !ok(hi) {
            hi *= 2.0;
            doublings += 1;
            if doublings > 200 {
                return Err(Error::CutoffOverflow { budget: DEFAULT_BUDGET });
            }
        }
        let mut lo = if doublings == 0 { 0.0 } else { hi / 2.0 };
        while hi - lo > 0.01 * hi {
            let mid = 0.5 * (lo + hi);
            if ok(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let form = match route {
            SplitRoute::Direct => &self.q,
            SplitRoute::Dual => &self.dual,
        };
        let half = self.d as f64 / 2.0;
        let zero = vec![T::zero(); self.d];
        let parts = fold_coset(form, &zero, T::lit(hi), EnumOptions::default(), || (0.0f64, 0.0f64, 0usize), |acc, _, n| {
            let n = n.as_f64();
            match route {
                SplitRoute::Direct => {
                    let e = (-PI * y * n).exp();
                    acc.0 += (PI * y * n - half) * e;
                    acc.1 += PI * n * (PI * y * n - half - 1.0) * e;
                }
                SplitRoute::Dual => {
                    let e = (-PI * n / y).exp();
                    acc.0 += PI * n * e;
                    acc.1 += PI * n * (PI * n - (half + 1.0) * y) * e;
                }
            }
            acc.2 += 1;
        })?;
        let (sf, sg, terms) = parts.into_iter().fold((0.0, 0.0, 0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
        let (tf, tg) = self.tails(route, y, hi);
        let (f_varying, g) = match route {
            SplitRoute::Direct => (sf, sg),
            SplitRoute::Dual => {
                let pre = y.powf(-half - 1.0) / self.covolume;
                (-pre * sf, pre / (y * y) * sg)
            }
        };
        let offset = if route == SplitRoute::Dual { half } else { 0.0 };
        Ok(SplitValue {
            y,
            f: offset + f_varying,
            g,
            f_varying,
            f_tail: tf,
            g_tail: tg,
            route,
            cutoff_norm_sq: hi,
            terms,
        })
    }
}

/// The F/G split at a lattice whose shells up to `cutoff` are verified 4-designs.
pub fn hessian_split_design<T: Real>(q: &QuadForm<T>, y: f64, cutoff: f64, m: usize) -> Result<HessianSplit<T>> {
    if m == 0 {
        return Err(Error::DomainError("m must be positive".into()));
    }
    let d = q.dim();
    let shells = enumerate_shells(q, T::lit(cutoff))?;
    let mut shell_data = Vec::with_capacity(shells.len());
    for shell in &shells {
        let report = check_4design(shell, q)?;
        if !report.is_design {
            return Err(Error::DesignHypothesisFailed { alpha: report.alpha, t: 4, residual: report.max_residual });
        }
        shell_data.push((shell.alpha.as_f64(), shell.count()));
    }
    let v = SplitEvaluator::new(q)?.eval(y)?;
    let (f, g, f_tail, g_tail) = (T::lit(v.f), T::lit(v.g), v.f_tail, v.g_tail);
    let (fs, gs) = split_shell_sums(&shell_data, d, y);
    let df = d as f64;
    let yt = T::lit(y);
    Ok(HessianSplit {
        y,
        d,
        m,
        f_value: f,
        g_value: g,
        f_tail,
        g_tail,
        lattice_coefficient: yt * g / T::lit(df * (df + 2.0)),
        translation_coefficient: yt * T::lit(2.0 * PI / (df * (m * m) as f64)) * f,
        shell_data,
        f_shells: T::lit(fs),
        g_shells: T::lit(gs),
        design_verified_up_to: cutoff,
    })
}

/// Central differences of the energy along the tangent basis, through `retract`.
///
/// `order` 1 gives the gradient, `order` 2 also the full Hessian. `step` is in
/// tangent coordinates; `None` picks the default scaled by the minimal distance.
pub fn finite_difference<T: Real>(p: &PeriodicForm<T>, pot: Potential, order: usize, step: Option<f64>) -> Result<GradHess<T>> {
    if !(1..=2).contains(&order) {
        return Err(Error::DomainError(format!("finite-difference order must be 1 or 2, got {order}")));
    }
    let scale = min_distance_sq(p)?.as_f64().sqrt();
    // The gradient always uses the short step; second differences use the long one.
    let h1 = step.unwrap_or(FD_STEP * scale);
    let h = step.unwrap_or(FD_STEP_HESSIAN * scale);
    if !(h > 0.0 && h.is_finite() && h1 > 0.0) {
        return Err(Error::DomainError(format!("step must be positive, got {h}")));
    }
    let opts = EnergyOptions { target_tail: TailTarget::Relative(FD_RELATIVE_TAIL), ..Default::default() };
    let basis = TangentBasis::<T>::new(p.dim(), p.m());
    let n = basis.len();
    let e0 = energy_with(p, pot, &opts)?;
    let eval = |coords: &[(usize, f64)], h: f64| -> Result<T> {
        let mut xi = vec![T::zero(); n];
        for &(a, s) in coords {
            xi[a] = xi[a] + T::lit(s);
        }
        let dir = basis.to_tangent(p, &xi)?;
        Ok(energy_with(&retract(p, &dir, T::lit(h))?, pot, &opts)?.value)
    };
    let singles_at = |h: f64| -> Result<Vec<(T, T)>> {
        (0..n).into_par_iter().map(|a| Ok((eval(&[(a, 1.0)], h)?, eval(&[(a, -1.0)], h)?))).collect()
    };
    let short = singles_at(h1)?;
    let two_h = T::lit(2.0 * h1);
    let gradient: Vec<T> = short.iter().map(|(plus, minus)| (*plus - *minus) / two_h).collect();
    let second_differences = |h: f64, singles: Vec<(T, T)>| -> Result<Vec<T>> {
        let h2 = T::lit(h * h);
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
        let off: Vec<T> = pairs
            .par_iter()
            .map(|&(a, b)| {
                let pp = eval(&[(a, 1.0), (b, 1.0)], h)?;
                let pm = eval(&[(a, 1.0), (b, -1.0)], h)?;
                let mp = eval(&[(a, -1.0), (b, 1.0)], h)?;
                let mm = eval(&[(a, -1.0), (b, -1.0)], h)?;
                Ok((pp - pm - mp + mm) / (T::lit(4.0) * h2))
            })
            .collect::<Result<_>>()?;
        let mut hm = vec![T::zero(); n * n];
        for (a, (plus, minus)) in singles.iter().enumerate() {
            hm[a * n + a] = (*plus - T::lit(2.0) * e0.value + *minus) / h2;
        }
        for (&(a, b), v) in pairs.iter().zip(off) {
            hm[a * n + b] = v;
            hm[b * n + a] = v;
        }
        Ok(hm)
    };
    // One Richardson step on the second differences: O(h⁴) instead of O(h²).
    let hessian = if order == 2 {
        let singles = if h == h1 { short.clone() } else { singles_at(h)? };
        let coarse = second_differences(h, singles)?;
        let fine = second_differences(h / 2.0, singles_at(h / 2.0)?)?;
        Some(fine.iter().zip(&coarse).map(|(f, c)| (T::lit(4.0) * *f - *c) / T::lit(3.0)).collect())
    } else {
        None
    };
    Ok(GradHess {
        value: e0.value,
        gradient,
        hessian,
        basis: basis.labels().to_vec(),
        dim: p.dim(),
        m: p.m(),
        nh: basis.nh(),
        tail_bound: e0.tail_bound,
        derivative_tail_bound: e0.tail_bound / h1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::RoutePolicy;
    use crate::forms::inner_product;

    fn q(rows: &[Vec<i64>]) -> QuadForm<f64> {
        QuadForm::from_integer_rows(rows).unwrap()
    }

    fn a2() -> QuadForm<f64> {
        q(&[vec![2, 1], vec![1, 2]])
    }

    fn d4() -> QuadForm<f64> {
        q(&[vec![2, -1, 0, 0], vec![-1, 2, -1, -1], vec![0, -1, 2, 0], vec![0, -1, 0, 2]])
    }

    #[test]
    fn basis_is_orthonormal_and_traceless() {
        let b = TangentBasis::<f64>::new(4, 3);
        assert_eq!(b.nh(), 9);
        assert_eq!(b.len(), 17);
        for i in 0..b.nh() {
            assert!(b.h_matrix(i).trace().abs() < 1e-15);
            for j in 0..b.nh() {
                let ip = b.h_matrix(i).trace_product(b.h_matrix(j));
                assert!((ip - f64::from(u8::from(i == j))).abs() < 1e-15);
            }
        }
        // The Euclidean coordinates are orthonormal for the paper metric.
        let p = PeriodicForm::sublattice_decomposition(&d4(), 3, 2, &[1, 2]).unwrap();
        let x = b.to_tangent(&p, &(0..17).map(|i| (i as f64 * 0.37).sin()).collect::<Vec<_>>()).unwrap();
        x.validate(&p).unwrap();
        let hh = inner_product(&x, &x, p.q()).unwrap() - x.t.iter().map(|t| crate::linalg::dot(t, t)).sum::<f64>();
        let xi2: f64 = (0..9).map(|i| (i as f64 * 0.37).sin().powi(2)).sum();
        assert!((hh - xi2).abs() < 1e-12);
    }

    #[test]
    fn lattice_gradient_vanishes_on_designs() {
        let g = gradient_at_lattice(&a2(), Potential::Exponential(1.0), &EnergyOptions::default()).unwrap();
        assert!(g.norm < 1e-12, "{}", g.norm);
        let g = gradient_at_lattice(&q(&[vec![1, 0], vec![0, 4]]), Potential::Exponential(1.0), &EnergyOptions::default()).unwrap();
        assert!(g.norm > 1e-3);
        // Stretching the long axis raises the energy less than the short one lowers it:
        // the gradient along diag(1,-1)/√2 (short axis up) is negative.
        assert!(g.coordinates[0] < 0.0, "{:?}", g.coordinates);
    }

    #[test]
    fn general_gradient_matches_differences() {
        let base = q(&[vec![3, 1, 0], vec![1, 2, 0], vec![0, 0, 2]]);
        let p = PeriodicForm::new(base, vec![vec![0.0; 3], vec![0.4, 0.1, 0.55], vec![0.8, 0.5, 0.2]]).unwrap();
        for pot in [Potential::Exponential(1.3), Potential::InversePower(2.5)] {
            let opts = EnergyOptions { target_tail: TailTarget::Relative(1e-16), ..Default::default() };
            let g = hessian_general(&p, pot, &opts).unwrap();
            let fd = finite_difference(&p, pot, 2, None).unwrap();
            let scale = g.gradient.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            for (a, b) in g.gradient.iter().zip(&fd.gradient) {
                assert!((a - b).abs() < 1e-6 * scale, "{pot}: {a} vs {b}");
            }
            let ha = g.hessian.as_ref().unwrap();
            let hf = fd.hessian.as_ref().unwrap();
            let hs = ha.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let err = ha.iter().zip(hf).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
            assert!(err < 1e-5 * hs, "{pot}: Hessian error {err:e} of {hs:e}");
        }
    }

    #[test]
    fn lattice_derivatives_at_a_decomposed_lattice() {
        let p = PeriodicForm::sublattice_decomposition(&a2(), 3, 1, &[1]).unwrap();
        let pot = Potential::Exponential(PI);
        let g = hessian_general(&p, pot, &EnergyOptions::default()).unwrap();
        assert!(g.gradient_norm() < 1e-10);
        assert!(g.cross_block_max().unwrap() < 1e-10);
        let closed = hessian_at_lattice(&p, pot, &EnergyOptions::default()).unwrap();
        assert_eq!(closed.cross_block_max().unwrap(), 0.0);
        let hg = g.h_block().unwrap();
        let hc = closed.h_block().unwrap();
        assert!(hg.sub(&hc).max_abs() < 1e-10 * hg.max_abs(), "{hg:?} vs {hc:?}");
        assert!((closed.value - g.value).abs() < 1e-12);
        assert!(closed.gradient_norm() < 1e-10);
    }

    #[test]
    fn split_matches_hessian_block_and_derivative() {
        let q = d4();
        let y = 1.0;
        let split = hessian_split_design(&q, y, 6.0, 2).unwrap();
        assert!(split.consistency_residual() < 1e-12);
        assert!(split.f_value > 0.0 && split.g_value > 0.0);
        // G = −F'.
        let e = 1e-4;
        let ev = SplitEvaluator::new(&q).unwrap();
        let dfdy = (ev.eval(y + e).unwrap().f_varying - ev.eval(y - e).unwrap().f_varying) / (2.0 * e);
        assert!((split.g_value + dfdy).abs() < 1e-6 * split.g_value.abs());
        // Both routes and the energy jet agree where all are well conditioned.
        let (fj, gj, _, _) = split_values_jet::<f64>(&q, y, &EnergyOptions::default()).unwrap();
        for route in [SplitRoute::Direct, SplitRoute::Dual] {
            let v = ev.eval_route(y, route).unwrap();
            assert!((v.f - fj).abs() < 1e-10 * fj.abs() && (v.g - gj).abs() < 1e-10 * gj.abs(), "{route:?}");
        }
        // True H block = 2 · lattice coefficient · I.
        let h = hessian_general(&PeriodicForm::lattice(q.clone()), Potential::Exponential(PI * y), &EnergyOptions::default()).unwrap();
        let hb = h.h_block().unwrap();
        let want = 2.0 * split.lattice_coefficient;
        assert!(hb.sub(&Mat::identity(9).scale(&want)).max_abs() < 1e-8 * want);
        let z2 = q_z2();
        assert!(matches!(hessian_split_design(&z2, 1.0, 2.0, 1), Err(Error::DesignHypothesisFailed { .. })));
    }

    fn q_z2() -> QuadForm<f64> {
        q(&[vec![1, 0], vec![0, 1]])
    }

    #[test]
    fn translation_gradient_points_back() {
        let p = PeriodicForm::new(q_z2(), vec![vec![0.0, 0.0], vec![0.51, 0.0]]).unwrap();
        let g = gradient_general(&p, Potential::Exponential(1.0), &EnergyOptions::default()).unwrap();
        // Only t_1 moves, and it is pulled back toward 1/2.
        assert!(g.gradient_t()[0] > 0.0);
        let direct = EnergyOptions::default().with_route(RoutePolicy::Direct);
        let g2 = gradient_general(&p, Potential::Exponential(1.0), &direct).unwrap();
        assert!((g.gradient_t()[0] - g2.gradient_t()[0]).abs() < 1e-10);
    }
}
