//! Coset sums with first and second derivatives.
//!
//! At a periodic form the energy is perturbed as `E(H, t)`: the Gram matrix
//! becomes `Rᵗ exp(H) R` for a symmetric `H` in Euclidean coordinates, and
//! coset `l` moves by the Euclidean vector `t_l`. A direct term contributes
//! `ψ(exp(H)[x + t_i - t_j])`, a dual term contributes
//! `h(exp(-H)[k]) cos(2π kᵗ(b + t_i - t_j))`. The sums below collect the
//! Euclidean moment tensors from which any tangent basis assembles the
//! gradient and Hessian.

use std::f64::consts::PI;

use rayon::prelude::*;

use super::kernel::Kernel;
use crate::enumeration::{fold_coset, EnumOptions};
use crate::error::Result;
use crate::forms::{PeriodicForm, QuadForm};
use crate::scalar::Real;

/// Derivative data for one ordered coset pair `(i, j)`, `i != j`.
#[derive(Debug, Clone)]
pub struct PairMoments<T> {
    /// `∂E/∂t` contribution: `Σ 2ψ' x − Σ 2π h sin k`.
    pub w: Vec<T>,
    /// `∂²E/∂t∂t'` contribution: `Σ (4ψ'' xxᵗ + 2ψ' I) − Σ 4π² h cos kkᵗ`.
    pub wmat: Vec<T>,
    /// `Σ 2ψ' x`, the direct part entering the mixed block through `B x`.
    pub u: Vec<T>,
    /// Symmetric 3-tensor `Σ 2ψ'' x⊗x⊗x + Σ 2π h' sin k⊗k⊗k`, full storage.
    pub t3: Vec<T>,
}

/// Euclidean moments of the energy at a periodic form, already divided by `m`.
#[derive(Debug, Clone)]
pub struct Moments<T> {
    pub dim: usize,
    pub m: usize,
    pub order: usize,
    pub value: T,
    /// `⟨G, H⟩` is the first-order change for symmetric `H`.
    pub grad_h: Vec<T>,
    /// `Σ ψ' xxᵗ + Σ h' cos kkᵗ`, paired with `Tr(B_a B_b ·)`.
    pub m2: Vec<T>,
    /// Symmetric 4-tensor `Σ ψ'' x⊗4 + Σ h'' cos k⊗4`, full storage.
    pub t4: Vec<T>,
    /// Indexed `i * m + j`; diagonal entries stay zero.
    pub pairs: Vec<PairMoments<T>>,
    pub terms: usize,
}

impl<T: Real> Moments<T> {
    pub(crate) fn zero(dim: usize, m: usize, order: usize) -> Self {
        let d = dim;
        let sized = |o: usize, len: usize| if order >= o { vec![T::zero(); len] } else { Vec::new() };
        let pair = PairMoments { w: sized(1, d), wmat: sized(2, d * d), u: sized(2, d), t3: sized(2, d * d * d) };
        Moments {
            dim,
            m,
            order,
            value: T::zero(),
            grad_h: sized(1, d * d),
            m2: sized(2, d * d),
            t4: sized(2, d * d * d * d),
            pairs: if m > 1 { vec![pair; m * m] } else { Vec::new() },
            terms: 0,
        }
    }
}

/// Index tables for symmetric tensors stored by sorted multi-index.
struct Combos {
    c3: Vec<[usize; 3]>,
    c4: Vec<[usize; 4]>,
}

impl Combos {
    fn new(d: usize) -> Self {
        let mut c3 = Vec::new();
        let mut c4 = Vec::new();
        for p in 0..d {
            for q in p..d {
                for r in q..d {
                    c3.push([p, q, r]);
                    for s in r..d {
                        c4.push([p, q, r, s]);
                    }
                }
            }
        }
        Combos { c3, c4 }
    }
}

fn expand3<T: Real>(d: usize, combos: &Combos, packed: &[T]) -> Vec<T> {
    let mut full = vec![T::zero(); d * d * d];
    for (idx, &[p, q, r]) in combos.c3.iter().enumerate() {
        let v = packed[idx];
        for (a, b, c) in [(p, q, r), (p, r, q), (q, p, r), (q, r, p), (r, p, q), (r, q, p)] {
            full[(a * d + b) * d + c] = v;
        }
    }
    full
}

fn expand4<T: Real>(d: usize, combos: &Combos, packed: &[T]) -> Vec<T> {
    let mut full = vec![T::zero(); d * d * d * d];
    for (idx, c) in combos.c4.iter().enumerate() {
        let v = packed[idx];
        for perm in PERMS4 {
            let (a, b, e, f) = (c[perm[0]], c[perm[1]], c[perm[2]], c[perm[3]]);
            full[((a * d + b) * d + e) * d + f] = v;
        }
    }
    full
}

const PERMS4: [[usize; 4]; 24] = [
    [0, 1, 2, 3], [0, 1, 3, 2], [0, 2, 1, 3], [0, 2, 3, 1], [0, 3, 1, 2], [0, 3, 2, 1],
    [1, 0, 2, 3], [1, 0, 3, 2], [1, 2, 0, 3], [1, 2, 3, 0], [1, 3, 0, 2], [1, 3, 2, 0],
    [2, 0, 1, 3], [2, 0, 3, 1], [2, 1, 0, 3], [2, 1, 3, 0], [2, 3, 0, 1], [2, 3, 1, 0],
    [3, 0, 1, 2], [3, 0, 2, 1], [3, 1, 0, 2], [3, 1, 2, 0], [3, 2, 0, 1], [3, 2, 1, 0],
];

/// Per-branch accumulator; tensors are packed by sorted index.
struct Acc<T> {
    value: T,
    count: usize,
    grad_h: Vec<T>,
    m2: Vec<T>,
    t4: Vec<T>,
    pairs: Vec<PairAcc<T>>,
}

#[derive(Clone)]
struct PairAcc<T> {
    w: Vec<T>,
    wmat: Vec<T>,
    u: Vec<T>,
    t3: Vec<T>,
}

impl<T: Real> Acc<T> {
    fn new(d: usize, order: usize, npairs: usize, combos: &Combos) -> Self {
        let sized = |o: usize, len: usize| if order >= o { vec![T::zero(); len] } else { Vec::new() };
        let pair = PairAcc { w: sized(1, d), wmat: sized(2, d * d), u: sized(2, d), t3: sized(2, combos.c3.len()) };
        Acc {
            value: T::zero(),
            count: 0,
            grad_h: sized(1, d * d),
            m2: sized(2, d * d),
            t4: sized(2, combos.c4.len()),
            pairs: vec![pair; npairs],
        }
    }
}

fn add_outer<T: Real>(target: &mut [T], x: &[T], weight: T) {
    let d = x.len();
    for p in 0..d {
        let wp = weight * x[p];
        for q in 0..d {
            target[p * d + q] = target[p * d + q] + wp * x[q];
        }
    }
}

fn add_sym3<T: Real>(target: &mut [T], combos: &Combos, x: &[T], weight: T) {
    for (slot, &[p, q, r]) in target.iter_mut().zip(&combos.c3) {
        *slot = *slot + weight * x[p] * x[q] * x[r];
    }
}

fn add_sym4<T: Real>(target: &mut [T], combos: &Combos, x: &[T], weight: T) {
    for (slot, &[p, q, r, s]) in target.iter_mut().zip(&combos.c4) {
        *slot = *slot + weight * x[p] * x[q] * x[r] * x[s];
    }
}

/// Neumaier accumulation of branch results into the totals.
struct Reducer<T> {
    sum: Vec<T>,
    comp: Vec<T>,
}

impl<T: Real> Reducer<T> {
    fn new(len: usize) -> Self {
        Reducer { sum: vec![T::zero(); len], comp: vec![T::zero(); len] }
    }

    fn add(&mut self, values: &[T]) {
        for ((s, c), &x) in self.sum.iter_mut().zip(self.comp.iter_mut()).zip(values) {
            let t = *s + x;
            if s.abs() >= x.abs() {
                *c = *c + ((*s - t) + x);
            } else {
                *c = *c + ((x - t) + *s);
            }
            *s = t;
        }
    }

    fn finish(self) -> Vec<T> {
        self.sum.into_iter().zip(self.comp).map(|(s, c)| s + c).collect()
    }
}

/// Flattens an accumulator so branches reduce with one compensated pass.
fn flatten<T: Real>(acc: &Acc<T>) -> Vec<T> {
    let mut out = Vec::new();
    out.push(acc.value);
    out.extend_from_slice(&acc.grad_h);
    out.extend_from_slice(&acc.m2);
    out.extend_from_slice(&acc.t4);
    for p in &acc.pairs {
        out.extend_from_slice(&p.w);
        out.extend_from_slice(&p.wmat);
        out.extend_from_slice(&p.u);
        out.extend_from_slice(&p.t3);
    }
    out
}

fn unflatten<T: Real>(template: &Acc<T>, flat: &[T]) -> Acc<T> {
    let mut it = flat.iter().copied();
    let mut take = |n: usize| -> Vec<T> { (&mut it).take(n).collect() };
    let value = take(1)[0];
    let grad_h = take(template.grad_h.len());
    let m2 = take(template.m2.len());
    let t4 = take(template.t4.len());
    let pairs = template
        .pairs
        .iter()
        .map(|p| PairAcc { w: take(p.w.len()), wmat: take(p.wmat.len()), u: take(p.u.len()), t3: take(p.t3.len()) })
        .collect();
    Acc { value, count: 0, grad_h, m2, t4, pairs }
}

fn reduce<T: Real>(parts: Vec<Acc<T>>, template: Acc<T>) -> Acc<T> {
    let len = flatten(&template).len();
    let mut red = Reducer::new(len);
    let mut count = 0;
    for part in &parts {
        red.add(&flatten(part));
        count += part.count;
    }
    let mut acc = unflatten(&template, &red.finish());
    acc.count = count;
    acc
}

/// One enumerated side of a summation plan.
pub(crate) struct SideSpec {
    pub kernel: Kernel,
    pub r2: f64,
}

/// Direct sum of `ψ(‖x‖²)` over `x ∈ t_i − t_j + L`, `x != 0`, for all pairs.
pub(crate) fn direct_side<T: Real>(
    p: &PeriodicForm<T>,
    side: &SideSpec,
    order: usize,
    budget: usize,
    out: &mut Moments<T>,
) -> Result<()> {
    let q = p.q();
    let d = q.dim();
    let m = p.m();
    let combos = Combos::new(d);
    let r = q.chol();
    let u = p.translations();
    let bound = T::lit(side.r2);
    let opts = EnumOptions { budget, exclude_zero: true };
    let two = T::lit(2.0);
    let four = T::lit(4.0);
    for i in 0..m {
        for j in 0..m {
            let shift: Vec<T> = u[i].iter().zip(&u[j]).map(|(a, b)| *a - *b).collect();
            let track_pair = m > 1 && i != j;
            let parts = fold_coset(
                q,
                &shift,
                bound,
                opts,
                || Acc::new(d, order, usize::from(track_pair), &combos),
                |acc: &mut Acc<T>, z, _| {
                    let v: Vec<T> = z.iter().zip(&shift).map(|(zi, s)| T::from_int(*zi as i128) + *s).collect();
                    let x = upper_apply(r, &v);
                    let n = x.iter().map(|c| *c * *c).sum::<T>();
                    let jet = side.kernel.jet(n.as_f64(), order);
                    let (g0, g1, g2) = (T::lit(jet[0]), T::lit(jet[1]), T::lit(jet[2]));
                    acc.value = acc.value + g0;
                    acc.count += 1;
                    if order >= 1 {
                        add_outer(&mut acc.grad_h, &x, g1);
                        if track_pair {
                            let pa = &mut acc.pairs[0];
                            for e in 0..d {
                                pa.w[e] = pa.w[e] + two * g1 * x[e];
                            }
                        }
                    }
                    if order >= 2 {
                        add_outer(&mut acc.m2, &x, g1);
                        add_sym4(&mut acc.t4, &combos, &x, g2);
                        if track_pair {
                            let pa = &mut acc.pairs[0];
                            add_outer(&mut pa.wmat, &x, four * g2);
                            for e in 0..d {
                                pa.wmat[e * d + e] = pa.wmat[e * d + e] + two * g1;
                                pa.u[e] = pa.u[e] + two * g1 * x[e];
                            }
                            add_sym3(&mut pa.t3, &combos, &x, two * g2);
                        }
                    }
                },
            )?;
            let acc = reduce(parts, Acc::new(d, order, usize::from(track_pair), &combos));
            merge(out, acc, track_pair.then_some(i * m + j), &combos);
        }
    }
    Ok(())
}

/// Dual sum of `h(‖k‖²) cos(2π zᵗ(u_i − u_j))` over `k = R⁻ᵗz`, `z != 0`, for all pairs.
pub(crate) fn reciprocal_side<T: Real>(
    p: &PeriodicForm<T>,
    side: &SideSpec,
    order: usize,
    budget: usize,
    out: &mut Moments<T>,
) -> Result<()> {
    let q = p.q();
    let d = q.dim();
    let m = p.m();
    let combos = Combos::new(d);
    let dual: QuadForm<T> = q.dual()?;
    let rinv = q.chol_inv();
    let u = p.translations();
    let diffs: Vec<Vec<T>> =
        (0..m * m).map(|ij| u[ij / m].iter().zip(&u[ij % m]).map(|(a, b)| *a - *b).collect()).collect();
    let npairs = if m > 1 { m * m } else { 0 };
    let opts = EnumOptions { budget, exclude_zero: true };
    let zero = vec![T::zero(); d];
    let tau = T::lit(2.0 * PI);
    let pi2x4 = T::lit(4.0 * PI * PI);
    let parts = fold_coset(
        &dual,
        &zero,
        T::lit(side.r2),
        opts,
        || Acc::new(d, order, npairs, &combos),
        |acc: &mut Acc<T>, z, _| {
            let zt: Vec<T> = z.iter().map(|v| T::from_int(*v as i128)).collect();
            // k = R⁻ᵗ z: k_i = Σ_{j <= i} (R⁻¹)_{ji} z_j.
            let k: Vec<T> = (0..d).map(|i| (0..=i).fold(T::zero(), |s, j| s + rinv[(j, i)] * zt[j])).collect();
            let n = k.iter().map(|c| *c * *c).sum::<T>();
            let jet = side.kernel.jet(n.as_f64(), order);
            let (h0, h1, h2) = (T::lit(jet[0]), T::lit(jet[1]), T::lit(jet[2]));
            let mut csum = T::zero();
            for (ij, diff) in diffs.iter().enumerate() {
                let phase = tau * zt.iter().zip(diff).fold(T::zero(), |s, (a, b)| s + *a * *b);
                let (sn, cs) = phase.sin_cos();
                csum = csum + cs;
                if npairs > 0 && ij / m != ij % m && order >= 1 {
                    let pa = &mut acc.pairs[ij];
                    for e in 0..d {
                        pa.w[e] = pa.w[e] - tau * h0 * sn * k[e];
                    }
                    if order >= 2 {
                        add_outer(&mut pa.wmat, &k, -pi2x4 * h0 * cs);
                        add_sym3(&mut pa.t3, &combos, &k, tau * h1 * sn);
                    }
                }
            }
            acc.value = acc.value + h0 * csum;
            acc.count += 1;
            if order >= 1 {
                add_outer(&mut acc.grad_h, &k, -h1 * csum);
            }
            if order >= 2 {
                add_outer(&mut acc.m2, &k, h1 * csum);
                add_sym4(&mut acc.t4, &combos, &k, h2 * csum);
            }
        },
    )?;
    let acc = reduce(parts, Acc::new(d, order, npairs, &combos));
    merge_all(out, acc, &combos);
    Ok(())
}

fn upper_apply<T: Real>(r: &crate::linalg::Mat<T>, v: &[T]) -> Vec<T> {
    let d = v.len();
    (0..d).map(|i| (i..d).fold(T::zero(), |s, j| s + r[(i, j)] * v[j])).collect()
}

fn add_into<T: Real>(target: &mut [T], src: &[T]) {
    for (t, s) in target.iter_mut().zip(src) {
        *t = *t + *s;
    }
}

fn merge_pair<T: Real>(target: &mut PairMoments<T>, src: &PairAcc<T>, d: usize, combos: &Combos) {
    add_into(&mut target.w, &src.w);
    add_into(&mut target.wmat, &src.wmat);
    add_into(&mut target.u, &src.u);
    if !src.t3.is_empty() {
        add_into(&mut target.t3, &expand3(d, combos, &src.t3));
    }
}

fn merge_common<T: Real>(out: &mut Moments<T>, acc: &Acc<T>, combos: &Combos) {
    out.value = out.value + acc.value;
    out.terms += acc.count;
    add_into(&mut out.grad_h, &acc.grad_h);
    add_into(&mut out.m2, &acc.m2);
    if !acc.t4.is_empty() {
        add_into(&mut out.t4, &expand4(out.dim, combos, &acc.t4));
    }
}

fn merge<T: Real>(out: &mut Moments<T>, acc: Acc<T>, pair: Option<usize>, combos: &Combos) {
    merge_common(out, &acc, combos);
    if let Some(ij) = pair {
        let d = out.dim;
        merge_pair(&mut out.pairs[ij], &acc.pairs[0], d, combos);
    }
}

fn merge_all<T: Real>(out: &mut Moments<T>, acc: Acc<T>, combos: &Combos) {
    merge_common(out, &acc, combos);
    let d = out.dim;
    for (ij, pa) in acc.pairs.iter().enumerate() {
        if ij / out.m != ij % out.m {
            merge_pair(&mut out.pairs[ij], pa, d, combos);
        }
    }
}

/// Scales every accumulated quantity by `factor`.
pub(crate) fn scale_moments<T: Real>(out: &mut Moments<T>, factor: T) {
    let scale = |v: &mut Vec<T>| v.iter_mut().for_each(|x| *x = *x * factor);
    out.value = out.value * factor;
    scale(&mut out.grad_h);
    scale(&mut out.m2);
    scale(&mut out.t4);
    for p in out.pairs.iter_mut() {
        scale(&mut p.w);
        scale(&mut p.wmat);
        scale(&mut p.u);
        scale(&mut p.t3);
    }
}

/// Explicit double sum over the points of the window `‖x‖ <= radius`.
pub(crate) fn window_pairs<T: Real>(points: &[Vec<T>], f: impl Fn(f64) -> f64 + Sync) -> T {
    let partial: Vec<T> = points
        .par_iter()
        .enumerate()
        .map(|(a, x)| {
            let mut s = T::zero();
            for (b, y) in points.iter().enumerate() {
                if a != b {
                    let n: T = x.iter().zip(y).map(|(p, q)| (*p - *q) * (*p - *q)).sum();
                    s = s + T::lit(f(n.as_f64()));
                }
            }
            s
        })
        .collect();
    let mut red = Reducer::new(1);
    for v in partial {
        red.add(&[v]);
    }
    red.finish()[0]
}
