//! Radial kernels used by the summation routes, with rigorous tail bounds.
//!
//! Every kernel `ψ(n)` is a function of a squared norm. Tail bounds use the
//! packing count: a set with minimal separation `ρ` has at most
//! `(2r/ρ + 1)^d <= (K r)^d` points in a ball of radius `r >= R`, with
//! `K = 1/R + 2/ρ`. Summing a decreasing weight against that count by parts
//! gives the closed forms below.

use std::f64::consts::PI;

use crate::special::{gamma_fn, gamma_q, gamma_upper, gamma_upper_bound, ln_gamma_fn};

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Kernel {
    /// `scale · e^{-c n}`.
    Exp { c: f64, scale: f64 },
    /// `n^{-s}`.
    Power { s: f64 },
    /// `Γ(s, τn) n^{-s} / Γ(s)`, the short-range half of the Ewald split.
    UpperGamma { s: f64, tau: f64 },
    /// `pre · τ^{a} x^{a} Γ(-a, x)` with `x = βn`, `β = π²/τ`: the long-range half on the dual side.
    RecipGamma { a: f64, tau: f64, pre: f64 },
}

/// `|ψ^{(j)}(n)| <= c e^{-βn}` or `<= c n^{-e}` for `n >= R²`.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Bound {
    Exp { c: f64, beta: f64 },
    Power { c: f64, e: f64 },
}

impl Kernel {
    /// `[ψ, ψ', ψ'']` at `n`; entries above `order` are zero.
    pub fn jet(&self, n: f64, order: usize) -> [f64; 3] {
        let mut out = [0.0; 3];
        match *self {
            Kernel::Exp { c, scale } => {
                let v = scale * (-c * n).exp();
                out[0] = v;
                if order >= 1 {
                    out[1] = -c * v;
                }
                if order >= 2 {
                    out[2] = c * c * v;
                }
            }
            Kernel::Power { s } => {
                let v = n.powf(-s);
                out[0] = v;
                if order >= 1 {
                    out[1] = -s * v / n;
                }
                if order >= 2 {
                    out[2] = s * (s + 1.0) * v / (n * n);
                }
            }
            Kernel::UpperGamma { s, tau } => {
                // Q(s+1,x) = Q(s,x) + x^s e^{-x}/Γ(s+1).
                let x = tau * n;
                let q0 = gamma_q(s, x);
                let base = n.powf(-s);
                out[0] = q0 * base;
                if order >= 1 {
                    let e0 = (s * x.ln() - x - ln_gamma_fn(s + 1.0)).exp();
                    let q1 = q0 + e0;
                    out[1] = -s * q1 * base / n;
                    if order >= 2 {
                        let q2 = q1 + e0 * x / (s + 1.0);
                        out[2] = s * (s + 1.0) * q2 * base / (n * n);
                    }
                }
            }
            Kernel::RecipGamma { a, tau, pre } => {
                // ψ^{(j)} = (-π²)^j pre τ^{a-j} x^{a-j} Γ(j-a, x).
                let x = PI * PI / tau * n;
                for (j, slot) in out.iter_mut().enumerate().take(order + 1) {
                    let jf = j as f64;
                    let sign = if j % 2 == 1 { -1.0 } else { 1.0 };
                    *slot = sign * PI.powi(2 * j as i32) * pre * (tau * x).powf(a - jf) * gamma_upper(jf - a, x);
                }
            }
        }
        out
    }

    /// Bound on `|ψ^{(j)}(n)|` valid for `n >= r2`.
    pub fn bound(&self, j: usize, r2: f64) -> Bound {
        let jf = j as f64;
        match *self {
            Kernel::Exp { c, scale } => Bound::Exp { c: scale * c.powi(j as i32), beta: c },
            Kernel::Power { s } => {
                let poch: f64 = (0..j).map(|i| s + i as f64).product();
                Bound::Power { c: poch, e: s + jf }
            }
            Kernel::UpperGamma { s, tau } => {
                // Γ(s+j, τn) n^{-s-j} <= B τ^{s+j-1} n^{-1} e^{-τn}.
                let b = ratio_factor(s + jf, tau * r2);
                Bound::Exp { c: b * tau.powf(s + jf - 1.0) / (gamma_fn(s) * r2), beta: tau }
            }
            Kernel::RecipGamma { a, tau, pre } => {
                let beta = PI * PI / tau;
                // |ψ^{(j)}| <= pre π^{2a} β^{j-a-1} B n^{-1} e^{-βn}.
                let b = ratio_factor(jf - a, beta * r2);
                Bound::Exp { c: pre * PI.powf(2.0 * a) * beta.powf(jf - a - 1.0) * b / r2, beta }
            }
        }
    }
}

/// `B` in `Γ(a, x) <= B x^{a-1} e^{-x}` for all `x >= x0`.
fn ratio_factor(a: f64, x0: f64) -> f64 {
    if a <= 1.0 {
        1.0
    } else if x0 > a - 1.0 {
        x0 / (x0 - a + 1.0)
    } else {
        f64::INFINITY
    }
}

/// `Σ_{x ∈ S, ‖x‖² >= r2} c (1+n)^k e^{-βn}` for a `ρ`-separated set `S ⊂ R^d`.
pub(crate) fn exp_tail(d: usize, rho: f64, r2: f64, c: f64, beta: f64, k: f64) -> f64 {
    if !(c.is_finite()) {
        return f64::INFINITY;
    }
    if c == 0.0 {
        return 0.0;
    }
    let r = r2.sqrt();
    let kk = 1.0 / r + 2.0 / rho;
    // (1+n)^k <= (1 + 1/r2)^k n^k, and n^k e^{-εn} <= (k/(eε))^k.
    let (c, beta) = if k > 0.0 {
        let eps = beta / 8.0;
        (c * (1.0 + 1.0 / r2).powf(k) * (k / (std::f64::consts::E * eps)).powf(k), beta - eps)
    } else {
        (c, beta)
    };
    let half = d as f64 / 2.0;
    c * kk.powi(d as i32) * beta.powf(-half) * gamma_upper_bound(half + 1.0, beta * r2)
}

/// `Σ_{x ∈ S, ‖x‖² >= r2} c (1+n)^k n^{-e}` for a `ρ`-separated set `S ⊂ R^d`.
pub(crate) fn power_tail(d: usize, rho: f64, r2: f64, c: f64, e: f64, k: f64) -> f64 {
    let c = c * (1.0 + 1.0 / r2).powf(k);
    let e = e - k;
    let df = d as f64;
    if 2.0 * e <= df {
        return f64::INFINITY;
    }
    let r = r2.sqrt();
    let kk = 1.0 / r + 2.0 / rho;
    c * 2.0 * e * kk.powi(d as i32) * r.powf(df - 2.0 * e) / (2.0 * e - df)
}

pub(crate) fn bound_tail(bound: Bound, d: usize, rho: f64, r2: f64, k: f64) -> f64 {
    match bound {
        Bound::Exp { c, beta } => exp_tail(d, rho, r2, c, beta, k),
        Bound::Power { c, e } => power_tail(d, rho, r2, c, e, k),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ewald_halves_recombine() {
        // Γ(s,τn)/Γ(s) n^{-s} + γ(s,τn)/Γ(s) n^{-s} = n^{-s}.
        let (s, tau, n) = (2.5, 1.3, 0.8);
        let short = Kernel::UpperGamma { s, tau }.jet(n, 2);
        let lower = 1.0 - gamma_q(s, tau * n);
        assert!((short[0] + lower * n.powf(-s) - n.powf(-s)).abs() < 1e-14);
        // Derivatives against differences.
        let h = 1e-5;
        let k = Kernel::UpperGamma { s, tau };
        let d1 = (k.jet(n + h, 0)[0] - k.jet(n - h, 0)[0]) / (2.0 * h);
        assert!((short[1] - d1).abs() < 1e-8 * d1.abs().max(1.0));
        let r = Kernel::RecipGamma { a: 0.7, tau: 1.5, pre: 0.9 };
        let jr = r.jet(n, 2);
        let d1 = (r.jet(n + h, 0)[0] - r.jet(n - h, 0)[0]) / (2.0 * h);
        let d2 = (r.jet(n + h, 1)[1] - r.jet(n - h, 1)[1]) / (2.0 * h);
        assert!((jr[1] - d1).abs() < 1e-7 * d1.abs(), "{} vs {d1}", jr[1]);
        assert!((jr[2] - d2).abs() < 1e-7 * d2.abs(), "{} vs {d2}", jr[2]);
    }

    #[test]
    fn bounds_dominate_kernels() {
        let kernels = [
            Kernel::Exp { c: 2.0, scale: 3.0 },
            Kernel::UpperGamma { s: 3.0, tau: 1.1 },
            Kernel::RecipGamma { a: 1.0, tau: 1.1, pre: 0.4 },
            Kernel::Power { s: 1.5 },
        ];
        for k in kernels {
            for j in 0..3 {
                let r2 = 4.0;
                let b = k.bound(j, r2);
                for n in [4.0, 5.0, 9.0, 20.0] {
                    let v = k.jet(n, 2)[j].abs();
                    let cap = match b {
                        Bound::Exp { c, beta } => c * (-beta * n).exp(),
                        Bound::Power { c, e } => c * n.powf(-e),
                    };
                    assert!(v <= cap * (1.0 + 1e-12), "{k:?} j={j} n={n}: {v} > {cap}");
                }
            }
        }
    }

    #[test]
    fn tail_dominates_z1_sum() {
        // Σ_{|x| >= 3} e^{-x²} over Z: the tail must dominate the true sum.
        let truth: f64 = (3..50).map(|x| 2.0 * (-(x as f64).powi(2)).exp()).sum();
        let bound = exp_tail(1, 1.0, 9.0, 1.0, 1.0, 0.0);
        assert!(bound >= truth && bound < 1e3 * truth, "{bound} vs {truth}");
        let truth: f64 = (3..200_000).map(|x| 2.0 * (x as f64).powi(-4)).sum();
        let bound = power_tail(1, 1.0, 9.0, 1.0, 2.0, 0.0);
        assert!(bound >= truth, "{bound} vs {truth}");
    }
}
