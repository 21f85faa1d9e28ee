//! Energies of periodic sets, Epstein zeta values and theta sums.
//!
//! Three summation routes are available. Exponential potentials are summed
//! directly or through the Poisson dual, whichever needs fewer points. Inverse
//! powers use an Ewald split into a short-range direct sum and a dual sum, both
//! with Gaussian decay; the plain direct sum is kept as an independent route.
//! Every route reports a rigorous bound on the discarded tail.

pub(crate) mod kernel;
mod potential;
mod sums;

use std::f64::consts::PI;

use serde::Serialize;

pub use potential::{eval_potential, Potential};
pub use sums::{Moments, PairMoments};

use kernel::{bound_tail, Kernel};
use sums::{direct_side, reciprocal_side, scale_moments, window_pairs, SideSpec};

use crate::enumeration::{fold_coset, min_distance_sq, min_norm, EnumOptions, DEFAULT_BUDGET};
use crate::error::{Error, Result};
use crate::forms::{PeriodicForm, QuadForm};
use crate::scalar::Real;
use crate::special::{gamma_fn, unit_ball_volume};

/// Default tail target, relative to the largest single term `f(ρ²)`.
pub const DEFAULT_RELATIVE_TAIL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Route {
    Direct,
    Reciprocal,
    Ewald,
}

/// Which routes the planner may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoutePolicy {
    Auto,
    /// Plain direct summation of the potential.
    Direct,
    /// Dual summation for exponentials, the Ewald split for inverse powers.
    Dual,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TailTarget {
    Absolute(f64),
    /// Multiple of the largest single term `f(ρ²)`, `ρ` the minimal distance.
    Relative(f64),
}

#[derive(Debug, Clone, Copy)]
pub struct EnergyOptions {
    pub target_tail: TailTarget,
    pub budget: usize,
    pub route: RoutePolicy,
}

impl Default for EnergyOptions {
    fn default() -> Self {
        EnergyOptions { target_tail: TailTarget::Relative(DEFAULT_RELATIVE_TAIL), budget: DEFAULT_BUDGET, route: RoutePolicy::Auto }
    }
}

impl EnergyOptions {
    pub fn absolute(target: f64) -> Self {
        EnergyOptions { target_tail: TailTarget::Absolute(target), ..Default::default() }
    }

    pub fn with_route(mut self, route: RoutePolicy) -> Self {
        self.route = route;
        self
    }

    pub fn with_budget(mut self, budget: usize) -> Self {
        self.budget = budget;
        self
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergyValue<T> {
    pub value: T,
    /// Rigorous bound on the truncation error of `value`.
    pub tail_bound: f64,
    /// Squared-norm cutoff of the direct sum (zero if the route has none).
    pub cutoff_norm_sq: f64,
    /// Squared-norm cutoff of the dual sum, when one is used.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dual_cutoff_norm_sq: Option<f64>,
    pub terms_used: usize,
    pub route: Route,
}

/// Summation plan resolved for one form, potential and derivative order.
struct Plan {
    route: Route,
    direct: Option<SideSpec>,
    recip: Option<SideSpec>,
    constant: f64,
    tail_value: f64,
    tail_deriv: f64,
}

#[derive(Clone, Copy, PartialEq)]
enum Side {
    Direct,
    Dual,
}

struct Geometry {
    d: usize,
    m: usize,
    covolume: f64,
    rho: f64,
    rho_dual: f64,
}

impl Geometry {
    fn of<T: Real>(p: &PeriodicForm<T>) -> Result<Self> {
        let q = p.q();
        let dual: QuadForm<T> = q.dual()?;
        Ok(Geometry {
            d: q.dim(),
            m: p.m(),
            covolume: q.covolume().as_f64(),
            rho: min_distance_sq(p)?.as_f64().sqrt(),
            rho_dual: min_norm(&dual).as_f64().sqrt(),
        })
    }

    fn estimate(&self, side: Side, r2: f64) -> f64 {
        let ball = unit_ball_volume(self.d) * r2.powf(self.d as f64 / 2.0);
        match side {
            Side::Direct => ball / self.covolume * (self.m * self.m) as f64,
            Side::Dual => ball * self.covolume,
        }
    }
}

/// `(value tail, derivative tail)` of one side cut at `r2`.
fn side_tail(kernel: &Kernel, side: Side, g: &Geometry, r2: f64, order: usize) -> (f64, f64) {
    // (derivative order j, coefficient, polynomial degree k) for |entry| <= Σ coef |ψ^{(j)}| (1+n)^k.
    const DIRECT: [&[(usize, f64, f64)]; 3] = [&[(0, 1.0, 0.0)], &[(1, 2.0, 1.0)], &[(2, 8.0, 2.0), (1, 6.0, 1.0)]];
    let dual: [Vec<(usize, f64, f64)>; 3] = [
        vec![(0, 1.0, 0.0)],
        vec![(1, 2.0, 1.0), (0, 4.0 * PI, 1.0)],
        vec![(2, 2.0, 2.0), (1, 4.0 * PI, 2.0), (0, 8.0 * PI * PI, 2.0), (1, 2.0, 1.0)],
    ];
    let (rho, mult_v, mult_d) = match side {
        Side::Direct => (g.rho, 1.0, 2.0),
        Side::Dual => (g.rho_dual, g.m as f64, (g.m.max(2)) as f64),
    };
    let weights = |level: usize| -> f64 {
        let terms: &[(usize, f64, f64)] = match side {
            Side::Direct => DIRECT[level],
            Side::Dual => &dual[level],
        };
        terms.iter().map(|&(j, coef, k)| coef * bound_tail(kernel.bound(j, r2), g.d, rho, r2, k)).sum()
    };
    let value = mult_v * weights(0);
    let deriv = (1..=order.min(2)).map(|l| mult_d * weights(l)).fold(0.0, f64::max);
    (value, deriv)
}

/// Smallest cutoff (up to a factor of about 1.01) whose tails meet `target`.
fn required_r2(kernel: &Kernel, side: Side, g: &Geometry, order: usize, target: f64) -> Result<f64> {
    let worst = |r2: f64| {
        let (v, dv) = side_tail(kernel, side, g, r2, order);
        v.max(dv)
    };
    let scale = match side {
        Side::Direct => g.rho * g.rho,
        Side::Dual => g.rho_dual * g.rho_dual,
    };
    let mut hi = scale;
    let mut steps = 0;
    while !(worst(hi) <= target) {
        hi *= 2.0;
        steps += 1;
        if steps > 200 || !hi.is_finite() {
            return Err(Error::CutoffOverflow { budget: usize::MAX });
        }
    }
    let mut lo = hi / 2.0;
    if steps == 0 {
        lo = 0.0;
    }
    while hi - lo > 0.01 * hi {
        let mid = 0.5 * (lo + hi);
        if worst(mid) <= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

fn absolute_target(target: TailTarget, pot: Potential, g: &Geometry) -> Result<f64> {
    let t = match target {
        TailTarget::Absolute(t) => t,
        TailTarget::Relative(r) => r * pot.value(g.rho * g.rho),
    };
    if t > 0.0 && t.is_finite() {
        Ok(t)
    } else {
        Err(Error::DomainError(format!("target tail must be positive, got {t}")))
    }
}

fn make_plan(pot: Potential, g: &Geometry, order: usize, opts: &EnergyOptions) -> Result<Plan> {
    pot.check_convergent(g.d)?;
    let target = absolute_target(opts.target_tail, pot, g)?;
    let d = g.d as f64;
    let v = g.covolume;
    let plan = match pot {
        Potential::Exponential(c) => {
            let direct = Kernel::Exp { c, scale: 1.0 };
            let dual_scale = (PI / c).powf(d / 2.0) / v;
            let dual = Kernel::Exp { c: PI * PI / c, scale: dual_scale };
            let use_dual = match opts.route {
                RoutePolicy::Direct => false,
                RoutePolicy::Dual => true,
                RoutePolicy::Auto => {
                    let rd = required_r2(&direct, Side::Direct, g, order, target)?;
                    let rr = required_r2(&dual, Side::Dual, g, order, target)?;
                    g.estimate(Side::Direct, rd) > 4.0 * g.estimate(Side::Dual, rr)
                }
            };
            if use_dual {
                let r2 = required_r2(&dual, Side::Dual, g, order, target)?;
                let (tv, td) = side_tail(&dual, Side::Dual, g, r2, order);
                Plan {
                    route: Route::Reciprocal,
                    direct: None,
                    recip: Some(SideSpec { kernel: dual, r2 }),
                    constant: g.m as f64 * dual_scale - 1.0,
                    tail_value: tv,
                    tail_deriv: td,
                }
            } else {
                let r2 = required_r2(&direct, Side::Direct, g, order, target)?;
                let (tv, td) = side_tail(&direct, Side::Direct, g, r2, order);
                Plan {
                    route: Route::Direct,
                    direct: Some(SideSpec { kernel: direct, r2 }),
                    recip: None,
                    constant: 0.0,
                    tail_value: tv,
                    tail_deriv: td,
                }
            }
        }
        Potential::InversePower(s) => {
            if opts.route == RoutePolicy::Direct {
                let kernel = Kernel::Power { s };
                let r2 = required_r2(&kernel, Side::Direct, g, order, target)?;
                let (tv, td) = side_tail(&kernel, Side::Direct, g, r2, order);
                Plan {
                    route: Route::Direct,
                    direct: Some(SideSpec { kernel, r2 }),
                    recip: None,
                    constant: 0.0,
                    tail_value: tv,
                    tail_deriv: td,
                }
            } else {
                let a = s - d / 2.0;
                let tau = PI * v.powf(-2.0 / d);
                let pre = PI.powf(d / 2.0) / (v * gamma_fn(s));
                let direct = Kernel::UpperGamma { s, tau };
                let dual = Kernel::RecipGamma { a, tau, pre };
                let rd = required_r2(&direct, Side::Direct, g, order, target / 2.0)?;
                let rr = required_r2(&dual, Side::Dual, g, order, target / 2.0)?;
                let (tv1, td1) = side_tail(&direct, Side::Direct, g, rd, order);
                let (tv2, td2) = side_tail(&dual, Side::Dual, g, rr, order);
                Plan {
                    route: Route::Ewald,
                    direct: Some(SideSpec { kernel: direct, r2: rd }),
                    recip: Some(SideSpec { kernel: dual, r2: rr }),
                    constant: g.m as f64 * pre * tau.powf(a) / a - tau.powf(s) / (s * gamma_fn(s)),
                    tail_value: tv1 + tv2,
                    tail_deriv: td1 + td2,
                }
            }
        }
    };
    let estimate = plan.direct.as_ref().map_or(0.0, |s| g.estimate(Side::Direct, s.r2))
        + plan.recip.as_ref().map_or(0.0, |s| g.estimate(Side::Dual, s.r2));
    if estimate > opts.budget as f64 {
        return Err(Error::CutoffOverflow { budget: opts.budget });
    }
    Ok(plan)
}

/// Energy moments together with the summation report.
#[derive(Debug, Clone)]
pub struct Jet<T> {
    pub moments: Moments<T>,
    pub tail_bound: f64,
    /// Bound on the truncation error of every gradient and Hessian entry.
    pub derivative_tail_bound: f64,
    pub route: Route,
    pub cutoff_norm_sq: f64,
    pub dual_cutoff_norm_sq: Option<f64>,
}

/// Value and Euclidean derivative moments of the energy up to `order` (0, 1 or 2).
pub fn jet<T: Real>(p: &PeriodicForm<T>, pot: Potential, order: usize, opts: &EnergyOptions) -> Result<Jet<T>> {
    if order > 2 {
        return Err(Error::DomainError(format!("derivative order {order} is not supported")));
    }
    let g = Geometry::of(p)?;
    let plan = make_plan(pot, &g, order, opts)?;
    let mut moments = Moments::zero(g.d, g.m, order);
    if let Some(side) = &plan.direct {
        direct_side(p, side, order, opts.budget, &mut moments)?;
    }
    if let Some(side) = &plan.recip {
        reciprocal_side(p, side, order, opts.budget, &mut moments)?;
    }
    let terms = moments.terms;
    scale_moments(&mut moments, T::one() / T::count(g.m));
    moments.terms = terms;
    moments.value = moments.value + T::lit(plan.constant);
    Ok(Jet {
        moments,
        tail_bound: plan.tail_value,
        derivative_tail_bound: plan.tail_deriv,
        route: plan.route,
        cutoff_norm_sq: plan.direct.as_ref().map_or(0.0, |s| s.r2),
        dual_cutoff_norm_sq: plan.recip.as_ref().map(|s| s.r2),
    })
}

pub fn energy_with<T: Real>(p: &PeriodicForm<T>, pot: Potential, opts: &EnergyOptions) -> Result<EnergyValue<T>> {
    let j = jet(p, pot, 0, opts)?;
    Ok(EnergyValue {
        value: j.moments.value,
        tail_bound: j.tail_bound,
        cutoff_norm_sq: j.cutoff_norm_sq,
        dual_cutoff_norm_sq: j.dual_cutoff_norm_sq,
        terms_used: j.moments.terms,
        route: j.route,
    })
}

/// `E(f, Λ)` with an absolute tail target.
pub fn energy<T: Real>(p: &PeriodicForm<T>, pot: Potential, target_tail: f64) -> Result<EnergyValue<T>> {
    energy_with(p, pot, &EnergyOptions::absolute(target_tail))
}

/// `ζ(L, s) = Σ_{x != 0} ‖x‖^{-2s}`.
pub fn epstein_zeta<T: Real>(q: &QuadForm<T>, s: f64, target_tail: f64) -> Result<EnergyValue<T>> {
    energy(&PeriodicForm::lattice(q.clone()), Potential::inverse_power(s)?, target_tail)
}

/// `Σ_{x != 0} e^{-c‖x‖²} = θ_L(ic/π) − 1`.
pub fn theta_minus_one<T: Real>(q: &QuadForm<T>, c: f64, target_tail: f64) -> Result<EnergyValue<T>> {
    energy(&PeriodicForm::lattice(q.clone()), Potential::exponential(c)?, target_tail)
}

/// Points of the periodic set in the ball `‖x‖ <= radius`, in Euclidean coordinates.
pub fn window_points<T: Real>(p: &PeriodicForm<T>, radius: T) -> Result<Vec<Vec<T>>> {
    if !(radius > T::zero()) {
        return Err(Error::DomainError(format!("window radius must be positive, got {radius}")));
    }
    let q = p.q();
    let opts = EnumOptions { budget: DEFAULT_BUDGET, exclude_zero: false };
    let mut points = Vec::new();
    for u in p.translations() {
        let parts = fold_coset(q, u, radius * radius, opts, Vec::new, |acc: &mut Vec<Vec<T>>, z, _| {
            let v: Vec<T> = z.iter().zip(u).map(|(a, b)| T::from_int(*a as i128) + *b).collect();
            acc.push(q.euclidean(&v));
        })?;
        points.extend(parts.into_iter().flatten());
    }
    Ok(points)
}

/// `(1/|Λ_R|) Σ_{x != y ∈ Λ_R} f(‖x − y‖²)` over the window `Λ_R`.
pub fn windowed_energy<T: Real>(p: &PeriodicForm<T>, radius: T, pot: Potential) -> Result<T> {
    pot.validated()?;
    let points = window_points(p, radius)?;
    if points.len() < 2 {
        return Err(Error::WindowTooSmall { points: points.len() });
    }
    let total = window_pairs(&points, |n| pot.value(n));
    Ok(total / T::count(points.len()))
}
