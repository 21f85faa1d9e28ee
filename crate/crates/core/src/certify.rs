//! Criticality and local-optimality certificates for lattices.
//!
//! A certificate records what was checked (design hypotheses up to a norm
//! bound), the thresholds used, the numeric witnesses and a verdict. Every
//! finite check is partial: the hypotheses concern all shells, the
//! certificate only covers shells up to `verified_up_to`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::calculus::{gradient_at_lattice, hessian_general, GradHess, SplitEvaluator};
use crate::designs::{all_shells_design, AllShellsReport};
use crate::energy::{energy_with, EnergyOptions, Potential};
use crate::enumeration::min_norm;
use crate::error::{Error, Result};
use crate::forms::{PeriodicForm, QuadForm};
use crate::scalar::Real;

/// Witnesses must clear zero by this fraction of their natural scale.
pub const MARGIN: f64 = 1e-10;

/// Gradient norms above this (relative) with verified 2-designs indicate a bug.
pub const INCONSISTENT_GRADIENT: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Claim {
    Critical { potential: Potential },
    LocalMinPs { s: f64 },
    LocalMinFc { c: f64 },
    UniversalScan { y_min: f64, y_max: f64, points: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Certified,
    Refuted,
    Inconclusive,
}

/// How an f_c certificate was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Tier {
    /// `c` exceeds both sufficient thresholds of the proof.
    Threshold,
    /// The assembled Hessian is positive definite.
    Numeric,
}

#[derive(Debug, Clone, Serialize)]
pub struct Hypothesis {
    pub name: String,
    pub verified_up_to: f64,
    pub residual: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Certificate {
    pub lattice_id: String,
    pub dim: usize,
    pub m: usize,
    pub claim: Claim,
    pub hypotheses: Vec<Hypothesis>,
    pub thresholds: BTreeMap<String, f64>,
    pub witnesses: BTreeMap<String, f64>,
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tier: Option<Tier>,
    pub notes: Vec<String>,
}

impl Certificate {
    fn new(id: &str, dim: usize, m: usize, claim: Claim) -> Self {
        Certificate {
            lattice_id: id.to_string(),
            dim,
            m,
            claim,
            hypotheses: Vec::new(),
            thresholds: BTreeMap::new(),
            witnesses: BTreeMap::new(),
            verdict: Verdict::Inconclusive,
            tier: None,
            notes: Vec::new(),
        }
    }

    fn witness(&mut self, name: &str, v: f64) {
        self.witnesses.insert(name.to_string(), v);
    }

    pub fn is_certified(&self) -> bool {
        self.verdict == Verdict::Certified
    }

    fn hypotheses_hold(&self) -> bool {
        self.hypotheses.iter().all(|h| h.holds)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CertifyOptions {
    /// Shells with `α <= cutoff` are checked against the design hypotheses.
    pub cutoff: f64,
    /// Seed for the random coset decomposition used when `m > 1`.
    pub seed: u64,
    pub energy: EnergyOptions,
}

impl CertifyOptions {
    pub fn with_cutoff(cutoff: f64) -> Self {
        CertifyOptions { cutoff, seed: 0, energy: EnergyOptions::default() }
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

fn design_hypothesis<T: Real>(q: &QuadForm<T>, t: u32, cutoff: f64) -> Result<(Hypothesis, AllShellsReport)> {
    let report = all_shells_design(q, t, T::lit(cutoff))?;
    let residual = report.reports.iter().map(|r| r.max_residual).fold(0.0, f64::max);
    Ok((
        Hypothesis {
            name: format!("shells are {t}-designs"),
            verified_up_to: report.verified_up_to,
            residual,
            holds: report.all_designs,
        },
        report,
    ))
}

fn first_failure(report: &AllShellsReport) -> Error {
    let bad = report.reports.iter().find(|r| !r.is_design);
    Error::DesignHypothesisFailed {
        alpha: bad.map_or(f64::NAN, |r| r.alpha),
        t: report.t,
        residual: bad.map_or(f64::NAN, |r| r.max_residual),
    }
}

/// The lattice written as `m` cosets of a random index-`m` sublattice.
pub fn decomposition<T: Real>(q: &QuadForm<T>, m: usize, seed: u64) -> Result<PeriodicForm<T>> {
    if m == 0 {
        return Err(Error::DomainError("m must be positive".into()));
    }
    if m == 1 {
        return Ok(PeriodicForm::lattice(q.clone()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (m as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    PeriodicForm::random_decomposition(q, m, &mut rng)
}

/// Scale of a gradient: the norm of the full `Σ f' wwᵗ` including its trace.
fn gradient_scale<T: Real>(q: &QuadForm<T>, pot: Potential, opts: &EnergyOptions) -> Result<f64> {
    let g = gradient_at_lattice(q, pot, opts)?;
    Ok(1f64.max(g.trace_part.as_f64().abs() * (q.dim() as f64).sqrt()))
}

struct Spectrum {
    min: f64,
    max: f64,
    scale: f64,
}

fn spectrum<T: Real>(gh: &GradHess<T>) -> Spectrum {
    let ev = gh.eigenvalues().unwrap_or_default();
    let scale = gh.hessian.as_ref().map_or(0.0, |h| h.iter().fold(0.0f64, |a, v| a.max(v.as_f64().abs())));
    Spectrum {
        min: ev.first().map_or(f64::NAN, |v| v.as_f64()),
        max: ev.last().map_or(f64::NAN, |v| v.as_f64()),
        scale,
    }
}

fn sign_verdict(value: f64, scale: f64) -> Verdict {
    if value > MARGIN * scale {
        Verdict::Certified
    } else if value < -MARGIN * scale {
        Verdict::Refuted
    } else {
        Verdict::Inconclusive
    }
}

/// Criticality: shells up to the cutoff are 2-designs and the full gradient
/// of the `m`-coset representation vanishes.
pub fn certify_critical<T: Real>(id: &str, q: &QuadForm<T>, pot: Potential, m: usize, opts: &CertifyOptions) -> Result<Certificate> {
    pot.check_convergent(q.dim())?;
    let mut cert = Certificate::new(id, q.dim(), m, Claim::Critical { potential: pot });
    let (hyp, _) = design_hypothesis(q, 2, opts.cutoff)?;
    let designs = hyp.holds;
    cert.hypotheses.push(hyp);
    let p = decomposition(q, m, opts.seed)?;
    let g = hessian_free_gradient(&p, pot, &opts.energy)?;
    let scale = gradient_scale(q, pot, &opts.energy)?;
    let norm = g.gradient_norm().as_f64();
    cert.witness("gradient_norm", norm);
    cert.witness("gradient_scale", scale);
    cert.witness("gradient_tail_bound", g.derivative_tail_bound);
    cert.thresholds.insert("gradient_tolerance".into(), MARGIN * scale);
    let small = norm <= MARGIN * scale;
    cert.verdict = match (designs, small) {
        (true, true) => Verdict::Certified,
        (true, false) if norm > INCONSISTENT_GRADIENT * scale => {
            return Err(Error::InternalInconsistency(format!(
                "{id}: shells are 2-designs up to {} but the gradient norm is {norm:e}",
                opts.cutoff
            )))
        }
        (true, false) => Verdict::Inconclusive,
        (false, false) => Verdict::Refuted,
        (false, true) => {
            cert.notes.push("gradient vanishes although some shell is not a 2-design".into());
            Verdict::Inconclusive
        }
    };
    Ok(cert)
}

fn hessian_free_gradient<T: Real>(p: &PeriodicForm<T>, pot: Potential, opts: &EnergyOptions) -> Result<GradHess<T>> {
    crate::calculus::gradient_general(p, pot, opts)
}

/// Records the dense Hessian of the `m`-coset representation.
fn dense_witnesses<T: Real>(cert: &mut Certificate, gh: &GradHess<T>) -> Spectrum {
    let sp = spectrum(gh);
    cert.witness("hessian_min_eigenvalue", sp.min);
    cert.witness("hessian_max_eigenvalue", sp.max);
    cert.witness("hessian_scale", sp.scale);
    cert.witness("gradient_norm", gh.gradient_norm().as_f64());
    if let Some(c) = gh.cross_block_max() {
        cert.witness("cross_block_max", c.as_f64());
    }
    cert.witness("derivative_tail_bound", gh.derivative_tail_bound);
    sp
}

/// `(mean diagonal, max deviation from a multiple of I)` of the `H` block, in
/// Taylor-coefficient units (half the Hessian).
fn h_block_isotropy<T: Real>(gh: &GradHess<T>) -> (f64, f64) {
    let Some(hb) = gh.h_block() else { return (f64::NAN, f64::NAN) };
    let n = hb.rows();
    let mean = (0..n).map(|i| hb[(i, i)].as_f64()).sum::<f64>() / n as f64;
    let mut dev = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let want = if i == j { mean } else { 0.0 };
            dev = dev.max((hb[(i, j)].as_f64() - want).abs());
        }
    }
    (mean / 2.0, dev / 2.0)
}

/// Local `p_s`-optimality for `s > d/2` from the 4-design hypothesis.
pub fn certify_ps<T: Real>(id: &str, q: &QuadForm<T>, s: f64, m: usize, opts: &CertifyOptions) -> Result<Certificate> {
    let d = q.dim();
    let df = d as f64;
    if !(s > df / 2.0) {
        return Err(Error::PreconditionFailed(format!("p_s certification needs s > d/2 = {}, got s = {s}", df / 2.0)));
    }
    let pot = Potential::inverse_power(s)?;
    let mut cert = Certificate::new(id, d, m, Claim::LocalMinPs { s });
    let (hyp, report) = design_hypothesis(q, 4, opts.cutoff)?;
    if !hyp.holds {
        return Err(first_failure(&report));
    }
    cert.hypotheses.push(hyp);
    let lat = PeriodicForm::lattice(q.clone());
    let zeta = energy_with(&lat, pot, &opts.energy)?;
    let zeta1 = energy_with(&lat, Potential::inverse_power(s + 1.0)?, &opts.energy)?;
    let z = zeta.value.as_f64();
    let h_coef = s * (s - df / 2.0) / (df * (df + 2.0)) * z;
    let t_factor = 2.0 * (s + 1.0) / df - 1.0;
    let t_coef = t_factor * zeta1.value.as_f64();
    cert.thresholds.insert("s_min".into(), df / 2.0);
    cert.witness("zeta", z);
    cert.witness("zeta_tail_bound", zeta.tail_bound);
    cert.witness("h_coefficient", h_coef);
    cert.witness("t_factor", t_factor);
    cert.witness("t_coefficient", t_coef);
    let p = decomposition(q, m, opts.seed)?;
    let gh = hessian_general(&p, pot, &opts.energy)?;
    let sp = dense_witnesses(&mut cert, &gh);
    let (measured, dev) = h_block_isotropy(&gh);
    cert.witness("h_coefficient_measured", measured);
    cert.witness("h_block_anisotropy", dev);
    let coefficients_positive = h_coef > 0.0 && t_coef > 0.0;
    let grad_ok = gh.gradient_norm().as_f64() <= MARGIN * gradient_scale(q, pot, &opts.energy)?;
    cert.verdict = match sign_verdict(sp.min, sp.scale) {
        Verdict::Certified if coefficients_positive && grad_ok && cert.hypotheses_hold() => Verdict::Certified,
        Verdict::Certified => Verdict::Inconclusive,
        v => v,
    };
    Ok(cert)
}

/// Local `f_c`-optimality: by the proof's thresholds when they apply,
/// otherwise by the sign of the assembled Hessian.
pub fn certify_fc<T: Real>(id: &str, q: &QuadForm<T>, c: f64, m: usize, opts: &CertifyOptions) -> Result<Certificate> {
    let pot = Potential::exponential(c)?;
    let d = q.dim();
    let df = d as f64;
    let mut cert = Certificate::new(id, d, m, Claim::LocalMinFc { c });
    let min = min_norm(q).as_f64();
    let c_threshold = (df + 2.0) / (2.0 * min);
    let t_threshold = df / (2.0 * min);
    cert.thresholds.insert("c_threshold".into(), c_threshold);
    cert.thresholds.insert("t_threshold".into(), t_threshold);
    cert.witness("min_norm", min);
    let (hyp2, _) = design_hypothesis(q, 2, opts.cutoff)?;
    let (hyp4, _) = design_hypothesis(q, 4, opts.cutoff)?;
    let designs4 = hyp4.holds;
    cert.hypotheses.push(hyp2);
    cert.hypotheses.push(hyp4);
    let p = decomposition(q, m, opts.seed)?;
    let gh = hessian_general(&p, pot, &opts.energy)?;
    let sp = dense_witnesses(&mut cert, &gh);
    let grad_scale = gradient_scale(q, pot, &opts.energy)?;
    let critical = gh.gradient_norm().as_f64() <= MARGIN * grad_scale;
    if designs4 {
        let split = SplitEvaluator::new(q)?.eval(c / PI)?;
        let y = split.y;
        cert.witness("F", split.f);
        cert.witness("G", split.g);
        let lattice_coefficient = y * split.g / (df * (df + 2.0));
        cert.witness("lattice_coefficient", lattice_coefficient);
        // The H block is 2·lattice_coefficient·I; the split sums are cancellation-free.
        let (measured, _) = h_block_isotropy(&gh);
        cert.witness("h_block_split_relative", (measured - lattice_coefficient).abs() / lattice_coefficient.abs());
        cert.witness("translation_coefficient", 2.0 * PI * y * split.f / (df * (m * m) as f64));
    }
    if !critical {
        cert.notes.push("not a critical point: the gradient does not vanish".into());
        cert.verdict = Verdict::Refuted;
        return Ok(cert);
    }
    let numeric = sign_verdict(sp.min, sp.scale);
    if designs4 && c > c_threshold && c > t_threshold {
        cert.tier = Some(Tier::Threshold);
        cert.verdict = Verdict::Certified;
        if numeric != Verdict::Certified {
            return Err(Error::InternalInconsistency(format!(
                "{id}: c = {c} exceeds the thresholds but the Hessian's minimum eigenvalue is {:e}",
                sp.min
            )));
        }
    } else {
        cert.verdict = numeric;
        if numeric == Verdict::Certified {
            cert.tier = Some(Tier::Numeric);
        }
        if !designs4 {
            cert.notes.push("4-design hypothesis fails; only the numeric tier applies".into());
        }
    }
    Ok(cert)
}

/// `F` and `G` on a grid of `y`: evidence for local universal optimality,
/// relative to the grid only.
pub fn universal_scan<T: Real>(id: &str, q: &QuadForm<T>, y_grid: &[f64], opts: &CertifyOptions) -> Result<Certificate> {
    if y_grid.is_empty() || y_grid.iter().any(|y| !(*y > 0.0 && y.is_finite())) {
        return Err(Error::DomainError("y grid must be non-empty and positive".into()));
    }
    let d = q.dim();
    let mut grid = y_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let claim = Claim::UniversalScan { y_min: grid[0], y_max: *grid.last().unwrap(), points: grid.len() };
    let mut cert = Certificate::new(id, d, 1, claim);
    let (hyp, report) = design_hypothesis(q, 4, opts.cutoff)?;
    if !hyp.holds {
        return Err(first_failure(&report));
    }
    cert.hypotheses.push(hyp);
    let ev = SplitEvaluator::new(q)?;
    let large_y = d as f64 / (2.0 * PI * ev.min_norm());
    cert.thresholds.insert("large_y_threshold".into(), large_y);
    let values = grid.iter().map(|&y| ev.eval(y)).collect::<Result<Vec<_>>>()?;
    let (mut min_f, mut min_g) = (f64::INFINITY, f64::INFINITY);
    let (mut y_min_f, mut y_min_g) = (f64::NAN, f64::NAN);
    let mut g_ok = true;
    let mut g_negative = false;
    let mut f_ok = true;
    for v in &values {
        if v.g < min_g {
            min_g = v.g;
            y_min_g = v.y;
        }
        if v.f < min_f {
            min_f = v.f;
            y_min_f = v.y;
        }
        g_ok &= v.g > v.g_tail && v.g > 0.0;
        g_negative |= v.g < -v.g_tail;
        f_ok &= v.f > v.f_tail;
    }
    let decreasing = values.windows(2).all(|w| w[0].f_exceeds(&w[1]));
    let first = values.first().unwrap();
    let last = values.last().unwrap();
    cert.witness("min_F", min_f);
    cert.witness("min_F_at", y_min_f);
    cert.witness("min_G", min_g);
    cert.witness("min_G_at", y_min_g);
    cert.witness("F_at_y_min", first.f);
    cert.witness("F_at_y_max", last.f);
    cert.witness("F_strictly_decreasing", f64::from(u8::from(decreasing)));
    cert.verdict = if g_ok && f_ok && decreasing && first.f_exceeds(last) {
        Verdict::Certified
    } else if g_negative || values.iter().any(|v| v.f < -v.f_tail) {
        Verdict::Refuted
    } else {
        Verdict::Inconclusive
    };
    cert.notes.push("Certified here means supported on the scanned grid only; it is not a proof for all y > 0".into());
    Ok(cert)
}
