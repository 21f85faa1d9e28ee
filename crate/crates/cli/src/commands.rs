use std::fs;

use lattice_energy::calculus::{gradient_general, hessian_general, hessian_split_design, GradHess};
use lattice_energy::catalog::{list_catalog, load_catalog};
use lattice_energy::certify::{certify_critical, certify_fc, certify_ps, universal_scan, CertifyOptions};
use lattice_energy::designs::all_shells_design;
use lattice_energy::energy::{energy_with, windowed_energy, EnergyOptions, Potential};
use lattice_energy::enumeration::{enumerate_shells, min_norm};
use lattice_energy::linalg::Mat;
use lattice_energy::optimize::{descend, perturbation_sweep, DescentOptions};
use lattice_energy::{Error, Form64, QuadForm64};
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::{Cli, Command, Mode, Source};

pub enum Failure {
    /// Bad flags or flag combinations; exit status 2.
    Usage(String),
    /// The library refused or failed; exit status 1.
    Domain(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Domain(e.to_string())
    }
}

type Outcome = Result<String, Failure>;

/// Design cutoff when `--cutoff-norm-sq` is absent: three times the minimum
/// up to dimension 12, only the minimal shell above (the Leech shells grow
/// too fast for more).
fn default_cutoff(q: &QuadForm64) -> f64 {
    let mu = min_norm(q);
    if q.dim() <= 12 {
        3.0 * mu
    } else {
        mu
    }
}

fn energy_options(cli: &Cli) -> Result<EnergyOptions, Failure> {
    match cli.target_tail {
        None => Ok(EnergyOptions::default()),
        Some(eps) if eps > 0.0 && eps.is_finite() => Ok(EnergyOptions::absolute(eps)),
        Some(eps) => Err(Failure::Usage(format!("--target-tail must be positive, got {eps}"))),
    }
}

fn load(source: &Source) -> Result<(String, Form64), Failure> {
    match (&source.form, &source.lattice) {
        (Some(path), None) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::Domain(format!("{}: {e}", path.display())))?;
            let form = Form64::from_json_str(&text)?;
            let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "form".into());
            Ok((id, form))
        }
        (None, Some(id)) => Ok((id.clone(), load_catalog::<f64>(id)?)),
        _ => Err(Failure::Usage("exactly one of --form and --lattice is required".into())),
    }
}

fn load_lattice_form(source: &Source) -> Result<(String, QuadForm64), Failure> {
    let (id, form) = load(source)?;
    if form.m() != 1 {
        return Err(Error::PreconditionFailed(format!("{id} has {} cosets; this command needs a lattice", form.m())).into());
    }
    Ok((id, form.q().clone()))
}

fn to_json<S: Serialize>(payload: &S) -> Outcome {
    let mut out = serde_json::to_string_pretty(payload).map_err(|e| Failure::Domain(e.to_string()))?;
    out.push('\n');
    Ok(out)
}

fn rows(m: &Mat<f64>) -> Vec<Vec<f64>> {
    m.to_rows()
}

fn derivative_payload(id: &str, pot: Potential, g: &GradHess<f64>) -> Value {
    let mut v = json!({
        "id": id,
        "potential": pot.to_string(),
        "dim": g.dim,
        "m": g.m,
        "value": g.value,
        "basis": g.basis,
        "gradient": g.gradient,
        "gradient_h": g.gradient_h(),
        "gradient_t": g.gradient_t(),
        "gradient_norm": g.gradient_norm(),
        "tail_bound": g.tail_bound,
        "derivative_tail_bound": g.derivative_tail_bound,
    });
    if let Some(h) = g.hessian_matrix() {
        let eig = g.eigenvalues().unwrap_or_default();
        let extra = json!({
            "hessian": rows(&h),
            "h_block": g.h_block().map(|b| rows(&b)),
            "t_block": g.t_block().map(|b| rows(&b)),
            "cross_block_max": g.cross_block_max(),
            "asymmetry": g.asymmetry(),
            "eigenvalues": eig,
            "min_eigenvalue": g.min_eigenvalue(),
            "max_eigenvalue": eig.iter().copied().fold(None, |a: Option<f64>, x| Some(a.map_or(x, |a| a.max(x)))),
        });
        if let (Value::Object(base), Value::Object(more)) = (&mut v, extra) {
            base.extend(more);
        }
    }
    v
}

fn shells_csv(shells: &[(f64, usize)]) -> Outcome {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["alpha", "count"]).map_err(|e| Failure::Domain(e.to_string()))?;
    for (alpha, count) in shells {
        w.serialize((alpha, count)).map_err(|e| Failure::Domain(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Failure::Domain(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Failure::Domain(e.to_string()))
}

pub fn run(cli: &Cli) -> Outcome {
    let eopts = energy_options(cli)?;
    match &cli.command {
        Command::Shells { source, max_norm_sq, vectors, csv, .. } => {
            let (id, form) = load(source)?;
            let shells = enumerate_shells(form.q(), *max_norm_sq)?;
            if *csv {
                let pairs: Vec<(f64, usize)> = shells.iter().map(|s| (s.alpha, s.count())).collect();
                return shells_csv(&pairs);
            }
            let list: Vec<Value> = shells
                .iter()
                .map(|s| {
                    let mut v = json!({ "alpha": s.alpha, "exact_alpha": s.exact_alpha.as_ref().map(ToString::to_string), "count": s.count() });
                    if *vectors {
                        v["vectors"] = json!(s.vectors);
                    }
                    v
                })
                .collect();
            to_json(&json!({ "id": id, "dim": form.dim(), "max_norm_sq": max_norm_sq, "shells": list }))
        }
        Command::Design { source, t, max_norm_sq } => {
            let (id, form) = load(source)?;
            let bound = max_norm_sq.or(cli.cutoff_norm_sq).unwrap_or(8.0);
            let report = all_shells_design(form.q(), *t, bound)?;
            to_json(&json!({ "id": id, "dim": form.dim(), "report": report }))
        }
        Command::Energy { source, potential, windowed } => {
            let (id, form) = load(source)?;
            let v = energy_with(&form, *potential, &eopts)?;
            let mut out = json!({
                "id": id,
                "dim": form.dim(),
                "m": form.m(),
                "potential": potential.to_string(),
                "value": v.value,
                "tail_bound": v.tail_bound,
                "cutoff_norm_sq": v.cutoff_norm_sq,
                "dual_cutoff_norm_sq": v.dual_cutoff_norm_sq,
                "terms_used": v.terms_used,
                "route": v.route,
            });
            if let Some(r) = windowed {
                if !(*r > 0.0 && r.is_finite()) {
                    return Err(Failure::Usage(format!("--windowed must be a positive radius, got {r}")));
                }
                let w = windowed_energy(&form, *r, *potential)?;
                out["windowed"] = json!({ "radius": r, "value": w, "relative_difference": (w - v.value) / v.value });
            }
            to_json(&out)
        }
        Command::Grad { source, potential } => {
            let (id, form) = load(source)?;
            let g = gradient_general(&form, *potential, &eopts)?;
            to_json(&derivative_payload(&id, *potential, &g))
        }
        Command::Hess { source, potential } => {
            let (id, form) = load(source)?;
            let g = hessian_general(&form, *potential, &eopts)?;
            to_json(&derivative_payload(&id, *potential, &g))
        }
        Command::Split { lattice, y, m } => {
            let form = load_catalog::<f64>(lattice)?;
            if form.m() != 1 {
                return Err(Error::PreconditionFailed(format!("{lattice} is not a lattice")).into());
            }
            let cutoff = cli.cutoff_norm_sq.unwrap_or_else(|| default_cutoff(form.q()));
            let split = hessian_split_design(form.q(), *y, cutoff, *m)?;
            to_json(&json!({ "id": lattice, "split": split }))
        }
        Command::Certify { source, mode, c, s, potential, m, seed, y_min, y_max, y_steps } => {
            let (id, q) = load_lattice_form(source)?;
            let cutoff = cli.cutoff_norm_sq.unwrap_or_else(|| default_cutoff(&q));
            let opts = CertifyOptions { cutoff, seed: *seed, energy: eopts };
            let need = |flag: &str, v: Option<f64>| v.ok_or_else(|| Failure::Usage(format!("--mode {mode:?} needs --{flag}").to_lowercase()));
            let cert = match mode {
                Mode::Critical => {
                    let pot = match (potential, c, s) {
                        (Some(p), None, None) => *p,
                        (None, Some(c), None) => Potential::exponential(*c)?,
                        (None, None, Some(s)) => Potential::inverse_power(*s)?,
                        _ => return Err(Failure::Usage("--mode critical needs exactly one of --potential, --c, --s".into())),
                    };
                    certify_critical(&id, &q, pot, *m, &opts)?
                }
                Mode::Ps => certify_ps(&id, &q, need("s", *s)?, *m, &opts)?,
                Mode::Fc => certify_fc(&id, &q, need("c", *c)?, *m, &opts)?,
                Mode::Universal => {
                    if !(*y_min > 0.0 && y_max >= y_min && *y_steps >= 1) {
                        return Err(Failure::Usage("need 0 < --y-min <= --y-max and --y-steps >= 1".into()));
                    }
                    let grid: Vec<f64> = if *y_steps == 1 {
                        vec![*y_min]
                    } else {
                        (0..*y_steps).map(|k| y_min + (y_max - y_min) * k as f64 / (*y_steps - 1) as f64).collect()
                    };
                    universal_scan(&id, &q, &grid, &opts)?
                }
            };
            to_json(&cert)
        }
        Command::Optimize { source, potential, grad_tol, max_iters, initial_step, csv } => {
            let (id, form) = load(source)?;
            let opts = DescentOptions { grad_tol: *grad_tol, max_iters: *max_iters, initial_step: *initial_step, energy: eopts, ..Default::default() };
            let trace = descend(&form, *potential, &opts)?;
            if *csv {
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(["iteration", "energy", "gradient_norm", "step_size"]).map_err(|e| Failure::Domain(e.to_string()))?;
                for (k, it) in trace.iterates.iter().enumerate() {
                    w.serialize((k, it.energy, it.gradient_norm, it.step_size)).map_err(|e| Failure::Domain(e.to_string()))?;
                }
                let bytes = w.into_inner().map_err(|e| Failure::Domain(e.to_string()))?;
                return String::from_utf8(bytes).map_err(|e| Failure::Domain(e.to_string()));
            }
            to_json(&json!({
                "id": id,
                "potential": potential.to_string(),
                "converged": trace.converged,
                "iterations": trace.iterations,
                "start_energy": trace.start_energy(),
                "final_energy": trace.final_energy(),
                "iterates": trace.iterates,
                "final_form": trace.final_form.to_json(),
            }))
        }
        Command::Sweep { lattice, m, potential, magnitude, samples, seed } => {
            let form = load_catalog::<f64>(lattice)?;
            if form.m() != 1 {
                return Err(Error::PreconditionFailed(format!("{lattice} is not a lattice")).into());
            }
            let summary = perturbation_sweep(form.q(), *m, *potential, *magnitude, *samples, *seed, &eopts)?;
            to_json(&json!({ "id": lattice, "summary": summary }))
        }
        Command::Catalog => to_json(&json!({ "entries": list_catalog()? })),
    }
}
