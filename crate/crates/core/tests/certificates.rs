use std::f64::consts::PI;

use lattice_energy::calculus::SplitEvaluator;
use lattice_energy::catalog::load_lattice;
use lattice_energy::certify::{certify_critical, certify_fc, certify_ps, universal_scan, CertifyOptions, Verdict};
use lattice_energy::energy::{EnergyOptions, Potential};
use lattice_energy::forms::{PeriodicForm, QuadForm};
use lattice_energy::linalg::Mat;
use lattice_energy::optimize::{descend, perturbation_sweep, perturbed, DescentOptions};
use lattice_energy::Error;

fn opts() -> CertifyOptions {
    CertifyOptions::with_cutoff(6.0)
}

#[test]
fn e8_ps_certificate_and_precondition() {
    let e8 = load_lattice::<f64>("e8").unwrap();
    let cert = certify_ps("e8", &e8, 6.0, 2, &opts()).unwrap();
    assert_eq!(cert.verdict, Verdict::Certified);
    assert!(cert.witnesses["t_coefficient"] > 0.0);
    assert!(matches!(certify_ps("e8", &e8, 3.9, 1, &opts()), Err(Error::PreconditionFailed(_))));
}

#[test]
fn rectangle_is_refuted() {
    let rect = QuadForm::<f64>::from_integer_rows(&[vec![1, 0], vec![0, 4]]).unwrap();
    for c in [0.5, 1.0, PI] {
        let cert = certify_fc("rect", &rect, c, 1, &opts()).unwrap();
        assert_eq!(cert.verdict, Verdict::Refuted, "c={c}");
    }
    let cert = certify_critical("rect", &rect, Potential::InversePower(3.0), 1, &opts()).unwrap();
    assert_eq!(cert.verdict, Verdict::Refuted);
}

#[test]
fn verdicts_do_not_depend_on_the_decomposition() {
    let d4 = load_lattice::<f64>("d4").unwrap();
    let verdicts: Vec<Verdict> =
        (0..4).map(|seed| certify_fc("d4", &d4, 2.0 * PI, 2, &opts().seed(seed)).unwrap().verdict).collect();
    assert!(verdicts.iter().all(|v| *v == Verdict::Certified), "{verdicts:?}");
}

#[test]
fn universal_scans() {
    let grid: Vec<f64> = (1..=100).map(|k| 0.1 * k as f64).collect();
    for id in ["d4", "e8"] {
        let q = load_lattice::<f64>(id).unwrap();
        let cert = universal_scan(id, &q, &grid, &opts()).unwrap();
        assert_eq!(cert.verdict, Verdict::Certified, "{id}: {:?}", cert.witnesses);
        assert!(cert.notes.iter().any(|n| n.contains("grid")));
    }
    let ev = SplitEvaluator::new(&load_lattice::<f64>("e8").unwrap()).unwrap();
    let f: Vec<f64> = [0.5, 1.0, 2.0].iter().map(|&y| ev.eval(y).unwrap().f).collect();
    assert!(f[0] > f[1] && f[1] > f[2], "{f:?}");
    let z2 = QuadForm::<f64>::from_integer_rows(&[vec![1, 0], vec![0, 1]]).unwrap();
    assert!(matches!(universal_scan("z2", &z2, &grid, &opts()), Err(Error::DesignHypothesisFailed { .. })));
}

#[test]
fn certificates_serialize() {
    let a2 = load_lattice::<f64>("a2").unwrap();
    let cert = certify_fc("a2", &a2, 1.0, 3, &opts()).unwrap();
    let v = serde_json::to_value(&cert).unwrap();
    assert_eq!(v["verdict"], "Certified");
    assert_eq!(v["claim"]["kind"], "local_min_fc");
    assert!(v["hypotheses"][0]["verified_up_to"].as_f64().unwrap() >= 6.0);
}

#[test]
fn e8_sweep_stays_above_the_lattice() {
    let e8 = load_lattice::<f64>("e8").unwrap();
    let sweep = perturbation_sweep(&e8, 2, Potential::Exponential(2.0 * PI), 1e-2, 500, 42, &EnergyOptions::default()).unwrap();
    assert_eq!(sweep.deltas.len(), 500);
    assert!(sweep.min_delta > 0.0, "{}", sweep.min_delta);
    assert_eq!(sweep.negative, 0);
}

#[test]
fn descent_ignores_the_choice_of_basis() {
    let d4 = load_lattice::<f64>("d4").unwrap();
    let pot = Potential::Exponential(2.0 * PI);
    let start = perturbed(&PeriodicForm::lattice(d4), 1e-2, 5, 0).unwrap();
    let u = Mat::from_int_rows(&[vec![1, 1, 0, 0], vec![0, 1, 0, 0], vec![0, -1, 1, 0], vec![0, 0, 0, 1]]);
    let moved = start.apply_unimodular(&u).unwrap();
    let a = descend(&start, pot, &DescentOptions::default()).unwrap();
    let b = descend(&moved, pot, &DescentOptions::default()).unwrap();
    assert!(a.converged && b.converged);
    assert!((a.final_energy() - b.final_energy()).abs() < 1e-8 * a.final_energy());
    assert!((a.final_form.q().det() - start.q().det()).abs() < 1e-9);
}
