//! Randomized invariants over small periodic forms.

use lattice_energy::calculus::{finite_difference, gradient_general, hessian_general, TangentBasis};
use lattice_energy::catalog::load_lattice;
use lattice_energy::designs::all_shells_design;
use lattice_energy::energy::{energy_with, EnergyOptions, Potential};
use lattice_energy::forms::{inner_product, retract, PeriodicForm, QuadForm};
use lattice_energy::linalg::Mat;
use lattice_energy::{Form32, Form64, QuadForm32};
use proptest::prelude::*;

/// Gram `BᵗB` of a lower-triangular basis with a dominant diagonal.
fn gram(d: usize, diag: &[f64], off: &[f64]) -> QuadForm<f64> {
    let mut b = vec![vec![0.0; d]; d];
    let mut k = 0;
    for i in 0..d {
        b[i][i] = diag[i];
        for j in 0..i {
            b[i][j] = off[k];
            k += 1;
        }
    }
    let rows: Vec<Vec<f64>> = (0..d).map(|i| (0..d).map(|j| (0..d).map(|r| b[r][i] * b[r][j]).sum()).collect()).collect();
    QuadForm::from_rows(&rows).unwrap()
}

prop_compose! {
    fn form(max_m: usize)(d in 2usize..=3, m in 1..=max_m)
        (diag in prop::collection::vec(0.9f64..1.4, d),
         off in prop::collection::vec(-0.4f64..0.4, d * (d - 1) / 2),
         t in prop::collection::vec(0.05f64..0.95, d * (m - 1)),
         d in Just(d)) -> Form64 {
        let mut translations = vec![vec![0.0; d]];
        translations.extend(t.chunks(d).map(|c| c.to_vec()));
        PeriodicForm::new(gram(d, &diag, &off), translations).unwrap()
    }
}

/// A unimodular matrix from elementary column operations.
fn unimodular(d: usize, ops: &[(usize, usize, i64)]) -> Mat<i64> {
    let mut u: Vec<Vec<i64>> = (0..d).map(|i| (0..d).map(|j| i64::from(i == j)).collect()).collect();
    for &(i, j, k) in ops {
        let (i, j) = (i % d, j % d);
        if i != j {
            for row in u.iter_mut() {
                row[i] += k * row[j];
            }
        }
    }
    Mat::from_int_rows(&u)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn pot() -> impl Strategy<Value = Potential> {
    prop_oneof![(0.5f64..3.0).prop_map(Potential::Exponential), (2.6f64..4.0).prop_map(Potential::InversePower)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn energy_is_invariant_under_relabelling(
        p in form(3),
        pot in pot(),
        ops in prop::collection::vec((0usize..3, 0usize..3, -2i64..=2), 0..4),
        shift in prop::collection::vec(-1.0f64..1.0, 3),
    ) {
        let opts = EnergyOptions::default();
        let e = energy_with(&p, pot, &opts).unwrap().value;
        let u = unimodular(p.dim(), &ops);
        let moved = p.apply_unimodular(&u).unwrap();
        prop_assert!(rel(energy_with(&moved, pot, &opts).unwrap().value, e) < 1e-9);
        let shifted = p.translated(&shift[..p.dim()]).unwrap();
        prop_assert!(rel(energy_with(&shifted, pot, &opts).unwrap().value, e) < 1e-9);
        let order: Vec<usize> = (0..p.m()).rev().collect();
        let permuted = p.permuted(&order).unwrap();
        prop_assert!(rel(energy_with(&permuted, pot, &opts).unwrap().value, e) < 1e-9);
    }

    #[test]
    fn retraction_keeps_the_determinant(p in form(3), xi in prop::collection::vec(-1.0f64..1.0, 16), s in -0.3f64..0.3) {
        let basis = TangentBasis::<f64>::new(p.dim(), p.m());
        let dir = basis.to_tangent(&p, &xi[..basis.len()]).unwrap();
        let end = retract(&p, &dir, s).unwrap();
        prop_assert!(rel(end.q().det(), p.q().det()) < 1e-9);
        prop_assert_eq!(end.m(), p.m());
    }

    #[test]
    fn tangent_coordinates_are_orthonormal(p in form(3), xi in prop::collection::vec(-1.0f64..1.0, 16)) {
        let basis = TangentBasis::<f64>::new(p.dim(), p.m());
        let xi = &xi[..basis.len()];
        let v = basis.to_tangent(&p, xi).unwrap();
        // The coordinates are orthonormal for the scalar product taken after
        // moving the base to the identity, where translations are Euclidean.
        let h_only = lattice_energy::forms::TangentVec { h: v.h.clone(), t: vec![vec![0.0; p.dim()]; p.m()] };
        let t_part: f64 = v.t.iter().map(|t| p.q().euclidean(t).iter().map(|x| x * x).sum::<f64>()).sum();
        let norm2 = inner_product(&h_only, &h_only, p.q()).unwrap() + t_part;
        let want: f64 = xi.iter().map(|x| x * x).sum();
        prop_assert!((norm2 - want).abs() < 1e-10 * want.max(1.0), "{norm2} vs {want}");
    }

    #[test]
    fn design_verdicts_survive_a_change_of_basis(ops in prop::collection::vec((0usize..8, 0usize..8, -1i64..=1), 0..6)) {
        let e8 = load_lattice::<f64>("e8").unwrap();
        let moved = PeriodicForm::lattice(e8).apply_unimodular(&unimodular(8, &ops)).unwrap();
        let rep = all_shells_design(moved.q(), 4, 4.0).unwrap();
        prop_assert!(rep.all_designs);
        prop_assert!(rep.reports.iter().all(|r| r.max_residual == 0.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn analytic_derivatives_match_differences(p in form(2), pot in pot()) {
        let opts = EnergyOptions::default();
        let g = gradient_general(&p, pot, &opts).unwrap();
        let gh = hessian_general(&p, pot, &opts).unwrap();
        let fd = finite_difference(&p, pot, 2, None).unwrap();
        let gscale = g.gradient.iter().fold(1e-8f64, |a, v| a.max(v.abs()));
        for (a, b) in g.gradient.iter().zip(&fd.gradient) {
            prop_assert!((a - b).abs() < 1e-5 * gscale, "{a} vs {b}");
        }
        let h = gh.hessian.as_ref().unwrap();
        let hscale = h.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for (a, b) in h.iter().zip(fd.hessian.as_ref().unwrap()) {
            prop_assert!((a - b).abs() < 1e-5 * hscale, "{a} vs {b}");
        }
        prop_assert!(gh.asymmetry().unwrap() <= 1e-12 * hscale);
    }
}

#[test]
fn single_precision_tracks_double() {
    let rows = [vec![2.0f32, 1.0], vec![1.0, 2.0]];
    let q32 = QuadForm32::from_rows(&rows).unwrap();
    let q64 = load_lattice::<f64>("a2").unwrap();
    let pot = Potential::Exponential(1.0);
    let opts = EnergyOptions::absolute(1e-6);
    let e32 = energy_with(&Form32::lattice(q32), pot, &opts).unwrap().value;
    let e64 = energy_with(&Form64::lattice(q64), pot, &opts).unwrap().value;
    assert!((f64::from(e32) - e64).abs() < 1e-5 * e64);
}
