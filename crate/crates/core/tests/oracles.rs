//! Energies against closed forms computed independently of the library.

use std::f64::consts::PI;

use lattice_energy::catalog::load_lattice;
use lattice_energy::energy::{energy_with, epstein_zeta, theta_minus_one, EnergyOptions, Potential, RoutePolicy};
use lattice_energy::forms::{PeriodicForm, QuadForm};

fn z(d: usize) -> QuadForm<f64> {
    let rows: Vec<Vec<i64>> = (0..d).map(|i| (0..d).map(|j| i64::from(i == j)).collect()).collect();
    QuadForm::from_integer_rows(&rows).unwrap()
}

/// Jacobi theta sums `Σ_n e^{-c n²}`, `Σ_n (-1)^n e^{-c n²}` and `Σ_n e^{-c (n+1/2)²}`.
fn jacobi(c: f64) -> (f64, f64, f64) {
    let (mut t3, mut t4, mut t2) = (1.0, 1.0, 0.0);
    for n in 1..200 {
        let nf = n as f64;
        let e = (-c * nf * nf).exp();
        t3 += 2.0 * e;
        t4 += if n % 2 == 1 { -2.0 } else { 2.0 } * e;
    }
    for n in 0..200 {
        let h = n as f64 + 0.5;
        t2 += 2.0 * (-c * h * h).exp();
    }
    (t3, t4, t2)
}

fn riemann_zeta(s: f64) -> f64 {
    // Direct sum plus an Euler–Maclaurin tail; ample for s >= 2.
    let n = 10_000;
    let head: f64 = (1..n).map(|k| (k as f64).powf(-s)).sum();
    let nf = n as f64;
    head + nf.powf(1.0 - s) / (s - 1.0) + 0.5 * nf.powf(-s) + s / 12.0 * nf.powf(-s - 1.0)
}

#[test]
fn theta_of_z_at_pi() {
    let v = theta_minus_one(&z(1), PI, 1e-15).unwrap();
    let want: f64 = (1..20).map(|n| 2.0 * (-PI * (n * n) as f64).exp()).sum();
    assert!((v.value - want).abs() < 1e-15);
    assert!((v.value - 0.086_434).abs() < 1e-6);
}

#[test]
fn zeta_of_z_is_twice_riemann() {
    let v = epstein_zeta(&z(1), 1.0, 1e-13).unwrap();
    assert!((v.value - PI * PI / 3.0).abs() < 1e-12);
}

#[test]
fn zeta_of_z2_factorizes() {
    // ζ(Z², s) = 4 ζ(s) β(s); β(2) is Catalan's constant and β(3) = π³/32.
    let catalan = 0.915_965_594_177_219;
    let v = epstein_zeta(&z(2), 2.0, 1e-13).unwrap();
    assert!((v.value - 4.0 * PI * PI / 6.0 * catalan).abs() < 1e-12);
    let v = epstein_zeta(&z(2), 3.0, 1e-13).unwrap();
    let want = 4.0 * riemann_zeta(3.0) * PI.powi(3) / 32.0;
    assert!((v.value - want).abs() < 1e-11, "{} vs {want}", v.value);
}

#[test]
fn d4_and_e8_thetas_from_jacobi() {
    let d4 = load_lattice::<f64>("d4").unwrap();
    let e8 = load_lattice::<f64>("e8").unwrap();
    for c in [0.3, 1.0, PI, 7.0] {
        let (t3, t4, t2) = jacobi(c);
        let want_d4 = 0.5 * (t3.powi(4) + t4.powi(4)) - 1.0;
        let want_e8 = 0.5 * (t3.powi(8) + t4.powi(8) + t2.powi(8)) - 1.0;
        // Small c needs the dual side; the direct sum would exceed the point budget.
        let routes: &[RoutePolicy] = if c < 1.0 { &[RoutePolicy::Auto] } else { &[RoutePolicy::Auto, RoutePolicy::Direct] };
        for &route in routes {
            let opts = EnergyOptions::absolute(1e-13).with_route(route);
            let a = energy_with(&PeriodicForm::lattice(d4.clone()), Potential::Exponential(c), &opts).unwrap().value;
            let b = energy_with(&PeriodicForm::lattice(e8.clone()), Potential::Exponential(c), &opts).unwrap().value;
            assert!((a - want_d4).abs() < 1e-11 * want_d4.max(1.0), "D4 c={c}: {a} vs {want_d4}");
            assert!((b - want_e8).abs() < 1e-11 * want_e8.max(1.0), "E8 c={c}: {b} vs {want_e8}");
        }
    }
}

#[test]
fn e8_zeta_from_eisenstein() {
    // θ_E8 = E4, so r(2n) = 240 σ3(n) and ζ(E8, s) = 240·2^{-s} ζ(s) ζ(s-3).
    let e8 = load_lattice::<f64>("e8").unwrap();
    for s in [5.0, 6.0] {
        let v = epstein_zeta(&e8, s, 1e-13).unwrap().value;
        let want = 240.0 * 2f64.powf(-s) * riemann_zeta(s) * riemann_zeta(s - 3.0);
        assert!((v - want).abs() < 1e-10 * want, "s={s}: {v} vs {want}");
    }
}

#[test]
fn coset_energy_of_z_equals_lattice_energy() {
    // Z = 2Z ∪ (1 + 2Z) as a two-coset form over the Gram (4).
    let q = QuadForm::<f64>::from_integer_rows(&[vec![4]]).unwrap();
    let p = PeriodicForm::new(q, vec![vec![0.0], vec![0.5]]).unwrap();
    let pot = Potential::InversePower(1.0);
    let e = energy_with(&p, pot, &EnergyOptions::absolute(1e-13)).unwrap().value;
    assert!((e - PI * PI / 3.0).abs() < 1e-12);
}
