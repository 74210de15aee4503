//! Backward solver against the closed-form value function of arithmetic
//! Brownian motion, `v(t, x) = Phi((x + nu (T - t) - K) / (sigma sqrt(T - t)))`.

use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use mvdlmc::control::{solve_control, solve_kbe, Grid1D, KbeOptions};
use mvdlmc::model::{ModelSpec, Observable, ScalarLaw};

const NU: f64 = 0.1;
const SIGMA: f64 = 0.4;
const K: f64 = 2.0;

fn abm() -> ModelSpec {
    ModelSpec::zero_kernel(SIGMA, ScalarLaw::constant(NU), ScalarLaw::constant(0.0), 1.0).unwrap()
}

fn z(t: f64, x: f64) -> f64 {
    let tau = 1.0 - t;
    (x + NU * tau - K) / (SIGMA * tau.sqrt())
}

fn exact_value(t: f64, x: f64) -> f64 {
    Normal::standard().cdf(z(t, x))
}

/// `sigma d/dx log v`.
fn exact_control(t: f64, x: f64) -> f64 {
    let n = Normal::standard();
    let s = z(t, x);
    n.pdf(s) / (n.cdf(s) * (1.0 - t).sqrt())
}

/// Sup error over `t <= 0.9`, `|x| <= 3`, away from the terminal jump.
fn sup_error(dx: f64) -> f64 {
    let grid = Grid1D::new(4.0, dx, 0.2, 1.0).unwrap();
    let v = solve_kbe(&abm(), &Observable::indicator(K), None, &grid, &KbeOptions::default()).unwrap();
    let mut err: f64 = 0.0;
    for n in 0..=grid.n_time {
        let t = grid.t(n);
        if t > 0.9 + 1e-12 {
            continue;
        }
        for i in 0..grid.n_nodes() {
            let x = grid.x(i);
            if x.abs() <= 3.0 + 1e-12 {
                err = err.max((v.at(n, i) - exact_value(t, x)).abs());
            }
        }
    }
    err
}

#[test]
fn interior_sup_error_is_small() {
    let e = sup_error(0.01);
    assert!(e <= 1e-3, "{e}");
}

#[test]
fn error_contracts_under_grid_halving() {
    let (coarse, fine) = (sup_error(0.02), sup_error(0.01));
    assert!(coarse / fine >= 3.0, "{coarse} -> {fine}");
}

#[test]
fn control_matches_the_log_gradient() {
    let grid = Grid1D::new(4.0, 0.01, 0.2, 1.0).unwrap();
    let (v, zeta) =
        solve_control(&abm(), &Observable::indicator(K), None, &grid, &KbeOptions::default()).unwrap();
    let mut checked = 0;
    for n in 0..=grid.n_time {
        let t = grid.t(n);
        if t > 0.5 + 1e-12 {
            continue;
        }
        for i in 0..grid.n_nodes() {
            let x = grid.x(i);
            let want = exact_control(t, x);
            // skip nodes where v is floored, the cap binds, or zeta is ~0
            if x.abs() > 3.0 || v.at(n, i) < 1e-8 || !(1e-2..=19.0).contains(&want) {
                continue;
            }
            let got = zeta.at(n, i);
            assert!((got - want).abs() <= 0.01 * want, "t {t} x {x}: {got} vs {want}");
            checked += 1;
        }
    }
    assert!(checked > 10_000, "{checked}");
}

#[test]
fn control_pushes_towards_the_rare_set() {
    let grid = Grid1D::new(4.0, 0.01, 0.2, 1.0).unwrap();
    let (_, zeta) =
        solve_control(&abm(), &Observable::indicator(K), None, &grid, &KbeOptions::default()).unwrap();
    for &t in &[0.0, 0.5, 0.9] {
        for &x in &[1.5, 1.8, 1.95] {
            assert!(zeta.eval(t, x).unwrap() > 0.0, "t {t} x {x}");
        }
    }
}
