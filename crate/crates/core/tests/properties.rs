use proptest::prelude::*;
use quench_core::dynamics::{fit_rate, RateLaw};
use quench_core::profiles::*;
use quench_core::solver::{step_physical, Problem};
use quench_core::spectral::{decompose, potential_v};
use quench_core::{GridFunction, Kind, Parameters};

fn params(beta: f64) -> Parameters {
    Parameters::new(beta, 1.0).unwrap()
}

fn rk4(mut y: Vec<f64>, t_end: f64, steps: usize, f: impl Fn(&[f64]) -> Vec<f64>) -> Vec<f64> {
    let h = t_end / steps as f64;
    let axpy = |y: &[f64], k: &[f64], c: f64| -> Vec<f64> { y.iter().zip(k).map(|(a, b)| a + c * b).collect() };
    for _ in 0..steps {
        let k1 = f(&y);
        let k2 = f(&axpy(&y, &k1, h / 2.0));
        let k3 = f(&axpy(&y, &k2, h / 2.0));
        let k4 = f(&axpy(&y, &k3, h));
        y = (0..y.len()).map(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect();
    }
    y
}

proptest! {
    #[test]
    fn profiles_are_reciprocal(z in -10.0f64..10.0, b in 0usize..4) {
        let beta = [0.5, 1.0, 2.0, 3.0][b];
        let p = params(beta);
        let prod = phi_big(&[z], &p) * phi_hat(&[z], beta);
        prop_assert!((prod - 1.0).abs() < 1e-12, "{prod}");
    }

    #[test]
    fn grad_phi_hat_is_the_derivative(z in 0.05f64..8.0, beta in 0.5f64..3.0) {
        let h = 1e-5 * z;
        let fd = (phi_hat(&[z + h], beta) - phi_hat(&[z - h], beta)) / (2.0 * h);
        let g = grad_phi_hat(&[z], beta)[0];
        prop_assert!(((g - fd) / g).abs() < 1e-6);
    }

    #[test]
    fn grad_final_profile_is_the_derivative(r in 1e-4f64..0.9, beta in 0.5f64..3.0) {
        let p = params(beta);
        let h = 1e-6 * r;
        let fd = (final_profile(&[r + h], &p).unwrap() - final_profile(&[r - h], &p).unwrap()) / (2.0 * h);
        let g = grad_final_profile(&[r], &p).unwrap()[0];
        prop_assert!(((g - fd) / g).abs() < 1e-6, "r={r} g={g} fd={fd}");
    }

    #[test]
    fn flat_solution_obeys_its_ode(t in 0.0f64..0.09, beta in 0.5f64..3.0) {
        let p = params(beta);
        let dt = 1e-5;
        let deriv = |dt: f64| {
            (flat_solutions(t + dt, &p).unwrap().0 - flat_solutions(t - dt, &p).unwrap().0) / (2.0 * dt)
        };
        let h = flat_solutions(t, &p).unwrap().0;
        let exact = -h.powf(-beta);
        let e1 = (deriv(dt) - exact).abs();
        let e2 = (deriv(dt / 2.0) - exact).abs();
        prop_assert!(e1 < 1e-4 * exact.abs());
        prop_assert!(e2 <= e1 / 3.0 || e2 < 1e-11 * exact.abs(), "e1={e1} e2={e2}");
    }

    #[test]
    fn k_hat_matches_rk4(tau in 0.05f64..0.99, beta in 0.5f64..3.0, k0 in 2.0f64..10.0) {
        let start = phi_hat_radial(k0 / 4.0, beta);
        let y = rk4(vec![start], tau, 2000, |y| vec![-y[0].powf(-beta)]);
        prop_assert!((k_hat(tau, beta, k0).unwrap() - y[0]).abs() < 1e-8);
    }

    #[test]
    fn k_hat_x_matches_rk4(tau in 0.05f64..0.99, beta in 0.5f64..3.0, k0 in 2.0f64..10.0, l in 1.0f64..20.0) {
        let g0 = k_hat_x(0.0, &[1.0], beta, k0, l).unwrap()[0];
        let start = vec![phi_hat_radial(k0 / 4.0, beta), g0];
        let y = rk4(start, tau, 2000, |y| vec![-y[0].powf(-beta), beta * y[0].powf(-beta - 1.0) * y[1]]);
        let g = k_hat_x(tau, &[1.0], beta, k0, l).unwrap()[0];
        prop_assert!((g - y[1]).abs() < 1e-8 * g.abs().max(1.0));
    }

    #[test]
    fn solve_theta_round_trips(log_theta in -600.0f64..-1.05, k0 in 1.0f64..16.0) {
        let theta = log_theta.exp();
        let back = solve_theta(quasi_parabola(theta, k0), k0).unwrap();
        prop_assert!(((back - theta) / theta).abs() < 1e-10);
    }

    #[test]
    fn decompose_then_reconstruct(c in prop::collection::vec(-1.0f64..1.0, 5), width in 1.0f64..6.0, s in 3.0f64..12.0) {
        let r = GridFunction::from_fn(-40.0, 40.0, 801, Kind::Q, s, |y| {
            c[0] + c[1] * y + c[2] * y * y + c[3] * (-(y / width).powi(2)).exp() + c[4] * (y / 10.0).sin()
        }).unwrap();
        let d = decompose(&r, s, 4.0);
        let back = d.reconstruct();
        for (a, b) in back.iter().zip(&r.values) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn accepted_steps_stay_positive(amp in 0.0f64..0.9, k in 1usize..6, dt_max in 1e-6f64..1e-2) {
        let p = params(1.0);
        let problem = Problem::new(p);
        let h = GridFunction::from_fn(-1.0, 1.0, 101, Kind::H, 0.0, |x| {
            0.02 + amp * (1.0 + (k as f64 * std::f64::consts::PI * x).cos()) / 2.0
        }).unwrap();
        let mut state = h;
        for _ in 0..50 {
            let step = step_physical(&state, dt_max, &problem).unwrap();
            prop_assert!(step.state.values.iter().all(|v| *v > 0.0));
            if step.quenched {
                break;
            }
            state = step.state;
        }
    }

    #[test]
    fn fit_rate_scales(c in 0.01f64..100.0, noise in prop::collection::vec(-0.02f64..0.02, 31)) {
        let s: Vec<f64> = (0..31).map(|k| 6.0 + 0.1 * k as f64).collect();
        let v: Vec<f64> = s.iter().zip(&noise).map(|(x, e)| x.ln() / x * (1.0 + e)).collect();
        let scaled: Vec<f64> = v.iter().map(|x| c * x).collect();
        let a = fit_rate(&s, &v).unwrap();
        let b = fit_rate(&s, &scaled).unwrap();
        prop_assert_eq!(a.best, b.best);
        for law in RateLaw::ALL {
            prop_assert!((b.fit(law).c - c * a.fit(law).c).abs() <= 1e-12 * (c * a.fit(law).c).abs());
        }
    }
}

#[test]
fn potential_bound_constant_is_stable() {
    let p = params(1.0);
    let sup = |lo: f64, hi: f64| {
        let mut c = 0.0f64;
        let mut s = lo;
        while s <= hi {
            for k in 0..=200 {
                let y = -10.0 + 0.1 * k as f64;
                c = c.max(s * potential_v(y, s, &p).abs() / (1.0 + y * y));
            }
            s += 1.0;
        }
        c
    };
    let fitted = sup(10.0, 20.0);
    let later = sup(20.0, 100.0);
    assert!(later <= fitted * 1.001, "fitted {fitted}, later {later}");
}

#[test]
fn lemma_ratio_tends_to_one() {
    for beta in [0.5, 1.0, 2.0] {
        let mut p = params(beta);
        p.k0 = 4.0;
        let gaps: Vec<f64> = (3..=7)
            .map(|e| {
                let x = 10f64.powi(-e);
                let theta = solve_theta(x, p.k0).unwrap();
                let ratio = final_profile(&[x], &p).unwrap() / (k_hat(1.0, beta, p.k0).unwrap() * theta.powf(1.0 / (beta + 1.0)));
                (ratio - 1.0).abs()
            })
            .collect();
        assert!(gaps.windows(2).all(|w| w[1] < w[0]), "beta={beta}: {gaps:?}");
    }
}
