use quench_core::dynamics::Experiment;
use quench_core::seed::build_initial_h;
use quench_core::solver::*;
use quench_core::{GridFunction, Kind, Parameters};
use std::f64::consts::PI;
use std::sync::Arc;

fn params() -> Parameters {
    Parameters::new(1.0, 1.0).unwrap()
}

fn exact(x: f64, t: f64) -> f64 {
    2.0 + (PI * x).cos() * (-t).exp()
}

fn mms_error(n: usize) -> f64 {
    let mut problem = Problem::new(params());
    problem.boundary = Boundary::Prescribed(Arc::new(exact));
    problem.source = Some(Arc::new(|x, t| {
        let c = (PI * x).cos() * (-t).exp();
        -c + PI * PI * c + 1.0 / exact(x, t)
    }));
    let h0 = GridFunction::from_fn(-1.0, 1.0, n, Kind::H, 0.0, |x| exact(x, 0.0)).unwrap();
    let rec = simulate(&h0, Some(0.05), &[], &problem, |_| true).unwrap();
    let h = rec.last();
    assert!((h.time - 0.05).abs() < 1e-14);
    (0..h.n()).map(|i| (h.values[i] - exact(h.x(i), 0.05)).abs()).fold(0.0, f64::max)
}

pub fn orders(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

#[test]
fn manufactured_solution_is_second_order() {
    let errors: Vec<f64> = [21, 41, 81, 161].iter().map(|&n| mms_error(n)).collect();
    let o = orders(&errors);
    println!("mms errors {errors:?} orders {o:?}");
    assert!(o.iter().all(|v| *v > 1.9), "{o:?}");
}

fn similarity_solution(n: usize) -> GridFunction {
    let p = params();
    let q0 = GridFunction::from_fn(-20.0, 20.0, n, Kind::Q, 8.0, |y| 0.01 * (-y * y / 8.0).exp() * (1.0 + 0.3 * y)).unwrap();
    evolve_similarity(&q0, 8.5, &p, Forcing::PurePower, Terms::ALL, &Edge::Hold).unwrap()
}

#[test]
fn similarity_stepper_is_second_order() {
    let grids: Vec<GridFunction> = [201, 401, 801, 1601].iter().map(|&n| similarity_solution(n)).collect();
    let diff = |a: &GridFunction, b: &GridFunction| {
        let stride = (b.n() - 1) / (a.n() - 1);
        (0..a.n()).map(|i| (a.values[i] - b.values[i * stride]).abs()).fold(0.0, f64::max)
    };
    let d: Vec<f64> = grids.windows(2).map(|w| diff(&w[0], &w[1])).collect();
    let o = orders(&d);
    println!("similarity self-convergence {d:?} orders {o:?}");
    assert!(o.iter().all(|v| *v > 1.9), "{o:?}");
}

#[test]
fn scaling_invariance_converges() {
    let p = params();
    let mut problem = Problem::new(p.clone());
    problem.boundary = Boundary::Neumann;
    let errs: Vec<f64> = [41, 81, 161, 321]
        .iter()
        .map(|&n| {
            let u0 = GridFunction::from_fn(-1.0, 1.0, n, Kind::U, 0.0, |x| h_to_u(1.0 + 0.3 * (2.0 * PI * x).cos(), &p)).unwrap();
            scaling_invariance_check(&u0, 2.0, 0.01, &problem).unwrap()
        })
        .collect();
    let o = orders(&errs);
    println!("scaling discrepancies {errs:?} orders {o:?}");
    assert!(o.iter().all(|v| *v >= 1.9), "{o:?}");
}

#[test]
fn comparison_principle_holds() {
    let p = params();
    let problem = Problem::new(p);
    for n in [51, 101, 201] {
        let lower = GridFunction::from_fn(-1.0, 1.0, n, Kind::H, 0.0, |x| 0.5 + 0.2 * (PI * x).cos().powi(2)).unwrap();
        let upper = GridFunction::from_fn(-1.0, 1.0, n, Kind::H, 0.0, |x| 0.52 + 0.2 * (PI * x).cos().powi(2) + 0.05 * (3.0 * x).sin().powi(2)).unwrap();
        let times = [0.01, 0.02, 0.04];
        let a = simulate(&lower, Some(0.04), &times, &problem, |_| true).unwrap();
        let b = simulate(&upper, Some(0.04), &times, &problem, |_| true).unwrap();
        let slack = 10.0 * lower.dx() * lower.dx();
        for (ga, gb) in a.snapshots.iter().zip(&b.snapshots) {
            assert_eq!(ga.time, gb.time);
            assert!(ga.values.iter().zip(&gb.values).all(|(l, u)| *l <= u + slack));
        }
    }
}

#[test]
fn near_flat_data_follows_the_quench_law() {
    let p = params();
    let mut problem = Problem::new(p);
    problem.boundary = Boundary::Neumann;
    let h0 = GridFunction::from_fn(-1.0, 1.0, 101, Kind::H, 0.0, |x| 1.0 + 0.001 * (PI * x).cos()).unwrap();
    let rec = simulate(&h0, None, &[], &problem, |_| true).unwrap();
    assert!(rec.quenched);
    let invariant: Vec<f64> = rec.min_h_series.iter().map(|m| m.t + m.min_h * m.min_h / 2.0).collect();
    let first = invariant[0];
    for v in &invariant {
        assert!(((v - first) / first).abs() < 0.01, "{v} vs {first}");
    }
}

#[test]
fn physical_and_similarity_routes_agree() {
    let p = params();
    let t0 = p.t_quench - (-6.0f64).exp();
    let exp = Experiment::new(p.clone(), t0, 9.0);
    let frame = exp.frame();
    let h0 = build_initial_h(&exp.seed(0.1125, 0.0), &p, exp.grid).unwrap();
    let (s1, s2) = (6.5, 7.0);
    let rec = simulate(&h0, Some(frame.t_of(s2)), &[frame.t_of(s1), frame.t_of(s2)], &exp.problem, |_| true).unwrap();
    let ygrid = YGrid { y_max: 40.0, n: 1001 };
    let a = transform_to_similarity(&rec.snapshots[1], frame, &p, ygrid).unwrap();
    let b = transform_to_similarity(&rec.snapshots[2], frame, &p, ygrid).unwrap();
    let evolved = evolve_similarity(&a.q, s2, &p, Forcing::PurePower, Terms::ALL, &Edge::Hold).unwrap();
    let gap = (0..evolved.n())
        .filter(|&i| evolved.x(i).abs() <= 10.0)
        .map(|i| (evolved.values[i] - b.q.values[i]).abs())
        .fold(0.0, f64::max);
    let scale = b.w.sup_norm();
    println!("two-route gap {gap:.3e} relative to |w| {scale:.3e}");
    assert!(gap < 1e-3 * scale, "{gap}");
}
