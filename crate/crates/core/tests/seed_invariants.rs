use quench_core::dynamics::Experiment;
use quench_core::seed::build_initial_h;
use quench_core::solver::{transform_to_similarity, YGrid};
use quench_core::spectral::{decompose, ModeDecomposition};
use quench_core::Parameters;

fn experiment() -> Experiment {
    let p = Parameters::new(1.0, 1.0).unwrap();
    let t0 = p.t_quench - (-6.0f64).exp();
    Experiment::new(p, t0, 9.0)
}

// y-nodes land on x-nodes, so no interpolation enters the modes.
fn aligned_ygrid(exp: &Experiment) -> YGrid {
    let gap = exp.params().t_quench - exp.t0;
    let dx = (exp.grid.x_max - exp.grid.x_min) / (exp.grid.n - 1) as f64;
    let dy = dx / gap.sqrt();
    let half = ((exp.grid.n - 1) / 2) as f64;
    YGrid { y_max: half * dy, n: exp.grid.n }
}

fn initial_modes(exp: &Experiment, d0: f64, d1: f64) -> ModeDecomposition {
    let p = exp.params();
    let h0 = build_initial_h(&exp.seed(d0, d1), p, exp.grid).unwrap();
    let slice = transform_to_similarity(&h0, exp.frame(), p, aligned_ygrid(exp)).unwrap();
    decompose(&slice.q, slice.s, p.k0)
}

#[test]
fn unstable_modes_are_affine_in_the_seed() {
    let exp = experiment();
    let d0s = [-0.1, 0.0, 0.1];
    let d1s = [-0.5, 0.0, 0.5];
    let modes: Vec<Vec<(f64, f64)>> = d0s
        .iter()
        .map(|&a| {
            d1s.iter()
                .map(|&b| {
                    let d = initial_modes(&exp, a, b);
                    (d.r0, d.r1)
                })
                .collect()
        })
        .collect();
    let centre = modes[1][1];
    let slope0 = ((modes[2][1].0 - modes[0][1].0) / 0.2, (modes[2][1].1 - modes[0][1].1) / 0.2);
    let slope1 = ((modes[1][2].0 - modes[1][0].0) / 1.0, (modes[1][2].1 - modes[1][0].1) / 1.0);
    for (i, &a) in d0s.iter().enumerate() {
        for (j, &b) in d1s.iter().enumerate() {
            let pred = (centre.0 + slope0.0 * a + slope1.0 * b, centre.1 + slope0.1 * a + slope1.1 * b);
            let got = modes[i][j];
            assert!((got.0 - pred.0).abs() < 1e-6 && (got.1 - pred.1).abs() < 1e-6, "({a}, {b}): {got:?} vs {pred:?}");
        }
    }
    assert!(slope0.0 > 0.0 && slope1.1 > 0.0);
}

#[test]
fn unperturbed_seed_starts_inside_the_initial_bounds() {
    let exp = experiment();
    let d = initial_modes(&exp, 0.0, 0.0);
    let s = d.s;
    let ls = s.ln();
    let rows = [
        ("q2", d.r2.abs(), ls / (s * s)),
        ("q_minus", d.minus_weighted_norm(), ls / s.powf(2.5)),
        ("q_e", d.exterior_sup(), ls / s),
    ];
    for (name, measured, bound) in rows {
        println!("{name}: measured {measured:.4e} bound {bound:.4e} margin {:.4e}", bound - measured);
        assert!(measured <= bound, "{name}");
    }
}
