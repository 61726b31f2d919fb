//! One function per subcommand. Each writes its CSV files into `out`.

use crate::config::{Config, InitialData};
use crate::output::{opt, Cell, Output, Table};
use anyhow::Result;
use log::info;
use quench_core::dynamics::*;
use quench_core::profiles::*;
use quench_core::seed::build_initial_h;
use quench_core::solver::{annotate_quench, simulate, SimRecord};
use quench_core::spectral::*;
use quench_core::{Error, GridFunction, Kind};

pub fn spectral_test(_cfg: &Config, out: &mut Output) -> Result<()> {
    let quad = RhoQuadrature::default();
    let basis = HermiteBasis::new(10);
    let gram = basis.gram(&quad);
    let mut t = Table::new(&["l", "m", "gram", "normalized_error"]);
    let mut worst = 0.0f64;
    for (l, row) in gram.iter().enumerate() {
        for (m, g) in row.iter().enumerate() {
            let expected = if l == m { basis.norms_sq[l] } else { 0.0 };
            let normalized = (g - expected).abs() / (basis.norms_sq[l] * basis.norms_sq[m]).sqrt();
            if l != m {
                worst = worst.max(normalized);
            }
            t.row(&[Cell::I(l), Cell::I(m), Cell::F(*g), Cell::F(normalized)]);
        }
    }
    out.write("hermite_orthogonality.csv", &t.into_string())?;
    println!("max normalized off-diagonal {worst:.3e}");

    let mut t = Table::new(&["m", "n", "residual", "order"]);
    for m in 0..=4 {
        let mut previous: Option<f64> = None;
        for n in [201, 401, 801] {
            let g = GridFunction::from_fn(-20.0, 20.0, n, Kind::Q, 0.0, |y| hermite_eval(m, y))?;
            let lg = apply_L(&g);
            let lambda = 1.0 - m as f64 / 2.0;
            let last = g.n() - 1;
            let diff = g.with_values((0..g.n()).map(|i| if i == 0 || i == last { 0.0 } else { lg.values[i] - lambda * g.values[i] }).collect());
            let residual = inner_product_rho(&diff, &diff)?.value.sqrt();
            let order = previous.filter(|p| *p > 1e-9).map(|p| (p / residual).log2());
            t.row(&[Cell::I(m), Cell::I(n), Cell::F(residual), opt(order)]);
            previous = Some(residual);
        }
    }
    out.write("l_operator.csv", &t.into_string())?;

    let ys: Vec<f64> = (0..=40).map(|k| -10.0 + 0.5 * k as f64).collect();
    let mut t = Table::new(&["check", "m", "theta", "max_error"]);
    let theta = 0.6;
    for m in 0..=5 {
        let applied = mehler_apply_fn(theta, |x| hermite_eval(m, x), &ys, 64)?;
        let lambda = 1.0 - m as f64 / 2.0;
        let err = ys
            .iter()
            .zip(&applied)
            .map(|(y, v)| {
                let expect = (lambda * theta).exp() * hermite_eval(m, *y);
                (v - expect).abs() / (1.0 + expect.abs())
            })
            .fold(0.0, f64::max);
        t.row(&[Cell::S("eigenfunction"), Cell::I(m), Cell::F(theta), Cell::F(err)]);
    }
    let f = |x: f64| (x / 3.0).sin() + (-x * x / 10.0).exp();
    let (t1, t2) = (0.3, 0.5);
    let direct = mehler_apply_fn(t1 + t2, f, &ys, 64)?;
    let inner = |x: f64| mehler_apply_fn(t1, f, &[x], 64).map(|v| v[0]).unwrap_or(f64::NAN);
    let composed = mehler_apply_fn(t2, inner, &ys, 64)?;
    let err = direct.iter().zip(&composed).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    t.row(&[Cell::S("semigroup"), Cell::Empty, Cell::F(t1 + t2), Cell::F(err)]);
    out.write("mehler.csv", &t.into_string())?;
    Ok(())
}

pub fn profile_check(cfg: &Config, out: &mut Output) -> Result<()> {
    let p = cfg.parameters()?;
    let beta = p.beta;

    let mut t = Table::new(&["beta", "alpha", "a", "p", "b", "kappa"]);
    t.row(&[Cell::F(p.beta), Cell::F(p.alpha), Cell::F(p.a), Cell::F(p.p), Cell::F(p.b), Cell::F(p.kappa)]);
    out.write("exponents.csv", &t.into_string())?;

    let mut t = Table::new(&["z", "Phi", "Phi_hat", "product_minus_one"]);
    for k in 0..=400 {
        let z = -10.0 + 0.05 * k as f64;
        let (a, b) = (phi_big(&[z], &p), phi_hat(&[z], beta));
        t.row(&[Cell::F(z), Cell::F(a), Cell::F(b), Cell::F(a * b - 1.0)]);
    }
    out.write("profiles.csv", &t.into_string())?;

    let mut t = Table::new(&["r", "H_star", "grad_H_star"]);
    let (r_lo, r_hi) = (1e-6, p.rho0);
    for k in 0..=240 {
        let r = r_lo * (r_hi / r_lo).powf(k as f64 / 240.0);
        let (h, g) = final_profile_radial(r, &p)?;
        t.row(&[Cell::F(r), Cell::F(h), Cell::F(g)]);
    }
    out.write("final_profile.csv", &t.into_string())?;

    let k_end = k_hat(1.0, beta, p.k0)?;
    let mut t = Table::new(&["abs_x", "theta", "round_trip_error", "log_ratio", "H_star_over_k_hat"]);
    for k in 0..=20 {
        let x = 10f64.powf(-2.0 - 0.5 * k as f64);
        let theta = solve_theta(x, p.k0)?;
        let back = quasi_parabola(theta, p.k0);
        let ratio = final_profile(&[x], &p)? / (k_end * theta.powf(1.0 / (beta + 1.0)));
        t.row(&[Cell::F(x), Cell::F(theta), Cell::F((back - x).abs() / x), Cell::F(theta.ln() / (2.0 * x.ln())), Cell::F(ratio)]);
    }
    out.write("theta.csv", &t.into_string())?;

    let mut t = Table::new(&["tau", "k_hat", "k_hat_x_unit_log"]);
    for k in 0..=100 {
        let tau = 0.01 * k as f64;
        let kx = if tau < 1.0 { Some(k_hat_x(tau, &[1.0], beta, p.k0, 1.0)?[0]) } else { None };
        t.row(&[Cell::F(tau), Cell::F(k_hat(tau, beta, p.k0)?), opt(kx)]);
    }
    out.write("k_hat.csv", &t.into_string())?;
    Ok(())
}

fn initial_data(cfg: &Config) -> Result<GridFunction> {
    let p = cfg.parameters()?;
    let g = cfg.physical_grid();
    Ok(match cfg.seed.data {
        InitialData::Prepared => build_initial_h(&cfg.seed_params(), &p, g)?,
        InitialData::Flat => GridFunction::from_fn(g.x_min, g.x_max, g.n, Kind::H, 0.0, |_| cfg.seed.flat_value)?,
    })
}

fn state_table(h: &GridFunction) -> String {
    let grad = h.gradient();
    let mut t = Table::new(&["x", "h", "grad_h"]);
    for (i, (v, g)) in h.values.iter().zip(&grad).enumerate() {
        t.row(&[Cell::F(h.x(i)), Cell::F(*v), Cell::F(*g)]);
    }
    t.into_string()
}

fn quench_summary(record: &SimRecord, steps: usize) -> String {
    let last = record.last();
    let (_, m) = last.min();
    let mut t = Table::new(&["quenched", "t_est", "x0", "t_final", "min_h_final", "steps"]);
    t.row(&[Cell::B(record.quenched), opt(record.estimated_t), opt(record.estimated_x0), Cell::F(last.time), Cell::F(m), Cell::I(steps)]);
    t.into_string()
}

/// Run to `t_end` (or quenching) and annotate the quench when it happens.
fn run(cfg: &Config, t_end: Option<f64>, snapshot_times: &[f64]) -> Result<SimRecord> {
    let problem = cfg.problem()?;
    let h0 = initial_data(cfg)?;
    let mut record = simulate(&h0, t_end, snapshot_times, &problem, |_| true)?;
    if record.quenched {
        annotate_quench(&mut record, problem.params.beta)?;
    }
    Ok(record)
}

pub fn simulate_cmd(cfg: &Config, out: &mut Output) -> Result<()> {
    let record = run(cfg, cfg.window.t_end, &[])?;
    let mut t = Table::new(&["t", "min_h", "argmin_x"]);
    for m in &record.min_h_series {
        t.row(&[Cell::F(m.t), Cell::F(m.min_h), Cell::F(m.argmin_x)]);
    }
    out.write("min_h.csv", &t.into_string())?;
    out.write("final_state.csv", &state_table(record.last()))?;
    out.write("quench_summary.csv", &quench_summary(&record, record.min_h_series.len() - 1))?;
    match (record.estimated_t, record.estimated_x0) {
        (Some(t), Some(x)) => println!("quenched: T_est = {t:.10}, x0 = {x:.6}"),
        _ if cfg.window.t_end.is_some() => println!("reached t = {:.10} without quenching", record.last().time),
        _ => return Err(Error::NoQuench.into()),
    }
    Ok(())
}

pub fn modes(cfg: &Config, out: &mut Output) -> Result<()> {
    let exp = cfg.experiment()?;
    let params = exp.params().clone();
    let times = exp.audit_times(cfg.window.snapshot_ds, exp.s_end);
    let t_end = exp.frame().t_of(exp.s_end);
    let record = run(cfg, Some(t_end), &times)?;
    let series = track_modes(&record, exp.frame(), &params, exp.ygrid())?;
    out.write("modes.csv", &series.to_csv())?;
    out.write("mode_odes.csv", &verify_mode_odes(&series)?.to_csv())?;
    out.write("rate_fit.csv", &fit_rate(&series.s, &series.q_sup)?.to_csv())?;

    let mut t = Table::new(&["s", "inf_V", "s_sup_R"]);
    for m in potential_monitors(&series.s, exp.ygrid(), &params) {
        t.row(&[Cell::F(m.s), Cell::F(m.inf_v), Cell::F(m.scaled_r)]);
    }
    out.write("monitors.csv", &t.into_string())?;
    let errors = intermediate_profile_error(&record, exp.frame(), &params, cfg.window.profile_k)?;
    out.write("profile_error.csv", &profile_error_csv(&errors))?;
    println!("tracked {} slices on s in [{:.3}, {:.3}]", series.len(), series.s[0], series.s[series.len() - 1]);
    Ok(())
}

pub fn shoot_cmd(cfg: &Config, out: &mut Output) -> Result<()> {
    let exp = cfg.experiment()?;
    info!("shooting with {} levels in {:?}", cfg.shoot.levels, cfg.seed_box());
    let result = shoot(&exp, cfg.seed_box(), cfg.shoot.levels, cfg.shoot.freeze_d1)?;
    if let Some(report) = &result.initial_report {
        let audit = report.to_csv();
        print!("initial audit at s = {:.6}\n{audit}", report.s);
        out.write("initial_audit.csv", &audit)?;
    }
    out.write("shoot_history.csv", &result.history_csv())?;

    let mut t = Table::new(&["d0", "d1", "s_max", "s_exit", "exit_condition", "q0", "q1"]);
    for c in &result.corners {
        t.row(&[Cell::F(c.d0), Cell::F(c.d1), Cell::F(c.s_max), Cell::F(c.s_exit), Cell::S(&c.exit_condition), Cell::F(c.modes.0), Cell::F(c.modes.1)]);
    }
    out.write("corners.csv", &t.into_string())?;

    let mut t = Table::new(&["d0", "d1", "s_max", "exit_condition"]);
    t.row(&[Cell::F(result.best_d0), Cell::F(result.best_d1), Cell::F(result.s_max), Cell::S(&result.exit_condition)]);
    out.write("best_seed.csv", &t.into_string())?;
    println!("best seed ({:.10}, {:.10}) trapped to s = {:.4} ({})", result.best_d0, result.best_d1, result.s_max, result.exit_condition);
    Ok(())
}

pub fn final_profile_cmd(cfg: &Config, out: &mut Output) -> Result<()> {
    let record = run(cfg, None, &[])?;
    out.write("quench_summary.csv", &quench_summary(&record, record.min_h_series.len() - 1))?;
    let params = cfg.parameters()?;
    let fp = extract_final_profiles(&record, &params, cfg.window.ratio_points)?;
    out.write("final_profile.csv", &fp.to_csv())?;
    out.write("h_star.csv", &state_table(&fp.h_star))?;
    println!("final profile around x0 = {:.6}", fp.x0);
    Ok(())
}
