//! Mode time series, mode-ODE residuals, decay-rate fits, the shooting
//! reduction over `(d0, d1)`, and the final and intermediate profiles.

use crate::error::{Error, Result};
use crate::grid::{first_derivative, GridFunction, Kind};
use crate::params::Parameters;
use crate::profiles::{final_profile_radial, phi_hat_prime, phi_hat_radial};
use crate::seed::{
    audit_shrinking_set, build_initial_h, kx_slice, r2_sample_points, AuditInput, PhysicalGrid, SeedParams,
    ShrinkReport, Q0_BOUND, Q1_BOUND,
};
use crate::solver::{detect_quench, simulate, transform_to_similarity, Frame, Problem, SimRecord, SimilaritySlice, YGrid};
use crate::spectral::{decompose, potential_v, remainder_r, ModeDecomposition};
use rayon::prelude::*;
use std::fmt::Write as _;

/// Per-snapshot mode amplitudes and norms of `q`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModeSeries {
    pub s: Vec<f64>,
    pub q0: Vec<f64>,
    pub q1: Vec<f64>,
    pub q2: Vec<f64>,
    /// `sup |q_minus| / (1 + |y|^3)`.
    pub q_minus: Vec<f64>,
    pub q_e: Vec<f64>,
    pub q_sup: Vec<f64>,
    pub grad_q_sup: Vec<f64>,
}

impl ModeSeries {
    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    fn push(&mut self, m: &ModeSample) {
        self.s.push(m.s);
        self.q0.push(m.q0);
        self.q1.push(m.q1);
        self.q2.push(m.q2);
        self.q_minus.push(m.q_minus);
        self.q_e.push(m.q_e);
        self.q_sup.push(m.q_sup);
        self.grad_q_sup.push(m.grad_q_sup);
    }

    /// Samples with `s` in `[lo, hi]`.
    pub fn window(&self, lo: f64, hi: f64) -> ModeSeries {
        let mut out = ModeSeries::default();
        for i in 0..self.len() {
            if self.s[i] >= lo && self.s[i] <= hi {
                out.push(&self.sample(i));
            }
        }
        out
    }

    fn sample(&self, i: usize) -> ModeSample {
        ModeSample {
            s: self.s[i],
            q0: self.q0[i],
            q1: self.q1[i],
            q2: self.q2[i],
            q_minus: self.q_minus[i],
            q_e: self.q_e[i],
            q_sup: self.q_sup[i],
            grad_q_sup: self.grad_q_sup[i],
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("s,q0,q1,q2,q_minus_weighted,q_e_sup,q_sup,grad_q_sup\n");
        for i in 0..self.len() {
            let _ = writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                self.s[i], self.q0[i], self.q1[i], self.q2[i], self.q_minus[i], self.q_e[i], self.q_sup[i], self.grad_q_sup[i]
            );
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
struct ModeSample {
    s: f64,
    q0: f64,
    q1: f64,
    q2: f64,
    q_minus: f64,
    q_e: f64,
    q_sup: f64,
    grad_q_sup: f64,
}

fn covered_sup(g: &GridFunction, values: &[f64], covered: (f64, f64)) -> f64 {
    (0..g.n())
        .filter(|&i| g.x(i) >= covered.0 && g.x(i) <= covered.1)
        .map(|i| values[i].abs())
        .fold(0.0, f64::max)
}

fn mode_sample(slice: &SimilaritySlice, d: &ModeDecomposition) -> ModeSample {
    let grad = slice.q.gradient();
    ModeSample {
        s: slice.s,
        q0: d.r0,
        q1: d.r1,
        q2: d.r2,
        q_minus: d.minus_weighted_norm(),
        q_e: covered_sup(&d.r_e, &d.r_e.values, slice.covered),
        q_sup: covered_sup(&slice.q, &slice.q.values, slice.covered),
        grad_q_sup: covered_sup(&slice.q, &grad, slice.covered),
    }
}

/// Decompose every snapshot with `t < T` at its own `s`.
pub fn track_modes(record: &SimRecord, frame: Frame, params: &Parameters, ygrid: YGrid) -> Result<ModeSeries> {
    let samples = record
        .snapshots
        .par_iter()
        .filter(|g| g.time < frame.t_quench)
        .map(|g| {
            let slice = transform_to_similarity(g, frame, params, ygrid)?;
            let d = decompose(&slice.q, slice.s, params.k0);
            Ok(mode_sample(&slice, &d))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut series = ModeSeries::default();
    for m in &samples {
        if series.s.last().is_some_and(|&last| m.s <= last) {
            continue;
        }
        series.push(m);
    }
    Ok(series)
}

/// Finite-difference weights for derivatives `0..=m` at `x0` on the nodes `xs`.
pub fn fornberg_weights(x0: f64, xs: &[f64], m: usize) -> Vec<Vec<f64>> {
    let n = xs.len();
    let mut c = vec![vec![0.0; n]; m + 1];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = xs[0] - x0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - x0;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// First derivative of samples at node `i` from the `width` nearest nodes.
fn derivative_at(s: &[f64], v: &[f64], i: usize, width: usize) -> f64 {
    let n = s.len();
    let width = width.min(n);
    let start = i.saturating_sub(width / 2).min(n - width);
    let nodes = &s[start..start + width];
    let w = fornberg_weights(s[i], nodes, 1);
    (0..width).map(|k| w[1][k] * v[start + k]).sum()
}

/// Fourth-order derivative of a sampled series and the gap to the second-order one.
pub fn differentiate(s: &[f64], v: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let d4: Vec<f64> = (0..s.len()).map(|i| derivative_at(s, v, i, 5)).collect();
    let d2: Vec<f64> = (0..s.len()).map(|i| derivative_at(s, v, i, 3)).collect();
    let trunc = d4.iter().zip(&d2).map(|(a, b)| (a - b).abs()).collect();
    (d4, trunc)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeResidual {
    pub s: Vec<f64>,
    pub scaled: Vec<f64>,
    /// Scaled difference between fourth- and second-order derivatives.
    pub truncation: Vec<f64>,
}

impl ModeResidual {
    pub fn sup(&self) -> f64 {
        self.scaled.iter().fold(0.0, |m, v| m.max(*v))
    }

    pub fn truncation_sup(&self) -> f64 {
        self.truncation.iter().fold(0.0, |m, v| m.max(*v))
    }

    /// `sup` over the second half of the window divided by `sup` over the first half.
    pub fn growth_ratio(&self) -> f64 {
        let half = self.scaled.len() / 2;
        let first = self.scaled[..half].iter().fold(0.0f64, |m, v| m.max(*v));
        let second = self.scaled[half..].iter().fold(0.0f64, |m, v| m.max(*v));
        second / first
    }
}

/// Scaled residuals `s^2 |q_m' - (1 - m/2) q_m|` (m = 0, 1) and `s^3 |q_2' + 2 q_2 / s|`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeOdeReport {
    pub m0: ModeResidual,
    pub m1: ModeResidual,
    pub m2: ModeResidual,
}

impl ModeOdeReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("s,res_q0,trunc_q0,res_q1,trunc_q1,res_q2,trunc_q2\n");
        for i in 0..self.m0.s.len() {
            let _ = writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                self.m0.s[i],
                self.m0.scaled[i],
                self.m0.truncation[i],
                self.m1.scaled[i],
                self.m1.truncation[i],
                self.m2.scaled[i],
                self.m2.truncation[i]
            );
        }
        out
    }
}

pub fn verify_mode_odes(series: &ModeSeries) -> Result<ModeOdeReport> {
    if series.len() < 5 {
        return Err(Error::InsufficientData(format!("need at least 5 samples, got {}", series.len())));
    }
    let s = &series.s;
    let build = |v: &[f64], lin: &dyn Fn(f64) -> f64, power: i32| {
        let (d, trunc) = differentiate(s, v);
        ModeResidual {
            s: s.clone(),
            scaled: (0..s.len()).map(|i| s[i].powi(power) * (d[i] - lin(s[i]) * v[i]).abs()).collect(),
            truncation: (0..s.len()).map(|i| s[i].powi(power) * trunc[i]).collect(),
        }
    };
    Ok(ModeOdeReport {
        m0: build(&series.q0, &|_| 1.0, 2),
        m1: build(&series.q1, &|_| 0.5, 2),
        m2: build(&series.q2, &|s| -2.0 / s, 3),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RateLaw {
    LogSOverS,
    OneOverS,
    OneOverSqrtS,
}

impl RateLaw {
    pub const ALL: [RateLaw; 3] = [RateLaw::LogSOverS, RateLaw::OneOverS, RateLaw::OneOverSqrtS];

    pub fn eval(self, s: f64) -> f64 {
        match self {
            RateLaw::LogSOverS => s.ln() / s,
            RateLaw::OneOverS => 1.0 / s,
            RateLaw::OneOverSqrtS => 1.0 / s.sqrt(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RateLaw::LogSOverS => "log(s)/s",
            RateLaw::OneOverS => "1/s",
            RateLaw::OneOverSqrtS => "1/sqrt(s)",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LawFit {
    pub law: RateLaw,
    pub c: f64,
    /// Root-mean-square residual of `values - c law(s)`.
    pub rms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    pub fits: Vec<LawFit>,
    pub best: RateLaw,
}

impl RateFit {
    pub fn fit(&self, law: RateLaw) -> LawFit {
        *self.fits.iter().find(|f| f.law == law).expect("every law is fitted")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("law,c,rms,best\n");
        for f in &self.fits {
            let _ = writeln!(out, "{},{:.16e},{:.16e},{}", f.law.name(), f.c, f.rms, f.law == self.best);
        }
        out
    }
}

/// One-parameter least squares of `values ~ c law(s)` for each candidate law.
pub fn fit_rate(s: &[f64], values: &[f64]) -> Result<RateFit> {
    if s.len() != values.len() || s.len() < 10 {
        return Err(Error::InsufficientData(format!("need at least 10 samples, got {}", s.len())));
    }
    let span = s[s.len() - 1] - s[0];
    if span < 2.0 {
        return Err(Error::InsufficientData(format!("need an s-span of at least 2, got {span}")));
    }
    let fits: Vec<LawFit> = RateLaw::ALL
        .iter()
        .map(|&law| {
            let g: Vec<f64> = s.iter().map(|&x| law.eval(x)).collect();
            let c = values.iter().zip(&g).map(|(f, g)| f * g).sum::<f64>() / g.iter().map(|g| g * g).sum::<f64>();
            let ss: f64 = values.iter().zip(&g).map(|(f, g)| (f - c * g).powi(2)).sum();
            LawFit { law, c, rms: (ss / s.len() as f64).sqrt() }
        })
        .collect();
    let best = fits.iter().min_by(|a, b| a.rms.total_cmp(&b.rms)).map(|f| f.law).expect("non-empty");
    Ok(RateFit { fits, best })
}

/// Inputs shared by every trial run of the shooting experiment.
#[derive(Clone)]
pub struct Experiment {
    pub problem: Problem,
    pub grid: PhysicalGrid,
    pub t0: f64,
    pub s_end: f64,
    /// Audit spacing in `s`.
    pub audit_ds: f64,
    /// Largest spacing of the similarity grid.
    pub dy_max: f64,
    pub n_xi: usize,
    /// `R2` radii sampled per side.
    pub n_r2: usize,
    /// Constant of the aggregate `||q||_inf` monitor.
    pub aggregate_c: f64,
}

impl Experiment {
    pub fn new(params: Parameters, t0: f64, s_end: f64) -> Self {
        Experiment {
            problem: Problem::new(params),
            grid: PhysicalGrid::default(),
            t0,
            s_end,
            audit_ds: 0.1,
            dy_max: 0.08,
            n_xi: 11,
            n_r2: 8,
            aggregate_c: 1.0,
        }
    }

    pub fn params(&self) -> &Parameters {
        &self.problem.params
    }

    pub fn frame(&self) -> Frame {
        Frame { t_quench: self.params().t_quench, x0: 0.0 }
    }

    pub fn s0(&self) -> f64 {
        -(self.params().t_quench - self.t0).ln()
    }

    pub fn ygrid(&self) -> YGrid {
        YGrid::for_window(self.params().k0, self.s_end.max(self.s0()), self.dy_max)
    }

    pub fn seed(&self, d0: f64, d1: f64) -> SeedParams {
        SeedParams { d0, d1, t0: self.t0 }
    }

    /// Snapshot times `T - e^(-s)` for `s = s0 + k ds` strictly after `s0`, up to `s_last`.
    pub fn audit_times(&self, ds: f64, s_last: f64) -> Vec<f64> {
        let s0 = self.s0();
        let count = ((s_last - s0) / ds + 1e-9).floor() as usize;
        (1..=count).map(|k| self.frame().t_of(s0 + k as f64 * ds)).collect()
    }

    /// Audit one snapshot against the shrinking set.
    pub fn audit(&self, h: &GridFunction, baseline: &GridFunction) -> Result<ShrinkReport> {
        let params = self.params();
        let frame = self.frame();
        let slice = transform_to_similarity(h, frame, params, self.ygrid())?;
        let d = decompose(&slice.q, slice.s, params.k0);
        let kx = r2_sample_points(h.time, params, frame.x0, self.n_r2)?
            .into_iter()
            .map(|x| kx_slice(h, x, frame, params, self.n_xi))
            .collect::<Result<Vec<_>>>()?;
        let input = AuditInput { decomposition: &d, q: &slice.q, covered: slice.covered, kx: &kx, h, x0: frame.x0 };
        audit_shrinking_set(&input, params, baseline, self.aggregate_c)
    }
}

pub const HORIZON_REACHED: &str = "horizon reached";
pub const QUENCHED_EARLY: &str = "quenched early";

/// Outcome of one simulated seed.
#[derive(Debug, Clone)]
pub struct Trial {
    pub d0: f64,
    pub d1: f64,
    /// Last audited `s` at which every condition held (`s0` if none did).
    pub s_max: f64,
    pub exit_condition: String,
    /// `(q0, q1)` at the exit slice.
    pub modes: (f64, f64),
    pub s_exit: f64,
    pub initial_report: Option<ShrinkReport>,
}

/// Simulate one seed with an audit every `audit_ds` until the first violation or `s_end`.
pub fn run_trial(exp: &Experiment, d0: f64, d1: f64) -> Result<Trial> {
    let params = exp.params();
    let h0 = build_initial_h(&exp.seed(d0, d1), params, exp.grid)?;
    let s0 = exp.s0();
    let times = exp.audit_times(exp.audit_ds, exp.s_end);
    let t_end = times.last().copied().unwrap_or(h0.time);
    let mut trial = Trial {
        d0,
        d1,
        s_max: s0,
        exit_condition: HORIZON_REACHED.to_string(),
        modes: (0.0, 0.0),
        s_exit: s0,
        initial_report: None,
    };
    let mut failure: Option<Error> = None;
    let record = simulate(&h0, Some(t_end), &times, &exp.problem, |h| match exp.audit(h, &h0) {
        Ok(report) => {
            trial.modes = report.modes;
            trial.s_exit = report.s;
            if trial.initial_report.is_none() {
                trial.initial_report = Some(report.clone());
            }
            match report.first_failure() {
                Some(e) => {
                    trial.exit_condition = e.name.to_string();
                    false
                }
                None => {
                    trial.s_max = report.s;
                    true
                }
            }
        }
        Err(e) => {
            failure = Some(e);
            false
        }
    });
    let quenched = match record {
        Ok(r) => r.quenched,
        Err(Error::PositivityLoss(_)) => true,
        Err(e) => return Err(e),
    };
    if let Some(e) = failure {
        match e {
            Error::PositivityLoss(_) => {
                trial.exit_condition = QUENCHED_EARLY.to_string();
                trial.modes.0 = f64::INFINITY;
            }
            other => return Err(other),
        }
    } else if quenched {
        trial.exit_condition = QUENCHED_EARLY.to_string();
        trial.modes.0 = f64::INFINITY;
    }
    Ok(trial)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeedBox {
    pub d0: (f64, f64),
    pub d1: (f64, f64),
}

impl SeedBox {
    fn mid(&self) -> (f64, f64) {
        (0.5 * (self.d0.0 + self.d0.1), 0.5 * (self.d1.0 + self.d1.1))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BisectionStep {
    pub level: usize,
    pub d0: f64,
    pub d1: f64,
    pub s_max: f64,
    /// Best horizon among the bisection centres up to this level.
    pub best_s_max: f64,
    pub exit_condition: String,
    pub q0: f64,
    pub q1: f64,
    /// Coordinate halved after this level (0 for `d0`, 1 for `d1`).
    pub halved: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct ShootResult {
    pub best_d0: f64,
    pub best_d1: f64,
    pub s_max: f64,
    pub exit_condition: String,
    pub history: Vec<BisectionStep>,
    pub corners: Vec<Trial>,
    pub initial_report: Option<ShrinkReport>,
}

impl ShootResult {
    pub fn history_csv(&self) -> String {
        let mut out = String::from("level,d0,d1,s_max,best_s_max,exit_condition,q0,q1,halved\n");
        for h in &self.history {
            let halved = h.halved.map(|c| c.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{},{:.16e},{:.16e},{}",
                h.level, h.d0, h.d1, h.s_max, h.best_s_max, h.exit_condition, h.q0, h.q1, halved
            );
        }
        out
    }
}

fn sign(v: f64) -> i32 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

fn better(a: &Trial, b: &Trial) -> bool {
    let unstable = |t: &Trial| t.modes.0.abs().max(t.modes.1.abs());
    a.s_max > b.s_max || (a.s_max == b.s_max && unstable(a) < unstable(b))
}

/// Nested bisection on `(d0, d1)` toward the seed trapped longest.
///
/// Each level simulates the centre of the current box and halves the
/// coordinate whose mode left the box first, keeping the half in which the
/// exit sign flips. With `levels == 0` only the centre is evaluated. When
/// `freeze_d1` is set, `d1` stays at the centre of its range.
pub fn shoot(exp: &Experiment, seed_box: SeedBox, levels: usize, freeze_d1: bool) -> Result<ShootResult> {
    let mut bx = seed_box;
    if freeze_d1 {
        let mid = 0.5 * (bx.d1.0 + bx.d1.1);
        bx.d1 = (mid, mid);
    }
    let (_, c1) = bx.mid();
    let mut straddle = [false, !freeze_d1];
    let mut orient = [1i32, 1i32];
    let mut corners = Vec::new();
    if levels > 0 {
        let pts: Vec<(f64, f64)> = if freeze_d1 {
            vec![(bx.d0.0, c1), (bx.d0.1, c1)]
        } else {
            vec![(bx.d0.0, bx.d1.0), (bx.d0.1, bx.d1.0), (bx.d0.0, bx.d1.1), (bx.d0.1, bx.d1.1)]
        };
        corners = pts.par_iter().map(|&(a, b)| run_trial(exp, a, b)).collect::<Result<Vec<_>>>()?;
        for coord in 0..2 {
            if coord == 1 && freeze_d1 {
                continue;
            }
            let value = |t: &Trial| if coord == 0 { t.modes.0 } else { t.modes.1 };
            let is_high = |t: &Trial| if coord == 0 { t.d0 == bx.d0.1 } else { t.d1 == bx.d1.1 };
            let signs: Vec<i32> = corners.iter().map(|t| sign(value(t))).collect();
            straddle[coord] = signs.contains(&1) && signs.contains(&-1);
            let mean = |high: bool| {
                let v: Vec<f64> = corners.iter().filter(|t| is_high(t) == high).map(|t| value(t).clamp(-1e6, 1e6)).collect();
                v.iter().sum::<f64>() / v.len() as f64
            };
            orient[coord] = if mean(true) >= mean(false) { 1 } else { -1 };
        }
        if !straddle[0] && !straddle[1] {
            return Err(Error::BoxDoesNotStraddle(format!(
                "exit signs agree at every corner of d0 in [{}, {}], d1 in [{}, {}]",
                bx.d0.0, bx.d0.1, bx.d1.0, bx.d1.1
            )));
        }
    }
    let mut history = Vec::new();
    let mut best: Option<Trial> = None;
    let mut best_centre = f64::NEG_INFINITY;
    let mut initial_report = None;
    for level in 0..=levels {
        let (d0, d1) = bx.mid();
        let trial = run_trial(exp, d0, d1)?;
        if level == 0 {
            initial_report = trial.initial_report.clone();
        }
        best_centre = best_centre.max(trial.s_max);
        let mut step = BisectionStep {
            level,
            d0,
            d1,
            s_max: trial.s_max,
            best_s_max: best_centre,
            exit_condition: trial.exit_condition.clone(),
            q0: trial.modes.0,
            q1: trial.modes.1,
            halved: None,
        };
        if level < levels {
            let mut coord = match trial.exit_condition.as_str() {
                Q0_BOUND | QUENCHED_EARLY => 0,
                Q1_BOUND => 1,
                _ => usize::from(trial.modes.1.abs() > trial.modes.0.abs()),
            };
            if !straddle[coord] {
                coord = 1 - coord;
            }
            let value = if coord == 0 { trial.modes.0 } else { trial.modes.1 };
            let too_high = sign(value) * orient[coord] > 0;
            let range = if coord == 0 { &mut bx.d0 } else { &mut bx.d1 };
            let mid = 0.5 * (range.0 + range.1);
            if too_high {
                range.1 = mid;
            } else {
                range.0 = mid;
            }
            step.halved = Some(coord);
        }
        history.push(step);
        if best.as_ref().is_none_or(|b| better(&trial, b)) {
            best = Some(trial);
        }
    }
    for c in &corners {
        if best.as_ref().is_none_or(|b| better(c, b)) {
            best = Some(c.clone());
        }
    }
    let best = best.expect("at least one trial");
    Ok(ShootResult {
        best_d0: best.d0,
        best_d1: best.d1,
        s_max: best.s_max,
        exit_condition: best.exit_condition,
        history,
        corners,
        initial_report,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioPoint {
    pub dist: f64,
    pub h: f64,
    pub h_star_ref: f64,
    pub h_ratio: f64,
    pub grad: f64,
    pub grad_ref: f64,
    pub grad_ratio: f64,
}

#[derive(Debug, Clone)]
pub struct FinalProfiles {
    pub x0: f64,
    pub h_star: GridFunction,
    pub grad_h_star: GridFunction,
    pub curve: Vec<RatioPoint>,
}

impl FinalProfiles {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("dist,h_star,H_star,h_ratio,grad_h_star,grad_H_star,grad_ratio\n");
        for p in &self.curve {
            let _ = writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                p.dist, p.h, p.h_star_ref, p.h_ratio, p.grad, p.grad_ref, p.grad_ratio
            );
        }
        out
    }
}

/// Ratios `h*/H*` and `|grad h*|/|grad H*|` on `n` log-spaced distances in
/// `[r_min, r_max]`, averaging the two sides of `x0`.
pub fn profile_ratios(h_star: &GridFunction, x0: f64, params: &Parameters, r_min: f64, r_max: f64, n: usize) -> Result<Vec<RatioPoint>> {
    if !(r_min > 0.0 && r_max > r_min) || n < 2 {
        return Err(Error::Domain(format!("bad ratio window [{r_min}, {r_max}] with {n} points")));
    }
    let grad = h_star.with_values(h_star.gradient());
    (0..n)
        .map(|k| {
            let r = r_min * (r_max / r_min).powf(k as f64 / (n - 1) as f64);
            let h = 0.5 * (h_star.interp_linear(x0 + r) + h_star.interp_linear(x0 - r));
            let g = 0.5 * (grad.interp_linear(x0 + r).abs() + grad.interp_linear(x0 - r).abs());
            let (href, gref) = final_profile_radial(r, params)?;
            Ok(RatioPoint { dist: r, h, h_star_ref: href, h_ratio: h / href, grad: g, grad_ref: gref.abs(), grad_ratio: g / gref.abs() })
        })
        .collect()
}

/// The last snapshot of a quenched run, its gradient, and the ratio curves
/// against `H*` outside `5 dx` of the quench point.
pub fn extract_final_profiles(record: &SimRecord, params: &Parameters, n: usize) -> Result<FinalProfiles> {
    if !record.quenched {
        return Err(Error::NoQuench);
    }
    let (_, x0) = match (record.estimated_t, record.estimated_x0) {
        (Some(t), Some(x)) => (t, x),
        _ => detect_quench(record, params.beta)?,
    };
    let h_star = record.last().clone();
    let grad = h_star.with_values(h_star.gradient());
    let grad_h_star = GridFunction { kind: Kind::Q, ..grad };
    let r_min = 5.0 * h_star.dx();
    let curve = profile_ratios(&h_star, x0, params, r_min, params.inner_radius(), n)?;
    Ok(FinalProfiles { x0, h_star, grad_h_star, curve })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileErrorPoint {
    pub t: f64,
    pub s: f64,
    /// `sup |(T-t)^(1/(beta+1))/h - 1/PhiHat(z)|`.
    pub value_error: f64,
    /// Gradient error on `|x - x0| <= K sqrt((T-t)|log(T-t)|)`.
    pub gradient_error: f64,
    /// Weighted gradient error `(T-t)^(1/(beta+1)+1/2) grad h / h^2` on the whole domain.
    pub weighted_gradient_error: f64,
    /// `log|log(T-t)| / |log(T-t)|`.
    pub rate: f64,
}

pub fn profile_error_csv(points: &[ProfileErrorPoint]) -> String {
    let mut out = String::from("t,s,value_error,gradient_error,weighted_gradient_error,rate\n");
    for p in points {
        let _ = writeln!(
            out,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            p.t, p.s, p.value_error, p.gradient_error, p.weighted_gradient_error, p.rate
        );
    }
    out
}

/// Distance of each snapshot from the intermediate profile.
pub fn intermediate_profile_error(record: &SimRecord, frame: Frame, params: &Parameters, k: f64) -> Result<Vec<ProfileErrorPoint>> {
    let beta = params.beta;
    let e = 1.0 / (beta + 1.0);
    record
        .snapshots
        .iter()
        .filter(|g| g.time < frame.t_quench)
        .map(|h| {
            let gap = frame.t_quench - h.time;
            let l = gap.ln().abs();
            let scale = (gap * l).sqrt();
            let grad = first_derivative(&h.values, h.dx());
            let (mut ve, mut ge, mut we) = (0.0f64, 0.0f64, 0.0f64);
            for i in 0..h.n() {
                let dist = h.x(i) - frame.x0;
                let z = dist / scale;
                let ph = phi_hat_radial(z.abs(), beta);
                let dph = phi_hat_prime(z.abs(), beta) * z.signum();
                ve = ve.max((gap.powf(e) / h.values[i] - 1.0 / ph).abs());
                let g_ref = dph / l.sqrt();
                if dist.abs() <= k * scale {
                    ge = ge.max((gap.powf(0.5 - e) * grad[i] - g_ref).abs());
                }
                let weighted = gap.powf(e + 0.5) * grad[i] / (h.values[i] * h.values[i]);
                we = we.max((weighted - g_ref / (ph * ph)).abs());
            }
            Ok(ProfileErrorPoint { t: h.time, s: -gap.ln(), value_error: ve, gradient_error: ge, weighted_gradient_error: we, rate: l.ln() / l })
        })
        .collect()
}

/// `inf V` and `s ||R||_inf` over `|y| <= y_max` at each `s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonitorPoint {
    pub s: f64,
    pub inf_v: f64,
    pub scaled_r: f64,
}

pub fn potential_monitors(s_values: &[f64], ygrid: YGrid, params: &Parameters) -> Vec<MonitorPoint> {
    let ys = ygrid.ys();
    s_values
        .iter()
        .map(|&s| {
            let inf_v = ys.iter().map(|&y| potential_v(y, s, params)).fold(f64::INFINITY, f64::min);
            let sup_r = ys.iter().map(|&y| remainder_r(y, s, params).abs()).fold(0.0, f64::max);
            MonitorPoint { s, inf_v, scaled_r: s * sup_r }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn series_from(s: &[f64], q0: impl Fn(f64) -> f64, q1: impl Fn(f64) -> f64, q2: impl Fn(f64) -> f64) -> ModeSeries {
        let z = vec![0.0; s.len()];
        ModeSeries {
            s: s.to_vec(),
            q0: s.iter().map(|&x| q0(x)).collect(),
            q1: s.iter().map(|&x| q1(x)).collect(),
            q2: s.iter().map(|&x| q2(x)).collect(),
            q_minus: z.clone(),
            q_e: z.clone(),
            q_sup: z.clone(),
            grad_q_sup: z,
        }
    }

    fn grid(lo: f64, hi: f64, ds: f64) -> Vec<f64> {
        let n = ((hi - lo) / ds).round() as usize;
        (0..=n).map(|k| lo + k as f64 * ds).collect()
    }

    #[test]
    fn fornberg_reproduces_classical_stencils() {
        let w = fornberg_weights(0.0, &[-2.0, -1.0, 0.0, 1.0, 2.0], 2);
        let d1 = [1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0];
        let d2 = [-1.0 / 12.0, 4.0 / 3.0, -5.0 / 2.0, 4.0 / 3.0, -1.0 / 12.0];
        for k in 0..5 {
            assert_relative_eq!(w[1][k], d1[k], epsilon = 1e-14);
            assert_relative_eq!(w[2][k], d2[k], epsilon = 1e-14);
        }
    }

    #[test]
    fn synthetic_q0_residual_is_two_e_s_over_s() {
        // q0 = e^s/s^2 gives q0' - q0 = -2 e^s / s^3, so s^2 |.| = 2 e^s / s.
        let s = grid(6.0, 9.0, 0.05);
        let report = verify_mode_odes(&series_from(&s, |x| x.exp() / (x * x), |_| 0.0, |_| 0.0)).unwrap();
        for (i, &x) in s.iter().enumerate() {
            let want = 2.0 * x.exp() / x;
            assert!((report.m0.scaled[i] - want).abs() < 1e-4 * want, "s={x}");
        }
    }

    #[test]
    fn synthetic_kernels_give_zero() {
        let s = grid(6.0, 9.0, 0.05);
        let report = verify_mode_odes(&series_from(&s, |_| 0.0, |x| (x / 2.0).exp(), |x| 3.0 / (x * x))).unwrap();
        for i in 0..s.len() {
            let scale = s[i] * s[i] * (s[i] / 2.0).exp();
            assert!(report.m1.scaled[i] < 1e-6 * scale);
            assert!(report.m2.scaled[i] < 1e-5);
            assert!(report.m2.scaled[i] <= report.m2.truncation[i] + 1e-9);
        }
    }

    #[test]
    fn residual_order_is_four() {
        let err = |ds: f64| {
            let s = grid(6.0, 9.0, ds);
            let r = verify_mode_odes(&series_from(&s, |x| x.exp() / (x * x), |_| 0.0, |_| 0.0)).unwrap();
            s.iter().enumerate().map(|(i, &x)| (r.m0.scaled[i] - 2.0 * x.exp() / x).abs()).fold(0.0, f64::max)
        };
        let order = (err(0.1) / err(0.05)).log2();
        assert!(order > 3.5, "{order}");
    }

    #[test]
    fn short_series_rejected() {
        let s = [6.0, 6.1, 6.2, 6.3];
        assert!(verify_mode_odes(&series_from(&s, |_| 0.0, |_| 0.0, |_| 0.0)).is_err());
    }

    #[test]
    fn rate_self_fits() {
        let s = grid(6.0, 9.0, 0.1);
        let v: Vec<f64> = s.iter().map(|x| 0.7 * x.ln() / x).collect();
        let fit = fit_rate(&s, &v).unwrap();
        assert_eq!(fit.best, RateLaw::LogSOverS);
        assert!((fit.fit(RateLaw::LogSOverS).c - 0.7).abs() < 0.007);
        let v: Vec<f64> = s.iter().map(|x| 2.0 / x.sqrt()).collect();
        assert_eq!(fit_rate(&s, &v).unwrap().best, RateLaw::OneOverSqrtS);
        let v: Vec<f64> = s.iter().map(|x| 0.3 / x).collect();
        assert_eq!(fit_rate(&s, &v).unwrap().best, RateLaw::OneOverS);
        assert!(fit_rate(&s[..5], &v[..5]).is_err());
        assert!(fit_rate(&s[..15], &v[..15]).is_err());
    }

    #[test]
    fn fit_rate_is_scale_equivariant() {
        let s = grid(6.0, 12.0, 0.2);
        let v: Vec<f64> = s.iter().map(|x| x.ln() / x + 0.05 / x + 0.01 * (3.0 * x).sin() / x).collect();
        let a = fit_rate(&s, &v).unwrap();
        let scaled: Vec<f64> = v.iter().map(|x| 3.5 * x).collect();
        let b = fit_rate(&s, &scaled).unwrap();
        assert_eq!(a.best, b.best);
        for law in RateLaw::ALL {
            assert_relative_eq!(b.fit(law).c, 3.5 * a.fit(law).c, max_relative = 1e-12);
        }
    }

    #[test]
    fn final_profile_self_ratio() {
        let p = Parameters::new(1.0, 1.0).unwrap();
        let h = GridFunction::from_fn(-1.0, 1.0, 200_001, Kind::H, 0.1, |x| {
            if x == 0.0 { 1e-12 } else { final_profile_radial(x.abs(), &p).unwrap().0 }
        })
        .unwrap();
        let curve = profile_ratios(&h, 0.0, &p, 1e-3, 0.2, 20).unwrap();
        for c in curve {
            assert!((c.h_ratio - 1.0).abs() < 1e-6);
            assert!((c.grad_ratio - 1.0).abs() < 1e-3, "{c:?}");
        }
    }

    #[test]
    fn final_profile_ratio_translation_equivariant() {
        let p = Parameters::new(1.0, 1.0).unwrap();
        let f = |x: f64| 0.01 + x * x * (1.0 + x * x);
        let a = GridFunction::from_fn(-1.0, 1.0, 2001, Kind::H, 0.1, f).unwrap();
        let b = GridFunction::from_fn(-0.9, 1.1, 2001, Kind::H, 0.1, |x| f(x - 0.1)).unwrap();
        let ca = profile_ratios(&a, 0.0, &p, 0.005, 0.2, 15).unwrap();
        let cb = profile_ratios(&b, 0.1, &p, 0.005, 0.2, 15).unwrap();
        for (u, v) in ca.iter().zip(&cb) {
            assert!((u.h_ratio - v.h_ratio).abs() < 1e-9 && (u.grad_ratio - v.grad_ratio).abs() < 1e-6);
        }
    }

    #[test]
    fn unquenched_record_has_no_final_profile() {
        let p = Parameters::new(1.0, 1.0).unwrap();
        let h = GridFunction::from_fn(-1.0, 1.0, 21, Kind::H, 0.0, |_| 1.0).unwrap();
        let rec = simulate(&h, Some(1e-3), &[], &Problem::new(p.clone()), |_| true).unwrap();
        assert!(matches!(extract_final_profiles(&rec, &p, 10), Err(Error::NoQuench)));
    }

    #[test]
    fn flat_solution_matches_the_profile_at_the_origin() {
        let p = Parameters::new(1.0, 1.0).unwrap();
        let frame = Frame { t_quench: 0.1, x0: 0.0 };
        let t = 0.1 - 1e-3;
        let flat = (2.0f64 * 1e-3).sqrt();
        let h = GridFunction::from_fn(-1.0, 1.0, 3, Kind::H, t, |_| flat).unwrap();
        let rec = SimRecord {
            snapshots: vec![h],
            min_h_series: vec![],
            estimated_t: None,
            estimated_x0: None,
            quenched: false,
            stopped_early: false,
        };
        // Only the centre node sits at z = 0.
        let gap: f64 = 1e-3;
        let at_centre = (gap.sqrt() / flat - 1.0 / phi_hat_radial(0.0, 1.0)).abs();
        assert!(at_centre < 1e-15);
        let pts = intermediate_profile_error(&rec, frame, &p, 1.0).unwrap();
        assert_eq!(pts.len(), 1);
        assert!(pts[0].value_error > 0.0);
    }

    #[test]
    fn monitors_on_a_window() {
        let p = Parameters::new(1.0, 1.0).unwrap();
        let yg = YGrid { y_max: 48.0, n: 1201 };
        let pts = potential_monitors(&[6.0, 7.0, 8.0, 9.0], yg, &p);
        for m in &pts {
            assert!(m.inf_v >= -p.p * p.kappa.powf(p.p - 1.0));
            assert!(m.scaled_r.is_finite() && m.scaled_r > 0.0);
        }
    }
}
