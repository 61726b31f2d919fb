//! Prepared initial data, the three space-time regions, the second rescaling
//! around points `x != x0`, and the shrinking-set audit.

use crate::error::{Error, Result};
use crate::grid::{GridFunction, Kind};
use crate::params::Parameters;
use crate::profiles::{final_profile_radial, k_hat, phi_big_radial, solve_theta};
use crate::solver::{Frame, SimRecord};
use crate::spectral::{chi0, ModeDecomposition};
use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeedParams {
    pub d0: f64,
    pub d1: f64,
    pub t0: f64,
}

impl SeedParams {
    pub fn s0(&self, t_quench: f64) -> f64 {
        -(t_quench - self.t0).ln()
    }

    pub fn validate(&self, t_quench: f64) -> Result<()> {
        if !(self.t0 > 0.0 && self.t0 < t_quench) {
            return Err(Error::InvalidSeed(format!("t0 must lie in (0, T), got {}", self.t0)));
        }
        if !(self.d0.abs() <= 1.0 && self.d1.abs() <= 1.0) {
            return Err(Error::InvalidSeed(format!("|d0|, |d1| must not exceed 1, got ({}, {})", self.d0, self.d1)));
        }
        Ok(())
    }
}

/// Uniform physical grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub n: usize,
}

impl Default for PhysicalGrid {
    fn default() -> Self {
        PhysicalGrid { x_min: -2.0, x_max: 2.0, n: 2001 }
    }
}

/// `h(x, t0)`: the intermediate profile perturbed by `(d0 + d1 z) chi0(|z|/(K0/16))`
/// near the origin, glued to the final profile `H*` by `chi1`.
pub fn build_initial_h(seed: &SeedParams, params: &Parameters, grid: PhysicalGrid) -> Result<GridFunction> {
    seed.validate(params.t_quench)?;
    let gap = params.t_quench - seed.t0;
    let log_gap = gap.ln().abs();
    let (alpha, beta) = (params.alpha, params.beta);
    let ex = params.exponents();
    let z_scale = (gap * log_gap).sqrt();
    let chi1_scale = gap.sqrt() * log_gap.powf(beta / 2.0);
    let amplitude = gap.powf(1.0 / (beta + 1.0)) * alpha.powf(1.0 / (beta + 1.0));
    let dx = (grid.x_max - grid.x_min) / (grid.n - 1) as f64;
    let mut values = Vec::with_capacity(grid.n);
    for i in 0..grid.n {
        let x = grid.x_min + i as f64 * dx;
        let z = x / z_scale;
        let chi1 = chi0(x.abs() / chi1_scale);
        let mut h = 0.0;
        if chi1 > 0.0 {
            let bracket = phi_big_radial(z.abs(), &ex) + (seed.d0 + seed.d1 * z) * chi0(z.abs() / (params.k0 / 16.0));
            if !(bracket > 0.0) {
                return Err(Error::InvalidSeed(format!("bracket {bracket} is not positive at x={x}")));
            }
            h += chi1 * amplitude * bracket.powf(-1.0 / alpha);
        }
        if chi1 < 1.0 {
            h += (1.0 - chi1) * final_profile_radial(x.abs(), params)?.0;
        }
        values.push(h);
    }
    GridFunction::new(values, grid.x_min, grid.x_max, Kind::H, seed.t0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegionFlags {
    pub in_r1: bool,
    pub in_r2: bool,
    pub in_r3: bool,
}

/// Bounds `(r1_outer, r2_inner)` = `K0 sqrt((T-t)|log(T-t)|)` and a quarter of it.
fn region_scale(t: f64, params: &Parameters) -> Result<f64> {
    if !(t > 0.0 && t < params.t_quench) {
        return Err(Error::Domain(format!("need 0 < t < T, got {t}")));
    }
    let gap = params.t_quench - t;
    Ok((gap * gap.ln().abs()).sqrt())
}

pub fn classify_region(x: f64, t: f64, params: &Parameters) -> Result<RegionFlags> {
    let scale = region_scale(t, params)?;
    let r = x.abs();
    Ok(RegionFlags {
        in_r1: r <= params.k0 * scale,
        in_r2: r >= params.k0 / 4.0 * scale && r <= params.eps0,
        in_r3: r >= params.eps0 / 4.0,
    })
}

/// `k_x(xi, tau)` for one `x` at the time of one snapshot.
#[derive(Debug, Clone)]
pub struct KxSlice {
    pub x: f64,
    pub theta: f64,
    pub tau: f64,
    pub xi: Vec<f64>,
    pub values: Vec<f64>,
    /// `d k_x / d xi = theta^(1/2 - 1/(beta+1)) h_x(x + xi sqrt(theta), t)`.
    pub grad: Vec<f64>,
}

impl KxSlice {
    pub fn abs_log_theta(&self) -> f64 {
        self.theta.ln().abs()
    }
}

/// Sample `k_x(., tau(x, t))` from one snapshot `h(., t)` centred at `frame.x0`.
pub fn kx_slice(h: &GridFunction, x: f64, frame: Frame, params: &Parameters, n_xi: usize) -> Result<KxSlice> {
    let dist = x - frame.x0;
    if dist == 0.0 {
        return Err(Error::OutOfRegime("second rescaling needs x != x0".into()));
    }
    let theta = solve_theta(dist.abs(), params.k0)?;
    let t_x = frame.t_quench - theta;
    let tau = (h.time - t_x) / theta;
    let e = 1.0 / (params.beta + 1.0);
    let half = params.alpha0 * theta.ln().abs().sqrt();
    let grad_h = h.with_values(h.gradient());
    let xi: Vec<f64> = (0..n_xi)
        .map(|k| if n_xi == 1 { 0.0 } else { -half + 2.0 * half * k as f64 / (n_xi - 1) as f64 })
        .collect();
    let values = xi.iter().map(|v| theta.powf(-e) * h.interp_linear(x + v * theta.sqrt())).collect();
    let grad = xi.iter().map(|v| theta.powf(0.5 - e) * grad_h.interp_linear(x + v * theta.sqrt())).collect();
    Ok(KxSlice { x, theta, tau, xi, values, grad })
}

/// `k_x` over the snapshots of a trajectory, for `tau` in
/// `[max(0, (t0 - t(x))/theta), 1 - 10 dt/theta]`.
#[derive(Debug, Clone)]
pub struct KxSlices {
    pub x: f64,
    pub theta: f64,
    pub slices: Vec<KxSlice>,
}

impl KxSlices {
    /// Linear interpolation in `tau` between stored slices, at the `xi` index `k`.
    pub fn value_at(&self, k: usize, tau: f64) -> Option<f64> {
        let i = self.slices.windows(2).position(|w| w[0].tau <= tau && tau <= w[1].tau)?;
        let (a, b) = (&self.slices[i], &self.slices[i + 1]);
        let f = if b.tau > a.tau { (tau - a.tau) / (b.tau - a.tau) } else { 0.0 };
        Some(a.values[k] * (1.0 - f) + b.values[k] * f)
    }
}

pub fn second_rescale(record: &SimRecord, x: f64, frame: Frame, params: &Parameters, n_xi: usize) -> Result<KxSlices> {
    let dist = (x - frame.x0).abs();
    if dist == 0.0 {
        return Err(Error::OutOfRegime("second rescaling needs x != x0".into()));
    }
    let theta = solve_theta(dist, params.k0)?;
    let t_x = frame.t_quench - theta;
    let series = &record.min_h_series;
    let dt_end = match series.len() {
        0 | 1 => 0.0,
        n => series[n - 1].t - series[n - 2].t,
    };
    let tau_max = 1.0 - 10.0 * dt_end / theta;
    let slices = record
        .snapshots
        .iter()
        .filter(|g| g.time >= t_x && g.time < frame.t_quench && (g.time - t_x) / theta <= tau_max)
        .map(|g| kx_slice(g, x, frame, params, n_xi))
        .collect::<Result<Vec<_>>>()?;
    Ok(KxSlices { x, theta, slices })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShrinkEntry {
    pub name: &'static str,
    pub bound: f64,
    pub measured: f64,
    pub margin: f64,
    pub pass: bool,
}

impl ShrinkEntry {
    pub fn new(name: &'static str, bound: f64, measured: f64) -> Self {
        let margin = bound - measured;
        ShrinkEntry { name, bound, measured, margin, pass: margin >= 0.0 }
    }
}

pub const Q0_BOUND: &str = "q0 bound";
pub const Q1_BOUND: &str = "q1 bound";
pub const Q2_BOUND: &str = "q2 bound";
pub const Q_MINUS_BOUND: &str = "q_minus bound";
pub const Q_E_BOUND: &str = "q_e bound";
pub const KX_CLOSENESS: &str = "k_x closeness";
pub const KX_GRADIENT: &str = "k_x gradient";
pub const H_DRIFT: &str = "h drift";
pub const GRAD_H_DRIFT: &str = "grad h drift";
pub const Q_AGGREGATE: &str = "q aggregate";

#[derive(Debug, Clone)]
pub struct ShrinkReport {
    pub s: f64,
    pub t: f64,
    /// Conditions of the shrinking set, in definition order.
    pub entries: Vec<ShrinkEntry>,
    /// `||q||_inf` against `C A^alpha_bar log s / s`; informational.
    pub aggregate: ShrinkEntry,
    /// Signed `(q0, q1)` at this slice.
    pub modes: (f64, f64),
    pub baseline: GridFunction,
}

impl ShrinkReport {
    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn first_failure(&self) -> Option<&ShrinkEntry> {
        self.entries.iter().find(|e| !e.pass)
    }

    pub fn entry(&self, name: &str) -> Option<&ShrinkEntry> {
        self.entries.iter().chain(std::iter::once(&self.aggregate)).find(|e| e.name == name)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("name,bound,measured,margin,pass\n");
        for e in self.entries.iter().chain(std::iter::once(&self.aggregate)) {
            let _ = writeln!(out, "{},{:.16e},{:.16e},{:.16e},{}", e.name, e.bound, e.measured, e.margin, e.pass);
        }
        out
    }
}

/// What the audit needs from one time slice.
pub struct AuditInput<'a> {
    pub decomposition: &'a ModeDecomposition,
    /// `q` on the similarity grid and the part of it inside the physical domain.
    pub q: &'a GridFunction,
    pub covered: (f64, f64),
    pub kx: &'a [KxSlice],
    /// `h(., t)` on the physical grid.
    pub h: &'a GridFunction,
    pub x0: f64,
}

/// Check every inequality of the shrinking set at one slice.
pub fn audit_shrinking_set(input: &AuditInput, params: &Parameters, baseline: &GridFunction, aggregate_c: f64) -> Result<ShrinkReport> {
    let d = input.decomposition;
    let s = d.s;
    let a = params.a_box;
    let ls = s.ln();
    let in_cover = |y: f64| y >= input.covered.0 && y <= input.covered.1;
    let q_e_sup = (0..d.r_e.n())
        .filter(|&i| in_cover(d.r_e.x(i)))
        .map(|i| d.r_e.values[i].abs())
        .fold(0.0, f64::max);
    let q_sup = (0..input.q.n())
        .filter(|&i| in_cover(input.q.x(i)))
        .map(|i| input.q.values[i].abs())
        .fold(0.0, f64::max);
    let mut entries = vec![
        ShrinkEntry::new(Q0_BOUND, a / (s * s), d.r0.abs()),
        ShrinkEntry::new(Q1_BOUND, a / (s * s), d.r1.abs()),
        ShrinkEntry::new(Q2_BOUND, a * a * ls / (s * s), d.r2.abs()),
        ShrinkEntry::new(Q_MINUS_BOUND, a.powf(params.alpha_under) * ls / s.powf(2.5), d.minus_weighted_norm()),
        ShrinkEntry::new(Q_E_BOUND, a.powf(params.alpha_bar) * ls / s, q_e_sup),
    ];
    let mut closeness = 0.0f64;
    let mut grad_scaled = 0.0f64;
    for slice in input.kx {
        let target = k_hat(slice.tau.clamp(0.0, 1.0), params.beta, params.k0)?;
        for v in &slice.values {
            closeness = closeness.max((v - target).abs());
        }
        for g in &slice.grad {
            grad_scaled = grad_scaled.max(g.abs() * slice.abs_log_theta().sqrt());
        }
    }
    entries.push(ShrinkEntry::new(KX_CLOSENESS, params.delta0, closeness));
    entries.push(ShrinkEntry::new(KX_GRADIENT, params.c0, grad_scaled));
    if !input.h.same_grid(baseline) {
        return Err(Error::GridMismatch("baseline and snapshot grids differ".into()));
    }
    let gh = input.h.gradient();
    let gb = baseline.gradient();
    let (mut drift, mut grad_drift) = (0.0f64, 0.0f64);
    for i in 0..input.h.n() {
        if (input.h.x(i) - input.x0).abs() >= params.eps0 / 4.0 {
            drift = drift.max((input.h.values[i] - baseline.values[i]).abs());
            grad_drift = grad_drift.max((gh[i] - gb[i]).abs());
        }
    }
    entries.push(ShrinkEntry::new(H_DRIFT, params.eta0, drift));
    entries.push(ShrinkEntry::new(GRAD_H_DRIFT, params.eta0, grad_drift));
    let aggregate = ShrinkEntry::new(Q_AGGREGATE, aggregate_c * a.powf(params.alpha_bar) * ls / s, q_sup);
    Ok(ShrinkReport {
        s,
        t: input.h.time,
        entries,
        aggregate,
        modes: (d.r0, d.r1),
        baseline: baseline.clone(),
    })
}

/// Points of `R2` at time `t` where the second rescaling is sampled:
/// `n` log-spaced radii per side.
pub fn r2_sample_points(t: f64, params: &Parameters, x0: f64, n: usize) -> Result<Vec<f64>> {
    let scale = region_scale(t, params)?;
    let lo = params.k0 / 4.0 * scale;
    let hi = params.eps0;
    if !(lo < hi) || n == 0 {
        return Ok(Vec::new());
    }
    let mut out = Vec::with_capacity(2 * n);
    for k in 0..n {
        let f = if n == 1 { 0.0 } else { k as f64 / (n - 1) as f64 };
        let r = lo * (hi / lo).powf(f);
        out.push(x0 - r);
        out.push(x0 + r);
    }
    Ok(out)
}
