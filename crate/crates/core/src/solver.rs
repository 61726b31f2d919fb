//! Time integration in physical variables `(x, t)` and in similarity
//! variables `(y, s)`, the changes of variables between them, and quench
//! detection.

use crate::error::{Error, Result};
use crate::grid::{first_derivative, second_derivative, GridFunction, Kind, MonotoneCubic};
use crate::params::Parameters;
use crate::spectral::{phi_jet, potential_v, remainder_r};
use std::f64::consts::PI;
use std::sync::Arc;

/// Space-time function `(x, t) -> value`.
pub type SpaceTimeFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// The absorption `F(h)` in `h_t = h_xx - F(h)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Forcing {
    /// `F(h) = h^(-beta)`.
    PurePower,
    /// `F(h) = h^(-beta) - 4 pi H0 e^(-h)`.
    Vortex { h0: f64 },
}

impl Forcing {
    pub fn eval(self, h: f64, beta: f64) -> f64 {
        match self {
            Forcing::PurePower => h.powf(-beta),
            Forcing::Vortex { h0 } => h.powf(-beta) - 4.0 * PI * h0 * (-h).exp(),
        }
    }

    /// Lower-order term `f~(u)` of the `u`-equation; zero for the pure power.
    pub fn u_perturbation(self, u: f64, params: &Parameters) -> f64 {
        match self {
            Forcing::PurePower => 0.0,
            Forcing::Vortex { h0 } => {
                let (alpha, beta) = (params.alpha, params.beta);
                let h = alpha.powf(1.0 / (beta + 1.0)) * u.powf(-1.0 / alpha);
                -alpha * (u / h) * 4.0 * PI * h0 * (-h).exp()
            }
        }
    }
}

#[derive(Clone)]
pub enum Boundary {
    /// End values stay at their initial values.
    Dirichlet,
    /// Reflecting ends (zero flux).
    Neumann,
    /// End values follow a prescribed function of `(x, t)`.
    Prescribed(SpaceTimeFn),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scheme {
    pub c_cfl: f64,
    pub c_stiff: f64,
    pub dt_max: f64,
    /// `min h` below which the run reports quenching.
    pub quench_threshold: f64,
    pub max_halvings: u32,
    pub max_steps: usize,
}

impl Default for Scheme {
    fn default() -> Self {
        Scheme {
            c_cfl: 0.25,
            c_stiff: 0.05,
            dt_max: 1e-3,
            quench_threshold: 1e-5,
            max_halvings: 40,
            max_steps: 50_000_000,
        }
    }
}

/// Everything needed to advance `h` besides the state itself.
#[derive(Clone)]
pub struct Problem {
    pub params: Parameters,
    pub forcing: Forcing,
    pub boundary: Boundary,
    pub source: Option<SpaceTimeFn>,
    pub scheme: Scheme,
}

impl Problem {
    pub fn new(params: Parameters) -> Self {
        Problem {
            params,
            forcing: Forcing::PurePower,
            boundary: Boundary::Dirichlet,
            source: None,
            scheme: Scheme::default(),
        }
    }

    fn rhs(&self, v: &[f64], x_min: f64, dx: f64, t: f64) -> Vec<f64> {
        let n = v.len();
        let beta = self.params.beta;
        let mut out = vec![0.0; n];
        let neumann = matches!(self.boundary, Boundary::Neumann);
        for i in 0..n {
            let lap = if i == 0 {
                if neumann { 2.0 * (v[1] - v[0]) / (dx * dx) } else { continue }
            } else if i == n - 1 {
                if neumann { 2.0 * (v[n - 2] - v[n - 1]) / (dx * dx) } else { continue }
            } else {
                (v[i + 1] - 2.0 * v[i] + v[i - 1]) / (dx * dx)
            };
            let mut r = lap - self.forcing.eval(v[i], beta);
            if let Some(src) = &self.source {
                r += src(x_min + i as f64 * dx, t);
            }
            out[i] = r;
        }
        out
    }

    fn apply_boundary(&self, v: &mut [f64], start: &[f64], x_min: f64, x_max: f64, t: f64) {
        let n = v.len();
        match &self.boundary {
            Boundary::Dirichlet => {
                v[0] = start[0];
                v[n - 1] = start[n - 1];
            }
            Boundary::Neumann => {}
            Boundary::Prescribed(g) => {
                v[0] = g(x_min, t);
                v[n - 1] = g(x_max, t);
            }
        }
    }

    /// Stable step size for the current state.
    pub fn step_size(&self, state: &GridFunction, dt_max: f64) -> f64 {
        let dx = state.dx();
        let (_, m) = state.min();
        dt_max
            .min(self.scheme.dt_max)
            .min(self.scheme.c_cfl * dx * dx)
            .min(self.scheme.c_stiff * m.powf(self.params.beta + 1.0))
    }
}

#[derive(Debug, Clone)]
pub struct Step {
    pub state: GridFunction,
    pub dt: f64,
    /// `min h` fell below the quench threshold.
    pub quenched: bool,
}

/// One accepted Heun (RK2) step of `h_t = h_xx - F(h) + source`.
///
/// The step is `min(dt_max, c_cfl dx^2, c_stiff (min h)^(beta+1))`, halved
/// until every stage stays positive.
pub fn step_physical(state: &GridFunction, dt_max: f64, problem: &Problem) -> Result<Step> {
    let (x_min, x_max, dx, t) = (state.x_min, state.x_max, state.dx(), state.time);
    let mut dt = problem.step_size(state, dt_max);
    let v = &state.values;
    let k1 = problem.rhs(v, x_min, dx, t);
    for _ in 0..=problem.scheme.max_halvings {
        let mut stage: Vec<f64> = v.iter().zip(&k1).map(|(a, k)| a + dt * k).collect();
        problem.apply_boundary(&mut stage, v, x_min, x_max, t + dt);
        if stage.iter().all(|h| *h > 0.0) {
            let k2 = problem.rhs(&stage, x_min, dx, t + dt);
            let mut next: Vec<f64> = (0..v.len()).map(|i| v[i] + 0.5 * dt * (k1[i] + k2[i])).collect();
            problem.apply_boundary(&mut next, v, x_min, x_max, t + dt);
            if next.iter().all(|h| *h > 0.0) {
                let state = GridFunction { values: next, time: t + dt, ..state.clone() };
                let quenched = state.min().1 < problem.scheme.quench_threshold;
                return Ok(Step { state, dt, quenched });
            }
        }
        dt *= 0.5;
    }
    Err(Error::PositivityLoss(format!("no positive step at t={t} after step halving")))
}

/// Snapshot of the running minimum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinSample {
    pub t: f64,
    pub min_h: f64,
    pub argmin_x: f64,
}

#[derive(Debug, Clone)]
pub struct SimRecord {
    pub snapshots: Vec<GridFunction>,
    pub min_h_series: Vec<MinSample>,
    pub estimated_t: Option<f64>,
    pub estimated_x0: Option<f64>,
    pub quenched: bool,
    /// Set when the observer asked to stop.
    pub stopped_early: bool,
}

impl SimRecord {
    pub fn last(&self) -> &GridFunction {
        self.snapshots.last().expect("record holds at least the initial snapshot")
    }
}

fn sample(state: &GridFunction) -> MinSample {
    let (i, m) = state.min();
    MinSample { t: state.time, min_h: m, argmin_x: state.x(i) }
}

/// Integrate from `h0` until `t_end` (or quenching), storing a snapshot at
/// each requested time in `snapshot_times` that the run reaches. The
/// observer sees every snapshot and returns `false` to stop the run.
pub fn simulate(
    h0: &GridFunction,
    t_end: Option<f64>,
    snapshot_times: &[f64],
    problem: &Problem,
    mut observer: impl FnMut(&GridFunction) -> bool,
) -> Result<SimRecord> {
    if h0.kind != Kind::H {
        return Err(Error::Domain("simulate expects an h grid function".into()));
    }
    let mut times: Vec<f64> = snapshot_times.iter().copied().filter(|t| *t > h0.time).collect();
    times.sort_by(|a, b| a.total_cmp(b));
    times.dedup();
    let mut record = SimRecord {
        snapshots: vec![h0.clone()],
        min_h_series: vec![sample(h0)],
        estimated_t: None,
        estimated_x0: None,
        quenched: false,
        stopped_early: false,
    };
    if !observer(h0) {
        record.stopped_early = true;
        return Ok(record);
    }
    let mut state = h0.clone();
    let mut next_snap = 0;
    for _ in 0..problem.scheme.max_steps {
        let mut limit = f64::INFINITY;
        if let Some(&ts) = times.get(next_snap) {
            limit = limit.min(ts - state.time);
        }
        if let Some(te) = t_end {
            if state.time >= te {
                break;
            }
            limit = limit.min(te - state.time);
        }
        let step = step_physical(&state, limit, problem)?;
        state = step.state;
        let hit_snapshot = times.get(next_snap).is_some_and(|&ts| state.time >= ts * (1.0 - 1e-15));
        if hit_snapshot {
            state.time = times[next_snap];
        }
        if let Some(te) = t_end {
            if (te - state.time).abs() <= 1e-15 * te.abs().max(1.0) {
                state.time = te;
            }
        }
        record.min_h_series.push(sample(&state));
        if step.quenched {
            record.quenched = true;
            record.snapshots.push(state);
            return Ok(record);
        }
        if hit_snapshot {
            next_snap += 1;
            record.snapshots.push(state.clone());
            if !observer(&state) {
                record.stopped_early = true;
                return Ok(record);
            }
        }
    }
    if record.snapshots.last().map(|s| s.time) != Some(state.time) {
        record.snapshots.push(state);
    }
    Ok(record)
}

/// Quench time and point from the tail of the minimum series.
///
/// Along the flat law `t + (min h)^(beta+1)/(beta+1)` is constant, so a
/// least-squares line of that quantity against `(min h)^(beta+1)` over the
/// last decade of `min h` extrapolates to `T` at `min h = 0`. The quench
/// point is the parabolic refinement of the final snapshot's argmin.
pub fn detect_quench(record: &SimRecord, beta: f64) -> Result<(f64, f64)> {
    let series = &record.min_h_series;
    let last = series.last().ok_or(Error::NoQuench)?;
    let first = series.first().ok_or(Error::NoQuench)?;
    if !(last.min_h * 10.0 <= first.min_h) {
        return Err(Error::NoQuench);
    }
    let start = series.iter().rposition(|m| m.min_h >= 10.0 * last.min_h).ok_or(Error::NoQuench)?;
    let tail = &series[start..];
    if tail.len() < 3 || tail.windows(2).any(|w| w[1].min_h > w[0].min_h) {
        return Err(Error::NoQuench);
    }
    let e = beta + 1.0;
    let pts: Vec<(f64, f64)> = tail.iter().map(|m| (m.min_h.powf(e), m.t + m.min_h.powf(e) / e)).collect();
    let n = pts.len() as f64;
    let (mx, my) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x / n, b + y / n));
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let t_est = my - slope * mx;
    Ok((t_est, argmin_refined(record.last())))
}

fn argmin_refined(g: &GridFunction) -> f64 {
    let (i, _) = g.min();
    if i == 0 || i + 1 == g.n() {
        return g.x(i);
    }
    let (a, b, c) = (g.values[i - 1], g.values[i], g.values[i + 1]);
    let curv = a - 2.0 * b + c;
    let offset = if curv > 0.0 { 0.5 * (a - c) / curv } else { 0.0 };
    g.x(i) + offset.clamp(-0.5, 0.5) * g.dx()
}

/// Record `estimated_t` and `estimated_x0` in place.
pub fn annotate_quench(record: &mut SimRecord, beta: f64) -> Result<(f64, f64)> {
    let (t, x0) = detect_quench(record, beta)?;
    record.estimated_t = Some(t);
    record.estimated_x0 = Some(x0);
    Ok((t, x0))
}

/// Centre and quench time defining `y = (x - x0)/sqrt(T - t)`, `s = -log(T - t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub t_quench: f64,
    pub x0: f64,
}

impl Frame {
    pub fn s_of(&self, t: f64) -> Result<f64> {
        if !(t < self.t_quench) {
            return Err(Error::Domain(format!("need t < T, got t={t}, T={}", self.t_quench)));
        }
        Ok(-(self.t_quench - t).ln())
    }

    pub fn t_of(&self, s: f64) -> f64 {
        self.t_quench - (-s).exp()
    }
}

/// Uniform symmetric similarity grid `|y| <= y_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YGrid {
    pub y_max: f64,
    pub n: usize,
}

impl YGrid {
    pub fn dy(&self) -> f64 {
        2.0 * self.y_max / (self.n - 1) as f64
    }

    pub fn ys(&self) -> Vec<f64> {
        let dy = self.dy();
        (0..self.n).map(|i| -self.y_max + i as f64 * dy).collect()
    }

    /// Grid for a window ending at `s_end`: `y_max = max(4 K0 sqrt(s_end), 40)`,
    /// spacing at most `dy_max`.
    pub fn for_window(k0: f64, s_end: f64, dy_max: f64) -> Self {
        let y_max = (4.0 * k0 * s_end.sqrt()).max(40.0);
        let cells = (2.0 * y_max / dy_max).ceil() as usize;
        YGrid { y_max, n: cells + 1 }
    }
}

#[derive(Debug, Clone)]
pub struct SimilaritySlice {
    pub w: GridFunction,
    pub q: GridFunction,
    pub s: f64,
    /// The part of the `y`-grid that maps inside the physical domain.
    pub covered: (f64, f64),
}

impl SimilaritySlice {
    pub fn is_covered(&self, y: f64) -> bool {
        y >= self.covered.0 && y <= self.covered.1
    }
}

/// `u = alpha^(alpha/(beta+1)) / h^alpha`.
pub fn h_to_u(h: f64, params: &Parameters) -> f64 {
    params.alpha.powf(params.alpha / (params.beta + 1.0)) / h.powf(params.alpha)
}

pub fn u_to_h(u: f64, params: &Parameters) -> f64 {
    (params.alpha.powf(params.alpha / (params.beta + 1.0)) / u).powf(1.0 / params.alpha)
}

/// Map `h(., t)` to `w` and `q = w - phi` on the similarity grid. Points
/// outside the physical domain take the boundary value of `h` (the Dirichlet
/// image).
pub fn transform_to_similarity(h: &GridFunction, frame: Frame, params: &Parameters, ygrid: YGrid) -> Result<SimilaritySlice> {
    if h.kind != Kind::H {
        return Err(Error::Domain("transform expects an h grid function".into()));
    }
    let s = frame.s_of(h.time)?;
    let scale = (frame.t_quench - h.time).sqrt();
    let u_grid = h.with_values(h.values.iter().map(|v| h_to_u(*v, params)).collect());
    let interp = MonotoneCubic::from_grid(&u_grid)?;
    let shrink = (-s / (params.p - 1.0)).exp();
    let ys = ygrid.ys();
    let w: Vec<f64> = ys.iter().map(|y| shrink * interp.eval(frame.x0 + y * scale)).collect();
    let q: Vec<f64> = ys.iter().zip(&w).map(|(y, w)| w - phi_jet(*y, s, params).value).collect();
    let covered = ((h.x_min - frame.x0) / scale, (h.x_max - frame.x0) / scale);
    Ok(SimilaritySlice {
        w: GridFunction::new(w, -ygrid.y_max, ygrid.y_max, Kind::W, s)?,
        q: GridFunction::new(q, -ygrid.y_max, ygrid.y_max, Kind::Q, s)?,
        s,
        covered,
    })
}

/// Inverse of [`transform_to_similarity`] onto a physical grid `[x_min, x_max]` with `n` points.
pub fn transform_to_physical(q: &GridFunction, frame: Frame, params: &Parameters, x_min: f64, x_max: f64, n: usize) -> Result<GridFunction> {
    let s = q.time;
    let t = frame.t_of(s);
    let scale = (frame.t_quench - t).sqrt();
    let grow = (s / (params.p - 1.0)).exp();
    let mut h_on_y = Vec::with_capacity(q.n());
    for i in 0..q.n() {
        let w = q.values[i] + phi_jet(q.x(i), s, params).value;
        if !(w > 0.0) {
            return Err(Error::PositivityLoss(format!("phi + q = {w} at y={}", q.x(i))));
        }
        h_on_y.push(u_to_h(w * grow, params));
    }
    let interp = MonotoneCubic::new(q.xs(), h_on_y)?;
    GridFunction::from_fn(x_min, x_max, n, Kind::H, t, |x| interp.eval((x - frame.x0) / scale))
}

/// Terms of the `q`-equation switched on in [`step_similarity`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Terms {
    pub potential: bool,
    pub quadratic: bool,
    pub gradient: bool,
    pub remainder: bool,
    pub lower_order: bool,
}

impl Terms {
    pub const ALL: Terms = Terms { potential: true, quadratic: true, gradient: true, remainder: true, lower_order: true };
    pub const LINEAR_ONLY: Terms = Terms { potential: false, quadratic: false, gradient: false, remainder: false, lower_order: false };
}

/// Edge values of the similarity grid.
#[derive(Clone)]
pub enum Edge {
    /// Keep the current end values.
    Hold,
    /// End values from a function of `(y, s)`.
    Prescribed(SpaceTimeFn),
}

fn q_rhs(q: &[f64], s: f64, dy: f64, ys: &[f64], params: &Parameters, forcing: Forcing, terms: Terms) -> Result<Vec<f64>> {
    let n = q.len();
    let d1 = first_derivative(q, dy);
    let d2 = second_derivative(q, dy);
    let (p, a) = (params.p, params.a);
    let mut out = vec![0.0; n];
    for i in 1..n - 1 {
        let y = ys[i];
        let j = phi_jet(y, s, params);
        let mut r = d2[i] - 0.5 * y * d1[i] + q[i];
        let total = j.value + q[i];
        if (terms.quadratic || terms.gradient || terms.lower_order) && !(total > 0.0) {
            return Err(Error::PositivityLoss(format!("phi + q = {total} at y={y}, s={s}")));
        }
        if terms.potential {
            r += potential_v(y, s, params) * q[i];
        }
        if terms.quadratic {
            r += total.powf(p) - j.value.powf(p) - p * j.value.powf(p - 1.0) * q[i];
        }
        if terms.gradient {
            let g = j.dy + d1[i];
            r += -a * g * g / total + a * j.dy * j.dy / j.value;
        }
        if terms.remainder {
            r += remainder_r(y, s, params);
        }
        if terms.lower_order {
            let grow = (s / (p - 1.0)).exp();
            r += forcing.u_perturbation(grow * total, params) / grow.powf(p);
        }
        out[i] = r;
    }
    Ok(out)
}

/// One Heun step of `q_s = L q + V q + B(q) + T(q) + R + L(q)` over `ds`.
pub fn step_similarity(q: &GridFunction, ds: f64, params: &Parameters, forcing: Forcing, terms: Terms, edge: &Edge) -> Result<GridFunction> {
    let s = q.time;
    let dy = q.dx();
    let ys = q.xs();
    let k1 = q_rhs(&q.values, s, dy, &ys, params, forcing, terms)?;
    let mut stage: Vec<f64> = q.values.iter().zip(&k1).map(|(v, k)| v + ds * k).collect();
    let set_edge = |v: &mut Vec<f64>, s: f64| {
        if let Edge::Prescribed(g) = edge {
            let n = v.len();
            v[0] = g(ys[0], s);
            v[n - 1] = g(ys[n - 1], s);
        }
    };
    set_edge(&mut stage, s + ds);
    let k2 = q_rhs(&stage, s + ds, dy, &ys, params, forcing, terms)?;
    let mut next: Vec<f64> = (0..q.n()).map(|i| q.values[i] + 0.5 * ds * (k1[i] + k2[i])).collect();
    set_edge(&mut next, s + ds);
    Ok(GridFunction { values: next, time: s + ds, ..q.clone() })
}

/// Advance `q` from its own `s` to `s_end` with stable sub-steps.
pub fn evolve_similarity(q: &GridFunction, s_end: f64, params: &Parameters, forcing: Forcing, terms: Terms, edge: &Edge) -> Result<GridFunction> {
    let dy = q.dx();
    let y_max = q.x_min.abs().max(q.x_max.abs());
    let ds_max = (0.2 * dy * dy).min(0.5 / (1.0 + y_max));
    let mut state = q.clone();
    while state.time < s_end {
        let remaining = s_end - state.time;
        let steps = (remaining / ds_max).ceil().max(1.0);
        let ds = remaining / steps;
        state = step_similarity(&state, ds, params, forcing, terms, edge)?;
        if remaining - ds <= 1e-14 * s_end.abs() {
            state.time = s_end;
        }
    }
    Ok(state)
}

/// Sup-norm discrepancy between "evolve then scale" and "scale then evolve"
/// for `u_lambda(x, t) = lambda^(2/(p-1)) u(lambda x, lambda^2 t)`.
///
/// Route A evolves `u0` on its grid for `lambda^2 horizon`; route B evolves the
/// rescaled datum on the shrunken domain with the same spacing for `horizon`.
/// `lambda` must make `(n - 1)/lambda` an integer.
pub fn scaling_invariance_check(u0: &GridFunction, lambda: f64, horizon: f64, problem: &Problem) -> Result<f64> {
    let params = &problem.params;
    if u0.kind != Kind::U || !(lambda >= 1.0) {
        return Err(Error::Domain("expects a u grid function and lambda >= 1".into()));
    }
    let cells = (u0.n() - 1) as f64 / lambda;
    if (cells - cells.round()).abs() > 1e-9 {
        return Err(Error::Domain(format!("(n-1)/lambda = {cells} is not an integer")));
    }
    let cells = cells.round() as usize;
    let to_h = |g: &GridFunction| -> Result<GridFunction> {
        GridFunction::new(g.values.iter().map(|u| u_to_h(*u, params)).collect(), g.x_min, g.x_max, Kind::H, g.time)
    };
    let h0 = to_h(u0)?;
    let t0 = u0.time;
    let route_a = simulate(&h0, Some(t0 + lambda * lambda * horizon), &[], problem, |_| true)?;
    let h_a = route_a.last();
    let factor = lambda.powf(2.0 / (params.p - 1.0));
    // Route B domain: [x_min/lambda, x_min/lambda + cells dx] with the original dx.
    let dx = u0.dx();
    let b_min = u0.x_min / lambda;
    let b_max = b_min + cells as f64 * dx;
    let interp = MonotoneCubic::from_grid(u0)?;
    let ub = GridFunction::from_fn(b_min, b_max, cells + 1, Kind::U, t0, |x| factor * interp.eval(lambda * x))?;
    let route_b = simulate(&to_h(&ub)?, Some(t0 + horizon), &[], problem, |_| true)?;
    let h_b = route_b.last();
    let mut worst = 0.0f64;
    for j in 0..h_b.n() {
        let x = h_b.x(j);
        let ua = factor * h_to_u(h_a.interp_linear(lambda * x), params);
        let ub = h_to_u(h_b.values[j], params);
        worst = worst.max((ua - ub).abs());
    }
    Ok(worst)
}
