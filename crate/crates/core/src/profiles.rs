//! Closed-form profiles: the intermediate profiles `Phi`, `Phi_hat`, the final
//! profile `H*`, the flat solutions, the second-rescaling ODE solutions and the
//! quasi-parabola `theta(|x|)`.

use crate::error::{Error, Result};
use crate::params::{Exponents, Parameters};

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

/// `Phi(z) = (p - 1 + b|z|^2)^(-1/(p-1))` as a function of `|z|`.
pub fn phi_big_radial(r: f64, ex: &Exponents) -> f64 {
    (ex.p - 1.0 + ex.b * r * r).powf(-1.0 / (ex.p - 1.0))
}

pub fn phi_big(z: &[f64], params: &Parameters) -> f64 {
    phi_big_radial(norm(z), &params.exponents())
}

fn phi_hat_base(r: f64, beta: f64) -> f64 {
    beta + 1.0 + (beta + 1.0).powi(2) / (4.0 * beta) * r * r
}

pub fn phi_hat_radial(r: f64, beta: f64) -> f64 {
    phi_hat_base(r, beta).powf(1.0 / (beta + 1.0))
}

/// Radial derivative of [`phi_hat_radial`].
pub fn phi_hat_prime(r: f64, beta: f64) -> f64 {
    (beta + 1.0) / (2.0 * beta) * r * phi_hat_base(r, beta).powf(-beta / (beta + 1.0))
}

/// Intermediate extinction profile.
pub fn phi_hat(z: &[f64], beta: f64) -> f64 {
    phi_hat_radial(norm(z), beta)
}

/// Exact gradient of [`phi_hat`].
pub fn grad_phi_hat(z: &[f64], beta: f64) -> Vec<f64> {
    let scale = (beta + 1.0) / (2.0 * beta) * phi_hat_base(norm(z), beta).powf(-beta / (beta + 1.0));
    z.iter().map(|c| scale * c).collect()
}

fn inner_final(r: f64, beta: f64) -> f64 {
    let l = -r.ln();
    ((beta + 1.0).powi(2) / (8.0 * beta) * r * r / l).powf(1.0 / (beta + 1.0))
}

fn inner_final_prime(r: f64, beta: f64) -> f64 {
    let l = -r.ln();
    inner_final(r, beta) * (2.0 * l + 1.0) / ((beta + 1.0) * r * l)
}

/// Cubic Hermite blend in `log r` between the inner branch and the constant 1.
struct Blend {
    l0: f64,
    l1: f64,
    v0: f64,
    m0: f64,
}

impl Blend {
    fn new(params: &Parameters) -> Blend {
        let r0 = params.inner_radius();
        let r1 = params.rho0 / 2.0;
        let v0 = inner_final(r0, params.beta);
        let (l0, l1) = (r0.ln(), r1.ln());
        let mut m0 = r0 * inner_final_prime(r0, params.beta);
        let secant = (1.0 - v0) / (l1 - l0);
        if m0 > 3.0 * secant {
            log::warn!("final-profile blend slope clamped for monotonicity");
            m0 = 3.0 * secant;
        }
        Blend { l0, l1, v0, m0 }
    }

    /// Value and derivative with respect to `r`.
    fn eval(&self, r: f64) -> (f64, f64) {
        let w = self.l1 - self.l0;
        let t = (r.ln() - self.l0) / w;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let value = h00 * self.v0 + h10 * w * self.m0 + h01;
        let d00 = 6.0 * t2 - 6.0 * t;
        let d10 = 3.0 * t2 - 4.0 * t + 1.0;
        let d01 = -6.0 * t2 + 6.0 * t;
        let dvalue_dt = d00 * self.v0 + d10 * w * self.m0 + d01;
        (value, dvalue_dt / (w * r))
    }
}

/// Radial final profile and its radial derivative at distance `r` from the quench point.
pub fn final_profile_radial(r: f64, params: &Parameters) -> Result<(f64, f64)> {
    if r == 0.0 {
        return Err(Error::SingularPoint);
    }
    let r_in = params.inner_radius();
    if r_in >= 1.0 {
        return Err(Error::Domain(format!("inner radius {r_in} must stay below 1")));
    }
    if r <= r_in {
        Ok((inner_final(r, params.beta), inner_final_prime(r, params.beta)))
    } else if r >= params.rho0 / 2.0 {
        Ok((1.0, 0.0))
    } else {
        Ok(Blend::new(params).eval(r))
    }
}

/// Final extinction profile `H*` centred at the origin.
pub fn final_profile(x: &[f64], params: &Parameters) -> Result<f64> {
    final_profile_radial(norm(x), params).map(|(v, _)| v)
}

pub fn grad_final_profile(x: &[f64], params: &Parameters) -> Result<Vec<f64>> {
    let r = norm(x);
    let (_, dr) = final_profile_radial(r, params)?;
    Ok(x.iter().map(|c| dr * c / r).collect())
}

/// ODE solutions `h(t)` of `h' = -h^-beta` and `u(t)` of `u' = u^p`, both vanishing/blowing up at `T`.
pub fn flat_solutions(t: f64, params: &Parameters) -> Result<(f64, f64)> {
    let gap = params.t_quench - t;
    if !(gap > 0.0) {
        return Err(Error::Domain(format!("flat solutions need t < T, got t={t}, T={}", params.t_quench)));
    }
    let h = ((params.beta + 1.0) * gap).powf(1.0 / (params.beta + 1.0));
    let u = ((params.p - 1.0) * gap).powf(-1.0 / (params.p - 1.0));
    Ok((h, u))
}

fn k_hat_base(tau: f64, beta: f64, k0: f64) -> f64 {
    (beta + 1.0) * (1.0 - tau) + (beta + 1.0).powi(2) * k0 * k0 / (64.0 * beta)
}

/// Flat solution of `k' = -k^-beta` started from `Phi_hat(K0/4)`.
pub fn k_hat(tau: f64, beta: f64, k0: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Domain(format!("k_hat needs tau in [0,1], got {tau}")));
    }
    Ok(k_hat_base(tau, beta, k0).powf(1.0 / (beta + 1.0)))
}

/// Gradient companion of [`k_hat`] in the direction `dir`, scaled by `|log theta|^(-1/2)`.
pub fn k_hat_x(tau: f64, dir: &[f64], beta: f64, k0: f64, abs_log_theta: f64) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&tau) {
        return Err(Error::Domain(format!("k_hat_x needs tau in [0,1), got {tau}")));
    }
    if !(abs_log_theta > 0.0) {
        return Err(Error::Domain("|log theta| must be positive".into()));
    }
    let n = norm(dir);
    if n == 0.0 {
        return Err(Error::Domain("direction must be non-zero".into()));
    }
    let mag = (beta + 1.0) * k0 / (8.0 * beta) / abs_log_theta.sqrt()
        * k_hat_base(tau, beta, k0).powf(-beta / (beta + 1.0));
    Ok(dir.iter().map(|c| mag * c / n).collect())
}

/// Smallest admissible `theta` searched by [`solve_theta`].
pub const THETA_FLOOR: f64 = 1e-300;

fn log_quasi_parabola(log_theta: f64, k0: f64) -> f64 {
    (k0 / 4.0).ln() + 0.5 * (log_theta + (-log_theta).ln())
}

/// Invert `|x| = (K0/4) sqrt(theta |log theta|)` on `theta in (0, 1/e)`.
pub fn solve_theta(abs_x: f64, k0: f64) -> Result<f64> {
    if !(abs_x > 0.0) || !(k0 > 0.0) {
        return Err(Error::OutOfRegime(format!("need |x| > 0 and K0 > 0, got |x|={abs_x}")));
    }
    let target = abs_x.ln();
    let (mut lo, mut hi) = (THETA_FLOOR.ln(), -1.0);
    if target >= log_quasi_parabola(hi, k0) || target <= log_quasi_parabola(lo, k0) {
        return Err(Error::OutOfRegime(format!("no theta in (0, 1/e) for |x|={abs_x}, K0={k0}")));
    }
    while hi - lo > 1e-14 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if log_quasi_parabola(mid, k0) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

/// `|x|` as a function of `theta` on the increasing branch.
pub fn quasi_parabola(theta: f64, k0: f64) -> f64 {
    k0 / 4.0 * (theta * (-theta.ln())).sqrt()
}

/// Cached table of `(|x|, theta)` pairs, built once and then read-only.
#[derive(Debug, Clone)]
pub struct ThetaMap {
    pub k0: f64,
    table: Vec<(f64, f64)>,
    pub tolerance: f64,
}

impl ThetaMap {
    pub fn build(k0: f64, abs_xs: &[f64]) -> Result<Self> {
        let mut xs: Vec<f64> = abs_xs.to_vec();
        xs.sort_by(|a, b| a.total_cmp(b));
        xs.dedup();
        let table = xs
            .into_iter()
            .map(|x| solve_theta(x, k0).map(|t| (x, t)))
            .collect::<Result<Vec<_>>>()?;
        Ok(ThetaMap { k0, table, tolerance: 1e-12 })
    }

    pub fn entries(&self) -> &[(f64, f64)] {
        &self.table
    }

    pub fn theta(&self, abs_x: f64) -> Result<f64> {
        match self.table.binary_search_by(|(x, _)| x.total_cmp(&abs_x)) {
            Ok(i) => Ok(self.table[i].1),
            Err(_) => solve_theta(abs_x, self.k0),
        }
    }

    /// Largest relative residual of the quasi-parabola over the table.
    pub fn max_residual(&self) -> f64 {
        self.table
            .iter()
            .map(|&(x, t)| (quasi_parabola(t, self.k0) - x).abs() / x)
            .fold(0.0, f64::max)
    }

    pub fn is_increasing(&self) -> bool {
        self.table.windows(2).all(|w| w[1].1 > w[0].1)
    }
}
