//! Rescaled Hermite modes of `L = d^2/dy^2 - (y/2) d/dy + 1` in the Gaussian
//! space `L^2(rho)`, the inner-outer and spectral decompositions, the Mehler
//! semigroup, and the potential/remainder terms built from the approximate
//! profile `phi(y, s)`.

use crate::error::{Error, Result};
use crate::grid::{first_derivative, second_derivative, GridFunction, Kind};
use crate::params::Parameters;
use std::f64::consts::PI;

/// Half-width below which a `y`-grid does not resolve the Gaussian weight to double precision.
pub const MIN_HALF_WIDTH: f64 = 20.0;

/// Gaussian weight `rho(y) = exp(-|y|^2/4) / (4 pi)^(N/2)` for `N = 1`.
pub fn rho(y: f64) -> f64 {
    (-y * y / 4.0).exp() / (4.0 * PI).sqrt()
}

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

/// `h_l(xi) = sum_j (-1)^j l! / (j! (l-2j)!) xi^(l-2j)`.
pub fn hermite_eval(ell: usize, xi: f64) -> f64 {
    let lf = factorial(ell);
    (0..=ell / 2)
        .map(|j| {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            sign * lf / (factorial(j) * factorial(ell - 2 * j)) * xi.powi((ell - 2 * j) as i32)
        })
        .sum()
}

/// Coefficient tables of `h_0 .. h_max` with their `L^2(rho)` norms `2^l l!`.
#[derive(Debug, Clone)]
pub struct HermiteBasis {
    pub max_degree: usize,
    /// `coeffs[l][k]` multiplies `xi^k` in `h_l`.
    pub coeffs: Vec<Vec<f64>>,
    pub norms_sq: Vec<f64>,
}

impl HermiteBasis {
    pub fn new(max_degree: usize) -> Self {
        let coeffs = (0..=max_degree)
            .map(|ell| {
                let mut c = vec![0.0; ell + 1];
                let lf = factorial(ell);
                for j in 0..=ell / 2 {
                    let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                    c[ell - 2 * j] = sign * lf / (factorial(j) * factorial(ell - 2 * j));
                }
                c
            })
            .collect();
        let norms_sq = (0..=max_degree).map(|l| 2f64.powi(l as i32) * factorial(l)).collect();
        HermiteBasis { max_degree, coeffs, norms_sq }
    }

    pub fn eval(&self, ell: usize, xi: f64) -> f64 {
        self.coeffs[ell].iter().rev().fold(0.0, |acc, c| acc * xi + c)
    }

    /// Gram matrix `(h_l, h_m)_rho` under the given quadrature.
    pub fn gram(&self, quad: &RhoQuadrature) -> Vec<Vec<f64>> {
        let vals: Vec<Vec<f64>> = (0..=self.max_degree)
            .map(|l| quad.nodes.iter().map(|&y| self.eval(l, y)).collect())
            .collect();
        (0..=self.max_degree)
            .map(|l| {
                (0..=self.max_degree)
                    .map(|m| {
                        quad.weights
                            .iter()
                            .zip(&vals[l])
                            .zip(&vals[m])
                            .map(|((w, a), b)| w * a * b)
                            .sum()
                    })
                    .collect()
            })
            .collect()
    }

    /// Largest deviation of the normalised Gram matrix from the identity.
    pub fn orthogonality_defect(&self, quad: &RhoQuadrature) -> f64 {
        let g = self.gram(quad);
        let mut worst = 0.0f64;
        for l in 0..=self.max_degree {
            for m in 0..=self.max_degree {
                let target = if l == m { 1.0 } else { 0.0 };
                let normalised = g[l][m] / (self.norms_sq[l] * self.norms_sq[m]).sqrt();
                worst = worst.max((normalised - target).abs());
            }
        }
        worst
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; order];
    let mut weights = vec![0.0; order];
    let n = order as f64;
    for i in 0..order.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=order {
                let k = k as f64;
                let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            if order == 1 {
                p0 = 1.0;
                p1 = x;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            let step = p1 / dp;
            x -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[order - 1 - i] = x;
        weights[i] = w;
        weights[order - 1 - i] = w;
    }
    (nodes, weights)
}

/// Composite Gauss-Legendre rule on `[-half_width, half_width]` with the
/// Gaussian weight folded into the weights.
#[derive(Debug, Clone)]
pub struct RhoQuadrature {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl RhoQuadrature {
    pub fn new(half_width: f64, panels: usize, order: usize) -> Self {
        let (xg, wg) = gauss_legendre(order);
        let width = 2.0 * half_width / panels as f64;
        let mut nodes = Vec::with_capacity(panels * order);
        let mut weights = Vec::with_capacity(panels * order);
        for k in 0..panels {
            let mid = -half_width + (k as f64 + 0.5) * width;
            for (x, w) in xg.iter().zip(&wg) {
                let y = mid + 0.5 * width * x;
                nodes.push(y);
                weights.push(0.5 * width * w * rho(y));
            }
        }
        RhoQuadrature { nodes, weights }
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(y, w)| w * f(*y)).sum()
    }
}

impl Default for RhoQuadrature {
    fn default() -> Self {
        RhoQuadrature::new(40.0, 80, 20)
    }
}

/// Trapezoid weights of a uniform grid times `rho`. For integrands that decay
/// like the Gaussian inside the grid the rule converges spectrally.
pub fn grid_rho_weights(g: &GridFunction) -> Vec<f64> {
    let dx = g.dx();
    let n = g.n();
    (0..n)
        .map(|i| {
            let end = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            end * dx * rho(g.x(i))
        })
        .collect()
}

/// Set when the grid does not cover `|y| <= MIN_HALF_WIDTH`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccuracyWarning {
    pub covered_half_width: f64,
}

fn coverage_warning(g: &GridFunction) -> Option<AccuracyWarning> {
    let covered = (-g.x_min).min(g.x_max);
    (covered < MIN_HALF_WIDTH).then_some(AccuracyWarning { covered_half_width: covered })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhoIntegral {
    pub value: f64,
    pub warning: Option<AccuracyWarning>,
}

/// `(f, g)_rho` for two functions sampled on the same `y`-grid.
pub fn inner_product_rho(f: &GridFunction, g: &GridFunction) -> Result<RhoIntegral> {
    if !f.same_grid(g) {
        return Err(Error::GridMismatch("inner product needs a common grid".into()));
    }
    let warning = coverage_warning(f);
    if let Some(w) = warning {
        log::warn!("rho-quadrature grid covers only |y| <= {}", w.covered_half_width);
    }
    let value = grid_rho_weights(f)
        .iter()
        .zip(f.values.iter().zip(&g.values))
        .map(|(w, (a, b))| w * a * b)
        .sum();
    Ok(RhoIntegral { value, warning })
}

/// Quintic smoothstep cutoff: 1 on `[0, 1]`, 0 on `[2, inf)`, C^2 in between.
pub fn chi0(r: f64) -> f64 {
    if r <= 1.0 {
        1.0
    } else if r >= 2.0 {
        0.0
    } else {
        let t = r - 1.0;
        1.0 - t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
    }
}

/// `chi(y, s) = chi0(|y| / (K0 sqrt(s)))`.
pub fn cutoff_chi(y: f64, s: f64, k0: f64) -> f64 {
    chi0(y.abs() / (k0 * s.sqrt()))
}

/// Components of `r = r0 + r1 y + r2 (y^2 - 2) + r_minus + r_e` for `N = 1`.
#[derive(Debug, Clone)]
pub struct ModeDecomposition {
    pub r0: f64,
    pub r1: f64,
    /// Scalar `r2`; in one dimension `y^T r2 y - 2 Tr(r2) = r2 (y^2 - 2)`.
    pub r2: f64,
    pub r_minus: GridFunction,
    pub r_e: GridFunction,
    pub s: f64,
    pub k0: f64,
    pub warning: Option<AccuracyWarning>,
}

impl ModeDecomposition {
    pub fn reconstruct(&self) -> Vec<f64> {
        (0..self.r_minus.n())
            .map(|i| {
                let y = self.r_minus.x(i);
                self.r0 + self.r1 * y + self.r2 * (y * y - 2.0) + self.r_minus.values[i] + self.r_e.values[i]
            })
            .collect()
    }

    /// `sup |r_minus| / (1 + |y|^3)`.
    pub fn minus_weighted_norm(&self) -> f64 {
        (0..self.r_minus.n())
            .map(|i| self.r_minus.values[i].abs() / (1.0 + self.r_minus.x(i).abs().powi(3)))
            .fold(0.0, f64::max)
    }

    pub fn exterior_sup(&self) -> f64 {
        self.r_e.sup_norm()
    }
}

/// Inner-outer split at `K0 sqrt(s)` followed by projection of the bulk part on `h_0, h_1, h_2`.
pub fn decompose(r: &GridFunction, s: f64, k0: f64) -> ModeDecomposition {
    let weights = grid_rho_weights(r);
    let warning = coverage_warning(r);
    let ys = r.xs();
    let chi: Vec<f64> = ys.iter().map(|&y| cutoff_chi(y, s, k0)).collect();
    let bulk: Vec<f64> = r.values.iter().zip(&chi).map(|(v, c)| v * c).collect();
    let exterior: Vec<f64> = r.values.iter().zip(&chi).map(|(v, c)| v * (1.0 - c)).collect();
    let project = |h: &dyn Fn(f64) -> f64, norm_sq: f64| -> f64 {
        weights
            .iter()
            .zip(&bulk)
            .zip(&ys)
            .map(|((w, b), &y)| w * b * h(y))
            .sum::<f64>()
            / norm_sq
    };
    let r0 = project(&|_| 1.0, 1.0);
    let r1 = project(&|y| y, 2.0);
    let r2 = project(&|y| y * y - 2.0, 8.0);
    let minus: Vec<f64> = bulk
        .iter()
        .zip(&ys)
        .map(|(b, &y)| b - r0 - r1 * y - r2 * (y * y - 2.0))
        .collect();
    let as_q = |values: Vec<f64>| GridFunction {
        values,
        x_min: r.x_min,
        x_max: r.x_max,
        kind: Kind::Q,
        time: s,
    };
    ModeDecomposition {
        r0,
        r1,
        r2,
        r_minus: as_q(minus),
        r_e: as_q(exterior),
        s,
        k0,
        warning,
    }
}

/// Second-order finite-difference `L r = r'' - (y/2) r' + r`.
#[allow(non_snake_case)]
pub fn apply_L(r: &GridFunction) -> GridFunction {
    let dy = r.dx();
    let d1 = first_derivative(&r.values, dy);
    let d2 = second_derivative(&r.values, dy);
    let values = (0..r.n())
        .map(|i| d2[i] - 0.5 * r.x(i) * d1[i] + r.values[i])
        .collect();
    r.with_values(values)
}

fn mehler_kernel(theta: f64, y: f64, x: f64) -> f64 {
    let gap = 1.0 - (-theta).exp();
    let arg = (y * (-theta / 2.0).exp() - x).powi(2) / (4.0 * gap);
    if arg > 700.0 {
        return 0.0;
    }
    theta.exp() / (4.0 * PI * gap).sqrt() * (-arg).exp()
}

/// `e^{theta L} r` with the Mehler kernel, integrated with the trapezoid rule of `r`'s grid.
pub fn mehler_apply(theta: f64, r: &GridFunction) -> Result<GridFunction> {
    if !(theta > 0.0) {
        return Err(Error::Domain(format!("Mehler semigroup needs theta > 0, got {theta}")));
    }
    let dx = r.dx();
    let n = r.n();
    let xs = r.xs();
    let values = xs
        .iter()
        .map(|&y| {
            (0..n)
                .map(|j| {
                    let end = if j == 0 || j == n - 1 { 0.5 } else { 1.0 };
                    end * dx * mehler_kernel(theta, y, xs[j]) * r.values[j]
                })
                .sum()
        })
        .collect();
    Ok(r.with_values(values))
}

/// `e^{theta L} f` at the points `ys` for a closure `f`, with composite
/// Gauss-Legendre panels of the given order around each kernel centre.
pub fn mehler_apply_fn(theta: f64, f: impl Fn(f64) -> f64, ys: &[f64], order: usize) -> Result<Vec<f64>> {
    if !(theta > 0.0) {
        return Err(Error::Domain(format!("Mehler semigroup needs theta > 0, got {theta}")));
    }
    let (xg, wg) = gauss_legendre(order);
    let sigma = (2.0 * (1.0 - (-theta).exp())).sqrt();
    let panels = 16;
    Ok(ys
        .iter()
        .map(|&y| {
            let centre = y * (-theta / 2.0).exp();
            let (lo, hi) = (centre - 12.0 * sigma, centre + 12.0 * sigma);
            let width = (hi - lo) / panels as f64;
            (0..panels)
                .map(|k| {
                    let mid = lo + (k as f64 + 0.5) * width;
                    xg.iter()
                        .zip(&wg)
                        .map(|(xi, wi)| {
                            let x = mid + 0.5 * width * xi;
                            0.5 * width * wi * mehler_kernel(theta, y, x) * f(x)
                        })
                        .sum::<f64>()
                })
                .sum()
        })
        .collect())
}

/// `phi(y, s) = Phi(y/sqrt(s)) + N kappa / (2 (p - a) s)` with its exact derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiJet {
    pub value: f64,
    /// `d phi / dy` (one dimension, signed).
    pub dy: f64,
    /// `Laplacian_y phi` for the radial profile in `N` dimensions.
    pub lap: f64,
    pub ds: f64,
    /// `y . grad phi`.
    pub y_dot_grad: f64,
}

pub fn phi_jet(y: f64, s: f64, params: &Parameters) -> PhiJet {
    let (p, b, kappa, a) = (params.p, params.b, params.kappa, params.a);
    let n = params.dim as f64;
    let m = 1.0 / (p - 1.0);
    let sq = s.sqrt();
    let z = y / sq;
    let g = p - 1.0 + b * z * z;
    let big = g.powf(-m);
    let d_big = -2.0 * b * m * z * g.powf(-m - 1.0);
    let lap_big = -2.0 * b * m * n * g.powf(-m - 1.0) + 4.0 * b * b * m * (m + 1.0) * z * z * g.powf(-m - 2.0);
    let shift = n * kappa / (2.0 * (p - a) * s);
    PhiJet {
        value: big + shift,
        dy: d_big / sq,
        lap: lap_big / s,
        ds: -z * d_big / (2.0 * s) - shift / s,
        y_dot_grad: z * d_big,
    }
}

/// `V = p (phi^(p-1) - kappa^(p-1))`.
pub fn potential_v(y: f64, s: f64, params: &Parameters) -> f64 {
    let phi = phi_jet(y, s, params).value;
    params.p * (phi.powf(params.p - 1.0) - params.kappa.powf(params.p - 1.0))
}

/// Residual of `phi` in the `w`-equation.
pub fn remainder_r(y: f64, s: f64, params: &Parameters) -> f64 {
    let j = phi_jet(y, s, params);
    let p = params.p;
    -j.ds + j.lap - 0.5 * j.y_dot_grad - j.value / (p - 1.0) - params.a * j.dy * j.dy / j.value + j.value.powf(p)
}
