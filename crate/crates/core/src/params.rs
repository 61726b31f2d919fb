//! Model parameters and the exponents derived from `(beta, alpha)`.

use crate::error::{Error, Result};

/// Exponents of the blowup formulation `u = alpha^(alpha/(beta+1)) / h^alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exponents {
    /// Gradient-term coefficient `a = 1 + 1/alpha`.
    pub a: f64,
    /// Power of the source term, `p = (1 + alpha + beta)/alpha`.
    pub p: f64,
    /// Quadratic coefficient of the intermediate profile, `(p-1)^2 / (4(p-a))`.
    pub b: f64,
    /// Height of the flat blowup profile at the origin, `(p-1)^(-1/(p-1))`.
    pub kappa: f64,
}

/// Map `(beta, alpha)` to `(a, p, b, kappa)`.
pub fn derive_exponents(beta: f64, alpha: f64) -> Result<Exponents> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::Domain(format!("beta must be positive, got {beta}")));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Domain(format!("alpha must be positive, got {alpha}")));
    }
    let a = 1.0 + 1.0 / alpha;
    let p = (1.0 + alpha + beta) / alpha;
    let b = (p - 1.0).powi(2) / (4.0 * (p - a));
    let kappa = (p - 1.0).powf(-1.0 / (p - 1.0));
    Ok(Exponents { a, p, b, kappa })
}

/// Every constant that enters a formula of the laboratory.
///
/// The exponent fields are derived; construct through [`Parameters::new`] and
/// adjust the scheme constants afterwards, then call [`Parameters::validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    pub beta: f64,
    pub alpha: f64,
    pub a: f64,
    pub p: f64,
    pub b: f64,
    pub kappa: f64,
    /// Spatial dimension. Modes are implemented for `dim == 1`.
    pub dim: usize,
    /// Target quench time `T`, in `(0, 1/e)`.
    pub t_quench: f64,
    /// Cutoff scale of the blowup region.
    pub k0: f64,
    /// Magnitude of the mode box `Q_A`.
    pub a_box: f64,
    pub eps0: f64,
    pub alpha0: f64,
    pub delta0: f64,
    pub c0: f64,
    pub eta0: f64,
    /// Exponent of `A` in the `q_-` bound (strictly above 3).
    pub alpha_under: f64,
    /// Exponent of `A` in the `q_e` bound (at least `alpha_under + 1`).
    pub alpha_bar: f64,
    /// Distance from the quench point to the boundary of the domain.
    pub rho0: f64,
    /// Upper end of the inner branch of the final profile, before the `rho0/4` cap.
    pub profile_cap: f64,
}

impl Parameters {
    pub fn new(beta: f64, alpha: f64) -> Result<Self> {
        let ex = derive_exponents(beta, alpha)?;
        Ok(Parameters {
            beta,
            alpha,
            a: ex.a,
            p: ex.p,
            b: ex.b,
            kappa: ex.kappa,
            dim: 1,
            t_quench: 0.1,
            k0: 4.0,
            a_box: 4.0,
            eps0: 0.2,
            alpha0: 0.2,
            delta0: 1.0,
            c0: 4.0,
            eta0: 1.0,
            alpha_under: 3.5,
            alpha_bar: 4.5,
            rho0: 2.0,
            profile_cap: 0.25,
        })
    }

    pub fn exponents(&self) -> Exponents {
        Exponents {
            a: self.a,
            p: self.p,
            b: self.b,
            kappa: self.kappa,
        }
    }

    /// Radius up to which the final profile follows its inner closed form.
    pub fn inner_radius(&self) -> f64 {
        self.profile_cap.min(self.rho0 / 4.0)
    }

    /// Re-derive the exponent fields after `beta` or `alpha` changed.
    pub fn rederive(&mut self) -> Result<()> {
        let ex = derive_exponents(self.beta, self.alpha)?;
        self.a = ex.a;
        self.p = ex.p;
        self.b = ex.b;
        self.kappa = ex.kappa;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let ex = derive_exponents(self.beta, self.alpha)?;
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-12 * y.abs().max(1.0);
        if !(close(ex.a, self.a) && close(ex.p, self.p) && close(ex.b, self.b) && close(ex.kappa, self.kappa)) {
            return Err(Error::Domain("exponents inconsistent with (beta, alpha)".into()));
        }
        if !(1.0 < self.a && self.a < self.p) {
            return Err(Error::Domain(format!("need 1 < a < p, got a={}, p={}", self.a, self.p)));
        }
        if self.dim == 0 {
            return Err(Error::Domain("dimension must be at least 1".into()));
        }
        if !(self.t_quench > 0.0 && self.t_quench < (-1.0f64).exp()) {
            return Err(Error::Domain(format!("T must lie in (0, 1/e), got {}", self.t_quench)));
        }
        let positive = [
            ("K0", self.k0),
            ("A", self.a_box),
            ("eps0", self.eps0),
            ("alpha0", self.alpha0),
            ("delta0", self.delta0),
            ("C0", self.c0),
            ("eta0", self.eta0),
            ("rho0", self.rho0),
            ("profile_cap", self.profile_cap),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        if self.alpha_under <= 3.0 {
            return Err(Error::Domain(format!("alpha_under must exceed 3, got {}", self.alpha_under)));
        }
        if self.alpha_bar < self.alpha_under + 1.0 {
            return Err(Error::Domain("alpha_bar must be at least alpha_under + 1".into()));
        }
        Ok(())
    }
}
