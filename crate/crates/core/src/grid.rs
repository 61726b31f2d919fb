//! Uniform 1-D grid functions.

use crate::error::{Error, Result};

/// Which field a grid function samples.
///
/// `H` lives in physical variables `(x, t)`; `U` is its blowup transform; `W`
/// and `Q` live in similarity variables `(y, s)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    H,
    U,
    W,
    Q,
}

impl Kind {
    pub fn must_be_positive(self) -> bool {
        !matches!(self, Kind::Q)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub values: Vec<f64>,
    pub x_min: f64,
    pub x_max: f64,
    pub kind: Kind,
    /// `t` for physical kinds, `s` for similarity kinds.
    pub time: f64,
}

impl GridFunction {
    pub fn new(values: Vec<f64>, x_min: f64, x_max: f64, kind: Kind, time: f64) -> Result<Self> {
        if values.len() < 2 || !(x_max > x_min) {
            return Err(Error::Domain(format!(
                "grid needs n >= 2 and x_max > x_min, got n={}, [{x_min}, {x_max}]",
                values.len()
            )));
        }
        if kind.must_be_positive() {
            if let Some(i) = values.iter().position(|v| !(*v > 0.0)) {
                return Err(Error::PositivityLoss(format!(
                    "{kind:?} value {} at index {i} is not positive",
                    values[i]
                )));
            }
        }
        Ok(GridFunction { values, x_min, x_max, kind, time })
    }

    pub fn from_fn(x_min: f64, x_max: f64, n: usize, kind: Kind, time: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        let dx = (x_max - x_min) / (n.max(2) - 1) as f64;
        let values = (0..n).map(|i| f(x_min + i as f64 * dx)).collect();
        Self::new(values, x_min, x_max, kind, time)
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n() - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx()
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.n()).map(|i| self.x(i)).collect()
    }

    pub fn same_grid(&self, other: &GridFunction) -> bool {
        self.n() == other.n() && self.x_min == other.x_min && self.x_max == other.x_max
    }

    /// Same grid, new values; skips validation of the kind invariant.
    pub fn with_values(&self, values: Vec<f64>) -> GridFunction {
        debug_assert_eq!(values.len(), self.n());
        GridFunction { values, ..self.clone() }
    }

    pub fn min(&self) -> (usize, f64) {
        self.values
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc })
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Centred first derivative, second-order one-sided at the ends.
    pub fn gradient(&self) -> Vec<f64> {
        first_derivative(&self.values, self.dx())
    }

    /// Linear interpolation, clamped to the end values outside the grid.
    pub fn interp_linear(&self, x: f64) -> f64 {
        let n = self.n();
        let pos = (x - self.x_min) / self.dx();
        if pos <= 0.0 {
            return self.values[0];
        }
        if pos >= (n - 1) as f64 {
            return self.values[n - 1];
        }
        let i = pos.floor() as usize;
        let frac = pos - i as f64;
        self.values[i] * (1.0 - frac) + self.values[i + 1] * frac
    }
}

pub fn first_derivative(v: &[f64], dx: f64) -> Vec<f64> {
    let n = v.len();
    let mut d = vec![0.0; n];
    if n < 3 {
        let g = (v[n - 1] - v[0]) / dx;
        d.iter_mut().for_each(|e| *e = g);
        return d;
    }
    d[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * dx);
    d[n - 1] = (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * dx);
    for i in 1..n - 1 {
        d[i] = (v[i + 1] - v[i - 1]) / (2.0 * dx);
    }
    d
}

pub fn second_derivative(v: &[f64], dx: f64) -> Vec<f64> {
    let n = v.len();
    let mut d = vec![0.0; n];
    let h2 = dx * dx;
    if n >= 4 {
        d[0] = (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / h2;
        d[n - 1] = (2.0 * v[n - 1] - 5.0 * v[n - 2] + 4.0 * v[n - 3] - v[n - 4]) / h2;
    }
    for i in 1..n - 1 {
        d[i] = (v[i + 1] - 2.0 * v[i] + v[i - 1]) / h2;
    }
    d
}

/// Monotone piecewise-cubic Hermite interpolant (Fritsch-Carlson slopes).
#[derive(Debug, Clone)]
pub struct MonotoneCubic {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        let n = xs.len();
        if n < 2 || ys.len() != n {
            return Err(Error::Domain("monotone cubic needs at least two matching samples".into()));
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain("abscissae must be strictly increasing".into()));
        }
        let secants: Vec<f64> = (0..n - 1).map(|i| (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i])).collect();
        let mut slopes = vec![0.0; n];
        slopes[0] = secants[0];
        slopes[n - 1] = secants[n - 2];
        for i in 1..n - 1 {
            let (a, b) = (secants[i - 1], secants[i]);
            if a * b <= 0.0 {
                slopes[i] = 0.0;
            } else {
                // Weighted harmonic mean keeps each cubic piece monotone.
                let h0 = xs[i] - xs[i - 1];
                let h1 = xs[i + 1] - xs[i];
                let w1 = 2.0 * h1 + h0;
                let w2 = h1 + 2.0 * h0;
                slopes[i] = (w1 + w2) / (w1 / a + w2 / b);
            }
        }
        for i in [0, n - 1] {
            let s = secants[if i == 0 { 0 } else { n - 2 }];
            if slopes[i] * s < 0.0 {
                slopes[i] = 0.0;
            }
        }
        Ok(MonotoneCubic { xs, ys, slopes })
    }

    pub fn from_grid(g: &GridFunction) -> Result<Self> {
        Self::new(g.xs(), g.values.clone())
    }

    pub fn x_range(&self) -> (f64, f64) {
        (self.xs[0], self.xs[self.xs.len() - 1])
    }

    /// Value at `x`; constant extrapolation outside the sample range.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0];
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1];
        }
        let i = match self.xs.binary_search_by(|v| v.total_cmp(&x)) {
            Ok(i) => return self.ys[i],
            Err(i) => i - 1,
        };
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let (t2, t3) = (t * t, t * t * t);
        (2.0 * t3 - 3.0 * t2 + 1.0) * self.ys[i]
            + (t3 - 2.0 * t2 + t) * h * self.slopes[i]
            + (-2.0 * t3 + 3.0 * t2) * self.ys[i + 1]
            + (t3 - t2) * h * self.slopes[i + 1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_non_positive_h() {
        assert!(GridFunction::new(vec![1.0, 0.0, 1.0], 0.0, 1.0, Kind::H, 0.0).is_err());
        assert!(GridFunction::new(vec![1.0, -1.0, 1.0], 0.0, 1.0, Kind::Q, 0.0).is_ok());
    }

    #[test]
    fn derivatives_exact_on_quadratics() {
        let g = GridFunction::from_fn(-1.0, 2.0, 31, Kind::Q, 0.0, |x| 3.0 * x * x - x + 2.0).unwrap();
        let d1 = g.gradient();
        let d2 = second_derivative(&g.values, g.dx());
        for (i, x) in g.xs().into_iter().enumerate() {
            assert!((d1[i] - (6.0 * x - 1.0)).abs() < 1e-11);
            assert!((d2[i] - 6.0).abs() < 1e-9);
        }
    }

    #[test]
    fn monotone_cubic_reproduces_nodes_and_lines() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64 * 0.3).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x + 1.0).collect();
        let m = MonotoneCubic::new(xs.clone(), ys).unwrap();
        for x in [0.05, 0.71, 2.6] {
            assert!((m.eval(x) - (2.0 * x + 1.0)).abs() < 1e-14);
        }
    }

    proptest! {
        #[test]
        fn monotone_cubic_preserves_monotone_data(steps in proptest::collection::vec(0.0f64..5.0, 3..30), q in 0.0f64..1.0) {
            let ys: Vec<f64> = steps.iter().scan(0.0, |acc, s| { *acc += s; Some(*acc) }).collect();
            let xs: Vec<f64> = (0..ys.len()).map(|i| i as f64).collect();
            let m = MonotoneCubic::new(xs.clone(), ys.clone()).unwrap();
            let mut prev = f64::NEG_INFINITY;
            for k in 0..(10 * ys.len()) {
                let x = (k as f64 + q) / 10.0;
                let v = m.eval(x.min(xs[xs.len() - 1]));
                prop_assert!(v >= prev - 1e-12);
                prop_assert!(v >= ys[0] - 1e-12 && v <= ys[ys.len() - 1] + 1e-12);
                prev = v;
            }
        }
    }
}
