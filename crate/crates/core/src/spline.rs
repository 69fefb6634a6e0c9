//! Natural cubic spline over a strictly increasing abscissa.

/// Natural cubic spline (zero second derivative at both ends).
#[derive(Debug, Clone)]
pub struct NaturalSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    /// Second derivatives at the knots.
    m: Vec<f64>,
    /// Set when the knots are uniformly spaced; enables O(1) lookup.
    uniform_step: Option<f64>,
}

impl NaturalSpline {
    /// Builds the spline. `x` must be strictly increasing with at least two
    /// points and `x.len() == y.len()`; callers validate this.
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        assert!(x.len() >= 2 && x.len() == y.len());
        let n = x.len();
        let mut m = vec![0.0; n];
        if n > 2 {
            // Thomas algorithm on the interior equations.
            let mut c_prime = vec![0.0; n];
            let mut d_prime = vec![0.0; n];
            for i in 1..n - 1 {
                let h0 = x[i] - x[i - 1];
                let h1 = x[i + 1] - x[i];
                let a = h0 / 6.0;
                let b = (h0 + h1) / 3.0;
                let c = h1 / 6.0;
                let d = (y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0;
                let denom = b - a * c_prime[i - 1];
                c_prime[i] = c / denom;
                d_prime[i] = (d - a * d_prime[i - 1]) / denom;
            }
            for i in (1..n - 1).rev() {
                m[i] = d_prime[i] - c_prime[i] * m[i + 1];
            }
        }
        let h = (x[n - 1] - x[0]) / (n - 1) as f64;
        let uniform = x
            .windows(2)
            .all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h.abs().max(1.0));
        NaturalSpline {
            x,
            y,
            m,
            uniform_step: uniform.then_some(h),
        }
    }

    pub fn knots(&self) -> &[f64] {
        &self.x
    }

    pub fn values(&self) -> &[f64] {
        &self.y
    }

    pub fn x_min(&self) -> f64 {
        self.x[0]
    }

    pub fn x_max(&self) -> f64 {
        self.x[self.x.len() - 1]
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.x_min() && x <= self.x_max()
    }

    fn interval(&self, x: f64) -> usize {
        let last = self.x.len() - 2;
        let guess = match self.uniform_step {
            Some(h) => {
                let k = ((x - self.x[0]) / h).floor();
                if k <= 0.0 {
                    0
                } else {
                    (k as usize).min(last)
                }
            }
            None => match self.x.binary_search_by(|p| p.total_cmp(&x)) {
                Ok(i) => i.min(last),
                Err(i) => i.saturating_sub(1).min(last),
            },
        };
        // Rounding in the uniform fast path can land one cell off.
        if guess > 0 && x < self.x[guess] {
            guess - 1
        } else if guess < last && x >= self.x[guess + 1] {
            guess + 1
        } else {
            guess
        }
    }

    /// Spline value. Caller guarantees `x` is within the knot range.
    pub fn eval(&self, x: f64) -> f64 {
        let i = self.interval(x);
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - x) / h;
        let b = (x - self.x[i]) / h;
        a * self.y[i]
            + b * self.y[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }

    /// First derivative of the spline.
    pub fn eval_derivative(&self, x: f64) -> f64 {
        let i = self.interval(x);
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - x) / h;
        let b = (x - self.x[i]) / h;
        (self.y[i + 1] - self.y[i]) / h
            + ((1.0 - 3.0 * a * a) * self.m[i] + (3.0 * b * b - 1.0) * self.m[i + 1]) * h / 6.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(a: f64, b: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn reproduces_knots() {
        let x = grid(0.0, 3.0, 31);
        let y: Vec<f64> = x.iter().map(|v| v.sin() * 7.0 + 1.0).collect();
        let s = NaturalSpline::new(x.clone(), y.clone());
        for (xi, yi) in x.iter().zip(&y) {
            assert!((s.eval(*xi) - yi).abs() <= 1e-12 * yi.abs().max(1.0));
        }
    }

    #[test]
    fn nonuniform_knots_use_binary_search() {
        let x: Vec<f64> = (0..20).map(|i| (i as f64).powf(1.3)).collect();
        let y: Vec<f64> = x.iter().map(|v| 0.5 * v).collect();
        let s = NaturalSpline::new(x, y);
        assert!((s.eval(7.77) - 3.885).abs() < 1e-12);
        assert!((s.eval_derivative(3.3) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn second_derivative_vanishes_at_ends() {
        let x = grid(-1.0, 1.0, 11);
        let y: Vec<f64> = x.iter().map(|v| v * v * v).collect();
        let s = NaturalSpline::new(x, y);
        assert_eq!(s.m[0], 0.0);
        assert_eq!(s.m[10], 0.0);
    }
}
