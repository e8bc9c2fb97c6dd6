//! Special functions and quadrature used by the analytic formulas.

mod bessel;
mod erf;
pub mod integrate;
mod quadrature;

pub use bessel::ln_bessel_k;
pub use erf::{erf, erfc, erfcx, ln_gamma, ln_norm_cdf, norm_cdf};
pub use quadrature::{gamma_composite, gauss_laguerre, gauss_legendre, QuadratureKind, QuadratureRule};

/// Numerically stable `ln(Σ exp(x_i))`; returns `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = LogSumExp::default();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// Streaming log-sum-exp accumulator.
#[derive(Debug, Clone, Copy)]
pub struct LogSumExp {
    max: f64,
    sum: f64,
}

impl Default for LogSumExp {
    fn default() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }
}

impl LogSumExp {
    pub fn add(&mut self, x: f64) {
        if x == f64::NEG_INFINITY || x.is_nan() {
            return;
        }
        if x <= self.max {
            self.sum += (x - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - x).exp() + 1.0;
            self.max = x;
        }
    }

    pub fn merge(&mut self, other: &Self) {
        if other.max == f64::NEG_INFINITY {
            return;
        }
        if other.max <= self.max {
            self.sum += other.sum * (other.max - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - other.max).exp() + other.sum;
            self.max = other.max;
        }
    }

    pub fn max(&self) -> f64 {
        self.max
    }

    pub fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.sum.ln()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_sum_exp_handles_extremes() {
        assert_eq!(log_sum_exp([]), f64::NEG_INFINITY);
        assert!((log_sum_exp([-1000.0, -1000.0]) - (-1000.0 + 2f64.ln())).abs() < 1e-12);
        assert!((log_sum_exp([0.0, f64::NEG_INFINITY]) - 0.0).abs() < 1e-15);
        let mut a = LogSumExp::default();
        a.add(1.0);
        let mut b = LogSumExp::default();
        b.add(3.0);
        a.merge(&b);
        assert!((a.value() - log_sum_exp([1.0, 3.0])).abs() < 1e-14);
    }
}
