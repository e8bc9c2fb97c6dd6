//! Portfolio loss distributions.
//!
//! All methods integrate a conditional (given `z`) law against the Gamma
//! mixing distribution using a [`QuadratureRule`]; per-node work runs in
//! parallel and densities are accumulated in log space.

mod approx;
mod moments;
mod oracle;
mod risk;

use std::fmt;
use std::str::FromStr;

pub use approx::{loss_density_improved, loss_density_second_order};
pub use moments::{
    aggregate_moments, conditional_moment, conditional_moment_quadrature, default_probability,
    nondefault_prob, ConditionalMoments, DefaultCountTerm,
};
pub use oracle::{loss_density_oracle, ConvolutionResolution, OracleDensity};
pub use risk::{ln_tail_prob, tail_prob, var_es};

use crate::error::{domain, Error, Result};
use crate::specfun::{gamma_composite, gauss_laguerre, QuadratureRule};
use crate::types::{trapezoid, EnsembleParams, LossDensity};

/// Points of the default composite rule.
pub const DEFAULT_RULE_POINTS: usize = 512;
/// Nats below the mode covered by the default rule on the small-`z` side.
pub const DEFAULT_LOWER_DROP: f64 = 45.0;
/// Nats below the mode covered by the default rule on the large-`z` side.
///
/// Large mixing values produce the extreme losses, so this side reaches far.
pub const DEFAULT_UPPER_DROP: f64 = 1000.0;

/// Composite rule used by the Gaussian approximations.
pub fn default_rule(ensemble: &EnsembleParams) -> Result<QuadratureRule> {
    gamma_composite(
        ensemble.mixing_alpha(),
        DEFAULT_RULE_POINTS,
        DEFAULT_LOWER_DROP,
        DEFAULT_UPPER_DROP,
    )
}

/// Smaller rule for the convolution oracle, which costs one FFT per node.
pub fn oracle_rule(ensemble: &EnsembleParams) -> Result<QuadratureRule> {
    gauss_laguerre(ensemble.mixing_alpha(), 64)
}

/// Analytic loss-density methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    SecondOrder,
    Improved,
    Oracle,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::SecondOrder => "second-order",
            Method::Improved => "improved",
            Method::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "second-order" => Ok(Method::SecondOrder),
            "improved" => Ok(Method::Improved),
            "oracle" => Ok(Method::Oracle),
            other => domain(format!(
                "unknown method {other:?}; expected second-order, improved or oracle"
            )),
        }
    }
}

/// `∫ |a − b| dL` over grid points `L ≥ min_loss`; both densities must share a grid.
pub fn l1_distance(a: &LossDensity, b: &LossDensity, min_loss: f64) -> Result<f64> {
    if a.grid != b.grid {
        return domain("L1 distance needs both densities on the same grid");
    }
    let (x, y): (Vec<f64>, Vec<f64>) = a
        .points()
        .iter()
        .zip(a.density.iter().zip(&b.density))
        .filter(|(&l, _)| l >= min_loss)
        .map(|(&l, (p, q))| (l, (p - q).abs()))
        .unzip();
    Ok(trapezoid(&x, &y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::LossGrid;

    #[test]
    fn method_names_round_trip() {
        for m in [Method::SecondOrder, Method::Improved, Method::Oracle] {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("mc".parse::<Method>().is_err());
    }

    #[test]
    fn l1_of_identical_is_zero() {
        let g = LossGrid::default();
        let n = g.len();
        let d = LossDensity::new(g, vec![0.5; n], 0.5).unwrap();
        assert_eq!(l1_distance(&d, &d, 2e-4).unwrap(), 0.0);
        let other = LossDensity::new(LossGrid::uniform(5, 0.1, 1.0).unwrap(), vec![1.0; 5], 0.0).unwrap();
        assert!(l1_distance(&d, &other, 0.0).is_err());
    }

    #[test]
    fn rules_pass_the_moment_test() {
        for n in [2usize, 10, 50, 100, 300, 3000] {
            let ens = EnsembleParams::new(n, 1.0).unwrap();
            default_rule(&ens).unwrap().verify_moments(ens.mixing_alpha()).unwrap();
            oracle_rule(&ens).unwrap().verify_moments(ens.mixing_alpha()).unwrap();
        }
    }
}
