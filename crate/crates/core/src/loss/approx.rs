//! Gaussian approximations of the loss density, mixed over `z`.

use rayon::prelude::*;

use super::moments::{aggregate_moments, ConditionalMoments};
use crate::error::{Error, Result};
use crate::specfun::{log_sum_exp, QuadratureRule};
use crate::types::{EnsembleParams, LossDensity, LossGrid, Portfolio};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
/// Mixture terms more than this many nats below the leading term are dropped.
const PRUNE_NATS: f64 = 40.0;

/// A weighted Gaussian `exp(ln_scale) · exp(−(L−mean)²/(2 var))`.
#[derive(Debug, Clone, Copy)]
struct Component {
    ln_scale: f64,
    mean: f64,
    var: f64,
}

impl Component {
    fn new(ln_weight: f64, mean: f64, var: f64) -> Option<Self> {
        (var > 0.0 && ln_weight.is_finite()).then(|| Self {
            ln_scale: ln_weight - LN_SQRT_2PI - 0.5 * var.ln(),
            mean,
            var,
        })
    }

    fn ln_at(&self, l: f64) -> f64 {
        let d = l - self.mean;
        self.ln_scale - 0.5 * d * d / self.var
    }
}

pub(crate) fn check_rule(rule: &QuadratureRule, ensemble: &EnsembleParams) -> Result<()> {
    rule.verify_moments(ensemble.mixing_alpha()).map_err(|e| {
        Error::Numerical(format!(
            "quadrature rule (alpha {}) does not reproduce the Gamma(N/2) mixing law for N={}: {e}",
            rule.alpha, ensemble.n
        ))
    })
}

fn mixture_ln_density(grid: &LossGrid, components: &[Component]) -> Vec<f64> {
    grid.points()
        .par_iter()
        .map(|&l| {
            let top = components.iter().map(|c| c.ln_at(l)).fold(f64::NEG_INFINITY, f64::max);
            log_sum_exp(
                components
                    .iter()
                    .map(|c| c.ln_at(l))
                    .filter(|&v| v >= top - PRUNE_NATS),
            )
        })
        .collect()
}

/// Gaussian approximation of the full conditional loss law with mean `m̂1(z)`
/// and variance `m̂2(z)`. Cannot carry the no-default atom, so `zero_mass` is 0.
pub fn loss_density_second_order(
    grid: &LossGrid,
    portfolio: &Portfolio,
    ensemble: &EnsembleParams,
    rule: &QuadratureRule,
) -> Result<LossDensity> {
    check_rule(rule, ensemble)?;
    let components = rule
        .nodes
        .par_iter()
        .zip(&rule.ln_weights)
        .map(|(&z, &lw)| {
            let (mean, var) = aggregate_moments(z, portfolio, ensemble)?;
            Ok(Component::new(lw, mean, var))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect::<Vec<_>>();
    LossDensity::from_ln(grid.clone(), mixture_ln_density(grid, &components), 0.0)
}

/// Per-default-count Gaussian approximation for homogeneous portfolios,
/// with the exact no-default atom `E[(r^ND)^K]`.
pub fn loss_density_improved(
    grid: &LossGrid,
    portfolio: &Portfolio,
    ensemble: &EnsembleParams,
    rule: &QuadratureRule,
) -> Result<LossDensity> {
    let asset = portfolio.homogeneous_asset().ok_or_else(|| {
        Error::Unsupported("the improved approximation requires a homogeneous portfolio".into())
    })?;
    let k = portfolio.k();
    ensemble.require_full_rank(k)?;
    check_rule(rule, ensemble)?;
    let per_node = rule
        .nodes
        .par_iter()
        .zip(&rule.ln_weights)
        .map(|(&z, &lw)| {
            let m = ConditionalMoments::compute(z, asset, ensemble)?;
            let comps: Vec<Component> = m
                .default_count_terms(k)?
                .into_iter()
                .filter_map(|t| Component::new(lw + t.ln_weight, t.mean, t.variance))
                .collect();
            Ok((lw + k as f64 * m.ln_survival_prob, comps))
        })
        .collect::<Result<Vec<_>>>()?;
    let ln_zero = log_sum_exp(per_node.iter().map(|(z0, _)| *z0));
    let components: Vec<Component> = per_node.into_iter().flat_map(|(_, c)| c).collect();
    LossDensity::from_ln(
        grid.clone(),
        mixture_ln_density(grid, &components),
        ln_zero.exp().min(1.0),
    )
}
