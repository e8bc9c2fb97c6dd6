//! Per-asset loss moments conditional on the mixing variable `z`.
//!
//! Given `z`, the centred log-return of an asset is Gaussian with standard
//! deviation `s = sqrt(2 z T σ² / N)`. Writing `d` for the default barrier
//! and `c = d/s`, the asset defaults with probability `Φ(c)`, and the loss
//! conditional on default has the ratios
//!
//! ```text
//! E[V/F | default]   = erfcx((s − c)/√2) / erfcx(−c/√2)
//! E[(V/F)² | default] = erfcx((2s − c)/√2) / erfcx(−c/√2)
//! ```
//!
//! which stay well conditioned when `Φ(c)` underflows.

use crate::error::{domain, Result};
use crate::specfun::{erfcx, integrate, ln_gamma, ln_norm_cdf, norm_cdf};
use crate::types::{AssetParams, EnsembleParams, Portfolio};

/// Loss statistics of one asset for a fixed mixing value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionalMoments {
    pub z: f64,
    /// Conditional standard deviation of the centred log-return.
    pub scale: f64,
    /// `ln P(default | z)`.
    pub ln_default_prob: f64,
    /// `ln P(no default | z)`.
    pub ln_survival_prob: f64,
    /// `E[L_k | default, z]`.
    pub default_mean: f64,
    /// `Var[L_k | default, z]`.
    pub default_variance: f64,
}

impl ConditionalMoments {
    pub fn compute(z: f64, asset: &AssetParams, ensemble: &EnsembleParams) -> Result<Self> {
        if !(z > 0.0 && z.is_finite()) {
            return domain(format!("mixing value must be positive and finite, got {z}"));
        }
        let s = ensemble.conditional_variance(z, asset.sigma).sqrt();
        let d = asset.log_barrier(ensemble.maturity);
        let c = d / s;
        let (e1, e2) = if c <= 0.0 {
            let den = erfcx(-c / std::f64::consts::SQRT_2);
            (
                erfcx((s - c) / std::f64::consts::SQRT_2) / den,
                erfcx((2.0 * s - c) / std::f64::consts::SQRT_2) / den,
            )
        } else {
            let ln_phi = ln_norm_cdf(c);
            (
                (-d + 0.5 * s * s + ln_norm_cdf(c - s) - ln_phi).exp(),
                (-2.0 * d + 2.0 * s * s + ln_norm_cdf(c - 2.0 * s) - ln_phi).exp(),
            )
        };
        let e1 = e1.clamp(0.0, 1.0);
        Ok(Self {
            z,
            scale: s,
            ln_default_prob: ln_norm_cdf(c),
            ln_survival_prob: ln_norm_cdf(-c),
            default_mean: 1.0 - e1,
            default_variance: (e2 - e1 * e1).max(0.0),
        })
    }

    pub fn default_prob(&self) -> f64 {
        self.ln_default_prob.exp()
    }

    pub fn survival_prob(&self) -> f64 {
        self.ln_survival_prob.exp()
    }

    /// `E[L_k^j | z]`, `j` in `0..=2`; `L_k` is zero unless the asset defaults.
    pub fn raw_moment(&self, j: u32) -> Result<f64> {
        let m0 = self.default_prob();
        match j {
            0 => Ok(m0),
            1 => Ok(m0 * self.default_mean),
            2 => Ok(m0 * (self.default_mean * self.default_mean + self.default_variance)),
            _ => Err(crate::Error::Unsupported(format!(
                "closed forms exist for moments 0..=2, not {j}"
            ))),
        }
    }

    /// `Var[L_k | z]` including the no-default atom.
    pub fn variance(&self) -> f64 {
        let m0 = self.default_prob();
        let m = self.default_mean;
        (m0 * (m * m + self.default_variance) - m0 * m0 * m * m).max(0.0)
    }

    /// Terms of the mixture over the number of defaults `j = 1..=k`.
    pub fn default_count_terms(&self, k: usize) -> Result<Vec<DefaultCountTerm>> {
        let kf = k as f64;
        let ln_k_fact = ln_gamma(kf + 1.0)?;
        (1..=k)
            .map(|j| {
                let jf = j as f64;
                let ln_binom = ln_k_fact - ln_gamma(jf + 1.0)? - ln_gamma(kf - jf + 1.0)?;
                Ok(DefaultCountTerm {
                    defaults: j,
                    ln_weight: ln_binom
                        + jf * self.ln_default_prob
                        + (kf - jf) * self.ln_survival_prob,
                    mean: jf * self.default_mean / kf,
                    variance: jf * self.default_variance / (kf * kf),
                })
            })
            .collect()
    }
}

/// Gaussian component for exactly `defaults` of `K` homogeneous assets in default.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DefaultCountTerm {
    pub defaults: usize,
    /// `ln[C(K, j) p^j (1−p)^{K−j}]`.
    pub ln_weight: f64,
    /// Mean portfolio loss given `j` defaults.
    pub mean: f64,
    /// Variance of the portfolio loss given `j` defaults.
    pub variance: f64,
}

/// `E[L_k^j | z]` for `j` in `0..=2`.
pub fn conditional_moment(j: u32, z: f64, asset: &AssetParams, ensemble: &EnsembleParams) -> Result<f64> {
    ConditionalMoments::compute(z, asset, ensemble)?.raw_moment(j)
}

/// `P(V_k ≥ F_k | z)`.
pub fn nondefault_prob(z: f64, asset: &AssetParams, ensemble: &EnsembleParams) -> Result<f64> {
    Ok(ConditionalMoments::compute(z, asset, ensemble)?.survival_prob())
}

/// Same moment by adaptive quadrature over the price `V ∈ (0, F)` of the
/// conditional log-normal density.
pub fn conditional_moment_quadrature(
    j: u32,
    z: f64,
    asset: &AssetParams,
    ensemble: &EnsembleParams,
) -> Result<f64> {
    if !(z > 0.0 && z.is_finite()) {
        return domain(format!("mixing value must be positive and finite, got {z}"));
    }
    let var = ensemble.conditional_variance(z, asset.sigma);
    let s = var.sqrt();
    let a = asset.log_drift(ensemble.maturity);
    let face = asset.face;
    let norm = 1.0 / (s * (2.0 * std::f64::consts::PI).sqrt());
    let f = |v: f64| {
        if v <= 0.0 {
            return 0.0;
        }
        let y = (v / asset.v0).ln() - a;
        norm / v * ((face - v) / face).powi(j as i32) * (-0.5 * y * y / var).exp()
    };
    let mode_v = asset.v0 * a.exp();
    let lo = (face * (-40.0 * s).exp()).min(mode_v * (-40.0 * s).exp());
    let mut breaks = vec![lo];
    for k in [-8.0, -4.0, -2.0, -1.0, 0.0, 1.0, 2.0] {
        let v = mode_v * (k * s).exp();
        if v > lo && v < face {
            breaks.push(v);
        }
    }
    breaks.push(face);
    breaks.sort_by(f64::total_cmp);
    integrate::integrate_pieces(&f, &breaks, 1e-13, 0.0)
}

/// Conditional portfolio-loss mean and variance `(m̂1, m̂2)` for independent
/// assets given `z`.
pub fn aggregate_moments(z: f64, portfolio: &Portfolio, ensemble: &EnsembleParams) -> Result<(f64, f64)> {
    let mut mean = 0.0;
    let mut var = 0.0;
    for (asset, &f) in portfolio.assets().iter().zip(portfolio.weights()) {
        let m = ConditionalMoments::compute(z, asset, ensemble)?;
        mean += f * m.raw_moment(1)?;
        var += f * f * m.variance();
    }
    Ok((mean, var))
}

/// Unconditional `P(default)`, integrating `Φ(c(z))` against the mixing law.
pub fn default_probability(
    asset: &AssetParams,
    ensemble: &EnsembleParams,
    rule: &crate::specfun::QuadratureRule,
) -> Result<f64> {
    rule.verify_moments(ensemble.mixing_alpha())?;
    Ok(rule.expect(|z| {
        let s = ensemble.conditional_variance(z, asset.sigma).sqrt();
        norm_cdf(asset.log_barrier(ensemble.maturity) / s)
    }))
}
