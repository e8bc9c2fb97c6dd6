//! Ensemble-averaged price densities.
//!
//! Averaging the multivariate Gaussian over `Σ = S W Wᵀ S`, with `W` a
//! `K×N` matrix of i.i.d. `N(0, 1/N)` entries, gives a density that depends
//! on the prices only through the hyperradius `ρ = √(Σ V_k²/σ_k²)`:
//!
//! ```text
//! p(V) = (N/2πT)^{K/2} 2^{1−N/2} / Γ(N/2) · Π 1/σ_k · x^{(N−K)/2} K_{(N−K)/2}(x),
//! x = ρ √(N/T)
//! ```
//!
//! Everything is assembled in log space; at `K = 100, N = 3000` no factor of
//! the product is representable on its own.

use std::f64::consts::PI;

use crate::error::{domain, Result};
use crate::specfun::integrate::{integrate, integrate_pieces, integrate_to_infinity};
use crate::specfun::{ln_bessel_k, ln_gamma};
use crate::types::{AssetParams, EnsembleParams, Portfolio};

/// Hyperradius `ρ = √(Σ V_k²/σ_k²)` of a centred price vector.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Hyperradius(pub f64);

impl Hyperradius {
    pub fn of(values: &[f64], sigmas: impl IntoIterator<Item = f64>) -> Self {
        let r2: f64 = values
            .iter()
            .zip(sigmas)
            .map(|(&v, s)| (v / s).powi(2))
            .sum();
        Self(r2.sqrt())
    }
}

/// `ln[x^ν K_ν(x)]` with `x = ρ √(N/T)` plus the radial prefactor, for unit
/// volatilities. This is the log of the Brownian density at hyperradius `ρ`
/// without the `Π 1/σ_k` factor.
fn ln_radial_kernel(rho: f64, k: usize, ensemble: &EnsembleParams) -> Result<f64> {
    let n = ensemble.n as f64;
    let kf = k as f64;
    let t = ensemble.maturity;
    let order = 0.5 * (n - kf);
    let prefactor = 0.5 * kf * (n / (2.0 * PI * t)).ln() + (1.0 - 0.5 * n) * 2f64.ln()
        - ln_gamma(0.5 * n)?;
    if rho == 0.0 {
        // x^ν K_ν(x) → 2^{ν−1} Γ(ν) for ν > 0; logarithmic divergence at ν = 0
        return Ok(if order > 0.0 {
            prefactor + (order - 1.0) * 2f64.ln() + ln_gamma(order)?
        } else {
            f64::INFINITY
        });
    }
    let x = rho * (n / t).sqrt();
    Ok(prefactor + order * x.ln() + ln_bessel_k(order, x)?)
}

fn check_ensemble(k: usize, ensemble: &EnsembleParams) -> Result<()> {
    ensemble.require_full_rank(k)
}

/// `ln⟨p(V)⟩` of the Brownian-motion form (zero drift).
///
/// At `V = 0` with `N = K` this is `+∞`: the Bessel order vanishes and the
/// density has an integrable logarithmic singularity there.
pub fn ln_avg_price_pdf_bm(v: &[f64], portfolio: &Portfolio, ensemble: &EnsembleParams) -> Result<f64> {
    let k = portfolio.k();
    check_ensemble(k, ensemble)?;
    if v.len() != k {
        return domain(format!("expected {k} price components, got {}", v.len()));
    }
    let sigmas = portfolio.assets().iter().map(|a| a.sigma);
    let rho = Hyperradius::of(v, sigmas.clone()).0;
    let ln_sigma: f64 = sigmas.map(f64::ln).sum();
    Ok(ln_radial_kernel(rho, k, ensemble)? - ln_sigma)
}

pub fn avg_price_pdf_bm(v: &[f64], portfolio: &Portfolio, ensemble: &EnsembleParams) -> Result<f64> {
    ln_avg_price_pdf_bm(v, portfolio, ensemble).map(f64::exp)
}

/// Brownian form with the mean `μ_k T` reinstated; used for testing only.
pub fn avg_price_pdf_bm_with_drift(
    v: &[f64],
    portfolio: &Portfolio,
    ensemble: &EnsembleParams,
) -> Result<f64> {
    let shifted: Vec<f64> = v
        .iter()
        .zip(portfolio.assets())
        .map(|(&x, a)| x - a.mu * ensemble.maturity)
        .collect();
    avg_price_pdf_bm(&shifted, portfolio, ensemble)
}

/// `ln` of the hyperradial density of the Brownian form, normalized on `[0, ∞)`.
///
/// Includes the surface of the unit sphere, `2π^{K/2}/Γ(K/2)`, and the
/// radial Jacobian `ρ^{K−1}`.
pub fn ln_hyperradial_pdf(rho: f64, k: usize, ensemble: &EnsembleParams) -> Result<f64> {
    if k == 0 {
        return domain("hyperradial density needs K >= 1");
    }
    check_ensemble(k, ensemble)?;
    if !(rho >= 0.0) {
        return domain(format!("hyperradius must be nonnegative, got {rho}"));
    }
    let kf = k as f64;
    let ln_surface = 2f64.ln() + 0.5 * kf * PI.ln() - ln_gamma(0.5 * kf)?;
    if rho == 0.0 && k > 1 {
        return Ok(f64::NEG_INFINITY);
    }
    let jacobian = if k == 1 { 0.0 } else { (kf - 1.0) * rho.ln() };
    Ok(ln_surface + jacobian + ln_radial_kernel(rho, k, ensemble)?)
}

pub fn hyperradial_pdf(rho: f64, k: usize, ensemble: &EnsembleParams) -> Result<f64> {
    ln_hyperradial_pdf(rho, k, ensemble).map(f64::exp)
}

/// Breakpoints covering the bulk of the hyperradial density and a cutoff
/// beyond which it has dropped by more than 80 nats from its value at `√(KT)`.
fn hyperradial_breaks(k: usize, ensemble: &EnsembleParams) -> Result<Vec<f64>> {
    let centre = (k as f64 * ensemble.maturity).sqrt();
    let reference = ln_hyperradial_pdf(centre, k, ensemble)?;
    let mut breaks = vec![0.0, 0.125 * centre, 0.5 * centre, 0.8 * centre, centre, 1.25 * centre];
    let mut r = 1.25 * centre;
    while ln_hyperradial_pdf(r, k, ensemble)? > reference - 80.0 {
        r *= 1.5;
        breaks.push(r);
    }
    Ok(breaks)
}

/// `E[ρ^p]` under the hyperradial density, by adaptive quadrature.
pub fn hyperradial_moment(power: i32, k: usize, ensemble: &EnsembleParams) -> Result<f64> {
    let breaks = hyperradial_breaks(k, ensemble)?;
    let f = |r: f64| match ln_hyperradial_pdf(r, k, ensemble) {
        Ok(l) => (l + if power == 0 { 0.0 } else { power as f64 * r.ln() }).exp(),
        Err(_) => f64::NAN,
    };
    integrate_pieces(&f, &breaks, 1e-12, 1e-15)
}

/// Variance of one Brownian price component, `σ_i² E[ρ²] / K`, by quadrature
/// of the hyperradial density.
pub fn bm_component_variance(sigma: f64, k: usize, ensemble: &EnsembleParams) -> Result<f64> {
    Ok(sigma * sigma * hyperradial_moment(2, k, ensemble)? / k as f64)
}

/// Centred log-returns `V̂_k = ln(V_k/V_{k,0}) − (μ_k − σ_k²/2) T`.
pub fn centred_log_returns(v: &[f64], portfolio: &Portfolio, ensemble: &EnsembleParams) -> Result<Vec<f64>> {
    if v.len() != portfolio.k() {
        return domain(format!("expected {} prices, got {}", portfolio.k(), v.len()));
    }
    v.iter()
        .zip(portfolio.assets())
        .map(|(&x, a)| {
            if x > 0.0 {
                Ok((x / a.v0).ln() - a.log_drift(ensemble.maturity))
            } else {
                domain(format!("geometric Brownian prices must be positive, got {x}"))
            }
        })
        .collect()
}

/// `ln⟨p(V)⟩` of the geometric-Brownian form.
pub fn ln_avg_price_pdf_gbm(v: &[f64], portfolio: &Portfolio, ensemble: &EnsembleParams) -> Result<f64> {
    let hat = centred_log_returns(v, portfolio, ensemble)?;
    let jacobian: f64 = v.iter().map(|x| x.ln()).sum();
    Ok(ln_avg_price_pdf_bm(&hat, portfolio, ensemble)? - jacobian)
}

pub fn avg_price_pdf_gbm(v: &[f64], portfolio: &Portfolio, ensemble: &EnsembleParams) -> Result<f64> {
    ln_avg_price_pdf_gbm(v, portfolio, ensemble).map(f64::exp)
}

/// Marginal density of one asset's price. Conditionally on the mixing
/// variable the assets are independent, so the marginal is the `K = 1`
/// form with the same `N`.
pub fn gbm_marginal_pdf(v: f64, asset: &AssetParams, ensemble: &EnsembleParams) -> Result<f64> {
    let single = Portfolio::new(vec![*asset])?;
    avg_price_pdf_gbm(&[v], &single, ensemble)
}

/// Price standard deviation quoted for the geometric-Brownian ensemble,
/// `σ̂ = V_0 √(exp(σ²T + 2μT)(exp(σ²T) − 1))`.
///
/// This closed form does not depend on `N`; see [`gbm_price_moments`] for
/// the moments of the ensemble law itself.
pub fn gbm_price_stddev(asset: &AssetParams, ensemble: &EnsembleParams) -> f64 {
    let s2t = asset.sigma * asset.sigma * ensemble.maturity;
    asset.v0 * ((s2t + 2.0 * asset.mu * ensemble.maturity).exp() * s2t.exp_m1()).sqrt()
}

/// Mean and variance of one price under the ensemble law.
///
/// With `V = V_0 e^{(μ−σ²/2)T + V̂}` and `V̂ | z ~ N(0, 2zTσ²/N)`,
/// `E[e^{tV̂}] = (1 − t²Tσ²/N)^{−N/2}`. The variance is infinite once
/// `4Tσ² >= N`.
pub fn gbm_price_moments(asset: &AssetParams, ensemble: &EnsembleParams) -> (f64, f64) {
    let n = ensemble.n as f64;
    let s2t = asset.sigma * asset.sigma * ensemble.maturity;
    let mgf = |t: f64| {
        let base = 1.0 - t * t * s2t / n;
        if base <= 0.0 {
            f64::INFINITY
        } else {
            (-0.5 * n * base.ln()).exp()
        }
    };
    let drift = asset.log_drift(ensemble.maturity);
    let mean = asset.v0 * drift.exp() * mgf(1.0);
    let second = asset.v0 * asset.v0 * (2.0 * drift).exp() * mgf(2.0);
    (mean, second - mean * mean)
}

/// Total probability of the single-asset geometric-Brownian density.
pub fn gbm_single_asset_normalization(asset: &AssetParams, ensemble: &EnsembleParams) -> Result<f64> {
    let median = asset.v0 * asset.log_drift(ensemble.maturity).exp();
    let f = |v: f64| gbm_marginal_pdf(v, asset, ensemble).unwrap_or(f64::NAN);
    let below = integrate(&f, 0.0, median, 1e-12, 1e-15)?;
    let above = integrate_to_infinity(&f, median, 1e-12, 1e-15)?;
    Ok(below + above)
}
