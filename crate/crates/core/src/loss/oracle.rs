//! Exact per-`z` loss law of a homogeneous portfolio by FFT convolution.
//!
//! Given `z` the assets are independent, so the portfolio loss law is the
//! `K`-fold convolution of the single-asset law `r·δ₀ + g`, where `g` is the
//! defaulted part. On a lattice of `M` cells per unit loss the transform of
//! the sum is `(r + ĝ)^K`; removing `r^K` leaves the continuous part.

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::approx::check_rule;
use super::moments::ConditionalMoments;
use crate::error::{domain, Error, Result};
use crate::specfun::{log_sum_exp, ln_norm_cdf, QuadratureRule};
use crate::types::{trapezoid, AssetParams, EnsembleParams, LossDensity, LossGrid, Portfolio};

/// Lattice resolution and acceptance threshold for the oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvolutionResolution {
    /// Cells per unit of single-asset loss.
    pub bins: usize,
    /// Largest accepted L1 distance between the results at `bins` and `2·bins`.
    pub max_error: f64,
}

impl Default for ConvolutionResolution {
    fn default() -> Self {
        Self {
            bins: 1 << 14,
            max_error: 1e-3,
        }
    }
}

/// An oracle run plus its discretization diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleDensity {
    /// Result at the finer lattice (`2·bins` cells).
    pub density: LossDensity,
    /// L1 distance between the `bins` and `2·bins` results on the output grid.
    pub discretization_error: f64,
}

/// `Φ(x) − Φ(y)` for `x ≥ y`, accurate in both tails.
fn phi_diff(x: f64, y: f64) -> f64 {
    if x <= y {
        return 0.0;
    }
    if y > 0.0 {
        return phi_diff(-y, -x);
    }
    let lx = ln_norm_cdf(x);
    if y == f64::NEG_INFINITY {
        return lx.exp();
    }
    let ly = ln_norm_cdf(y);
    -(lx.exp()) * (ly - lx).exp_m1()
}

/// Cell masses of the defaulted part of the single-asset loss, cell `i`
/// centred at `i/bins`.
fn single_asset_cells(m: &ConditionalMoments, d: f64, bins: usize) -> Vec<f64> {
    let s = m.scale;
    let h = 1.0 / bins as f64;
    // c(ℓ) = (d + ln(1−ℓ))/s, the standardized log-return at loss ℓ
    let c_at = |l: f64| {
        if l >= 1.0 {
            f64::NEG_INFINITY
        } else {
            (d + (-l).ln_1p()) / s
        }
    };
    let mut out = Vec::with_capacity(bins + 1);
    let mut upper = c_at(0.0);
    for i in 0..=bins {
        let edge = ((i as f64 + 0.5) * h).min(1.0);
        let lower = c_at(edge);
        out.push(phi_diff(upper, lower));
        upper = lower;
    }
    out
}

struct Plan {
    size: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Plan {
    fn new(size: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            size,
            forward: planner.plan_fft_forward(size),
            inverse: planner.plan_fft_inverse(size),
        }
    }
}

/// Continuous part of the portfolio loss density at each grid point, for one `z`.
fn node_density(
    m: &ConditionalMoments,
    d: f64,
    k: usize,
    bins: usize,
    plan: &Plan,
    grid: &[f64],
) -> Vec<f64> {
    let cells = single_asset_cells(m, d, bins);
    let r = m.survival_prob();
    let mut buf = vec![Complex::new(0.0, 0.0); plan.size];
    for (b, &c) in buf.iter_mut().zip(&cells) {
        b.re = c;
    }
    plan.forward.process(&mut buf);
    let rk = r.powi(k as i32);
    for b in buf.iter_mut() {
        *b = (*b + r).powi(k as i32) - rk;
    }
    plan.inverse.process(&mut buf);
    let scale = 1.0 / plan.size as f64;
    let last = k * bins;
    // mass of S at j/bins → density of L = S/K at j/(K·bins)
    let mass = |j: usize| (buf[j].re * scale).max(0.0);
    let to_density = (k * bins) as f64;
    grid.iter()
        .map(|&l| {
            let x = l * (k * bins) as f64;
            let j = (x.floor() as usize).min(last);
            let t = x - j as f64;
            let lo = mass(j);
            let hi = if j < last { mass(j + 1) } else { 0.0 };
            (lo + t * (hi - lo)) * to_density
        })
        .collect()
}

fn mixed_density(
    asset: &AssetParams,
    k: usize,
    ensemble: &EnsembleParams,
    rule: &QuadratureRule,
    bins: usize,
    grid: &[f64],
) -> Result<Vec<f64>> {
    let plan = Plan::new((k * bins + 1).next_power_of_two());
    let d = asset.log_barrier(ensemble.maturity);
    let per_node = rule
        .nodes
        .par_iter()
        .map(|&z| {
            let m = ConditionalMoments::compute(z, asset, ensemble)?;
            Ok(node_density(&m, d, k, bins, &plan, grid))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = vec![0.0; grid.len()];
    for (dens, &w) in per_node.iter().zip(&rule.weights) {
        for (o, v) in out.iter_mut().zip(dens) {
            *o += w * v;
        }
    }
    Ok(out)
}

/// Exact loss density of a homogeneous portfolio up to lattice error.
pub fn loss_density_oracle(
    grid: &LossGrid,
    portfolio: &Portfolio,
    ensemble: &EnsembleParams,
    rule: &QuadratureRule,
    resolution: ConvolutionResolution,
) -> Result<OracleDensity> {
    let asset = portfolio.homogeneous_asset().ok_or_else(|| {
        Error::Unsupported("the convolution oracle requires a homogeneous portfolio".into())
    })?;
    if resolution.bins < 16 {
        return domain(format!("oracle needs at least 16 bins, got {}", resolution.bins));
    }
    let k = portfolio.k();
    check_rule(rule, ensemble)?;
    let pts = grid.points();
    let coarse = mixed_density(asset, k, ensemble, rule, resolution.bins, pts)?;
    let fine = mixed_density(asset, k, ensemble, rule, 2 * resolution.bins, pts)?;
    let diff: Vec<f64> = coarse.iter().zip(&fine).map(|(a, b)| (a - b).abs()).collect();
    let err = trapezoid(pts, &diff);
    if !(err <= resolution.max_error) {
        return Err(Error::Numerical(format!(
            "oracle discretization error {err:e} exceeds {:e} at {} bins",
            resolution.max_error, resolution.bins
        )));
    }
    let ln_zero = log_sum_exp(rule.nodes.iter().zip(&rule.ln_weights).map(|(&z, &lw)| {
        let m = ConditionalMoments::compute(z, asset, ensemble).expect("validated node");
        lw + k as f64 * m.ln_survival_prob
    }));
    Ok(OracleDensity {
        density: LossDensity::new(grid.clone(), fine, ln_zero.exp().min(1.0))?,
        discretization_error: err,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::{default_rule, oracle_rule};
    use crate::make_homogeneous;
    use crate::specfun::{integrate, norm_cdf};

    #[test]
    fn phi_difference_in_tails() {
        let v = phi_diff(-20.0, -20.001);
        let mid = 20.0005f64;
        let direct = (-0.5 * mid * mid).exp() / (2.0 * std::f64::consts::PI).sqrt() * 0.001;
        assert!(((v - direct) / direct).abs() < 1e-4);
        assert!((phi_diff(5.0, 4.0) - (norm_cdf(5.0) - norm_cdf(4.0))).abs() < 1e-16);
        assert_eq!(phi_diff(1.0, 1.0), 0.0);
    }

    #[test]
    fn single_asset_equals_direct_mixture() {
        let p = make_homogeneous(1, 0.15, 0.05, 100.0, 75.0).unwrap();
        let ens = EnsembleParams::new(3, 1.0).unwrap();
        let rule = oracle_rule(&ens).unwrap();
        let grid = LossGrid::uniform(60, 0.005, 0.6).unwrap();
        let o = loss_density_oracle(&grid, &p, &ens, &rule, ConvolutionResolution::default()).unwrap();
        let a = p.assets()[0];
        let d = a.log_barrier(1.0);
        for (&l, &got) in grid.points().iter().zip(&o.density.density) {
            let want = rule.expect(|z| {
                let s = ens.conditional_variance(z, a.sigma).sqrt();
                let y = d + (1.0 - l).ln();
                (-0.5 * (y / s).powi(2)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt() * (1.0 - l))
            });
            assert!((got - want).abs() < 2e-3 * want.max(1e-3), "L={l}: {got} vs {want}");
        }
    }

    #[test]
    fn masses_add_up() {
        let p = make_homogeneous(10, 0.15, 0.05, 100.0, 75.0).unwrap();
        let ens = EnsembleParams::new(10, 1.0).unwrap();
        let rule = oracle_rule(&ens).unwrap();
        let grid = LossGrid::log_spaced(800, 1e-6, 1.0).unwrap();
        let o = loss_density_oracle(&grid, &p, &ens, &rule, ConvolutionResolution::default()).unwrap();
        assert!((o.density.total_mass() - 1.0).abs() < 2e-3, "{}", o.density.total_mass());
        assert!(o.discretization_error < 1e-3);
        let improved = crate::loss::loss_density_improved(&grid, &p, &ens, &default_rule(&ens).unwrap()).unwrap();
        assert!((improved.zero_mass - o.density.zero_mass).abs() < 1e-9);
    }

    #[test]
    fn two_assets_match_direct_convolution() {
        // K = 2 at a single z against a numeric convolution
        let p = make_homogeneous(2, 0.15, 0.05, 100.0, 75.0).unwrap();
        let ens = EnsembleParams::new(2, 1.0).unwrap();
        let a = p.assets()[0];
        let z = 1.3;
        let m = ConditionalMoments::compute(z, &a, &ens).unwrap();
        let d = a.log_barrier(1.0);
        let g = |l: f64| {
            if !(l > 0.0 && l < 1.0) {
                return 0.0;
            }
            let y = d + (1.0 - l).ln();
            (-0.5 * (y / m.scale).powi(2)).exp() / (m.scale * (2.0 * std::f64::consts::PI).sqrt() * (1.0 - l))
        };
        let r = m.survival_prob();
        let grid = LossGrid::uniform(30, 0.01, 0.3).unwrap();
        let dens: Vec<f64> = grid
            .points()
            .iter()
            .map(|&l| {
                let histogram = node_density(&m, d, 2, 1 << 15, &Plan::new(1 << 17), &[l])[0];
                let s = 2.0 * l;
                let conv = integrate::integrate(&|x| g(x) * g(s - x), 0.0, s, 1e-10, 1e-14).unwrap();
                let exact = 2.0 * (2.0 * r * g(s) + conv);
                assert!((histogram - exact).abs() < 2e-3 * exact.max(1e-2), "L={l}: {histogram} vs {exact}");
                histogram
            })
            .collect();
        assert!(dens.iter().all(|v| *v > 0.0));
    }

    #[test]
    fn coarse_lattice_is_rejected() {
        let p = make_homogeneous(4, 0.15, 0.05, 100.0, 75.0).unwrap();
        let ens = EnsembleParams::new(4, 1.0).unwrap();
        let res = ConvolutionResolution {
            bins: 16,
            max_error: 1e-6,
        };
        let err = loss_density_oracle(&LossGrid::default(), &p, &ens, &oracle_rule(&ens).unwrap(), res)
            .unwrap_err();
        assert!(matches!(err, Error::Numerical(_)));
    }
}
