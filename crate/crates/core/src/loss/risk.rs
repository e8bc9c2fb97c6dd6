//! Tail probabilities, Value-at-Risk and Expected Shortfall of a [`LossDensity`].
//!
//! The density is taken as piecewise linear on its grid, with the first
//! grid value extended as a constant down to `L = 0`.

use crate::error::{domain, Result};
use crate::specfun::{log_sum_exp, LogSumExp};
use crate::types::LossDensity;

fn check_nonempty(d: &LossDensity) -> Result<f64> {
    let total = d.total_mass();
    if !(total > 0.0) {
        return domain("loss distribution carries no mass");
    }
    Ok(total)
}

/// `P(L > threshold)`.
pub fn tail_prob(density: &LossDensity, threshold: f64) -> Result<f64> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return domain(format!("threshold must lie in (0, 1], got {threshold}"));
    }
    check_nonempty(density)?;
    let g = density.points();
    let below_grid = (g[0] - threshold).max(0.0) * density.density[0];
    Ok(below_grid + density.mass_between(threshold, 1.0))
}

/// `ln P(L > threshold)`, usable when the probability underflows.
pub fn ln_tail_prob(density: &LossDensity, threshold: f64) -> Result<f64> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return domain(format!("threshold must lie in (0, 1], got {threshold}"));
    }
    let g = density.points();
    let ln = &density.ln_density;
    let mut acc = LogSumExp::default();
    if threshold < g[0] {
        acc.add((g[0] - threshold).ln() + ln[0]);
    }
    for i in 0..g.len() - 1 {
        let (x0, x1) = (g[i], g[i + 1]);
        if x1 <= threshold {
            continue;
        }
        let (a, la) = if x0 < threshold {
            let t = (threshold - x0) / (x1 - x0);
            (threshold, ln[i] + t * (ln[i + 1] - ln[i]))
        } else {
            (x0, ln[i])
        };
        acc.add((0.5 * (x1 - a)).ln() + log_sum_exp([la, ln[i + 1]]));
    }
    Ok(acc.value())
}

/// `(VaR, ES)` at confidence `level`.
///
/// VaR is the smallest grid loss whose CDF reaches `level`; the atom at zero
/// counts, so VaR is 0 when the no-loss probability alone exceeds `level`.
/// Both measures use the distribution rescaled to unit total mass (atom,
/// sub-grid part and grid part), since the approximations are not exactly
/// normalized.
pub fn var_es(density: &LossDensity, level: f64) -> Result<(f64, f64)> {
    if !(level > 0.0 && level < 1.0) {
        return domain(format!("level must lie in (0, 1), got {level}"));
    }
    check_nonempty(density)?;
    let g = density.points();
    let f = &density.density;
    let n = g.len();
    // cdf[i] = P(L ≤ g[i]), first-moment partial sums mom[i] = E[L; L ≤ g[i]]
    let mut cdf = Vec::with_capacity(n);
    let mut mom = Vec::with_capacity(n);
    let mut c = density.zero_mass + f[0] * g[0];
    let mut m = 0.5 * f[0] * g[0] * g[0];
    cdf.push(c);
    mom.push(m);
    for i in 1..n {
        let h = g[i] - g[i - 1];
        c += 0.5 * h * (f[i - 1] + f[i]);
        // exact first moment of the linear segment
        m += h * (f[i - 1] * (2.0 * g[i - 1] + g[i]) + f[i] * (g[i - 1] + 2.0 * g[i])) / 6.0;
        cdf.push(c);
        mom.push(m);
    }
    let total = c;
    let cdf: Vec<f64> = cdf.iter().map(|v| v / total).collect();
    let mom: Vec<f64> = mom.iter().map(|v| v / total).collect();
    let mean = mom[n - 1];
    const TOL: f64 = 1e-12;
    let zero = density.zero_mass / total;
    let (var, cdf_at, mom_at) = if zero >= level - TOL {
        (0.0, zero, 0.0)
    } else {
        let i = cdf
            .iter()
            .position(|&v| v >= level - TOL)
            .unwrap_or(n - 1);
        (g[i], cdf[i], mom[i])
    };
    let es = (mean - mom_at + var * (cdf_at - level)) / (1.0 - level);
    Ok((var, es.max(var)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::LossGrid;

    fn uniform() -> LossDensity {
        let grid = LossGrid::uniform(1000, 0.001, 1.0).unwrap();
        let n = grid.len();
        LossDensity::new(grid, vec![1.0; n], 0.0).unwrap()
    }

    #[test]
    fn uniform_law() {
        let d = uniform();
        let (var, es) = var_es(&d, 0.9).unwrap();
        assert!((var - 0.9).abs() < 1e-12, "{var}");
        assert!((es - 0.95).abs() < 1e-9, "{es}");
        assert_eq!(tail_prob(&d, 1.0).unwrap(), 0.0);
        assert!((tail_prob(&d, 0.25).unwrap() - 0.75).abs() < 1e-12);
        assert!((tail_prob(&d, 0.0005).unwrap() - 0.9995).abs() < 1e-12);
        assert!((ln_tail_prob(&d, 0.25).unwrap() - 0.75f64.ln()).abs() < 1e-12);
        assert_eq!(ln_tail_prob(&d, 1.0).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn atom_dominated_level() {
        let grid = LossGrid::uniform(100, 0.01, 1.0).unwrap();
        let n = grid.len();
        let d = LossDensity::new(grid, vec![0.1; n], 0.9).unwrap();
        let (var, es) = var_es(&d, 0.85).unwrap();
        assert_eq!(var, 0.0);
        // E[L; L > 0] / 0.15 = 0.05 / 0.15
        assert!((es - 0.05 / 0.15).abs() < 1e-9, "{es}");
        let (var, _) = var_es(&d, 0.95).unwrap();
        assert!((var - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_arguments() {
        let d = uniform();
        assert!(tail_prob(&d, 0.0).is_err());
        assert!(tail_prob(&d, 1.5).is_err());
        assert!(var_es(&d, 1.0).is_err());
        let g = LossGrid::uniform(3, 0.1, 1.0).unwrap();
        let empty = LossDensity::new(g, vec![0.0; 3], 0.0).unwrap();
        assert!(tail_prob(&empty, 0.5).is_err());
        assert!(var_es(&empty, 0.5).is_err());
    }

    #[test]
    fn log_tail_matches_linear_tail() {
        let grid = LossGrid::log_spaced(200, 1e-3, 1.0).unwrap();
        let dens: Vec<f64> = grid.points().iter().map(|&l| 30.0 * (-30.0 * l).exp()).collect();
        let d = LossDensity::new(grid, dens, 0.0).unwrap();
        for t in [0.01, 0.1, 0.5] {
            let lin = tail_prob(&d, t).unwrap();
            let lg = ln_tail_prob(&d, t).unwrap().exp();
            assert!(((lin - lg) / lin).abs() < 2e-3, "t={t}: {lin} vs {lg}");
        }
    }
}
