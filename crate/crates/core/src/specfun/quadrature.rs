//! Quadrature rules for integrals against the Gamma weight `z^α e^{−z}`.
//!
//! Weights are stored normalized by `Γ(α+1)`, i.e. the rule integrates
//! against the Gamma(α+1, 1) probability measure. `Γ(α+1)` itself is not
//! representable for the ensemble sizes of interest (α up to ~1500).

use nalgebra::{DMatrix, SymmetricEigen};

use super::erf::ln_gamma;
use crate::error::{domain, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadratureKind {
    /// Generalized Gauss–Laguerre (Golub–Welsch).
    Laguerre,
    /// Composite Gauss–Legendre in `u = ln z` over the region where the
    /// Gamma log-density is within a configured drop of its mode.
    Composite,
}

/// Nodes and normalized weights for `E[g(z)]`, `z ~ Gamma(α+1, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub kind: QuadratureKind,
    /// Laguerre exponent, `N/2 − 1` for the ensemble mixing variable.
    pub alpha: f64,
    /// Strictly increasing positive abscissas.
    pub nodes: Vec<f64>,
    /// Positive weights summing to one.
    pub weights: Vec<f64>,
    /// `ln` of `weights`, kept separately so that far-tail nodes whose
    /// weights underflow still contribute in log-space sums.
    pub ln_weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `Σ w_i g(z_i)`.
    pub fn expect(&self, g: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&z, &w)| w * g(z)).sum()
    }

    /// Maximum relative error of the moments `E[z^p]`, `p = 0..=max_power`,
    /// against `Γ(α+1+p)/Γ(α+1)` for the exponent `expected_alpha`.
    pub fn moment_error(&self, expected_alpha: f64, max_power: u32) -> f64 {
        (0..=max_power)
            .map(|p| {
                let exact: f64 = (0..p).map(|i| expected_alpha + 1.0 + i as f64).product();
                let got = self.expect(|z| z.powi(p as i32));
                ((got - exact) / exact).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Fails unless moments 0..=3 match the Gamma law with `expected_alpha` to 1e-8.
    pub fn verify_moments(&self, expected_alpha: f64) -> Result<()> {
        let err = self.moment_error(expected_alpha, 3);
        if err < 1e-8 && err.is_finite() {
            Ok(())
        } else {
            Err(Error::Numerical(format!(
                "quadrature moment test failed: rule alpha {} vs expected {}, max relative error {err:e}",
                self.alpha, expected_alpha
            )))
        }
    }

    /// A copy without nodes whose weight is below `e^{−drop}` times the largest.
    pub fn pruned(&self, drop: f64) -> Self {
        let max = self.ln_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let keep: Vec<usize> = (0..self.len())
            .filter(|&i| self.ln_weights[i] >= max - drop)
            .collect();
        Self {
            kind: self.kind,
            alpha: self.alpha,
            nodes: keep.iter().map(|&i| self.nodes[i]).collect(),
            weights: keep.iter().map(|&i| self.weights[i]).collect(),
            ln_weights: keep.iter().map(|&i| self.ln_weights[i]).collect(),
        }
    }
}

/// Gauss–Legendre nodes and weights on [−1, 1], by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 {
        return domain("Gauss-Legendre rule needs at least one point");
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..(n + 1) / 2 {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = nf * (x * pn - pnm1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Ok((nodes, weights))
}

/// Generalized Gauss–Laguerre rule for the weight `z^α e^{−z}`.
///
/// Exact for polynomials up to degree `2n − 1`.
pub fn gauss_laguerre(alpha: f64, n_points: usize) -> Result<QuadratureRule> {
    if !(alpha > -1.0) || !alpha.is_finite() {
        return domain(format!("Laguerre exponent must exceed -1, got {alpha}"));
    }
    if n_points < 2 {
        return domain(format!("Laguerre rule needs at least 2 points, got {n_points}"));
    }
    // Jacobi matrix of the monic generalized Laguerre recurrence
    let n = n_points;
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        let fi = i as f64;
        jacobi[(i, i)] = 2.0 * fi + alpha + 1.0;
        if i + 1 < n {
            let b = ((fi + 1.0) * (fi + 1.0 + alpha)).sqrt();
            jacobi[(i, i + 1)] = b;
            jacobi[(i + 1, i)] = b;
        }
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|j| (eig.eigenvalues[j], eig.eigenvectors[(0, j)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    if pairs.iter().any(|p| !(p.0 > 0.0)) || !(total > 0.0) {
        return Err(Error::Numerical(format!(
            "Golub-Welsch produced a nonpositive node for alpha={alpha}, n={n}"
        )));
    }
    let nodes: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let weights: Vec<f64> = pairs.iter().map(|p| p.1 / total).collect();
    let ln_weights = weights.iter().map(|w| w.ln()).collect();
    Ok(QuadratureRule {
        kind: QuadratureKind::Laguerre,
        alpha,
        nodes,
        weights,
        ln_weights,
    })
}

/// Composite rule for `z ~ Gamma(α+1, 1)` after the substitution `u = ln z`.
///
/// The `u`-range runs from where the log-density in `u` sits `lower_drop`
/// nats below its mode up to `upper_drop` nats below it, and is covered by
/// equal panels of 8-point Gauss–Legendre rules. A generous `upper_drop`
/// keeps far-tail mixing values, which drive extreme portfolio losses,
/// inside the rule.
pub fn gamma_composite(alpha: f64, n_points: usize, lower_drop: f64, upper_drop: f64) -> Result<QuadratureRule> {
    const PANEL: usize = 8;
    if !(alpha > -1.0) || !alpha.is_finite() {
        return domain(format!("Gamma exponent must exceed -1, got {alpha}"));
    }
    if n_points < PANEL {
        return domain(format!("composite rule needs at least {PANEL} points"));
    }
    if !(lower_drop > 0.0 && upper_drop > 0.0) {
        return domain("composite rule drops must be positive");
    }
    let shape = alpha + 1.0;
    let ln_norm = ln_gamma(shape)?;
    // log-density of u = ln z: shape·u − e^u − ln Γ(shape)
    let log_density = |u: f64| shape * u - u.exp() - ln_norm;
    let mode = shape.ln();
    let peak = log_density(mode);
    let find = |target_drop: f64, direction: f64| {
        let mut step = 1.0 / shape.sqrt();
        let mut u = mode;
        while peak - log_density(u + direction * step) < target_drop {
            u += direction * step;
            step *= 1.5;
        }
        let (mut lo, mut hi) = (u, u + direction * step);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if peak - log_density(mid) < target_drop {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let u_lo = find(lower_drop, -1.0);
    let u_hi = find(upper_drop, 1.0);
    let (gx, gw) = gauss_legendre(PANEL)?;
    let panels = n_points / PANEL;
    let width = (u_hi - u_lo) / panels as f64;
    let mut nodes = Vec::with_capacity(panels * PANEL);
    let mut ln_weights = Vec::with_capacity(panels * PANEL);
    for p in 0..panels {
        let centre = u_lo + width * (p as f64 + 0.5);
        for (&x, &w) in gx.iter().zip(&gw) {
            let u = centre + 0.5 * width * x;
            nodes.push(u.exp());
            ln_weights.push((0.5 * width * w).ln() + log_density(u));
        }
    }
    let weights: Vec<f64> = ln_weights.iter().map(|l: &f64| l.exp()).collect();
    Ok(QuadratureRule {
        kind: QuadratureKind::Composite,
        alpha,
        nodes,
        weights,
        ln_weights,
    })
}
