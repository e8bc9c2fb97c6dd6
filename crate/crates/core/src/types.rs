//! Domain model shared by the analytic and Monte Carlo modules.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Per-asset inputs of the structural model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssetParams {
    /// Volatility of the log-price, in year^-1/2.
    pub sigma: f64,
    /// Drift, in year^-1.
    pub mu: f64,
    /// Start price `V_0`.
    pub v0: f64,
    /// Face value `F`.
    pub face: f64,
}

impl AssetParams {
    pub fn new(sigma: f64, mu: f64, v0: f64, face: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return domain(format!("sigma must be positive and finite, got {sigma}"));
        }
        if !mu.is_finite() {
            return domain(format!("mu must be finite, got {mu}"));
        }
        if !(v0 > 0.0 && v0.is_finite()) {
            return domain(format!("v0 must be positive and finite, got {v0}"));
        }
        if !(face > 0.0 && face.is_finite()) {
            return domain(format!("face value must be positive and finite, got {face}"));
        }
        Ok(Self { sigma, mu, v0, face })
    }

    /// Deterministic part of the log-return, `(μ − σ²/2) T`.
    pub fn log_drift(&self, maturity: f64) -> f64 {
        (self.mu - 0.5 * self.sigma * self.sigma) * maturity
    }

    /// Default barrier in centred log-return space, `ln(F/V_0) − (μ − σ²/2) T`.
    ///
    /// The asset defaults iff its centred log-return falls below this value.
    pub fn log_barrier(&self, maturity: f64) -> f64 {
        (self.face / self.v0).ln() - self.log_drift(maturity)
    }
}

/// An ordered list of assets together with their face-value weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Portfolio {
    assets: Vec<AssetParams>,
    weights: Vec<f64>,
    homogeneous: bool,
}

impl Portfolio {
    pub fn new(assets: Vec<AssetParams>) -> Result<Self> {
        if assets.is_empty() {
            return domain("a portfolio needs at least one asset");
        }
        for (k, a) in assets.iter().enumerate() {
            AssetParams::new(a.sigma, a.mu, a.v0, a.face)
                .map_err(|e| crate::Error::Domain(format!("asset {k}: {e}")))?;
        }
        let total: f64 = assets.iter().map(|a| a.face).sum();
        let weights = assets.iter().map(|a| a.face / total).collect();
        let homogeneous = assets.iter().all(|a| *a == assets[0]);
        Ok(Self {
            assets,
            weights,
            homogeneous,
        })
    }

    /// Number of assets `K`.
    pub fn k(&self) -> usize {
        self.assets.len()
    }

    pub fn assets(&self) -> &[AssetParams] {
        &self.assets
    }

    /// Face-value weights `f_k = F_k / Σ F_i`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// True iff all assets carry identical parameters.
    pub fn is_homogeneous(&self) -> bool {
        self.homogeneous
    }

    /// The common asset of a homogeneous portfolio.
    pub fn homogeneous_asset(&self) -> Option<&AssetParams> {
        self.homogeneous.then(|| &self.assets[0])
    }
}

/// Builds a portfolio of `k` identical assets, so that `f_k = 1/K`.
pub fn make_homogeneous(k: usize, sigma: f64, mu: f64, v0: f64, face: f64) -> Result<Portfolio> {
    if k == 0 {
        return domain("a homogeneous portfolio needs k >= 1");
    }
    let asset = AssetParams::new(sigma, mu, v0, face)?;
    let mut p = Portfolio::new(vec![asset; k])?;
    // exact 1/K rather than F / (K F)
    let w = 1.0 / k as f64;
    p.weights.iter_mut().for_each(|x| *x = w);
    Ok(p)
}

/// Parameters of the random correlation ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleParams {
    /// Number of columns `N` of the random matrix `W`.
    pub n: usize,
    /// Maturity `T` in years.
    pub maturity: f64,
}

impl EnsembleParams {
    pub fn new(n: usize, maturity: f64) -> Result<Self> {
        if n == 0 {
            return domain("ensemble parameter N must be >= 1");
        }
        if !(maturity > 0.0 && maturity.is_finite()) {
            return domain(format!("maturity must be positive, got {maturity}"));
        }
        Ok(Self { n, maturity })
    }

    /// Rejects the rank-deficient case `N < K`.
    pub fn require_full_rank(&self, k: usize) -> Result<()> {
        if self.n < k {
            return domain(format!(
                "N = {} < K = {k}: the correlation matrix would be singular",
                self.n
            ));
        }
        Ok(())
    }

    /// `N / 2`, the shape of the Gamma-distributed mixing variable.
    pub fn half_n(&self) -> f64 {
        0.5 * self.n as f64
    }

    /// Laguerre exponent `N/2 − 1` of the mixing weight `z^{N/2−1} e^{−z}`.
    pub fn mixing_alpha(&self) -> f64 {
        self.half_n() - 1.0
    }

    /// Conditional log-return variance `2 z T σ² / N` given the mixing variable.
    pub fn conditional_variance(&self, z: f64, sigma: f64) -> f64 {
        2.0 * z * self.maturity * sigma * sigma / self.n as f64
    }
}

/// Normalized loss of one credit: `(F − V)/F` on default, zero otherwise.
pub fn normalized_loss(price: f64, face: f64) -> Result<f64> {
    if !(face > 0.0) {
        return domain(format!("face value must be positive, got {face}"));
    }
    if !(price >= 0.0) {
        return domain(format!("price must be nonnegative, got {price}"));
    }
    Ok(if price < face {
        (face - price) / face
    } else {
        0.0
    })
}

/// Face-value weighted portfolio loss `Σ f_k L_k`.
pub fn portfolio_loss(prices: &[f64], portfolio: &Portfolio) -> Result<f64> {
    if prices.len() != portfolio.k() {
        return domain(format!(
            "expected {} prices, got {}",
            portfolio.k(),
            prices.len()
        ));
    }
    let mut total = 0.0;
    for ((&v, a), &f) in prices.iter().zip(portfolio.assets()).zip(portfolio.weights()) {
        total += f * normalized_loss(v, a.face)?;
    }
    Ok(total.clamp(0.0, 1.0))
}

/// Loss levels at which densities are evaluated; strictly increasing in (0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrid {
    points: Vec<f64>,
}

impl LossGrid {
    pub const DEFAULT_POINTS: usize = 400;
    /// Losses below this level are not evaluated; they are dominated by
    /// the zero-loss atom and by single small defaults.
    pub const DEFAULT_MIN: f64 = 2e-4;

    pub fn from_points(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return domain("a loss grid needs at least two points");
        }
        if !(points[0] > 0.0) || *points.last().unwrap() > 1.0 {
            return domain("loss grid points must lie in (0, 1]");
        }
        if points.windows(2).any(|w| !(w[1] > w[0])) {
            return domain("loss grid points must be strictly increasing");
        }
        Ok(Self { points })
    }

    pub fn log_spaced(n: usize, min: f64, max: f64) -> Result<Self> {
        if n < 2 || !(min > 0.0) || !(max > min) || max > 1.0 {
            return domain(format!("invalid log grid: n={n}, min={min}, max={max}"));
        }
        let (lo, hi) = (min.ln(), max.ln());
        let step = (hi - lo) / (n - 1) as f64;
        let mut points: Vec<f64> = (0..n).map(|i| (lo + step * i as f64).exp()).collect();
        points[0] = min;
        points[n - 1] = max;
        Self::from_points(points)
    }

    pub fn uniform(n: usize, min: f64, max: f64) -> Result<Self> {
        if n < 2 || !(min > 0.0) || !(max > min) || max > 1.0 {
            return domain(format!("invalid uniform grid: n={n}, min={min}, max={max}"));
        }
        let step = (max - min) / (n - 1) as f64;
        let mut points: Vec<f64> = (0..n).map(|i| min + step * i as f64).collect();
        points[n - 1] = max;
        Self::from_points(points)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

impl Default for LossGrid {
    fn default() -> Self {
        Self::log_spaced(Self::DEFAULT_POINTS, Self::DEFAULT_MIN, 1.0).expect("valid default grid")
    }
}

/// A loss distribution: an atom at `L = 0` plus a density sampled on a grid.
///
/// `ln_density` carries the natural log of the density so that tails far
/// below `f64::MIN_POSITIVE` stay comparable.
#[derive(Debug, Clone, PartialEq)]
pub struct LossDensity {
    pub grid: LossGrid,
    pub density: Vec<f64>,
    pub ln_density: Vec<f64>,
    pub zero_mass: f64,
}

impl LossDensity {
    pub fn new(grid: LossGrid, density: Vec<f64>, zero_mass: f64) -> Result<Self> {
        let ln_density = density.iter().map(|d| d.ln()).collect();
        Self::assemble(grid, density, ln_density, zero_mass)
    }

    pub fn from_ln(grid: LossGrid, ln_density: Vec<f64>, zero_mass: f64) -> Result<Self> {
        let density = ln_density.iter().map(|l| l.exp()).collect();
        Self::assemble(grid, density, ln_density, zero_mass)
    }

    fn assemble(
        grid: LossGrid,
        density: Vec<f64>,
        ln_density: Vec<f64>,
        zero_mass: f64,
    ) -> Result<Self> {
        if density.len() != grid.len() {
            return domain(format!(
                "density has {} values for a grid of {} points",
                density.len(),
                grid.len()
            ));
        }
        if density.iter().any(|d| !(*d >= 0.0) || d.is_infinite()) {
            return domain("density values must be finite and nonnegative");
        }
        if !(0.0..=1.0).contains(&zero_mass) {
            return domain(format!("zero mass must lie in [0, 1], got {zero_mass}"));
        }
        Ok(Self {
            grid,
            density,
            ln_density,
            zero_mass,
        })
    }

    pub fn points(&self) -> &[f64] {
        self.grid.points()
    }

    /// Trapezoid integral of the density over the grid.
    pub fn integral(&self) -> f64 {
        trapezoid(self.points(), &self.density)
    }

    /// `zero_mass + integral()`.
    pub fn total_mass(&self) -> f64 {
        self.zero_mass + self.integral()
    }

    /// Linear interpolation of the density; zero outside the grid.
    pub fn density_at(&self, loss: f64) -> f64 {
        let g = self.points();
        if loss < g[0] || loss > g[g.len() - 1] {
            return 0.0;
        }
        let i = match g.partition_point(|&x| x <= loss) {
            0 => 0,
            i if i >= g.len() => g.len() - 2,
            i => i - 1,
        };
        let t = (loss - g[i]) / (g[i + 1] - g[i]);
        self.density[i] + t * (self.density[i + 1] - self.density[i])
    }

    /// Trapezoid mass of the piecewise-linear density on `[a, b]`, clipped to the grid.
    pub fn mass_between(&self, a: f64, b: f64) -> f64 {
        let g = self.points();
        let lo = a.max(g[0]);
        let hi = b.min(g[g.len() - 1]);
        if !(hi > lo) {
            return 0.0;
        }
        let mut xs = vec![lo];
        xs.extend(g.iter().copied().filter(|&x| x > lo && x < hi));
        xs.push(hi);
        let ys: Vec<f64> = xs.iter().map(|&x| self.density_at(x)).collect();
        trapezoid(&xs, &ys)
    }

    /// Rescales the density so that `total_mass() == 1`, keeping the atom.
    pub fn renormalized(&self) -> Result<Self> {
        let cont = self.integral();
        if !(cont > 0.0) {
            return domain("cannot renormalize a density without continuous mass");
        }
        let scale = (1.0 - self.zero_mass) / cont;
        let density = self.density.iter().map(|d| d * scale).collect();
        let ln_density = self.ln_density.iter().map(|l| l + scale.ln()).collect();
        Self::assemble(self.grid.clone(), density, ln_density, self.zero_mass)
    }
}

pub(crate) fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xw, yw)| 0.5 * (xw[1] - xw[0]) * (yw[0] + yw[1]))
        .sum()
}

/// Histogram of simulated portfolio losses.
///
/// Draws with exactly zero loss are counted in `zero_loss_count`; every
/// other draw falls into exactly one bin of `bin_edges`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MCResult {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub total_draws: u64,
    pub seed: u64,
    pub zero_loss_count: u64,
    /// Sum of simulated losses, accumulated in a fixed chunk order.
    pub loss_sum: f64,
    /// Sum of squared simulated losses.
    pub loss_sq_sum: f64,
}

impl MCResult {
    pub fn zero_fraction(&self) -> f64 {
        self.zero_loss_count as f64 / self.total_draws as f64
    }

    /// Binomial standard error of [`Self::zero_fraction`].
    pub fn zero_fraction_stderr(&self) -> f64 {
        let p = self.zero_fraction();
        (p * (1.0 - p) / self.total_draws as f64).sqrt()
    }

    /// Fraction of all draws that landed in bin `i`.
    pub fn bin_mass(&self, i: usize) -> f64 {
        self.counts[i] as f64 / self.total_draws as f64
    }

    pub fn mean_loss(&self) -> f64 {
        self.loss_sum / self.total_draws as f64
    }

    pub fn loss_variance(&self) -> f64 {
        let n = self.total_draws as f64;
        let m = self.loss_sum / n;
        (self.loss_sq_sum / n - m * m) * n / (n - 1.0)
    }

    /// Empirical `P(L > threshold)`, interpolating inside the straddling bin.
    pub fn tail_fraction(&self, threshold: f64) -> f64 {
        let mut mass = 0.0;
        for (i, w) in self.bin_edges.windows(2).enumerate() {
            if w[0] >= threshold {
                mass += self.bin_mass(i);
            } else if w[1] > threshold {
                mass += self.bin_mass(i) * (w[1] - threshold) / (w[1] - w[0]);
            }
        }
        mass
    }
}
