//! Monte Carlo ground truth for the random-correlation model.
//!
//! Every draw samples a fresh `K×N` matrix `W` with i.i.d. `N(0, 1/N)`
//! entries and a standard normal `ξ ∈ R^N`; `V̂ = √T · S · W · ξ` then has
//! covariance `T S W Wᵀ S` given `W`.
//!
//! Draws are split into fixed-size chunks. Chunk `i` uses ChaCha8 stream `i`
//! of the configured seed, chunks run in parallel and their results are
//! merged in chunk order, so the output depends only on the configuration.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::types::{EnsembleParams, LossDensity, LossGrid, MCResult, Portfolio};

/// A `K×N` matrix of the correlation ensemble, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomMatrixDraw {
    k: usize,
    n: usize,
    w: Vec<f64>,
}

impl RandomMatrixDraw {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &[f64] {
        &self.w
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.w[row * self.n + col]
    }

    /// `W ξ`.
    pub fn apply(&self, xi: &[f64]) -> Vec<f64> {
        self.w
            .chunks_exact(self.n)
            .map(|row| row.iter().zip(xi).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `W Wᵀ`, row-major `K×K`.
    pub fn gram(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.k * self.k];
        for i in 0..self.k {
            for j in 0..=i {
                let v: f64 = (0..self.n).map(|c| self.get(i, c) * self.get(j, c)).sum();
                out[i * self.k + j] = v;
                out[j * self.k + i] = v;
            }
        }
        out
    }
}

pub fn sample_w<R: Rng + ?Sized>(k: usize, n: usize, rng: &mut R) -> Result<RandomMatrixDraw> {
    if k == 0 {
        return domain("K must be at least 1");
    }
    if n < k {
        return domain(format!("N={n} < K={k}: rank-deficient correlation ensembles are excluded"));
    }
    let sd = 1.0 / (n as f64).sqrt();
    let w = (0..k * n)
        .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Ok(RandomMatrixDraw { k, n, w })
}

fn check_draw(draw: &RandomMatrixDraw, portfolio: &Portfolio) -> Result<()> {
    if draw.k != portfolio.k() {
        return domain(format!(
            "matrix has {} rows for a portfolio of {} assets",
            draw.k,
            portfolio.k()
        ));
    }
    Ok(())
}

/// Centred log-returns `V̂ = √T S W ξ` for one fresh `ξ`.
pub fn sample_log_returns<R: Rng + ?Sized>(
    draw: &RandomMatrixDraw,
    portfolio: &Portfolio,
    ensemble: &EnsembleParams,
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_draw(draw, portfolio)?;
    let xi: Vec<f64> = (0..draw.n).map(|_| rng.sample(StandardNormal)).collect();
    let st = ensemble.maturity.sqrt();
    Ok(draw
        .apply(&xi)
        .into_iter()
        .zip(portfolio.assets())
        .map(|(x, a)| st * a.sigma * x)
        .collect())
}

/// Terminal prices `V_k = V_{k,0} exp((μ_k − σ_k²/2) T + V̂_k)`.
pub fn sample_terminal_prices<R: Rng + ?Sized>(
    draw: &RandomMatrixDraw,
    portfolio: &Portfolio,
    ensemble: &EnsembleParams,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let hat = sample_log_returns(draw, portfolio, ensemble, rng)?;
    Ok(to_prices(&hat, portfolio, ensemble))
}

fn to_prices(hat: &[f64], portfolio: &Portfolio, ensemble: &EnsembleParams) -> Vec<f64> {
    hat.iter()
        .zip(portfolio.assets())
        .map(|(&h, a)| a.v0 * (a.log_drift(ensemble.maturity) + h).exp())
        .collect()
}

/// Draw count, seed and chunking of a simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MCConfig {
    pub n_draws: u64,
    pub seed: u64,
    /// Draws per random stream. Part of the reproducibility contract.
    pub chunk_size: u64,
}

impl MCConfig {
    pub const DEFAULT_CHUNK: u64 = 1 << 14;

    pub fn new(n_draws: u64, seed: u64) -> Self {
        Self {
            n_draws,
            seed,
            chunk_size: Self::DEFAULT_CHUNK,
        }
    }

    fn chunks(&self) -> Result<Vec<(u64, u64)>> {
        if self.n_draws == 0 {
            return domain("Monte Carlo needs at least one draw");
        }
        if self.chunk_size == 0 {
            return domain("chunk size must be positive");
        }
        let count = self.n_draws.div_ceil(self.chunk_size);
        Ok((0..count)
            .map(|i| (i, self.chunk_size.min(self.n_draws - i * self.chunk_size)))
            .collect())
    }

    /// Generator for chunk `index`.
    pub fn stream(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        rng
    }

    fn run<T, F>(&self, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(&mut ChaCha8Rng, u64) -> Result<T> + Sync,
    {
        self.chunks()?
            .into_par_iter()
            .map(|(i, n)| f(&mut self.stream(i), n))
            .collect()
    }
}

/// Running power sums of a scalar sample.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleMoments {
    pub count: u64,
    pub sum: f64,
    pub sum_sq: f64,
    pub sum_cube: f64,
    pub sum_quad: f64,
}

impl SampleMoments {
    pub fn push(&mut self, x: f64) {
        let x2 = x * x;
        self.count += 1;
        self.sum += x;
        self.sum_sq += x2;
        self.sum_cube += x2 * x;
        self.sum_quad += x2 * x2;
    }

    pub fn merge(&mut self, o: &Self) {
        self.count += o.count;
        self.sum += o.sum;
        self.sum_sq += o.sum_sq;
        self.sum_cube += o.sum_cube;
        self.sum_quad += o.sum_quad;
    }

    pub fn mean(&self) -> f64 {
        self.sum / self.count as f64
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        let n = self.count as f64;
        let m = self.mean();
        (self.sum_sq / n - m * m) * n / (n - 1.0)
    }

    pub fn stddev(&self) -> f64 {
        self.variance().sqrt()
    }

    pub fn mean_stderr(&self) -> f64 {
        (self.variance() / self.count as f64).sqrt()
    }

    /// Large-sample standard error of [`Self::variance`], `√((μ₄ − σ⁴)/n)`.
    pub fn variance_stderr(&self) -> f64 {
        let n = self.count as f64;
        let m = self.mean();
        let (e2, e3, e4) = (self.sum_sq / n, self.sum_cube / n, self.sum_quad / n);
        let mu4 = e4 - 4.0 * m * e3 + 6.0 * m * m * e2 - 3.0 * m.powi(4);
        let var = e2 - m * m;
        ((mu4 - var * var).max(0.0) / n).sqrt()
    }

    /// Large-sample standard error of [`Self::stddev`] by the delta method.
    pub fn stddev_stderr(&self) -> f64 {
        self.variance_stderr() / (2.0 * self.stddev())
    }
}

/// Per-asset statistics of simulated log-returns and prices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSample {
    pub log_returns: Vec<SampleMoments>,
    pub prices: Vec<SampleMoments>,
}

/// Samples `V̂` and `V` with a fresh `W` per draw.
pub fn simulate_price_statistics(
    portfolio: &Portfolio,
    ensemble: &EnsembleParams,
    config: &MCConfig,
) -> Result<PriceSample> {
    ensemble.require_full_rank(portfolio.k())?;
    let k = portfolio.k();
    let parts = config.run(|rng, n| {
        let mut lr = vec![SampleMoments::default(); k];
        let mut pr = vec![SampleMoments::default(); k];
        for _ in 0..n {
            let w = sample_w(k, ensemble.n, rng)?;
            let hat = sample_log_returns(&w, portfolio, ensemble, rng)?;
            for (i, p) in to_prices(&hat, portfolio, ensemble).into_iter().enumerate() {
                lr[i].push(hat[i]);
                pr[i].push(p);
            }
        }
        Ok((lr, pr))
    })?;
    let mut out = PriceSample {
        log_returns: vec![SampleMoments::default(); k],
        prices: vec![SampleMoments::default(); k],
    };
    for (lr, pr) in &parts {
        for i in 0..k {
            out.log_returns[i].merge(&lr[i]);
            out.prices[i].merge(&pr[i]);
        }
    }
    Ok(out)
}

/// `T S W Wᵀ S`, the covariance of `V̂` given `W`.
pub fn conditional_covariance(draw: &RandomMatrixDraw, portfolio: &Portfolio, ensemble: &EnsembleParams) -> Result<Vec<f64>> {
    check_draw(draw, portfolio)?;
    let k = draw.k;
    let s: Vec<f64> = portfolio.assets().iter().map(|a| a.sigma).collect();
    let g = draw.gram();
    Ok((0..k * k)
        .map(|idx| ensemble.maturity * s[idx / k] * s[idx % k] * g[idx])
        .collect())
}

/// Sample covariance of `V̂` for one fixed `W`, only `ξ` redrawn.
pub fn sample_covariance_fixed_w(
    draw: &RandomMatrixDraw,
    portfolio: &Portfolio,
    ensemble: &EnsembleParams,
    config: &MCConfig,
) -> Result<Vec<f64>> {
    check_draw(draw, portfolio)?;
    let k = draw.k;
    let parts = config.run(|rng, n| {
        let mut sums = vec![0.0; k];
        let mut cross = vec![0.0; k * k];
        for _ in 0..n {
            let hat = sample_log_returns(draw, portfolio, ensemble, rng)?;
            for i in 0..k {
                sums[i] += hat[i];
                for j in 0..k {
                    cross[i * k + j] += hat[i] * hat[j];
                }
            }
        }
        Ok((sums, cross))
    })?;
    let mut sums = vec![0.0; k];
    let mut cross = vec![0.0; k * k];
    for (s, c) in &parts {
        sums.iter_mut().zip(s).for_each(|(a, b)| *a += b);
        cross.iter_mut().zip(c).for_each(|(a, b)| *a += b);
    }
    let n = config.n_draws as f64;
    Ok((0..k * k)
        .map(|idx| {
            let (i, j) = (idx / k, idx % k);
            (cross[idx] - sums[i] * sums[j] / n) / (n - 1.0)
        })
        .collect())
}

/// Histogram edges `[0, g_0, g_1, …]`: an underflow bin `(0, g_0)` followed
/// by one bin per grid interval.
pub fn loss_bin_edges(grid: &LossGrid) -> Vec<f64> {
    std::iter::once(0.0).chain(grid.points().iter().copied()).collect()
}

fn check_edges(edges: &[f64]) -> Result<()> {
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[1] > w[0])) {
        return domain("bin edges must be strictly increasing with at least two entries");
    }
    Ok(())
}

fn bin_of(edges: &[f64], x: f64) -> Option<usize> {
    if x < edges[0] || x > edges[edges.len() - 1] {
        return None;
    }
    Some((edges.partition_point(|&e| e <= x)).clamp(1, edges.len() - 1) - 1)
}

/// Loss histogram on [`loss_bin_edges`] of the default grid.
pub fn simulate_loss_ensemble(portfolio: &Portfolio, ensemble: &EnsembleParams, config: &MCConfig) -> Result<MCResult> {
    simulate_loss_histogram(portfolio, ensemble, config, &loss_bin_edges(&LossGrid::default()))
}

/// Histogram of the portfolio loss over independent `(W, ξ)` pairs.
pub fn simulate_loss_histogram(
    portfolio: &Portfolio,
    ensemble: &EnsembleParams,
    config: &MCConfig,
    edges: &[f64],
) -> Result<MCResult> {
    ensemble.require_full_rank(portfolio.k())?;
    check_edges(edges)?;
    let k = portfolio.k();
    let faces: Vec<f64> = portfolio.assets().iter().map(|a| a.face).collect();
    let parts = config.run(|rng, n| {
        let mut counts = vec![0u64; edges.len() - 1];
        let (mut zeros, mut sum, mut sq) = (0u64, 0.0, 0.0);
        for _ in 0..n {
            let w = sample_w(k, ensemble.n, rng)?;
            let hat = sample_log_returns(&w, portfolio, ensemble, rng)?;
            let prices = to_prices(&hat, portfolio, ensemble);
            let loss: f64 = prices
                .iter()
                .zip(&faces)
                .zip(portfolio.weights())
                .map(|((&v, &f), &wt)| if v < f { wt * (f - v) / f } else { 0.0 })
                .sum::<f64>()
                .clamp(0.0, 1.0);
            if loss == 0.0 {
                zeros += 1;
                continue;
            }
            sum += loss;
            sq += loss * loss;
            if let Some(b) = bin_of(edges, loss) {
                counts[b] += 1;
            }
        }
        Ok((counts, zeros, sum, sq))
    })?;
    let mut result = MCResult {
        bin_edges: edges.to_vec(),
        counts: vec![0; edges.len() - 1],
        total_draws: config.n_draws,
        seed: config.seed,
        zero_loss_count: 0,
        loss_sum: 0.0,
        loss_sq_sum: 0.0,
    };
    for (c, z, s, q) in &parts {
        result.counts.iter_mut().zip(c).for_each(|(a, b)| *a += b);
        result.zero_loss_count += z;
        result.loss_sum += s;
        result.loss_sq_sum += q;
    }
    Ok(result)
}

/// A plain histogram of a positive scalar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub total: u64,
}

impl Histogram {
    /// Count in bin `i` divided by `total · width`.
    pub fn density(&self, i: usize) -> f64 {
        self.counts[i] as f64 / (self.total as f64 * (self.edges[i + 1] - self.edges[i]))
    }
}

/// Histogram of the hyperradius `ρ = √T |W ξ|` of the centred log-returns
/// in units of each asset's volatility.
pub fn simulate_hyperradius(k: usize, ensemble: &EnsembleParams, config: &MCConfig, edges: &[f64]) -> Result<Histogram> {
    ensemble.require_full_rank(k)?;
    check_edges(edges)?;
    let st = ensemble.maturity.sqrt();
    let parts = config.run(|rng, n| {
        let mut counts = vec![0u64; edges.len() - 1];
        for _ in 0..n {
            let w = sample_w(k, ensemble.n, rng)?;
            let xi: Vec<f64> = (0..ensemble.n).map(|_| rng.sample(StandardNormal)).collect();
            let rho = st * w.apply(&xi).iter().map(|x| x * x).sum::<f64>().sqrt();
            if let Some(b) = bin_of(edges, rho) {
                counts[b] += 1;
            }
        }
        Ok(counts)
    })?;
    let mut counts = vec![0u64; edges.len() - 1];
    for c in &parts {
        counts.iter_mut().zip(c).for_each(|(a, b)| *a += b);
    }
    Ok(Histogram {
        edges: edges.to_vec(),
        counts,
        total: config.n_draws,
    })
}

/// Analytic CDF including the atom, with the density constant below the grid.
fn analytic_cdf(d: &LossDensity, x: f64) -> f64 {
    let g0 = d.points()[0];
    d.zero_mass + d.density[0] * x.min(g0) + d.mass_between(g0, x)
}

/// Loss below which bins are left out of the L1 distance.
pub const L1_MIN_LOSS: f64 = LossGrid::DEFAULT_MIN;

/// `(L1, KS)` between a simulated histogram and an analytic loss law.
///
/// L1 sums `|p̂_b − p_b|` over bins lying at or above [`L1_MIN_LOSS`], with
/// `p_b` the analytic mass in bin `b`; KS is the largest CDF gap at the bin
/// edges, the atom at zero included.
pub fn compare_distributions(mc: &MCResult, analytic: &LossDensity) -> Result<(f64, f64)> {
    if mc.total_draws == 0 || mc.counts.is_empty() {
        return domain("cannot compare an empty Monte Carlo result");
    }
    check_edges(&mc.bin_edges)?;
    if mc.bin_edges[0] < 0.0 || mc.bin_edges[mc.bin_edges.len() - 1] > 1.0 + 1e-12 {
        return domain("loss histogram edges must lie within [0, 1]");
    }
    if !(analytic.total_mass() > 0.0) {
        return domain("cannot compare against an empty loss density");
    }
    let n = mc.total_draws as f64;
    let mut l1 = 0.0;
    let mut cum = mc.zero_loss_count as f64 / n;
    let mut ks = (cum - analytic.zero_mass).abs();
    for (i, w) in mc.bin_edges.windows(2).enumerate() {
        let p_mc = mc.counts[i] as f64 / n;
        if w[0] >= L1_MIN_LOSS * (1.0 - 1e-12) {
            l1 += (p_mc - (analytic_cdf(analytic, w[1]) - analytic_cdf(analytic, w[0]))).abs();
        }
        cum += p_mc;
        ks = ks.max((cum - analytic_cdf(analytic, w[1])).abs());
    }
    Ok((l1, ks))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::make_homogeneous;

    #[test]
    fn entry_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (k, n) = (4, 9);
        let mut m = SampleMoments::default();
        let mut diag = SampleMoments::default();
        for _ in 0..30_000 {
            let w = sample_w(k, n, &mut rng).unwrap();
            w.entries().iter().for_each(|&x| m.push(x));
            let g = w.gram();
            (0..k).for_each(|i| diag.push(g[i * k + i]));
        }
        assert!(m.mean().abs() < 3.0 * m.mean_stderr());
        assert!((m.variance() - 1.0 / n as f64).abs() < 3.0 * m.variance_stderr());
        assert!((diag.mean() - 1.0).abs() < 3.0 * diag.mean_stderr());
    }

    #[test]
    fn rank_deficient_ensemble_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(sample_w(5, 4, &mut rng).is_err());
    }

    #[test]
    fn zero_volatility_is_deterministic() {
        let p = make_homogeneous(3, 1e-300, 0.05, 100.0, 75.0).unwrap();
        let ens = EnsembleParams::new(3, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = sample_w(3, 3, &mut rng).unwrap();
        for v in sample_terminal_prices(&w, &p, &ens, &mut rng).unwrap() {
            assert!((v - 100.0 * 0.05f64.exp()).abs() < 1e-10);
        }
    }

    #[test]
    fn fixed_w_covariance() {
        let p = make_homogeneous(4, 0.15, 0.05, 100.0, 75.0).unwrap();
        let ens = EnsembleParams::new(6, 1.0).unwrap();
        let w = sample_w(4, 6, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let exact = conditional_covariance(&w, &p, &ens).unwrap();
        let est = sample_covariance_fixed_w(&w, &p, &ens, &MCConfig::new(100_000, 5)).unwrap();
        let num: f64 = exact.iter().zip(&est).map(|(a, b)| (a - b).powi(2)).sum();
        let den: f64 = exact.iter().map(|a| a * a).sum();
        assert!((num / den).sqrt() < 0.05);
    }

    #[test]
    fn reproducible_across_thread_counts() {
        let p = make_homogeneous(5, 0.15, 0.05, 100.0, 75.0).unwrap();
        let ens = EnsembleParams::new(5, 1.0).unwrap();
        let cfg = MCConfig {
            n_draws: 20_000,
            seed: 42,
            chunk_size: 1_000,
        };
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| simulate_loss_ensemble(&p, &ens, &cfg).unwrap())
        };
        let a = run(1);
        let b = run(3);
        assert_eq!(a, b);
        assert_eq!(a.loss_sum.to_bits(), b.loss_sum.to_bits());
        let other = simulate_loss_ensemble(&p, &ens, &MCConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(a.counts, other.counts);
    }

    #[test]
    fn streams_do_not_repeat() {
        let cfg = MCConfig::new(10, 9);
        let a: Vec<u64> = (0..8).map(|_| cfg.stream(0).random()).collect();
        let mut s0 = cfg.stream(0);
        let mut s1 = cfg.stream(1);
        let x: Vec<u64> = (0..8).map(|_| s0.random()).collect();
        let y: Vec<u64> = (0..8).map(|_| s1.random()).collect();
        assert_ne!(x, y);
        assert_eq!(a[0], x[0]);
    }

    #[test]
    fn counts_add_up() {
        let p = make_homogeneous(3, 0.3, 0.0, 100.0, 90.0).unwrap();
        let ens = EnsembleParams::new(4, 1.0).unwrap();
        let r = simulate_loss_ensemble(&p, &ens, &MCConfig::new(5_000, 1)).unwrap();
        assert_eq!(r.counts.iter().sum::<u64>() + r.zero_loss_count, r.total_draws);
        let tiny_face = make_homogeneous(3, 0.15, 0.05, 100.0, 1e-3).unwrap();
        let r = simulate_loss_ensemble(&tiny_face, &ens, &MCConfig::new(2_000, 1)).unwrap();
        assert_eq!(r.zero_loss_count, 2_000);
    }

    #[test]
    fn comparison_edge_cases() {
        let grid = LossGrid::uniform(11, 0.1, 1.0).unwrap();
        let edges = loss_bin_edges(&grid);
        // triangular analytic mass on [0.1, 0.28], all draws in [0.82, 0.91]
        let mut dens = vec![0.0; 11];
        dens[1] = 1.0 / 0.09;
        let analytic = LossDensity::new(grid, dens, 0.0).unwrap();
        let mut counts = vec![0; edges.len() - 1];
        counts[9] = 100;
        let mc = MCResult {
            bin_edges: edges.clone(),
            counts,
            total_draws: 100,
            seed: 0,
            zero_loss_count: 0,
            loss_sum: 85.0,
            loss_sq_sum: 0.0,
        };
        let (l1, ks) = compare_distributions(&mc, &analytic).unwrap();
        assert!((analytic.total_mass() - 1.0).abs() < 1e-12);
        assert!((l1 - 2.0).abs() < 1e-12, "{l1}");
        assert!((ks - 1.0).abs() < 1e-12);
        let empty = MCResult {
            total_draws: 0,
            ..mc
        };
        assert!(compare_distributions(&empty, &analytic).is_err());
    }
}
