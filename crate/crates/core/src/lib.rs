//! Structural (Merton-type) credit risk for portfolios whose asset
//! correlations are drawn from a Wishart-type random matrix ensemble.
//!
//! The crate is organised bottom-up:
//!
//! * [`types`]: portfolios, ensemble parameters, loss grids and densities.
//! * [`specfun`]: log-Gamma, error functions, log-scaled Bessel `K_ν` for
//!   large orders, Gamma-weighted quadrature rules and adaptive integration.
//! * [`price`]: the ensemble-averaged price densities (Brownian,
//!   hyperradial and geometric Brownian forms).
//! * [`loss`]: conditional loss moments, the second-order and improved
//!   loss-density approximations, an exact per-`z` convolution oracle and
//!   risk metrics.
//! * [`mc`]: a seeded, parallel Monte Carlo engine that samples the random
//!   correlation structure explicitly.
//!
//! Every randomly correlated quantity in the model is a scale mixture:
//! conditionally on a Gamma(N/2) distributed mixing variable `z`, the
//! log-returns are independent Gaussians with variance `2 z T σ² / N`.

pub mod error;
pub mod loss;
pub mod mc;
pub mod price;
pub mod specfun;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    make_homogeneous, normalized_loss, portfolio_loss, AssetParams, EnsembleParams, LossDensity,
    LossGrid, MCResult, Portfolio,
};
