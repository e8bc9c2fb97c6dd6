use ensemble_credit::loss::{
    default_rule, loss_density_improved, loss_density_oracle, oracle_rule, tail_prob,
    ConvolutionResolution,
};
use ensemble_credit::mc::{compare_distributions, simulate_loss_ensemble, simulate_price_statistics, MCConfig};
use ensemble_credit::price::{gbm_marginal_pdf, gbm_price_moments};
use ensemble_credit::specfun::integrate::{integrate, integrate_to_infinity};
use ensemble_credit::{make_homogeneous, AssetParams, EnsembleParams, LossGrid};

fn ens(n: usize) -> EnsembleParams {
    EnsembleParams::new(n, 1.0).unwrap()
}

#[test]
fn oracle_matches_mc_for_two_assets() {
    let p = make_homogeneous(2, 0.15, 0.05, 100.0, 75.0).unwrap();
    let e = ens(2);
    let oracle = loss_density_oracle(
        &LossGrid::default(),
        &p,
        &e,
        &oracle_rule(&e).unwrap(),
        ConvolutionResolution::default(),
    )
    .unwrap();
    let mc = simulate_loss_ensemble(&p, &e, &MCConfig::new(1_000_000, 2)).unwrap();
    let (l1, _) = compare_distributions(&mc, &oracle.density).unwrap();
    assert!(l1 < 0.02, "L1 {l1}");
    let gap = (mc.zero_fraction() - oracle.density.zero_mass).abs();
    assert!(gap < 3.0 * mc.zero_fraction_stderr(), "zero mass gap {gap}");
}

#[test]
fn improved_matches_mc_for_ten_assets() {
    let p = make_homogeneous(10, 0.15, 0.05, 100.0, 75.0).unwrap();
    let e = ens(10);
    let d = loss_density_improved(&LossGrid::default(), &p, &e, &default_rule(&e).unwrap()).unwrap();
    let mc = simulate_loss_ensemble(&p, &e, &MCConfig::new(1_000_000, 10)).unwrap();
    let (l1, _) = compare_distributions(&mc, &d).unwrap();
    assert!(l1 < 0.05, "L1 {l1}");
    let gap = (mc.zero_fraction() - d.zero_mass).abs();
    assert!(gap < 3.0 * mc.zero_fraction_stderr(), "zero mass gap {gap}");
}

#[test]
fn correlated_mc_tail_is_heavier() {
    let p = make_homogeneous(10, 0.15, 0.05, 100.0, 75.0).unwrap();
    let tail = |n: usize| {
        let r = simulate_loss_ensemble(&p, &ens(n), &MCConfig::new(300_000, 7)).unwrap();
        r.tail_fraction(0.02)
    };
    let (t10, t300) = (tail(10), tail(300));
    assert!(t10 > t300, "{t10} vs {t300}");
    // the improved approximation agrees on the ordering
    let grid = LossGrid::default();
    let a = |n: usize| {
        let e = ens(n);
        tail_prob(&loss_density_improved(&grid, &p, &e, &default_rule(&e).unwrap()).unwrap(), 0.1).unwrap()
    };
    assert!(a(10) > a(300));
}

#[test]
fn price_moments_match_the_mixture() {
    let a = AssetParams::new(0.15, 0.05, 100.0, 75.0).unwrap();
    let p = make_homogeneous(2, 0.15, 0.05, 100.0, 75.0).unwrap();
    for n in [2usize, 100] {
        let s = simulate_price_statistics(&p, &ens(n), &MCConfig::new(400_000, 3)).unwrap();
        let (mean, var) = gbm_price_moments(&a, &ens(n));
        let m = &s.prices[0];
        assert!((m.mean() - mean).abs() < 4.0 * m.mean_stderr(), "N={n} mean {} vs {mean}", m.mean());
        assert!((m.variance() - var).abs() < 4.0 * m.variance_stderr(), "N={n} var {} vs {var}", m.variance());
    }
}

#[test]
fn heavier_price_tails_at_small_n() {
    let a = AssetParams::new(0.15, 0.05, 100.0, 75.0).unwrap();
    let sd = gbm_price_moments(&a, &ens(100)).1.sqrt();
    let beyond = |n: usize| {
        let e = ens(n);
        let mean = gbm_price_moments(&a, &e).0;
        let pdf = |v: f64| gbm_marginal_pdf(v, &a, &e).unwrap();
        let lower = integrate(&pdf, 1e-9, mean - 3.0 * sd, 1e-10, 1e-14).unwrap();
        lower + integrate_to_infinity(&pdf, mean + 3.0 * sd, 1e-10, 1e-14).unwrap()
    };
    let (small, large) = (beyond(2), beyond(100));
    assert!(small > large, "{small} vs {large}");
}
