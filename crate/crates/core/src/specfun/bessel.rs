//! Natural log of the modified Bessel function of the second kind, `ln K_ν(x)`.
//!
//! Two regimes:
//!
//! * `|ν| <= 50`: Temme's series (`x < 2`) or Steed's continued fraction
//!   (`x >= 2`) at a reduced order `μ ∈ [-1/2, 1/2]`, followed by forward
//!   recurrence in the order, carried out with an explicit log scale.
//! * `|ν| > 50`: Debye's uniform large-order expansion, evaluated in log form.
//!
//! The ensemble densities need orders up to `(N − K)/2 ≈ 1450`, where
//! `K_ν(x)` itself overflows for every relevant `x`.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{domain, Result};

const UNIFORM_THRESHOLD: f64 = 50.0;
const UNIFORM_TERMS: usize = 9;

/// `ln K_ν(x)` for real order `ν` and `x > 0`.
///
/// `K_ν = K_{−ν}`, so only `|ν|` matters.
pub fn ln_bessel_k(order: f64, x: f64) -> Result<f64> {
    if !(x > 0.0) || x.is_infinite() {
        return domain(format!("ln_bessel_k requires finite x > 0, got {x}"));
    }
    if !order.is_finite() {
        return domain(format!("ln_bessel_k requires a finite order, got {order}"));
    }
    let nu = order.abs();
    Ok(if nu > UNIFORM_THRESHOLD {
        ln_k_uniform(nu, x)
    } else {
        ln_k_recurrence(nu, x)
    })
}

// Chebyshev fits of Temme's gamma auxiliaries on |μ| <= 1/2 (SLATEC/GSL).
const G1_CHEB: [f64; 14] = [
    -1.14516408366268311786898152867,
    0.00636085311347084238122955495,
    0.00186245193007206848934643657,
    0.000152833085873453507081227824,
    0.000017017464011802038795324732,
    -6.4597502923347254354668326451e-07,
    -5.1819848432519380894104312968e-08,
    4.5189092894858183051123180797e-10,
    3.2433227371020873043666259180e-11,
    6.8309434024947522875432400828e-13,
    2.8353502755172101513119628130e-14,
    -7.9883905769323592875638087541e-16,
    -3.3726677300771949833341213457e-17,
    -3.6586334809210520744054437104e-20,
];

const G2_CHEB: [f64; 15] = [
    1.882645524949671835019616975350,
    -0.077490658396167518329547945212,
    -0.018256714847324929419579340950,
    0.0006338030209074895795923971731,
    0.0000762290543508729021194461175,
    -9.5501647561720443519853993526e-07,
    -8.8927268107886351912431512955e-08,
    -1.9521334772319613740511880132e-09,
    -9.4003052735885162111769579771e-11,
    4.6875133849532393179290879101e-12,
    2.2658535746925759582447545145e-13,
    -1.1725509698488015111878735251e-15,
    -7.0441338200245222530843155877e-17,
    -2.4377878310107693650659740228e-18,
    -7.5225243218253901727164675011e-20,
];

fn chebyshev(coeffs: &[f64], y: f64) -> f64 {
    let y2 = 2.0 * y;
    let (mut d, mut dd) = (0.0, 0.0);
    for &c in coeffs[1..].iter().rev() {
        let t = d;
        d = y2 * d - dd + c;
        dd = t;
    }
    y * d - dd + 0.5 * coeffs[0]
}

/// Returns `(g1, g2, Γ(1+μ), Γ(1−μ))` with
/// `g1 = (1/Γ(1−μ) − 1/Γ(1+μ)) / 2μ` and `g2 = (1/Γ(1−μ) + 1/Γ(1+μ)) / 2`.
fn temme_gamma(mu: f64) -> (f64, f64, f64, f64) {
    let y = 4.0 * mu.abs() - 1.0;
    let g1 = chebyshev(&G1_CHEB, y);
    let g2 = chebyshev(&G2_CHEB, y);
    (g1, g2, 1.0 / (g2 - mu * g1), 1.0 / (g2 + mu * g1))
}

/// `e^x K_μ(x)` and `e^x K_{μ+1}(x)` by Temme's series; `|μ| <= 1/2`, `x < 2`.
fn k_scaled_temme(mu: f64, x: f64) -> (f64, f64) {
    let half_x = 0.5 * x;
    let ln_half_x = half_x.ln();
    let pi_mu = PI * mu;
    let sigma = -mu * ln_half_x;
    let sinrat = if pi_mu.abs() < f64::EPSILON {
        1.0
    } else {
        pi_mu / pi_mu.sin()
    };
    let sinhrat = if sigma.abs() < f64::EPSILON {
        1.0
    } else {
        sigma.sinh() / sigma
    };
    let (g1, g2, g_1pmu, g_1mmu) = temme_gamma(mu);
    let half_x_mu = (mu * ln_half_x).exp();

    let mut fk = sinrat * (sigma.cosh() * g1 - sinhrat * ln_half_x * g2);
    let mut pk = 0.5 / half_x_mu * g_1pmu;
    let mut qk = 0.5 * half_x_mu * g_1mmu;
    let mut ck = 1.0;
    let mut sum0 = fk;
    let mut sum1 = pk;
    for k in 1..20_000 {
        let kf = k as f64;
        fk = (kf * fk + pk + qk) / (kf * kf - mu * mu);
        ck *= half_x * half_x / kf;
        pk /= kf - mu;
        qk /= kf + mu;
        let hk = -kf * fk + pk;
        let del0 = ck * fk;
        sum0 += del0;
        sum1 += ck * hk;
        if del0.abs() < 0.5 * sum0.abs() * f64::EPSILON {
            break;
        }
    }
    let ex = x.exp();
    (sum0 * ex, sum1 * 2.0 / x * ex)
}

/// `e^x K_μ(x)` and `e^x K_{μ+1}(x)` by Steed's continued fraction; `x >= 2`.
fn k_scaled_steed(mu: f64, x: f64) -> (f64, f64) {
    let mut bi = 2.0 * (1.0 + x);
    let mut di = 1.0 / bi;
    let mut delhi = di;
    let mut hi = di;
    let mut qi = 0.0;
    let mut qip1 = 1.0;
    let mut ai = -(0.25 - mu * mu);
    let a1 = ai;
    let mut ci = -ai;
    let mut bqi = -ai;
    let mut s = 1.0 + bqi * delhi;
    for i in 2..20_000 {
        ai -= 2.0 * (i - 1) as f64;
        ci = -ai * ci / i as f64;
        let tmp = (qi - bi * qip1) / ai;
        qi = qip1;
        qip1 = tmp;
        bqi += ci * qip1;
        bi += 2.0;
        di = 1.0 / (bi + ai * di);
        delhi = (bi * di - 1.0) * delhi;
        hi += delhi;
        let dels = bqi * delhi;
        s += dels;
        if (dels / s).abs() < f64::EPSILON {
            break;
        }
    }
    hi *= -a1;
    let k_mu = (PI / (2.0 * x)).sqrt() / s;
    let k_mup1 = k_mu * (mu + x + 0.5 - hi) / x;
    (k_mu, k_mup1)
}

pub(crate) fn ln_k_recurrence(nu: f64, x: f64) -> f64 {
    let n = (nu + 0.5).floor();
    let mu = nu - n;
    let (mut k_cur, mut k_next) = if x < 2.0 {
        k_scaled_temme(mu, x)
    } else {
        k_scaled_steed(mu, x)
    };
    let mut ln_scale = 0.0;
    for m in 0..n as usize {
        let k_prev = k_cur;
        k_cur = k_next;
        k_next = k_prev + 2.0 * (mu + m as f64 + 1.0) / x * k_cur;
        if k_next > 1e250 {
            ln_scale += k_next.ln();
            let inv = 1.0 / k_next;
            k_cur *= inv;
            k_next = 1.0;
        }
    }
    k_cur.ln() + ln_scale - x
}

/// Coefficients of Debye's polynomials `u_k(p)`, `u_0 = 1`, built from
/// `u_{k+1} = ½ p²(1 − p²) u_k' + ⅛ ∫₀ᵖ (1 − 5t²) u_k(t) dt`.
fn debye_polynomials() -> &'static [Vec<f64>] {
    static POLYS: OnceLock<Vec<Vec<f64>>> = OnceLock::new();
    POLYS.get_or_init(|| {
        let mut polys = vec![vec![1.0]];
        for k in 0..UNIFORM_TERMS {
            let u = &polys[k];
            let mut next = vec![0.0; u.len() + 3];
            // ½ (p² − p⁴) u'(p)
            for (i, &c) in u.iter().enumerate().skip(1) {
                let d = c * i as f64;
                next[i + 1] += 0.5 * d;
                next[i + 3] -= 0.5 * d;
            }
            // ⅛ ∫₀ᵖ (1 − 5t²) u(t) dt
            for (i, &c) in u.iter().enumerate() {
                next[i + 1] += 0.125 * c / (i + 1) as f64;
                next[i + 3] -= 0.625 * c / (i + 3) as f64;
            }
            polys.push(next);
        }
        polys
    })
}

fn poly_eval(coeffs: &[f64], p: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * p + c)
}

pub(crate) fn ln_k_uniform(nu: f64, x: f64) -> f64 {
    let z = x / nu;
    let root = z.hypot(1.0);
    let p = 1.0 / root;
    // η = √(1+z²) + ln(z / (1 + √(1+z²)))
    let eta = root + (z / (1.0 + root)).ln();
    let polys = debye_polynomials();
    let mut series = 0.0;
    let mut nu_pow = 1.0;
    let mut sign = 1.0;
    for u in polys {
        series += sign * poly_eval(u, p) / nu_pow;
        nu_pow *= nu;
        sign = -sign;
    }
    0.5 * (PI / (2.0 * nu)).ln() - nu * eta - 0.5 * root.ln() + series.ln()
}
