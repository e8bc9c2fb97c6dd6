//! Globally adaptive Gauss–Legendre integration.
//!
//! Each panel is integrated with a 15-point rule; its error is estimated by
//! comparing against the two half-panels. The panel with the largest error
//! estimate is split until the total estimate meets the tolerance.

use std::collections::BinaryHeap;
use std::sync::OnceLock;

use super::quadrature::gauss_legendre;
use crate::error::{Error, Result};

const RULE_POINTS: usize = 15;
const INITIAL_PANELS: usize = 8;
const MAX_PANELS: usize = 200_000;

fn rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(RULE_POINTS).expect("15-point Legendre rule"))
}

fn panel<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let (x, w) = rule();
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    x.iter().zip(w).map(|(&xi, &wi)| wi * f(c + h * xi)).sum::<f64>() * h
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn refine<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, coarse: f64) -> Panel {
    let m = 0.5 * (a + b);
    let fine = panel(f, a, m) + panel(f, m, b);
    Panel {
        a,
        b,
        value: fine,
        error: (fine - coarse).abs(),
    }
}

/// `∫_a^b f(x) dx` to `max(abs_tol, rel_tol·|I|)`.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rel_tol: f64, abs_tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Domain(format!("finite bounds required, got [{a}, {b}]")));
    }
    let mut heap = BinaryHeap::new();
    let step = (b - a) / INITIAL_PANELS as f64;
    for i in 0..INITIAL_PANELS {
        let lo = a + step * i as f64;
        let hi = if i + 1 == INITIAL_PANELS { b } else { lo + step };
        heap.push(refine(f, lo, hi, panel(f, lo, hi)));
    }
    let mut total: f64 = heap.iter().map(|p| p.value).sum();
    let mut err: f64 = heap.iter().map(|p| p.error).sum();
    let mut splits = 0usize;
    loop {
        if !total.is_finite() {
            return Err(Error::Numerical("integrand produced a non-finite value".into()));
        }
        if err <= abs_tol.max(rel_tol * total.abs()) {
            // resum to shed accumulated rounding from the running totals
            let exact_err: f64 = heap.iter().map(|p| p.error).sum();
            if exact_err <= abs_tol.max(rel_tol * total.abs()) {
                return Ok(heap.iter().map(|p| p.value).sum());
            }
            err = exact_err;
            total = heap.iter().map(|p| p.value).sum();
            continue;
        }
        if heap.len() >= MAX_PANELS {
            return Err(Error::Numerical(format!(
                "adaptive integration did not converge: estimate {total:e}, error {err:e}"
            )));
        }
        let worst = heap.pop().expect("nonempty heap");
        let m = 0.5 * (worst.a + worst.b);
        if !(m > worst.a && m < worst.b) {
            // panel cannot be split further in floating point
            return Ok(total);
        }
        let left = refine(f, worst.a, m, panel(f, worst.a, m));
        let right = refine(f, m, worst.b, panel(f, m, worst.b));
        total += left.value + right.value - worst.value;
        err += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        splits += 1;
        if splits % 1024 == 0 {
            total = heap.iter().map(|p| p.value).sum();
            err = heap.iter().map(|p| p.error).sum();
        }
    }
}

/// `∫_a^∞ f(x) dx` via `x = a + t/(1−t)`.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(f: &F, a: f64, rel_tol: f64, abs_tol: f64) -> Result<f64> {
    let g = |t: f64| {
        let s = 1.0 - t;
        let v = f(a + t / s);
        if v == 0.0 {
            0.0
        } else {
            v / (s * s)
        }
    };
    integrate(&g, 0.0, 1.0, rel_tol, abs_tol)
}

/// Sum of [`integrate`] over consecutive breakpoints.
pub fn integrate_pieces<F: Fn(f64) -> f64>(f: &F, breaks: &[f64], rel_tol: f64, abs_tol: f64) -> Result<f64> {
    breaks
        .windows(2)
        .map(|w| integrate(f, w[0], w[1], rel_tol, abs_tol))
        .sum()
}
