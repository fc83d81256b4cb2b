//! The explicit heavy-tail law `P(|X| > x) = min(1, x^-a (ln(x v e))^-q)`.
//!
//! With this normalization the law is proper and supported on `|x| >= 1`:
//! the survival function is 1 up to `x = 1` and strictly decreasing beyond
//! (requires `a > 0`, `q >= 0`). Signs are symmetric, so all odd moments
//! vanish. `E|X|^p` is finite iff `a > p`, or `a == p` with `q > 1`.

use super::quad::integrate;
use crate::error::{Error, Result};
use crate::schedule::clipped_ln;

/// Survival function of `|X|`.
pub fn tail(x: f64, a: f64, q: f64) -> f64 {
    if x <= 1.0 {
        return 1.0;
    }
    (x.powf(-a) * clipped_ln(x).powf(-q)).min(1.0)
}

/// Quantile of `|X|`: the `x >= 1` with `tail(x) = u`, for `u` in (0, 1].
///
/// Below `e` the log factor clips to 1 and the inverse is `u^(-1/a)`; beyond,
/// `a ln x + q ln ln x = ln(1/u)` is solved by Newton in `y = ln x`.
pub fn quantile(u: f64, a: f64, q: f64) -> f64 {
    debug_assert!(u > 0.0 && u <= 1.0);
    let plain = u.powf(-1.0 / a);
    if plain <= std::f64::consts::E || q == 0.0 {
        return plain;
    }
    let target = -u.ln();
    let mut y = (target / a).max(1.0);
    for _ in 0..64 {
        let g = a * y + q * y.ln() - target;
        let dg = a + q / y;
        let step = g / dg;
        y -= step;
        if y < 1.0 {
            y = 1.0;
        }
        if step.abs() < 1e-15 * (1.0 + y) {
            break;
        }
    }
    y.exp()
}

/// `E |X|^p` by the tail formula `1 + int_1^inf p x^(p-1) tail(x) dx`,
/// evaluated in log space. Errors when the moment is infinite.
pub fn abs_moment(p: f64, a: f64, q: f64) -> Result<f64> {
    if !(a > p || (a == p && q > 1.0)) {
        return Err(Error::InvalidParameter(format!(
            "E|X|^{p} is infinite for tail exponent {a}, log power {q}"
        )));
    }
    // x = e^t: integrand p e^((p-a) t) max(t,1)^(-q), t in [0, inf)
    let decay = a - p;
    let integrand = |t: f64| p * ((p - a) * t).exp() * t.max(1.0).powf(-q);
    let (head, tail_int) = if decay > 0.0 {
        let cutoff = (45.0 / decay).max(2.0);
        (
            integrate(&integrand, 0.0, 1.0, 1e-13) + integrate(&integrand, 1.0, cutoff, 1e-13),
            0.0,
        )
    } else {
        // a == p, q > 1: integrand is p t^-q beyond t = 1; integrate the tail in closed form
        let analytic = p / ((q - 1.0) * 1.0f64.powf(q - 1.0));
        (integrate(&integrand, 0.0, 1.0, 1e-13), analytic)
    };
    Ok(1.0 + head + tail_int)
}
