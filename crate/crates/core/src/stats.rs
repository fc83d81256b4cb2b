//! Monte Carlo estimates, their error accounting, and the normal CDF.
//!
//! Tail probabilities carry Wilson-score uncertainty (raw normal-approximation
//! intervals understate the error of rare-event proportions, and the Wilson
//! width stays positive at zero successes); moment-type estimates carry
//! jackknife standard errors, which also cover smooth transforms like p-norms.

use serde::{Deserialize, Serialize};

/// A Monte Carlo estimate with replication count and uncertainty.
///
/// `reps == 0` marks an analytically exact value (stderr 0); genuine MC
/// estimates always have `reps >= 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub reps: u64,
    pub ci_level: f64,
}

pub const DEFAULT_CI_LEVEL: f64 = 0.999;

impl McEstimate {
    /// An analytically exact quantity presented in estimate form.
    pub fn exact(value: f64) -> Self {
        Self {
            mean: value,
            stderr: 0.0,
            reps: 0,
            ci_level: DEFAULT_CI_LEVEL,
        }
    }

    /// Sample mean with jackknife standard error.
    pub fn from_values(values: &[f64]) -> Self {
        assert!(values.len() >= 2, "need at least 2 replications");
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        Self {
            mean,
            stderr: (var / n).sqrt(),
            reps: values.len() as u64,
            ci_level: DEFAULT_CI_LEVEL,
        }
    }

    /// `g(mean(values))` with leave-one-out jackknife stderr, for smooth `g`
    /// (p-th roots of moment estimates and similar).
    pub fn from_values_transformed(values: &[f64], g: impl Fn(f64) -> f64) -> Self {
        assert!(values.len() >= 2, "need at least 2 replications");
        let n = values.len() as f64;
        let total: f64 = values.iter().sum();
        let theta = g(total / n);
        let loo: Vec<f64> = values.iter().map(|v| g((total - v) / (n - 1.0))).collect();
        let loo_mean = loo.iter().sum::<f64>() / n;
        let ss: f64 = loo.iter().map(|t| (t - loo_mean) * (t - loo_mean)).sum();
        Self {
            mean: theta,
            stderr: ((n - 1.0) / n * ss).sqrt(),
            reps: values.len() as u64,
            ci_level: DEFAULT_CI_LEVEL,
        }
    }

    /// Binomial proportion with Wilson-score uncertainty; `stderr` is the
    /// one-sigma Wilson half-width.
    pub fn proportion(successes: u64, trials: u64) -> Self {
        assert!(trials >= 2, "need at least 2 trials");
        let n = trials as f64;
        let p = successes as f64 / n;
        Self {
            mean: p,
            stderr: wilson_half_width(successes, trials, 1.0),
            reps: trials,
            ci_level: DEFAULT_CI_LEVEL,
        }
    }

    pub fn is_exact(&self) -> bool {
        self.reps == 0
    }

    /// Two-sided confidence interval at `ci_level`.
    pub fn ci(&self) -> (f64, f64) {
        let z = normal_quantile(0.5 + self.ci_level / 2.0);
        (self.mean - z * self.stderr, self.mean + z * self.stderr)
    }
}

/// Half-width of the Wilson score interval at `z` standard normal units.
pub fn wilson_half_width(successes: u64, trials: u64, z: f64) -> f64 {
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt()
}

/// Root-sum-square combination of independent standard errors.
pub fn combined_stderr(parts: &[f64]) -> f64 {
    parts.iter().map(|s| s * s).sum::<f64>().sqrt()
}

/// Leave-one-out jackknife stderr of a statistic of `K` per-replication
/// accumulators: `theta = g(componentwise means)`.
pub fn jackknife_stat<const K: usize>(
    per_rep: &[[f64; K]],
    g: impl Fn(&[f64; K]) -> f64,
) -> (f64, f64) {
    let n = per_rep.len() as f64;
    assert!(per_rep.len() >= 2);
    let mut totals = [0.0f64; K];
    for row in per_rep {
        for (t, v) in totals.iter_mut().zip(row) {
            *t += v;
        }
    }
    let mut means = [0.0f64; K];
    for (m, t) in means.iter_mut().zip(&totals) {
        *m = t / n;
    }
    let theta = g(&means);
    let mut loo_sum = 0.0;
    let mut loo_ss = 0.0;
    let mut loo = Vec::with_capacity(per_rep.len());
    for row in per_rep {
        let mut m = [0.0f64; K];
        for i in 0..K {
            m[i] = (totals[i] - row[i]) / (n - 1.0);
        }
        let v = g(&m);
        loo.push(v);
        loo_sum += v;
    }
    let loo_mean = loo_sum / n;
    for v in &loo {
        loo_ss += (v - loo_mean) * (v - loo_mean);
    }
    (theta, ((n - 1.0) / n * loo_ss).sqrt())
}

/// Lanczos gamma (g = 7, n = 9), relative error around 1e-15 on the reals
/// needed here (positive half-integers and nearby).
pub fn gamma_fn(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        return std::f64::consts::PI / ((std::f64::consts::PI * x).sin() * gamma_fn(1.0 - x));
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + 7.5;
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    (2.0 * std::f64::consts::PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * a
}

/// `E|Z|^p` for a standard normal: `2^(p/2) Gamma((p+1)/2) / sqrt(pi)`.
pub fn normal_abs_moment(p: f64) -> f64 {
    2f64.powf(p / 2.0) * gamma_fn((p + 1.0) / 2.0) / std::f64::consts::PI.sqrt()
}

const FRAC_2_SQRT_PI: f64 = 1.128_379_167_095_512_6; // 2/sqrt(pi)

/// Complementary error function, relative error below 1e-13 for |x| <= 6
/// (covers the normal CDF on |x| <= 8): a stable positive-term series below
/// x = 2 and a Lentz continued fraction above.
pub fn erfc(x: f64) -> f64 {
    if x < 0.0 {
        return 2.0 - erfc(-x);
    }
    if x < 1.5 {
        1.0 - erf_series(x)
    } else {
        erfc_continued_fraction(x)
    }
}

/// erf by the cancellation-free series
/// `erf(x) = (2x/sqrt(pi)) e^(-x^2) sum_k (2x^2)^k / (2k+1)!!`.
fn erf_series(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let t = 2.0 * x * x;
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    let mut k = 0u32;
    while term > 1e-18 * sum {
        k += 1;
        term *= t / (2 * k + 1) as f64;
        sum += term;
    }
    FRAC_2_SQRT_PI * x * (-x * x).exp() * sum
}

/// erfc by the modified Lentz evaluation of
/// `erfc(x) = e^(-x^2)/sqrt(pi) / (x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))`.
fn erfc_continued_fraction(x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut f = x;
    let mut c = f;
    let mut d = 0.0f64;
    let mut n = 0u32;
    loop {
        n += 1;
        let a = n as f64 / 2.0;
        d = x + a * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = x + a / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 || n > 300 {
            break;
        }
    }
    0.5 * FRAC_2_SQRT_PI * (-x * x).exp() / f
}

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Upper tail `1 - Phi(x)` without cancellation.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * erfc(x * FRAC_1_SQRT_2)
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal quantile by Newton iteration on the CDF.
pub fn normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile needs p in (0,1)");
    let mut x: f64 = 0.0;
    for _ in 0..60 {
        let err = normal_cdf(x) - p;
        let step = err / normal_pdf(x);
        x -= step;
        if step.abs() < 1e-14 * (1.0 + x.abs()) {
            break;
        }
    }
    x
}
