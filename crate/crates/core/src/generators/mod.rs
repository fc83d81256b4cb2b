//! Negatively associated field generators with analytically known moments.
//!
//! Every generator is one of a small family whose covariance structure is
//! known in closed form, so the inequality verifiers can evaluate their bound
//! sides deterministically:
//!
//! * `IidNormal`, `IidRademacher`, `IidHeavyTail`: independent cells (trivially NA);
//! * `GaussianNearestNeighbor`: stationary Gaussian field with `gamma(0) = 1`,
//!   `gamma(+-e_i) = -rho`, zero otherwise. Gaussian fields with nonpositive
//!   cross-covariances are NA, and the spectral density `1 - 2 rho sum cos`
//!   stays nonnegative exactly for `rho <= 1/(2d)`;
//! * `Multinomial`: `total_balls` dropped uniformly on the box, counts centered
//!   by their exact mean (multinomials are NA);
//! * `TruncatedCentered`: the clip-and-center transform `g_b(x) - E g_b(X)`
//!   applied cellwise to a base generator; clipping is coordinatewise monotone,
//!   so negative association is preserved and the output is bounded;
//! * `IidCenteredBinomial`: the independent-marginals reference law of a
//!   multinomial field (used as the comparison side of convex-ordering checks);
//! * `DuplicatedFirstAxis`: a deliberately positively-associated control that
//!   copies one iid slice across the first axis. It exists so the test suite
//!   can prove the verifiers fire on non-NA input; nothing here claims it is NA.

mod circulant;
mod heavy_tail;
mod quad;

pub use circulant::{crop, CirculantEmbedding};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::index::MultiIndex;
use crate::rng::{self, domain};
use crate::schedule::clipped_loglog;
use crate::stats::{normal_abs_moment, normal_sf};
use rand_chacha::ChaCha8Rng;
use rand::RngCore;
use rand_distr::{Binomial, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Truncation level: one fixed clip, or the index-dependent schedule
/// `b_m = (eps/40) (E X^2)^(1/2) (m / LL(m))^(1/2)` evaluated at `m = |k|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum BoundMode {
    Fixed { level: f64 },
    Schedule { epsilon: f64 },
}

/// The generator family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GeneratorKind {
    IidNormal {
        variance: f64,
    },
    IidRademacher,
    IidHeavyTail {
        tail_exponent: f64,
        log_power: f64,
    },
    GaussianNearestNeighbor {
        rho: f64,
    },
    Multinomial {
        total_balls: u64,
    },
    IidCenteredBinomial {
        total: u64,
        cells: u64,
    },
    TruncatedCentered {
        inner: Box<GeneratorKind>,
        bound: BoundMode,
    },
    DuplicatedFirstAxis {
        inner: Box<GeneratorKind>,
    },
}

/// A declarative field source: law, box and master seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    pub shape: MultiIndex,
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn new(kind: GeneratorKind, shape: MultiIndex, seed: u64) -> Result<Self> {
        let spec = Self { kind, shape, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn dim(&self) -> usize {
        self.shape.dim()
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    pub fn with_shape(&self, shape: MultiIndex) -> Result<Self> {
        Self::new(self.kind.clone(), shape, self.seed)
    }

    pub fn validate(&self) -> Result<()> {
        validate_kind(&self.kind, self.dim(), true)
    }
}

fn validate_kind(kind: &GeneratorKind, d: usize, outer: bool) -> Result<()> {
    match kind {
        GeneratorKind::IidNormal { variance } => {
            if !(*variance >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "normal variance must be >= 0, got {variance}"
                )));
            }
        }
        GeneratorKind::IidRademacher => {}
        GeneratorKind::IidHeavyTail {
            tail_exponent,
            log_power,
        } => {
            if !(*tail_exponent > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "tail exponent must be > 0, got {tail_exponent}"
                )));
            }
            if !(*log_power >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "log power must be >= 0, got {log_power}"
                )));
            }
        }
        GeneratorKind::GaussianNearestNeighbor { rho } => {
            let cap = 1.0 / (2.0 * d as f64);
            if !(*rho > 0.0 && *rho <= cap) {
                return Err(Error::InvalidParameter(format!(
                    "rho must lie in (0, {cap}] for d = {d}, got {rho}"
                )));
            }
        }
        GeneratorKind::Multinomial { total_balls } => {
            if *total_balls < 1 {
                return Err(Error::InvalidParameter("total_balls must be >= 1".into()));
            }
        }
        GeneratorKind::IidCenteredBinomial { total, cells } => {
            if *total < 1 || *cells < 1 {
                return Err(Error::InvalidParameter(
                    "binomial total and cells must be >= 1".into(),
                ));
            }
        }
        GeneratorKind::TruncatedCentered { inner, bound } => {
            if !outer {
                return Err(Error::InvalidParameter(
                    "nested truncation is not supported".into(),
                ));
            }
            if !inner.is_cellwise_iid() {
                return Err(Error::UnsupportedSpec(
                    "truncation supports cellwise iid inner laws only".into(),
                ));
            }
            validate_kind(inner, d, false)?;
            match bound {
                BoundMode::Fixed { level } => {
                    if !(*level > 0.0) {
                        return Err(Error::InvalidParameter(format!(
                            "truncation level must be > 0, got {level}"
                        )));
                    }
                }
                BoundMode::Schedule { epsilon } => {
                    if !(*epsilon > 0.0) {
                        return Err(Error::InvalidParameter(format!(
                            "schedule epsilon must be > 0, got {epsilon}"
                        )));
                    }
                    if !inner.is_symmetric() {
                        return Err(Error::UnsupportedSpec(
                            "schedule truncation needs a symmetric inner law".into(),
                        ));
                    }
                }
            }
        }
        GeneratorKind::DuplicatedFirstAxis { inner } => {
            if !outer {
                return Err(Error::InvalidParameter(
                    "the duplicated control cannot be nested".into(),
                ));
            }
            if d < 2 {
                return Err(Error::InvalidParameter(
                    "the duplicated control needs d >= 2".into(),
                ));
            }
            if !inner.is_cellwise_iid() {
                return Err(Error::UnsupportedSpec(
                    "the duplicated control needs an iid inner law".into(),
                ));
            }
            validate_kind(inner, d, false)?;
        }
    }
    Ok(())
}

impl GeneratorKind {
    /// Cells are independent draws from one marginal law.
    pub fn is_cellwise_iid(&self) -> bool {
        matches!(
            self,
            GeneratorKind::IidNormal { .. }
                | GeneratorKind::IidRademacher
                | GeneratorKind::IidHeavyTail { .. }
                | GeneratorKind::IidCenteredBinomial { .. }
        )
    }

    /// The marginal law is symmetric about zero (so `E g_b(X) = 0`).
    pub fn is_symmetric(&self) -> bool {
        match self {
            GeneratorKind::IidNormal { .. }
            | GeneratorKind::IidRademacher
            | GeneratorKind::IidHeavyTail { .. }
            | GeneratorKind::GaussianNearestNeighbor { .. } => true,
            GeneratorKind::Multinomial { .. } | GeneratorKind::IidCenteredBinomial { .. } => false,
            GeneratorKind::TruncatedCentered { inner, .. }
            | GeneratorKind::DuplicatedFirstAxis { inner } => inner.is_symmetric(),
        }
    }

    /// Supports coordinate-keyed (restriction-consistent) cell sampling.
    pub fn is_coordinate_keyed(&self) -> bool {
        match self {
            k if k.is_cellwise_iid() => true,
            GeneratorKind::TruncatedCentered { inner, .. } => inner.is_cellwise_iid(),
            _ => false,
        }
    }

    /// Short stable name for reports.
    pub fn name(&self) -> &'static str {
        match self {
            GeneratorKind::IidNormal { .. } => "iid-normal",
            GeneratorKind::IidRademacher => "iid-rademacher",
            GeneratorKind::IidHeavyTail { .. } => "iid-heavy-tail",
            GeneratorKind::GaussianNearestNeighbor { .. } => "gaussian-nn",
            GeneratorKind::Multinomial { .. } => "multinomial",
            GeneratorKind::IidCenteredBinomial { .. } => "iid-centered-binomial",
            GeneratorKind::TruncatedCentered { .. } => "truncated-centered",
            GeneratorKind::DuplicatedFirstAxis { .. } => "duplicated-first-axis",
        }
    }
}

/// Survival function `P(|X| > t)` of the marginal law, where analytic.
pub fn marginal_tail(kind: &GeneratorKind, t: f64) -> Result<f64> {
    debug_assert!(t >= 0.0);
    match kind {
        GeneratorKind::IidNormal { variance } => {
            if *variance == 0.0 {
                Ok(0.0)
            } else {
                Ok(2.0 * normal_sf(t / variance.sqrt()))
            }
        }
        GeneratorKind::IidRademacher => Ok(if t < 1.0 { 1.0 } else { 0.0 }),
        GeneratorKind::IidHeavyTail {
            tail_exponent,
            log_power,
        } => Ok(heavy_tail::tail(t, *tail_exponent, *log_power)),
        GeneratorKind::GaussianNearestNeighbor { .. } => Ok(2.0 * normal_sf(t)),
        GeneratorKind::DuplicatedFirstAxis { inner } => marginal_tail(inner, t),
        _ => Err(Error::UnsupportedSpec(format!(
            "no analytic marginal tail for {}",
            kind.name()
        ))),
    }
}

/// Truncation level for a cell with `|k| = cells`, under either bound mode.
pub fn bound_level(bound: &BoundMode, inner: &GeneratorKind, cells: u64) -> Result<f64> {
    match bound {
        BoundMode::Fixed { level } => Ok(*level),
        BoundMode::Schedule { epsilon } => {
            truncation_schedule(cells, *epsilon, marginal_second_moment(inner)?)
        }
    }
}

/// The clipping pair `g_b(x) = (-b) v (x ^ b)`, `h_b(x) = x - g_b(x)`.
pub fn clip_pair(x: f64, b: f64) -> (f64, f64) {
    let g = x.clamp(-b, b);
    (g, x - g)
}

/// How the two truncation parts are centered.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Centering {
    /// No shift: returns `g_b(X)` and `h_b(X)` as they are.
    None,
    /// Shift by caller-supplied means (typically `E g_b(X)` and `E h_b(X)`).
    Mean { g_mean: f64, h_mean: f64 },
    /// Shift by the empirical cell means of each part.
    Empirical,
}

/// Splits a field into the clipped part and the excess part,
/// `X = (g_b(X) - c_g) + (h_b(X) - c_h) + c_g + c_h`.
///
/// Both parts are coordinatewise nondecreasing images of the input, so
/// negative association is preserved.
pub fn truncate_center(field: &Field, b: f64, centering: Centering) -> Result<(Field, Field)> {
    if !(b > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "truncation level must be > 0, got {b}"
        )));
    }
    let (g_shift, h_shift) = match centering {
        Centering::None => (0.0, 0.0),
        Centering::Mean { g_mean, h_mean } => (g_mean, h_mean),
        Centering::Empirical => {
            let n = field.values().len() as f64;
            let mut gs = 0.0;
            let mut hs = 0.0;
            for &x in field.values() {
                let (g, h) = clip_pair(x, b);
                gs += g;
                hs += h;
            }
            (gs / n, hs / n)
        }
    };
    let mut g_vals = Vec::with_capacity(field.values().len());
    let mut h_vals = Vec::with_capacity(field.values().len());
    for &x in field.values() {
        let (g, h) = clip_pair(x, b);
        g_vals.push(g - g_shift);
        h_vals.push(h - h_shift);
    }
    Ok((
        Field::new(field.shape().clone(), g_vals)?,
        Field::new(field.shape().clone(), h_vals)?,
    ))
}

/// The proof-schedule clipping level
/// `b_m = (eps/40) sqrt(second_moment) sqrt(m / LL(m))`.
pub fn truncation_schedule(m: u64, epsilon: f64, second_moment: f64) -> Result<f64> {
    if m < 1 {
        return Err(Error::InvalidParameter("m must be >= 1".into()));
    }
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter("epsilon must be > 0".into()));
    }
    if !(second_moment > 0.0) {
        return Err(Error::InvalidParameter("second moment must be > 0".into()));
    }
    let mf = m as f64;
    Ok(epsilon / 40.0 * second_moment.sqrt() * (mf / clipped_loglog(mf)).sqrt())
}

/// Decides whether `E X^2 log^(d-1)|X| / loglog|X|` is finite for the
/// heavy-tail law: finite iff the tail exponent exceeds 2, or equals 2 with
/// log power strictly above `d`. The boundary `log_power == d` is infinite
/// (the surviving integrand is `1/(t ln t)` in `t = ln x`).
pub fn heavy_tail_condition_check(tail_exponent: f64, log_power: f64, d: usize) -> Result<bool> {
    if !(tail_exponent > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tail exponent must be > 0, got {tail_exponent}"
        )));
    }
    Ok(tail_exponent > 2.0 || (tail_exponent == 2.0 && log_power > d as f64))
}

// ---------------------------------------------------------------------------
// moments
// ---------------------------------------------------------------------------

/// Mean of the clipped marginal, `E g_b(X)` (zero for symmetric laws).
pub fn truncation_mean(inner: &GeneratorKind, b: f64) -> Result<f64> {
    if inner.is_symmetric() {
        return Ok(0.0);
    }
    let (total, cells) = binomial_params(inner)?;
    let p = 1.0 / cells as f64;
    let mu = total as f64 * p;
    Ok(binomial_pmf_sum(total, p, |c| (c - mu).clamp(-b, b)))
}

fn binomial_params(kind: &GeneratorKind) -> Result<(u64, u64)> {
    match kind {
        GeneratorKind::IidCenteredBinomial { total, cells } => Ok((*total, *cells)),
        _ => Err(Error::UnsupportedSpec("not a cellwise count law".into())),
    }
}

/// `sum_c pmf(c) f(c)` over `Binomial(n, p)`, evaluated in log space.
fn binomial_pmf_sum(n: u64, p: f64, f: impl Fn(f64) -> f64) -> f64 {
    let ln_p = p.ln();
    let ln_1p = (1.0 - p).ln();
    let mut ln_pmf = n as f64 * ln_1p;
    let mut acc = 0.0;
    for c in 0..=n {
        acc += ln_pmf.exp() * f(c as f64);
        if c < n {
            ln_pmf += ((n - c) as f64 / (c + 1) as f64).ln() + ln_p - ln_1p;
        }
    }
    acc
}

/// Second moment of the marginal law (cell-uniform kinds only; truncated
/// schedule kinds are handled per cell by [`sum_second_moments`]).
pub fn marginal_second_moment(kind: &GeneratorKind) -> Result<f64> {
    marginal_abs_moment(kind, 2.0)
}

/// `E |Y|^p` of the marginal law, deterministic for the whole family.
///
/// Multinomial cells use their true marginal `Binomial(N, 1/|n|)`, which
/// depends on the target shape; call [`sum_abs_moments`] for the shape-aware
/// sums. Here `Multinomial` is rejected for that reason.
pub fn marginal_abs_moment(kind: &GeneratorKind, p: f64) -> Result<f64> {
    match kind {
        GeneratorKind::IidNormal { variance } => {
            Ok(variance.powf(p / 2.0) * normal_abs_moment(p))
        }
        GeneratorKind::IidRademacher => Ok(1.0),
        GeneratorKind::IidHeavyTail {
            tail_exponent,
            log_power,
        } => heavy_tail::abs_moment(p, *tail_exponent, *log_power),
        GeneratorKind::GaussianNearestNeighbor { .. } => Ok(normal_abs_moment(p)),
        GeneratorKind::IidCenteredBinomial { total, cells } => {
            let pr = 1.0 / *cells as f64;
            let mu = *total as f64 * pr;
            Ok(binomial_pmf_sum(*total, pr, |c| (c - mu).abs().powf(p)))
        }
        GeneratorKind::DuplicatedFirstAxis { inner } => marginal_abs_moment(inner, p),
        GeneratorKind::TruncatedCentered { inner, bound } => match bound {
            BoundMode::Fixed { level } => truncated_abs_moment(inner, *level, p),
            BoundMode::Schedule { .. } => Err(Error::UnsupportedSpec(
                "schedule truncation has cell-dependent moments; use the shape-aware sums".into(),
            )),
        },
        GeneratorKind::Multinomial { .. } => Err(Error::UnsupportedSpec(
            "multinomial marginals depend on the shape; use the shape-aware sums".into(),
        )),
    }
}

/// `E |g_b(X) - E g_b(X)|^p` for a truncated marginal.
fn truncated_abs_moment(inner: &GeneratorKind, b: f64, p: f64) -> Result<f64> {
    if inner.is_symmetric() {
        // E min(|X|, b)^p = p int_0^b x^(p-1) P(|X| > x) dx
        let f = |x: f64| p * x.powf(p - 1.0) * marginal_tail(inner, x).expect("tail");
        marginal_tail(inner, 0.0)?; // surface tail errors before integrating
        Ok(quad::integrate(&f, 0.0, b, 1e-13))
    } else {
        let (total, cells) = binomial_params(inner)?;
        let pr = 1.0 / cells as f64;
        let mu = total as f64 * pr;
        let shift = truncation_mean(inner, b)?;
        Ok(binomial_pmf_sum(total, pr, |c| {
            ((c - mu).clamp(-b, b) - shift).abs().powf(p)
        }))
    }
}

/// `B_n^2 = sum_{k <= n} E Y_k^2` for the spec, exact.
pub fn sum_second_moments(spec: &GeneratorSpec) -> Result<f64> {
    sum_abs_moments(spec, 2.0)
}

/// `sum_{k <= n} E |Y_k|^p` for the spec, exact.
pub fn sum_abs_moments(spec: &GeneratorSpec, p: f64) -> Result<f64> {
    let cells = spec.shape.cells();
    match &spec.kind {
        GeneratorKind::Multinomial { total_balls } => {
            let pr = 1.0 / cells as f64;
            let mu = *total_balls as f64 * pr;
            let per =
                binomial_pmf_sum(*total_balls, pr, |c| (c - mu).abs().powf(p));
            Ok(cells as f64 * per)
        }
        GeneratorKind::TruncatedCentered {
            inner,
            bound: BoundMode::Schedule { epsilon },
        } => {
            let sm = marginal_second_moment(inner)?;
            let mut acc = 0.0;
            for idx in spec.shape.iter_box() {
                let m: u64 = idx.iter().product();
                let b = truncation_schedule(m, *epsilon, sm)?;
                acc += truncated_abs_moment(inner, b, p)?;
            }
            Ok(acc)
        }
        kind => Ok(cells as f64 * marginal_abs_moment(kind, p)?),
    }
}

/// Sum over ordered pairs `i != j` in the box of `|E Y_i Y_j|`, exact.
pub fn abs_cross_covariance_sum(spec: &GeneratorSpec) -> Result<f64> {
    let n = spec.shape.cells() as f64;
    match &spec.kind {
        k if k.is_cellwise_iid() => Ok(0.0),
        GeneratorKind::TruncatedCentered { inner, .. } if inner.is_cellwise_iid() => Ok(0.0),
        GeneratorKind::GaussianNearestNeighbor { rho } => {
            Ok(*rho * ordered_adjacent_pairs(&spec.shape))
        }
        GeneratorKind::Multinomial { total_balls } => {
            // Cov(counts) = -N/m^2 per ordered pair
            let m = n;
            Ok(m * (m - 1.0) * *total_balls as f64 / (m * m))
        }
        GeneratorKind::DuplicatedFirstAxis { inner } => {
            let v = marginal_second_moment(inner)?;
            let n0 = spec.shape.coord(0) as f64;
            Ok(v * (n0 - 1.0) * n)
        }
        _ => Err(Error::UnsupportedSpec(format!(
            "no closed-form cross-covariance sum for {}",
            spec.kind.name()
        ))),
    }
}

/// Ordered pairs of lattice-adjacent cells inside the box.
fn ordered_adjacent_pairs(shape: &MultiIndex) -> f64 {
    let n = shape.cells() as f64;
    shape
        .coords()
        .iter()
        .map(|&c| 2.0 * (c as f64 - 1.0) * n / c as f64)
        .sum()
}

/// `Var(S_n)` in closed form.
pub fn variance_of_total(spec: &GeneratorSpec) -> Result<f64> {
    let n = spec.shape.cells() as f64;
    match &spec.kind {
        GeneratorKind::Multinomial { .. } => Ok(0.0),
        GeneratorKind::GaussianNearestNeighbor { rho } => {
            Ok(n - rho * ordered_adjacent_pairs(&spec.shape))
        }
        GeneratorKind::DuplicatedFirstAxis { inner } => {
            let v = marginal_second_moment(inner)?;
            let n0 = spec.shape.coord(0) as f64;
            Ok(n0 * n * v)
        }
        _ => Ok(sum_second_moments(spec)?),
    }
}

/// The summed stationary covariance `sigma^2 = sum_j gamma(j)`, closed form.
pub fn exact_sigma_squared(spec: &GeneratorSpec) -> Result<f64> {
    match &spec.kind {
        GeneratorKind::IidNormal { variance } => Ok(*variance),
        GeneratorKind::IidRademacher => Ok(1.0),
        GeneratorKind::IidHeavyTail {
            tail_exponent,
            log_power,
        } => heavy_tail::abs_moment(2.0, *tail_exponent, *log_power),
        GeneratorKind::GaussianNearestNeighbor { rho } => {
            Ok(1.0 - 2.0 * spec.dim() as f64 * rho)
        }
        GeneratorKind::TruncatedCentered {
            inner,
            bound: BoundMode::Fixed { level },
        } if inner.is_cellwise_iid() => {
            let m2 = truncated_abs_moment(inner, *level, 2.0)?;
            let m1 = truncation_mean(inner, *level)?;
            Ok(m2 - m1 * m1)
        }
        _ => Err(Error::UnsupportedSpec(format!(
            "sigma^2 is not defined in closed form for {}",
            spec.kind.name()
        ))),
    }
}

/// Known almost-sure bound on `|Y_k|`, when one exists.
pub fn almost_sure_bound(spec: &GeneratorSpec) -> Option<f64> {
    bound_of_kind(&spec.kind, spec.shape.cells())
}

fn bound_of_kind(kind: &GeneratorKind, cells: u64) -> Option<f64> {
    match kind {
        GeneratorKind::IidNormal { variance } if *variance == 0.0 => Some(0.0),
        GeneratorKind::IidRademacher => Some(1.0),
        GeneratorKind::Multinomial { total_balls } => {
            let m = cells as f64;
            Some(*total_balls as f64 * (1.0 - 1.0 / m).max(1.0 / m))
        }
        GeneratorKind::IidCenteredBinomial { total, cells } => {
            let m = *cells as f64;
            Some(*total as f64 * (1.0 - 1.0 / m).max(1.0 / m))
        }
        GeneratorKind::TruncatedCentered { inner, bound } => {
            let level = match bound {
                BoundMode::Fixed { level } => *level,
                BoundMode::Schedule { epsilon } => {
                    // b_m is nondecreasing in m, so the largest cell wins
                    truncation_schedule(cells, *epsilon, marginal_second_moment(inner).ok()?)
                        .ok()?
                }
            };
            let shift = truncation_mean(inner, level).ok()?;
            Some(level + shift.abs())
        }
        GeneratorKind::DuplicatedFirstAxis { inner } => bound_of_kind(inner, cells),
        _ => None,
    }
}

/// Finite-support covariance model `gamma(j)` of a stationary spec.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceModel {
    pub gamma: BTreeMap<Vec<i64>, f64>,
    pub support_radius: u64,
}

impl CovarianceModel {
    pub fn gamma_at(&self, j: &[i64]) -> f64 {
        self.gamma.get(j).copied().unwrap_or(0.0)
    }

    pub fn sigma_squared(&self) -> f64 {
        self.gamma.values().sum()
    }

    pub fn validate(&self) -> Result<()> {
        for (j, &g) in &self.gamma {
            let is_origin = j.iter().all(|&c| c == 0);
            if is_origin {
                if !(g > 0.0) {
                    return Err(Error::InvalidParameter("gamma(0) must be > 0".into()));
                }
            } else {
                if g > 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "gamma({j:?}) = {g} > 0 violates the NA requirement"
                    )));
                }
                let neg: Vec<i64> = j.iter().map(|&c| -c).collect();
                if (self.gamma_at(&neg) - g).abs() > 1e-12 {
                    return Err(Error::InvalidParameter(format!(
                        "gamma({j:?}) breaks symmetry"
                    )));
                }
            }
        }
        if self.sigma_squared() < 0.0 {
            return Err(Error::InvalidParameter("sigma^2 must be >= 0".into()));
        }
        Ok(())
    }
}

/// The declared covariance of a stationary spec (iid and nearest-neighbor kinds).
pub fn covariance_model(spec: &GeneratorSpec) -> Result<CovarianceModel> {
    let d = spec.dim();
    match &spec.kind {
        GeneratorKind::GaussianNearestNeighbor { rho } => {
            let mut gamma = BTreeMap::new();
            gamma.insert(vec![0i64; d], 1.0);
            for axis in 0..d {
                for sign in [-1i64, 1] {
                    let mut j = vec![0i64; d];
                    j[axis] = sign;
                    gamma.insert(j, -rho);
                }
            }
            Ok(CovarianceModel {
                gamma,
                support_radius: 1,
            })
        }
        kind if kind.is_cellwise_iid() => {
            let mut gamma = BTreeMap::new();
            gamma.insert(vec![0i64; d], marginal_second_moment(kind)?);
            Ok(CovarianceModel {
                gamma,
                support_radius: 0,
            })
        }
        _ => Err(Error::UnsupportedSpec(format!(
            "no declared covariance model for {}",
            spec.kind.name()
        ))),
    }
}

// ---------------------------------------------------------------------------
// sampling
// ---------------------------------------------------------------------------

enum Engine {
    IidStream,
    Multinomial,
    Circulant(CirculantEmbedding),
    Duplicated,
}

/// Prepared sampler for one spec; construction validates and precomputes
/// (notably the circulant embedding), sampling reuses the preparation.
pub struct Sampler {
    spec: GeneratorSpec,
    engine: Engine,
    fixed_shift: f64,
}

impl Sampler {
    pub fn new(spec: &GeneratorSpec) -> Result<Self> {
        spec.validate()?;
        let engine = match &spec.kind {
            GeneratorKind::GaussianNearestNeighbor { rho } => {
                Engine::Circulant(CirculantEmbedding::new(&spec.shape, *rho)?)
            }
            GeneratorKind::Multinomial { .. } => Engine::Multinomial,
            GeneratorKind::DuplicatedFirstAxis { .. } => Engine::Duplicated,
            _ => Engine::IidStream,
        };
        let fixed_shift = match &spec.kind {
            GeneratorKind::TruncatedCentered {
                inner,
                bound: BoundMode::Fixed { level },
            } => truncation_mean(inner, *level)?,
            _ => 0.0,
        };
        Ok(Self {
            spec: spec.clone(),
            engine,
            fixed_shift,
        })
    }

    pub fn spec(&self) -> &GeneratorSpec {
        &self.spec
    }

    /// One field from the replication stream derived from `seed`.
    pub fn sample(&self, seed: u64) -> Field {
        let mut rng = rng::replication_rng(seed, domain::SAMPLE, 0);
        self.sample_with(&mut rng)
    }

    /// One field from a caller-provided stream.
    pub fn sample_with<R: RngCore>(&self, rng: &mut R) -> Field {
        let shape = &self.spec.shape;
        match &self.engine {
            Engine::Circulant(emb) => emb.sample(rng),
            Engine::Multinomial => {
                let GeneratorKind::Multinomial { total_balls } = self.spec.kind else {
                    unreachable!()
                };
                sample_multinomial(shape, total_balls, rng)
            }
            Engine::Duplicated => {
                let GeneratorKind::DuplicatedFirstAxis { inner } = &self.spec.kind else {
                    unreachable!()
                };
                let slice_cells: u64 = shape.coords()[1..].iter().product();
                let slice: Vec<f64> = (0..slice_cells)
                    .map(|_| sample_iid_value(inner, rng))
                    .collect();
                let mut values = Vec::with_capacity(shape.cells() as usize);
                for _ in 0..shape.coord(0) {
                    values.extend_from_slice(&slice);
                }
                Field::new(shape.clone(), values).expect("duplicated field")
            }
            Engine::IidStream => {
                let mut values = Vec::with_capacity(shape.cells() as usize);
                match &self.spec.kind {
                    GeneratorKind::TruncatedCentered { inner, bound } => {
                        for idx in shape.iter_box() {
                            let x = sample_iid_value(inner, rng);
                            let m: u64 = idx.iter().product();
                            let b = bound_level(bound, inner, m).expect("validated bound");
                            values.push(x.clamp(-b, b) - self.fixed_shift);
                        }
                    }
                    kind => {
                        for _ in 0..shape.cells() {
                            values.push(sample_iid_value(kind, rng));
                        }
                    }
                }
                Field::new(shape.clone(), values).expect("iid field")
            }
        }
    }
}

/// One-shot sampling: deterministic in `(spec, spec.seed)`.
pub fn sample_field(spec: &GeneratorSpec) -> Result<Field> {
    Ok(Sampler::new(spec)?.sample(spec.seed))
}

fn sample_iid_value<R: RngCore>(kind: &GeneratorKind, rng: &mut R) -> f64 {
    match kind {
        GeneratorKind::IidNormal { variance } => {
            let z: f64 = StandardNormal.sample(rng);
            z * variance.sqrt()
        }
        GeneratorKind::IidRademacher => {
            if rng.next_u64() >> 63 == 1 {
                1.0
            } else {
                -1.0
            }
        }
        GeneratorKind::IidHeavyTail {
            tail_exponent,
            log_power,
        } => {
            let sign = if rng.next_u64() >> 63 == 1 { 1.0 } else { -1.0 };
            // uniform in (0, 1]
            let u = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
            let u = if u == 0.0 { 1.0 } else { u };
            sign * heavy_tail::quantile(u, *tail_exponent, *log_power)
        }
        GeneratorKind::IidCenteredBinomial { total, cells } => {
            let p = 1.0 / *cells as f64;
            let b = Binomial::new(*total, p).expect("validated binomial");
            b.sample(rng) as f64 - *total as f64 * p
        }
        _ => unreachable!("not an iid kind: {}", kind.name()),
    }
}

/// Uniform multinomial occupancy by sequential conditional binomials,
/// centered by the exact mean `N/|n|`.
fn sample_multinomial<R: RngCore>(shape: &MultiIndex, total: u64, rng: &mut R) -> Field {
    let m = shape.cells();
    let mean = total as f64 / m as f64;
    let mut values = Vec::with_capacity(m as usize);
    let mut remaining = total;
    for i in 0..m {
        let left = m - i;
        let count = if left == 1 {
            remaining
        } else if remaining == 0 {
            0
        } else {
            let b = Binomial::new(remaining, 1.0 / left as f64).expect("valid binomial");
            b.sample(rng)
        };
        remaining -= count;
        values.push(count as f64 - mean);
    }
    Field::new(shape.clone(), values).expect("multinomial field")
}

/// Value of one cell of a coordinate-keyed realization (iid-like kinds only):
/// growing the box extends the realization instead of resampling it.
pub fn sample_cell_keyed(kind: &GeneratorKind, master: u64, coords: &[u64]) -> f64 {
    let mut rng = rng::cell_rng(master, domain::SAMPLE, coords);
    match kind {
        GeneratorKind::TruncatedCentered { inner, bound } => {
            let x = sample_iid_value(inner, &mut rng);
            let m: u64 = coords.iter().product();
            let b = bound_level(bound, inner, m).expect("validated bound");
            // coordinate-keyed truncation is symmetric-inner only (validated)
            x.clamp(-b, b)
        }
        k => sample_iid_value(k, &mut rng),
    }
}

/// The independent-marginals counterpart of a spec (same cell laws, cells
/// independent), used as the comparison side of convex-ordering checks.
pub fn independent_version(spec: &GeneratorSpec) -> Result<GeneratorSpec> {
    let kind = independent_kind(&spec.kind, spec.shape.cells())?;
    GeneratorSpec::new(kind, spec.shape.clone(), spec.seed)
}

fn independent_kind(kind: &GeneratorKind, cells: u64) -> Result<GeneratorKind> {
    Ok(match kind {
        k if k.is_cellwise_iid() => k.clone(),
        GeneratorKind::GaussianNearestNeighbor { .. } => {
            GeneratorKind::IidNormal { variance: 1.0 }
        }
        GeneratorKind::Multinomial { total_balls } => GeneratorKind::IidCenteredBinomial {
            total: *total_balls,
            cells,
        },
        GeneratorKind::DuplicatedFirstAxis { inner } => (**inner).clone(),
        GeneratorKind::TruncatedCentered { inner, bound } => GeneratorKind::TruncatedCentered {
            inner: Box::new(independent_kind(inner, cells)?),
            bound: *bound,
        },
        k => k.clone(),
    })
}

/// Convenience: a ChaCha stream for replication `rep` of a run over `spec`.
pub fn rep_rng(spec: &GeneratorSpec, domain_tag: u64, rep: u64) -> ChaCha8Rng {
    rng::replication_rng(spec.seed, domain_tag, rep)
}
