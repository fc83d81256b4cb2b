//! Independent brute-force computations used to validate the fast engine and
//! the statistical verifiers.
//!
//! Nothing here may call into the streaming scan: the point of this module is
//! an implementation-independent second route to the same numbers.

use crate::error::{Error, Result};
use crate::field::Field;
use crate::generators::{GeneratorSpec, Sampler};
use crate::index::MultiIndex;
use crate::rng;
use crate::scan::PartialSumSummary;
use crate::stats::{jackknife_stat, McEstimate};
use serde::{Deserialize, Serialize};

/// Size cap for the O(|n|^2) brute-force pass.
pub const BRUTE_FORCE_CELL_CAP: u64 = 10_000;

/// Size cap for exact law expansion.
pub const LAW_ATOM_CAP: u64 = 1_000_000;

/// Every `T_k` by direct per-box summation: O(|n|) work per anchored sum,
/// O(|n|^2) total. The oracle counterpart of `scan::partial_sums_scan`.
pub fn brute_force_partial_sums(field: &Field) -> Result<PartialSumSummary> {
    let shape = field.shape();
    let cells = shape.cells();
    if cells > BRUTE_FORCE_CELL_CAP {
        return Err(Error::SizeCap(format!(
            "brute force supports at most {BRUTE_FORCE_CELL_CAP} cells, got {cells}"
        )));
    }
    let mut total = 0.0;
    let mut max_abs = 0.0f64;
    let mut max_signed = f64::NEG_INFINITY;
    for k in shape.iter_box() {
        let mut t = 0.0;
        for i in shape.iter_box() {
            if i.iter().zip(k.iter()).all(|(a, b)| a <= b) {
                t += field.at(&i);
            }
        }
        max_abs = max_abs.max(t.abs());
        max_signed = max_signed.max(t);
        total = t; // the last index visited is the full box
    }
    Ok(PartialSumSummary {
        total,
        max_abs,
        max_signed,
        second_moment_proxy: max_abs * max_abs,
    })
}

/// An exact finite law over fields of one shape.
#[derive(Debug, Clone)]
pub struct DiscreteLaw {
    atoms: Vec<(Field, f64)>,
}

impl DiscreteLaw {
    pub fn new(atoms: Vec<(Field, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidParameter("law needs at least one atom".into()));
        }
        let shape = atoms[0].0.shape().clone();
        let mut mass = 0.0;
        for (field, p) in &atoms {
            if field.shape() != &shape {
                return Err(Error::InvalidParameter("atoms must share one shape".into()));
            }
            if !(*p >= 0.0) {
                return Err(Error::InvalidParameter(format!("negative probability {p}")));
            }
            mass += p;
        }
        if (mass - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "probabilities sum to {mass}, not 1"
            )));
        }
        Ok(Self { atoms })
    }

    pub fn atoms(&self) -> &[(Field, f64)] {
        &self.atoms
    }

    /// Product law of iid cells over a box: the cell law is a list of
    /// `(value, probability)` pairs, expanded over all `|law|^cells` outcomes.
    pub fn iid_product(cell_law: &[(f64, f64)], shape: &MultiIndex) -> Result<Self> {
        let cells = shape.cells();
        let exponent: u32 = cells
            .try_into()
            .map_err(|_| Error::SizeCap("iid product expansion too large".into()))?;
        let outcomes = (cell_law.len() as u64)
            .checked_pow(exponent)
            .ok_or_else(|| Error::SizeCap("iid product expansion too large".into()))?;
        if outcomes > LAW_ATOM_CAP {
            return Err(Error::SizeCap(format!(
                "{outcomes} atoms exceed the cap {LAW_ATOM_CAP}"
            )));
        }
        let mut atoms = Vec::with_capacity(outcomes as usize);
        let mut choice = vec![0usize; cells as usize];
        loop {
            let mut values = Vec::with_capacity(cells as usize);
            let mut p = 1.0;
            for &c in &choice {
                values.push(cell_law[c].0);
                p *= cell_law[c].1;
            }
            atoms.push((Field::new(shape.clone(), values)?, p));
            // odometer over cell choices
            let mut pos = choice.len();
            loop {
                if pos == 0 {
                    return DiscreteLaw::new(atoms);
                }
                pos -= 1;
                choice[pos] += 1;
                if choice[pos] < cell_law.len() {
                    break;
                }
                choice[pos] = 0;
            }
        }
    }

    /// Exact law of the centered uniform multinomial on a box: all
    /// compositions of `total` balls over the cells, with multinomial weights.
    pub fn multinomial(total: u64, shape: &MultiIndex) -> Result<Self> {
        let cells = shape.cells() as usize;
        let mean = total as f64 / cells as f64;
        let mut atoms: Vec<(Field, f64)> = Vec::new();
        let mut counts = vec![0u64; cells];
        compositions(&mut counts, 0, total, &mut |counts| {
            if atoms.len() as u64 > LAW_ATOM_CAP {
                return Err(Error::SizeCap("multinomial expansion too large".into()));
            }
            let mut logp =
                -(total as f64) * (cells as f64).ln() + ln_factorial(total);
            for &c in counts.iter() {
                logp -= ln_factorial(c);
            }
            let values: Vec<f64> = counts.iter().map(|&c| c as f64 - mean).collect();
            atoms.push((Field::new(shape.clone(), values)?, logp.exp()));
            Ok(())
        })?;
        DiscreteLaw::new(atoms)
    }
}

/// Enumerates all compositions of `remaining` over `counts[pos..]`.
fn compositions(
    counts: &mut Vec<u64>,
    pos: usize,
    remaining: u64,
    emit: &mut impl FnMut(&[u64]) -> Result<()>,
) -> Result<()> {
    if pos == counts.len() - 1 {
        counts[pos] = remaining;
        return emit(counts);
    }
    for c in 0..=remaining {
        counts[pos] = c;
        compositions(counts, pos + 1, remaining - c, emit)?;
    }
    Ok(())
}

fn ln_factorial(n: u64) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// Statistics whose exact pushforward law the tiny oracle can produce.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Statistic {
    /// `S_n`
    Total,
    /// `M_n = max |T_k|`
    MaxAbs,
    /// `|S_n|^p`
    AbsTotalPow(f64),
    /// `M_n^p`
    MaxAbsPow(f64),
}

impl Statistic {
    fn eval(&self, summary: &PartialSumSummary) -> f64 {
        match self {
            Statistic::Total => summary.total,
            Statistic::MaxAbs => summary.max_abs,
            Statistic::AbsTotalPow(p) => summary.total.abs().powf(*p),
            Statistic::MaxAbsPow(p) => summary.max_abs.powf(*p),
        }
    }
}

/// Exact pushforward law of a statistic under a tiny discrete field law.
/// Values within 1e-12 of each other are merged.
pub fn exact_distribution_tiny(law: &DiscreteLaw, statistic: Statistic) -> Result<Vec<(f64, f64)>> {
    let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(law.atoms.len());
    for (field, p) in &law.atoms {
        let summary = brute_force_partial_sums(field)?;
        pairs.push((statistic.eval(&summary), *p));
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for (v, p) in pairs {
        match merged.last_mut() {
            Some((lv, lp)) if (v - *lv).abs() <= 1e-12 => *lp += p,
            _ => merged.push((v, p)),
        }
    }
    Ok(merged)
}

/// Exact expectation of a statistic under a tiny law.
pub fn exact_expectation(law: &DiscreteLaw, statistic: Statistic) -> Result<f64> {
    Ok(exact_distribution_tiny(law, statistic)?
        .iter()
        .map(|(v, p)| v * p)
        .sum())
}

/// The fixed library of coordinatewise nondecreasing test functions used by
/// the NA probe. Negative association quantifies over all monotone pairs; a
/// finite adversarial family gives falsification power without pretending to
/// prove the property.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "fn", rename_all = "kebab-case")]
pub enum MonotoneFn {
    Sum,
    Max,
    /// Projection on the i-th listed cell of the index set.
    Proj { index: usize },
    /// `clamp(sum, -bound, bound)`
    ClippedSum { bound: f64 },
    /// `1 { sum > threshold }`
    IndicatorSumAbove { threshold: f64 },
}

impl MonotoneFn {
    pub fn apply(&self, values: &[f64]) -> f64 {
        match self {
            MonotoneFn::Sum => values.iter().sum(),
            MonotoneFn::Max => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            MonotoneFn::Proj { index } => values[*index],
            MonotoneFn::ClippedSum { bound } => values.iter().sum::<f64>().clamp(-bound, *bound),
            MonotoneFn::IndicatorSumAbove { threshold } => {
                if values.iter().sum::<f64>() > *threshold {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Outcome of one NA covariance probe.
#[derive(Debug, Clone, Serialize)]
pub struct ProbeReport {
    pub estimate: McEstimate,
    /// `Cov <= +3 stderr`: negative association not falsified by this probe.
    pub consistent_with_na: bool,
}

/// Monte Carlo estimate of `Cov(f(X_A), g(X_B))` for disjoint index sets,
/// with a jackknife standard error and a one-sided verdict.
pub fn na_covariance_probe(
    spec: &GeneratorSpec,
    set_a: &[MultiIndex],
    set_b: &[MultiIndex],
    f: MonotoneFn,
    g: MonotoneFn,
    reps: u64,
) -> Result<ProbeReport> {
    if set_a.is_empty() || set_b.is_empty() {
        return Err(Error::InvalidParameter("index sets must be nonempty".into()));
    }
    for idx in set_a.iter().chain(set_b) {
        if !idx.le(&spec.shape) {
            return Err(Error::OutOfRange(format!("{idx} outside {}", spec.shape)));
        }
    }
    if set_a.iter().any(|a| set_b.contains(a)) {
        return Err(Error::InvalidParameter("index sets must be disjoint".into()));
    }
    if reps < 2 {
        return Err(Error::InvalidParameter("need at least 2 replications".into()));
    }
    let sampler = Sampler::new(spec)?;
    let mut rows: Vec<[f64; 3]> = Vec::with_capacity(reps as usize);
    let mut a_vals = vec![0.0; set_a.len()];
    let mut b_vals = vec![0.0; set_b.len()];
    for rep in 0..reps {
        let mut rng = rng::replication_rng(spec.seed, rng::domain::PROBE, rep);
        let field = sampler.sample_with(&mut rng);
        for (slot, idx) in a_vals.iter_mut().zip(set_a) {
            *slot = field.at(idx.coords());
        }
        for (slot, idx) in b_vals.iter_mut().zip(set_b) {
            *slot = field.at(idx.coords());
        }
        let fa = f.apply(&a_vals);
        let gb = g.apply(&b_vals);
        rows.push([fa, gb, fa * gb]);
    }
    let (cov, stderr) = jackknife_stat(&rows, |m| m[2] - m[0] * m[1]);
    let estimate = McEstimate {
        mean: cov,
        stderr,
        reps,
        ci_level: crate::stats::DEFAULT_CI_LEVEL,
    };
    Ok(ProbeReport {
        consistent_with_na: cov <= 3.0 * stderr,
        estimate,
    })
}

/// Pairwise covariance of uniform multinomial counts: `-total / cells^2`.
///
/// For `total <= 4` the value is produced by exact enumeration of the joint
/// law (the oracle route); the closed form is used beyond, and the test suite
/// pins the two routes against each other on the overlap.
pub fn multinomial_exact_cov(total: u64, cells: u64) -> Result<f64> {
    if total < 1 || cells < 2 {
        return Err(Error::InvalidParameter(
            "need total >= 1 and cells >= 2".into(),
        ));
    }
    if total <= 4 {
        let shape = MultiIndex::new(vec![cells])?;
        let law = DiscreteLaw::multinomial(total, &shape)?;
        let mut cov = 0.0;
        for (field, p) in law.atoms() {
            cov += field.values()[0] * field.values()[1] * p;
        }
        Ok(cov)
    } else {
        Ok(-(total as f64) / (cells as f64 * cells as f64))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::GeneratorKind;
    use crate::scan::partial_sums_scan;

    #[test]
    fn brute_force_example() {
        let f = Field::from_rows(&[vec![1.0, -2.0], vec![3.0, 4.0]]).unwrap();
        let s = brute_force_partial_sums(&f).unwrap();
        assert_eq!(s.total, 6.0);
        assert_eq!(s.max_abs, 6.0);
        assert_eq!(s.max_signed, 6.0);
    }

    #[test]
    fn brute_force_zero_field() {
        let f = Field::zeros(MultiIndex::new(vec![4, 3]).unwrap()).unwrap();
        let s = brute_force_partial_sums(&f).unwrap();
        assert_eq!(s.total, 0.0);
        assert_eq!(s.max_abs, 0.0);
    }

    #[test]
    fn brute_force_cap() {
        let f = Field::zeros(MultiIndex::new(vec![101, 101]).unwrap()).unwrap();
        assert!(brute_force_partial_sums(&f).is_err());
    }

    #[test]
    fn engine_matches_oracle_on_random_integer_field() {
        let shape = MultiIndex::new(vec![3, 4]).unwrap();
        let values: Vec<f64> = (0..12).map(|i| ((i * 53 + 7) % 19) as f64 - 9.0).collect();
        let f = Field::new(shape, values).unwrap();
        let a = brute_force_partial_sums(&f).unwrap();
        let b = partial_sums_scan(&f);
        assert_eq!(a.total, b.total);
        assert_eq!(a.max_abs, b.max_abs);
        assert_eq!(a.max_signed, b.max_signed);
    }

    #[test]
    fn rademacher_pair_total_law() {
        let shape = MultiIndex::new(vec![2]).unwrap();
        let law = DiscreteLaw::iid_product(&[(-1.0, 0.5), (1.0, 0.5)], &shape).unwrap();
        let dist = exact_distribution_tiny(&law, Statistic::Total).unwrap();
        assert_eq!(dist.len(), 3);
        assert_eq!(dist[0], (-2.0, 0.25));
        assert_eq!(dist[1], (0.0, 0.5));
        assert_eq!(dist[2], (2.0, 0.25));
        // E|S|^4 = 0.25*16 + 0.25*16 = 8
        let m4 = exact_expectation(&law, Statistic::AbsTotalPow(4.0)).unwrap();
        assert!((m4 - 8.0).abs() < 1e-12);
    }

    #[test]
    fn multinomial_total_is_point_mass_at_zero() {
        let shape = MultiIndex::new(vec![2]).unwrap();
        let law = DiscreteLaw::multinomial(2, &shape).unwrap();
        let dist = exact_distribution_tiny(&law, Statistic::Total).unwrap();
        assert_eq!(dist.len(), 1);
        assert!(dist[0].0.abs() < 1e-12);
        assert!((dist[0].1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn multinomial_law_matches_hand_enumeration() {
        // 2 balls in 2 cells: centered counts (+1,-1) w.p. 1/4, (0,0) w.p. 1/2, (-1,+1) w.p. 1/4
        let shape = MultiIndex::new(vec![2]).unwrap();
        let law = DiscreteLaw::multinomial(2, &shape).unwrap();
        let mut seen = 0;
        for (field, p) in law.atoms() {
            let v = (field.values()[0], field.values()[1]);
            let want = match v {
                (1.0, -1.0) | (-1.0, 1.0) => 0.25,
                (0.0, 0.0) => 0.5,
                _ => panic!("unexpected outcome {v:?}"),
            };
            assert!((p - want).abs() < 1e-12);
            seen += 1;
        }
        assert_eq!(seen, 3);
    }

    #[test]
    fn probabilities_sum_to_one() {
        let shape = MultiIndex::new(vec![3]).unwrap();
        for total in 1..=4 {
            let law = DiscreteLaw::multinomial(total, &shape).unwrap();
            for stat in [
                Statistic::Total,
                Statistic::MaxAbs,
                Statistic::AbsTotalPow(3.0),
            ] {
                let dist = exact_distribution_tiny(&law, stat).unwrap();
                let mass: f64 = dist.iter().map(|(_, p)| p).sum();
                assert!((mass - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn multinomial_exact_cov_values() {
        assert!((multinomial_exact_cov(2, 2).unwrap() + 0.5).abs() < 1e-12);
        assert!((multinomial_exact_cov(1, 2).unwrap() + 0.25).abs() < 1e-12);
        // enumeration agrees with the closed form on the overlap
        for total in 1..=4u64 {
            for cells in [2u64, 3, 4] {
                let enumerated = multinomial_exact_cov(total, cells).unwrap();
                let closed = -(total as f64) / (cells as f64 * cells as f64);
                assert!(
                    (enumerated - closed).abs() < 1e-12,
                    "total={total} cells={cells}: {enumerated} vs {closed}"
                );
            }
        }
        // cells -> infinity: covariance increases to 0 monotonically
        let mut prev = f64::NEG_INFINITY;
        for cells in [2u64, 4, 8, 16] {
            let c = multinomial_exact_cov(3, cells).unwrap();
            assert!(c > prev && c < 0.0);
            prev = c;
        }
    }

    #[test]
    fn na_pairwise_covariances_nonpositive_small_multinomial() {
        // exact enumeration: every pairwise covariance of centered counts <= 0
        for total in 1..=3u64 {
            for cells in 2..=3u64 {
                let shape = MultiIndex::new(vec![cells]).unwrap();
                let law = DiscreteLaw::multinomial(total, &shape).unwrap();
                for i in 0..cells as usize {
                    for j in 0..cells as usize {
                        if i == j {
                            continue;
                        }
                        let mut cov = 0.0;
                        for (field, p) in law.atoms() {
                            cov += field.values()[i] * field.values()[j] * p;
                        }
                        assert!(cov <= 1e-12, "cov[{i},{j}] = {cov}");
                    }
                }
            }
        }
    }

    fn idx(coords: &[u64]) -> MultiIndex {
        MultiIndex::new(coords.to_vec()).unwrap()
    }

    #[test]
    fn probe_rejects_overlap() {
        let spec = GeneratorSpec::new(
            GeneratorKind::IidRademacher,
            MultiIndex::new(vec![2, 2]).unwrap(),
            1,
        )
        .unwrap();
        let err = na_covariance_probe(
            &spec,
            &[idx(&[1, 1])],
            &[idx(&[1, 1])],
            MonotoneFn::Sum,
            MonotoneFn::Sum,
            100,
        );
        assert!(err.is_err());
    }

    #[test]
    fn probe_multinomial_hits_exact_value() {
        let spec = GeneratorSpec::new(
            GeneratorKind::Multinomial { total_balls: 2 },
            MultiIndex::new(vec![2]).unwrap(),
            7,
        )
        .unwrap();
        let report = na_covariance_probe(
            &spec,
            &[idx(&[1])],
            &[idx(&[2])],
            MonotoneFn::Sum,
            MonotoneFn::Sum,
            20_000,
        )
        .unwrap();
        let want = multinomial_exact_cov(2, 2).unwrap();
        assert!(
            (report.estimate.mean - want).abs() < 4.0 * report.estimate.stderr,
            "estimate {} vs exact {want} (se {})",
            report.estimate.mean,
            report.estimate.stderr
        );
        assert!(report.consistent_with_na);
    }

    #[test]
    fn probe_independent_cells_consistent() {
        let spec = GeneratorSpec::new(
            GeneratorKind::IidNormal { variance: 1.0 },
            MultiIndex::new(vec![2, 2]).unwrap(),
            3,
        )
        .unwrap();
        let report = na_covariance_probe(
            &spec,
            &[idx(&[1, 1]), idx(&[1, 2])],
            &[idx(&[2, 1]), idx(&[2, 2])],
            MonotoneFn::Max,
            MonotoneFn::ClippedSum { bound: 1.0 },
            5_000,
        )
        .unwrap();
        assert!(report.estimate.mean.abs() <= 4.0 * report.estimate.stderr);
        assert!(report.consistent_with_na);
    }

    #[test]
    fn probe_gaussian_nn_adjacent_cells() {
        let spec = GeneratorSpec::new(
            GeneratorKind::GaussianNearestNeighbor { rho: 0.2 },
            MultiIndex::new(vec![2, 2]).unwrap(),
            5,
        )
        .unwrap();
        let report = na_covariance_probe(
            &spec,
            &[idx(&[1, 1])],
            &[idx(&[1, 2])],
            MonotoneFn::Sum,
            MonotoneFn::Sum,
            20_000,
        )
        .unwrap();
        assert!(
            (report.estimate.mean + 0.2).abs() < 4.0 * report.estimate.stderr,
            "estimate {} (se {})",
            report.estimate.mean,
            report.estimate.stderr
        );
        assert!(report.consistent_with_na);
    }

    #[test]
    fn probe_meta_convergence() {
        // 100 independent probes at fixed seeds: the MC estimate must cover the
        // exact value within 3 stderr in at least 95 of them
        let shape = MultiIndex::new(vec![2]).unwrap();
        let want = multinomial_exact_cov(2, 2).unwrap();
        let mut hits = 0;
        for seed in 0..100u64 {
            let spec = GeneratorSpec::new(
                GeneratorKind::Multinomial { total_balls: 2 },
                shape.clone(),
                seed,
            )
            .unwrap();
            let report = na_covariance_probe(
                &spec,
                &[idx(&[1])],
                &[idx(&[2])],
                MonotoneFn::Sum,
                MonotoneFn::Sum,
                2_000,
            )
            .unwrap();
            if (report.estimate.mean - want).abs() <= 3.0 * report.estimate.stderr {
                hits += 1;
            }
        }
        assert!(hits >= 95, "only {hits}/100 probes covered the exact value");
    }
}
