//! Law-of-the-iterated-logarithm trajectories along geometric subsequences.
//!
//! A trajectory is one realization observed at the nested boxes
//! `N_k = ([theta^k], ..., [theta^k])`: the field restricted to a smaller box
//! is the same realization. For cellwise-iid specs this is literal (cells are
//! keyed by their coordinates, so growing the box extends the realization);
//! the nearest-neighbor Gaussian field uses a master-torus device (one torus
//! realization at the largest shape, cropped to every subsequence point),
//! and the remaining kinds materialize the largest box once and restrict.
//! Standalone-run equality of intermediate points is therefore exact for the
//! coordinate-keyed kinds and is documented as the nesting caveat for the rest.
//!
//! Almost-sure limits are not reachable at finite size. Trajectories report
//! the final and tail running maxima; no extrapolation is claimed.

use crate::error::{Error, Result};
use crate::field::Field;
use crate::generators::{
    self, CirculantEmbedding, GeneratorKind, GeneratorSpec, Sampler,
};
use crate::index::MultiIndex;
use crate::rng::{self, domain};
use crate::scan::{streaming_scan, PrefixTable, ScanVisitor};
use crate::schedule::{geometric_subsequence, loglog_norm_cells};
use crate::stats::McEstimate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Which normalized statistic the trajectory tracks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StatisticKind {
    /// `S_n / (2 d |n| LL|n|)^(1/2)`
    Signed,
    /// `|S_n| / (2 d |n| LL|n|)^(1/2)`
    Abs,
    /// `M_n / (2 d |n| LL|n|)^(1/2)`
    MaxAbs,
}

/// One trajectory run request.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LilConfig {
    pub spec: GeneratorSpec,
    pub theta: f64,
    pub k_max: u64,
    pub seeds: Vec<u64>,
    pub statistic: StatisticKind,
}

impl LilConfig {
    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if !(self.theta > 1.0) {
            return Err(Error::InvalidParameter(format!(
                "theta must be > 1, got {}",
                self.theta
            )));
        }
        if self.k_max < 2 {
            return Err(Error::InvalidParameter("k_max must be >= 2".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidParameter("need at least one seed".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryPoint {
    pub k: u64,
    pub n: MultiIndex,
    pub cells: u64,
    pub statistic: f64,
    pub running_max: f64,
}

/// One realization observed along the subsequence.
#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub seed: u64,
    pub statistic: StatisticKind,
    /// Known sigma (or `sqrt(E X^2)` for the absolute statistics).
    pub sigma_ref: f64,
    /// Set when the reference sigma is zero (degenerate normalization).
    pub sigma_degenerate: bool,
    /// The asymptotic increment ceiling, on increment trajectories only.
    pub ceiling: Option<f64>,
    pub points: Vec<TrajectoryPoint>,
}

impl Trajectory {
    pub fn final_running_max(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.running_max)
    }

    /// Running max over the last third of the points (the tail report).
    pub fn tail_running_max(&self) -> f64 {
        let n = self.points.len();
        let from = n - n.div_ceil(3);
        self.points[from..]
            .iter()
            .map(|p| p.statistic)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Writes the trajectory CSV: `k,n_1..n_d,cells,statistic,running_max,sigma_ref`.
    pub fn write_csv<W: Write>(&self, d: usize, w: &mut W) -> Result<()> {
        let coord_cols: Vec<String> = (1..=d).map(|i| format!("n_{i}")).collect();
        writeln!(
            w,
            "k,{},cells,statistic,running_max,sigma_ref",
            coord_cols.join(",")
        )?;
        for p in &self.points {
            let coords: Vec<String> = p.n.coords().iter().map(|c| c.to_string()).collect();
            writeln!(
                w,
                "{},{},{},{},{},{}",
                p.k,
                coords.join(","),
                p.cells,
                p.statistic,
                p.running_max,
                self.sigma_ref
            )?;
        }
        Ok(())
    }
}

fn sigma_reference(spec: &GeneratorSpec, statistic: StatisticKind) -> f64 {
    match statistic {
        StatisticKind::Signed => generators::exact_sigma_squared(spec)
            .map(|v| v.max(0.0).sqrt())
            .unwrap_or(f64::NAN),
        StatisticKind::Abs | StatisticKind::MaxAbs => generators::sum_second_moments(spec)
            .map(|b2| (b2 / spec.shape.cells() as f64).sqrt())
            .unwrap_or(f64::NAN),
    }
}

/// How cell values reach the scan.
enum ValueSource {
    Keyed { kind: GeneratorKind, seed: u64 },
    Materialized(Field),
}

impl ValueSource {
    fn build(spec: &GeneratorSpec, seed: u64, max_shape: &MultiIndex) -> Result<ValueSource> {
        if spec.kind.is_coordinate_keyed() {
            return Ok(ValueSource::Keyed {
                kind: spec.kind.clone(),
                seed,
            });
        }
        match &spec.kind {
            GeneratorKind::GaussianNearestNeighbor { rho } => {
                // master torus: one realization at the largest shape, cropped
                let emb = CirculantEmbedding::new(max_shape, *rho)?;
                let mut rng = rng::replication_rng(seed, domain::TORUS, 0);
                let torus = emb.sample_torus(&mut rng);
                Ok(ValueSource::Materialized(generators::crop(
                    &torus, max_shape,
                )))
            }
            _ => {
                let spec_at_max = spec.with_shape(max_shape.clone())?.with_seed(seed);
                Ok(ValueSource::Materialized(Sampler::new(&spec_at_max)?.sample(seed)))
            }
        }
    }
}

/// Scan visitor that buckets every anchored sum by the smallest subsequence
/// box containing its cell, capturing corner totals on the way.
struct SubsequenceVisitor {
    /// coordinate value -> smallest breakpoint level containing it
    level_of: Vec<u32>,
    /// breakpoint extents, level-indexed
    extents: Vec<u64>,
    max_abs_per_level: Vec<f64>,
    corner_total: Vec<f64>,
}

impl SubsequenceVisitor {
    fn new(extents: &[u64]) -> Self {
        let max_extent = *extents.last().expect("nonempty") as usize;
        let mut level_of = vec![0u32; max_extent + 1];
        let mut level = 0u32;
        for c in 1..=max_extent as u64 {
            while extents[level as usize] < c {
                level += 1;
            }
            level_of[c as usize] = level;
        }
        Self {
            level_of,
            extents: extents.to_vec(),
            max_abs_per_level: vec![0.0; extents.len()],
            corner_total: vec![f64::NAN; extents.len()],
        }
    }
}

impl ScanVisitor for SubsequenceVisitor {
    fn visit(&mut self, coords: &[u64], t: f64) {
        let mut level = 0u32;
        let mut all_equal = true;
        let first = coords[0];
        for &c in coords {
            let l = self.level_of[c as usize];
            if l > level {
                level = l;
            }
            if c != first {
                all_equal = false;
            }
        }
        let slot = &mut self.max_abs_per_level[level as usize];
        let abs = t.abs();
        if abs > *slot {
            *slot = abs;
        }
        if all_equal && self.extents[level as usize] == first {
            self.corner_total[level as usize] = t;
        }
    }
}

/// Runs one trajectory for one master seed.
pub fn run_lil_trajectory(config: &LilConfig, seed: u64) -> Result<Trajectory> {
    config.validate()?;
    let d = config.spec.dim();
    let points = geometric_subsequence(config.theta, d, config.k_max)?;
    if points.is_empty() {
        return Err(Error::InvalidParameter("empty subsequence".into()));
    }
    let extents: Vec<u64> = points.iter().map(|n| n.coord(0)).collect();
    let max_shape = points.last().unwrap().clone();
    let spec_at_max = config.spec.with_shape(max_shape.clone())?;
    let sigma_ref = sigma_reference(&spec_at_max, config.statistic);
    let source = ValueSource::build(&config.spec, seed, &max_shape)?;

    let mut visitor = SubsequenceVisitor::new(&extents);
    match &source {
        ValueSource::Keyed { kind, seed } => {
            let kind = kind.clone();
            let master = *seed;
            streaming_scan(
                &max_shape,
                |coords| generators::sample_cell_keyed(&kind, master, coords),
                &mut visitor,
            );
        }
        ValueSource::Materialized(field) => {
            let values = field.values();
            let mut flat = 0usize;
            streaming_scan(
                &max_shape,
                |_| {
                    let v = values[flat];
                    flat += 1;
                    v
                },
                &mut visitor,
            );
        }
    }

    // prefix-max over levels turns per-level maxima into per-box maxima
    let mut m_running = 0.0f64;
    let mut out = Vec::with_capacity(points.len());
    let mut running_stat = f64::NEG_INFINITY;
    for (level, n) in points.iter().enumerate() {
        m_running = m_running.max(visitor.max_abs_per_level[level]);
        let cells = n.cells();
        let norm = loglog_norm_cells(cells, d);
        let s = visitor.corner_total[level];
        debug_assert!(s.is_finite(), "corner not captured at level {level}");
        let statistic = match config.statistic {
            StatisticKind::Signed => s / norm,
            StatisticKind::Abs => s.abs() / norm,
            StatisticKind::MaxAbs => m_running / norm,
        };
        running_stat = running_stat.max(statistic);
        out.push(TrajectoryPoint {
            k: (level + 1) as u64,
            n: n.clone(),
            cells,
            statistic,
            running_max: running_stat,
        });
    }

    Ok(Trajectory {
        seed,
        statistic: config.statistic,
        sigma_ref,
        sigma_degenerate: sigma_ref == 0.0,
        ceiling: None,
        points: out,
    })
}

/// Runs the configured ensemble, one trajectory per master seed, in parallel.
pub fn run_lil_trajectories(config: &LilConfig) -> Result<Vec<Trajectory>> {
    config.validate()?;
    config
        .seeds
        .par_iter()
        .map(|&seed| run_lil_trajectory(config, seed))
        .collect()
}

/// Window-increment trajectory: the statistic at `N_k` is
/// `max_{1 <= j <= [delta N_k]} |S_{N_k + j} - S_{N_k}| / (2 d |N_k| LL|N_k|)^(1/2)`,
/// reported next to the asymptotic ceiling
/// `80 d (delta (1+2 delta)^d)^(1/2) sup_k (E X_k^2)^(1/2)`.
///
/// Needs an almost surely bounded spec. Subsequence points whose window
/// `[delta N_k]` is empty are skipped.
pub fn increment_trajectory(config: &LilConfig, delta: f64, seed: u64) -> Result<Trajectory> {
    config.validate()?;
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "delta must lie in (0, 1], got {delta}"
        )));
    }
    if generators::almost_sure_bound(&config.spec).is_none() {
        return Err(Error::UnsupportedSpec(format!(
            "increment trajectories need a bounded spec, got {}",
            config.spec.kind.name()
        )));
    }
    let d = config.spec.dim();
    let points = geometric_subsequence(config.theta, d, config.k_max)?;
    let usable: Vec<(MultiIndex, u64)> = points
        .iter()
        .filter_map(|n| {
            let w = (delta * n.coord(0) as f64).floor() as u64;
            (w >= 1).then(|| (n.clone(), w))
        })
        .collect();
    if usable.is_empty() {
        return Err(Error::InvalidParameter(
            "delta too small: every window is empty".into(),
        ));
    }
    let (last_n, last_w) = usable.last().unwrap();
    let full_extent = last_n.coord(0) + last_w;
    let full_shape = MultiIndex::diagonal(full_extent, d)?;

    // sup_k E X_k^2: schedule truncations approach the inner second moment
    let sup_second = match &config.spec.kind {
        GeneratorKind::TruncatedCentered {
            inner,
            bound: generators::BoundMode::Schedule { .. },
        } => generators::marginal_second_moment(inner)?,
        _ => {
            let s = config.spec.with_shape(full_shape.clone())?;
            generators::sum_second_moments(&s)? / full_shape.cells() as f64
        }
    };
    let ceiling = 80.0
        * d as f64
        * (delta * (1.0 + 2.0 * delta).powi(d as i32)).sqrt()
        * sup_second.sqrt();

    let source = ValueSource::build(&config.spec, seed, &full_shape)?;
    let field = match source {
        ValueSource::Materialized(f) => f,
        ValueSource::Keyed { kind, seed } => {
            let mut values = Vec::with_capacity(full_shape.cells() as usize);
            for coords in full_shape.iter_box() {
                values.push(generators::sample_cell_keyed(&kind, seed, &coords));
            }
            Field::new(full_shape.clone(), values)?
        }
    };
    let table = PrefixTable::new(&field);

    let spec_at_max = config.spec.with_shape(full_shape.clone())?;
    let sigma_ref = sigma_reference(&spec_at_max, StatisticKind::Abs);

    let mut out = Vec::with_capacity(usable.len());
    let mut running = f64::NEG_INFINITY;
    for (level, (n, w)) in usable.iter().enumerate() {
        let window = MultiIndex::diagonal(*w, d)?;
        let inc = table.increment_max(n, &window)?;
        let statistic = inc / loglog_norm_cells(n.cells(), d);
        running = running.max(statistic);
        out.push(TrajectoryPoint {
            k: (level + 1) as u64,
            n: n.clone(),
            cells: n.cells(),
            statistic,
            running_max: running,
        });
    }

    Ok(Trajectory {
        seed,
        statistic: StatisticKind::Abs,
        sigma_ref,
        sigma_degenerate: sigma_ref == 0.0,
        ceiling: Some(ceiling),
        points: out,
    })
}

/// Necessity probe report: how the event sums behave over a growing window.
#[derive(Debug, Clone, Serialize)]
pub struct NecessityReport {
    pub threshold_const: f64,
    pub k_max: u64,
    /// The analytic verdict of the moment condition for this marginal law.
    pub condition_holds: bool,
    /// `sum_n P(|X_n| >= 2C (2 d |n| LL|n|)^(1/2))` by the exact tail.
    pub sum_exact: f64,
    /// The same sum estimated by Monte Carlo.
    pub sum_mc: McEstimate,
    /// `(K, exact partial sum over [1,K]^d, increment from the previous K)`.
    pub ladder: Vec<(u64, f64, f64)>,
    /// Successive-window increments die off (the empirical convergence read).
    pub flattening: bool,
}

/// Flattening rule: the last octave increment is at most a quarter of the
/// first nonzero one (or every increment is zero).
const FLATTEN_RATIO: f64 = 0.25;

/// Probes the necessity side: whether `sum_n P(A_n)` over the window
/// `n <= (k_max, ..., k_max)` flattens (moment condition holds) or keeps
/// growing (condition fails), both by the exact marginal tail and by MC.
pub fn necessity_probe(
    spec: &GeneratorSpec,
    threshold_const: f64,
    k_max: u64,
    reps: u64,
) -> Result<NecessityReport> {
    if !(threshold_const > 0.0) {
        return Err(Error::InvalidParameter("threshold constant must be > 0".into()));
    }
    if k_max < 2 {
        return Err(Error::InvalidParameter("k_max must be >= 2".into()));
    }
    if !spec.kind.is_cellwise_iid() {
        return Err(Error::UnsupportedSpec(
            "necessity probe needs a cellwise iid spec with known tail".into(),
        ));
    }
    let d = spec.dim();
    let window = MultiIndex::diagonal(k_max, d)?;
    if window.checked_cells()? > 20_000_000 {
        return Err(Error::SizeCap("necessity window exceeds 2e7 cells".into()));
    }
    generators::marginal_tail(&spec.kind, 1.0)?; // reject kinds without a tail

    let condition_holds = match &spec.kind {
        GeneratorKind::IidHeavyTail {
            tail_exponent,
            log_power,
        } => generators::heavy_tail_condition_check(*tail_exponent, *log_power, d)?,
        _ => true,
    };

    let threshold = |cells: u64| -> f64 {
        2.0 * threshold_const * loglog_norm_cells(cells, d)
    };

    // exact route, with the octave ladder
    let mut ladder_ks: Vec<u64> = Vec::new();
    let mut k = 1u64;
    while k < k_max {
        ladder_ks.push(k);
        k *= 2;
    }
    ladder_ks.push(k_max);

    let mut sum_exact = 0.0;
    let mut ladder: Vec<(u64, f64, f64)> = Vec::new();
    let mut prev_sum = 0.0;
    let mut ladder_pos = 0usize;
    // iterate [1, k_max]^d grouped by max-coordinate so partial sums over
    // nested boxes fall out in one pass
    let mut per_extent = vec![0.0f64; k_max as usize + 1];
    for coords in window.iter_box() {
        let cells: u64 = coords.iter().product();
        let maxc = *coords.iter().max().unwrap();
        per_extent[maxc as usize] +=
            generators::marginal_tail(&spec.kind, threshold(cells))?;
    }
    for extent in 1..=k_max {
        sum_exact += per_extent[extent as usize];
        if ladder_pos < ladder_ks.len() && ladder_ks[ladder_pos] == extent {
            ladder.push((extent, sum_exact, sum_exact - prev_sum));
            prev_sum = sum_exact;
            ladder_pos += 1;
        }
    }

    let increments: Vec<f64> = ladder.iter().map(|(_, _, inc)| *inc).collect();
    let first_nonzero = increments.iter().copied().find(|&v| v > 0.0);
    let flattening = match first_nonzero {
        None => true,
        Some(first) => increments.last().copied().unwrap_or(0.0) <= FLATTEN_RATIO * first,
    };

    // MC route: per replication, count events over the window
    if reps < 2 {
        return Err(Error::InvalidParameter("need at least 2 replications".into()));
    }
    let kind = spec.kind.clone();
    let counts: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = rng::replication_rng(spec.seed, domain::NECESSITY, rep);
            let sampler_spec = GeneratorSpec {
                kind: kind.clone(),
                shape: window.clone(),
                seed: 0,
            };
            let sampler = Sampler::new(&sampler_spec).expect("validated");
            let field = sampler.sample_with(&mut rng);
            let mut count = 0.0;
            for (coords, &v) in window.iter_box().zip(field.values()) {
                let cells: u64 = coords.iter().product();
                if v.abs() >= threshold(cells) {
                    count += 1.0;
                }
            }
            count
        })
        .collect();
    let sum_mc = McEstimate::from_values(&counts);

    Ok(NecessityReport {
        threshold_const,
        k_max,
        condition_holds,
        sum_exact,
        sum_mc,
        ladder,
        flattening,
    })
}
