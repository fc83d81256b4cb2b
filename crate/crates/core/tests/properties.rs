//! Property tests: engine/oracle agreement, additivity, permutation
//! covariance, schedule identities, generator laws and determinism.

use na_lattice::field::Field;
use na_lattice::generators::{
    self, covariance_model, sample_field, truncate_center, Centering, GeneratorKind,
    GeneratorSpec, Sampler,
};
use na_lattice::index::MultiIndex;
use na_lattice::inequalities::{verify_rosenthal, VerifyOpts};
use na_lattice::lil::{run_lil_trajectory, LilConfig, StatisticKind};
use na_lattice::oracles::brute_force_partial_sums;
use na_lattice::rng::{domain, replication_rng};
use na_lattice::scan::{partial_sums_scan, PrefixTable};
use na_lattice::schedule::{blocking_schedule, geometric_subsequence};
use proptest::prelude::*;
use rayon::prelude::*;

fn small_shape() -> impl Strategy<Value = Vec<u64>> {
    prop_oneof![
        prop::collection::vec(1u64..=60, 1),
        prop::collection::vec(1u64..=14, 2),
        prop::collection::vec(1u64..=7, 3),
    ]
}

fn field_strategy(integer: bool) -> impl Strategy<Value = Field> {
    small_shape().prop_flat_map(move |coords| {
        let shape = MultiIndex::new(coords).unwrap();
        let cells = shape.cells() as usize;
        let value = if integer {
            (-9i64..=9).prop_map(|v| v as f64).boxed()
        } else {
            (-9.0f64..9.0).boxed()
        };
        prop::collection::vec(value, cells)
            .prop_map(move |values| Field::new(shape.clone(), values).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 64,
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn scan_matches_brute_force_integer(field in field_strategy(true)) {
        let fast = partial_sums_scan(&field);
        let slow = brute_force_partial_sums(&field).unwrap();
        prop_assert_eq!(fast.total, slow.total);
        prop_assert_eq!(fast.max_abs, slow.max_abs);
        prop_assert_eq!(fast.max_signed, slow.max_signed);
    }

    #[test]
    fn scan_matches_brute_force_float(field in field_strategy(false)) {
        let fast = partial_sums_scan(&field);
        let slow = brute_force_partial_sums(&field).unwrap();
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1.0);
        prop_assert!(rel(fast.total, slow.total) < 1e-12);
        prop_assert!(rel(fast.max_abs, slow.max_abs) < 1e-12);
    }

    #[test]
    fn rectangle_additivity_along_any_axis(field in field_strategy(false), axis_pick in 0usize..8, cut in 0.0f64..1.0) {
        let table = PrefixTable::new(&field);
        let shape = field.shape();
        let d = shape.dim();
        let axis = axis_pick % d;
        if shape.coord(axis) >= 2 {
            let lo = MultiIndex::new(vec![1; d]).unwrap();
            let hi = shape.clone();
            // split [1, n_axis] at an interior cut
            let n_axis = shape.coord(axis);
            let cut_at = 1 + ((cut * (n_axis - 1) as f64) as u64).min(n_axis - 2);
            let mut hi_left = hi.coords().to_vec();
            hi_left[axis] = cut_at;
            let mut lo_right = lo.coords().to_vec();
            lo_right[axis] = cut_at + 1;
            let left = table
                .rectangle_sum(&lo, &MultiIndex::new(hi_left).unwrap())
                .unwrap();
            let right = table
                .rectangle_sum(&MultiIndex::new(lo_right).unwrap(), &hi)
                .unwrap();
            let whole = table.rectangle_sum(&lo, &hi).unwrap();
            let scale = whole.abs().max(1.0);
            prop_assert!(((left + right) - whole).abs() / scale < 1e-12);
        }
    }

    #[test]
    fn scan_is_transposition_covariant(field in field_strategy(true), a in 0usize..8, b in 0usize..8) {
        let d = field.dim();
        let (a, b) = (a % d, b % d);
        let transposed = field.transpose(a, b).unwrap();
        let x = partial_sums_scan(&field);
        let y = partial_sums_scan(&transposed);
        prop_assert_eq!(x.total, y.total);
        prop_assert_eq!(x.max_abs, y.max_abs);
    }

    #[test]
    fn blocking_schedule_identities_reevaluated(eps in 0.05f64..0.9, k_max in 1u64..12) {
        // keep N_k = (m_k + p_k) k^4 inside the u64 range; overflow rejection
        // has its own unit test
        let kf = k_max as f64;
        prop_assume!(kf.powf(1.0 + eps) + 4.0 * kf.log2() < 60.0);
        let schedule = blocking_schedule(eps, k_max).unwrap();
        prop_assert_eq!(schedule.entries.len() as u64, k_max);
        let mut prev_n = 0u64;
        for entry in &schedule.entries {
            // independent re-evaluation of the defining formulas
            let kf = entry.k as f64;
            let pow = 2f64.powf(kf.powf(1.0 + eps));
            prop_assert_eq!(entry.m_k, pow.floor() as u64);
            prop_assert_eq!(entry.p_k, (pow / (kf * kf)).floor() as u64);
            prop_assert_eq!(entry.n_k, (entry.m_k + entry.p_k) * entry.k.pow(4));
            prop_assert!(entry.n_k > prev_n);
            prev_n = entry.n_k;
        }
    }

    #[test]
    fn truncation_decomposition_identity(values in prop::collection::vec(-50.0f64..50.0, 1..64), b in 0.01f64..10.0) {
        let shape = MultiIndex::new(vec![values.len() as u64]).unwrap();
        let field = Field::new(shape, values).unwrap();
        let (g, h) = truncate_center(&field, b, Centering::None).unwrap();
        for ((&x, &gv), &hv) in field.values().iter().zip(g.values()).zip(h.values()) {
            // h is defined as x - g; reconstruction is exact up to one rounding
            let err = (gv + hv - x).abs();
            prop_assert!(err <= 1e-15 * x.abs().max(1.0), "x={x} b={b} err={err}");
            prop_assert!(gv.abs() <= b);
        }
    }

    #[test]
    fn geometric_subsequence_is_strictly_increasing(theta in 1.05f64..4.0, k_max in 2u64..20) {
        let seq = geometric_subsequence(theta, 2, k_max).unwrap();
        for pair in seq.windows(2) {
            prop_assert!(pair[0].coord(0) < pair[1].coord(0));
        }
    }
}

#[test]
fn scan_matches_brute_force_in_high_dimension() {
    // d = 5 and the d = 8 cap exercise every inclusion-exclusion subset
    for (coords, seed) in [(vec![3u64, 3, 3, 3, 3], 1u64), (vec![2; 8], 2)] {
        let shape = MultiIndex::new(coords).unwrap();
        let cells = shape.cells();
        let values: Vec<f64> = (0..cells)
            .map(|i| (((i * 2654435761 + seed) % 19) as f64) - 9.0)
            .collect();
        let field = Field::new(shape, values).unwrap();
        let fast = partial_sums_scan(&field);
        let slow = brute_force_partial_sums(&field).unwrap();
        assert_eq!(fast.total, slow.total);
        assert_eq!(fast.max_abs, slow.max_abs);
        assert_eq!(fast.max_signed, slow.max_signed);
    }
}

#[test]
fn determinism_across_replication_parallelism() {
    // sampling the same (spec, seed) from many threads is bit-identical
    let spec = GeneratorSpec::new(
        GeneratorKind::GaussianNearestNeighbor { rho: 0.2 },
        MultiIndex::new(vec![6, 6]).unwrap(),
        77,
    )
    .unwrap();
    let reference = sample_field(&spec).unwrap();
    let copies: Vec<Field> = (0..16)
        .into_par_iter()
        .map(|_| sample_field(&spec).unwrap())
        .collect();
    for c in copies {
        assert_eq!(c, reference);
    }
}

#[test]
fn gaussian_nn_empirical_covariance_matches_model() {
    // empirical gamma^(j) over 1e5 replications within 4 stderr for |j| <= 2
    let shape = MultiIndex::new(vec![5, 5]).unwrap();
    let spec = GeneratorSpec::new(
        GeneratorKind::GaussianNearestNeighbor { rho: 0.2 },
        shape.clone(),
        101,
    )
    .unwrap();
    let model = covariance_model(&spec).unwrap();
    model.validate().unwrap();
    let sampler = Sampler::new(&spec).unwrap();
    let reps: u64 = 100_000;
    let base = [3u64, 3];
    let offsets: Vec<[i64; 2]> = (-2..=2)
        .flat_map(|a| (-2..=2).map(move |b| [a, b]))
        .collect();

    let sums: Vec<f64> = (0..reps)
        .into_par_iter()
        .fold(
            || vec![0.0f64; offsets.len()],
            |mut acc, rep| {
                let mut rng = replication_rng(spec.seed, domain::SAMPLE, rep);
                let f = sampler.sample_with(&mut rng);
                let center = f.at(&base);
                for (slot, off) in acc.iter_mut().zip(&offsets) {
                    let idx = [
                        (base[0] as i64 + off[0]) as u64,
                        (base[1] as i64 + off[1]) as u64,
                    ];
                    *slot += center * f.at(&idx);
                }
                acc
            },
        )
        .reduce(
            || vec![0.0f64; offsets.len()],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        );

    // stderr of a product of unit-variance gaussians is about 1/sqrt(reps)
    let se = 1.1 / (reps as f64).sqrt();
    for (sum, off) in sums.iter().zip(&offsets) {
        let got = sum / reps as f64;
        let want = model.gamma_at(off);
        assert!(
            (got - want).abs() < 4.0 * se,
            "gamma({off:?}): got {got:.5}, want {want}, 4se = {:.5}",
            4.0 * se
        );
    }
}

#[test]
fn mc_estimates_cover_exact_values_meta() {
    // on a tiny instance with exact E|S|^4 = 8, the MC route covers the exact
    // value within 3 stderr in at least 95 of 100 seeded runs
    let shape = MultiIndex::new(vec![2]).unwrap();
    let mut hits = 0;
    for seed in 0..100u64 {
        let spec =
            GeneratorSpec::new(GeneratorKind::IidRademacher, shape.clone(), seed).unwrap();
        let r = verify_rosenthal(&spec, 4.0, &VerifyOpts::new(2_000)).unwrap();
        if (r.lhs.mean - 8.0).abs() <= 3.0 * r.lhs.stderr {
            hits += 1;
        }
    }
    assert!(hits >= 95, "only {hits}/100 runs covered the exact moment");
}

#[test]
fn lil_running_max_is_order_invariant() {
    // each point's statistic recomputed independently (materialize the sub-box
    // from the keyed stream, scan it standalone); the trajectory running max
    // must equal the prefix max of those values, bit for bit
    let kind = GeneratorKind::IidNormal { variance: 1.0 };
    let config = LilConfig {
        spec: GeneratorSpec::new(kind.clone(), MultiIndex::new(vec![2, 2]).unwrap(), 0).unwrap(),
        theta: 1.6,
        k_max: 9,
        seeds: vec![5],
        statistic: StatisticKind::Abs,
    };
    let big = run_lil_trajectory(&config, 5).unwrap();
    let mut prefix_max = f64::NEG_INFINITY;
    for (i, point) in big.points.iter().enumerate() {
        let values: Vec<f64> = point
            .n
            .iter_box()
            .map(|coords| generators::sample_cell_keyed(&kind, 5, &coords))
            .collect();
        let field = Field::new(point.n.clone(), values).unwrap();
        let summary = partial_sums_scan(&field);
        let norm = na_lattice::schedule::loglog_norm(&point.n, 2);
        let statistic = summary.total.abs() / norm;
        assert_eq!(statistic, point.statistic, "statistic mismatch at point {i}");
        prefix_max = prefix_max.max(statistic);
        assert_eq!(
            prefix_max, point.running_max,
            "running max mismatch at point {i}"
        );
    }
}

#[test]
fn truncated_sampling_respects_bound_and_determinism() {
    let spec = GeneratorSpec::new(
        GeneratorKind::TruncatedCentered {
            inner: Box::new(GeneratorKind::IidNormal { variance: 4.0 }),
            bound: generators::BoundMode::Fixed { level: 1.5 },
        },
        MultiIndex::new(vec![16, 16]).unwrap(),
        13,
    )
    .unwrap();
    let a = sample_field(&spec).unwrap();
    let b = sample_field(&spec).unwrap();
    assert_eq!(a, b);
    assert!(a.values().iter().all(|v| v.abs() <= 1.5));
    assert_eq!(generators::almost_sure_bound(&spec), Some(1.5));
}
