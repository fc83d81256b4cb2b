//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured numbers. Run with `cargo test --test acceptance -- --nocapture`
//! to see every line; tolerances are pinned in the assertions.

use na_lattice::field::Field;
use na_lattice::generators::{
    exact_sigma_squared, GeneratorKind, GeneratorSpec, Sampler,
};
use na_lattice::index::MultiIndex;
use na_lattice::inequalities::{
    verify_convex_comparison, verify_kolmogorov_exponential, verify_normal_lower,
    verify_rosenthal, ConvexFn, VerifyOpts,
};
use na_lattice::lil::{run_lil_trajectory, LilConfig, StatisticKind};
use na_lattice::oracles::brute_force_partial_sums;
use na_lattice::report::Verdict;
use na_lattice::rng::{domain, replication_rng};
use na_lattice::scan::partial_sums_scan;
use rand::{Rng, RngCore};
use rayon::prelude::*;
use std::time::Instant;

fn shape(coords: &[u64]) -> MultiIndex {
    MultiIndex::new(coords.to_vec()).unwrap()
}

/// Criterion 1: 200 randomized fields, d in {1,2,3}, |n| <= 500; the scan
/// equals the brute-force oracle exactly on integers and to 1e-12 relative on
/// floats, in under 10 seconds.
#[test]
fn criterion_1_engine_oracle_equivalence() {
    let start = Instant::now();
    let mut rng = replication_rng(2024, domain::PROBE, 0);
    for case in 0..200u64 {
        let d = 1 + (rng.next_u64() % 3) as usize;
        let mut coords = Vec::with_capacity(d);
        let mut cells = 1u64;
        for axis in 0..d {
            let budget = (500 / cells).max(1);
            let cap = match d - axis - 1 {
                0 => budget,
                rest => ((budget as f64).powf(1.0 / (rest as f64 + 1.0)) as u64).max(1),
            };
            let c = 1 + rng.next_u64() % cap;
            cells *= c;
            coords.push(c);
        }
        let s = shape(&coords);
        let integer_case = case % 2 == 0;
        let values: Vec<f64> = (0..s.cells())
            .map(|_| {
                if integer_case {
                    (rng.next_u64() % 19) as f64 - 9.0
                } else {
                    rng.random::<f64>() * 18.0 - 9.0
                }
            })
            .collect();
        let field = Field::new(s, values).unwrap();
        let fast = partial_sums_scan(&field);
        let slow = brute_force_partial_sums(&field).unwrap();
        if integer_case {
            assert_eq!(fast.total, slow.total, "case {case}");
            assert_eq!(fast.max_abs, slow.max_abs, "case {case}");
            assert_eq!(fast.max_signed, slow.max_signed, "case {case}");
        } else {
            let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1.0);
            assert!(rel(fast.total, slow.total) < 1e-12, "case {case}");
            assert!(rel(fast.max_abs, slow.max_abs) < 1e-12, "case {case}");
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 10, "took {elapsed:?}");
    println!("PASS criterion 1: 200 randomized fields, engine == oracle ({elapsed:?})");
}

/// Criterion 2: Kolmogorov exponential on iid Rademacher 32x32 (b=1, B^2=1024),
/// x in {32, 64, 96}, >= 1e5 replications, 5 master seeds: LHS <= RHS + 3 stderr
/// at every (x, seed), zero VIOLATED, under 5 minutes.
#[test]
fn criterion_2_kolmogorov_exponential() {
    let start = Instant::now();
    let x_grid = [32.0, 64.0, 96.0];
    let opts = VerifyOpts::new(100_000);
    for seed in 1..=5u64 {
        let spec =
            GeneratorSpec::new(GeneratorKind::IidRademacher, shape(&[32, 32]), seed).unwrap();
        let reports = verify_kolmogorov_exponential(&spec, &x_grid, &opts).unwrap();
        for r in &reports {
            assert_ne!(r.verdict, Verdict::Violated, "seed {seed}, params {:?}", r.params);
            let slack = 3.0 * r.lhs.stderr;
            assert!(
                r.lhs.mean <= r.rhs.mean() + slack,
                "seed {seed}: lhs {} vs rhs {} + {slack}",
                r.lhs.mean,
                r.rhs.mean()
            );
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 300, "took {elapsed:?}");
    println!(
        "PASS criterion 2: Kolmogorov exponential holds at x in {{32,64,96}} for 5 seeds ({elapsed:?})"
    );
}

/// Criterion 3: Rosenthal at p=2 on iid Rademacher 4x4 is fully analytic:
/// LHS 16, RHS = 2(30/ln 2)^2 * 32, ratio 1.33e-4 to three significant figures.
#[test]
fn criterion_3_rosenthal_analytic() {
    let spec = GeneratorSpec::new(GeneratorKind::IidRademacher, shape(&[4, 4]), 0).unwrap();
    let r = verify_rosenthal(&spec, 2.0, &VerifyOpts::new(2)).unwrap();
    assert_eq!(r.verdict, Verdict::Holds);
    assert!(r.lhs.is_exact());
    assert_eq!(r.lhs.mean, 16.0);
    // frozen: RHS = 119886.85330592301
    assert!((r.rhs.mean() - 1.19886853305923e5).abs() / r.rhs.mean() < 1e-12);
    let ratio = r.params["ratio"].as_f64().unwrap();
    assert!(ratio <= 1.4e-4);
    // three significant figures: 1.33e-4
    assert_eq!((ratio * 1e6).round(), 133.0);
    println!("PASS criterion 3: Rosenthal analytic ratio {ratio:.3e} <= 1.4e-4");
}

/// Criterion 4: normal lower bound on iid Rademacher with |n| = 1e6 at x=1:
/// RHS = (1 - Phi(2)) - 12e-3 ~ 0.01075, LHS ~ 0.159, >= 1e3 replications,
/// under 3 minutes.
#[test]
fn criterion_4_normal_lower_bound() {
    let start = Instant::now();
    let spec =
        GeneratorSpec::new(GeneratorKind::IidRademacher, shape(&[1000, 1000]), 7).unwrap();
    let r = verify_normal_lower(&spec, 1.0, &VerifyOpts::new(1000)).unwrap();
    assert_eq!(r.verdict, Verdict::Holds);
    // frozen RHS: 0.0107501319481792072
    assert!((r.rhs.mean() - 0.0107501319481792072).abs() < 1e-12);
    // LHS is P(Z >= 1) at CLT scale; 5 sigma coverage band
    assert!(
        (r.lhs.mean - 0.15866).abs() <= 5.0 * r.lhs.stderr,
        "lhs {} (se {})",
        r.lhs.mean,
        r.lhs.stderr
    );
    assert!(r.lhs.mean >= r.rhs.mean());
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 180, "took {elapsed:?}");
    println!(
        "PASS criterion 4: normal lower bound, LHS {:.4} >= RHS {:.6} ({elapsed:?})",
        r.lhs.mean,
        r.rhs.mean()
    );
}

/// Criterion 5: convex comparison, both sides analytic. Multinomial f=x^2:
/// exact 0 < exact RHS. GaussianNearestNeighbor(0.2) 16x16 f=x^2:
/// LHS = 64 (covariance sum) < RHS = 256.
#[test]
fn criterion_5_convex_comparison_analytic() {
    let opts = VerifyOpts::new(2);
    let m = GeneratorSpec::new(GeneratorKind::Multinomial { total_balls: 32 }, shape(&[4, 4]), 0)
        .unwrap();
    let r = verify_convex_comparison(&m, ConvexFn::Square, &opts).unwrap();
    assert_eq!(r.verdict, Verdict::Holds);
    assert_eq!(r.lhs.mean, 0.0);
    assert!(r.lhs.is_exact());
    assert!(r.rhs.mean() > 0.0);
    assert!(r.rhs.stderr() == 0.0);

    let g = GeneratorSpec::new(
        GeneratorKind::GaussianNearestNeighbor { rho: 0.2 },
        shape(&[16, 16]),
        0,
    )
    .unwrap();
    let r = verify_convex_comparison(&g, ConvexFn::Square, &opts).unwrap();
    assert_eq!(r.verdict, Verdict::Holds);
    assert!((r.lhs.mean - 64.0).abs() < 1e-9);
    assert!((r.rhs.mean() - 256.0).abs() < 1e-9);
    println!("PASS criterion 5: convex comparison analytic (0 < RHS; 64 < 256)");
}

/// Criterion 6: sigma^2 anchor. exact_sigma_squared(GNN(rho)) equals
/// 1 - 2 d rho exactly for rho in {0.05, 0.1, 0.2, 1/(2d)}; the empirical
/// covariance of adjacent cells sits within 4 stderr of -rho at 1e5
/// replications; under 1 minute.
#[test]
fn criterion_6_sigma_squared_anchor() {
    let start = Instant::now();
    for d in 1..=3usize {
        for rho in [0.05, 0.1, 0.2, 1.0 / (2.0 * d as f64)] {
            if rho > 1.0 / (2.0 * d as f64) {
                continue; // outside the spectral validity domain for this d
            }
            let spec = GeneratorSpec::new(
                GeneratorKind::GaussianNearestNeighbor { rho },
                MultiIndex::diagonal(3, d).unwrap(),
                0,
            )
            .unwrap();
            let got = exact_sigma_squared(&spec).unwrap();
            assert_eq!(got, 1.0 - 2.0 * d as f64 * rho, "d={d} rho={rho}");
        }
    }

    // empirical adjacent covariance at rho = 0.2, d = 2
    let rho = 0.2;
    let spec = GeneratorSpec::new(
        GeneratorKind::GaussianNearestNeighbor { rho },
        shape(&[2, 2]),
        11,
    )
    .unwrap();
    let sampler = Sampler::new(&spec).unwrap();
    let reps = 100_000u64;
    let sums: [f64; 2] = (0..reps)
        .into_par_iter()
        .fold(
            || [0.0f64; 2],
            |mut acc, rep| {
                let mut rng = replication_rng(spec.seed, domain::SAMPLE, rep);
                let f = sampler.sample_with(&mut rng);
                acc[0] += f.at(&[1, 1]) * f.at(&[1, 2]);
                acc[1] += f.at(&[1, 1]) * f.at(&[2, 1]);
                acc
            },
        )
        .reduce(|| [0.0f64; 2], |a, b| [a[0] + b[0], a[1] + b[1]]);
    // Var(XY) = 1 + rho^2 for a standard bivariate pair
    let se = ((1.0 + rho * rho) / reps as f64).sqrt();
    for (axis, sum) in sums.iter().enumerate() {
        let got = sum / reps as f64;
        assert!(
            (got + rho).abs() <= 4.0 * se,
            "axis {axis}: {got:.5} vs -{rho} (4se = {:.5})",
            4.0 * se
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 60, "took {elapsed:?}");
    println!("PASS criterion 6: sigma^2 anchor exact; adjacent covariance within 4se ({elapsed:?})");
}

/// Criterion 7: LIL smoke band. IidNormal(1), d=2, theta=1.5, diagonal
/// subsequence reaching |n| ~ 1e7, 10 master seeds: the running max of
/// |S_n| / (2d|n| LL|n|)^(1/2) lies in [0.3, 1.5] for every seed, under
/// 10 minutes. (Theoretical limit 1; the band is non-asymptotic.)
#[test]
fn criterion_7_lil_smoke_band() {
    let start = Instant::now();
    let config = LilConfig {
        spec: GeneratorSpec::new(
            GeneratorKind::IidNormal { variance: 1.0 },
            shape(&[2, 2]),
            0,
        )
        .unwrap(),
        theta: 1.5,
        k_max: 20, // floor(1.5^20)^2 = 3325^2 ~ 1.1e7 cells
        seeds: (1..=10).collect(),
        statistic: StatisticKind::Abs,
    };
    let trajectories: Vec<_> = config
        .seeds
        .par_iter()
        .map(|&seed| run_lil_trajectory(&config, seed).unwrap())
        .collect();
    for t in &trajectories {
        let last = t.points.last().unwrap();
        assert!(last.cells >= 10_000_000, "reached only {} cells", last.cells);
        let m = t.final_running_max();
        assert!(
            (0.3..=1.5).contains(&m),
            "seed {}: running max {m} outside [0.3, 1.5]",
            t.seed
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 600, "took {elapsed:?}");
    let maxima: Vec<String> = trajectories
        .iter()
        .map(|t| format!("{:.3}", t.final_running_max()))
        .collect();
    println!(
        "PASS criterion 7: LIL band [0.3, 1.5] over 10 seeds (maxima {}) ({elapsed:?})",
        maxima.join(",")
    );
}

/// Criterion 8: falsifiability. The positively-associated duplicated control
/// triggers VIOLATED on the convex comparison with f = x^2 at 3 stderr,
/// under 1 minute.
#[test]
fn criterion_8_verifier_falsifiability() {
    let start = Instant::now();
    let spec = GeneratorSpec::new(
        GeneratorKind::DuplicatedFirstAxis {
            inner: Box::new(GeneratorKind::IidNormal { variance: 1.0 }),
        },
        shape(&[8, 8]),
        3,
    )
    .unwrap();
    let r = verify_convex_comparison(&spec, ConvexFn::Square, &VerifyOpts::new(4000)).unwrap();
    assert_eq!(r.verdict, Verdict::Violated, "margin {}", r.margin);
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 60, "took {elapsed:?}");
    println!(
        "PASS criterion 8: duplicated control fires VIOLATED (margin {:.1} sigma) ({elapsed:?})",
        r.margin
    );
}

/// Criterion 9: CLI determinism. The same config run with different --threads
/// produces byte-identical CSV/JSON outputs.
#[test]
fn criterion_9_cli_thread_determinism() {
    let bin = env!("CARGO_BIN_EXE_na-lattice");
    let base = tempfile::tempdir().unwrap();
    let run = |threads: &str, sub: &str| {
        let dir = base.path().join(sub);
        std::fs::create_dir_all(&dir).unwrap();
        let out = std::process::Command::new(bin)
            .args([
                "verify",
                "kolmogorov",
                "--spec",
                "rademacher",
                "--shape",
                "16x16",
                "--x",
                "16,48",
                "--reps",
                "4000",
                "--seed",
                "42",
                "--threads",
                threads,
                "--out-dir",
            ])
            .arg(&dir)
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        (
            std::fs::read(dir.join("report.json")).unwrap(),
            std::fs::read(dir.join("report.csv")).unwrap(),
        )
    };
    let (json1, csv1) = run("1", "a");
    let (json4, csv4) = run("4", "b");
    assert_eq!(json1, json4, "report.json differs across thread counts");
    assert_eq!(csv1, csv4, "report.csv differs across thread counts");
    println!("PASS criterion 9: byte-identical outputs across --threads 1 and 4");
}
