//! Batch front-end: generation, verification and trajectory runs with
//! reproducible configs and machine-readable outputs.
//!
//! Every run resolves to one [`RunConfig`] (also expressible as a TOML file:
//! `--config` loads it and explicit flags override single values), executes,
//! and writes a JSON manifest echoing the fully resolved config next to its
//! outputs. `replay <manifest.json>` re-executes an emitted manifest and
//! reproduces the outputs byte for byte. Exit codes: 0 all verdicts
//! HOLDS/BOUNDED, 1 any VIOLATED, 2 usage or config error, 3 INCONCLUSIVE
//! present under `--strict`.

use crate::error::{Error, Result};
use crate::generators::{sample_field, BoundMode, GeneratorKind, GeneratorSpec};
use crate::index::MultiIndex;
use crate::inequalities::{
    max_moment_ratio, verify_borel_cantelli_bound, verify_convex_comparison,
    verify_kolmogorov_exponential, verify_normal_lower, verify_rosenthal,
    verify_symmetrization, verify_tail_exponential, ConvexFn, ThresholdRule, VerifyOpts,
};
use crate::lil::{
    increment_trajectory, necessity_probe, run_lil_trajectory, LilConfig, StatisticKind,
};
use crate::oracles::{brute_force_partial_sums, multinomial_exact_cov, na_covariance_probe, MonotoneFn};
use crate::report::{worst_verdict, InequalityReport, Verdict, REPORT_CSV_HEADER};
use crate::rng;
use crate::scan::partial_sums_scan;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

pub const MANIFEST_SCHEMA: &str = "na-lattice.manifest/1";
pub const THREADS_ENV: &str = "NA_LATTICE_THREADS";

/// The fully resolved description of one run. TOML and JSON round-trip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: CommandConfig,
    pub out_dir: PathBuf,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub strict: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum CommandConfig {
    Generate {
        spec: GeneratorSpec,
        out: PathBuf,
        #[serde(default)]
        csv: bool,
    },
    Verify {
        check: CheckConfig,
        spec: GeneratorSpec,
        reps: u64,
    },
    Lil {
        spec: GeneratorSpec,
        theta: f64,
        k_max: u64,
        seeds: Vec<u64>,
        statistic: StatisticKind,
    },
    Increments {
        spec: GeneratorSpec,
        theta: f64,
        k_max: u64,
        delta: f64,
        seeds: Vec<u64>,
    },
    Necessity {
        spec: GeneratorSpec,
        threshold_const: f64,
        k_max: u64,
        reps: u64,
    },
    OracleCheck {
        seed: u64,
        cases: u64,
        probe_reps: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "kebab-case")]
pub enum CheckConfig {
    Rosenthal { p: f64 },
    TailExponential { x: f64, a: f64 },
    NormalLower { x: f64 },
    Convex { convex: ConvexFn },
    Symmetrization { p: f64 },
    MaxMoment { p: f64, shapes: Vec<MultiIndex> },
    Kolmogorov { x_grid: Vec<f64> },
    BorelCantelli { rule: ThresholdRule },
}

// ---------------------------------------------------------------------------
// argument parsing
// ---------------------------------------------------------------------------

#[derive(Parser, Debug)]
#[command(
    name = "na-lattice",
    about = "Simulate negatively associated lattice fields and verify their maximal inequalities",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct CommonArgs {
    /// Output directory for reports and manifests.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Replication-parallelism width (defaults to NA_LATTICE_THREADS or all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Treat INCONCLUSIVE verdicts as failures (exit 3).
    #[arg(long)]
    strict: bool,
}

#[derive(Args, Debug, Clone)]
struct SpecArgs {
    /// Generator, e.g. `rademacher`, `iid-normal:variance=2`,
    /// `gaussian-nn:rho=0.2`, `multinomial:total=100`,
    /// `heavy-tail:a=3,q=1`, `truncated:b=1,inner=iid-normal`.
    #[arg(long)]
    spec: String,
    /// Box extents as `n1xn2x...xnd`.
    #[arg(long)]
    shape: Option<String>,
    /// Master seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample one field and write it in the NAF1 binary format.
    Generate {
        #[command(flatten)]
        spec: SpecArgs,
        /// Output field path.
        #[arg(long)]
        out: PathBuf,
        /// Also write the debugging CSV next to the binary.
        #[arg(long)]
        csv: bool,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Verify one inequality family and emit JSON/CSV reports.
    Verify {
        /// One of: rosenthal, tail-exponential, normal-lower, convex,
        /// symmetrization, max-moment, kolmogorov, borel-cantelli.
        check: String,
        #[command(flatten)]
        spec: SpecArgs,
        /// Monte Carlo replications.
        #[arg(long, default_value_t = 10_000)]
        reps: u64,
        /// Moment order for rosenthal/symmetrization/max-moment.
        #[arg(long)]
        p: Option<f64>,
        /// Threshold(s); comma-separated for kolmogorov grids.
        #[arg(long, value_delimiter = ',')]
        x: Vec<f64>,
        /// The `a` level of the tail-exponential check.
        #[arg(long)]
        a: Option<f64>,
        /// Convex test function: square, abs-cube, exp:<t>, relu:<c>.
        #[arg(long = "fn")]
        convex: Option<String>,
        /// Shape ladder for max-moment, e.g. `4x4,8x8,16x16`.
        #[arg(long, value_delimiter = ',')]
        shapes: Vec<String>,
        /// Fixed event threshold for borel-cantelli.
        #[arg(long)]
        threshold_level: Option<f64>,
        /// LIL-scaled event threshold coefficient for borel-cantelli.
        #[arg(long)]
        threshold_coeff: Option<f64>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run LIL trajectories along a geometric subsequence.
    Lil {
        #[command(flatten)]
        spec: SpecArgs,
        /// Lattice dimension (the subsequence supplies the shapes).
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[arg(long, default_value_t = 1.5)]
        theta: f64,
        #[arg(long, default_value_t = 20)]
        kmax: u64,
        /// Extra seeds (one trajectory each) in addition to --seed.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        /// signed, abs or max-abs.
        #[arg(long, default_value = "abs")]
        statistic: String,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run window-increment trajectories (bounded specs only).
    Increments {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[arg(long, default_value_t = 1.5)]
        theta: f64,
        #[arg(long, default_value_t = 16)]
        kmax: u64,
        /// Window fraction delta in (0, 1].
        #[arg(long, default_value_t = 0.25)]
        delta: f64,
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Probe the necessity condition over a growing window.
    Necessity {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long, default_value_t = 2)]
        d: usize,
        /// The constant C in the event threshold 2C (2d|n| LL|n|)^(1/2).
        #[arg(long, default_value_t = 0.5)]
        c: f64,
        #[arg(long, default_value_t = 128)]
        kmax: u64,
        #[arg(long, default_value_t = 200)]
        reps: u64,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Cross-check the scan engine against the brute-force oracle and run
    /// NA covariance probes.
    OracleCheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Randomized engine/oracle cases.
        #[arg(long, default_value_t = 200)]
        cases: u64,
        /// Replications per covariance probe.
        #[arg(long, default_value_t = 4_000)]
        probe_reps: u64,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Execute a RunConfig from a TOML file; explicit flags override.
    Run {
        /// TOML file holding a RunConfig.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        strict: bool,
    },
    /// Re-execute the config embedded in an emitted manifest.
    Replay {
        manifest: PathBuf,
    },
}

/// Parses the CLI spec syntax into a generator kind.
pub fn parse_spec_kind(s: &str) -> Result<GeneratorKind> {
    let (name, rest) = match s.split_once(':') {
        Some((n, r)) => (n.trim(), r),
        None => (s.trim(), ""),
    };
    let mut kv: BTreeMap<String, String> = BTreeMap::new();
    for part in rest.split(',').filter(|p| !p.trim().is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| Error::InvalidParameter(format!("bad spec parameter {part:?}")))?;
        kv.insert(k.trim().to_string(), v.trim().to_string());
    }
    let get_f64 = |kv: &BTreeMap<String, String>, keys: &[&str], default: Option<f64>| -> Result<f64> {
        for k in keys {
            if let Some(v) = kv.get(*k) {
                return v
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidParameter(format!("bad number for {k}: {v}")));
            }
        }
        default.ok_or_else(|| Error::InvalidParameter(format!("missing parameter {}", keys[0])))
    };
    let get_u64 = |kv: &BTreeMap<String, String>, keys: &[&str], default: Option<u64>| -> Result<u64> {
        for k in keys {
            if let Some(v) = kv.get(*k) {
                return v
                    .parse::<u64>()
                    .map_err(|_| Error::InvalidParameter(format!("bad integer for {k}: {v}")));
            }
        }
        default.ok_or_else(|| Error::InvalidParameter(format!("missing parameter {}", keys[0])))
    };

    match name {
        "iid-normal" | "normal" => Ok(GeneratorKind::IidNormal {
            variance: get_f64(&kv, &["variance", "v"], Some(1.0))?,
        }),
        "iid-rademacher" | "rademacher" => Ok(GeneratorKind::IidRademacher),
        "iid-heavy-tail" | "heavy-tail" => Ok(GeneratorKind::IidHeavyTail {
            tail_exponent: get_f64(&kv, &["tail_exponent", "a"], None)?,
            log_power: get_f64(&kv, &["log_power", "q"], Some(0.0))?,
        }),
        "gaussian-nn" | "gaussian-nearest-neighbor" => Ok(GeneratorKind::GaussianNearestNeighbor {
            rho: get_f64(&kv, &["rho"], None)?,
        }),
        "multinomial" => Ok(GeneratorKind::Multinomial {
            total_balls: get_u64(&kv, &["total", "total_balls"], None)?,
        }),
        "iid-centered-binomial" | "binomial" => Ok(GeneratorKind::IidCenteredBinomial {
            total: get_u64(&kv, &["total"], None)?,
            cells: get_u64(&kv, &["cells"], None)?,
        }),
        "truncated" | "truncated-centered" => {
            let inner_name = kv
                .get("inner")
                .ok_or_else(|| Error::InvalidParameter("truncated needs inner=<kind>".into()))?
                .clone();
            let inner_params: Vec<String> = kv
                .iter()
                .filter(|(k, _)| k.starts_with("inner."))
                .map(|(k, v)| format!("{}={}", &k["inner.".len()..], v))
                .collect();
            let inner_str = if inner_params.is_empty() {
                inner_name
            } else {
                format!("{inner_name}:{}", inner_params.join(","))
            };
            let inner = parse_spec_kind(&inner_str)?;
            let bound = if kv.contains_key("eps") || kv.contains_key("epsilon") {
                BoundMode::Schedule {
                    epsilon: get_f64(&kv, &["eps", "epsilon"], None)?,
                }
            } else {
                BoundMode::Fixed {
                    level: get_f64(&kv, &["b", "level"], None)?,
                }
            };
            Ok(GeneratorKind::TruncatedCentered {
                inner: Box::new(inner),
                bound,
            })
        }
        "duplicated" | "duplicated-first-axis" => {
            let inner_name = kv
                .get("inner")
                .ok_or_else(|| Error::InvalidParameter("duplicated needs inner=<kind>".into()))?
                .clone();
            let inner_params: Vec<String> = kv
                .iter()
                .filter(|(k, _)| k.starts_with("inner."))
                .map(|(k, v)| format!("{}={}", &k["inner.".len()..], v))
                .collect();
            let inner_str = if inner_params.is_empty() {
                inner_name
            } else {
                format!("{inner_name}:{}", inner_params.join(","))
            };
            Ok(GeneratorKind::DuplicatedFirstAxis {
                inner: Box::new(parse_spec_kind(&inner_str)?),
            })
        }
        other => Err(Error::InvalidParameter(format!("unknown generator {other:?}"))),
    }
}

fn parse_convex(s: &str) -> Result<ConvexFn> {
    let (name, arg) = match s.split_once(':') {
        Some((n, a)) => (n, Some(a)),
        None => (s, None),
    };
    match (name, arg) {
        ("square" | "x^2", _) => Ok(ConvexFn::Square),
        ("abs-cube" | "|x|^3", _) => Ok(ConvexFn::AbsCube),
        ("exp", Some(t)) => Ok(ConvexFn::Exp {
            t: t.parse()
                .map_err(|_| Error::InvalidParameter(format!("bad exp parameter {t:?}")))?,
        }),
        ("relu", Some(c)) => Ok(ConvexFn::ReluShift {
            c: c.parse()
                .map_err(|_| Error::InvalidParameter(format!("bad relu parameter {c:?}")))?,
        }),
        _ => Err(Error::InvalidParameter(format!(
            "unknown convex function {s:?} (square, abs-cube, exp:<t>, relu:<c>)"
        ))),
    }
}

fn parse_statistic(s: &str) -> Result<StatisticKind> {
    match s {
        "signed" => Ok(StatisticKind::Signed),
        "abs" => Ok(StatisticKind::Abs),
        "max-abs" | "maxabs" => Ok(StatisticKind::MaxAbs),
        _ => Err(Error::InvalidParameter(format!(
            "unknown statistic {s:?} (signed, abs, max-abs)"
        ))),
    }
}

fn build_spec(args: &SpecArgs, default_shape: Option<MultiIndex>) -> Result<GeneratorSpec> {
    let kind = parse_spec_kind(&args.spec)?;
    let shape = match (&args.shape, default_shape) {
        (Some(s), _) => MultiIndex::parse_shape(s)?,
        (None, Some(d)) => d,
        (None, None) => {
            return Err(Error::InvalidParameter("--shape is required".into()));
        }
    };
    GeneratorSpec::new(kind, shape, args.seed)
}

fn seeds_with_default(primary: u64, extra: &[u64]) -> Vec<u64> {
    let mut seeds = vec![primary];
    seeds.extend_from_slice(extra);
    seeds.dedup();
    seeds
}

/// Turns parsed arguments into the canonical RunConfig.
fn resolve(cli: Cli) -> Result<RunConfig> {
    let env_threads = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok());
    let mk = |common: &CommonArgs, command: CommandConfig| RunConfig {
        command,
        out_dir: common.out_dir.clone(),
        threads: common.threads.or(env_threads),
        strict: common.strict,
    };
    match cli.command {
        Command::Generate {
            spec,
            out,
            csv,
            common,
        } => {
            let spec = build_spec(&spec, None)?;
            Ok(mk(&common, CommandConfig::Generate { spec, out, csv }))
        }
        Command::Verify {
            check,
            spec,
            reps,
            p,
            x,
            a,
            convex,
            shapes,
            threshold_level,
            threshold_coeff,
            common,
        } => {
            let spec = build_spec(&spec, None)?;
            let check = match check.as_str() {
                "rosenthal" => CheckConfig::Rosenthal {
                    p: p.unwrap_or(2.0),
                },
                "tail-exponential" => CheckConfig::TailExponential {
                    x: *x.first().ok_or_else(|| {
                        Error::InvalidParameter("tail-exponential needs --x".into())
                    })?,
                    a: a.ok_or_else(|| {
                        Error::InvalidParameter("tail-exponential needs --a".into())
                    })?,
                },
                "normal-lower" => CheckConfig::NormalLower {
                    x: *x.first().ok_or_else(|| {
                        Error::InvalidParameter("normal-lower needs --x".into())
                    })?,
                },
                "convex" => CheckConfig::Convex {
                    convex: parse_convex(convex.as_deref().unwrap_or("square"))?,
                },
                "symmetrization" => CheckConfig::Symmetrization {
                    p: p.unwrap_or(2.0),
                },
                "max-moment" => {
                    let ladder = shapes
                        .iter()
                        .map(|s| MultiIndex::parse_shape(s))
                        .collect::<Result<Vec<_>>>()?;
                    CheckConfig::MaxMoment {
                        p: p.unwrap_or(2.0),
                        shapes: ladder,
                    }
                }
                "kolmogorov" => {
                    if x.is_empty() {
                        return Err(Error::InvalidParameter("kolmogorov needs --x".into()));
                    }
                    CheckConfig::Kolmogorov { x_grid: x }
                }
                "borel-cantelli" => {
                    let rule = match (threshold_level, threshold_coeff) {
                        (Some(level), None) => ThresholdRule::Fixed { level },
                        (None, Some(coeff)) => ThresholdRule::LilScaled { coeff },
                        _ => {
                            return Err(Error::InvalidParameter(
                                "borel-cantelli needs exactly one of --threshold-level / --threshold-coeff"
                                    .into(),
                            ))
                        }
                    };
                    CheckConfig::BorelCantelli { rule }
                }
                other => {
                    return Err(Error::InvalidParameter(format!(
                        "unknown check {other:?}"
                    )))
                }
            };
            Ok(mk(&common, CommandConfig::Verify { check, spec, reps }))
        }
        Command::Lil {
            spec,
            d,
            theta,
            kmax,
            seeds,
            statistic,
            common,
        } => {
            let primary_seed = spec.seed;
            let spec = build_spec(&spec, Some(MultiIndex::diagonal(2, d)?))?;
            Ok(mk(
                &common,
                CommandConfig::Lil {
                    spec,
                    theta,
                    k_max: kmax,
                    seeds: seeds_with_default(primary_seed, &seeds),
                    statistic: parse_statistic(&statistic)?,
                },
            ))
        }
        Command::Increments {
            spec,
            d,
            theta,
            kmax,
            delta,
            seeds,
            common,
        } => {
            let primary_seed = spec.seed;
            let spec = build_spec(&spec, Some(MultiIndex::diagonal(2, d)?))?;
            Ok(mk(
                &common,
                CommandConfig::Increments {
                    spec,
                    theta,
                    k_max: kmax,
                    delta,
                    seeds: seeds_with_default(primary_seed, &seeds),
                },
            ))
        }
        Command::Necessity {
            spec,
            d,
            c,
            kmax,
            reps,
            common,
        } => {
            let spec = build_spec(&spec, Some(MultiIndex::diagonal(2, d)?))?;
            Ok(mk(
                &common,
                CommandConfig::Necessity {
                    spec,
                    threshold_const: c,
                    k_max: kmax,
                    reps,
                },
            ))
        }
        Command::OracleCheck {
            seed,
            cases,
            probe_reps,
            common,
        } => Ok(mk(
            &common,
            CommandConfig::OracleCheck {
                seed,
                cases,
                probe_reps,
            },
        )),
        Command::Run {
            config,
            out_dir,
            threads,
            strict,
        } => {
            let text = fs::read_to_string(&config)?;
            let mut run: RunConfig = toml::from_str(&text)
                .map_err(|e| Error::Format(format!("config parse: {e}")))?;
            if let Some(dir) = out_dir {
                run.out_dir = dir;
            }
            if threads.is_some() {
                run.threads = threads;
            }
            if strict {
                run.strict = true;
            }
            if run.threads.is_none() {
                run.threads = env_threads;
            }
            Ok(run)
        }
        Command::Replay { manifest } => {
            let text = fs::read_to_string(&manifest)?;
            let value: serde_json::Value = serde_json::from_str(&text)
                .map_err(|e| Error::Format(format!("manifest parse: {e}")))?;
            let config = value
                .get("config")
                .ok_or_else(|| Error::Format("manifest has no config".into()))?;
            serde_json::from_value(config.clone())
                .map_err(|e| Error::Format(format!("manifest config: {e}")))
        }
    }
}

// ---------------------------------------------------------------------------
// execution
// ---------------------------------------------------------------------------

fn write_manifest(config: &RunConfig, outputs: &[PathBuf]) -> Result<PathBuf> {
    let manifest = serde_json::json!({
        "schema": MANIFEST_SCHEMA,
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "outputs": outputs,
    });
    let path = config.out_dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(path)
}

fn write_reports(out_dir: &Path, reports: &[InequalityReport]) -> Result<Vec<PathBuf>> {
    let json_path = out_dir.join("report.json");
    let json: Vec<serde_json::Value> = reports.iter().map(|r| r.to_json()).collect();
    fs::write(&json_path, serde_json::to_string_pretty(&json)?)?;

    let csv_path = out_dir.join("report.csv");
    let mut csv = String::from(REPORT_CSV_HEADER);
    csv.push('\n');
    for r in reports {
        csv.push_str(&r.to_csv_row());
        csv.push('\n');
    }
    fs::write(&csv_path, csv)?;
    Ok(vec![json_path, csv_path])
}

fn print_report_lines(reports: &[InequalityReport]) {
    for r in reports {
        let detail: Vec<String> = r
            .params
            .iter()
            .filter(|(k, _)| ["x", "p", "ratio", "shape", "f"].contains(&k.as_str()))
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        println!(
            "{} {} lhs={:.6e} rhs={:.6e} margin={:.2} {}",
            r.verdict.as_str(),
            r.name,
            r.lhs.mean,
            r.rhs.mean(),
            r.margin,
            detail.join(" ")
        );
    }
}

fn exit_code_for(reports: &[InequalityReport], strict: bool) -> i32 {
    match worst_verdict(reports) {
        Verdict::Violated => 1,
        Verdict::Inconclusive if strict => 3,
        _ => 0,
    }
}

fn execute(config: &RunConfig) -> Result<i32> {
    fs::create_dir_all(&config.out_dir)?;
    let opts = VerifyOpts {
        reps: 0,
        threads: config.threads,
    };
    match &config.command {
        CommandConfig::Generate { spec, out, csv } => {
            let field = sample_field(spec)?;
            let out_path = if out.is_absolute() {
                out.clone()
            } else {
                config.out_dir.join(out)
            };
            let mut file = fs::File::create(&out_path)?;
            field.write_naf(&mut file)?;
            file.flush()?;
            let mut outputs = vec![out_path.clone()];
            if *csv {
                let csv_path = out_path.with_extension("csv");
                let mut file = fs::File::create(&csv_path)?;
                field.write_csv(&mut file)?;
                outputs.push(csv_path);
            }
            let summary = partial_sums_scan(&field);
            println!(
                "generated {} cells={} total={} max_abs={}",
                out_path.display(),
                field.shape().cells(),
                summary.total,
                summary.max_abs
            );
            write_manifest(config, &outputs)?;
            Ok(0)
        }
        CommandConfig::Verify { check, spec, reps } => {
            let opts = VerifyOpts {
                reps: *reps,
                threads: config.threads,
            };
            let reports = match check {
                CheckConfig::Rosenthal { p } => vec![verify_rosenthal(spec, *p, &opts)?],
                CheckConfig::TailExponential { x, a } => {
                    vec![verify_tail_exponential(spec, *x, *a, &opts)?]
                }
                CheckConfig::NormalLower { x } => vec![verify_normal_lower(spec, *x, &opts)?],
                CheckConfig::Convex { convex } => {
                    vec![verify_convex_comparison(spec, *convex, &opts)?]
                }
                CheckConfig::Symmetrization { p } => {
                    vec![verify_symmetrization(spec, *p, &opts)?]
                }
                CheckConfig::MaxMoment { p, shapes } => {
                    max_moment_ratio(spec, *p, shapes, &opts)?
                }
                CheckConfig::Kolmogorov { x_grid } => {
                    verify_kolmogorov_exponential(spec, x_grid, &opts)?
                }
                CheckConfig::BorelCantelli { rule } => {
                    let window: Vec<MultiIndex> = spec
                        .shape
                        .iter_box()
                        .map(MultiIndex::new)
                        .collect::<Result<_>>()?;
                    vec![verify_borel_cantelli_bound(spec, *rule, &window, &opts)?]
                }
            };
            print_report_lines(&reports);
            let mut outputs = write_reports(&config.out_dir, &reports)?;
            outputs.push(write_manifest(config, &outputs.clone())?);
            Ok(exit_code_for(&reports, config.strict))
        }
        CommandConfig::Lil {
            spec,
            theta,
            k_max,
            seeds,
            statistic,
        } => {
            let lil_config = LilConfig {
                spec: spec.clone(),
                theta: *theta,
                k_max: *k_max,
                seeds: seeds.clone(),
                statistic: *statistic,
            };
            let mut outputs = Vec::new();
            for &seed in seeds {
                let t = run_lil_trajectory(&lil_config, seed)?;
                if t.sigma_degenerate {
                    eprintln!("warning: sigma_ref = 0 for seed {seed}; statistic emitted unnormalized by sigma");
                }
                let path = config.out_dir.join(format!("trajectory_{seed}.csv"));
                let mut file = fs::File::create(&path)?;
                t.write_csv(spec.dim(), &mut file)?;
                println!(
                    "lil seed={} points={} final_running_max={:.4} tail_running_max={:.4} sigma_ref={:.4}",
                    seed,
                    t.points.len(),
                    t.final_running_max(),
                    t.tail_running_max(),
                    t.sigma_ref
                );
                outputs.push(path);
            }
            write_manifest(config, &outputs)?;
            Ok(0)
        }
        CommandConfig::Increments {
            spec,
            theta,
            k_max,
            delta,
            seeds,
        } => {
            let lil_config = LilConfig {
                spec: spec.clone(),
                theta: *theta,
                k_max: *k_max,
                seeds: seeds.clone(),
                statistic: StatisticKind::Abs,
            };
            let mut outputs = Vec::new();
            for &seed in seeds {
                let t = increment_trajectory(&lil_config, *delta, seed)?;
                let path = config.out_dir.join(format!("increments_{seed}.csv"));
                let mut file = fs::File::create(&path)?;
                t.write_csv(spec.dim(), &mut file)?;
                println!(
                    "increments seed={} points={} final_running_max={:.4} ceiling={:.4}",
                    seed,
                    t.points.len(),
                    t.final_running_max(),
                    t.ceiling.unwrap_or(f64::NAN)
                );
                outputs.push(path);
            }
            write_manifest(config, &outputs)?;
            Ok(0)
        }
        CommandConfig::Necessity {
            spec,
            threshold_const,
            k_max,
            reps,
        } => {
            let _ = opts;
            let report = necessity_probe(spec, *threshold_const, *k_max, *reps)?;
            let path = config.out_dir.join("necessity.json");
            fs::write(&path, serde_json::to_string_pretty(&report)?)?;
            let ladder_path = config.out_dir.join("necessity_ladder.csv");
            let mut csv = String::from("k,partial_sum,increment\n");
            for (k, s, inc) in &report.ladder {
                csv.push_str(&format!("{k},{s},{inc}\n"));
            }
            fs::write(&ladder_path, csv)?;
            println!(
                "necessity condition_holds={} flattening={} sum_exact={:.6} sum_mc={:.6}±{:.6}",
                report.condition_holds,
                report.flattening,
                report.sum_exact,
                report.sum_mc.mean,
                report.sum_mc.stderr
            );
            write_manifest(config, &[path, ladder_path])?;
            Ok(0)
        }
        CommandConfig::OracleCheck {
            seed,
            cases,
            probe_reps,
        } => {
            let failures = run_oracle_check(*seed, *cases, *probe_reps)?;
            let path = config.out_dir.join("oracle_check.json");
            fs::write(
                &path,
                serde_json::to_string_pretty(&serde_json::json!({
                    "cases": cases,
                    "failures": failures,
                }))?,
            )?;
            write_manifest(config, &[path])?;
            if failures == 0 {
                println!("oracle-check OK ({cases} cases)");
                Ok(0)
            } else {
                println!("oracle-check FAILED ({failures} of {cases} cases)");
                Ok(1)
            }
        }
    }
}

/// Randomized engine/oracle equivalence plus NA probes; returns failures.
fn run_oracle_check(seed: u64, cases: u64, probe_reps: u64) -> Result<u64> {
    use rand::{Rng, RngCore};
    let mut failures = 0u64;
    let mut rng = rng::replication_rng(seed, rng::domain::PROBE, 0);
    for case in 0..cases {
        let d = 1 + (rng.next_u64() % 3) as usize;
        let mut coords = Vec::with_capacity(d);
        let mut cells = 1u64;
        for axis in 0..d {
            let remaining_budget = (500 / cells).max(1);
            let cap = match d - axis - 1 {
                0 => remaining_budget,
                rest => ((remaining_budget as f64).powf(1.0 / (rest as f64 + 1.0)) as u64).max(1),
            };
            let c = 1 + rng.next_u64() % cap;
            cells *= c;
            coords.push(c);
        }
        let shape = MultiIndex::new(coords)?;
        let integer_case = case % 2 == 0;
        let values: Vec<f64> = (0..shape.cells())
            .map(|_| {
                if integer_case {
                    (rng.next_u64() % 19) as f64 - 9.0
                } else {
                    rng.random::<f64>() * 18.0 - 9.0
                }
            })
            .collect();
        let field = crate::field::Field::new(shape, values)?;
        let fast = partial_sums_scan(&field);
        let slow = brute_force_partial_sums(&field)?;
        let ok = if integer_case {
            fast.total == slow.total && fast.max_abs == slow.max_abs
        } else {
            let rel = |a: f64, b: f64| {
                let scale = a.abs().max(b.abs()).max(1.0);
                (a - b).abs() / scale
            };
            rel(fast.total, slow.total) < 1e-12 && rel(fast.max_abs, slow.max_abs) < 1e-12
        };
        if !ok {
            failures += 1;
        }
    }

    // NA probes with known exact covariances
    let spec = GeneratorSpec::new(
        GeneratorKind::Multinomial { total_balls: 2 },
        MultiIndex::new(vec![2])?,
        seed,
    )?;
    let probe = na_covariance_probe(
        &spec,
        &[MultiIndex::new(vec![1])?],
        &[MultiIndex::new(vec![2])?],
        MonotoneFn::Sum,
        MonotoneFn::Sum,
        probe_reps,
    )?;
    let exact = multinomial_exact_cov(2, 2)?;
    if (probe.estimate.mean - exact).abs() > 4.0 * probe.estimate.stderr
        || !probe.consistent_with_na
    {
        failures += 1;
    }
    Ok(failures)
}

/// Parses `argv`, executes, and returns the process exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints help/version on stdout with success status
            if e.use_stderr() {
                eprint!("{e}");
                return 2;
            }
            print!("{e}");
            return 0;
        }
    };
    let config = match resolve(cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    match execute(&config) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}
