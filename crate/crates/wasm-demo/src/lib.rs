//! Browser demo: sample NA fields, watch LIL trajectories converge, and run
//! the Kolmogorov exponential check interactively.
//!
//! The API is three functions returning plain buffers/JSON so the page needs
//! no framework: a heatmap renderer for 2-d fields, a trajectory runner, and
//! a verifier runner. Everything executes single-threaded in the browser
//! (rayon falls back to sequential on wasm targets); results are identical to
//! the native CLI at the same seeds.

use na_lattice::generators::{sample_field, GeneratorKind, GeneratorSpec};
use na_lattice::index::MultiIndex;
use na_lattice::inequalities::{verify_kolmogorov_exponential, VerifyOpts};
use na_lattice::lil::{run_lil_trajectory, LilConfig, StatisticKind};
use na_lattice::scan::partial_sums_scan;
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn parse_kind(spec: &str, rho: f64, total: u64) -> Result<GeneratorKind, String> {
    match spec {
        "gaussian-nn" => Ok(GeneratorKind::GaussianNearestNeighbor { rho }),
        "iid-normal" => Ok(GeneratorKind::IidNormal { variance: 1.0 }),
        "rademacher" => Ok(GeneratorKind::IidRademacher),
        "multinomial" => Ok(GeneratorKind::Multinomial { total_balls: total }),
        "heavy-tail" => Ok(GeneratorKind::IidHeavyTail {
            tail_exponent: 3.0,
            log_power: 0.0,
        }),
        "duplicated" => Ok(GeneratorKind::DuplicatedFirstAxis {
            inner: Box::new(GeneratorKind::IidNormal { variance: 1.0 }),
        }),
        other => Err(format!("unknown spec {other:?}")),
    }
}

/// Diverging blue-white-red map, symmetric about zero.
pub fn diverging_rgba(v: f64, scale: f64) -> [u8; 4] {
    let t = if scale > 0.0 {
        (v / scale).clamp(-1.0, 1.0)
    } else {
        0.0
    };
    let (r, g, b) = if t >= 0.0 {
        // white -> red
        (255.0, 255.0 * (1.0 - t * 0.85), 255.0 * (1.0 - t))
    } else {
        // white -> blue
        (255.0 * (1.0 + t), 255.0 * (1.0 + t * 0.85), 255.0)
    };
    [r as u8, g as u8, b as u8, 255]
}

/// Samples a 2-d field and renders it as RGBA pixels (row-major, one pixel
/// per cell). The canvas side scales it up.
#[wasm_bindgen]
pub fn render_field(
    spec: &str,
    rows: u32,
    cols: u32,
    seed: u64,
    rho: f64,
    total_balls: u64,
) -> Result<Vec<u8>, String> {
    let kind = parse_kind(spec, rho, total_balls)?;
    let shape = MultiIndex::new(vec![rows as u64, cols as u64]).map_err(|e| e.to_string())?;
    let gen_spec = GeneratorSpec::new(kind, shape, seed).map_err(|e| e.to_string())?;
    let field = sample_field(&gen_spec).map_err(|e| e.to_string())?;
    let scale = field.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut rgba = Vec::with_capacity(field.values().len() * 4);
    for &v in field.values() {
        rgba.extend_from_slice(&diverging_rgba(v, scale));
    }
    Ok(rgba)
}

/// Summary line for the rendered field.
#[wasm_bindgen]
pub fn field_summary_json(
    spec: &str,
    rows: u32,
    cols: u32,
    seed: u64,
    rho: f64,
    total_balls: u64,
) -> Result<String, String> {
    let kind = parse_kind(spec, rho, total_balls)?;
    let shape = MultiIndex::new(vec![rows as u64, cols as u64]).map_err(|e| e.to_string())?;
    let gen_spec = GeneratorSpec::new(kind, shape, seed).map_err(|e| e.to_string())?;
    let field = sample_field(&gen_spec).map_err(|e| e.to_string())?;
    let s = partial_sums_scan(&field);
    #[derive(Serialize)]
    struct Summary {
        cells: u64,
        total: f64,
        max_abs: f64,
        max_signed: f64,
    }
    serde_json::to_string(&Summary {
        cells: field.shape().cells(),
        total: s.total,
        max_abs: s.max_abs,
        max_signed: s.max_signed,
    })
    .map_err(|e| e.to_string())
}

/// Runs one LIL trajectory along the diagonal subsequence `[theta^k]` and
/// returns its points as JSON.
#[wasm_bindgen]
pub fn lil_trajectory_json(
    spec: &str,
    theta: f64,
    k_max: u32,
    seed: u64,
    rho: f64,
    statistic: &str,
) -> Result<String, String> {
    let kind = parse_kind(spec, rho, 100)?;
    let stat = match statistic {
        "signed" => StatisticKind::Signed,
        "abs" => StatisticKind::Abs,
        "max-abs" => StatisticKind::MaxAbs,
        other => return Err(format!("unknown statistic {other:?}")),
    };
    let config = LilConfig {
        spec: GeneratorSpec::new(kind, MultiIndex::new(vec![2, 2]).map_err(|e| e.to_string())?, seed)
            .map_err(|e| e.to_string())?,
        theta,
        k_max: k_max as u64,
        seeds: vec![seed],
        statistic: stat,
    };
    let t = run_lil_trajectory(&config, seed).map_err(|e| e.to_string())?;
    serde_json::to_string(&t).map_err(|e| e.to_string())
}

/// Runs the Kolmogorov exponential check on an iid Rademacher box and returns
/// the reports as JSON.
#[wasm_bindgen]
pub fn kolmogorov_json(side: u32, reps: u32, seed: u64) -> Result<String, String> {
    let shape = MultiIndex::new(vec![side as u64, side as u64]).map_err(|e| e.to_string())?;
    let spec = GeneratorSpec::new(GeneratorKind::IidRademacher, shape, seed).map_err(|e| e.to_string())?;
    let b2 = (side * side) as f64;
    // a grid that brackets the vacuous-to-informative transition
    let x_grid = [b2.sqrt(), 2.0 * b2.sqrt(), 3.0 * b2.sqrt()];
    let reports = verify_kolmogorov_exponential(
        &spec,
        &x_grid,
        &VerifyOpts {
            reps: reps as u64,
            threads: None,
        },
    )
    .map_err(|e| e.to_string())?;
    let json: Vec<serde_json::Value> = reports.iter().map(|r| r.to_json()).collect();
    serde_json::to_string(&json).map_err(|e| e.to_string())
}
