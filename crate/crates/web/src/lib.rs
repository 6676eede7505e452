//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Every export takes plain numbers and returns a JSON string. The
//! computations live in ordinary functions so they can be tested natively.

use faer::{Mat, MatRef};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use scsid::bench::{self, InputDesign, Scenario, SnrDb};
use scsid::crb::{crb_report, theta_entry_name};
use scsid::estimation::{align_to_truth, identify_detailed, IdentifyConfig, NoiseModel};
use scsid::linalg::to_rows;
use scsid::model::generate;

/// Samples per grid cell for the chessboard example in the browser.
const WEB_PER_CELL: usize = 25;
/// Side of the similarity heat map sent to the page.
const HEATMAP_MAX: usize = 200;

/// A built-in scenario resized for interactive use.
pub fn scenario(example: &str) -> Result<Scenario, String> {
    let mut sc = Scenario::builtin(example).ok_or_else(|| format!("unknown example {example:?}"))?;
    if let InputDesign::StratifiedBox { cells, per_cell, .. } = &mut sc.inputs {
        *per_cell = WEB_PER_CELL;
        sc.horizon = cells.pow(sc.spec.n_d() as u32) * WEB_PER_CELL;
    }
    Ok(sc)
}

fn parse_snr(snr_db: f64) -> SnrDb {
    if snr_db.is_nan() || snr_db >= 200.0 {
        SnrDb(f64::INFINITY)
    } else {
        SnrDb(snr_db)
    }
}

fn round(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let scale = 10f64.powi(6 - x.abs().log10().ceil() as i32);
    (x * scale).round() / scale
}

fn rounded_rows(m: MatRef<'_, f64>) -> Vec<Vec<f64>> {
    to_rows(m)
        .into_iter()
        .map(|r| r.into_iter().map(round).collect())
        .collect()
}

/// `W` restricted to evenly spaced samples, ordered by true label.
fn heatmap(w: MatRef<'_, f64>, labels: &[usize]) -> (Vec<usize>, Mat<f64>) {
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by_key(|&i| (labels[i], i));
    let n = order.len();
    let m = n.min(HEATMAP_MAX);
    let picked: Vec<usize> = (0..m).map(|i| order[i * n / m]).collect();
    let sub = Mat::from_fn(m, m, |i, j| w[(picked[i], picked[j])]);
    (picked, sub)
}

/// One noisy realization of `example` at `snr_db`, identified with SCS.
pub fn identify_at(example: &str, snr_db: f64, seed: u64) -> Result<Value, String> {
    let sc = scenario(example)?;
    let spec = &sc.spec;
    let source = sc.inputs.source();
    let d = source.synthesize(spec.n_d(), sc.horizon, seed).map_err(|e| e.to_string())?;
    let labels = spec.labels_for(d.as_ref()).map_err(|e| e.to_string())?;
    let snr = parse_snr(snr_db);
    let (se2, sw2) = bench::snr_to_variances(snr, spec, d.as_ref(), &labels, sc.variance_ratio).map_err(|e| e.to_string())?;
    let noisy = spec.with_noise(se2, sw2).map_err(|e| e.to_string())?;
    let ds = generate(&noisy, sc.horizon, &source, seed).map_err(|e| e.to_string())?;
    let cfg = IdentifyConfig {
        noise: NoiseModel::Known {
            sigma_e2: se2,
            sigma_w2: sw2,
        },
        ..IdentifyConfig::default()
    };
    let (est, art) = identify_detailed(&ds, spec.k(), spec.n_d(), &cfg).map_err(|e| e.to_string())?;
    let (_, aligned) = align_to_truth(&est, spec).map_err(|e| e.to_string())?;
    let miscls = scsid::clustering::misclassification(&aligned.labels.labels, &labels, spec.k());
    let (picked, w) = heatmap(art.graph.w.as_ref(), &labels);
    Ok(json!({
        "example": example,
        "snr_db": snr.to_string(),
        "sigma_e2": se2,
        "sigma_w2": sw2,
        "n": ds.len(),
        "k": spec.k(),
        "x": rounded_rows(ds.x()),
        "y": rounded_rows(ds.y()),
        "labels_true": labels,
        "labels_est": aligned.labels.labels,
        "misclassification": miscls,
        "thetas_true": spec.thetas().iter().map(|t| to_rows(t.as_ref())).collect::<Vec<_>>(),
        "thetas_est": aligned.thetas.iter().map(|t| to_rows(t.as_ref())).collect::<Vec<_>>(),
        "heatmap": rounded_rows(w.as_ref()),
        "heatmap_labels": picked.iter().map(|&i| labels[i]).collect::<Vec<_>>(),
        "embedding": rounded_rows(art.embedding.coords.as_ref()),
        "eigenvalues": art.embedding.eigenvalues,
        "singular_values": art.subspace.singular_values,
    }))
}

/// Clairvoyant bound on every parameter entry over an SNR grid.
pub fn crb_curve(example: &str, snr_lo: f64, snr_hi: f64, step: f64) -> Result<Value, String> {
    if !(step > 0.0) || !(snr_hi >= snr_lo) || (snr_hi - snr_lo) / step > 1000.0 {
        return Err("need step > 0, hi >= lo and at most 1000 points".into());
    }
    let sc = scenario(example)?;
    let spec = &sc.spec;
    let d = sc.inputs.source().synthesize(spec.n_d(), sc.horizon, sc.seed).map_err(|e| e.to_string())?;
    let labels = spec.labels_for(d.as_ref()).map_err(|e| e.to_string())?;
    let mut entries = Vec::new();
    for i in 0..spec.k() {
        for r in 0..spec.n_y() {
            for c in 0..spec.n_d() {
                entries.push(theta_entry_name(i + 1, r, c));
            }
        }
    }
    let count = ((snr_hi - snr_lo) / step + 1e-9).floor() as usize + 1;
    let mut snrs = Vec::with_capacity(count);
    let mut bounds = vec![Vec::with_capacity(count); entries.len()];
    for s in 0..count {
        let snr = snr_lo + s as f64 * step;
        let (se2, sw2) = bench::snr_to_variances(SnrDb(snr), spec, d.as_ref(), &labels, sc.variance_ratio).map_err(|e| e.to_string())?;
        let report = crb_report(spec.thetas(), d.as_ref(), &labels, se2, sw2, false).map_err(|e| e.to_string())?;
        let diag = report.submodels.iter().flat_map(|b| b.theta_diag());
        for (slot, v) in bounds.iter_mut().zip(diag) {
            slot.push(v);
        }
        snrs.push(snr);
    }
    Ok(json!({ "example": example, "snr_db": snrs, "entries": entries, "bounds": bounds }))
}

/// A small Monte Carlo sweep over the example's SNR grid.
pub fn sweep(example: &str, runs: usize, seed: u64) -> Result<Value, String> {
    if runs == 0 || runs > 1000 {
        return Err("runs must be between 1 and 1000".into());
    }
    let sc = Scenario {
        runs,
        seed,
        ..scenario(example)?
    };
    let report = bench::run(&sc).map_err(|e| e.to_string())?;
    serde_json::to_value(&report).map_err(|e| e.to_string())
}

fn finish(v: Result<Value, String>) -> Result<String, JsError> {
    v.map(|v| v.to_string()).map_err(|e| JsError::new(&e))
}

/// JSON for [`identify_at`]. An SNR of 200 dB or more means noiseless.
#[wasm_bindgen(js_name = identifyAt)]
pub fn identify_at_js(example: &str, snr_db: f64, seed: u32) -> Result<String, JsError> {
    finish(identify_at(example, snr_db, seed as u64))
}

#[wasm_bindgen(js_name = crbCurve)]
pub fn crb_curve_js(example: &str, snr_lo: f64, snr_hi: f64, step: f64) -> Result<String, JsError> {
    finish(crb_curve(example, snr_lo, snr_hi, step))
}

#[wasm_bindgen(js_name = sweep)]
pub fn sweep_js(example: &str, runs: u32, seed: u32) -> Result<String, JsError> {
    finish(sweep(example, runs as usize, seed as u64))
}
