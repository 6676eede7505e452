//! Connectivity test on the per-submodel input graphs.
//!
//! A noiseless design is recovered exactly when, for every submodel, the
//! graph with weights `W_i = |D_iᵀ (D_i D_iᵀ)⁻¹ D_i|` is connected, i.e. its
//! Laplacian has a single zero eigenvalue.

use faer::{Mat, MatRef, Side};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;

/// Default relative tolerance: eigenvalues below `tol · λ_max` count as zero.
pub const DEFAULT_TOL: f64 = 1e-8;

/// Condition limit for `D_i D_iᵀ`.
const GRAM_CONDITION_LIMIT: f64 = 1e12;

/// Weights of one submodel's input graph.
#[derive(Debug, Clone)]
pub struct InputGraph {
    /// `M × M` over the nonzero input columns.
    pub w: Mat<f64>,
    /// Original column index of each vertex.
    pub kept: Vec<usize>,
}

/// Builds `|D_iᵀ (D_i D_iᵀ)⁻¹ D_i|` after dropping zero columns.
pub fn input_graph_weights(d_i: MatRef<'_, f64>) -> Result<InputGraph> {
    let kept: Vec<usize> = (0..d_i.ncols())
        .filter(|&j| (0..d_i.nrows()).any(|r| d_i[(r, j)] != 0.0))
        .collect();
    let d = linalg::select_columns(d_i, &kept);
    if kept.len() < d.nrows() {
        return Err(Error::IllConditioned {
            context: format!(
                "input Gram matrix ({} nonzero columns for {} input channels)",
                kept.len(),
                d.nrows()
            ),
            condition: f64::INFINITY,
            limit: GRAM_CONDITION_LIMIT,
        });
    }
    let gram = &d * d.transpose();
    let inv = linalg::spd_inverse(gram.as_ref(), GRAM_CONDITION_LIMIT, "input Gram matrix")?;
    let p = d.transpose() * &inv * &d;
    let m = p.nrows();
    let mut w = Mat::from_fn(m, m, |i, j| p[(i, j)].abs());
    linalg::make_symmetric(&mut w);
    Ok(InputGraph { w, kept })
}

/// Ascending eigenvalues of the unnormalized Laplacian `diag(W 1) − W`.
pub fn laplacian_spectrum(w: MatRef<'_, f64>) -> Result<Vec<f64>> {
    let n = w.nrows();
    let mut lap = Mat::from_fn(n, n, |i, j| -w[(i, j)]);
    for i in 0..n {
        lap[(i, i)] += (0..n).map(|j| w[(i, j)]).sum::<f64>();
    }
    let eig = lap
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::NoConvergence(format!("Laplacian eigendecomposition: {e:?}")))?;
    let s = eig.S().column_vector();
    Ok((0..n).map(|i| s[i]).collect())
}

/// Number of Laplacian eigenvalues below `tol · λ_max`.
pub fn zero_multiplicity(w: MatRef<'_, f64>, tol: f64) -> Result<usize> {
    Ok(count_zeros(&laplacian_spectrum(w)?, tol))
}

fn count_zeros(spectrum: &[f64], tol: f64) -> usize {
    let lmax = spectrum.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    if lmax == 0.0 {
        return spectrum.len();
    }
    spectrum.iter().filter(|&&l| l < tol * lmax).count()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubmodelReport {
    pub samples: usize,
    pub zero_columns: usize,
    pub zero_multiplicity: usize,
    /// Up to three smallest Laplacian eigenvalues, ascending.
    pub smallest_eigenvalues: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentifiabilityReport {
    pub per_submodel: Vec<SubmodelReport>,
    pub identifiable: bool,
    pub tolerance: f64,
    pub laplacian: &'static str,
}

/// Runs the connectivity test on every submodel's inputs.
pub fn check_identifiable(inputs: &[Mat<f64>], tol: f64) -> Result<IdentifiabilityReport> {
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::InvalidArgument(format!("tolerance must lie in (0, 1), got {tol}")));
    }
    let mut per_submodel = Vec::with_capacity(inputs.len());
    for (i, d) in inputs.iter().enumerate() {
        let g = input_graph_weights(d.as_ref()).map_err(|e| Error::Unidentifiable {
            cluster: i + 1,
            reason: e.to_string(),
        })?;
        let spectrum = laplacian_spectrum(g.w.as_ref())?;
        per_submodel.push(SubmodelReport {
            samples: d.ncols(),
            zero_columns: d.ncols() - g.kept.len(),
            zero_multiplicity: count_zeros(&spectrum, tol),
            smallest_eigenvalues: spectrum.iter().take(3).copied().collect(),
        });
    }
    let identifiable = per_submodel.iter().all(|s| s.zero_multiplicity == 1);
    Ok(IdentifiabilityReport {
        per_submodel,
        identifiable,
        tolerance: tol,
        laplacian: "unnormalized",
    })
}

/// Splits the columns of `d` into per-submodel blocks (0-based labels).
pub fn split_by_label(d: MatRef<'_, f64>, labels: &[usize], k: usize) -> Result<Vec<Mat<f64>>> {
    if labels.len() != d.ncols() {
        return Err(Error::InvalidArgument(format!(
            "{} labels for {} input columns",
            labels.len(),
            d.ncols()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::InvalidArgument(format!("label {} exceeds K = {k}", bad + 1)));
    }
    Ok((0..k)
        .map(|c| {
            let cols: Vec<usize> = (0..labels.len()).filter(|&j| labels[j] == c).collect();
            linalg::select_columns(d, &cols)
        })
        .collect())
}
