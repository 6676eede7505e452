//! Per-submodel total least squares and the full identification pipeline.

use faer::{Mat, MatRef};
use serde::Serialize;

use crate::clustering::{scs_pipeline, LabelAssignment, ScsArtifacts, ScsConfig};
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{stack, Dataset, ModelSpec};

/// Largest condition number accepted for the input block of the TLS subspace.
pub const UX_CONDITION_LIMIT: f64 = 1e8;

/// What is known about the measurement noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum NoiseModel {
    /// Unweighted TLS.
    Unknown,
    /// Output rows are rescaled to the input noise level before the fit and
    /// the estimate is scaled back afterwards.
    Known { sigma_e2: f64, sigma_w2: f64 },
}

/// Result of fitting one submodel.
#[derive(Debug, Clone, PartialEq)]
pub struct TlsFit {
    /// `N_y × N_d`.
    pub theta: Mat<f64>,
    /// `N_d × N_i` denoised inputs.
    pub d_hat: Mat<f64>,
    /// Energy of the discarded singular values (in whitened units).
    pub residual: f64,
}

/// Fits `z_i = [I; Θ] D_i + noise` by rank-`N_d` truncation of the SVD of the
/// stacked cluster data `z_i` (top `N_d` rows are inputs).
///
/// With `Z_i ≈ U₁ Σ₁ V₁ᵀ` and `U₁ = [U_x; U_y]`, the estimates are
/// `Θ̂ = U_y U_x⁻¹` and `D̂ = U_x Σ₁ V₁ᵀ`.
pub fn tls_submodel(z_i: MatRef<'_, f64>, n_d: usize, noise: NoiseModel) -> Result<TlsFit> {
    let (m, n_i) = (z_i.nrows(), z_i.ncols());
    if m <= n_d {
        return Err(Error::InvalidArgument(format!(
            "stacked data has {m} rows, need more than N_d = {n_d}"
        )));
    }
    if n_i < n_d {
        return Err(Error::InsufficientSamples {
            submodel: 0,
            count: n_i,
            n_d,
        });
    }
    let scale = match noise {
        NoiseModel::Known { sigma_e2, sigma_w2 } if sigma_e2 > 0.0 && sigma_w2 > 0.0 => {
            (sigma_e2 / sigma_w2).sqrt()
        }
        _ => 1.0,
    };
    let z = Mat::from_fn(m, n_i, |i, j| {
        if i < n_d {
            z_i[(i, j)]
        } else {
            z_i[(i, j)] * scale
        }
    });
    let svd = z
        .thin_svd()
        .map_err(|e| Error::NoConvergence(format!("TLS SVD: {e:?}")))?;
    let s = svd.S().column_vector();
    let u = svd.U();
    let v = svd.V();
    let rank = m.min(n_i);

    let ux = Mat::from_fn(n_d, n_d, |i, j| u[(i, j)]);
    let ux_inv = linalg::inverse_checked(ux.as_ref(), UX_CONDITION_LIMIT, "input block of the TLS subspace")?;
    let uy = Mat::from_fn(m - n_d, n_d, |i, j| u[(n_d + i, j)]);
    let theta_w = &uy * &ux_inv;
    let theta = Mat::from_fn(m - n_d, n_d, |i, j| theta_w[(i, j)] / scale);

    let us = Mat::from_fn(n_d, n_d, |i, j| ux[(i, j)] * s[j]);
    let vt = Mat::from_fn(n_d, n_i, |i, j| v[(j, i)]);
    let d_hat = &us * &vt;
    let residual = (n_d..rank).map(|k| s[k] * s[k]).sum();
    Ok(TlsFit {
        theta,
        d_hat,
        residual,
    })
}

/// Identified hybrid model.
#[derive(Debug, Clone)]
pub struct ModelEstimate {
    /// One `N_y × N_d` matrix per cluster.
    pub thetas: Vec<Mat<f64>>,
    /// `N_d × N`, in the original time order.
    pub d_hat: Mat<f64>,
    pub labels: LabelAssignment,
    pub residuals: Vec<f64>,
}

impl ModelEstimate {
    pub fn k(&self) -> usize {
        self.thetas.len()
    }
}

/// Settings for [`identify`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdentifyConfig {
    pub scs: ScsConfig,
    pub noise: NoiseModel,
}

impl Default for IdentifyConfig {
    fn default() -> Self {
        Self {
            scs: ScsConfig::default(),
            noise: NoiseModel::Unknown,
        }
    }
}

/// Labels the data by spectral clustering on subspace, then fits each cluster
/// by total least squares.
pub fn identify(ds: &Dataset, k: usize, n_d: usize, cfg: &IdentifyConfig) -> Result<ModelEstimate> {
    identify_detailed(ds, k, n_d, cfg).map(|(est, _)| est)
}

/// [`identify`], also returning the clustering intermediates.
pub fn identify_detailed(
    ds: &Dataset,
    k: usize,
    n_d: usize,
    cfg: &IdentifyConfig,
) -> Result<(ModelEstimate, ScsArtifacts)> {
    check_size(ds, k, n_d)?;
    let artifacts = scs_pipeline(&stack(ds), k, n_d, &cfg.scs)?;
    let est = identify_with_labels(ds, artifacts.labels.clone(), n_d, cfg.noise)?;
    Ok((est, artifacts))
}

fn check_size(ds: &Dataset, k: usize, n_d: usize) -> Result<()> {
    if k == 0 || n_d == 0 {
        return Err(Error::InvalidArgument("K and N_d must be positive".into()));
    }
    if ds.n_x() != n_d {
        return Err(Error::InvalidArgument(format!(
            "the data has {} input channels but N_d = {n_d}",
            ds.n_x()
        )));
    }
    if ds.len() < k * n_d {
        return Err(Error::HorizonTooSmall {
            horizon: ds.len(),
            required: k * n_d,
        });
    }
    if ds.n_x() + ds.n_y() < k * n_d {
        return Err(Error::InvalidArgument(format!(
            "rank condition violated: N_x + N_y = {} < K * N_d = {}",
            ds.n_x() + ds.n_y(),
            k * n_d
        )));
    }
    Ok(())
}

/// Fits every cluster of `labels` by TLS and scatters the denoised inputs
/// back to time order.
pub fn identify_with_labels(ds: &Dataset, labels: LabelAssignment, n_d: usize, noise: NoiseModel) -> Result<ModelEstimate> {
    let z = stack(ds);
    let members = labels.members();
    let mut thetas = Vec::with_capacity(labels.k);
    let mut residuals = Vec::with_capacity(labels.k);
    let mut d_hat = Mat::zeros(n_d, ds.len());
    for (cluster, cols) in members.iter().enumerate() {
        let z_i = linalg::select_columns(z.z(), cols);
        let fit = tls_submodel(z_i.as_ref(), n_d, noise).map_err(|e| match e {
            Error::InsufficientSamples { count, n_d, .. } => Error::InsufficientSamples {
                submodel: cluster + 1,
                count,
                n_d,
            },
            other => Error::Unidentifiable {
                cluster: cluster + 1,
                reason: other.to_string(),
            },
        })?;
        for (j, &col) in cols.iter().enumerate() {
            for i in 0..n_d {
                d_hat[(i, col)] = fit.d_hat[(i, j)];
            }
        }
        thetas.push(fit.theta);
        residuals.push(fit.residual);
    }
    Ok(ModelEstimate {
        thetas,
        d_hat,
        labels,
        residuals,
    })
}

/// Maximum-likelihood fit with the true labels and the true noise ratio.
pub fn clairvoyant_ml(ds: &Dataset, spec: &ModelSpec) -> Result<ModelEstimate> {
    let truth = ds.truth().ok_or(Error::MissingTruth)?;
    let labels = LabelAssignment::from_labels(truth.labels.clone(), spec.k())?;
    identify_with_labels(
        ds,
        labels,
        spec.n_d(),
        NoiseModel::Known {
            sigma_e2: spec.sigma_e2(),
            sigma_w2: spec.sigma_w2(),
        },
    )
}

/// Largest `K` for which [`align_to_truth`] enumerates permutations.
pub const MAX_ALIGN_K: usize = 8;

/// Calls `f` with every permutation of `0..k` in lexicographic order.
pub fn for_each_permutation(k: usize, mut f: impl FnMut(&[usize])) {
    let mut perm: Vec<usize> = (0..k).collect();
    loop {
        f(&perm);
        // next lexicographic permutation
        let Some(i) = (1..k).rev().find(|&i| perm[i - 1] < perm[i]) else {
            return;
        };
        let j = (i..k).rev().find(|&j| perm[j] > perm[i - 1]).unwrap();
        perm.swap(i - 1, j);
        perm[i..].reverse();
    }
}

/// Matches estimated submodels to the truth.
///
/// Returns `π` with `π[i]` the estimated submodel paired with true submodel
/// `i`, chosen to minimise `Σ_i ‖Θ̂_{π(i)} − Θ_i‖²_F` (lexicographically first
/// on ties), and the estimate reordered so that submodel `i` matches truth `i`.
pub fn align_to_truth(est: &ModelEstimate, spec: &ModelSpec) -> Result<(Vec<usize>, ModelEstimate)> {
    let k = spec.k();
    if est.k() != k {
        return Err(Error::InvalidArgument(format!(
            "estimate has {} submodels, truth has {k}",
            est.k()
        )));
    }
    if k > MAX_ALIGN_K {
        return Err(Error::InvalidArgument(format!(
            "exhaustive alignment supports K <= {MAX_ALIGN_K}"
        )));
    }
    let cost = |a: &Mat<f64>, b: &Mat<f64>| -> f64 {
        if a.nrows() != b.nrows() || a.ncols() != b.ncols() {
            return f64::INFINITY;
        }
        let mut s = 0.0;
        for j in 0..a.ncols() {
            for i in 0..a.nrows() {
                s += (a[(i, j)] - b[(i, j)]).powi(2);
            }
        }
        s
    };
    let pair: Vec<Vec<f64>> = (0..k)
        .map(|i| (0..k).map(|j| cost(&est.thetas[j], &spec.thetas()[i])).collect())
        .collect();
    let mut best = (f64::INFINITY, (0..k).collect::<Vec<_>>());
    for_each_permutation(k, |perm| {
        let c: f64 = (0..k).map(|i| pair[i][perm[i]]).sum();
        if c < best.0 {
            best = (c, perm.to_vec());
        }
    });
    let perm = best.1;
    let mut inverse = vec![0; k];
    for (i, &p) in perm.iter().enumerate() {
        inverse[p] = i;
    }
    let aligned = ModelEstimate {
        thetas: perm.iter().map(|&p| est.thetas[p].clone()).collect(),
        d_hat: est.d_hat.clone(),
        labels: est.labels.relabeled(&inverse),
        residuals: perm.iter().map(|&p| est.residuals[p]).collect(),
    };
    Ok((perm, aligned))
}
