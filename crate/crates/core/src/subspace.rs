//! Signal subspace of the stacked observations and the similarity graph built
//! from it.
//!
//! For noiseless data `Z = A(Θ) D P` with `A` of full column rank, the top
//! `K·N_d` right singular vectors span the row space of the block-diagonal
//! input matrix. The projector `V Vᵀ` is then `Pᵀ diag(Λ₁, …, Λ_K) P` with
//! `Λ_i = D_iᵀ (D_i D_iᵀ)⁻¹ D_i`, so `|V Vᵀ|` has no edges between samples of
//! different submodels.

use faer::{Mat, MatRef};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::StackedObservations;

/// Default threshold on `σ_r / σ_{r+1}` below which a rank warning is raised.
pub const DEFAULT_GAP_THRESHOLD: f64 = 2.0;

/// Top-`r` right singular vectors of `Z` plus the full singular spectrum.
#[derive(Debug, Clone)]
pub struct SignalSubspace {
    /// `N × r`, orthonormal columns.
    pub v: Mat<f64>,
    /// `(N_x + N_y) × r` left singular vectors matching `v`.
    pub q: Mat<f64>,
    /// All `min(N_x + N_y, N)` singular values, descending.
    pub singular_values: Vec<f64>,
    pub diagnostics: RankDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankDiagnostics {
    pub rank: usize,
    /// `σ_r / σ_{r+1}`; `None` when `r` uses the full spectrum.
    pub gap_ratio: Option<f64>,
    pub threshold: f64,
    /// Set when the gap falls below `threshold` or `σ_r` vanishes.
    pub rank_deficient: bool,
}

impl SignalSubspace {
    pub fn rank(&self) -> usize {
        self.v.ncols()
    }
}

/// Extracts the rank-`r` signal subspace.
///
/// Columns follow descending singular values (solver order for exact ties)
/// and each column's largest-magnitude entry is made nonnegative.
pub fn signal_subspace(z: &StackedObservations, r: usize) -> Result<SignalSubspace> {
    signal_subspace_with(z.z(), r, DEFAULT_GAP_THRESHOLD)
}

pub fn signal_subspace_with(z: MatRef<'_, f64>, r: usize, gap_threshold: f64) -> Result<SignalSubspace> {
    let (m, n) = (z.nrows(), z.ncols());
    if r == 0 || r > m.min(n) {
        return Err(Error::RankTooLarge {
            rank: r,
            rows: m,
            cols: n,
        });
    }
    let svd = z
        .thin_svd()
        .map_err(|e| Error::NoConvergence(format!("SVD of the observation matrix: {e:?}")))?;
    let s = svd.S().column_vector();
    let singular_values: Vec<f64> = (0..m.min(n)).map(|i| s[i]).collect();

    let u = svd.U();
    let vfull = svd.V();
    let mut v = Mat::from_fn(n, r, |i, j| vfull[(i, j)]);
    let mut q = Mat::from_fn(m, r, |i, j| u[(i, j)]);
    // q flips with v so that Z ≈ Q Σ Vᵀ keeps holding.
    let flips = linalg::column_sign_flips(v.as_ref());
    linalg::negate_columns(&mut v, &flips);
    linalg::negate_columns(&mut q, &flips);

    let sigma_r = singular_values[r - 1];
    let gap_ratio = singular_values.get(r).map(|&next| {
        if next > 0.0 {
            sigma_r / next
        } else {
            f64::INFINITY
        }
    });
    let negligible = sigma_r <= singular_values[0] * 1e-12;
    let rank_deficient = negligible || gap_ratio.is_some_and(|g| g < gap_threshold);

    Ok(SignalSubspace {
        v,
        q,
        singular_values,
        diagnostics: RankDiagnostics {
            rank: r,
            gap_ratio,
            threshold: gap_threshold,
            rank_deficient,
        },
    })
}

/// Edge weights of the data-association graph.
#[derive(Debug, Clone)]
pub struct SimilarityGraph {
    /// `N × N`, symmetric, nonnegative.
    pub w: Mat<f64>,
}

impl SimilarityGraph {
    pub fn n(&self) -> usize {
        self.w.nrows()
    }
}

/// `W = |V Vᵀ|`, with the lower triangle mirrored from the upper one.
pub fn similarity(subspace: &SignalSubspace) -> SimilarityGraph {
    let v = subspace.v.as_ref();
    let p = v * v.transpose();
    let n = p.nrows();
    let mut w = Mat::from_fn(n, n, |i, j| p[(i, j)].abs());
    linalg::make_symmetric(&mut w);
    SimilarityGraph { w }
}
