//! Data association by spectral clustering of the similarity graph.
//!
//! The random-walk Laplacian `L̄ = I − R⁻¹W` has a zero eigenvalue per graph
//! component, and its kernel is spanned by the component indicators. The
//! eigenvectors are obtained from the symmetric matrix
//! `L_sym = R^{1/2} L̄ R^{-1/2} = I − R^{-1/2} W R^{-1/2}` and mapped back with
//! `R^{-1/2}`, which keeps the spectrum real and the solver symmetric.

use faer::{Mat, MatRef, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::StackedObservations;
use crate::subspace::{self, RankDiagnostics, SignalSubspace, SimilarityGraph};

/// `L̄ = I − R⁻¹W` together with the vertex degrees.
#[derive(Debug, Clone)]
pub struct NormalizedLaplacian {
    pub matrix: Mat<f64>,
    /// Row sums of `W`; isolated vertices get the self-loop degree 1.
    pub degrees: Vec<f64>,
    /// Vertices whose row of `W` sums to zero.
    pub isolated: Vec<usize>,
}

/// Builds `L̄ = I − R⁻¹W`.
///
/// A vertex with zero row sum is given a unit self-loop, so its row of `R⁻¹W`
/// is its own indicator and its row of `L̄` is zero. Such vertices are listed
/// in `isolated`.
pub fn normalized_laplacian(graph: &SimilarityGraph) -> NormalizedLaplacian {
    let w = graph.w.as_ref();
    let n = w.nrows();
    let mut degrees = Vec::with_capacity(n);
    let mut isolated = Vec::new();
    for i in 0..n {
        let r: f64 = (0..n).map(|j| w[(i, j)]).sum();
        if r > 0.0 {
            degrees.push(r);
        } else {
            degrees.push(1.0);
            isolated.push(i);
        }
    }
    let mut matrix = Mat::zeros(n, n);
    for i in 0..n {
        if isolated.binary_search(&i).is_ok() {
            continue;
        }
        let inv = 1.0 / degrees[i];
        for j in 0..n {
            let delta = if i == j { 1.0 } else { 0.0 };
            matrix[(i, j)] = delta - w[(i, j)] * inv;
        }
    }
    NormalizedLaplacian {
        matrix,
        degrees,
        isolated,
    }
}

/// Rows of the bottom-`K` eigenvectors of `L̄`.
#[derive(Debug, Clone)]
pub struct SpectralEmbedding {
    /// `N × K`; row `n` embeds sample `n`.
    pub coords: Mat<f64>,
    /// The `K` smallest eigenvalues, ascending.
    pub eigenvalues: Vec<f64>,
    /// Eigenvalue `K + 1`, when the graph has more than `K` vertices.
    pub next_eigenvalue: Option<f64>,
    /// Number of eigenvalues below `zero_tol · λ_max`.
    pub kernel_dim: usize,
}

impl SpectralEmbedding {
    /// `λ_{K+1} − λ_K`.
    pub fn eigengap(&self) -> Option<f64> {
        self.next_eigenvalue
            .map(|next| next - self.eigenvalues.last().copied().unwrap_or(0.0))
    }
}

/// Default relative tolerance for counting zero Laplacian eigenvalues.
pub const DEFAULT_ZERO_TOL: f64 = 1e-9;

/// Embeds the vertices with the eigenvectors of the `k` smallest eigenvalues
/// of `L̄`. Columns follow the sign convention of the signal subspace.
pub fn spectral_embed(lap: &NormalizedLaplacian, k: usize) -> Result<SpectralEmbedding> {
    spectral_embed_with(lap, k, DEFAULT_ZERO_TOL)
}

pub fn spectral_embed_with(lap: &NormalizedLaplacian, k: usize, zero_tol: f64) -> Result<SpectralEmbedding> {
    let n = lap.matrix.nrows();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "cannot embed {n} vertices into {k} dimensions"
        )));
    }
    let sqrt_deg: Vec<f64> = lap.degrees.iter().map(|d| d.sqrt()).collect();
    let l = lap.matrix.as_ref();
    // L_sym = R^{1/2} L̄ R^{-1/2}; average with the transpose to remove round-off asymmetry.
    let sym = Mat::from_fn(n, n, |i, j| {
        0.5 * (sqrt_deg[i] * l[(i, j)] / sqrt_deg[j] + sqrt_deg[j] * l[(j, i)] / sqrt_deg[i])
    });
    let evd = sym
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::NoConvergence(format!("Laplacian eigendecomposition: {e:?}")))?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let eigenvalues: Vec<f64> = (0..k).map(|i| s[i]).collect();
    let next_eigenvalue = (k < n).then(|| s[k]);
    let lambda_max = s[n - 1].abs().max(f64::MIN_POSITIVE);
    let kernel_dim = (0..n).filter(|&i| s[i] < zero_tol * lambda_max).count();

    let mut coords = Mat::from_fn(n, k, |i, j| u[(i, j)] / sqrt_deg[i]);
    linalg::fix_column_signs(&mut coords);
    Ok(SpectralEmbedding {
        coords,
        eigenvalues,
        next_eigenvalue,
        kernel_dim,
    })
}

/// Lloyd's algorithm settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KMeansConfig {
    pub restarts: usize,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            restarts: 20,
            max_iter: 300,
            seed: 0,
        }
    }
}

/// Outcome of [`kmeans`].
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    /// 0-based, renumbered by first appearance.
    pub labels: Vec<usize>,
    pub objective: f64,
    /// Index of the restart that won.
    pub restart: usize,
}

const MAX_REPAIRS: usize = 1000;

/// K-means on the rows of `points`, keeping the restart with the lowest
/// within-cluster sum of squares (earliest restart on ties).
///
/// Initial centroids use k-means++ seeding from the restart's own ChaCha
/// stream. Assignment ties go to the lower cluster index. A cluster left empty
/// by an assignment step receives the point farthest from its own centroid
/// (lowest index on ties) taken from a cluster with at least two members.
pub fn kmeans(points: MatRef<'_, f64>, k: usize, cfg: &KMeansConfig) -> Result<KMeansFit> {
    let n = points.nrows();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "cannot form {k} clusters from {n} points"
        )));
    }
    if cfg.restarts == 0 {
        return Err(Error::InvalidArgument("k-means needs at least one restart".into()));
    }
    let mut best: Option<KMeansFit> = None;
    for restart in 0..cfg.restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(restart as u64);
        let (labels, objective) = lloyd(points, k, cfg.max_iter, &mut rng)?;
        if best.as_ref().is_none_or(|b| objective < b.objective) {
            best = Some(KMeansFit {
                labels: canonical_labels(&labels, k),
                objective,
                restart,
            });
        }
    }
    Ok(best.expect("at least one restart"))
}

fn sq_dist(points: MatRef<'_, f64>, i: usize, c: &[f64]) -> f64 {
    c.iter()
        .enumerate()
        .map(|(j, cj)| {
            let t = points[(i, j)] - cj;
            t * t
        })
        .sum()
}

fn init_plus_plus<R: Rng>(points: MatRef<'_, f64>, k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let (n, dim) = (points.nrows(), points.ncols());
    let row = |i: usize| (0..dim).map(|j| points[(i, j)]).collect::<Vec<_>>();
    let mut centroids = vec![row(rng.random_range(0..n))];
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(points, i, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = row(pick);
        for (i, v) in d2.iter_mut().enumerate() {
            *v = v.min(sq_dist(points, i, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn lloyd<R: Rng>(points: MatRef<'_, f64>, k: usize, max_iter: usize, rng: &mut R) -> Result<(Vec<usize>, f64)> {
    let (n, dim) = (points.nrows(), points.ncols());
    let mut centroids = init_plus_plus(points, k, rng);
    let mut labels = vec![usize::MAX; n];
    let mut repairs = 0;
    for _ in 0..max_iter {
        let mut next = vec![0usize; n];
        for (i, slot) in next.iter_mut().enumerate() {
            let mut best = f64::INFINITY;
            for (c, centroid) in centroids.iter().enumerate() {
                let d = sq_dist(points, i, centroid);
                if d < best {
                    best = d;
                    *slot = c;
                }
            }
        }
        centroids = means(points, &next, k, dim);
        while let Some(empty) = (0..k).find(|&c| !next.contains(&c)) {
            repairs += 1;
            if repairs > MAX_REPAIRS {
                return Err(Error::EmptyCluster {
                    cluster: empty + 1,
                    retries: MAX_REPAIRS,
                });
            }
            let sizes = crate::model::label_counts(&next, k);
            let mut far = None;
            let mut far_d = -1.0;
            for i in 0..n {
                if sizes[next[i]] < 2 {
                    continue;
                }
                let d = sq_dist(points, i, &centroids[next[i]]);
                if d > far_d {
                    far_d = d;
                    far = Some(i);
                }
            }
            let Some(i) = far else {
                return Err(Error::EmptyCluster {
                    cluster: empty + 1,
                    retries: repairs,
                });
            };
            next[i] = empty;
            centroids = means(points, &next, k, dim);
        }
        let changed = next != labels;
        labels = next;
        if !changed {
            break;
        }
    }
    let objective = (0..n).map(|i| sq_dist(points, i, &centroids[labels[i]])).sum();
    Ok((labels, objective))
}

fn means(points: MatRef<'_, f64>, labels: &[usize], k: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        for j in 0..dim {
            sums[l][j] += points[(i, j)];
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        if c > 0 {
            s.iter_mut().for_each(|v| *v /= c as f64);
        }
    }
    sums
}

/// Renumbers labels so that clusters appear in order of their first sample.
pub fn canonical_labels(labels: &[usize], k: usize) -> Vec<usize> {
    let mut map = vec![usize::MAX; k.max(labels.iter().max().map_or(0, |m| m + 1))];
    let mut next = 0;
    labels
        .iter()
        .map(|&l| {
            if map[l] == usize::MAX {
                map[l] = next;
                next += 1;
            }
            map[l]
        })
        .collect()
}

/// Diagnostics gathered along the clustering pipeline.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ClusterDiagnostics {
    pub sizes: Vec<usize>,
    pub objective: f64,
    /// Smallest `K` Laplacian eigenvalues, ascending.
    pub eigenvalues: Vec<f64>,
    /// `λ_{K+1} − λ_K`.
    pub eigengap: Option<f64>,
    pub kernel_dim: Option<usize>,
    /// Samples with zero similarity to every sample, including themselves.
    pub isolated: Vec<usize>,
    pub singular_values: Vec<f64>,
    pub rank: Option<RankDiagnostics>,
}

/// Sample-to-submodel assignment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelAssignment {
    /// 0-based submodel index per sample.
    pub labels: Vec<usize>,
    pub k: usize,
    pub diagnostics: ClusterDiagnostics,
}

impl LabelAssignment {
    /// Wraps known labels, e.g. the ground truth.
    pub fn from_labels(labels: Vec<usize>, k: usize) -> Result<Self> {
        if labels.iter().any(|&l| l >= k) {
            return Err(Error::InvalidArgument(format!("label outside 1..={k}")));
        }
        let sizes = crate::model::label_counts(&labels, k);
        Ok(Self {
            labels,
            k,
            diagnostics: ClusterDiagnostics {
                sizes,
                ..Default::default()
            },
        })
    }

    /// Sample indices per cluster, in time order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }

    /// Relabels cluster `c` as `mapping[c]`.
    pub fn relabeled(&self, mapping: &[usize]) -> Self {
        let mut out = self.clone();
        out.labels = self.labels.iter().map(|&l| mapping[l]).collect();
        out.diagnostics.sizes = crate::model::label_counts(&out.labels, self.k);
        out
    }
}

/// Clusters the embedding rows into `k` groups.
pub fn cluster(emb: &SpectralEmbedding, k: usize, restarts: usize, seed: u64) -> Result<LabelAssignment> {
    let cfg = KMeansConfig {
        restarts,
        seed,
        ..KMeansConfig::default()
    };
    cluster_with(emb.coords.as_ref(), k, &cfg)
}

fn cluster_with(points: MatRef<'_, f64>, k: usize, cfg: &KMeansConfig) -> Result<LabelAssignment> {
    let fit = kmeans(points, k, cfg)?;
    let mut out = LabelAssignment::from_labels(fit.labels, k)?;
    out.diagnostics.objective = fit.objective;
    Ok(out)
}

/// Settings for the spectral-clustering-on-subspace pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScsConfig {
    pub kmeans: KMeansConfig,
    /// Signal-subspace gap ratio that triggers a rank warning.
    pub gap_threshold: f64,
    /// Relative tolerance for zero Laplacian eigenvalues.
    pub zero_tol: f64,
    /// Scale embedding rows to unit length before K-means.
    pub row_normalize: bool,
}

impl Default for ScsConfig {
    fn default() -> Self {
        Self {
            kmeans: KMeansConfig::default(),
            gap_threshold: subspace::DEFAULT_GAP_THRESHOLD,
            zero_tol: DEFAULT_ZERO_TOL,
            row_normalize: false,
        }
    }
}

/// Every intermediate of the SCS labelling pipeline.
#[derive(Debug, Clone)]
pub struct ScsArtifacts {
    pub subspace: SignalSubspace,
    pub graph: SimilarityGraph,
    pub embedding: SpectralEmbedding,
    pub labels: LabelAssignment,
}

/// Signal subspace → similarity → normalized Laplacian → spectral embedding →
/// K-means, returning every intermediate.
pub fn scs_pipeline(z: &StackedObservations, k: usize, n_d: usize, cfg: &ScsConfig) -> Result<ScsArtifacts> {
    if z.n_x() != n_d {
        return Err(Error::InvalidArgument(format!(
            "the data has {} input channels but N_d = {n_d}",
            z.n_x()
        )));
    }
    let subspace = subspace::signal_subspace_with(z.z(), k * n_d, cfg.gap_threshold)?;
    let graph = subspace::similarity(&subspace);
    let lap = normalized_laplacian(&graph);
    let embedding = spectral_embed_with(&lap, k, cfg.zero_tol)?;
    let mut points = embedding.coords.clone();
    if cfg.row_normalize {
        for i in 0..points.nrows() {
            let norm = (0..k).map(|j| points[(i, j)].powi(2)).sum::<f64>().sqrt();
            if norm > 0.0 {
                (0..k).for_each(|j| points[(i, j)] /= norm);
            }
        }
    }
    let mut labels = cluster_with(points.as_ref(), k, &cfg.kmeans)?;
    let diag = &mut labels.diagnostics;
    diag.eigenvalues = embedding.eigenvalues.clone();
    diag.eigengap = embedding.eigengap();
    diag.kernel_dim = Some(embedding.kernel_dim);
    diag.isolated = lap.isolated;
    diag.singular_values = subspace.singular_values.clone();
    diag.rank = Some(subspace.diagnostics.clone());
    Ok(ScsArtifacts {
        subspace,
        graph,
        embedding,
        labels,
    })
}

/// Labels the samples of `z` into `k` submodels.
pub fn scs_labels(z: &StackedObservations, k: usize, n_d: usize, cfg: &ScsConfig) -> Result<LabelAssignment> {
    scs_pipeline(z, k, n_d, cfg).map(|a| a.labels)
}

/// Fraction of samples whose label differs from `truth` under the best
/// relabelling of the clusters.
pub fn misclassification(labels: &[usize], truth: &[usize], k: usize) -> f64 {
    assert_eq!(labels.len(), truth.len());
    if labels.is_empty() {
        return 0.0;
    }
    let mut confusion = vec![vec![0usize; k]; k];
    for (&a, &b) in labels.iter().zip(truth) {
        confusion[a][b] += 1;
    }
    let mut best = 0;
    crate::estimation::for_each_permutation(k, |perm| {
        let agree: usize = (0..k).map(|a| confusion[a][perm[a]]).sum();
        best = best.max(agree);
    });
    1.0 - best as f64 / labels.len() as f64
}
