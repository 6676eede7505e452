//! Jump and piecewise linear model descriptions, seeded synthetic data, and the
//! observation-level quantities (stacked data, signal-to-noise ratio).
//!
//! Submodel labels are 0-based inside the library. The file formats (JSON model
//! documents and dataset CSVs) use 1-based labels.

use faer::{Mat, MatRef};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// ChaCha stream reserved for input synthesis.
const INPUT_STREAM: u64 = 0;
/// ChaCha stream reserved for measurement noise.
const NOISE_STREAM: u64 = 1;

/// Maps an input vector to the submodel that is active for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Partition {
    /// Submodel 1 where `normal · d < offset`, submodel 2 elsewhere.
    HalfSpace { normal: Vec<f64>, offset: f64 },
    /// Alternating grid over the box `[lo, hi]^N_d` with `cells` cells per
    /// axis. Cells whose index sum is even belong to submodel 1.
    Chessboard {
        lo: f64,
        hi: f64,
        #[serde(default = "default_cells")]
        cells: usize,
    },
}

fn default_cells() -> usize {
    4
}

impl Partition {
    /// The 4x4 chessboard over `[-1, 1]²`.
    pub fn chessboard() -> Self {
        Partition::Chessboard {
            lo: -1.0,
            hi: 1.0,
            cells: 4,
        }
    }

    pub fn regions(&self) -> usize {
        2
    }

    fn validate(&self, n_d: usize) -> Result<()> {
        match self {
            Partition::HalfSpace { normal, offset } => {
                if normal.len() != n_d {
                    return Err(Error::InvalidModel(format!(
                        "half-space normal has {} entries, expected N_d = {n_d}",
                        normal.len()
                    )));
                }
                if !offset.is_finite() || normal.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidModel("half-space must be finite".into()));
                }
            }
            Partition::Chessboard { lo, hi, cells } => {
                if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                    return Err(Error::InvalidModel(format!(
                        "chessboard box [{lo}, {hi}] is empty"
                    )));
                }
                if *cells < 2 {
                    return Err(Error::InvalidModel(
                        "chessboard needs at least 2 cells per axis".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Returns the 0-based submodel index for `d`, or `None` when `d` is
    /// outside the partition's domain.
    pub fn classify(&self, d: &[f64]) -> Option<usize> {
        match self {
            Partition::HalfSpace { normal, offset } => {
                let s: f64 = normal.iter().zip(d).map(|(a, b)| a * b).sum();
                Some(usize::from(s >= *offset))
            }
            Partition::Chessboard { lo, hi, cells } => {
                let mut parity = 0usize;
                for &v in d {
                    if !(v >= *lo && v <= *hi) {
                        return None;
                    }
                    let c = ((v - lo) / (hi - lo) * *cells as f64).floor() as usize;
                    parity += c.min(cells - 1);
                }
                Some(parity % 2)
            }
        }
    }
}

/// How the active submodel is chosen at each time index.
#[derive(Debug, Clone, PartialEq)]
pub enum SwitchingRule {
    /// Exogenous switching: the active submodel for every time index.
    EpochDriven { labels: Vec<usize> },
    /// Switching triggered by the input entering a partition cell.
    InputDriven { partition: Partition },
}

impl SwitchingRule {
    /// Consecutive blocks: the first `sizes[0]` samples from submodel 1, and so on.
    pub fn block_sequential(sizes: &[usize]) -> Self {
        let labels = sizes
            .iter()
            .enumerate()
            .flat_map(|(k, &n)| std::iter::repeat_n(k, n))
            .collect();
        SwitchingRule::EpochDriven { labels }
    }
}

/// Ground-truth hybrid model: `K` submodels `y = Θ_i d` observed through
/// `x = d + e`, `y = Θ_i d + w`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    k: usize,
    n_d: usize,
    n_y: usize,
    thetas: Vec<Mat<f64>>,
    sigma_e2: f64,
    sigma_w2: f64,
    switching: SwitchingRule,
}

impl ModelSpec {
    pub fn new(
        thetas: Vec<Mat<f64>>,
        sigma_e2: f64,
        sigma_w2: f64,
        switching: SwitchingRule,
    ) -> Result<Self> {
        let k = thetas.len();
        if k == 0 {
            return Err(Error::InvalidModel("at least one submodel is required".into()));
        }
        let n_y = thetas[0].nrows();
        let n_d = thetas[0].ncols();
        if n_y == 0 || n_d == 0 {
            return Err(Error::InvalidModel("submodel matrices must be non-empty".into()));
        }
        for (i, t) in thetas.iter().enumerate() {
            if t.nrows() != n_y || t.ncols() != n_d {
                return Err(Error::InvalidModel(format!(
                    "theta {} is {}x{}, expected {n_y}x{n_d}",
                    i + 1,
                    t.nrows(),
                    t.ncols()
                )));
            }
            if (0..n_y).any(|r| (0..n_d).any(|c| !t[(r, c)].is_finite())) {
                return Err(Error::InvalidModel(format!("theta {} is not finite", i + 1)));
            }
        }
        if n_d + n_y < k * n_d {
            return Err(Error::InvalidModel(format!(
                "rank condition violated: N_d + N_y = {} < K * N_d = {}",
                n_d + n_y,
                k * n_d
            )));
        }
        for i in 0..k {
            for j in (i + 1)..k {
                if thetas[i] == thetas[j] {
                    return Err(Error::InvalidModel(format!(
                        "submodels {} and {} are identical",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        for (name, v) in [("sigma_e2", sigma_e2), ("sigma_w2", sigma_w2)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidModel(format!("{name} must be a finite value >= 0")));
            }
        }
        match &switching {
            SwitchingRule::EpochDriven { labels } => {
                if let Some(bad) = labels.iter().find(|&&l| l >= k) {
                    return Err(Error::InvalidModel(format!(
                        "label {} outside 1..={k}",
                        bad + 1
                    )));
                }
                check_counts(labels, k, n_d)?;
            }
            SwitchingRule::InputDriven { partition } => {
                partition.validate(n_d)?;
                if partition.regions() != k {
                    return Err(Error::InvalidModel(format!(
                        "partition has {} regions but K = {k}",
                        partition.regions()
                    )));
                }
            }
        }
        Ok(Self {
            k,
            n_d,
            n_y,
            thetas,
            sigma_e2,
            sigma_w2,
            switching,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }
    pub fn n_d(&self) -> usize {
        self.n_d
    }
    pub fn n_y(&self) -> usize {
        self.n_y
    }
    pub fn thetas(&self) -> &[Mat<f64>] {
        &self.thetas
    }
    pub fn sigma_e2(&self) -> f64 {
        self.sigma_e2
    }
    pub fn sigma_w2(&self) -> f64 {
        self.sigma_w2
    }
    pub fn switching(&self) -> &SwitchingRule {
        &self.switching
    }

    /// Same model with different noise variances.
    pub fn with_noise(&self, sigma_e2: f64, sigma_w2: f64) -> Result<Self> {
        Self::new(self.thetas.clone(), sigma_e2, sigma_w2, self.switching.clone())
    }

    /// The bi-model scalar jump linear system `θ₁ = 0.7`, `θ₂ = 0.8`, 200 samples each.
    pub fn example1(sigma_e2: f64, sigma_w2: f64) -> Self {
        Self::new(
            vec![Mat::from_fn(1, 1, |_, _| 0.7), Mat::from_fn(1, 1, |_, _| 0.8)],
            sigma_e2,
            sigma_w2,
            SwitchingRule::block_sequential(&[200, 200]),
        )
        .expect("example 1 is a valid model")
    }

    /// The 2x2 MIMO piecewise linear model on the 4x4 chessboard over `[-1, 1]²`.
    pub fn example2(sigma_e2: f64, sigma_w2: f64) -> Self {
        let t1 = linalg::from_rows(&[vec![0.7, 0.4], vec![0.5, 0.3]]).unwrap();
        let t2 = linalg::from_rows(&[vec![0.8, 0.9], vec![0.2, 0.5]]).unwrap();
        Self::new(
            vec![t1, t2],
            sigma_e2,
            sigma_w2,
            SwitchingRule::InputDriven {
                partition: Partition::chessboard(),
            },
        )
        .expect("example 2 is a valid model")
    }

    /// Labels implied by the switching rule for the input matrix `d`.
    pub fn labels_for(&self, d: MatRef<'_, f64>) -> Result<Vec<usize>> {
        let n = d.ncols();
        let labels = match &self.switching {
            SwitchingRule::EpochDriven { labels } => {
                if labels.len() != n {
                    return Err(Error::InvalidArgument(format!(
                        "epoch labels cover {} samples but the horizon is {n}",
                        labels.len()
                    )));
                }
                labels.clone()
            }
            SwitchingRule::InputDriven { partition } => {
                let mut out = Vec::with_capacity(n);
                let mut col = vec![0.0; self.n_d];
                for j in 0..n {
                    for (i, c) in col.iter_mut().enumerate() {
                        *c = d[(i, j)];
                    }
                    out.push(
                        partition
                            .classify(&col)
                            .ok_or(Error::InputOutsideDomain { index: j })?,
                    );
                }
                out
            }
        };
        check_counts(&labels, self.k, self.n_d)?;
        Ok(labels)
    }
}

fn check_counts(labels: &[usize], k: usize, n_d: usize) -> Result<()> {
    if labels.len() < k * n_d {
        return Err(Error::HorizonTooSmall {
            horizon: labels.len(),
            required: k * n_d,
        });
    }
    let counts = label_counts(labels, k);
    for (submodel, &count) in counts.iter().enumerate() {
        if count < n_d {
            return Err(Error::InsufficientSamples {
                submodel: submodel + 1,
                count,
                n_d,
            });
        }
    }
    Ok(())
}

pub(crate) fn label_counts(labels: &[usize], k: usize) -> Vec<usize> {
    let mut counts = vec![0; k];
    for &l in labels {
        counts[l] += 1;
    }
    counts
}

/// Where the noiseless input sequence comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum InputSource {
    /// An explicit `N_d × N` matrix.
    Fixed(Mat<f64>),
    /// I.i.d. uniform samples on the box `[lo, hi]^N_d`.
    UniformBox { lo: f64, hi: f64 },
    /// `per_cell` uniform samples in each cell of a `cells^N_d` grid over
    /// `[lo, hi]^N_d`, cell after cell. Balances a chessboard partition exactly.
    StratifiedBox {
        lo: f64,
        hi: f64,
        cells: usize,
        per_cell: usize,
    },
}

impl InputSource {
    /// Draws the `n_d × horizon` input matrix using `seed`.
    pub fn synthesize(&self, n_d: usize, horizon: usize, seed: u64) -> Result<Mat<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(INPUT_STREAM);
        match self {
            InputSource::Fixed(d) => {
                if d.nrows() != n_d || d.ncols() != horizon {
                    return Err(Error::InvalidArgument(format!(
                        "fixed input is {}x{}, expected {n_d}x{horizon}",
                        d.nrows(),
                        d.ncols()
                    )));
                }
                Ok(d.clone())
            }
            InputSource::UniformBox { lo, hi } => {
                check_box(*lo, *hi)?;
                let mut d = Mat::zeros(n_d, horizon);
                for j in 0..horizon {
                    for i in 0..n_d {
                        d[(i, j)] = rng.random_range(*lo..=*hi);
                    }
                }
                Ok(d)
            }
            InputSource::StratifiedBox {
                lo,
                hi,
                cells,
                per_cell,
            } => {
                check_box(*lo, *hi)?;
                let total_cells = cells
                    .checked_pow(n_d as u32)
                    .ok_or_else(|| Error::InvalidArgument("grid too large".into()))?;
                if total_cells * per_cell != horizon {
                    return Err(Error::InvalidArgument(format!(
                        "stratified design yields {} samples, horizon is {horizon}",
                        total_cells * per_cell
                    )));
                }
                let width = (hi - lo) / *cells as f64;
                let mut d = Mat::zeros(n_d, horizon);
                let mut j = 0;
                for cell in 0..total_cells {
                    for _ in 0..*per_cell {
                        let mut idx = cell;
                        for i in 0..n_d {
                            let c = idx % cells;
                            idx /= cells;
                            let u: f64 = rng.random();
                            d[(i, j)] = lo + width * (c as f64 + u);
                        }
                        j += 1;
                    }
                }
                Ok(d)
            }
        }
    }
}

fn check_box(lo: f64, hi: f64) -> Result<()> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidArgument(format!("input box [{lo}, {hi}] is empty")));
    }
    Ok(())
}

/// Noiseless inputs and their submodel labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub d: Mat<f64>,
    pub labels: Vec<usize>,
}

/// Observed input/output sequences, optionally with the ground truth that
/// produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Mat<f64>,
    y: Mat<f64>,
    truth: Option<Truth>,
}

impl Dataset {
    pub fn new(x: Mat<f64>, y: Mat<f64>, truth: Option<Truth>) -> Result<Self> {
        let n = x.ncols();
        if y.ncols() != n {
            return Err(Error::InvalidArgument(format!(
                "X has {n} columns but Y has {}",
                y.ncols()
            )));
        }
        if let Some(t) = &truth {
            if t.d.ncols() != n || t.labels.len() != n {
                return Err(Error::InvalidArgument(
                    "ground truth does not match the observation count".into(),
                ));
            }
            if t.d.nrows() != x.nrows() {
                return Err(Error::InvalidArgument(
                    "ground-truth inputs and X differ in dimension".into(),
                ));
            }
        }
        Ok(Self { x, y, truth })
    }

    pub fn x(&self) -> MatRef<'_, f64> {
        self.x.as_ref()
    }
    pub fn y(&self) -> MatRef<'_, f64> {
        self.y.as_ref()
    }
    pub fn truth(&self) -> Option<&Truth> {
        self.truth.as_ref()
    }
    pub fn len(&self) -> usize {
        self.x.ncols()
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    pub fn n_x(&self) -> usize {
        self.x.nrows()
    }
    pub fn n_y(&self) -> usize {
        self.y.nrows()
    }

    /// Keeps the selected columns, in the given order.
    pub fn select(&self, cols: &[usize]) -> Self {
        let truth = self.truth.as_ref().map(|t| Truth {
            d: linalg::select_columns(t.d.as_ref(), cols),
            labels: cols.iter().map(|&c| t.labels[c]).collect(),
        });
        Self {
            x: linalg::select_columns(self.x.as_ref(), cols),
            y: linalg::select_columns(self.y.as_ref(), cols),
            truth,
        }
    }

    /// Multiplies observations and true inputs by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let s = |m: &Mat<f64>| Mat::from_fn(m.nrows(), m.ncols(), |i, j| c * m[(i, j)]);
        Self {
            x: s(&self.x),
            y: s(&self.y),
            truth: self.truth.as_ref().map(|t| Truth {
                d: s(&t.d),
                labels: t.labels.clone(),
            }),
        }
    }
}

/// Column-wise stacking `z_n = [x_n; y_n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedObservations {
    z: Mat<f64>,
    n_x: usize,
}

impl StackedObservations {
    pub fn z(&self) -> MatRef<'_, f64> {
        self.z.as_ref()
    }
    pub fn n_x(&self) -> usize {
        self.n_x
    }
    pub fn n_y(&self) -> usize {
        self.z.nrows() - self.n_x
    }
    pub fn len(&self) -> usize {
        self.z.ncols()
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Wraps an already stacked matrix whose top `n_x` rows are inputs.
    pub fn from_matrix(z: Mat<f64>, n_x: usize) -> Self {
        assert!(n_x <= z.nrows());
        Self { z, n_x }
    }

    /// Same observations with columns reordered so that new column `j` is old
    /// column `order[j]`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self {
            z: linalg::select_columns(self.z.as_ref(), order),
            n_x: self.n_x,
        }
    }
}

pub fn stack(ds: &Dataset) -> StackedObservations {
    let n_x = ds.n_x();
    let z = Mat::from_fn(n_x + ds.n_y(), ds.len(), |i, j| {
        if i < n_x {
            ds.x[(i, j)]
        } else {
            ds.y[(i - n_x, j)]
        }
    });
    StackedObservations { z, n_x }
}

/// Generates a dataset: inputs from `input` (seeded by `seed`), labels from the
/// switching rule, and Gaussian measurement noise from an independent stream of
/// the same seed.
pub fn generate(spec: &ModelSpec, horizon: usize, input: &InputSource, seed: u64) -> Result<Dataset> {
    let required = spec.k() * spec.n_d();
    if horizon < required {
        return Err(Error::HorizonTooSmall { horizon, required });
    }
    let d = input.synthesize(spec.n_d(), horizon, seed)?;
    let labels = spec.labels_for(d.as_ref())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(NOISE_STREAM);
    observe(spec, d, labels, &mut rng)
}

/// Observes a fixed input design through the model, drawing the noise from `rng`.
///
/// Noise is drawn sample by sample: `e_n` first, then `w_n`.
pub fn observe<R: Rng>(
    spec: &ModelSpec,
    d: Mat<f64>,
    labels: Vec<usize>,
    rng: &mut R,
) -> Result<Dataset> {
    let (n_d, n_y, n) = (spec.n_d(), spec.n_y(), d.ncols());
    if d.nrows() != n_d || labels.len() != n {
        return Err(Error::InvalidArgument(
            "input design does not match the model dimensions".into(),
        ));
    }
    if labels.iter().any(|&l| l >= spec.k()) {
        return Err(Error::InvalidArgument("label outside the submodel range".into()));
    }
    let se = spec.sigma_e2().sqrt();
    let sw = spec.sigma_w2().sqrt();
    let mut x = Mat::zeros(n_d, n);
    let mut y = Mat::zeros(n_y, n);
    for j in 0..n {
        let theta = &spec.thetas()[labels[j]];
        for i in 0..n_d {
            let e: f64 = rng.sample(StandardNormal);
            x[(i, j)] = d[(i, j)] + se * e;
        }
        for r in 0..n_y {
            let w: f64 = rng.sample(StandardNormal);
            let clean: f64 = (0..n_d).map(|c| theta[(r, c)] * d[(c, j)]).sum();
            y[(r, j)] = clean + sw * w;
        }
    }
    Dataset::new(x, y, Some(Truth { d, labels }))
}

/// `Σ_n ‖Θ_{label(n)} d_n‖² + ‖d_n‖²`.
pub fn signal_energy(thetas: &[Mat<f64>], d: MatRef<'_, f64>, labels: &[usize]) -> f64 {
    let mut total = 0.0;
    for j in 0..d.ncols() {
        let theta = &thetas[labels[j]];
        for r in 0..theta.nrows() {
            let v: f64 = (0..d.nrows()).map(|c| theta[(r, c)] * d[(c, j)]).sum();
            total += v * v;
        }
        total += (0..d.nrows()).map(|c| d[(c, j)] * d[(c, j)]).sum::<f64>();
    }
    total
}

/// Signal-to-noise ratio in dB of a dataset generated from `spec`.
///
/// Returns `f64::INFINITY` when both noise variances are zero.
pub fn snr_db(ds: &Dataset, spec: &ModelSpec) -> Result<f64> {
    let truth = ds.truth().ok_or(Error::MissingTruth)?;
    let signal = signal_energy(spec.thetas(), truth.d.as_ref(), &truth.labels);
    let noise = ds.len() as f64
        * (ds.n_x() as f64 * spec.sigma_e2() + ds.n_y() as f64 * spec.sigma_w2());
    if noise == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (signal / noise).log10())
}

// ---------------------------------------------------------------------------
// JSON model documents

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelSpecDoc {
    k: usize,
    n_d: usize,
    n_y: usize,
    thetas: Vec<Vec<Vec<f64>>>,
    sigma_e2: f64,
    sigma_w2: f64,
    switching: SwitchingDoc,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
enum SwitchingDoc {
    EpochDriven(EpochDoc),
    InputDriven(Partition),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EpochDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    blocks: Option<Vec<usize>>,
}

impl Serialize for ModelSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let switching = match &self.switching {
            SwitchingRule::EpochDriven { labels } => SwitchingDoc::EpochDriven(EpochDoc {
                labels: Some(labels.iter().map(|l| l + 1).collect()),
                blocks: None,
            }),
            SwitchingRule::InputDriven { partition } => SwitchingDoc::InputDriven(partition.clone()),
        };
        ModelSpecDoc {
            k: self.k,
            n_d: self.n_d,
            n_y: self.n_y,
            thetas: self.thetas.iter().map(|t| linalg::to_rows(t.as_ref())).collect(),
            sigma_e2: self.sigma_e2,
            sigma_w2: self.sigma_w2,
            switching,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ModelSpec {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let doc = ModelSpecDoc::deserialize(de)?;
        let mut thetas = Vec::with_capacity(doc.thetas.len());
        for (i, rows) in doc.thetas.iter().enumerate() {
            let m = linalg::from_rows(rows)
                .ok_or_else(|| D::Error::custom(format!("theta {} has ragged rows", i + 1)))?;
            if m.nrows() != doc.n_y || m.ncols() != doc.n_d {
                return Err(D::Error::custom(format!(
                    "theta {} is {}x{}, expected n_y x n_d = {}x{}",
                    i + 1,
                    m.nrows(),
                    m.ncols(),
                    doc.n_y,
                    doc.n_d
                )));
            }
            thetas.push(m);
        }
        if thetas.len() != doc.k {
            return Err(D::Error::custom(format!(
                "k = {} but {} thetas were given",
                doc.k,
                thetas.len()
            )));
        }
        let switching = match doc.switching {
            SwitchingDoc::EpochDriven(EpochDoc {
                labels: Some(labels),
                blocks: None,
            }) => {
                if labels.contains(&0) {
                    return Err(D::Error::custom("epoch labels are 1-based"));
                }
                SwitchingRule::EpochDriven {
                    labels: labels.into_iter().map(|l| l - 1).collect(),
                }
            }
            SwitchingDoc::EpochDriven(EpochDoc {
                labels: None,
                blocks: Some(blocks),
            }) => SwitchingRule::block_sequential(&blocks),
            SwitchingDoc::EpochDriven(_) => {
                return Err(D::Error::custom(
                    "epoch_driven needs exactly one of `labels` or `blocks`",
                ))
            }
            SwitchingDoc::InputDriven(partition) => SwitchingRule::InputDriven { partition },
        };
        ModelSpec::new(thetas, doc.sigma_e2, doc.sigma_w2, switching).map_err(D::Error::custom)
    }
}

impl ModelSpec {
    pub fn from_json(text: &str, file: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            file: file.to_string(),
            line: e.line() as u64,
            field: "model".into(),
            message: e.to_string(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }
}

// ---------------------------------------------------------------------------
// CSV tables

/// A numeric CSV table with named columns, keeping source line numbers for
/// error messages.
#[derive(Debug, Clone)]
pub struct CsvTable {
    file: String,
    headers: Vec<String>,
    rows: Vec<(u64, Vec<f64>)>,
}

impl CsvTable {
    pub fn read<R: std::io::Read>(reader: R, file: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers: Vec<String> = rdr
            .headers()
            .map_err(|e| csv_error(file, e))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| csv_error(file, e))?;
            let line = rec.position().map_or(0, |p| p.line());
            let mut vals = Vec::with_capacity(headers.len());
            for (field, raw) in headers.iter().zip(rec.iter()) {
                let v: f64 = raw.parse().map_err(|_| Error::Parse {
                    file: file.to_string(),
                    line,
                    field: field.clone(),
                    message: format!("`{raw}` is not a number"),
                })?;
                vals.push(v);
            }
            rows.push((line, vals));
        }
        Ok(Self {
            file: file.to_string(),
            headers,
            rows,
        })
    }

    fn column(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    /// Columns `prefix_1, prefix_2, ...` in order; stops at the first gap.
    fn indexed_columns(&self, prefix: &str) -> Vec<usize> {
        (1..)
            .map_while(|i| self.column(&format!("{prefix}_{i}")))
            .collect()
    }

    fn matrix(&self, cols: &[usize]) -> Mat<f64> {
        Mat::from_fn(cols.len(), self.rows.len(), |i, j| self.rows[j].1[cols[i]])
    }

    fn labels(&self, col: usize) -> Result<Vec<usize>> {
        self.rows
            .iter()
            .map(|(line, vals)| {
                let v = vals[col];
                if v >= 1.0 && v.fract() == 0.0 && v < u32::MAX as f64 {
                    Ok(v as usize - 1)
                } else {
                    Err(Error::Parse {
                        file: self.file.clone(),
                        line: *line,
                        field: "label".into(),
                        message: format!("`{v}` is not a 1-based submodel label"),
                    })
                }
            })
            .collect()
    }

    fn missing(&self, what: &str) -> Error {
        Error::Parse {
            file: self.file.clone(),
            line: 1,
            field: what.to_string(),
            message: "required column is missing from the header".into(),
        }
    }

    /// Input columns `d_*` and the `label` column.
    pub fn labelled_inputs(&self) -> Result<(Mat<f64>, Vec<usize>)> {
        let d_cols = self.indexed_columns("d");
        if d_cols.is_empty() {
            return Err(self.missing("d_1"));
        }
        let label = self.column("label").ok_or_else(|| self.missing("label"))?;
        Ok((self.matrix(&d_cols), self.labels(label)?))
    }
}

fn csv_error(file: &str, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::Parse {
        file: file.to_string(),
        line,
        field: "<record>".into(),
        message: e.to_string(),
    }
}

impl Dataset {
    /// Writes `t, x_*, y_*` and, with ground truth, `d_*, label`.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.n_x()).map(|i| format!("x_{i}")));
        header.extend((1..=self.n_y()).map(|i| format!("y_{i}")));
        if self.truth.is_some() {
            header.extend((1..=self.n_x()).map(|i| format!("d_{i}")));
            header.push("label".into());
        }
        w.write_record(&header)?;
        for j in 0..self.len() {
            let mut rec = vec![(j + 1).to_string()];
            rec.extend((0..self.n_x()).map(|i| self.x[(i, j)].to_string()));
            rec.extend((0..self.n_y()).map(|i| self.y[(i, j)].to_string()));
            if let Some(t) = &self.truth {
                rec.extend((0..self.n_x()).map(|i| t.d[(i, j)].to_string()));
                rec.push((t.labels[j] + 1).to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(reader: R, file: &str) -> Result<Self> {
        let table = CsvTable::read(reader, file)?;
        let x_cols = table.indexed_columns("x");
        let y_cols = table.indexed_columns("y");
        if x_cols.is_empty() {
            return Err(table.missing("x_1"));
        }
        if y_cols.is_empty() {
            return Err(table.missing("y_1"));
        }
        let x = table.matrix(&x_cols);
        let y = table.matrix(&y_cols);
        let d_cols = table.indexed_columns("d");
        let truth = match (d_cols.is_empty(), table.column("label")) {
            (true, None) => None,
            (false, Some(label)) => {
                if d_cols.len() != x_cols.len() {
                    return Err(Error::Format {
                        file: file.to_string(),
                        message: format!(
                            "{} d_* columns but {} x_* columns",
                            d_cols.len(),
                            x_cols.len()
                        ),
                    });
                }
                Some(Truth {
                    d: table.matrix(&d_cols),
                    labels: table.labels(label)?,
                })
            }
            _ => {
                return Err(Error::Format {
                    file: file.to_string(),
                    message: "ground truth needs both d_* and label columns".into(),
                })
            }
        };
        Dataset::new(x, y, truth).map_err(|e| Error::Format {
            file: file.to_string(),
            message: e.to_string(),
        })
    }
}
