//! Monte Carlo SNR sweeps comparing estimators with the clairvoyant bound.
//!
//! The input design is drawn once per scenario and held fixed; every run
//! redraws the measurement noise from its own ChaCha stream, so a report is a
//! pure function of the scenario.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use faer::Mat;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::clustering::{kmeans, misclassification, KMeansConfig, LabelAssignment, ScsConfig};
use crate::crb;
use crate::error::{Error, Result};
use crate::estimation::{align_to_truth, identify, identify_with_labels, IdentifyConfig, NoiseModel};
use crate::model::{observe, signal_energy, stack, Dataset, InputSource, ModelSpec};

/// An SNR in dB; `inf` denotes noiseless data.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct SnrDb(pub f64);

impl SnrDb {
    pub const INF: SnrDb = SnrDb(f64::INFINITY);

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }
}

impl fmt::Display for SnrDb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 == f64::INFINITY {
            f.write_str("inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl std::str::FromStr for SnrDb {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "inf" | "Inf" | "infinity" => Ok(SnrDb::INF),
            t => t
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .map(SnrDb)
                .ok_or_else(|| format!("expected a number or \"inf\", got {s:?}")),
        }
    }
}

impl Serialize for SnrDb {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            s.serialize_f64(self.0)
        } else {
            s.serialize_str("inf")
        }
    }
}

impl<'de> Deserialize<'de> for SnrDb {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(SnrDb(v)),
            Raw::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// Spectral clustering on subspace, then TLS.
    Scs,
    /// TLS with the true labels.
    Cml,
    /// K-means on the raw observation columns, then TLS.
    NaiveKmeans,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Scs => "scs",
            Algorithm::Cml => "cml",
            Algorithm::NaiveKmeans => "naive_kmeans",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "scs" => Ok(Algorithm::Scs),
            "cml" => Ok(Algorithm::Cml),
            "naive_kmeans" => Ok(Algorithm::NaiveKmeans),
            other => Err(format!("unknown algorithm {other:?}")),
        }
    }
}

/// Input design of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InputDesign {
    UniformBox { lo: f64, hi: f64 },
    StratifiedBox { lo: f64, hi: f64, cells: usize, per_cell: usize },
}

impl InputDesign {
    pub fn source(&self) -> InputSource {
        match *self {
            InputDesign::UniformBox { lo, hi } => InputSource::UniformBox { lo, hi },
            InputDesign::StratifiedBox {
                lo,
                hi,
                cells,
                per_cell,
            } => InputSource::StratifiedBox {
                lo,
                hi,
                cells,
                per_cell,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoisePolicy {
    /// TLS whitened with the true variances.
    Known,
    /// Unweighted TLS.
    Unknown,
}

fn default_name() -> String {
    "scenario".into()
}
fn default_ratio() -> f64 {
    1.0
}
fn default_restarts() -> usize {
    20
}
fn default_noise() -> NoisePolicy {
    NoisePolicy::Known
}

/// A Monte Carlo experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_name")]
    pub name: String,
    /// The noise variances in the spec are ignored; each SNR sets its own.
    pub spec: ModelSpec,
    pub horizon: usize,
    pub inputs: InputDesign,
    pub snr_grid: Vec<SnrDb>,
    pub runs: usize,
    pub algorithms: Vec<Algorithm>,
    pub seed: u64,
    /// `σ_e² / σ_w²`.
    #[serde(default = "default_ratio")]
    pub variance_ratio: f64,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default = "default_noise")]
    pub noise_model: NoisePolicy,
}

impl Scenario {
    pub fn from_json(text: &str, file: &str) -> Result<Self> {
        let sc: Scenario = serde_json::from_str(text).map_err(|e| Error::Parse {
            file: file.to_string(),
            line: e.line() as u64,
            field: "scenario".into(),
            message: e.to_string(),
        })?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.snr_grid.is_empty() {
            return bad("snr_grid is empty".into());
        }
        if self.snr_grid.iter().any(|s| s.0.is_nan()) || self.snr_grid.windows(2).any(|w| !(w[0].0 < w[1].0)) {
            return bad("snr_grid must be strictly ascending".into());
        }
        if self.runs == 0 {
            return bad("runs must be at least 1".into());
        }
        if self.algorithms.is_empty() {
            return bad("no algorithms selected".into());
        }
        for (i, a) in self.algorithms.iter().enumerate() {
            if self.algorithms[..i].contains(a) {
                return bad(format!("algorithm {} listed twice", a.name()));
            }
        }
        if !(self.variance_ratio > 0.0 && self.variance_ratio.is_finite()) {
            return bad("variance_ratio must be positive".into());
        }
        if self.restarts == 0 {
            return bad("restarts must be at least 1".into());
        }
        let required = self.spec.k() * self.spec.n_d();
        if self.horizon < required {
            return Err(Error::HorizonTooSmall {
                horizon: self.horizon,
                required,
            });
        }
        Ok(())
    }

    /// Scalar bi-model jump system, 400 samples in two epochs.
    pub fn example1() -> Self {
        Scenario {
            name: "example1".into(),
            spec: ModelSpec::example1(0.0, 0.0),
            horizon: 400,
            inputs: InputDesign::UniformBox { lo: -1.0, hi: 1.0 },
            snr_grid: [20.0, 25.0, 30.0, 35.0, 40.0, 45.0, 50.0].map(SnrDb).to_vec(),
            runs: 500,
            algorithms: vec![Algorithm::Scs, Algorithm::Cml],
            seed: 1,
            variance_ratio: 1.0,
            restarts: 20,
            noise_model: NoisePolicy::Known,
        }
    }

    /// Two-input, two-output piecewise model on a chessboard, 1600 samples.
    pub fn example2() -> Self {
        Scenario {
            name: "example2".into(),
            spec: ModelSpec::example2(0.0, 0.0),
            horizon: 1600,
            inputs: InputDesign::StratifiedBox {
                lo: -1.0,
                hi: 1.0,
                cells: 4,
                per_cell: 100,
            },
            snr_grid: [20.0, 30.0, 40.0, 50.0].map(SnrDb).to_vec(),
            runs: 50,
            algorithms: vec![Algorithm::Scs, Algorithm::Cml, Algorithm::NaiveKmeans],
            seed: 2,
            variance_ratio: 1.0,
            restarts: 20,
            noise_model: NoisePolicy::Known,
        }
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "example1" => Some(Self::example1()),
            "example2" => Some(Self::example2()),
            _ => None,
        }
    }
}

/// Noise variances that put the fixed design at `target` dB, with
/// `σ_e² = ratio · σ_w²`.
pub fn snr_to_variances(target: SnrDb, spec: &ModelSpec, d: faer::MatRef<'_, f64>, labels: &[usize], ratio: f64) -> Result<(f64, f64)> {
    if target.0 == f64::INFINITY {
        return Ok((0.0, 0.0));
    }
    let energy = signal_energy(spec.thetas(), d, labels);
    let n = d.ncols() as f64;
    let weight = n * (spec.n_d() as f64 * ratio + spec.n_y() as f64);
    let sw2 = energy / (weight * 10f64.powf(target.0 / 10.0));
    if !(sw2 > 0.0 && sw2.is_finite()) || !(ratio > 0.0) {
        return Err(Error::NonPositiveVariance { target_db: target.0 });
    }
    Ok((ratio * sw2, sw2))
}

/// K-means on the stacked observation columns `z_n`.
pub fn naive_kmeans_labels(ds: &Dataset, k: usize, restarts: usize, seed: u64) -> Result<LabelAssignment> {
    let z = stack(ds);
    let points = z.z().transpose().to_owned();
    let fit = kmeans(
        points.as_ref(),
        k,
        &KMeansConfig {
            restarts,
            seed,
            ..KMeansConfig::default()
        },
    )?;
    let mut out = LabelAssignment::from_labels(fit.labels, k)?;
    out.diagnostics.objective = fit.objective;
    Ok(out)
}

/// One table row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub snr_db: SnrDb,
    pub algorithm: Algorithm,
    pub entry: String,
    pub mse: Option<f64>,
    pub bias: Option<f64>,
    pub miscls: Option<f64>,
    pub ccrb: Option<f64>,
    pub runs_ok: usize,
    pub runs_failed: usize,
    /// Standard error of `mse`.
    pub mse_se: Option<f64>,
    /// Standard error of `miscls`.
    pub miscls_se: Option<f64>,
    /// False when more than half the runs failed.
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchMetadata {
    pub scenario: String,
    pub runs: usize,
    pub seed: u64,
    pub horizon: usize,
    pub k: usize,
    pub n_d: usize,
    pub n_y: usize,
    pub variance_ratio: f64,
    pub noise_model: NoisePolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub metadata: BenchMetadata,
    pub rows: Vec<BenchRow>,
}

#[derive(Default, Clone)]
struct Acc {
    sum: f64,
    sum_sq: f64,
    sum_quad: f64,
}

impl Acc {
    fn push(&mut self, e: f64) {
        self.sum += e;
        self.sum_sq += e * e;
        self.sum_quad += e * e * e * e;
    }
}

struct Cell {
    ok: usize,
    failed: usize,
    entries: Vec<Vec<Acc>>,
    miscls: Acc,
}

fn entry_count(spec: &ModelSpec) -> usize {
    spec.n_y() * spec.n_d()
}

/// Runs the scenario.
pub fn run(sc: &Scenario) -> Result<BenchReport> {
    run_with_progress(sc, |_, _| {})
}

/// [`run`], calling `progress(snr_index, algorithm)` after each SNR cell.
pub fn run_with_progress(sc: &Scenario, mut progress: impl FnMut(usize, Algorithm)) -> Result<BenchReport> {
    sc.validate()?;
    let spec = &sc.spec;
    let (k, n_d, n_y) = (spec.k(), spec.n_d(), spec.n_y());
    let d = sc.inputs.source().synthesize(n_d, sc.horizon, sc.seed)?;
    let labels = spec.labels_for(d.as_ref())?;
    let per_entry = entry_count(spec);
    let mut rows = Vec::new();

    for (si, &snr) in sc.snr_grid.iter().enumerate() {
        let (se2, sw2) = snr_to_variances(snr, spec, d.as_ref(), &labels, sc.variance_ratio)?;
        let noisy = spec.with_noise(se2, sw2)?;
        let bound = if sw2 > 0.0 {
            crb::crb_report(spec.thetas(), d.as_ref(), &labels, se2, sw2, false)
                .ok()
                .map(|r| r.submodels.iter().map(|s| s.theta_diag()).collect::<Vec<_>>())
        } else {
            Some(vec![vec![0.0; per_entry]; k])
        };
        let noise = match sc.noise_model {
            NoisePolicy::Known => NoiseModel::Known {
                sigma_e2: se2,
                sigma_w2: sw2,
            },
            NoisePolicy::Unknown => NoiseModel::Unknown,
        };
        let mut cells: Vec<Cell> = sc
            .algorithms
            .iter()
            .map(|_| Cell {
                ok: 0,
                failed: 0,
                entries: vec![vec![Acc::default(); per_entry]; k],
                miscls: Acc::default(),
            })
            .collect();

        for r in 0..sc.runs {
            let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
            rng.set_stream(((si as u64) << 32) | r as u64);
            let ds = observe(&noisy, d.clone(), labels.clone(), &mut rng)?;
            for (ai, &alg) in sc.algorithms.iter().enumerate() {
                let cell = &mut cells[ai];
                match estimate(alg, &ds, &noisy, noise, sc) {
                    Ok((thetas, est_labels)) => {
                        cell.ok += 1;
                        for (i, th) in thetas.iter().enumerate() {
                            for e in 0..per_entry {
                                let (row, col) = (e / n_d, e % n_d);
                                cell.entries[i][e].push(th[(row, col)] - spec.thetas()[i][(row, col)]);
                            }
                        }
                        let m = misclassification(&est_labels, &labels, k);
                        cell.miscls.sum += m;
                        cell.miscls.sum_sq += m * m;
                    }
                    Err(_) => cell.failed += 1,
                }
            }
        }

        for (ai, &alg) in sc.algorithms.iter().enumerate() {
            let cell = &cells[ai];
            let ok = cell.ok as f64;
            let valid = 2 * cell.failed <= sc.runs;
            let (miscls, miscls_se) = if cell.ok > 0 {
                let mean = cell.miscls.sum / ok;
                (Some(mean), Some(standard_error(cell.miscls.sum_sq / ok, mean, ok)))
            } else {
                (None, None)
            };
            for i in 0..k {
                let mut avg = (0.0, 0.0, 0.0, 0.0);
                for e in 0..per_entry {
                    let acc = &cell.entries[i][e];
                    let ccrb = bound.as_ref().map(|b| b[i][e]);
                    let (mse, bias, mse_se) = if cell.ok > 0 {
                        let mse = acc.sum_sq / ok;
                        (Some(mse), Some(acc.sum / ok), Some(standard_error(acc.sum_quad / ok, mse, ok)))
                    } else {
                        (None, None, None)
                    };
                    avg.0 += mse.unwrap_or(f64::NAN);
                    avg.1 += bias.unwrap_or(f64::NAN);
                    avg.2 += ccrb.unwrap_or(f64::NAN);
                    avg.3 += mse_se.map_or(f64::NAN, |s| s * s);
                    rows.push(BenchRow {
                        snr_db: snr,
                        algorithm: alg,
                        entry: crb::theta_entry_name(i + 1, e / n_d, e % n_d),
                        mse,
                        bias,
                        miscls,
                        ccrb,
                        runs_ok: cell.ok,
                        runs_failed: cell.failed,
                        mse_se,
                        miscls_se,
                        valid,
                    });
                }
                if per_entry > 1 {
                    let c = per_entry as f64;
                    let finite = |v: f64| Some(v).filter(|x| x.is_finite());
                    rows.push(BenchRow {
                        snr_db: snr,
                        algorithm: alg,
                        entry: format!("theta{}[avg]", i + 1),
                        mse: finite(avg.0 / c),
                        bias: finite(avg.1 / c),
                        miscls,
                        ccrb: finite(avg.2 / c),
                        runs_ok: cell.ok,
                        runs_failed: cell.failed,
                        // entries are treated as independent here
                        mse_se: finite(avg.3.sqrt() / c),
                        miscls_se,
                        valid,
                    });
                }
            }
            progress(si, alg);
        }
    }
    Ok(BenchReport {
        metadata: BenchMetadata {
            scenario: sc.name.clone(),
            runs: sc.runs,
            seed: sc.seed,
            horizon: sc.horizon,
            k,
            n_d,
            n_y,
            variance_ratio: sc.variance_ratio,
            noise_model: sc.noise_model,
        },
        rows,
    })
}

fn standard_error(second_moment: f64, mean: f64, n: f64) -> f64 {
    if n < 2.0 {
        return f64::NAN;
    }
    let var = (second_moment - mean * mean).max(0.0) * n / (n - 1.0);
    (var / n).sqrt()
}

fn estimate(
    alg: Algorithm,
    ds: &Dataset,
    spec: &ModelSpec,
    noise: NoiseModel,
    sc: &Scenario,
) -> Result<(Vec<Mat<f64>>, Vec<usize>)> {
    let (k, n_d) = (spec.k(), spec.n_d());
    let est = match alg {
        Algorithm::Scs => {
            let cfg = IdentifyConfig {
                scs: ScsConfig {
                    kmeans: KMeansConfig {
                        restarts: sc.restarts,
                        seed: sc.seed,
                        ..KMeansConfig::default()
                    },
                    ..ScsConfig::default()
                },
                noise,
            };
            identify(ds, k, n_d, &cfg)?
        }
        Algorithm::Cml => {
            let truth = ds.truth().ok_or(Error::MissingTruth)?;
            identify_with_labels(ds, LabelAssignment::from_labels(truth.labels.clone(), k)?, n_d, noise)?
        }
        Algorithm::NaiveKmeans => {
            let labels = naive_kmeans_labels(ds, k, sc.restarts, sc.seed)?;
            identify_with_labels(ds, labels, n_d, noise)?
        }
    };
    let (_, aligned) = align_to_truth(&est, spec)?;
    Ok((aligned.thetas, aligned.labels.labels))
}

const CSV_HEADER: [&str; 9] = [
    "snr_db",
    "algorithm",
    "entry",
    "mse",
    "bias",
    "miscls",
    "ccrb",
    "runs_ok",
    "runs_failed",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl BenchReport {
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(CSV_HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.snr_db.to_string(),
                r.algorithm.name().to_string(),
                r.entry.clone(),
                opt(r.mse),
                opt(r.bias),
                opt(r.miscls),
                opt(r.ccrb),
                r.runs_ok.to_string(),
                r.runs_failed.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn csv_string(&self) -> String {
        let mut out = Vec::new();
        self.write_csv(&mut out).expect("writing to memory");
        String::from_utf8(out).expect("csv is utf-8")
    }

    /// Reads rows written by [`write_csv`](Self::write_csv). Standard errors
    /// are not part of the CSV and come back as `None`.
    pub fn read_csv<R: std::io::Read>(reader: R, file: &str) -> Result<Vec<BenchRow>> {
        let mut rdr = csv::Reader::from_reader(reader);
        let header = rdr.headers()?.clone();
        if header.iter().ne(CSV_HEADER.iter().copied()) {
            return Err(Error::Format {
                file: file.into(),
                message: format!("expected header {}", CSV_HEADER.join(",")),
            });
        }
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = i as u64 + 2;
            let err = |field: &str, message: String| Error::Parse {
                file: file.into(),
                line,
                field: field.into(),
                message,
            };
            let num = |idx: usize| -> Result<Option<f64>> {
                let s = &rec[idx];
                if s.is_empty() {
                    return Ok(None);
                }
                s.parse::<f64>()
                    .map(Some)
                    .map_err(|e| err(CSV_HEADER[idx], e.to_string()))
            };
            let count = |idx: usize| -> Result<usize> {
                rec[idx].parse().map_err(|e: std::num::ParseIntError| err(CSV_HEADER[idx], e.to_string()))
            };
            let runs_ok = count(7)?;
            let runs_failed = count(8)?;
            rows.push(BenchRow {
                snr_db: rec[0].parse().map_err(|e| err("snr_db", e))?,
                algorithm: rec[1].parse().map_err(|e| err("algorithm", e))?,
                entry: rec[2].to_string(),
                mse: num(3)?,
                bias: num(4)?,
                miscls: num(5)?,
                ccrb: num(6)?,
                runs_ok,
                runs_failed,
                mse_se: None,
                miscls_se: None,
                valid: runs_failed <= runs_ok,
            });
        }
        Ok(rows)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str, file: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            file: file.into(),
            line: e.line() as u64,
            field: "report".into(),
            message: e.to_string(),
        })
    }

    /// Distinct entry names in order of appearance.
    pub fn entries(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.entry) {
                out.push(r.entry.clone());
            }
        }
        out
    }

    pub fn rows_for(&self, alg: Algorithm, entry: &str) -> impl Iterator<Item = &BenchRow> {
        let entry = entry.to_string();
        self.rows
            .iter()
            .filter(move |r| r.algorithm == alg && r.entry == entry)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
    Svg,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "svg" => Ok(ReportFormat::Svg),
            other => Err(format!("unknown format {other:?}")),
        }
    }
}

/// File-name-safe form of an entry name: `theta1[0,1]` → `theta1_0_1`.
pub fn entry_slug(entry: &str) -> String {
    let mut s: String = entry
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect();
    while s.ends_with('_') {
        s.pop();
    }
    s
}

/// Writes the report into `dir` and returns the files written.
pub fn emit(report: &BenchReport, format: ReportFormat, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    match format {
        ReportFormat::Csv => {
            let path = dir.join("report.csv");
            fs::write(&path, report.csv_string())?;
            Ok(vec![path])
        }
        ReportFormat::Json => {
            let path = dir.join("report.json");
            fs::write(&path, report.to_json() + "\n")?;
            Ok(vec![path])
        }
        ReportFormat::Svg => {
            let mut out = Vec::new();
            for entry in report.entries() {
                let path = dir.join(format!("mse_{}.svg", entry_slug(&entry)));
                fs::write(&path, render_svg(report, &entry))?;
                out.push(path);
            }
            Ok(out)
        }
    }
}

const PALETTE: [(Algorithm, &str); 3] = [
    (Algorithm::Scs, "#1f77b4"),
    (Algorithm::Cml, "#2ca02c"),
    (Algorithm::NaiveKmeans, "#d62728"),
];

/// MSE against SNR on a log scale for one entry, one line per algorithm plus
/// the bound as a dashed line. Noiseless cells are left out.
pub fn render_svg(report: &BenchReport, entry: &str) -> String {
    let (w, h) = (640.0, 420.0);
    let (left, right, top, bottom) = (70.0, 150.0, 30.0, 50.0);
    let rows: Vec<&BenchRow> = report
        .rows
        .iter()
        .filter(|r| r.entry == entry && r.snr_db.is_finite())
        .collect();
    let xs: Vec<f64> = rows.iter().map(|r| r.snr_db.0).collect();
    let ys: Vec<f64> = rows
        .iter()
        .flat_map(|r| [r.mse, r.ccrb])
        .flatten()
        .filter(|v| *v > 0.0)
        .map(f64::log10)
        .collect();
    let (mut x0, mut x1) = min_max(&xs).unwrap_or((0.0, 1.0));
    if x1 - x0 < 1e-9 {
        x0 -= 1.0;
        x1 += 1.0;
    }
    let (y0, y1) = min_max(&ys).map_or((-1.0, 0.0), |(a, b)| (a.floor(), b.ceil().max(a.floor() + 1.0)));
    let px = |x: f64| left + (x - x0) / (x1 - x0) * (w - left - right);
    let py = |y: f64| top + (y1 - y) / (y1 - y0) * (h - top - bottom);

    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    s.push_str(&format!("<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"));
    s.push_str(&format!(
        "<text x=\"{:.1}\" y=\"18\" text-anchor=\"middle\">MSE of {}</text>\n",
        (left + w - right) / 2.0,
        xml_escape(entry)
    ));
    s.push_str(&format!(
        "<rect x=\"{left}\" y=\"{top}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"none\" stroke=\"black\"/>\n",
        w - left - right,
        h - top - bottom
    ));
    let mut e = y0 as i32;
    while e as f64 <= y1 {
        let y = py(e as f64);
        s.push_str(&format!(
            "<line x1=\"{left}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"#ddd\"/>\n<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">1e{e}</text>\n",
            w - right,
            left - 6.0,
            y + 4.0
        ));
        e += 1;
    }
    let mut ticks: Vec<f64> = xs.clone();
    ticks.sort_by(f64::total_cmp);
    ticks.dedup();
    for x in ticks {
        s.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{x}</text>\n",
            px(x),
            h - bottom + 16.0
        ));
    }
    s.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">SNR (dB)</text>\n",
        (left + w - right) / 2.0,
        h - 12.0
    ));

    let mut legend = Vec::new();
    let mut bound: Vec<(f64, f64)> = Vec::new();
    for (alg, color) in PALETTE {
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.algorithm == alg)
            .filter_map(|r| r.mse.filter(|m| *m > 0.0).map(|m| (r.snr_db.0, m.log10())))
            .collect();
        if bound.is_empty() {
            bound = rows
                .iter()
                .filter(|r| r.algorithm == alg)
                .filter_map(|r| r.ccrb.filter(|c| *c > 0.0).map(|c| (r.snr_db.0, c.log10())))
                .collect();
        }
        if rows.iter().any(|r| r.algorithm == alg) {
            s.push_str(&polyline(&pts, color, "", &px, &py));
            legend.push((alg.name(), color, ""));
        }
    }
    if !bound.is_empty() {
        s.push_str(&polyline(&bound, "black", " stroke-dasharray=\"6 4\"", &px, &py));
        legend.push(("C-CRB", "black", " stroke-dasharray=\"6 4\""));
    }
    for (i, (name, color, dash)) in legend.iter().enumerate() {
        let y = top + 14.0 + 18.0 * i as f64;
        let x = w - right + 12.0;
        s.push_str(&format!(
            "<line x1=\"{x:.1}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"{color}\" stroke-width=\"2\"{dash}/>\n<text x=\"{:.1}\" y=\"{:.1}\">{name}</text>\n",
            x + 24.0,
            x + 30.0,
            y + 4.0
        ));
    }
    s.push_str("</svg>\n");
    s
}

fn polyline(pts: &[(f64, f64)], color: &str, extra: &str, px: &dyn Fn(f64) -> f64, py: &dyn Fn(f64) -> f64) -> String {
    let coords: Vec<String> = pts
        .iter()
        .map(|&(x, y)| format!("{:.1},{:.1}", px(x), py(y)))
        .collect();
    let mut s = format!(
        "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"{extra} points=\"{}\"/>\n",
        coords.join(" ")
    );
    for c in &coords {
        let (x, y) = c.split_once(',').unwrap();
        s.push_str(&format!("<circle cx=\"{x}\" cy=\"{y}\" r=\"3\" fill=\"{color}\"/>\n"));
    }
    s
}

fn min_max(v: &[f64]) -> Option<(f64, f64)> {
    let mut it = v.iter().copied();
    let first = it.next()?;
    Some(it.fold((first, first), |(a, b), x| (a.min(x), b.max(x))))
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
