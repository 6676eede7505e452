use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use faer::{Mat, MatRef};
use serde::Serialize;

use scsid::bench::{self, ReportFormat, Scenario};
use scsid::clustering::{misclassification, ClusterDiagnostics, KMeansConfig, ScsConfig, DEFAULT_ZERO_TOL};
use scsid::crb;
use scsid::estimation::{align_to_truth, identify, identify_detailed, IdentifyConfig, NoiseModel};
use scsid::identifiability::{self, DEFAULT_TOL};
use scsid::linalg::to_rows;
use scsid::model::{generate, CsvTable, Dataset, InputSource, ModelSpec};
use scsid::subspace::DEFAULT_GAP_THRESHOLD;
use scsid::Error;

/// Identification of jump and piecewise linear models by spectral clustering
/// on the signal subspace.
#[derive(Parser)]
#[command(name = "scsid", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a dataset from a model spec.
    Generate(GenerateArgs),
    /// Cluster a dataset into submodels and fit each one.
    Identify(IdentifyArgs),
    /// Test whether a noiseless labelled input design is identifiable.
    CheckIdent(CheckIdentArgs),
    /// Clairvoyant Cramér-Rao bound for a model and a labelled input design.
    Crb(CrbArgs),
    /// Run a Monte Carlo SNR sweep.
    Bench(BenchArgs),
    /// Run a built-in example end to end.
    Demo(DemoArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum InputKind {
    /// I.i.d. uniform on [lo, hi]^N_d.
    Uniform,
    /// Equal counts in each cell of a cells^N_d grid.
    Stratified,
}

#[derive(Args)]
struct GenerateArgs {
    /// Model spec (JSON).
    #[arg(long)]
    spec: PathBuf,
    /// Number of samples.
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = InputKind::Uniform)]
    inputs: InputKind,
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    lo: f64,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    hi: f64,
    /// Grid cells per axis for stratified inputs.
    #[arg(long, default_value_t = 4)]
    cells: usize,
    /// Output CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ClusterFlags {
    /// K-means restarts.
    #[arg(long, default_value_t = 20)]
    restarts: usize,
    /// K-means seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Singular value gap ratio below which a rank warning is raised.
    #[arg(long, default_value_t = DEFAULT_GAP_THRESHOLD)]
    gap_threshold: f64,
    /// Relative tolerance for zero Laplacian eigenvalues.
    #[arg(long, default_value_t = DEFAULT_ZERO_TOL)]
    zero_tol: f64,
    /// Scale embedding rows to unit length before K-means.
    #[arg(long)]
    row_normalize: bool,
}

impl ClusterFlags {
    fn config(&self) -> ScsConfig {
        ScsConfig {
            kmeans: KMeansConfig {
                restarts: self.restarts,
                seed: self.seed,
                ..KMeansConfig::default()
            },
            gap_threshold: self.gap_threshold,
            zero_tol: self.zero_tol,
            row_normalize: self.row_normalize,
        }
    }
}

#[derive(Args)]
struct IdentifyArgs {
    /// Dataset CSV with columns x_*, y_* (and optionally d_*, label).
    #[arg(long)]
    data: PathBuf,
    /// Number of submodels.
    #[arg(long)]
    k: usize,
    /// Input dimension.
    #[arg(long)]
    nd: usize,
    /// Estimate JSON; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Input noise variance, for whitened TLS (needs --sigma-w2).
    #[arg(long, requires = "sigma_w2")]
    sigma_e2: Option<f64>,
    /// Output noise variance, for whitened TLS (needs --sigma-e2).
    #[arg(long, requires = "sigma_e2")]
    sigma_w2: Option<f64>,
    /// Write the similarity matrix, embedding and singular values here.
    #[arg(long)]
    dump_graph: Option<PathBuf>,
    #[command(flatten)]
    cluster: ClusterFlags,
}

#[derive(Args)]
struct CheckIdentArgs {
    /// CSV with columns d_* and a 1-based label.
    #[arg(long)]
    inputs: PathBuf,
    /// Number of submodels; the largest label when omitted.
    #[arg(long)]
    k: Option<usize>,
    /// Laplacian eigenvalues below tol * lambda_max count as zero.
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum TableFormat {
    Csv,
    Json,
}

#[derive(Args)]
struct CrbArgs {
    /// Model spec (JSON); its noise variances are used.
    #[arg(long)]
    spec: PathBuf,
    /// CSV with columns d_* and a 1-based label.
    #[arg(long)]
    inputs: PathBuf,
    /// Also bound every input sample.
    #[arg(long)]
    with_inputs: bool,
    #[arg(long, value_enum, default_value_t = TableFormat::Csv)]
    format: TableFormat,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Scenario JSON, or `example1` / `example2` for a built-in one.
    #[arg(long)]
    scenario: String,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated subset of csv, json, svg.
    #[arg(long, value_delimiter = ',', default_value = "csv,json,svg")]
    format: Vec<String>,
    /// Override the number of runs.
    #[arg(long)]
    runs: Option<usize>,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Example {
    Example1,
    Example2,
}

#[derive(Args)]
struct DemoArgs {
    #[arg(value_enum)]
    example: Example,
    /// Identify one noiseless dataset and print the recovered parameters.
    #[arg(long)]
    noiseless: bool,
    /// Override the number of Monte Carlo runs.
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory for the sweep; `demo-<example>` when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// 1 for failures of the method on valid input, 2 for bad input.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidModel(_)
        | Error::InvalidArgument(_)
        | Error::HorizonTooSmall { .. }
        | Error::Parse { .. }
        | Error::Format { .. }
        | Error::Io(_)
        | Error::Json(_)
        | Error::Csv(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Identify(a) => cmd_identify(a),
        Command::CheckIdent(a) => cmd_check_ident(a),
        Command::Crb(a) => cmd_crb(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Demo(a) => cmd_demo(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

type CmdResult = Result<(), Error>;

fn read_text(path: &Path) -> Result<String, Error> {
    fs::read_to_string(path).map_err(|e| Error::Format {
        file: path.display().to_string(),
        message: e.to_string(),
    })
}

fn read_spec(path: &Path) -> Result<ModelSpec, Error> {
    ModelSpec::from_json(&read_text(path)?, &path.display().to_string())
}

fn read_table(path: &Path) -> Result<CsvTable, Error> {
    let text = read_text(path)?;
    CsvTable::read(text.as_bytes(), &path.display().to_string())
}

fn write_output(out: Option<&Path>, text: &str) -> CmdResult {
    match out {
        Some(p) => fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn cmd_generate(a: GenerateArgs) -> CmdResult {
    let spec = read_spec(&a.spec)?;
    let source = match a.inputs {
        InputKind::Uniform => InputSource::UniformBox { lo: a.lo, hi: a.hi },
        InputKind::Stratified => {
            let total = a.cells.checked_pow(spec.n_d() as u32).unwrap_or(usize::MAX);
            if total == 0 || !a.n.is_multiple_of(total) {
                return Err(Error::InvalidArgument(format!(
                    "--n {} is not a multiple of the {total} grid cells",
                    a.n
                )));
            }
            InputSource::StratifiedBox {
                lo: a.lo,
                hi: a.hi,
                cells: a.cells,
                per_cell: a.n / total,
            }
        }
    };
    let ds = generate(&spec, a.n, &source, a.seed)?;
    let mut buf = Vec::new();
    ds.write_csv(&mut buf)?;
    fs::write(&a.out, buf)?;
    let snr = scsid::model::snr_db(&ds, &spec)?;
    eprintln!("wrote {} samples to {} (SNR {snr:.2} dB)", ds.len(), a.out.display());
    Ok(())
}

#[derive(Serialize)]
struct EstimateDoc {
    k: usize,
    n_d: usize,
    n_y: usize,
    thetas: Vec<Vec<Vec<f64>>>,
    /// 1-based.
    labels: Vec<usize>,
    residuals: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    misclassification: Option<f64>,
    diagnostics: ClusterDiagnostics,
}

fn write_matrix_csv(path: &Path, m: MatRef<'_, f64>) -> CmdResult {
    let mut w = csv::Writer::from_path(path)?;
    for row in to_rows(m) {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_identify(a: IdentifyArgs) -> CmdResult {
    let text = read_text(&a.data)?;
    let ds = Dataset::read_csv(text.as_bytes(), &a.data.display().to_string())?;
    let noise = match (a.sigma_e2, a.sigma_w2) {
        (Some(sigma_e2), Some(sigma_w2)) => NoiseModel::Known { sigma_e2, sigma_w2 },
        _ => NoiseModel::Unknown,
    };
    let cfg = IdentifyConfig {
        scs: a.cluster.config(),
        noise,
    };
    let (est, artifacts) = identify_detailed(&ds, a.k, a.nd, &cfg)?;
    if let Some(r) = &est.labels.diagnostics.rank {
        if r.rank_deficient {
            eprintln!(
                "warning: weak signal subspace (gap ratio {:?}, threshold {})",
                r.gap_ratio, r.threshold
            );
        }
    }
    if let Some(dir) = &a.dump_graph {
        fs::create_dir_all(dir)?;
        write_matrix_csv(&dir.join("similarity.csv"), artifacts.graph.w.as_ref())?;
        write_matrix_csv(&dir.join("embedding.csv"), artifacts.embedding.coords.as_ref())?;
        let sv = Mat::from_fn(artifacts.subspace.singular_values.len(), 1, |i, _| artifacts.subspace.singular_values[i]);
        write_matrix_csv(&dir.join("singular_values.csv"), sv.as_ref())?;
    }
    let misclassification = ds
        .truth()
        .map(|t| misclassification(&est.labels.labels, &t.labels, a.k));
    if let Some(m) = misclassification {
        eprintln!("misclassification against the labels in the file: {m}");
    }
    let doc = EstimateDoc {
        k: a.k,
        n_d: a.nd,
        n_y: ds.n_y(),
        thetas: est.thetas.iter().map(|t| to_rows(t.as_ref())).collect(),
        labels: est.labels.labels.iter().map(|l| l + 1).collect(),
        residuals: est.residuals.clone(),
        misclassification,
        diagnostics: est.labels.diagnostics.clone(),
    };
    let json = serde_json::to_string_pretty(&doc)? + "\n";
    write_output(a.out.as_deref(), &json)
}

fn labelled_inputs(path: &Path) -> Result<(Mat<f64>, Vec<usize>), Error> {
    read_table(path)?.labelled_inputs()
}

fn cmd_check_ident(a: CheckIdentArgs) -> CmdResult {
    let (d, labels) = labelled_inputs(&a.inputs)?;
    let k = a.k.unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
    let parts = identifiability::split_by_label(d.as_ref(), &labels, k)?;
    let report = identifiability::check_identifiable(&parts, a.tol)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn cmd_crb(a: CrbArgs) -> CmdResult {
    let spec = read_spec(&a.spec)?;
    let (d, labels) = labelled_inputs(&a.inputs)?;
    if d.nrows() != spec.n_d() {
        return Err(Error::Format {
            file: a.inputs.display().to_string(),
            message: format!("{} input columns, the model has N_d = {}", d.nrows(), spec.n_d()),
        });
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= spec.k()) {
        return Err(Error::InvalidArgument(format!("label {} exceeds K = {}", l + 1, spec.k())));
    }
    let report = crb::crb_report(spec.thetas(), d.as_ref(), &labels, spec.sigma_e2(), spec.sigma_w2(), a.with_inputs)?;
    let text = match a.format {
        TableFormat::Csv => {
            let mut buf = Vec::new();
            report.write_csv(&mut buf)?;
            String::from_utf8(buf).expect("csv is utf-8")
        }
        TableFormat::Json => report.to_json() + "\n",
    };
    write_output(a.out.as_deref(), &text)
}

fn load_scenario(arg: &str) -> Result<Scenario, Error> {
    if let Some(sc) = Scenario::builtin(arg) {
        return Ok(sc);
    }
    let path = Path::new(arg);
    Scenario::from_json(&read_text(path)?, arg)
}

fn run_bench(mut sc: Scenario, runs: Option<usize>, seed: Option<u64>, out: &Path, formats: &[ReportFormat]) -> Result<bench::BenchReport, Error> {
    if let Some(r) = runs {
        sc.runs = r;
    }
    if let Some(s) = seed {
        sc.seed = s;
    }
    let start = Instant::now();
    let grid = sc.snr_grid.clone();
    let report = bench::run_with_progress(&sc, |si, alg| {
        eprintln!("  {} dB  {}  done", grid[si], alg.name());
    })?;
    eprintln!("{} runs per cell in {:.1} s", sc.runs, start.elapsed().as_secs_f64());
    for &f in formats {
        for p in bench::emit(&report, f, out)? {
            eprintln!("wrote {}", p.display());
        }
    }
    Ok(report)
}

fn parse_formats(raw: &[String]) -> Result<Vec<ReportFormat>, Error> {
    raw.iter()
        .map(|s| s.trim().parse().map_err(Error::InvalidArgument))
        .collect()
}

fn cmd_bench(a: BenchArgs) -> CmdResult {
    let formats = parse_formats(&a.format)?;
    let sc = load_scenario(&a.scenario)?;
    run_bench(sc, a.runs, a.seed, &a.out, &formats)?;
    Ok(())
}

fn fmt_num(v: f64) -> String {
    let s = format!("{v:.10}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

fn fmt_matrix(m: &Mat<f64>) -> String {
    if m.nrows() == 1 && m.ncols() == 1 {
        return fmt_num(m[(0, 0)]);
    }
    let rows: Vec<String> = to_rows(m.as_ref())
        .iter()
        .map(|r| format!("[{}]", r.iter().map(|v| fmt_num(*v)).collect::<Vec<_>>().join(", ")))
        .collect();
    format!("[{}]", rows.join(", "))
}

fn cmd_demo(a: DemoArgs) -> CmdResult {
    let sc = match a.example {
        Example::Example1 => Scenario::example1(),
        Example::Example2 => Scenario::example2(),
    };
    if a.noiseless {
        let spec = sc.spec.with_noise(0.0, 0.0)?;
        let ds = generate(&spec, sc.horizon, &sc.inputs.source(), a.seed)?;
        let est = identify(&ds, spec.k(), spec.n_d(), &IdentifyConfig::default())?;
        let (_, aligned) = align_to_truth(&est, &spec)?;
        let truth = ds.truth().ok_or(Error::MissingTruth)?;
        for (i, t) in aligned.thetas.iter().enumerate() {
            println!("theta{} = {}", i + 1, fmt_matrix(t));
        }
        println!(
            "misclassification = {}",
            fmt_num(misclassification(&aligned.labels.labels, &truth.labels, spec.k()))
        );
        return Ok(());
    }
    let name = match a.example {
        Example::Example1 => "example1",
        Example::Example2 => "example2",
    };
    let out = a.out.unwrap_or_else(|| PathBuf::from(format!("demo-{name}")));
    let report = run_bench(sc, a.runs, Some(a.seed), &out, &[ReportFormat::Csv, ReportFormat::Json, ReportFormat::Svg])?;
    println!("{:>8}  {:<13} {:<13} {:>12} {:>12} {:>10}", "snr_db", "algorithm", "entry", "mse", "ccrb", "miscls");
    let show = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3e}"));
    for r in &report.rows {
        println!(
            "{:>8}  {:<13} {:<13} {:>12} {:>12} {:>10}",
            r.snr_db.to_string(),
            r.algorithm.name(),
            r.entry,
            show(r.mse),
            show(r.ccrb),
            r.miscls.map_or("-".into(), |m| format!("{m:.4}"))
        );
    }
    Ok(())
}
