//! Command-line front end for the sparse GLM posterior: four workflows
//! (select, enumerate, diagnose, simulate) that read plain files and write
//! a reproducible output bundle of `manifest.json`, `report.json`, and
//! `report.csv`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use ebglm::diagnostics::theory_report;
use ebglm::posterior::{enumerate_posterior, ScoreCache};
use ebglm::sampler::selection_report;
use ebglm::{
    run_chain, run_study, Dataset, Error as EbglmError, GlmFamily, HyperOverrides, SimSetting,
};

#[derive(Parser)]
#[command(
    name = "ebglm",
    version,
    about = "Empirical-Bayes variable selection for sparse generalized linear models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configuration chain on a CSV dataset and report selection
    Select(SelectArgs),
    /// Exactly enumerate the configuration posterior of a small dataset
    Enumerate(EnumerateArgs),
    /// Compute the theory diagnostics for a dataset with known truth
    Diagnose(DiagnoseArgs),
    /// Run a simulation study from a settings file
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct SelectArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct EnumerateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[command(flatten)]
    data: DataArgs,
    /// File with the true coefficient vector (whitespace- or
    /// comma-separated numbers, one per design column)
    #[arg(long)]
    truth: PathBuf,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON file holding an array of simulation settings
    #[arg(long)]
    settings: PathBuf,
    /// Override the replication count of every setting
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    reps: Option<u64>,
    /// Worker threads for replications (default: all logical cores)
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    threads: Option<u64>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct DataArgs {
    /// CSV dataset: comma-separated, UTF-8, header row required
    data: PathBuf,
    /// Name of the response column; every other column is a covariate
    #[arg(long)]
    response: String,
    /// Model family for the response
    #[arg(long, value_enum)]
    family: FamilyArg,
}

#[derive(Args)]
struct CommonArgs {
    /// Likelihood fraction, strictly between 0 and 1
    #[arg(long, value_parser = parse_open_unit)]
    alpha: Option<f64>,
    /// Complexity-penalty exponent, positive
    #[arg(long, value_parser = parse_positive)]
    beta: Option<f64>,
    /// Prior-covariance inflation, positive
    #[arg(long, value_parser = parse_positive)]
    gamma: Option<f64>,
    /// Largest configuration size given prior mass
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    smax: Option<u64>,
    /// Number of retained posterior samples
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    samples: Option<u64>,
    /// Burn-in fraction, in [0, 1)
    #[arg(long, value_parser = parse_burnin)]
    burnin: Option<f64>,
    /// Inclusion-probability cutoff, strictly between 0 and 1
    #[arg(long, value_parser = parse_open_unit)]
    threshold: Option<f64>,
    /// RNG seed (falls back to the EBGLM_SEED environment variable, then 0)
    #[arg(long)]
    seed: Option<u64>,
    /// Output bundle directory
    #[arg(long, default_value = "ebglm-out")]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FamilyArg {
    Logistic,
    Probit,
    Poisson,
}

impl FamilyArg {
    fn family(self) -> GlmFamily {
        match self {
            FamilyArg::Logistic => GlmFamily::logistic(),
            FamilyArg::Probit => GlmFamily::probit(),
            FamilyArg::Poisson => GlmFamily::poisson(),
        }
    }
}

fn parse_open_unit(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("{v} does not lie strictly between 0 and 1"))
    }
}

fn parse_positive(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(format!("{v} is not a positive number"))
    }
}

fn parse_burnin(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if (0.0..1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} does not lie in [0, 1)"))
    }
}

/// A failure with its process exit code: 2 for data problems (parse,
/// shape, or family-support violations), 3 for numerical failures.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn data(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    fn numerical(message: impl Into<String>) -> Self {
        Self { code: 3, message: message.into() }
    }
}

impl From<EbglmError> for Failure {
    fn from(e: EbglmError) -> Self {
        match e {
            EbglmError::InvalidInput(_) | EbglmError::Unsupported(_) => {
                Failure::data(e.to_string())
            }
            EbglmError::Overflow { .. }
            | EbglmError::SingularInformation(_)
            | EbglmError::NonConvergence { .. }
            | EbglmError::NeverVisited(_)
            | EbglmError::MissingFit(_)
            | EbglmError::AllReplicationsFailed { .. } => Failure::numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::data(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let started = Instant::now();
    match run(cli.command, started) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(command: Command, started: Instant) -> Result<(), Failure> {
    match command {
        Command::Select(args) => run_select(args, started),
        Command::Enumerate(args) => run_enumerate(args, started),
        Command::Diagnose(args) => run_diagnose(args, started),
        Command::Simulate(args) => run_simulate(args, started),
    }
}

/// Seed resolution order: --seed flag, then EBGLM_SEED, then the default 0.
fn resolve_seed(flag: Option<u64>) -> Result<Option<u64>, Failure> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("EBGLM_SEED") {
        Ok(raw) => raw
            .trim()
            .parse::<u64>()
            .map(Some)
            .map_err(|_| Failure::data(format!("EBGLM_SEED must be an unsigned integer, got '{raw}'"))),
        Err(_) => Ok(None),
    }
}

fn overrides_from(common: &CommonArgs, seed: Option<u64>) -> HyperOverrides {
    HyperOverrides {
        alpha: common.alpha,
        beta: common.beta,
        gamma: common.gamma,
        s_max: common.smax.map(|v| v as usize),
        samples: common.samples.map(|v| v as usize),
        burnin: common.burnin,
        threshold: common.threshold,
        seed,
    }
}

#[derive(serde::Serialize)]
struct RunManifest {
    command: String,
    hyper: serde_json::Value,
    dataset_fingerprint: String,
    versions: String,
    seed: u64,
    wall_time: f64,
}

fn fingerprint(paths: &[&Path]) -> Result<String, Failure> {
    let mut hasher = Sha256::new();
    for path in paths {
        let bytes = std::fs::read(path)
            .map_err(|e| Failure::data(format!("cannot read {}: {e}", path.display())))?;
        hasher.update(&bytes);
    }
    Ok(format!("sha256:{:x}", hasher.finalize()))
}

fn write_bundle(
    out: &Path,
    report_json: &str,
    report_csv: &str,
    manifest: &RunManifest,
) -> Result<(), Failure> {
    std::fs::create_dir_all(out)
        .map_err(|e| Failure::data(format!("cannot create {}: {e}", out.display())))?;
    std::fs::write(out.join("report.json"), report_json)?;
    std::fs::write(out.join("report.csv"), report_csv)?;
    let manifest_json = serde_json::to_string_pretty(manifest)
        .map_err(|e| Failure::data(format!("cannot serialize manifest: {e}")))?;
    std::fs::write(out.join("manifest.json"), manifest_json + "\n")?;
    Ok(())
}

fn pretty(value: &impl serde::Serialize) -> Result<String, Failure> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| Failure::data(format!("cannot serialize report: {e}")))
}

fn argv_string() -> String {
    std::env::args().skip(1).collect::<Vec<_>>().join(" ")
}

/// Reads a CSV dataset: header row required, comma separators, '.' decimal
/// points; every cell must parse as a number.
fn read_dataset(args: &DataArgs) -> Result<Dataset, Failure> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(&args.data)
        .map_err(|e| Failure::data(format!("cannot read {}: {e}", args.data.display())))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Failure::data(format!("cannot read header: {e}")))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let response_col = headers
        .iter()
        .position(|h| h == &args.response)
        .ok_or_else(|| {
            Failure::data(format!(
                "response column '{}' not found; header has [{}]",
                args.response,
                headers.join(", ")
            ))
        })?;
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != response_col)
        .map(|(_, h)| h.clone())
        .collect();
    if feature_names.is_empty() {
        return Err(Failure::data(
            "the dataset needs at least one covariate column besides the response",
        ));
    }

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut responses: Vec<f64> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row_no = i + 2; // 1-based, counting the header row
        let record = record.map_err(|e| Failure::data(format!("row {row_no}: {e}")))?;
        if record.len() != headers.len() {
            return Err(Failure::data(format!(
                "row {row_no} has {} fields; the header has {}",
                record.len(),
                headers.len()
            )));
        }
        let mut features = Vec::with_capacity(feature_names.len());
        for (j, cell) in record.iter().enumerate() {
            let value: f64 = cell.trim().parse().map_err(|_| {
                Failure::data(format!(
                    "row {row_no}, column '{}': cannot parse '{cell}' as a number",
                    headers[j]
                ))
            })?;
            if j == response_col {
                responses.push(value);
            } else {
                features.push(value);
            }
        }
        rows.push(features);
    }
    if rows.is_empty() {
        return Err(Failure::data("the dataset has no data rows"));
    }

    let n = rows.len();
    let p = feature_names.len();
    let x = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
    let y = DVector::from_vec(responses);
    Dataset::new(x, y, feature_names, &args.family.family()).map_err(Failure::from)
}

fn read_truth(path: &Path, p: usize) -> Result<DVector<f64>, Failure> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| Failure::data(format!("cannot read {}: {e}", path.display())))?;
    let mut values = Vec::new();
    for (k, token) in raw
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .enumerate()
    {
        let value: f64 = token.parse().map_err(|_| {
            Failure::data(format!(
                "truth entry {}: cannot parse '{token}' as a number",
                k + 1
            ))
        })?;
        values.push(value);
    }
    if values.len() != p {
        return Err(Failure::data(format!(
            "truth vector has {} entries; the design has {p} columns",
            values.len()
        )));
    }
    Ok(DVector::from_vec(values))
}

fn run_select(args: SelectArgs, started: Instant) -> Result<(), Failure> {
    let data = read_dataset(&args.data)?;
    let seed = resolve_seed(args.common.seed)?;
    let overrides = overrides_from(&args.common, seed);
    let hyper = overrides.resolve(data.n(), data.p())?;
    let fam = args.data.family.family();

    let cache = ScoreCache::new();
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let chain = run_chain(&data, &fam, &hyper, &cache, &mut rng)?;
    let report = selection_report(&chain, &cache, data.p(), hyper.threshold)?;

    let mut csv_text = String::from("index,name,inclusion,estimate,selected\n");
    for j in 1..=data.p() {
        let selected = u8::from(report.selected.binary_search(&j).is_ok());
        let _ = writeln!(
            csv_text,
            "{j},{},{},{},{selected}",
            data.column_names()[j - 1],
            report.inclusion[j - 1],
            report.estimates[j - 1],
        );
    }

    let manifest = RunManifest {
        command: argv_string(),
        hyper: serde_json::to_value(&hyper).expect("hyperparameters serialize"),
        dataset_fingerprint: fingerprint(&[&args.data.data])?,
        versions: format!("ebglm-cli {}", env!("CARGO_PKG_VERSION")),
        seed: hyper.seed,
        wall_time: started.elapsed().as_secs_f64(),
    };
    write_bundle(&args.common.out, &pretty(&report)?, &csv_text, &manifest)?;

    let names: Vec<&str> = report
        .selected
        .iter()
        .map(|&j| data.column_names()[j - 1].as_str())
        .collect();
    println!(
        "selected {} of {} columns at threshold {}: [{}]",
        report.selected.len(),
        data.p(),
        report.threshold,
        names.join(", ")
    );
    println!("wrote {}", args.common.out.display());
    Ok(())
}

fn run_enumerate(args: EnumerateArgs, started: Instant) -> Result<(), Failure> {
    let data = read_dataset(&args.data)?;
    let seed = resolve_seed(args.common.seed)?;
    let overrides = overrides_from(&args.common, seed);
    let hyper = overrides.resolve(data.n(), data.p())?;
    let fam = args.data.family.family();

    let exact = enumerate_posterior(&data, &fam, &hyper)?;
    let mut csv_text = String::from("rank,indices,probability\n");
    let mut ranked: Vec<usize> = (0..exact.entries.len()).collect();
    ranked.sort_by(|&a, &b| {
        exact.entries[b]
            .probability
            .total_cmp(&exact.entries[a].probability)
    });
    for (rank, &e) in ranked.iter().enumerate() {
        let entry = &exact.entries[e];
        let indices = entry
            .config
            .indices()
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(" ");
        let _ = writeln!(csv_text, "{},{indices},{}", rank + 1, entry.probability);
    }

    let manifest = RunManifest {
        command: argv_string(),
        hyper: serde_json::to_value(&hyper).expect("hyperparameters serialize"),
        dataset_fingerprint: fingerprint(&[&args.data.data])?,
        versions: format!("ebglm-cli {}", env!("CARGO_PKG_VERSION")),
        seed: hyper.seed,
        wall_time: started.elapsed().as_secs_f64(),
    };
    write_bundle(&args.common.out, &pretty(&exact)?, &csv_text, &manifest)?;

    let top = &exact.entries[ranked[0]];
    println!(
        "enumerated {} configurations; most probable {} with probability {:.4}",
        exact.entries.len(),
        top.config,
        top.probability
    );
    println!("wrote {}", args.common.out.display());
    Ok(())
}

fn run_diagnose(args: DiagnoseArgs, started: Instant) -> Result<(), Failure> {
    let data = read_dataset(&args.data)?;
    let theta_star = read_truth(&args.truth, data.p())?;
    let s_star = theta_star.iter().filter(|&&v| v != 0.0).count();
    if s_star == 0 {
        return Err(Failure::data(
            "the truth vector has no nonzero entries; diagnostics need a nonnull truth",
        ));
    }
    let seed = resolve_seed(args.common.seed)?;
    let overrides = overrides_from(&args.common, seed);
    let hyper = overrides.resolve(data.n(), data.p())?;
    let fam = args.data.family.family();

    let cache = ScoreCache::new();
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let chain = run_chain(&data, &fam, &hyper, &cache, &mut rng)?;
    let sweep_depth = (2 * s_star).min(data.p());
    let report = theory_report(
        &data,
        &fam,
        &theta_star,
        &hyper,
        &chain,
        &cache,
        sweep_depth,
        2.0,
        &mut rng,
    )?;

    let csv_text = format!(
        "hellinger,epsilon_n,lambda_min_restricted,lambda_max_restricted,\
         beta_min_satisfied,beta_min_margin,phi_sparse,bvm_mean_gap,bvm_cov_gap,rho\n\
         {},{},{},{},{},{},{},{},{},{}\n",
        report.hellinger,
        report.epsilon_n,
        report.lambda_min_restricted,
        report.lambda_max_restricted,
        report.beta_min_satisfied,
        report.beta_min_margin,
        report.phi_sparse,
        report.bvm_mean_gap,
        report.bvm_cov_gap,
        report.rho,
    );

    let manifest = RunManifest {
        command: argv_string(),
        hyper: serde_json::to_value(&hyper).expect("hyperparameters serialize"),
        dataset_fingerprint: fingerprint(&[&args.data.data, &args.truth])?,
        versions: format!("ebglm-cli {}", env!("CARGO_PKG_VERSION")),
        seed: hyper.seed,
        wall_time: started.elapsed().as_secs_f64(),
    };
    write_bundle(&args.common.out, &pretty(&report)?, &csv_text, &manifest)?;

    println!(
        "hellinger {:.4}, beta-min satisfied: {}, bvm gaps {:.4}/{:.4}",
        report.hellinger, report.beta_min_satisfied, report.bvm_mean_gap, report.bvm_cov_gap
    );
    println!("wrote {}", args.common.out.display());
    Ok(())
}

fn run_simulate(args: SimulateArgs, started: Instant) -> Result<(), Failure> {
    let raw = std::fs::read_to_string(&args.settings)
        .map_err(|e| Failure::data(format!("cannot read {}: {e}", args.settings.display())))?;
    let mut settings: Vec<SimSetting> = serde_json::from_str(&raw)
        .map_err(|e| Failure::data(format!("cannot parse {}: {e}", args.settings.display())))?;
    if let Some(reps) = args.reps {
        for setting in &mut settings {
            setting.replications = reps as usize;
        }
    }

    let seed = resolve_seed(args.common.seed)?;
    let master_seed = seed.unwrap_or(0);
    let overrides = overrides_from(&args.common, None);
    let threads = args.threads.unwrap_or(0) as usize;
    let report = run_study(&settings, &overrides, master_seed, threads)?;

    let manifest = RunManifest {
        command: argv_string(),
        hyper: serde_json::to_value(&overrides).expect("overrides serialize"),
        dataset_fingerprint: fingerprint(&[&args.settings])?,
        versions: format!("ebglm-cli {}", env!("CARGO_PKG_VERSION")),
        seed: master_seed,
        wall_time: started.elapsed().as_secs_f64(),
    };
    write_bundle(&args.common.out, &pretty(&report)?, &report.to_csv(), &manifest)?;

    for result in &report.settings {
        println!(
            "{}: EB2 TPR {:.3}, TNR {:.3}, MCC {:.3} over {} replications",
            result.setting.label(),
            result.eb2.tpr,
            result.eb2.tnr,
            result.eb2.mcc,
            result.completed
        );
    }
    println!("wrote {}", args.common.out.display());
    Ok(())
}
