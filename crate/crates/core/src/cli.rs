//! `sdrn` command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 bound violation.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ndarray::{Array1, Array2};

use crate::error::{Result, SdrnError};
use crate::estimator::{FitConfig, SdrnModel};
use crate::evalsuite::{
    run_replications, verify_bounds, BoundsConfig, NoiseKind, SimModel, SimModelSpec, TuningGrid,
};
use crate::loss::LossSpec;
use crate::relu::build_basis_network;
use crate::sparse_grid::{basis_count, cardinality_bounds, BasisId, SparseGridBasis};

/// Seed used when `--seed` is absent.
pub const DEFAULT_SEED: u64 = 20240601;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_BOUND: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "sdrn", version, about = "Sparse deep ReLU network estimator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Fit a model on a CSV file.
    Fit(FitArgs),
    /// Append predictions to a CSV file.
    Predict(PredictArgs),
    /// Run the simulation harness.
    Simulate(SimulateArgs),
    /// Basis size, cardinality bounds and network size.
    BasisInfo(BasisInfoArgs),
    /// Run the bound-verification sweeps.
    VerifyBounds(VerifyArgs),
}

#[derive(Args, Debug)]
pub struct FitArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// Response column name.
    #[arg(long)]
    pub target: String,
    /// Where to write the model JSON.
    #[arg(long)]
    pub model_out: PathBuf,
    /// Where to write the fit report (stdout when absent).
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// quadratic | huber:<delta> | quantile:<tau> | logistic
    #[arg(long, default_value = "quadratic")]
    pub loss: String,
    #[arg(long, default_value_t = 1.0)]
    pub kappa: f64,
    /// Offset in the level schedule; cannot be combined with --m.
    #[arg(long, allow_hyphen_values = true, conflicts_with = "m")]
    pub c: Option<i32>,
    #[arg(long)]
    pub m: Option<u32>,
    #[arg(long)]
    pub r: Option<u32>,
    #[arg(long, default_value_t = 5000)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub tolerance: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    /// Model JSON written by `fit`.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Output CSV (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Class threshold on the sigmoid of the score (logistic models).
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Data-generating model id (1..4).
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
    pub model: u8,
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// normal | laplace | none
    #[arg(long, default_value = "normal")]
    pub noise: String,
    /// Defaults to logistic for model 4 and quadratic otherwise.
    #[arg(long)]
    pub loss: Option<String>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.5, 1.0, 2.0, 4.0])]
    pub kappas: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_values_t = [-2, -1, 0, 1, 2])]
    pub cs: Vec<i32>,
    #[arg(long, default_value_t = 5000)]
    pub epochs: usize,
    /// Metric CSV (stdout when neither output is given).
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// JSON summary.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BasisInfoArgs {
    #[arg(long)]
    pub d: usize,
    #[arg(long)]
    pub m: u32,
    /// Accuracy level for the network size; 3·max(m, 1) when absent.
    #[arg(long)]
    pub r: Option<u32>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit code. Errors are printed to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    configure_threads();
    let mut stdout = io::stdout().lock();
    match dispatch(cli.command, &mut stdout) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn configure_threads() {
    if let Some(n) = std::env::var("SDRN_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }
}

/// Maps an error to its exit code.
pub fn exit_code(e: &SdrnError) -> i32 {
    match e {
        SdrnError::InvalidConfig(_)
        | SdrnError::InvalidLoss(_)
        | SdrnError::Domain(_)
        | SdrnError::ZeroDimension => EXIT_USAGE,
        SdrnError::TooManyBasisFunctions { .. } => EXIT_USAGE,
        SdrnError::Replication { source, .. } => exit_code(source),
        _ => EXIT_DATA,
    }
}

/// Runs one parsed command, writing primary output to `out`.
pub fn dispatch(command: Command, out: &mut dyn Write) -> Result<i32> {
    match command {
        Command::Fit(a) => fit(&a, out),
        Command::Predict(a) => predict(&a, out),
        Command::Simulate(a) => simulate(&a, out),
        Command::BasisInfo(a) => basis_info(&a, out),
        Command::VerifyBounds(a) => verify(&a, out),
    }
}

/// Header plus numeric rows of a CSV file.
#[derive(Clone, Debug)]
pub struct Table {
    pub headers: Vec<String>,
    pub records: Vec<csv::StringRecord>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_path(path)?;
        let headers = reader.headers()?.iter().map(str::to_string).collect();
        let records = reader
            .records()
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(Self { headers, records })
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.headers.iter().position(|h| h == name).ok_or_else(|| {
            SdrnError::Data(format!(
                "column `{name}` not found (columns: {})",
                self.headers.join(", ")
            ))
        })
    }

    /// Numeric matrix of the named columns, in the given order.
    pub fn numeric(&self, columns: &[usize]) -> Result<Array2<f64>> {
        let mut x = Array2::zeros((self.records.len(), columns.len()));
        for (i, rec) in self.records.iter().enumerate() {
            for (k, &j) in columns.iter().enumerate() {
                let cell = rec.get(j).unwrap_or("");
                x[[i, k]] = cell
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        SdrnError::Data(format!(
                            "row {}, column `{}`: `{cell}` is not a finite number",
                            i + 1,
                            self.headers[j]
                        ))
                    })?;
            }
        }
        Ok(x)
    }
}

fn write_output(path: Option<&Path>, text: &str, out: &mut dyn Write) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text)?,
        None => out.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn fit(a: &FitArgs, out: &mut dyn Write) -> Result<i32> {
    let loss: LossSpec = a.loss.parse()?;
    let config = FitConfig {
        loss,
        kappa: a.kappa,
        c_offset: a.c.unwrap_or(0),
        m_override: a.m,
        r_override: a.r,
        epochs: a.epochs,
        tolerance: a.tolerance,
        seed: a.seed,
        ..Default::default()
    };
    config.validate()?;
    let table = Table::read(&a.data)?;
    let target = table.column_index(&a.target)?;
    let covariates: Vec<usize> = (0..table.headers.len()).filter(|&j| j != target).collect();
    if covariates.is_empty() {
        return Err(SdrnError::Data(
            "no covariate columns besides the target".into(),
        ));
    }
    let x = table.numeric(&covariates)?;
    let y: Array1<f64> = table.numeric(&[target])?.column(0).to_owned();
    let names: Vec<String> = covariates
        .iter()
        .map(|&j| table.headers[j].clone())
        .collect();
    let model =
        SdrnModel::fit(x.view(), y.view(), &config)?.with_names(names, Some(a.target.clone()))?;
    fs::write(&a.model_out, model.to_json()?)?;
    let report = fit_report(a, &model)?;
    write_output(a.report.as_deref(), &report, out)?;
    Ok(EXIT_OK)
}

/// Human-readable fit summary.
pub fn fit_report(a: &FitArgs, model: &SdrnModel) -> Result<String> {
    let d = model.dim();
    let diag = model.diagnostics();
    let basis = SparseGridBasis::new(d, model.m())?;
    let net = build_basis_network(model.accuracy_level(), &basis.ids()[0])?.complexity();
    let p = diag.basis_size;
    let mut s = String::new();
    let _ = writeln!(s, "# command=fit");
    let _ = writeln!(s, "# data={}", a.data.display());
    let _ = writeln!(s, "# target={}", a.target);
    let _ = writeln!(s, "# loss={}", model.loss());
    let _ = writeln!(s, "# kappa={}", a.kappa);
    let _ = writeln!(
        s,
        "# c={}",
        a.c.map_or("none".to_string(), |c| c.to_string())
    );
    let _ = writeln!(
        s,
        "# m_override={}",
        a.m.map_or("none".to_string(), |v| v.to_string())
    );
    let _ = writeln!(
        s,
        "# r_override={}",
        a.r.map_or("none".to_string(), |v| v.to_string())
    );
    let _ = writeln!(s, "# epochs={}", a.epochs);
    let _ = writeln!(s, "# seed={}", a.seed);
    let _ = writeln!(s, "n = {}", diag.n_train);
    let _ = writeln!(s, "d = {d}");
    let _ = writeln!(s, "m = {}", model.m());
    let _ = writeln!(s, "R = {}", model.accuracy_level());
    let _ = writeln!(s, "basis_size = {p}");
    let _ = writeln!(s, "final_objective = {}", diag.final_objective);
    let _ = writeln!(s, "epochs_run = {}", diag.epochs_run);
    let _ = writeln!(s, "converged = {}", diag.converged);
    let _ = writeln!(s, "train_sup_norm = {}", diag.train_sup_norm);
    let _ = writeln!(s, "lipschitz_constant = {}", diag.lipschitz_constant);
    let _ = writeln!(s, "network_depth = {}", net.depth + 1);
    let _ = writeln!(s, "network_units = {}", p * net.units + 1);
    let _ = writeln!(s, "network_weights = {}", p * net.weights + p + 1);
    Ok(s)
}

fn fmt_num(v: f64) -> String {
    format!("{v}")
}

fn predict(a: &PredictArgs, out: &mut dyn Write) -> Result<i32> {
    let model = SdrnModel::from_json(&fs::read_to_string(&a.model)?)?;
    let table = Table::read(&a.data)?;
    let names: Vec<String> = if model.covariates().is_empty() {
        (1..=model.dim()).map(|j| format!("x{j}")).collect()
    } else {
        model.covariates().to_vec()
    };
    let columns = names
        .iter()
        .map(|n| table.column_index(n))
        .collect::<Result<Vec<_>>>()?;
    let x = table.numeric(&columns)?;
    let scores = model.predict_batch(x.view())?;
    let logistic = model.loss().is_classification();

    let mut writer = csv::WriterBuilder::new().from_writer(Vec::new());
    let mut header = table.headers.clone();
    header.push("prediction".into());
    if logistic {
        header.push("probability".into());
    }
    writer.write_record(&header)?;
    for (rec, &score) in table.records.iter().zip(&scores) {
        let mut row: Vec<String> = rec.iter().map(str::to_string).collect();
        if logistic {
            row.push(crate::estimator::classify(score, a.threshold).to_string());
            row.push(fmt_num(crate::loss::sigmoid(score)));
        } else {
            row.push(fmt_num(score));
        }
        writer.write_record(&row)?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| SdrnError::Io(e.into_error()))?;
    let text = String::from_utf8(bytes).map_err(|e| SdrnError::Data(e.to_string()))?;
    write_output(a.out.as_deref(), &text, out)?;
    Ok(EXIT_OK)
}

fn simulate(a: &SimulateArgs, out: &mut dyn Write) -> Result<i32> {
    let model = SimModel::try_from(a.model)?;
    let noise: NoiseKind = a.noise.parse()?;
    let loss: LossSpec = match &a.loss {
        Some(s) => s.parse()?,
        None if model.is_classification() => LossSpec::Logistic,
        None => LossSpec::Quadratic,
    };
    let grid = TuningGrid {
        kappas: a.kappas.clone(),
        cs: a.cs.clone(),
    };
    grid.validate()?;
    let spec = SimModelSpec {
        model,
        n: a.n,
        noise,
        seed: a.seed,
    };
    let config = FitConfig {
        loss,
        epochs: a.epochs,
        seed: a.seed,
        ..Default::default()
    };
    let report = run_replications(&spec, &config, &grid, a.reps)?;
    let csv = report.to_csv();
    if let Some(p) = &a.json {
        fs::write(p, report.to_json()?)?;
    }
    match &a.csv {
        Some(p) => fs::write(p, &csv)?,
        None if a.json.is_none() => out.write_all(csv.as_bytes())?,
        None => {}
    }
    Ok(EXIT_OK)
}

fn basis_info(a: &BasisInfoArgs, out: &mut dyn Write) -> Result<i32> {
    if a.d == 0 {
        return Err(SdrnError::ZeroDimension);
    }
    let count = basis_count(a.d, a.m);
    let r = a.r.unwrap_or(3 * a.m.max(1));
    let mut s = String::new();
    let _ = writeln!(s, "# command=basis-info d={} m={} R={r}", a.d, a.m);
    let _ = writeln!(s, "basis_size = {count}");
    let mut csv = String::from(
        "d,m,R,basis_size,lower_bound,upper_bound,feature_depth,feature_units,feature_weights\n",
    );
    let (lo, hi) = match cardinality_bounds(a.d, a.m) {
        Ok((lo, hi)) => {
            let _ = writeln!(s, "lower_bound = {lo}");
            let _ = writeln!(s, "upper_bound = {hi}");
            (lo.to_string(), hi.to_string())
        }
        Err(_) => {
            let _ = writeln!(s, "bounds = n/a (d < 2)");
            ("NA".into(), "NA".into())
        }
    };
    let first = BasisId::new(vec![0; a.d], vec![0; a.d])?;
    let net = build_basis_network(r, &first)?.complexity();
    let _ = writeln!(
        s,
        "feature_network depth = {} units = {} weights = {}",
        net.depth, net.units, net.weights
    );
    let _ = writeln!(
        csv,
        "{},{},{r},{count},{lo},{hi},{},{},{}",
        a.d, a.m, net.depth, net.units, net.weights
    );
    out.write_all(s.as_bytes())?;
    if let Some(p) = &a.csv {
        fs::write(p, csv)?;
    }
    Ok(EXIT_OK)
}

fn verify(a: &VerifyArgs, out: &mut dyn Write) -> Result<i32> {
    let config = BoundsConfig {
        seed: a.seed,
        ..Default::default()
    };
    let report = verify_bounds(&config)?;
    let mut s = format!("# command=verify-bounds seed={}\n", a.seed);
    let _ = writeln!(
        s,
        "{:<14} {:<28} {:>14} {:>14}  result",
        "sweep", "params", "measured", "bound"
    );
    for c in &report.checks {
        let verdict = match (c.pass, c.informational) {
            (_, true) => "info",
            (true, false) => "pass",
            (false, false) => "FAIL",
        };
        let _ = writeln!(
            s,
            "{:<14} {:<28} {:>14.6e} {:>14.6e}  {verdict}",
            c.sweep, c.params, c.measured, c.bound
        );
    }
    let _ = writeln!(s, "violations = {}", report.violations());
    out.write_all(s.as_bytes())?;
    if let Some(p) = &a.csv {
        fs::write(p, report.to_csv())?;
    }
    Ok(if report.all_pass() {
        EXIT_OK
    } else {
        EXIT_BOUND
    })
}
