use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lpre_core::inference::{gre_anova_test, lpre_anova_test, wald_p_value, PValueConvention};
use lpre_core::{Criterion, LinearHypothesis, SolverOptions};

use lpre::config::{SimulationConfig, Study};
use lpre::io::{read_hypothesis, write_csv, Table};
use lpre::pipeline::{bodyfat_pipeline, evaluate_split, BodyfatColumns};
use lpre::sim::{estimate, run_estimation_study, run_power_study, write_metrics, write_power};
use lpre::{density_grid, write_density_grid, Error, Result};

#[derive(Parser)]
#[command(name = "lpre", version, about = "Least product relative error regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one criterion and write estimates, standard errors and p-values.
    Fit(FitArgs),
    /// Test a linear hypothesis H'β = 0.
    Test(TestArgs),
    /// Run an estimation or power study from a config file.
    Simulate(SimulateArgs),
    /// Fit on training rows and report median prediction errors on test rows.
    Predict(PredictArgs),
    /// Write the four efficiency densities on a grid.
    Densities(DensityArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum PValueFlag {
    Paper,
    TwoSided,
}

impl From<PValueFlag> for PValueConvention {
    fn from(f: PValueFlag) -> Self {
        match f {
            PValueFlag::Paper => PValueConvention::Paper,
            PValueFlag::TwoSided => PValueConvention::TwoSided,
        }
    }
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    response: String,
    /// Covariate columns; default is every column except the response.
    #[arg(long, value_delimiter = ',')]
    covariates: Option<Vec<String>>,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value = "lpre")]
    criterion: Criterion,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Random-weighting resamples for criteria without a plug-in covariance.
    #[arg(long, default_value_t = 500)]
    resamples: usize,
    #[arg(long, value_enum, default_value = "paper")]
    pvalue: PValueFlag,
}

#[derive(Args)]
struct TestArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value = "lpre")]
    criterion: Criterion,
    /// Coefficients tested jointly zero (0 is the intercept).
    #[arg(long, value_delimiter = ',', conflicts_with = "hypothesis_file")]
    zero_coefs: Option<Vec<usize>>,
    /// CSV matrix H: one row per coefficient, one column per constraint.
    #[arg(long)]
    hypothesis_file: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 500)]
    resamples: usize,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config replication count.
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct PredictArgs {
    /// Single CSV split by --split, or the body-fat file with --bodyfat.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, requires = "test")]
    train: Option<PathBuf>,
    #[arg(long, requires = "train")]
    test: Option<PathBuf>,
    /// Number of leading rows of --input used for training.
    #[arg(long)]
    split: Option<usize>,
    /// Run the body-fat study design on --input.
    #[arg(long)]
    bodyfat: bool,
    /// Body-fat column renames, e.g. `bodyfat=BodyFat`.
    #[arg(long = "column", value_parser = parse_pair)]
    columns: Vec<(String, String)>,
    #[arg(long)]
    response: Option<String>,
    #[arg(long, value_delimiter = ',', default_value = "lpre,lare,ls,lad")]
    methods: Vec<Criterion>,
    /// Directory receiving coefficients.csv and metrics.csv.
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 500)]
    resamples: usize,
    #[arg(long, value_enum, default_value = "paper")]
    pvalue: PValueFlag,
}

#[derive(Args)]
struct DensityArgs {
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, default_value_t = 0.01)]
    lo: f64,
    #[arg(long, default_value_t = 5.0)]
    hi: f64,
    #[arg(long, default_value_t = 500)]
    points: usize,
}

fn parse_pair(s: &str) -> std::result::Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| format!("expected key=name, got '{s}'"))
}

fn cmd_fit(a: FitArgs) -> Result<()> {
    let table = Table::read(&a.data.input)?;
    let (data, names) = table.dataset(&a.data.response, a.data.covariates.as_deref())?;
    let (beta, se) = estimate(&a.criterion, &data, a.resamples, a.seed)?;
    let rows: Vec<Vec<String>> = names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let p = wald_p_value(beta[j], se[j], a.pvalue.into());
            vec![name.clone(), beta[j].to_string(), se[j].to_string(), p.to_string()]
        })
        .collect();
    write_csv(a.output.as_deref(), &["coef", "estimate", "see", "p_value"], &rows)
}

fn cmd_test(a: TestArgs) -> Result<()> {
    let table = Table::read(&a.data.input)?;
    let (data, _) = table.dataset(&a.data.response, a.data.covariates.as_deref())?;
    let hypothesis = match (&a.zero_coefs, &a.hypothesis_file) {
        (Some(idx), None) => LinearHypothesis::zero_coefficients(data.p(), idx)?,
        (None, Some(path)) => read_hypothesis(path)?,
        _ => return Err(Error::Data("give exactly one of --zero-coefs or --hypothesis-file".into())),
    };
    let result = match a.criterion {
        Criterion::Lpre => lpre_anova_test(&data, &hypothesis, &SolverOptions::default())?,
        c => gre_anova_test(&c, &data, &hypothesis, a.resamples, a.seed)?,
    };
    let row = vec![
        a.criterion.label().to_string(),
        result.statistic.to_string(),
        result.df.to_string(),
        result.scale.to_string(),
        // the LPRE scale is 1/K̂; resampling calibration has no K̂
        match a.criterion {
            Criterion::Lpre => (1.0 / result.scale).to_string(),
            _ => "NaN".to_string(),
        },
        result.p_value.to_string(),
    ];
    write_csv(
        a.output.as_deref(),
        &["criterion", "statistic", "df", "scale", "k_hat", "p_value"],
        &[row],
    )
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let mut cfg = SimulationConfig::from_file(&a.config)?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(r) = a.replications {
        cfg.replications = r;
    }
    cfg.validate().map_err(Error::Data)?;
    match cfg.study {
        Study::Estimation => {
            let report = run_estimation_study(&cfg, a.threads)?;
            for (name, failed) in report.failures.iter().filter(|(_, f)| *f > 0) {
                eprintln!("{name}: {failed} failed replications skipped");
            }
            write_metrics(a.output.as_deref(), &report.rows)
        }
        Study::Power => {
            let hypothesis = LinearHypothesis::zero_coefficients(cfg.p(), &cfg.zero_coefs)?;
            let report = run_power_study(&cfg, &hypothesis, &cfg.beta_grid, &cfg.alphas, a.threads)?;
            write_power(a.output.as_deref(), &report.rows)
        }
    }
}

fn cmd_predict(a: PredictArgs) -> Result<()> {
    let convention = a.pvalue.into();
    let report = if a.bodyfat {
        let input = a.input.as_ref().ok_or_else(|| Error::Data("--bodyfat needs --input".into()))?;
        let columns = BodyfatColumns::default().with_overrides(&a.columns)?;
        bodyfat_pipeline(input, &a.methods, &columns, a.resamples, convention)?
    } else {
        let response = a
            .response
            .as_deref()
            .ok_or_else(|| Error::Data("--response is required".into()))?;
        let (train, test, names) = match (&a.input, a.split, &a.train, &a.test) {
            (Some(input), Some(split), None, None) => {
                let (all, names) = Table::read(input)?.dataset(response, None)?;
                if split == 0 || split >= all.n() {
                    return Err(Error::Data(format!("--split must lie in 1..{}", all.n())));
                }
                let train: Vec<usize> = (0..split).collect();
                let test: Vec<usize> = (split..all.n()).collect();
                (all.select_rows(&train)?, all.select_rows(&test)?, names)
            }
            (None, None, Some(train), Some(test)) => {
                let (train, names) = Table::read(train)?.dataset(response, None)?;
                let (test, test_names) = Table::read(test)?.dataset(response, None)?;
                if names != test_names {
                    return Err(Error::Data("train and test files have different columns".into()));
                }
                (train, test, names)
            }
            _ => {
                return Err(Error::Data(
                    "give --input with --split, --train with --test, or --bodyfat --input".into(),
                ))
            }
        };
        evaluate_split(&train, &test, &names, &a.methods, a.resamples, a.seed, convention)?
    };
    report.write(&a.output)
}

fn cmd_densities(a: DensityArgs) -> Result<()> {
    let grid = density_grid(a.lo, a.hi, a.points)?;
    write_density_grid(a.output.as_deref(), &grid)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Test(a) => cmd_test(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Densities(a) => cmd_densities(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
