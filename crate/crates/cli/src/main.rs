//! Command-line front end: each stage of an experiment is independently
//! invocable (generate, train, forecast, evaluate, plot) and `run` drives the
//! full comparison. Configuration comes from flat key=value files; any field
//! can be overridden on the command line with --set key=value. Exit codes:
//! 0 success, 2 config, 3 input/data, 4 numeric, 5 i/o.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ndarray::Array2;

use kflow::dataset;
use kflow::embedding;
use kflow::error::{Error, Result};
use kflow::experiment::{self, Approach, ExperimentConfig};
use kflow::flows::{self, KFConfig};
use kflow::forecast::{forecast_chunked, ForecastConfig};
use kflow::kernel::KernelParams;
use kflow::metrics;
use kflow::plot;
use kflow::report;
use kflow::Variant;

#[derive(Parser)]
#[command(name = "kflow", version, about = "Kernel-learned surrogate models of dynamical systems from irregularly sampled time series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// Flat key=value experiment configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Master seed; per-repetition and per-approach streams derive from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Where reports, predictions, and plots are written.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Override any config key, e.g. --set iterations=500 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate, burn in, subsample, split, and write train/test datasets.
    Generate(ConfigArgs),
    /// Learn kernel parameters for one approach and repetition.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// One of A, B, C, D, E.
        #[arg(long)]
        approach: String,
        #[arg(long, default_value_t = 0)]
        repetition: usize,
    },
    /// Fit a model from a params file and forecast the test series.
    Forecast {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        approach: String,
        /// Kernel parameters file written by `train`.
        #[arg(long)]
        params: PathBuf,
        #[arg(long, default_value_t = 0)]
        repetition: usize,
    },
    /// Score a predictions CSV.
    Evaluate {
        #[arg(long)]
        predictions: PathBuf,
    },
    /// Run the full multi-approach, multi-repetition comparison.
    Run(ConfigArgs),
    /// Render SVG plots for every predictions file in a directory.
    Plot {
        #[arg(long)]
        dir: PathBuf,
    },
}

fn load_config(args: &ConfigArgs) -> Result<ExperimentConfig> {
    let mut text = std::fs::read_to_string(&args.config)
        .map_err(|e| Error::io(args.config.display().to_string(), e))?;
    if let Some(seed) = args.seed {
        text.push_str(&format!("\nseed={seed}\n"));
    }
    if let Some(dir) = &args.output_dir {
        text.push_str(&format!("\noutput_dir={}\n", dir.display()));
    }
    for s in &args.sets {
        if !s.contains('=') {
            return Err(Error::Config(format!("--set needs KEY=VALUE, got {s:?}")));
        }
        text.push('\n');
        text.push_str(s);
        text.push('\n');
    }
    ExperimentConfig::parse(&text)
}

fn generate(args: &ConfigArgs) -> Result<()> {
    let cfg = load_config(args)?;
    let (train, test) = experiment::prepare_series(&cfg)?;
    let train_path = cfg.output_dir.join("train.csv");
    let test_path = cfg.output_dir.join("test.csv");
    dataset::write_series(&train_path, &train)?;
    dataset::write_series(&test_path, &test)?;
    println!("wrote {} ({} samples)", train_path.display(), train.len());
    println!("wrote {} ({} samples)", test_path.display(), test.len());
    Ok(())
}

fn train(args: &ConfigArgs, approach: &str, repetition: usize) -> Result<()> {
    let cfg = load_config(args)?;
    let approach = Approach::parse(approach)?;
    if !approach.learns() {
        return Err(Error::Config(format!(
            "approach {} uses a random kernel; nothing to train",
            approach.label()
        )));
    }
    let (train_series, _) = experiment::prepare_series(&cfg)?;
    let data = embedding::embed(&train_series, approach.variant(), cfg.delay)?;
    let init = experiment::draw_init(cfg.master_seed, repetition);
    let kf = KFConfig {
        batch_size: cfg.batch_size,
        learning_rate: cfg.learning_rate,
        iterations: cfg.iterations,
        nugget: cfg.nugget,
        rng_seed: experiment::train_seed(cfg.master_seed, repetition, approach),
    };
    let mut sink: Vec<u8> = Vec::new();
    let trace = flows::train_with_sink(&data, &kf, &init, Some(&mut sink))?;
    let stem = format!("{}_{repetition}", approach.label());
    let params_path = cfg.output_dir.join(format!("params_{stem}.cfg"));
    dataset::atomic_write(&params_path, trace.best_params.to_config_string().as_bytes())?;
    let trace_path = cfg.output_dir.join(format!("trace_{stem}.csv"));
    let trace_csv = format!("iter,rho,grad_norm,skipped\n{}", String::from_utf8(sink).unwrap());
    dataset::atomic_write(&trace_path, trace_csv.as_bytes())?;
    println!(
        "trained approach {} repetition {repetition}: best smoothed rho {:.6}, {} skipped steps",
        approach.label(),
        trace.best_smoothed_rho,
        trace.skipped_steps
    );
    println!("wrote {}", params_path.display());
    println!("wrote {}", trace_path.display());
    Ok(())
}

fn forecast(args: &ConfigArgs, approach: &str, params_path: &Path, repetition: usize) -> Result<()> {
    let cfg = load_config(args)?;
    let approach = Approach::parse(approach)?;
    let text = std::fs::read_to_string(params_path)
        .map_err(|e| Error::io(params_path.display().to_string(), e))?;
    let params = KernelParams::parse_config(&text)?;
    let (train_series, test_series) = experiment::prepare_series(&cfg)?;
    let data = embedding::embed(&train_series, approach.variant(), cfg.delay)?;
    let model = experiment::fit_surrogate(
        &params,
        data.inputs.view(),
        data.targets.view(),
        cfg.nugget,
    )?;
    if model.solver() != "cholesky" {
        println!("gram matrix indefinite; solved by {}", model.solver());
    }
    let tau = if approach.variant() == Variant::Euler { 1 } else { cfg.delay };
    let fc_cfg = ForecastConfig { horizon: cfg.horizon, delay: tau, variant: approach.variant() };
    let fc = forecast_chunked(&model, &test_series, &fc_cfg)?;
    let mut score = metrics::score(fc.predicted.view(), fc.actual.view())?;
    score.n_divergent = fc.n_divergent;
    let out = cfg.output_dir.join(format!("predictions_{}_{repetition}.csv", approach.label()));
    dataset::atomic_write(&out, experiment::predictions_to_csv(&test_series, &fc).as_bytes())?;
    println!("wrote {}", out.display());
    println!(
        "mse {:.6e}  r2 {:.6}  scored {}  divergent {}",
        score.mse, score.r2, score.n_scored, score.n_divergent
    );
    Ok(())
}

fn evaluate(predictions: &Path) -> Result<()> {
    let text = std::fs::read_to_string(predictions)
        .map_err(|e| Error::io(predictions.display().to_string(), e))?;
    let p = plot::parse_predictions(&text)?;
    if p.times.is_empty() {
        return Err(Error::Input("predictions file has no rows".into()));
    }
    let d = p.actual[0].len();
    let n = p.times.len();
    let mut actual = Array2::<f64>::zeros((n, d));
    let mut predicted = Array2::<f64>::zeros((n, d));
    for i in 0..n {
        for c in 0..d {
            actual[[i, c]] = p.actual[i][c];
            predicted[[i, c]] = p.predicted[i][c];
        }
    }
    let score = metrics::score(predicted.view(), actual.view())?;
    println!("mse {:.6e}  r2 {:.6}  scored {}", score.mse, score.r2, score.n_scored);
    Ok(())
}

fn run(args: &ConfigArgs) -> Result<()> {
    let cfg = load_config(args)?;
    let rep = experiment::run_experiment(&cfg)?;
    print!("{}", report::emit_table(&rep));
    println!("report written to {}", cfg.output_dir.display());
    Ok(())
}

fn plot_dir(dir: &Path) -> Result<()> {
    let files = plot::emit_plots(dir)?;
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("KFLOW_LOG")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate(args) => generate(args),
        Command::Train { config, approach, repetition } => train(config, approach, *repetition),
        Command::Forecast { config, approach, params, repetition } => {
            forecast(config, approach, params, *repetition)
        }
        Command::Evaluate { predictions } => evaluate(predictions),
        Command::Run(args) => run(args),
        Command::Plot { dir } => plot_dir(dir),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
