use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use boundary_cut::classifier::LogisticModel;
use boundary_cut::control::Mode;
use boundary_cut::format;
use boundary_cut::harness::experiment::{evaluate, replay, ClassifierSummary};
use boundary_cut::harness::records::{dataset_traces, read_trials_csv, read_worlds_json};
use boundary_cut::harness::stats::{stats_csv, torque_stats};
use boundary_cut::harness::{read_file, write_file, Experiment, ExperimentConfig, HarnessError};

#[derive(Parser)]
#[command(
    name = "boundary-cut",
    version,
    about = "Uncertainty-driven boundary cutting experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment configuration (JSON). Built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Number of trials (collect: dataset size, compare: pairs).
    #[arg(long, global = true)]
    n: Option<usize>,
    #[arg(long, global = true)]
    lambda: Option<f64>,
    #[arg(long, global = true)]
    kappa: Option<f64>,
    /// Restricts replay to one mode.
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,
    /// Input file: dataset or trial CSV.
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    /// Trained model JSON.
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    /// World file for replay.
    #[arg(long, global = true)]
    worlds: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Writes the scripted demonstration as CSV.
    DemoGen,
    /// Fits the DMP to the demonstration.
    FitDmp,
    /// Runs open-loop trials and writes the classifier dataset.
    Collect,
    /// Trains the classifier on a dataset.
    TrainClf,
    /// Scores a trained model on a dataset.
    EvalClf,
    /// Paired open/closed-loop comparison.
    Compare,
    /// Per-joint torque summary of a dataset.
    Stats,
    /// Re-judges stored trials.
    Replay,
    /// Prints the effective configuration.
    DumpConfig,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Open,
    Closed,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Open => Mode::OpenLoop,
            ModeArg::Closed => Mode::ClosedLoop,
        }
    }
}

fn configure_threads() -> Result<(), HarnessError> {
    let Ok(value) = std::env::var("BOUNDARY_CUT_THREADS") else {
        return Ok(());
    };
    let n: usize = value.parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        HarnessError::Config(format!(
            "BOUNDARY_CUT_THREADS={value:?} is not a positive integer"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| HarnessError::Config(e.to_string()))
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, HarnessError> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.master_seed = seed;
    }
    if let Some(out) = &cli.out {
        config.output_dir = out.to_string_lossy().into_owned();
    }
    if let Some(lambda) = cli.lambda {
        config.classifier.lambda = lambda;
    }
    if let Some(kappa) = cli.kappa {
        config.controller.kappa = kappa;
    }
    if let Some(n) = cli.n {
        match cli.command {
            Command::Compare => config.n_compare = n,
            _ => config.n_collect = n,
        }
    }
    config.validate()?;
    Ok(config)
}

fn input_or(cli: &Cli, dir: &Path, default: &str) -> PathBuf {
    cli.input.clone().unwrap_or_else(|| dir.join(default))
}

fn load_traces(
    path: &Path,
    segments: usize,
) -> Result<Vec<boundary_cut::classifier::TorqueTrace>, HarnessError> {
    let trials = read_trials_csv(&read_file(path)?)?;
    Ok(dataset_traces(&trials, segments))
}

fn load_model(path: &Path) -> Result<LogisticModel, HarnessError> {
    Ok(LogisticModel::from_json(&read_file(path)?)?)
}

fn json<T: serde::Serialize>(value: &T) -> Result<String, HarnessError> {
    format::to_precise_json(value).map_err(|e| HarnessError::Data(e.to_string()))
}

fn run(cli: &Cli) -> Result<(), HarnessError> {
    configure_threads()?;
    let config = load_config(cli)?;
    let dir = PathBuf::from(&config.output_dir);
    let segments = config.segments;
    match cli.command {
        Command::DumpConfig => print!("{}", config.to_json()?),
        Command::DemoGen => {
            let demo = boundary_cut::harness::demo::demo_gen(&config)?;
            let mut text = String::from("t,x,y,dx,dy\n");
            for (k, p) in demo.points.iter().enumerate() {
                let cells = [k as f64 * demo.dt, p.y[0], p.y[1], p.dy[0], p.dy[1]]
                    .map(|v| format::decimal(v, format::CSV_SIGNIFICANT_DIGITS));
                text.push_str(&cells.join(","));
                text.push('\n');
            }
            write_file(&dir.join("demo.csv"), &text)?;
        }
        Command::FitDmp => {
            let e = Experiment::prepare(config)?;
            write_file(&dir.join("dmp.json"), &e.dmp.to_json()?)?;
        }
        Command::Collect => {
            let e = Experiment::prepare(config)?;
            let c = e.collect(e.config.n_collect)?;
            e.save_collection(&dir, &c)?;
            let b = c.balance(segments);
            log::info!(
                "kept {} traces ({} pulp, {} peel), excluded {}",
                b.kept(),
                b.pulp,
                b.peel,
                b.excluded
            );
            println!("{}", json(&b)?.trim_end());
        }
        Command::TrainClf => {
            let e = Experiment::prepare(config)?;
            let traces = load_traces(&input_or(cli, &dir, "dataset.csv"), segments)?;
            let t = e.train_classifier(&traces)?;
            e.save_training(&dir, &t)?;
            println!(
                "cv misclassification {}%, test misclassification {}%",
                t.cv.metrics.misclassification_percent(),
                t.test.misclassification_percent()
            );
        }
        Command::EvalClf => {
            let model = load_model(&cli.model.clone().unwrap_or_else(|| dir.join("model.json")))?;
            let traces = load_traces(&input_or(cli, &dir, "dataset.csv"), segments)?;
            let metrics = evaluate(&model, &traces);
            let text = json(&metrics)?;
            write_file(&dir.join("eval.json"), &text)?;
            print!("{text}");
        }
        Command::Compare => {
            let dmp_path = dir.join("dmp.json");
            let e = Experiment::prepare(config)?;
            let summary = match &cli.model {
                Some(path) => {
                    let model = load_model(path)?;
                    let c = e.compare(&model, e.config.n_compare)?;
                    e.save_comparison(&dir, &c, None::<ClassifierSummary>)?
                }
                None => e.run_all(&dir)?,
            };
            write_file(&dmp_path, &e.dmp.to_json()?)?;
            print!("{}", json(&summary)?);
        }
        Command::Stats => {
            let traces = load_traces(&input_or(cli, &dir, "dataset.csv"), segments)?;
            let joints = config.arm.link_lengths.len();
            let stats = torque_stats(&traces, joints, segments)?;
            write_file(&dir.join("torque_stats.csv"), &stats_csv(&stats)?)?;
        }
        Command::Replay => {
            let input = input_or(cli, &dir, "compare_open.csv");
            let mut trials = read_trials_csv(&read_file(&input)?)?;
            if let Some(mode) = cli.mode {
                let mode = Mode::from(mode);
                trials.retain(|t| t.mode == mode);
            }
            let worlds_path = cli.worlds.clone().unwrap_or_else(|| {
                let name = if input
                    .file_name()
                    .is_some_and(|n| n.to_string_lossy().starts_with("compare"))
                {
                    "compare_worlds.json"
                } else {
                    "collect_worlds.json"
                };
                input.with_file_name(name)
            });
            let worlds = read_worlds_json(&read_file(&worlds_path)?)?;
            let results = replay(&trials, &worlds, &config)?;
            let agree = results.iter().filter(|r| r.stored == r.rejudged).count();
            for r in results.iter().filter(|r| r.stored != r.rejudged) {
                println!(
                    "trial {} ({}): stored {} rejudged {}",
                    r.trial_id,
                    r.mode.as_str(),
                    r.stored.as_str(),
                    r.rejudged.as_str()
                );
            }
            println!("{agree}/{} outcomes reproduced", results.len());
            if agree != results.len() {
                return Err(HarnessError::Data(
                    "replayed outcomes differ from stored ones".into(),
                ));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
