mod config;
mod store;

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use config::{Profile, RunConfig};
use shiftlab::bounds::verify_random_instances;
use shiftlab::datasets::DatasetKind;
use shiftlab::penalties::{Algorithm, ObjectiveConfig};
use shiftlab::tensor::write_checkpoint;
use shiftlab::trainer::{
    read_summary, render_markdown_table, run_experiment, run_trial_with_model, write_atomic, write_results_csv,
    write_summary, BatchSize, ExperimentConfig, LearningRate, PreparedData, TrialConfig, TrialResult,
};

#[derive(Parser)]
#[command(name = "shiftlab", version, about = "Covariate and concept alignment experiments on colored MNIST")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate and cache colored domain triples.
    Dataset {
        #[command(subcommand)]
        command: DatasetCommand,
    },
    /// Random search, model selection and repeats for every configured algorithm.
    Search(SearchArgs),
    /// Train and score a single configuration.
    Trial(TrialArgs),
    /// Exact checks of the unseen-risk bound on random discrete instances.
    Boundlab {
        #[command(subcommand)]
        command: BoundlabCommand,
    },
    /// Render a summary.json as a markdown accuracy table.
    Report(ReportArgs),
}

#[derive(Subcommand)]
enum DatasetCommand {
    Build(BuildArgs),
}

#[derive(Subcommand)]
enum BoundlabCommand {
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Cmnist,
    CsCmnist,
}

impl From<KindArg> for DatasetKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Cmnist => DatasetKind::Cmnist,
            KindArg::CsCmnist => DatasetKind::CsCmnist,
        }
    }
}

#[derive(Args)]
struct BuildArgs {
    #[arg(long, value_enum)]
    kind: KindArg,
    /// Directory holding the four MNIST IDX files, raw or gzipped.
    #[arg(long)]
    mnist_dir: PathBuf,
    #[arg(long, default_value_t = config::DEFAULT_DATA_SEED)]
    seed: u64,
    /// Output directory; defaults to $SHIFTLAB_CACHE, then ./shiftlab-cache.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_enum, default_value_t = Profile::Full)]
    profile: Profile,
    /// Trials trained concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Overrides `out_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct TrialArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_enum, default_value_t = Profile::Full)]
    profile: Profile,
    #[arg(long)]
    algorithm: Algorithm,
    #[arg(long, default_value_t = 0.0)]
    alpha: f64,
    #[arg(long, default_value_t = 0.0)]
    beta: f64,
    /// Required when the config searches over learning rates.
    #[arg(long)]
    lr: Option<f64>,
    /// Required when the config searches over batch sizes.
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the trained parameters as an SLT1 checkpoint.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 10_000)]
    instances: usize,
    #[arg(long, default_value_t = 5)]
    latent: usize,
    #[arg(long, default_value_t = 3)]
    classes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Also write the table to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    /// Bad flags, unreadable or invalid inputs.
    Input(String),
    /// A check ran and failed, or training broke.
    Check(String),
}

impl From<shiftlab::Error> for Failure {
    fn from(e: shiftlab::Error) -> Self {
        use shiftlab::Error::*;
        match e {
            Io(_) | Json(_) | Csv(_) | Format { .. } | Config(_) | Argument(_) => Failure::Input(e.to_string()),
            _ => Failure::Check(e.to_string()),
        }
    }
}

type Outcome = Result<(), Failure>;

fn read_config(path: &Path) -> Result<RunConfig, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn dataset_build(args: BuildArgs) -> Outcome {
    let kind = DatasetKind::from(args.kind);
    let dir = store::cache_dir(args.out.as_deref(), None);
    let domains = store::generate(kind, &args.mnist_dir, args.seed)?;
    let stats = store::save(&dir, &domains)?;
    for d in &stats.domains {
        println!(
            "{} domain {} ({:?}): {} items, P(C=Y) {:.4} (expected {:.4}), label flips {:.4} -> {}",
            kind.display_name(),
            d.index,
            d.role,
            d.size,
            d.color_label_agreement,
            d.expected_color_label_agreement,
            d.label_flip_rate,
            dir.join(&d.file).display()
        );
    }
    Ok(())
}

fn prepare(cfg: &RunConfig, exp: &ExperimentConfig) -> Result<PreparedData, Failure> {
    let seed = cfg.data_seed();
    let dir = store::cache_dir(None, cfg.cache_dir.as_deref());
    let domains = match store::load(&dir, cfg.dataset, seed)? {
        Some(d) => d,
        None => {
            let mnist = cfg.mnist_dir.clone().unwrap_or_else(|| PathBuf::from("data/mnist"));
            eprintln!("generating {} seed {seed} from {}", cfg.dataset.display_name(), mnist.display());
            let d = store::generate(cfg.dataset, &mnist, seed)?;
            store::save(&dir, &d)?;
            d
        }
    };
    Ok(PreparedData::new(domains, exp.val_fraction, seed)?)
}

fn search(args: SearchArgs) -> Outcome {
    let cfg = read_config(&args.config)?;
    let exp = cfg.experiment(args.profile)?;
    if args.jobs == 0 {
        return Err(Failure::Input("--jobs must be at least 1".into()));
    }
    let out_dir = args
        .out
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("runs").join(cfg.dataset.slug()));
    fs::create_dir_all(&out_dir).map_err(|e| Failure::Input(format!("{}: {e}", out_dir.display())))?;
    let data = prepare(&cfg, &exp)?;

    let quiet = args.quiet;
    let progress = move |r: &TrialResult| {
        if !quiet {
            eprintln!(
                "{} repeat {} trial {}: alpha {:.4e} beta {:.4e} val {:.4} unseen {:.4}{} ({:.1} s)",
                r.config.objective.algorithm,
                r.repeat,
                r.trial,
                r.config.objective.alpha,
                r.config.objective.beta,
                r.val_accuracy,
                r.test_accuracy,
                if r.failed { " FAILED" } else { "" },
                r.wall_time_s
            );
        }
    };
    let outcome = run_experiment(&exp, &data, args.jobs, &progress)?;

    write_results_csv(&out_dir.join("results.csv"), &outcome.results, &outcome.selected)?;
    let summaries = vec![outcome.summary];
    write_summary(&out_dir.join("summary.json"), &summaries)?;
    let table = render_markdown_table(&summaries);
    write_atomic(&out_dir.join("table.md"), table.as_bytes())?;
    print!("{table}");
    Ok(())
}

fn trial(args: TrialArgs) -> Outcome {
    let cfg = read_config(&args.config)?;
    let exp = cfg.experiment(args.profile)?;
    let lr = match (args.lr, exp.search.lr) {
        (Some(v), _) | (None, LearningRate::Fixed(v)) => v,
        (None, LearningRate::LogUniform { .. }) => return Err(Failure::Input("this config needs --lr".into())),
    };
    let batch_size = match (args.batch_size, exp.search.batch) {
        (Some(v), _) | (None, BatchSize::Fixed(v)) => v,
        (None, BatchSize::PowerOfTwo { .. }) => return Err(Failure::Input("this config needs --batch-size".into())),
    };
    let config = TrialConfig {
        objective: ObjectiveConfig {
            algorithm: args.algorithm,
            alpha: args.alpha,
            beta: args.beta,
            warmup_steps: exp.warmup_steps,
        },
        lr,
        batch_size,
        total_steps: exp.total_steps,
        lr_decay_at: exp.lr_decay_at,
        lr_decay_factor: exp.lr_decay_factor,
        seed: args.seed,
        dataset_kind: cfg.dataset,
    };
    config.validate()?;
    let data = prepare(&cfg, &exp)?;
    let (result, net) = run_trial_with_model(&config, &data)?;
    println!("{}", serde_json::to_string_pretty(&result).map_err(shiftlab::Error::from)?);
    if let Some(path) = args.checkpoint {
        let net = net.ok_or_else(|| Failure::Check("training diverged; no checkpoint written".into()))?;
        let file = File::create(&path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
        write_checkpoint(&net.params, BufWriter::new(file))?;
    }
    if result.failed {
        return Err(Failure::Check("training diverged".into()));
    }
    Ok(())
}

fn boundlab_verify(args: VerifyArgs) -> Outcome {
    let r = verify_random_instances(args.instances, args.latent, args.classes, args.seed)?;
    let show = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.6e}"));
    println!("checked: {}", r.checked);
    println!("violations: {}", r.violations);
    println!("min-slack: {}", show(r.min_slack));
    println!("min-corollary-margin: {}", show(r.min_corollary_margin));
    if r.violations > 0 {
        return Err(Failure::Check(format!("{} of {} instances violate the bound", r.violations, r.checked)));
    }
    Ok(())
}

fn report(args: ReportArgs) -> Outcome {
    let summaries = read_summary(&args.input).map_err(|e| Failure::Input(format!("{}: {e}", args.input.display())))?;
    let table = render_markdown_table(&summaries);
    print!("{table}");
    if let Some(out) = args.out {
        write_atomic(&out, table.as_bytes())?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            eprintln!("\n{}", Cli::command().render_usage());
            return ExitCode::from(2);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    let outcome = match cli.command {
        Command::Dataset { command: DatasetCommand::Build(a) } => dataset_build(a),
        Command::Search(a) => search(a),
        Command::Trial(a) => trial(a),
        Command::Boundlab { command: BoundlabCommand::Verify(a) } => boundlab_verify(a),
        Command::Report(a) => report(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
