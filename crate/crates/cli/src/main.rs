use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use selfhar::datakit::SynthConfig;
use selfhar::Result;
use selfhar_cli::{
    cmd_ablate, cmd_eval, cmd_export_embeddings, cmd_intensity_study, cmd_limited, cmd_run, cmd_synth_gen, Partition,
    RunConfig,
};

#[derive(Parser)]
#[command(name = "selfhar", version, about = "Semi-supervised activity recognition experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by the config-driven commands. Flags override file values.
#[derive(Args, Clone)]
struct Common {
    /// JSON experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run seed; for multi-seed commands it replaces the seed list.
    #[arg(long)]
    seed: Option<u64>,
    /// Upper bound on cells run in parallel.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Output root.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the resolved config as JSON and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic labeled.csv and unlabeled.csv.
    SynthGen {
        #[arg(long)]
        classes: Option<usize>,
        #[arg(long)]
        users: Option<usize>,
        #[arg(long)]
        windows_per_user_per_class: Option<usize>,
        #[arg(long)]
        unlabeled_users: Option<usize>,
        #[arg(long)]
        unlabeled_windows_per_user: Option<usize>,
        #[arg(long)]
        sampling_rate_hz: Option<f64>,
        #[arg(long)]
        noise_std: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "data")]
        out: PathBuf,
    },
    /// Run one configuration and evaluate it.
    Run(Common),
    /// All five configurations across seeds, standard and linear protocols.
    Ablate(Common),
    /// Label-budget sweep.
    Limited(Common),
    /// SelfHAR with unlabeled subsets of differing activity intensity.
    IntensityStudy(Common),
    /// Write pooled core features of a partition as CSV.
    ExportEmbeddings {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        partition: Partition,
        #[arg(long, default_value = "embeddings.csv")]
        output: PathBuf,
    },
    /// Score saved weights on the test partition.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long, default_value = "report.json")]
        output: PathBuf,
    },
}

fn resolve(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.pipeline.seed = seed;
        cfg.seeds = vec![seed];
    }
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    Ok(cfg)
}

/// Returns `None` when the config was only printed.
fn prepare_config(common: &Common) -> Result<Option<RunConfig>> {
    let cfg = resolve(common)?;
    if common.print_config {
        print!("{}", cfg.to_json()?);
        return Ok(None);
    }
    Ok(Some(cfg))
}

fn show(path: &Path) {
    println!("{}", path.display());
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::SynthGen {
            classes,
            users,
            windows_per_user_per_class,
            unlabeled_users,
            unlabeled_windows_per_user,
            sampling_rate_hz,
            noise_std,
            seed,
            out,
        } => {
            let mut c = SynthConfig::default();
            c.classes = classes.unwrap_or(c.classes);
            c.users = users.unwrap_or(c.users);
            c.windows_per_user_per_class = windows_per_user_per_class.unwrap_or(c.windows_per_user_per_class);
            c.unlabeled_users = unlabeled_users.unwrap_or(c.unlabeled_users);
            c.unlabeled_windows_per_user = unlabeled_windows_per_user.unwrap_or(c.unlabeled_windows_per_user);
            c.sampling_rate_hz = sampling_rate_hz.unwrap_or(c.sampling_rate_hz);
            c.noise_std = noise_std.unwrap_or(c.noise_std);
            c.seed = seed.unwrap_or(c.seed);
            c.validate()?;
            for p in cmd_synth_gen(&c, &out)? {
                show(&p);
            }
        }
        Command::Run(common) => {
            if let Some(cfg) = prepare_config(&common)? {
                show(&cmd_run(&cfg)?.dir);
            }
        }
        Command::Ablate(common) => {
            if let Some(cfg) = prepare_config(&common)? {
                show(&cmd_ablate(&cfg, common.jobs)?.0);
            }
        }
        Command::Limited(common) => {
            if let Some(cfg) = prepare_config(&common)? {
                show(&cmd_limited(&cfg, common.jobs)?.0);
            }
        }
        Command::IntensityStudy(common) => {
            if let Some(cfg) = prepare_config(&common)? {
                show(&cmd_intensity_study(&cfg, common.jobs)?.0);
            }
        }
        Command::ExportEmbeddings {
            common,
            weights,
            partition,
            output,
        } => {
            if let Some(cfg) = prepare_config(&common)? {
                cmd_export_embeddings(&cfg, &weights, partition, &output)?;
                show(&output);
            }
        }
        Command::Eval { common, weights, output } => {
            if let Some(cfg) = prepare_config(&common)? {
                let report = cmd_eval(&cfg, &weights, &output)?;
                println!("weighted_f1 {:.4}", report.weighted_f1.point);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SELFHAR_LOG", "info")).init();
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
