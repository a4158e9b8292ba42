//! The `laban-guide` command line: argument parsing, configuration layering
//! and the exit-code contract. Command bodies live in [`commands`].

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::RunConfig;

use crate::error::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_UNEXPECTED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_EVALUATION: i32 = 4;

/// Stable mapping from errors to process exit codes.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NumericInstability { .. } => EXIT_NUMERIC,
        Error::DegenerateBaseline(_) | Error::Evaluation(_) => EXIT_EVALUATION,
        Error::Io { .. } | Error::Contract(_) => EXIT_UNEXPECTED,
        Error::InvalidConfig(_)
        | Error::InvalidMotion(_)
        | Error::MotionTooShort { .. }
        | Error::Dimension(_)
        | Error::Step(_)
        | Error::UnknownTag(_)
        | Error::ConflictingTags { .. }
        | Error::UnknownCondition(_)
        | Error::Dataset(_)
        | Error::Parse { .. } => EXIT_CONFIG,
    }
}

/// Declares a group of string-valued overrides, each routed through
/// [`RunConfig::set`] under its flag name.
macro_rules! overrides {
    ($(#[$meta:meta])* $name:ident { $($(#[doc = $doc:literal])* $field:ident => $key:literal),* $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Default, Args)]
        pub struct $name {
            $(
                $(#[doc = $doc])*
                #[arg(long = $key, value_name = "VALUE")]
                pub $field: Option<String>,
            )*
        }

        impl $name {
            fn pairs(&self) -> Vec<(&'static str, &str)> {
                let mut out = Vec::new();
                $(
                    if let Some(v) = &self.$field {
                        out.push(($key, v.as_str()));
                    }
                )*
                out
            }
        }
    };
}

overrides!(
    /// Options shared by every command.
    CommonArgs {
        /// Master seed
        seed => "seed",
    }
);

overrides!(
    /// Sampling, guidance and feature options.
    SamplingArgs {
        /// Sample every `stride`-th diffusion timestep (1 = all)
        stride => "stride",
        /// Adam learning rate of the embedding update
        lr => "lr",
        /// Adam betas as `b1,b2`
        betas => "betas",
        /// Stabiliser added to the baseline in the relative loss
        delta => "delta",
        /// Embedding updates per sampling step
        k => "k",
        /// Keep Adam moments across sampling steps (true/false)
        persist_adam => "persist-adam",
        /// Recompute the noise estimate after the update (true/false)
        recompute_eps => "recompute-eps",
        /// Loss above which a run counts as diverged
        max_loss => "max-loss",
        /// Relative embedding drift above which a run counts as diverged
        max_drift => "max-drift",
        /// Step size of classifier guidance
        lambda => "lambda",
        /// Iterations of the raw-frame baseline
        raw_steps => "raw-steps",
        /// Learning rate of the raw-frame baseline
        raw_lr => "raw-lr",
        /// Gaussian smoothing kernel size (odd)
        smooth_kernel => "smooth-kernel",
        /// Gaussian smoothing variance, in frames squared
        smooth_sigma2 => "smooth-sigma2",
    }
);

overrides!(
    /// Noise schedule and training options.
    TrainArgs {
        /// Diffusion timesteps
        steps => "steps",
        /// First beta of the linear schedule
        beta_min => "beta-min",
        /// Last beta of the linear schedule
        beta_max => "beta-max",
        /// Training iterations
        iterations => "iterations",
        /// Minibatch size
        batch_size => "batch-size",
        /// Training learning rate
        train_lr => "train-lr",
        /// Hidden layer width
        hidden => "hidden",
        /// Condition embedding size
        embed_dim => "embed-dim",
    }
);

overrides!(
    /// Evaluation grid options.
    EvalArgs {
        /// laban, raw-frame or classifier
        method => "method",
        /// Comma-separated condition ids (default: all)
        conditions => "conditions",
        /// Seeds per condition and row
        repeats => "repeats",
        /// Worker threads (0 = all cores)
        jobs => "jobs",
    }
);

overrides!(
    /// Synthetic corpus options.
    DatasetArgs {
        /// Motions per condition
        count => "count",
    }
);

/// Target selection for guided generation.
#[derive(Debug, Clone, Default, Args)]
pub struct TargetArgs {
    /// Laban tags, comma-separated or repeated (e.g. Strong,Sudden)
    #[arg(long = "tags", value_delimiter = ',', value_name = "TAG")]
    pub tags: Vec<String>,
    /// Explicit scale `component=value`, repeatable; applied after tags
    #[arg(long = "scale", value_name = "COMPONENT=VALUE")]
    pub scale: Vec<String>,
}

#[derive(Debug, Parser)]
#[command(
    name = "laban-guide",
    version,
    about = "Laban-movement guided diffusion sampling for motion generation"
)]
pub struct Cli {
    /// Flat `key = value` configuration file; command-line flags win
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the labelled synthetic motion corpus
    Dataset {
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
        /// Disable positional jitter
        #[arg(long)]
        no_jitter: bool,
        #[command(flatten)]
        data: DatasetArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Train the toy denoiser on a corpus and write a checkpoint
    Train {
        #[arg(long, value_name = "PATH")]
        dataset: PathBuf,
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Sample one unguided motion
    Generate {
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
        #[arg(long, value_name = "ID")]
        condition: Option<String>,
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
        #[command(flatten)]
        sampling: SamplingArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Two-step guided generation toward Laban tags or explicit scales
    Guide {
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
        #[arg(long, value_name = "ID")]
        condition: Option<String>,
        #[arg(long, value_name = "DIR")]
        out_dir: PathBuf,
        #[command(flatten)]
        target: TargetArgs,
        #[command(flatten)]
        sampling: SamplingArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Per-frame kinematics and Laban features of a motion file
    Analyze {
        motion: PathBuf,
        /// Output CSV; printed to stdout when omitted
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
        /// Add unsmoothed `raw_` columns next to the smoothed ones
        #[arg(long)]
        compare_smoothing: bool,
        /// Joint whose kinematics are reported (default: root or joint 0)
        #[arg(long, value_name = "NAME")]
        joint: Option<String>,
        /// End-effector joint names, comma-separated
        #[arg(long, value_delimiter = ',', value_name = "NAME")]
        effectors: Vec<String>,
        #[command(flatten)]
        sampling: SamplingArgs,
    },
    /// Relative-change matrix and diagonality of a guidance method
    Eval {
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
        #[arg(long, value_name = "DIR")]
        out_dir: PathBuf,
        /// Compare the large-tag run with the unguided baseline
        #[arg(long)]
        against_baseline: bool,
        #[command(flatten)]
        eval: EvalArgs,
        #[command(flatten)]
        sampling: SamplingArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Finite-difference checks of the analytic gradients
    Gradcheck {
        /// Model for the embedding check (default: an untrained one)
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_name = "N")]
        instances: Option<String>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Corpus, training, one guided run and both evaluations in one go
    Demo {
        #[arg(long, value_name = "DIR")]
        out_dir: PathBuf,
        #[command(flatten)]
        data: DatasetArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        eval: EvalArgs,
        #[command(flatten)]
        sampling: SamplingArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
}

/// Layers defaults, command presets, the config file and flags.
fn layered(
    preset: impl FnOnce(&mut RunConfig),
    file: Option<&PathBuf>,
    flags: Vec<(&'static str, &str)>,
) -> crate::Result<RunConfig> {
    let mut cfg = RunConfig::default();
    preset(&mut cfg);
    if let Some(path) = file {
        cfg.apply_file(path)?;
    }
    for (key, value) in flags {
        cfg.set(key, value)?;
    }
    Ok(cfg)
}

fn with_targets<'a>(
    mut flags: Vec<(&'static str, &'a str)>,
    t: &'a TargetArgs,
) -> Vec<(&'static str, &'a str)> {
    flags.extend(t.tags.iter().map(|v| ("tags", v.as_str())));
    flags.extend(t.scale.iter().map(|v| ("scale", v.as_str())));
    flags
}

fn dispatch(cli: Cli) -> crate::Result<()> {
    let file = cli.config.as_ref();
    match cli.command {
        Command::Dataset {
            out,
            no_jitter,
            data,
            common,
        } => {
            let mut flags = [data.pairs(), common.pairs()].concat();
            if no_jitter {
                flags.push(("jitter", "false"));
            }
            commands::dataset(&layered(|_| {}, file, flags)?, &out)
        }
        Command::Train {
            dataset,
            out,
            train,
            common,
        } => commands::train(
            &layered(|_| {}, file, [train.pairs(), common.pairs()].concat())?,
            &dataset,
            &out,
        ),
        Command::Generate {
            checkpoint,
            condition,
            out,
            sampling,
            common,
        } => {
            let mut flags = [sampling.pairs(), common.pairs()].concat();
            if let Some(c) = &condition {
                flags.push(("condition", c));
            }
            commands::generate(&layered(|_| {}, file, flags)?, &checkpoint, &out)
        }
        Command::Guide {
            checkpoint,
            condition,
            out_dir,
            target,
            sampling,
            common,
        } => {
            let mut flags = [sampling.pairs(), common.pairs()].concat();
            if let Some(c) = &condition {
                flags.push(("condition", c));
            }
            // Flag-level tags and scales replace those of the config file.
            let replace = !target.tags.is_empty() || !target.scale.is_empty();
            let cfg = layered(|_| {}, file, Vec::new())?;
            let mut cfg = if replace {
                RunConfig {
                    tags: Vec::new(),
                    scale: Vec::new(),
                    ..cfg
                }
            } else {
                cfg
            };
            for (key, value) in with_targets(flags, &target) {
                cfg.set(key, value)?;
            }
            commands::guide(&cfg, &checkpoint, &out_dir).map(|_| ())
        }
        Command::Analyze {
            motion,
            out,
            compare_smoothing,
            joint,
            effectors,
            sampling,
        } => {
            let mut flags = sampling.pairs();
            if compare_smoothing {
                flags.push(("compare-smoothing", "true"));
            }
            let cfg = layered(|_| {}, file, flags)?;
            commands::analyze(&cfg, &motion, out.as_deref(), joint.as_deref(), &effectors)
        }
        Command::Eval {
            checkpoint,
            out_dir,
            against_baseline,
            eval,
            sampling,
            common,
        } => {
            let mut flags = [eval.pairs(), sampling.pairs(), common.pairs()].concat();
            if against_baseline {
                flags.push(("against-baseline", "true"));
            }
            commands::eval(&layered(|_| {}, file, flags)?, &checkpoint, &out_dir).map(|_| ())
        }
        Command::Gradcheck {
            checkpoint,
            instances,
            common,
        } => {
            let mut flags = common.pairs();
            if let Some(n) = &instances {
                flags.push(("instances", n));
            }
            commands::gradcheck(&layered(|_| {}, file, flags)?, checkpoint.as_deref())
        }
        Command::Demo {
            out_dir,
            data,
            train,
            eval,
            sampling,
            common,
        } => {
            let flags = [
                data.pairs(),
                train.pairs(),
                eval.pairs(),
                sampling.pairs(),
                common.pairs(),
            ]
            .concat();
            commands::demo(&layered(commands::demo_preset, file, flags)?, &out_dir)
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Diagnostics go to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Installs the logger; verbosity comes from `LABAN_GUIDE_LOG` (default
/// `warn`).
pub fn init_logging() {
    let env = env_logger::Env::new().filter_or("LABAN_GUIDE_LOG", "warn");
    let _ = env_logger::Builder::from_env(env)
        .format_timestamp(None)
        .try_init();
}
