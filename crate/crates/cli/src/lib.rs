//! Command implementations behind the `phono` binary.
//!
//! Every command is a function of its configuration, its input files and
//! the seed. Artifacts go to files; logs go to stderr.

mod args;
pub mod config;
pub mod corpus;
mod explain;
mod prepare;
pub mod run_dir;
mod synth;
mod train;

use std::path::Path;

pub use args::{Cli, Command, GlobalArgs};
pub use config::{BaselineMode, ExplainMethod, RunConfig, SegmenterMode};
pub use explain::cmd_explain;
pub use prepare::cmd_prepare;
pub use synth::cmd_synth;
pub use train::{cmd_eval, cmd_train};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl From<phono::Error> for CliError {
    fn from(e: phono::Error) -> Self {
        use phono::Error as E;
        match e {
            E::InvalidArgument(_) => CliError::Usage(e.to_string()),
            E::Numeric(_) => CliError::Runtime(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

/// Resolves the configuration: defaults, then the config file, then `--set`
/// overrides, then dedicated flags.
pub fn resolve_config(global: &GlobalArgs, command: &Command) -> Result<RunConfig, CliError> {
    let mut cfg = match &global.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    for kv in &global.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(seed) = global.seed {
        cfg.seed = seed;
    }
    if let Some(t) = global.threads {
        cfg.threads = Some(t);
    }
    if let Some(out) = &global.out {
        match command {
            Command::Synth { .. } => cfg.data_dir = out.clone(),
            _ => cfg.out = out.clone(),
        }
    }
    match command {
        Command::Synth { per_class: Some(n) } => cfg.synth_per_class = *n,
        Command::Explain {
            method,
            instance,
            fold,
            permutations,
        } => {
            if let Some(m) = method {
                cfg.method = m.parse()?;
            }
            if let Some(i) = instance {
                cfg.instance = Some(i.clone());
            }
            if let Some(f) = fold {
                cfg.explain_fold = *f;
            }
            if let Some(m) = permutations {
                cfg.permutations = *m;
            }
        }
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = resolve_config(&cli.global, &cli.command)?;
    if let Some(n) = cfg.threads {
        // Fails only if a pool already exists, in which case that one is used.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match cli.command {
        Command::Synth { .. } => cmd_synth(&cfg),
        Command::Prepare => cmd_prepare(&cfg).map(|_| ()),
        Command::Train => cmd_train(&cfg).map(|_| ()),
        Command::Eval => cmd_eval(&cfg).map(|_| ()),
        Command::Explain { .. } => cmd_explain(&cfg).map(|_| ()),
    }
}

/// Saves the resolved configuration next to a command's artifacts.
fn write_config_snapshot(dir: &Path, command: &str, cfg: &RunConfig) -> Result<(), CliError> {
    run_dir::write_atomic(&dir.join(format!("{command}.config")), cfg.to_text().as_bytes())
}
