use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "phono",
    version,
    about = "Heart-sound classification and attribution pipeline"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// key=value configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Master seed for every random stream.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Run directory (for `synth`: the corpus directory).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Override one config key, e.g. `--set max_epochs=20`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic corpus (WAVs, REFERENCE.csv, events.csv).
    Synth {
        /// Recordings per class.
        #[arg(long)]
        per_class: Option<usize>,
    },
    /// Window the corpus and write the window manifest and fold plan.
    Prepare,
    /// Train every fold (skipping folds whose weights exist) and evaluate.
    Train,
    /// Re-evaluate saved fold weights.
    Eval,
    /// Explain selected windows with a trained fold model.
    Explain {
        /// shap, shap-intermediate or occlusion.
        #[arg(long)]
        method: Option<String>,
        /// Comma-separated window ids (`rec:index`) or recording ids.
        #[arg(long)]
        instance: Option<String>,
        /// Fold whose weights are explained.
        #[arg(long)]
        fold: Option<usize>,
        /// Sampled permutations for Shapley methods.
        #[arg(long)]
        permutations: Option<usize>,
    },
}
