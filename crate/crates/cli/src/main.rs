//! `glossy` — rate-distortion diagnostics for latent variable models.
//!
//! Subcommands cover prior optimization, bound reports, the prior/channel
//! equivalence check, glossy statistics on linear-Gaussian models,
//! pushforward identity checks, synthetic dataset generation, and the
//! bound-convergence experiment. Every run is deterministic given
//! (config file, flags, seed); artifacts land in a directory named by the
//! hash of the resolved configuration.
//!
//! Exit codes: 0 success, 1 input/contract error, 2 non-convergence or a
//! failed check.

mod cmds;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "glossy",
    version,
    about = "Rate-distortion diagnostics for latent variable models"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub globals: GlobalArgs,
}

#[derive(Args)]
pub struct GlobalArgs {
    /// JSON config file; explicit flags override file values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// 64-bit seed for randomized operations.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Base output directory; artifacts land in `<out>/<config-hash>/`.
    #[arg(long, global = true, default_value = "runs")]
    pub out: PathBuf,
    /// Overwrite artifacts in an existing run directory.
    #[arg(long, global = true)]
    pub force: bool,
    /// Omit timestamps from reports so reruns are byte-identical.
    #[arg(long, global = true)]
    pub no_timestamp: bool,
}

#[derive(Subcommand)]
pub enum Command {
    /// Optimize the prior for a likelihood matrix by Blahut-Arimoto.
    Optimize(OptimizeArgs),
    /// Evaluate NLL bounds and the KKT certificate at a fixed prior.
    Bounds(BoundsArgs),
    /// Check that the prior-side optimum matches the channel-side Lagrangian.
    VerifyEquivalence(VerifyEquivalenceArgs),
    /// Glossy statistics of a linear-Gaussian model on a dataset.
    Glossy(GlossyArgs),
    /// Verify that a change of prior can be folded into the decoder.
    PushforwardCheck(PushforwardCheckArgs),
    /// Generate a template-plus-Bernoulli-noise dataset.
    SynthGen(SynthGenArgs),
    /// Run the bound-convergence experiment on a synthetic dataset.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
pub struct OptimizeArgs {
    /// Likelihood matrix CSV (header `id,z_1,...,z_M`, log-likelihoods in nats).
    #[arg(long)]
    pub lik: Option<PathBuf>,
    /// Initial prior JSON; uniform when omitted.
    #[arg(long)]
    pub prior: Option<PathBuf>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub gap_tol: Option<f64>,
    #[arg(long)]
    pub prune_tol: Option<f64>,
}

#[derive(Args)]
pub struct BoundsArgs {
    #[arg(long)]
    pub lik: Option<PathBuf>,
    /// Prior JSON; uniform when omitted.
    #[arg(long)]
    pub prior: Option<PathBuf>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// KKT certification tolerance in nats.
    #[arg(long)]
    pub kkt_tol: Option<f64>,
}

#[derive(Args)]
pub struct VerifyEquivalenceArgs {
    #[arg(long)]
    pub lik: Option<PathBuf>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub gap_tol: Option<f64>,
}

#[derive(Args)]
pub struct GlossyArgs {
    /// Linear-Gaussian model JSON (`A` row-major, `b`, `sigma`, `C` row-major).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Data CSV, one comma-separated vector per row.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Evidence mode: `exact` or `iwae`.
    #[arg(long)]
    pub evidence: Option<String>,
    /// Importance-sample count for `iwae` evidence.
    #[arg(long)]
    pub iwae_k: Option<usize>,
    #[arg(long)]
    pub kkt_tol: Option<f64>,
}

#[derive(Args)]
pub struct PushforwardCheckArgs {
    /// `linear` (closed form) or `mc` (inverse-CDF Monte Carlo).
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Target prior covariance factor: JSON array, k×k row-major (linear mode).
    #[arg(long)]
    pub target_cov: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Monte Carlo sample count (mc mode).
    #[arg(long)]
    pub n_mc: Option<usize>,
}

#[derive(Args)]
pub struct SynthGenArgs {
    /// Number of templates (ignored when --templates is given).
    #[arg(long)]
    pub n_templates: Option<usize>,
    /// Bits per template (ignored when --templates is given).
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub flip_prob: Option<f64>,
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long)]
    pub n_val: Option<usize>,
    #[arg(long)]
    pub n_test: Option<usize>,
    /// Template file (0/1 characters, one template per line).
    #[arg(long)]
    pub templates: Option<PathBuf>,
}

#[derive(Args)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub n_templates: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub flip_prob: Option<f64>,
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long)]
    pub n_val: Option<usize>,
    #[arg(long)]
    pub n_test: Option<usize>,
    /// Template file for the generator (random templates when omitted).
    #[arg(long)]
    pub templates: Option<PathBuf>,
    /// Add this many random distractor templates to the candidate support.
    #[arg(long)]
    pub distractors: Option<usize>,
    /// Drop this template index from the candidate support.
    #[arg(long)]
    pub omit_template: Option<usize>,
    /// Start from the skewed prior [0.91, 0.01, ...] instead of uniform.
    #[arg(long, action = clap::ArgAction::SetTrue)]
    pub skewed_init: Option<bool>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub gap_tol: Option<f64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match cmds::run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(1)
        }
    }
}
