//! Command implementations. Each resolves its parameters (flag over config
//! file over default), prepares the hash-named run directory, writes the
//! artifacts, and maps outcomes to exit codes.

use std::fs::File;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use glossy_core::ba::{optimize, BaConfig};
use glossy_core::continuous::{
    evidence_for_mode, glossy_run, pushforward_check, pushforward_check_mc, read_data_csv,
    EvidenceMode, LinearGaussianModelSpec, PushforwardReport,
};
use glossy_core::model::{eval_nll, kkt_check, LogLikMatrix, PriorWeights};
use glossy_core::rd::{verify_equivalence, EquivalenceReport};
use glossy_core::synth::{
    convergence_experiment, generate, read_binary_vectors, sample_templates, write_binary_vectors,
    write_experiment_trace_csv, DatasetMeta, ExperimentReport, TemplateModel, DEFAULT_D,
    DEFAULT_FLIP_PROB, DEFAULT_SIZES, DEFAULT_T,
};
use glossy_core::{Error, Result};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{FileConfig, Metadata, RunCtx};
use crate::{Cli, Command, GlobalArgs};

pub fn run(cli: Cli) -> Result<u8> {
    let file_cfg = FileConfig::load(cli.globals.config.as_deref())?;
    let seed = cli.globals.seed.or(file_cfg.seed);
    let globals = &cli.globals;
    match cli.command {
        Command::Optimize(args) => cmd_optimize(args, &file_cfg, globals, seed),
        Command::Bounds(args) => cmd_bounds(args, &file_cfg, globals, seed),
        Command::VerifyEquivalence(args) => cmd_verify_equivalence(args, &file_cfg, globals, seed),
        Command::Glossy(args) => cmd_glossy(args, &file_cfg, globals, seed),
        Command::PushforwardCheck(args) => cmd_pushforward_check(args, &file_cfg, globals, seed),
        Command::SynthGen(args) => cmd_synth_gen(args, &file_cfg, globals, seed),
        Command::Experiment(args) => cmd_experiment(args, &file_cfg, globals, seed),
    }
}

fn require_path(flag: Option<PathBuf>, fallback: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    flag.or_else(|| fallback.clone())
        .ok_or_else(|| Error::InvalidConfig(format!("missing required input: {what}")))
}

fn open(path: &Path) -> Result<File> {
    File::open(path)
        .map_err(|e| Error::InvalidConfig(format!("cannot open {}: {e}", path.display())))
}

/// Upper/lower bound report with the glossy statistics of the run.
#[derive(Serialize)]
struct BoundsReport {
    nll_upper: f64,
    nll_lower: f64,
    gap: f64,
    glossy_max: f64,
    glossy_std: f64,
    certificate: &'static str,
    metadata: Metadata,
}

fn bounds_report(
    nll: f64,
    glossy_max: f64,
    glossy_std: f64,
    certified: bool,
    metadata: Metadata,
) -> BoundsReport {
    // The true sup of log c is nonnegative; a negative sampled maximum only
    // underestimates it, so the reported gap clamps at zero.
    let gap = glossy_max.max(0.0);
    BoundsReport {
        nll_upper: nll,
        nll_lower: nll - gap,
        gap,
        glossy_max,
        glossy_std,
        certificate: if certified { "pass" } else { "fail" },
        metadata,
    }
}

#[derive(Serialize)]
struct ResolvedBa<'a> {
    command: &'static str,
    lik: &'a Path,
    prior: Option<&'a Path>,
    alpha: f64,
    max_iters: usize,
    gap_tol: f64,
    prune_tol: f64,
    kkt_tol: f64,
    seed: Option<u64>,
}

fn load_matrix_and_init(
    lik_path: &Path,
    prior_path: Option<&Path>,
) -> Result<(LogLikMatrix, Vec<String>, Option<PriorWeights>)> {
    let (lik, support_ids) = LogLikMatrix::read_csv(open(lik_path)?)?;
    let init = match prior_path {
        Some(p) => {
            let prior = PriorWeights::read_json(open(p)?)?;
            if prior.support_ids() != support_ids.as_slice() {
                return Err(Error::InvalidConfig(format!(
                    "prior support ids {:?} do not match matrix header {:?}",
                    prior.support_ids(),
                    support_ids
                )));
            }
            Some(prior)
        }
        None => None,
    };
    Ok((lik, support_ids, init))
}

fn cmd_optimize(
    args: crate::OptimizeArgs,
    cfg: &FileConfig,
    globals: &GlobalArgs,
    seed: Option<u64>,
) -> Result<u8> {
    let lik_path = require_path(args.lik, &cfg.lik, "--lik")?;
    let prior_path = args.prior.or_else(|| cfg.prior.clone());
    let ba = BaConfig {
        alpha: args.alpha.or(cfg.alpha).unwrap_or(1.0),
        max_iters: args.max_iters.or(cfg.max_iters).unwrap_or(10_000),
        gap_tol: args.gap_tol.or(cfg.gap_tol).unwrap_or(1e-6),
        prune_tol: args.prune_tol.or(cfg.prune_tol).unwrap_or(1e-12),
    };
    let resolved = ResolvedBa {
        command: "optimize",
        lik: &lik_path,
        prior: prior_path.as_deref(),
        alpha: ba.alpha,
        max_iters: ba.max_iters,
        gap_tol: ba.gap_tol,
        prune_tol: ba.prune_tol,
        kkt_tol: ba.gap_tol,
        seed,
    };
    let ctx = RunCtx::prepare(
        &globals.out,
        &resolved,
        seed,
        globals.force,
        globals.no_timestamp,
    )?;

    let (lik, support_ids, init) = load_matrix_and_init(&lik_path, prior_path.as_deref())?;
    let init = match init {
        Some(p) => Some(p),
        None => Some(PriorWeights::uniform_with_ids(support_ids)?),
    };
    let result = optimize(&lik, init.as_ref(), &ba)?;

    result.prior.write_json(ctx.create("prior.json")?)?;
    result.trace.write_csv(ctx.create("trace.csv")?)?;
    let final_ev = eval_nll(&lik, &result.prior, ba.alpha)?;
    let report = bounds_report(
        final_ev.nll(),
        final_ev.max_log_c().0,
        final_ev.std_log_c(),
        result.certificate.holds,
        ctx.metadata.clone(),
    );
    ctx.write_json("bounds_report.json", &report)?;

    println!(
        "optimize: converged={} iterations={} nll={:.9} gap={:.3e} -> {}",
        result.converged,
        result.trace.len(),
        report.nll_upper,
        report.gap,
        ctx.dir.display()
    );
    Ok(if result.converged { 0 } else { 2 })
}

fn cmd_bounds(
    args: crate::BoundsArgs,
    cfg: &FileConfig,
    globals: &GlobalArgs,
    seed: Option<u64>,
) -> Result<u8> {
    let lik_path = require_path(args.lik, &cfg.lik, "--lik")?;
    let prior_path = args.prior.or_else(|| cfg.prior.clone());
    let alpha = args.alpha.or(cfg.alpha).unwrap_or(1.0);
    let kkt_tol = args.kkt_tol.or(cfg.kkt_tol).unwrap_or(1e-6);
    let resolved = ResolvedBa {
        command: "bounds",
        lik: &lik_path,
        prior: prior_path.as_deref(),
        alpha,
        max_iters: 0,
        gap_tol: 0.0,
        prune_tol: 0.0,
        kkt_tol,
        seed,
    };
    let ctx = RunCtx::prepare(
        &globals.out,
        &resolved,
        seed,
        globals.force,
        globals.no_timestamp,
    )?;

    let (lik, support_ids, init) = load_matrix_and_init(&lik_path, prior_path.as_deref())?;
    let prior = match init {
        Some(p) => p,
        None => PriorWeights::uniform_with_ids(support_ids)?,
    };
    let ev = eval_nll(&lik, &prior, alpha)?;
    let cert = kkt_check(&ev, &prior, kkt_tol)?;
    let report = bounds_report(
        ev.nll(),
        ev.max_log_c().0,
        ev.std_log_c(),
        cert.holds,
        ctx.metadata.clone(),
    );
    ctx.write_json("bounds_report.json", &report)?;
    println!(
        "bounds: nll_upper={:.9} nll_lower={:.9} gap={:.3e} certificate={} -> {}",
        report.nll_upper,
        report.nll_lower,
        report.gap,
        report.certificate,
        ctx.dir.display()
    );
    Ok(0)
}

#[derive(Serialize)]
struct EquivalenceArtifact {
    #[serde(flatten)]
    report: EquivalenceReport,
    metadata: Metadata,
}

fn cmd_verify_equivalence(
    args: crate::VerifyEquivalenceArgs,
    cfg: &FileConfig,
    globals: &GlobalArgs,
    seed: Option<u64>,
) -> Result<u8> {
    let lik_path = require_path(args.lik, &cfg.lik, "--lik")?;
    let alpha = args.alpha.or(cfg.alpha).unwrap_or(1.0);
    let ba = BaConfig {
        alpha,
        max_iters: args.max_iters.or(cfg.max_iters).unwrap_or(10_000),
        gap_tol: args.gap_tol.or(cfg.gap_tol).unwrap_or(1e-6),
        ..BaConfig::default()
    };
    let resolved = ResolvedBa {
        command: "verify-equivalence",
        lik: &lik_path,
        prior: None,
        alpha,
        max_iters: ba.max_iters,
        gap_tol: ba.gap_tol,
        prune_tol: ba.prune_tol,
        kkt_tol: ba.gap_tol,
        seed,
    };
    let ctx = RunCtx::prepare(
        &globals.out,
        &resolved,
        seed,
        globals.force,
        globals.no_timestamp,
    )?;

    let (lik, _ids) = LogLikMatrix::read_csv(open(&lik_path)?)?;
    let report = verify_equivalence(&lik, alpha, &ba)?;
    let passed = report.passed;
    ctx.write_json(
        "equivalence_report.json",
        &EquivalenceArtifact {
            report,
            metadata: ctx.metadata.clone(),
        },
    )?;
    println!(
        "verify-equivalence: passed={passed} -> {}",
        ctx.dir.display()
    );
    Ok(if passed { 0 } else { 2 })
}

#[derive(Serialize)]
struct ResolvedGlossy<'a> {
    command: &'static str,
    model: &'a Path,
    data: &'a Path,
    evidence: &'a str,
    iwae_k: usize,
    kkt_tol: f64,
    seed: Option<u64>,
}

fn cmd_glossy(
    args: crate::GlossyArgs,
    cfg: &FileConfig,
    globals: &GlobalArgs,
    seed: Option<u64>,
) -> Result<u8> {
    let model_path = require_path(args.model, &cfg.model, "--model")?;
    let data_path = require_path(args.data, &cfg.data, "--data")?;
    let evidence = args
        .evidence
        .or_else(|| cfg.evidence.clone())
        .unwrap_or_else(|| "exact".to_string());
    let iwae_k = args.iwae_k.or(cfg.iwae_k).unwrap_or(100);
    let kkt_tol = args.kkt_tol.or(cfg.kkt_tol).unwrap_or(1e-6);
    let mode = match evidence.as_str() {
        "exact" => EvidenceMode::Exact,
        "iwae" => EvidenceMode::Iwae {
            k: iwae_k,
            seed: seed.unwrap_or(0),
        },
        other => {
            return Err(Error::InvalidConfig(format!(
                "evidence mode must be 'exact' or 'iwae', got '{other}'"
            )))
        }
    };
    let resolved = ResolvedGlossy {
        command: "glossy",
        model: &model_path,
        data: &data_path,
        evidence: &evidence,
        iwae_k,
        kkt_tol,
        seed,
    };
    let ctx = RunCtx::prepare(
        &globals.out,
        &resolved,
        seed,
        globals.force,
        globals.no_timestamp,
    )?;

    let model = LinearGaussianModelSpec::read_json(open(&model_path)?)?.to_model()?;
    let data = read_data_csv(open(&data_path)?)?;
    let log_evidence = evidence_for_mode(&model, &data, mode)?;
    let nll = -(log_evidence.iter().sum::<f64>() / data.len() as f64);
    let (sample, stats) = glossy_run(&model, &data, mode)?;

    let mut sample_csv = ctx.create("sample.csv")?;
    let header: Vec<String> = (1..=model.latent_dim()).map(|j| format!("z_{j}")).collect();
    writeln!(sample_csv, "{},log_c", header.join(","))?;
    for (z, lc) in sample.latent_points.iter().zip(&sample.log_c_values) {
        let coords: Vec<String> = z.iter().map(|v| v.to_string()).collect();
        writeln!(sample_csv, "{},{lc}", coords.join(","))?;
    }

    let report = bounds_report(
        nll,
        stats.max_stat,
        stats.std_stat,
        stats.max_stat <= kkt_tol,
        ctx.metadata.clone(),
    );
    ctx.write_json("bounds_report.json", &report)?;
    println!(
        "glossy: nll={:.9} glossy_max={:.6} glossy_std={:.6} -> {}",
        report.nll_upper,
        report.glossy_max,
        report.glossy_std,
        ctx.dir.display()
    );
    Ok(0)
}

#[derive(Serialize)]
struct ResolvedPushforward<'a> {
    command: &'static str,
    mode: &'a str,
    model: &'a Path,
    target_cov: Option<&'a Path>,
    data: &'a Path,
    n_mc: usize,
    seed: Option<u64>,
}

#[derive(Serialize)]
struct PushforwardArtifact {
    #[serde(flatten)]
    report: PushforwardReport,
    metadata: Metadata,
}

fn cmd_pushforward_check(
    args: crate::PushforwardCheckArgs,
    cfg: &FileConfig,
    globals: &GlobalArgs,
    seed: Option<u64>,
) -> Result<u8> {
    let mode = args
        .mode
        .or_else(|| cfg.mode.clone())
        .unwrap_or_else(|| "linear".to_string());
    let model_path = require_path(args.model, &cfg.model, "--model")?;
    let data_path = require_path(args.data, &cfg.data, "--data")?;
    let target_cov_path = args.target_cov.or_else(|| cfg.target_cov.clone());
    let n_mc = args.n_mc.or(cfg.n_mc).unwrap_or(100_000);
    let resolved = ResolvedPushforward {
        command: "pushforward-check",
        mode: &mode,
        model: &model_path,
        target_cov: target_cov_path.as_deref(),
        data: &data_path,
        n_mc,
        seed,
    };
    let ctx = RunCtx::prepare(
        &globals.out,
        &resolved,
        seed,
        globals.force,
        globals.no_timestamp,
    )?;

    let model = LinearGaussianModelSpec::read_json(open(&model_path)?)?.to_model()?;
    let data = read_data_csv(open(&data_path)?)?;
    let report = match mode.as_str() {
        "linear" => {
            let path = target_cov_path.ok_or_else(|| {
                Error::InvalidConfig("linear mode needs --target-cov".to_string())
            })?;
            let entries: Vec<f64> = serde_json::from_reader(open(&path)?)?;
            let k = model.latent_dim();
            if entries.len() != k * k {
                return Err(Error::InvalidDimension(format!(
                    "target covariance factor has {} entries, expected {}",
                    entries.len(),
                    k * k
                )));
            }
            let target = DMatrix::from_row_slice(k, k, &entries);
            pushforward_check(&model, &target, &data)?
        }
        "mc" => {
            let source = cfg.source_dists.clone().ok_or_else(|| {
                Error::InvalidConfig("mc mode needs source_dists in the config file".to_string())
            })?;
            let target = cfg.target_dists.clone().ok_or_else(|| {
                Error::InvalidConfig("mc mode needs target_dists in the config file".to_string())
            })?;
            pushforward_check_mc(
                &source,
                &target,
                |x, z| model.log_lik(x, z),
                &data,
                n_mc,
                seed.unwrap_or(0),
            )?
        }
        other => {
            return Err(Error::InvalidConfig(format!(
                "mode must be 'linear' or 'mc', got '{other}'"
            )))
        }
    };
    let passed = report.passed;
    ctx.write_json(
        "pushforward_report.json",
        &PushforwardArtifact {
            report,
            metadata: ctx.metadata.clone(),
        },
    )?;
    println!(
        "pushforward-check: mode={mode} passed={passed} -> {}",
        ctx.dir.display()
    );
    Ok(if passed { 0 } else { 2 })
}

#[derive(Serialize)]
struct ResolvedSynth<'a> {
    command: &'static str,
    n_templates: usize,
    dim: usize,
    flip_prob: f64,
    n_train: usize,
    n_val: usize,
    n_test: usize,
    templates: Option<&'a Path>,
    seed: u64,
}

struct SynthParams {
    n_templates: usize,
    dim: usize,
    flip_prob: f64,
    sizes: (usize, usize, usize),
    templates: Option<PathBuf>,
    seed: u64,
}

fn build_template_model(params: &SynthParams) -> Result<TemplateModel> {
    match &params.templates {
        Some(path) => {
            let templates = read_binary_vectors(open(path)?)?;
            TemplateModel::with_uniform_prior(templates, params.flip_prob)
        }
        None => TemplateModel::random(
            params.n_templates,
            params.dim,
            params.flip_prob,
            params.seed,
        ),
    }
}

fn write_labels(ctx: &RunCtx, name: &str, labels: &[usize]) -> Result<()> {
    let mut f = ctx.create(name)?;
    for l in labels {
        writeln!(f, "{l}")?;
    }
    Ok(())
}

fn cmd_synth_gen(
    args: crate::SynthGenArgs,
    cfg: &FileConfig,
    globals: &GlobalArgs,
    seed: Option<u64>,
) -> Result<u8> {
    let params = SynthParams {
        n_templates: args.n_templates.or(cfg.n_templates).unwrap_or(DEFAULT_T),
        dim: args.dim.or(cfg.dim).unwrap_or(DEFAULT_D),
        flip_prob: args
            .flip_prob
            .or(cfg.flip_prob)
            .unwrap_or(DEFAULT_FLIP_PROB),
        sizes: (
            args.n_train.or(cfg.n_train).unwrap_or(DEFAULT_SIZES.0),
            args.n_val.or(cfg.n_val).unwrap_or(DEFAULT_SIZES.1),
            args.n_test.or(cfg.n_test).unwrap_or(DEFAULT_SIZES.2),
        ),
        templates: args.templates.or_else(|| cfg.templates.clone()),
        seed: seed.unwrap_or(0),
    };
    let resolved = ResolvedSynth {
        command: "synth-gen",
        n_templates: params.n_templates,
        dim: params.dim,
        flip_prob: params.flip_prob,
        n_train: params.sizes.0,
        n_val: params.sizes.1,
        n_test: params.sizes.2,
        templates: params.templates.as_deref(),
        seed: params.seed,
    };
    let ctx = RunCtx::prepare(
        &globals.out,
        &resolved,
        Some(params.seed),
        globals.force,
        globals.no_timestamp,
    )?;

    let model = build_template_model(&params)?;
    let dataset = generate(&model, params.sizes, params.seed.wrapping_add(1))?;

    write_binary_vectors(model.templates(), ctx.create("templates.txt")?)?;
    write_binary_vectors(&dataset.train, ctx.create("train.txt")?)?;
    write_binary_vectors(&dataset.validation, ctx.create("validation.txt")?)?;
    write_binary_vectors(&dataset.test, ctx.create("test.txt")?)?;
    write_labels(&ctx, "train_labels.txt", &dataset.train_labels)?;
    write_labels(&ctx, "validation_labels.txt", &dataset.validation_labels)?;
    write_labels(&ctx, "test_labels.txt", &dataset.test_labels)?;

    #[derive(Serialize)]
    struct MetaArtifact {
        #[serde(flatten)]
        meta: DatasetMeta,
        metadata: Metadata,
    }
    ctx.write_json(
        "meta.json",
        &MetaArtifact {
            meta: DatasetMeta {
                seed: params.seed,
                n_train: params.sizes.0,
                n_val: params.sizes.1,
                n_test: params.sizes.2,
                flip_prob: params.flip_prob,
                template_file: "templates.txt".to_string(),
            },
            metadata: ctx.metadata.clone(),
        },
    )?;
    println!(
        "synth-gen: {} templates x {} bits, {}+{}+{} samples -> {}",
        model.n_templates(),
        model.dim(),
        params.sizes.0,
        params.sizes.1,
        params.sizes.2,
        ctx.dir.display()
    );
    Ok(0)
}

#[derive(Serialize)]
struct ResolvedExperiment<'a> {
    command: &'static str,
    n_templates: usize,
    dim: usize,
    flip_prob: f64,
    n_train: usize,
    n_val: usize,
    n_test: usize,
    templates: Option<&'a Path>,
    distractors: usize,
    omit_template: Option<usize>,
    skewed_init: bool,
    alpha: f64,
    max_iters: usize,
    gap_tol: f64,
    seed: u64,
}

#[derive(Serialize)]
struct ExperimentArtifact {
    #[serde(flatten)]
    report: ExperimentReport,
    metadata: Metadata,
}

fn cmd_experiment(
    args: crate::ExperimentArgs,
    cfg: &FileConfig,
    globals: &GlobalArgs,
    seed: Option<u64>,
) -> Result<u8> {
    let params = SynthParams {
        n_templates: args.n_templates.or(cfg.n_templates).unwrap_or(DEFAULT_T),
        dim: args.dim.or(cfg.dim).unwrap_or(DEFAULT_D),
        flip_prob: args
            .flip_prob
            .or(cfg.flip_prob)
            .unwrap_or(DEFAULT_FLIP_PROB),
        sizes: (
            args.n_train.or(cfg.n_train).unwrap_or(DEFAULT_SIZES.0),
            args.n_val.or(cfg.n_val).unwrap_or(DEFAULT_SIZES.1),
            args.n_test.or(cfg.n_test).unwrap_or(DEFAULT_SIZES.2),
        ),
        templates: args.templates.or_else(|| cfg.templates.clone()),
        seed: seed.unwrap_or(0),
    };
    let distractors = args.distractors.or(cfg.distractors).unwrap_or(0);
    let omit_template = args.omit_template.or(cfg.omit_template);
    let skewed_init = args
        .skewed_init
        .filter(|&set| set)
        .or(cfg.skewed_init)
        .unwrap_or(false);
    let ba = BaConfig {
        alpha: args.alpha.or(cfg.alpha).unwrap_or(1.0),
        max_iters: args.max_iters.or(cfg.max_iters).unwrap_or(10_000),
        gap_tol: args.gap_tol.or(cfg.gap_tol).unwrap_or(1e-6),
        ..BaConfig::default()
    };
    let resolved = ResolvedExperiment {
        command: "experiment",
        n_templates: params.n_templates,
        dim: params.dim,
        flip_prob: params.flip_prob,
        n_train: params.sizes.0,
        n_val: params.sizes.1,
        n_test: params.sizes.2,
        templates: params.templates.as_deref(),
        distractors,
        omit_template,
        skewed_init,
        alpha: ba.alpha,
        max_iters: ba.max_iters,
        gap_tol: ba.gap_tol,
        seed: params.seed,
    };
    let ctx = RunCtx::prepare(
        &globals.out,
        &resolved,
        Some(params.seed),
        globals.force,
        globals.no_timestamp,
    )?;

    let model = build_template_model(&params)?;
    let dataset = generate(&model, params.sizes, params.seed.wrapping_add(1))?;

    let mut candidates: Vec<Vec<u8>> = model.templates().to_vec();
    if let Some(idx) = omit_template {
        if idx >= candidates.len() {
            return Err(Error::InvalidConfig(format!(
                "omit_template index {idx} out of range for {} templates",
                candidates.len()
            )));
        }
        candidates.remove(idx);
    }
    if distractors > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed.wrapping_add(2));
        let pool = sample_templates(distractors * 2 + 4, model.dim(), model.dim() / 4, &mut rng)?;
        let mut added = 0;
        for cand in pool {
            if added == distractors {
                break;
            }
            if !candidates.contains(&cand) {
                candidates.push(cand);
                added += 1;
            }
        }
        if added < distractors {
            return Err(Error::InvalidConfig(format!(
                "could only place {added} of {distractors} distinct distractors"
            )));
        }
    }

    let init = if skewed_init {
        let m = candidates.len();
        let mut w = vec![0.01; m];
        w[0] = 0.91;
        Some(PriorWeights::from_linear(PriorWeights::default_ids(m), &w)?)
    } else {
        None
    };

    let (report, result) =
        convergence_experiment(&model, &dataset, &candidates, init.as_ref(), &ba)?;
    write_experiment_trace_csv(&result.trace, ctx.create("trace.csv")?)?;
    let converged = report.converged;
    let summary = (
        report.final_nll,
        report.gap,
        report.true_test_nll,
        report.iterations,
    );
    ctx.write_json(
        "experiment_report.json",
        &ExperimentArtifact {
            report,
            metadata: ctx.metadata.clone(),
        },
    )?;
    println!(
        "experiment: converged={converged} iterations={} nll={:.6} gap={:.3e} true_nll={:.6} -> {}",
        summary.3,
        summary.0,
        summary.1,
        summary.2,
        ctx.dir.display()
    );
    Ok(if converged { 0 } else { 2 })
}
