//! Template-plus-Bernoulli-noise synthetic datasets and the desk-scale
//! bound-convergence experiment.
//!
//! The generator draws a latent template index from the prior and flips each
//! of its D binary pixels independently with probability p. The likelihood
//! matrix over any candidate template set is exact: entry (i, j) depends only
//! on the Hamming distance between data point i and template j, so the prior
//! optimum, the c(z) statistic and the bound sandwich can all be computed
//! without estimation error.

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ba::{optimize, BaConfig, BaResult, BaTrace};
use crate::error::{Error, Result};
use crate::model::{eval_nll, LogLikMatrix, PriorWeights};
use crate::numerics::SimplexVector;

/// Desk-scale defaults: T templates, D bits, flip probability, partition
/// sizes.
pub const DEFAULT_T: usize = 10;
pub const DEFAULT_D: usize = 64;
pub const DEFAULT_FLIP_PROB: f64 = 0.02;
pub const DEFAULT_SIZES: (usize, usize, usize) = (5000, 1000, 2000);

/// Ground-truth generator: distinct binary templates, a flip probability in
/// (0, 0.5), and a prior over templates.
#[derive(Debug, Clone)]
pub struct TemplateModel {
    templates: Vec<Vec<u8>>,
    flip_prob: f64,
    prior: SimplexVector,
}

impl TemplateModel {
    pub fn new(templates: Vec<Vec<u8>>, flip_prob: f64, prior: SimplexVector) -> Result<Self> {
        validate_templates(&templates)?;
        if prior.len() != templates.len() {
            return Err(Error::InvalidDimension(format!(
                "prior has {} atoms for {} templates",
                prior.len(),
                templates.len()
            )));
        }
        if !flip_prob.is_finite() || flip_prob <= 0.0 || flip_prob >= 0.5 {
            return Err(Error::InvalidConfig(format!(
                "flip_prob must lie strictly in (0, 0.5), got {flip_prob}"
            )));
        }
        Ok(Self {
            templates,
            flip_prob,
            prior,
        })
    }

    pub fn with_uniform_prior(templates: Vec<Vec<u8>>, flip_prob: f64) -> Result<Self> {
        let t = templates.len();
        if t == 0 {
            return Err(Error::InvalidDimension("no templates".into()));
        }
        let prior = crate::numerics::normalize(&vec![1.0; t])?;
        Self::new(templates, flip_prob, prior)
    }

    /// Random well-separated templates: uniform bits, rejection-sampled to a
    /// minimum pairwise Hamming distance of D/4.
    pub fn random(t: usize, d: usize, flip_prob: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let templates = sample_templates(t, d, d / 4, &mut rng)?;
        Self::with_uniform_prior(templates, flip_prob)
    }

    pub fn templates(&self) -> &[Vec<u8>] {
        &self.templates
    }

    pub fn n_templates(&self) -> usize {
        self.templates.len()
    }

    pub fn dim(&self) -> usize {
        self.templates[0].len()
    }

    pub fn flip_prob(&self) -> f64 {
        self.flip_prob
    }

    pub fn prior(&self) -> &SimplexVector {
        &self.prior
    }

    /// The prior as labelled weights aligned with the template order.
    pub fn prior_weights(&self) -> Result<PriorWeights> {
        PriorWeights::from_linear(
            PriorWeights::default_ids(self.n_templates()),
            self.prior.weights(),
        )
    }
}

fn validate_templates(templates: &[Vec<u8>]) -> Result<()> {
    if templates.is_empty() || templates[0].is_empty() {
        return Err(Error::InvalidDimension(
            "need at least one nonempty template".into(),
        ));
    }
    let d = templates[0].len();
    let mut seen = HashSet::new();
    for (i, t) in templates.iter().enumerate() {
        if t.len() != d {
            return Err(Error::InvalidDimension(format!(
                "template {i} has length {}, expected {d}",
                t.len()
            )));
        }
        if t.iter().any(|&b| b > 1) {
            return Err(Error::InvalidWeights(format!(
                "template {i} has a non-binary entry"
            )));
        }
        if !seen.insert(t.clone()) {
            return Err(Error::InvalidConfig(format!(
                "template {i} duplicates an earlier template"
            )));
        }
    }
    Ok(())
}

/// Rejection-samples `t` uniform binary vectors of length `d` with pairwise
/// Hamming distance at least `min_dist`.
pub fn sample_templates(
    t: usize,
    d: usize,
    min_dist: usize,
    rng: &mut impl Rng,
) -> Result<Vec<Vec<u8>>> {
    let mut templates: Vec<Vec<u8>> = Vec::with_capacity(t);
    let mut attempts = 0usize;
    while templates.len() < t {
        attempts += 1;
        if attempts > 10_000 * t {
            return Err(Error::InvalidConfig(format!(
                "cannot place {t} templates of dimension {d} at pairwise distance {min_dist}"
            )));
        }
        let cand: Vec<u8> = (0..d).map(|_| u8::from(rng.gen::<bool>())).collect();
        if templates
            .iter()
            .all(|existing| hamming(existing, &cand) >= min_dist)
        {
            templates.push(cand);
        }
    }
    Ok(templates)
}

pub fn hamming(a: &[u8], b: &[u8]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

/// Train/validation/test partitions with their generating latent indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub train: Vec<Vec<u8>>,
    pub validation: Vec<Vec<u8>>,
    pub test: Vec<Vec<u8>>,
    pub train_labels: Vec<usize>,
    pub validation_labels: Vec<usize>,
    pub test_labels: Vec<usize>,
    pub seed: u64,
}

/// Samples a dataset: latent index from the prior, then independent bit
/// flips. Deterministic per seed; each sample draws from its own
/// deterministic sub-stream, so the partitions are disjoint segments of one
/// stream family.
pub fn generate(
    model: &TemplateModel,
    sizes: (usize, usize, usize),
    seed: u64,
) -> Result<SynthDataset> {
    let (n_train, n_val, n_test) = sizes;
    if n_train == 0 || n_val == 0 || n_test == 0 {
        return Err(Error::InvalidConfig(
            "every partition size must be at least 1".into(),
        ));
    }
    let cumulative: Vec<f64> = model
        .prior
        .weights()
        .iter()
        .scan(0.0, |acc, &w| {
            *acc += w;
            Some(*acc)
        })
        .collect();

    let total = n_train + n_val + n_test;
    let mut data = Vec::with_capacity(total);
    let mut labels = Vec::with_capacity(total);
    for s in 0..total {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(s as u64);
        let u: f64 = rng.gen();
        let label = cumulative
            .iter()
            .position(|&c| u < c)
            .unwrap_or(model.n_templates() - 1);
        let mut bits = model.templates[label].clone();
        for bit in bits.iter_mut() {
            if rng.gen::<f64>() < model.flip_prob {
                *bit ^= 1;
            }
        }
        data.push(bits);
        labels.push(label);
    }

    let test = data.split_off(n_train + n_val);
    let validation = data.split_off(n_train);
    let train = data;
    let test_labels = labels.split_off(n_train + n_val);
    let validation_labels = labels.split_off(n_train);
    let train_labels = labels;
    Ok(SynthDataset {
        train,
        validation,
        test,
        train_labels,
        validation_labels,
        test_labels,
        seed,
    })
}

fn loglik_rows(templates: &[Vec<u8>], flip_prob: f64, data: &[Vec<u8>]) -> Result<LogLikMatrix> {
    let d = templates[0].len();
    let log_p = flip_prob.ln();
    let log_q = (1.0 - flip_prob).ln();
    let mut rows = Vec::with_capacity(data.len());
    for (i, x) in data.iter().enumerate() {
        if x.len() != d {
            return Err(Error::InvalidDimension(format!(
                "data point {i} has {} bits, templates have {d}",
                x.len()
            )));
        }
        let row: Vec<f64> = templates
            .iter()
            .map(|t| {
                let h = hamming(t, x) as f64;
                h * log_p + (d as f64 - h) * log_q
            })
            .collect();
        rows.push(row);
    }
    LogLikMatrix::from_rows(rows)
}

/// Exact log-likelihood matrix of `data` against the model's templates:
/// entry (i, j) = h·log p + (D − h)·log(1 − p) with h the Hamming distance.
pub fn exact_loglik_matrix(model: &TemplateModel, data: &[Vec<u8>]) -> Result<LogLikMatrix> {
    loglik_rows(&model.templates, model.flip_prob, data)
}

/// Exact NLL of data under the true model (true prior, exact matrix).
pub fn true_test_nll(model: &TemplateModel, test_data: &[Vec<u8>]) -> Result<f64> {
    let lik = exact_loglik_matrix(model, test_data)?;
    let prior = model.prior_weights()?;
    Ok(eval_nll(&lik, &prior, 1.0)?.nll())
}

/// Final summary of a bound-convergence experiment.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub converged: bool,
    pub iterations: usize,
    /// Converged upper bound (NLL on the test matrix).
    pub final_nll: f64,
    /// final_nll − final gap.
    pub lower_bound: f64,
    /// sup log c at the final prior.
    pub gap: f64,
    /// Exact NLL of the test data under the generating model.
    pub true_test_nll: f64,
    /// final_nll − true_test_nll; positive when the candidate support cannot
    /// represent the generator.
    pub excess_nll: f64,
    pub support_size: usize,
    /// Linear-domain converged weights over the candidate support.
    pub final_prior: Vec<f64>,
}

/// Optimizes the prior on the exact test-set likelihood matrix restricted to
/// `candidate_support`, which may or may not contain the true templates.
/// The per-iteration trace carries the exact upper bound, lower bound and
/// gap, since the latent alphabet is finite.
pub fn convergence_experiment(
    model: &TemplateModel,
    dataset: &SynthDataset,
    candidate_support: &[Vec<u8>],
    init: Option<&PriorWeights>,
    cfg: &BaConfig,
) -> Result<(ExperimentReport, BaResult)> {
    validate_templates(candidate_support)?;
    let lik = loglik_rows(candidate_support, model.flip_prob, &dataset.test)?;
    let result = optimize(&lik, init, cfg)?;
    let true_nll = true_test_nll(model, &dataset.test)?;
    let final_ev = eval_nll(&lik, &result.prior, cfg.alpha)?;
    let gap = final_ev.max_log_c().0.max(0.0);
    let report = ExperimentReport {
        converged: result.converged,
        iterations: result.trace.len(),
        final_nll: final_ev.nll(),
        lower_bound: final_ev.nll() - gap,
        gap,
        true_test_nll: true_nll,
        excess_nll: final_ev.nll() - true_nll,
        support_size: result.prior.support_size(),
        final_prior: result.prior.linear_weights(),
    };
    Ok((report, result))
}

/// Writes the experiment trace CSV: `iter,upper_bound,lower_bound,gap,std_log_c`.
pub fn write_experiment_trace_csv<W: Write>(trace: &BaTrace, mut w: W) -> Result<()> {
    writeln!(w, "iter,upper_bound,lower_bound,gap,std_log_c")?;
    for r in trace.records() {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.iter,
            r.nll,
            r.nll - r.max_log_c,
            r.max_log_c,
            r.std_log_c
        )?;
    }
    Ok(())
}

/// Sidecar metadata for a dataset on disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub seed: u64,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub flip_prob: f64,
    pub template_file: String,
}

/// Writes binary vectors, one per line as 0/1 characters.
pub fn write_binary_vectors<W: Write>(data: &[Vec<u8>], mut w: W) -> Result<()> {
    for row in data {
        let line: String = row
            .iter()
            .map(|&b| if b == 0 { '0' } else { '1' })
            .collect();
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Reads binary vectors in the 0/1-per-line format.
pub fn read_binary_vectors<R: Read>(reader: R) -> Result<Vec<Vec<u8>>> {
    let buf = BufReader::new(reader);
    let mut data = Vec::new();
    let mut width = None;
    for (idx, line) in buf.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let mut row = Vec::with_capacity(trimmed.len());
        for ch in trimmed.chars() {
            match ch {
                '0' => row.push(0u8),
                '1' => row.push(1u8),
                other => {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: format!("expected 0/1 characters, got '{other}'"),
                    })
                }
            }
        }
        if *width.get_or_insert(row.len()) != row.len() {
            return Err(Error::Parse {
                line: lineno,
                msg: "inconsistent vector width".into(),
            });
        }
        data.push(row);
    }
    if data.is_empty() {
        return Err(Error::InvalidDimension("no vectors in file".into()));
    }
    Ok(data)
}
