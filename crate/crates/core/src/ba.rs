//! Blahut-Arimoto prior optimization with bound-sandwich traces.
//!
//! The update p(z) ← p(z)·c(z) multiplies each atom by its c(z) factor and
//! renormalizes; the NLL is non-increasing along the iteration and the
//! per-iterate quantity sup_z log c(z) is exactly the gap between the trivial
//! upper bound and the information-theoretic lower bound, so it doubles as
//! the convergence measure.

use std::io::Write;

use crate::error::{Error, Result};
use crate::model::{
    eval_nll, kkt_check, LogLikMatrix, ModelEvaluation, OptimalityCertificate, PriorWeights,
};

/// Configuration for a Blahut-Arimoto run.
#[derive(Debug, Clone)]
pub struct BaConfig {
    /// Lagrangian exponent: the objective is −(1/N) Σ_i log Σ_j p_j ℓ_ij^α.
    pub alpha: f64,
    pub max_iters: usize,
    /// Convergence tolerance on sup log c(z), in nats.
    pub gap_tol: f64,
    /// Linear-domain weight below which atoms are pruned at termination.
    /// Atoms are never pruned mid-run: the update preserves zeros and
    /// mid-run pruning changes the reachable optimum.
    pub prune_tol: f64,
}

impl Default for BaConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            max_iters: 10_000,
            gap_tol: 1e-6,
            prune_tol: 1e-12,
        }
    }
}

impl BaConfig {
    pub fn validate(&self, n_support: usize) -> Result<()> {
        if !self.alpha.is_finite() || self.alpha <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "alpha must be a positive finite real, got {}",
                self.alpha
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be at least 1".into()));
        }
        if !self.gap_tol.is_finite() || self.gap_tol <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "gap_tol must be positive, got {}",
                self.gap_tol
            )));
        }
        if !self.prune_tol.is_finite()
            || self.prune_tol < 0.0
            || self.prune_tol >= 1.0 / n_support as f64
        {
            return Err(Error::InvalidConfig(format!(
                "prune_tol must lie in [0, 1/{n_support}), got {}",
                self.prune_tol
            )));
        }
        Ok(())
    }
}

/// One per-iteration record of the bound sandwich.
#[derive(Debug, Clone, PartialEq)]
pub struct BaTraceRecord {
    pub iter: usize,
    /// Current objective value (the trivial upper bound).
    pub nll: f64,
    /// sup_j log c(z_j): the exact gap to the lower bound. Nonnegative at
    /// any prior; rounding residue below zero is clamped.
    pub max_log_c: f64,
    /// Population standard deviation of the finite log c(z_j) values.
    pub std_log_c: f64,
    /// Number of atoms with weight above the prune threshold.
    pub support_size: usize,
}

/// Per-iteration history of an optimization run.
#[derive(Debug, Clone, Default)]
pub struct BaTrace {
    records: Vec<BaTraceRecord>,
}

impl BaTrace {
    pub fn records(&self) -> &[BaTraceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Writes the trace CSV: `iter,nll,max_log_c,std_log_c,support_size`,
    /// one row per iteration. Deterministic for a fixed config.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "iter,nll,max_log_c,std_log_c,support_size")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{},{}",
                r.iter, r.nll, r.max_log_c, r.std_log_c, r.support_size
            )?;
        }
        Ok(())
    }
}

/// Outcome of [`optimize`].
#[derive(Debug, Clone)]
pub struct BaResult {
    /// Final prior, pruned at `prune_tol` and renormalized. Pruned atoms
    /// keep their labels with zero weight so the support stays aligned with
    /// the matrix columns.
    pub prior: PriorWeights,
    pub trace: BaTrace,
    pub converged: bool,
    /// KKT certificate at the final prior, at tolerance `gap_tol`.
    pub certificate: OptimalityCertificate,
}

/// Support-size summary against the Lindsay bound (the optimal prior needs
/// at most as many atoms as there are distinct data points).
#[derive(Debug, Clone, serde::Serialize)]
pub struct SupportReport {
    pub support_size: usize,
    pub n_distinct_data: usize,
    pub violation: bool,
}

/// One Blahut-Arimoto update: log p_j + log c_j, renormalized. The analytic
/// sum is already 1, so renormalization only removes rounding drift.
pub fn ba_step(lik: &LogLikMatrix, prior: &PriorWeights, alpha: f64) -> Result<PriorWeights> {
    let ev = eval_nll(lik, prior, alpha)?;
    step_from_eval(prior, &ev)
}

fn step_from_eval(prior: &PriorWeights, ev: &ModelEvaluation) -> Result<PriorWeights> {
    let updated: Vec<f64> = prior
        .log_weights()
        .values()
        .iter()
        .zip(ev.log_c().values())
        .map(|(&lw, &lc)| lw + lc)
        .collect();
    PriorWeights::from_log_unnormalized(prior.support_ids().to_vec(), updated)
}

fn count_support(prior: &PriorWeights, prune_tol: f64) -> usize {
    prior
        .log_weights()
        .values()
        .iter()
        .filter(|&&lw| lw.exp() > prune_tol)
        .count()
}

fn prune(prior: &PriorWeights, prune_tol: f64) -> Result<PriorWeights> {
    let lw = prior.log_weights().values();
    if lw.iter().all(|&v| v.exp() >= prune_tol) {
        return Ok(prior.clone());
    }
    let pruned: Vec<f64> = lw
        .iter()
        .map(|&v| {
            if v.exp() < prune_tol {
                f64::NEG_INFINITY
            } else {
                v
            }
        })
        .collect();
    PriorWeights::from_log_unnormalized(prior.support_ids().to_vec(), pruned)
}

/// Runs Blahut-Arimoto from `init` (uniform when `None`) until the KKT
/// certificate holds at `gap_tol` or `max_iters` steps have been applied.
///
/// The iteration requires a full-support init: the multiplicative update
/// cannot revive a zeroed atom. Convergence demands both sup log c ≤ gap_tol
/// and |log c| ≤ gap_tol on every atom with weight above gap_tol, so a
/// converged result always carries a passing certificate.
pub fn optimize(
    lik: &LogLikMatrix,
    init: Option<&PriorWeights>,
    cfg: &BaConfig,
) -> Result<BaResult> {
    cfg.validate(lik.n_support())?;
    let mut prior = match init {
        Some(p) => {
            if p.len() != lik.n_support() {
                return Err(Error::InvalidDimension(format!(
                    "init has {} atoms but matrix has {} support columns",
                    p.len(),
                    lik.n_support()
                )));
            }
            if !p.has_full_support() {
                return Err(Error::InvalidInit(
                    "init must have full support; Blahut-Arimoto cannot revive a zeroed atom"
                        .into(),
                ));
            }
            p.clone()
        }
        None => PriorWeights::uniform(lik.n_support())?,
    };

    let mut records = Vec::new();
    let mut converged = false;
    for t in 0..cfg.max_iters {
        let ev = eval_nll(lik, &prior, cfg.alpha)?;
        let (max_log_c, _) = ev.max_log_c();
        records.push(BaTraceRecord {
            iter: t,
            nll: ev.nll(),
            max_log_c: max_log_c.max(0.0),
            std_log_c: ev.std_log_c(),
            support_size: count_support(&prior, cfg.prune_tol),
        });
        if max_log_c <= cfg.gap_tol {
            let cert = kkt_check(&ev, &prior, cfg.gap_tol)?;
            if cert.holds {
                converged = true;
                break;
            }
        }
        prior = step_from_eval(&prior, &ev)?;
    }

    let prior = prune(&prior, cfg.prune_tol)?;
    let final_ev = eval_nll(lik, &prior, cfg.alpha)?;
    let certificate = kkt_check(&final_ev, &prior, cfg.gap_tol)?;
    Ok(BaResult {
        prior,
        trace: BaTrace { records },
        converged,
        certificate,
    })
}

/// Compares the converged support size against the number of distinct data
/// points. Meaningful for converged results.
pub fn support_report(result: &BaResult, n_distinct_data: usize) -> SupportReport {
    let support_size = result.prior.support_size();
    SupportReport {
        support_size,
        n_distinct_data,
        violation: support_size > n_distinct_data,
    }
}
