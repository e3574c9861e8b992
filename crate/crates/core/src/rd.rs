//! The rate-distortion side of the prior-optimization problem.
//!
//! With distortion d(x, z) = −log ℓ(x|z) and X uniform over the N data rows,
//! minimizing I(X;Z) − α E log ℓ(X|Z) over test channels Q(z|x) attains the
//! same value as minimizing the α-generalized NLL over priors. This module
//! provides the channel-side objects — the channel induced by a prior, the
//! Lagrangian, the generalized ELBO — and a numerical verification that the
//! two minimizations coincide.

use serde::Serialize;

use crate::ba::{optimize, BaConfig};
use crate::error::{Error, Result};
use crate::model::{eval_nll, LogLikMatrix, PriorWeights};

/// Row-stochastic N×M test channel: row i is Q(z_j | x_i).
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    rows: Vec<f64>,
    n_data: usize,
    n_support: usize,
}

impl ChannelMatrix {
    /// Validates nonnegativity and row sums (1 within 1e-9).
    pub fn new(rows: Vec<f64>, n_data: usize, n_support: usize) -> Result<Self> {
        if n_data == 0 || n_support == 0 || rows.len() != n_data * n_support {
            return Err(Error::InvalidDimension(format!(
                "expected {} entries for a {}x{} channel, got {}",
                n_data * n_support,
                n_data,
                n_support,
                rows.len()
            )));
        }
        for (k, &q) in rows.iter().enumerate() {
            if !q.is_finite() || q < 0.0 {
                return Err(Error::InvalidWeights(format!(
                    "channel entry ({}, {}) is {}",
                    k / n_support,
                    k % n_support,
                    q
                )));
            }
        }
        for i in 0..n_data {
            let sum: f64 = rows[i * n_support..(i + 1) * n_support].iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidWeights(format!(
                    "channel row {i} sums to {sum}, expected 1 within 1e-9"
                )));
            }
        }
        Ok(Self {
            rows,
            n_data,
            n_support,
        })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_data = rows.len();
        let n_support = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.iter().any(|r| r.len() != n_support) {
            return Err(Error::InvalidDimension("ragged channel rows".into()));
        }
        Self::new(rows.into_iter().flatten().collect(), n_data, n_support)
    }

    pub fn n_data(&self) -> usize {
        self.n_data
    }

    pub fn n_support(&self) -> usize {
        self.n_support
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.n_support..(i + 1) * self.n_support]
    }

    /// Output marginal m_j = (1/N) Σ_i Q_ij.
    pub fn output_marginal(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.n_support];
        for i in 0..self.n_data {
            for (j, &q) in self.row(i).iter().enumerate() {
                m[j] += q;
            }
        }
        let n = self.n_data as f64;
        for v in m.iter_mut() {
            *v /= n;
        }
        m
    }
}

/// Value of the rate-distortion Lagrangian I(X;Z) + α·E\[d\] at a channel.
#[derive(Debug, Clone, Serialize)]
pub struct LagrangianValue {
    /// I(X;Z) in nats, computed against the channel's own output marginal.
    pub mutual_info: f64,
    /// E[−log ℓ(X|Z)] in nats.
    pub expected_distortion: f64,
    pub alpha: f64,
    /// mutual_info + alpha·expected_distortion.
    pub total: f64,
}

/// The channel a prior induces through the likelihood:
/// Q_ij = p_j ℓ(x_i|z_j)^α / Σ_k p_k ℓ(x_i|z_k)^α. Rows are normalized
/// analytically by the evidence denominator.
pub fn channel_from_prior(
    lik: &LogLikMatrix,
    prior: &PriorWeights,
    alpha: f64,
) -> Result<ChannelMatrix> {
    let ev = eval_nll(lik, prior, alpha)?;
    let logw = prior.log_weights().values();
    let n = lik.n_data();
    let m = lik.n_support();
    let mut rows = Vec::with_capacity(n * m);
    for i in 0..n {
        let le = ev.log_evidence()[i];
        for (j, &l) in lik.row(i).iter().enumerate() {
            rows.push((logw[j] + alpha * l - le).exp());
        }
    }
    ChannelMatrix::new(rows, n, m)
}

/// Evaluates I(X;Z) + α E[−log ℓ] at a channel, with X uniform over the data
/// rows and 0·log 0 = 0 throughout.
///
/// Mass on an entry with −inf log likelihood makes the Lagrangian infinite
/// and is a hard error.
pub fn lagrangian(lik: &LogLikMatrix, q: &ChannelMatrix, alpha: f64) -> Result<LagrangianValue> {
    if q.n_data() != lik.n_data() || q.n_support() != lik.n_support() {
        return Err(Error::InvalidDimension(format!(
            "channel is {}x{} but matrix is {}x{}",
            q.n_data(),
            q.n_support(),
            lik.n_data(),
            lik.n_support()
        )));
    }
    if !alpha.is_finite() || alpha <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "alpha must be a positive finite real, got {alpha}"
        )));
    }
    let n = lik.n_data();
    let marginal = q.output_marginal();
    let mut info = 0.0;
    let mut distortion = 0.0;
    for i in 0..n {
        for (j, &qij) in q.row(i).iter().enumerate() {
            if qij == 0.0 {
                continue;
            }
            let l = lik.get(i, j);
            if l == f64::NEG_INFINITY {
                return Err(Error::InfiniteDistortion {
                    row: i,
                    col: j,
                    q: qij,
                });
            }
            info += qij * (qij / marginal[j]).ln();
            distortion += qij * (-l);
        }
    }
    let mutual_info = (info / n as f64).max(0.0);
    let expected_distortion = distortion / n as f64;
    Ok(LagrangianValue {
        mutual_info,
        expected_distortion,
        alpha,
        total: mutual_info + alpha * expected_distortion,
    })
}

/// The α-generalized evidence lower bound for one data row:
/// −KL(q ‖ p) + α Σ_j q_j log ℓ(x|z_j) ≤ log Σ_j p_j ℓ(x|z_j)^α.
///
/// Returns −inf (not an error) when q places mass where the prior is zero or
/// where the likelihood vanishes.
pub fn elbo(lik_row: &[f64], q_row: &[f64], prior: &PriorWeights, alpha: f64) -> Result<f64> {
    if lik_row.len() != prior.len() || q_row.len() != prior.len() {
        return Err(Error::InvalidDimension(format!(
            "row lengths {} / {} do not match prior size {}",
            lik_row.len(),
            q_row.len(),
            prior.len()
        )));
    }
    let logw = prior.log_weights().values();
    let mut kl = 0.0;
    let mut fit = 0.0;
    for j in 0..q_row.len() {
        let qj = q_row[j];
        if qj == 0.0 {
            continue;
        }
        if logw[j] == f64::NEG_INFINITY || lik_row[j] == f64::NEG_INFINITY {
            return Ok(f64::NEG_INFINITY);
        }
        kl += qj * (qj.ln() - logw[j]);
        fit += qj * lik_row[j];
    }
    Ok(-kl + alpha * fit)
}

/// Report of the prior-side / channel-side equivalence check.
#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceReport {
    /// min_p −(1/N) Σ_i log Σ_j p_j ℓ_ij^α, reached by Blahut-Arimoto.
    pub prior_side: f64,
    /// I(X;Z) + α·E\[d\] at the channel induced by the optimized prior.
    pub channel_side: f64,
    pub abs_diff: f64,
    pub passed: bool,
    pub alpha: f64,
}

/// Optimizes the prior, builds the induced channel, and checks that the
/// prior-side optimum equals the channel-side Lagrangian. Passes when the
/// two sides differ by at most 10·gap_tol.
pub fn verify_equivalence(
    lik: &LogLikMatrix,
    alpha: f64,
    cfg: &BaConfig,
) -> Result<EquivalenceReport> {
    let cfg = BaConfig {
        alpha,
        ..cfg.clone()
    };
    let result = optimize(lik, None, &cfg)?;
    let ev = eval_nll(lik, &result.prior, alpha)?;
    let prior_side = ev.nll();
    let channel = channel_from_prior(lik, &result.prior, alpha)?;
    let channel_side = lagrangian(lik, &channel, alpha)?.total;
    let abs_diff = (prior_side - channel_side).abs();
    Ok(EquivalenceReport {
        prior_side,
        channel_side,
        abs_diff,
        passed: abs_diff <= 10.0 * cfg.gap_tol,
        alpha,
    })
}
