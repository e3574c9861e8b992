//! Finite-support latent variable models: negative log likelihood, the c(z)
//! statistic, the information-theoretic lower bound, and the KKT optimality
//! certificate.
//!
//! The model is p(x_i) = Σ_j p_j ℓ(x_i|z_j), represented entirely through an
//! N×M matrix of log ℓ(x_i|z_j) values. Support points are opaque labels; the
//! module never evaluates ℓ itself — callers supply the matrix, which
//! decouples the optimizer from any particular likelihood family.
//!
//! The central diagnostic is
//!
//!   c(z_j) = (1/N) Σ_i ℓ(x_i|z_j) / p(x_i)
//!
//! whose sup over z measures exactly how far the prior is from optimal:
//! nll − sup_j log c(z_j) lower-bounds the NLL achievable by any prior on
//! this support, and the KKT condition c = 1 on the support, c ≤ 1 off it,
//! certifies a prior as unimprovable.

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{log_sum_exp_slice, normalize, LogWeightVector};

/// N×M matrix of log ℓ(x_i|z_j) values in nats, row-major.
///
/// No NaN and no +inf entries; every row has at least one finite entry
/// (a row of all -inf is a data point no prior can explain).
#[derive(Debug, Clone, PartialEq)]
pub struct LogLikMatrix {
    entries: Vec<f64>,
    n_data: usize,
    n_support: usize,
}

impl LogLikMatrix {
    /// Builds from a row-major flat buffer of length `n_data * n_support`.
    pub fn new(entries: Vec<f64>, n_data: usize, n_support: usize) -> Result<Self> {
        if n_data == 0 || n_support == 0 {
            return Err(Error::InvalidDimension(
                "log-likelihood matrix must have at least one row and one column".into(),
            ));
        }
        if entries.len() != n_data * n_support {
            return Err(Error::InvalidDimension(format!(
                "expected {} entries for a {}x{} matrix, got {}",
                n_data * n_support,
                n_data,
                n_support,
                entries.len()
            )));
        }
        for (k, &v) in entries.iter().enumerate() {
            if v.is_nan() || v == f64::INFINITY {
                return Err(Error::InvalidWeights(format!(
                    "log-likelihood entry ({}, {}) is {}",
                    k / n_support,
                    k % n_support,
                    v
                )));
            }
        }
        for i in 0..n_data {
            let row = &entries[i * n_support..(i + 1) * n_support];
            if row.iter().all(|&v| v == f64::NEG_INFINITY) {
                return Err(Error::ImpossibleDataPoint(i));
            }
        }
        Ok(Self {
            entries,
            n_data,
            n_support,
        })
    }

    /// Builds from per-data-point rows.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_data = rows.len();
        let n_support = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.iter().any(|r| r.len() != n_support) {
            return Err(Error::InvalidDimension("ragged rows".into()));
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
        &self.entries[i * self.n_support..(i + 1) * self.n_support]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n_support + j]
    }

    /// Number of distinct data rows (bitwise comparison), the Lindsay bound
    /// on optimal support size.
    pub fn distinct_row_count(&self) -> usize {
        let mut seen: BTreeSet<Vec<u64>> = BTreeSet::new();
        for i in 0..self.n_data {
            seen.insert(self.row(i).iter().map(|v| v.to_bits()).collect());
        }
        seen.len()
    }

    /// Reads the CSV interchange format: header `id,z_1,...,z_M`, one row per
    /// data point, entries in nats with the `-inf` literal allowed. Returns
    /// the matrix together with the support labels taken from the header.
    pub fn read_csv<R: Read>(reader: R) -> Result<(Self, Vec<String>)> {
        let buf = BufReader::new(reader);
        let mut support_ids: Vec<String> = Vec::new();
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (idx, line) in buf.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(|f| f.trim()).collect();
            if idx == 0 {
                if fields.len() < 2 {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: "header must name an id column and at least one support column".into(),
                    });
                }
                support_ids = fields[1..].iter().map(|s| s.to_string()).collect();
                continue;
            }
            if fields.len() != support_ids.len() + 1 {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!(
                        "expected {} fields, got {}",
                        support_ids.len() + 1,
                        fields.len()
                    ),
                });
            }
            let mut row = Vec::with_capacity(support_ids.len());
            for field in &fields[1..] {
                let v: f64 = field.parse().map_err(|_| Error::Parse {
                    line: lineno,
                    msg: format!("cannot parse '{field}' as a log-likelihood"),
                })?;
                if v.is_nan() || v == f64::INFINITY {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: format!("log-likelihood must be finite or -inf, got {v}"),
                    });
                }
                row.push(v);
            }
            rows.push(row);
        }
        if support_ids.is_empty() {
            return Err(Error::Parse {
                line: 1,
                msg: "missing header row".into(),
            });
        }
        let matrix = Self::from_rows(rows)?;
        Ok((matrix, support_ids))
    }

    /// Writes the CSV interchange format with `x{i}` data ids.
    pub fn write_csv<W: Write>(&self, support_ids: &[String], mut w: W) -> Result<()> {
        if support_ids.len() != self.n_support {
            return Err(Error::InvalidDimension(format!(
                "{} support ids for {} columns",
                support_ids.len(),
                self.n_support
            )));
        }
        write!(w, "id")?;
        for id in support_ids {
            write!(w, ",{id}")?;
        }
        writeln!(w)?;
        for i in 0..self.n_data {
            write!(w, "x{}", i + 1)?;
            for &v in self.row(i) {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct PriorWeightsJson {
    support_ids: Vec<String>,
    weights: Vec<f64>,
}

/// A prior p(z) over labelled support points, stored as log-weights.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorWeights {
    support_ids: Vec<String>,
    log_weights: LogWeightVector,
}

impl PriorWeights {
    /// Default labels `z_1..z_M`, matching the CSV header convention.
    pub fn default_ids(m: usize) -> Vec<String> {
        (1..=m).map(|j| format!("z_{j}")).collect()
    }

    /// Uniform prior over `m` support points with default labels.
    pub fn uniform(m: usize) -> Result<Self> {
        Self::uniform_with_ids(Self::default_ids(m))
    }

    pub fn uniform_with_ids(support_ids: Vec<String>) -> Result<Self> {
        let m = support_ids.len();
        if m == 0 {
            return Err(Error::InvalidDimension("empty support".into()));
        }
        let lw = vec![-(m as f64).ln(); m];
        Ok(Self {
            support_ids,
            log_weights: LogWeightVector::new(lw)?,
        })
    }

    /// From linear-domain weights, rescaled onto the simplex. Zero weights
    /// become -inf log-weights.
    pub fn from_linear(support_ids: Vec<String>, weights: &[f64]) -> Result<Self> {
        if support_ids.len() != weights.len() {
            return Err(Error::InvalidDimension(format!(
                "{} ids for {} weights",
                support_ids.len(),
                weights.len()
            )));
        }
        let simplex = normalize(weights)?;
        let lw: Vec<f64> = simplex.weights().iter().map(|&w| w.ln()).collect();
        Ok(Self {
            support_ids,
            log_weights: LogWeightVector::new(lw)?,
        })
    }

    /// From unnormalized log-weights; subtracts the log-sum to land on the
    /// simplex.
    pub fn from_log_unnormalized(support_ids: Vec<String>, log_weights: Vec<f64>) -> Result<Self> {
        if support_ids.len() != log_weights.len() {
            return Err(Error::InvalidDimension(format!(
                "{} ids for {} log-weights",
                support_ids.len(),
                log_weights.len()
            )));
        }
        let lw = LogWeightVector::new(log_weights)?;
        let total = lw.log_sum_exp();
        if total == f64::NEG_INFINITY {
            return Err(Error::InvalidWeights("all log-weights are -inf".into()));
        }
        let shifted: Vec<f64> = lw.values().iter().map(|v| v - total).collect();
        Ok(Self {
            support_ids,
            log_weights: LogWeightVector::new(shifted)?,
        })
    }

    pub fn support_ids(&self) -> &[String] {
        &self.support_ids
    }

    pub fn log_weights(&self) -> &LogWeightVector {
        &self.log_weights
    }

    /// Length is always positive.
    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.log_weights.len()
    }

    /// Linear-domain weights (exponentiated log-weights; sums to 1 up to
    /// rounding).
    pub fn linear_weights(&self) -> Vec<f64> {
        self.log_weights.values().iter().map(|v| v.exp()).collect()
    }

    /// Number of atoms carrying strictly positive mass.
    pub fn support_size(&self) -> usize {
        self.log_weights
            .values()
            .iter()
            .filter(|&&v| v > f64::NEG_INFINITY)
            .count()
    }

    /// True if every atom carries strictly positive mass.
    pub fn has_full_support(&self) -> bool {
        self.support_size() == self.len()
    }

    /// Reads the JSON interchange format
    /// `{"support_ids": [...], "weights": [...]}` with linear-domain weights.
    pub fn read_json<R: Read>(reader: R) -> Result<Self> {
        let parsed: PriorWeightsJson = serde_json::from_reader(reader)?;
        Self::from_linear(parsed.support_ids, &parsed.weights)
    }

    /// Writes the JSON interchange format with linear-domain weights.
    pub fn write_json<W: Write>(&self, mut w: W) -> Result<()> {
        let doc = PriorWeightsJson {
            support_ids: self.support_ids.clone(),
            weights: self.linear_weights(),
        };
        serde_json::to_writer_pretty(&mut w, &doc)?;
        writeln!(w)?;
        Ok(())
    }
}

/// Result of evaluating a model (matrix + prior) at a given α.
#[derive(Debug, Clone)]
pub struct ModelEvaluation {
    log_evidence: Vec<f64>,
    nll: f64,
    log_c: LogWeightVector,
}

impl ModelEvaluation {
    /// log p_α(x_i) for every data point.
    pub fn log_evidence(&self) -> &[f64] {
        &self.log_evidence
    }

    /// −(1/N) Σ_i log p_α(x_i); the trivial upper bound on the optimal value.
    pub fn nll(&self) -> f64 {
        self.nll
    }

    /// log c(z_j) for every support point.
    pub fn log_c(&self) -> &LogWeightVector {
        &self.log_c
    }

    /// sup_j log c(z_j) and its index (lowest index wins ties).
    pub fn max_log_c(&self) -> (f64, usize) {
        let mut best = f64::NEG_INFINITY;
        let mut best_idx = 0;
        for (j, &v) in self.log_c.values().iter().enumerate() {
            if v > best {
                best = v;
                best_idx = j;
            }
        }
        (best, best_idx)
    }

    /// Population standard deviation of the finite log c(z_j) values.
    pub fn std_log_c(&self) -> f64 {
        let finite: Vec<f64> = self
            .log_c
            .values()
            .iter()
            .copied()
            .filter(|v| v.is_finite())
            .collect();
        if finite.is_empty() {
            return 0.0;
        }
        crate::numerics::population_std(&finite)
    }
}

/// Evaluates log evidence, NLL and log c(z) for the α-generalized objective
/// −(1/N) Σ_i log Σ_j p_j ℓ(x_i|z_j)^α.
///
/// The quantity is a negative log likelihood only for α = 1; other α values
/// trace the rate-distortion Lagrangian.
pub fn eval_nll(lik: &LogLikMatrix, prior: &PriorWeights, alpha: f64) -> Result<ModelEvaluation> {
    if prior.len() != lik.n_support() {
        return Err(Error::InvalidDimension(format!(
            "prior has {} atoms but matrix has {} support columns",
            prior.len(),
            lik.n_support()
        )));
    }
    if !alpha.is_finite() || alpha <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "alpha must be a positive finite real, got {alpha}"
        )));
    }
    let n = lik.n_data();
    let m = lik.n_support();
    let logw = prior.log_weights().values();

    let mut log_evidence = Vec::with_capacity(n);
    let mut scratch = vec![0.0; m];
    for i in 0..n {
        let row = lik.row(i);
        for j in 0..m {
            scratch[j] = logw[j] + alpha * row[j];
        }
        let le = log_sum_exp_slice(&scratch);
        if le == f64::NEG_INFINITY {
            return Err(Error::ImpossibleDataPoint(i));
        }
        log_evidence.push(le);
    }
    let nll = -(log_evidence.iter().sum::<f64>() / n as f64);

    // log c_j = log[(1/N) Σ_i exp(α L_ij − log p(x_i))]
    let log_n = (n as f64).ln();
    let mut col = vec![0.0; n];
    let mut log_c = Vec::with_capacity(m);
    for j in 0..m {
        for i in 0..n {
            col[i] = alpha * lik.get(i, j) - log_evidence[i];
        }
        log_c.push(log_sum_exp_slice(&col) - log_n);
    }

    Ok(ModelEvaluation {
        log_evidence,
        nll,
        log_c: LogWeightVector::new(log_c)?,
    })
}

/// The sharp information-theoretic lower bound on the optimal NLL:
/// nll − sup_j log c(z_j). Any prior on this support satisfies
/// lower_bound ≤ min_p NLL(p) ≤ nll.
pub fn lower_bound(ev: &ModelEvaluation) -> f64 {
    ev.nll() - ev.max_log_c().0
}

/// Certificate of the prior-optimality KKT condition: c(z) = 1 on the
/// support and c(z) ≤ 1 off it.
#[derive(Debug, Clone, Serialize)]
pub struct OptimalityCertificate {
    pub holds: bool,
    pub tol: f64,
    /// sup_j log c(z_j): the gap between upper and lower bounds; zero at an
    /// optimal prior.
    pub worst_violation: f64,
    /// Index of the sup (lowest index wins ties).
    pub worst_index: usize,
    /// Largest |log c(z_j)| over atoms with weight > tol.
    pub on_support_deviation: f64,
}

/// Checks the KKT optimality condition at tolerance `tol`: |log c_j| ≤ tol
/// for every atom with weight > tol, and log c_j ≤ tol everywhere.
pub fn kkt_check(
    ev: &ModelEvaluation,
    prior: &PriorWeights,
    tol: f64,
) -> Result<OptimalityCertificate> {
    if ev.log_c().len() != prior.len() {
        return Err(Error::InvalidDimension(format!(
            "evaluation has {} support columns but prior has {} atoms",
            ev.log_c().len(),
            prior.len()
        )));
    }
    if !tol.is_finite() || tol <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "kkt tolerance must be positive, got {tol}"
        )));
    }
    let (sup, sup_idx) = ev.max_log_c();
    let worst_violation = sup.max(0.0);
    let mut on_support_deviation: f64 = 0.0;
    for (j, &lc) in ev.log_c().values().iter().enumerate() {
        let w = prior.log_weights().values()[j].exp();
        if w > tol {
            on_support_deviation = on_support_deviation.max(lc.abs());
        }
    }
    Ok(OptimalityCertificate {
        holds: worst_violation <= tol && on_support_deviation <= tol,
        tol,
        worst_violation,
        worst_index: sup_idx,
        on_support_deviation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// lik = [[log .9, log .1], [log .1, log .9]]: symmetric two-template
    /// instance whose optimal prior is uniform.
    pub(crate) fn symmetric_2x2() -> LogLikMatrix {
        LogLikMatrix::from_rows(vec![
            vec![0.9f64.ln(), 0.1f64.ln()],
            vec![0.1f64.ln(), 0.9f64.ln()],
        ])
        .unwrap()
    }

    /// lik = [[0, log .5], [0, log .5]]: first column dominates, the optimal
    /// prior is the point mass [1, 0].
    pub(crate) fn dominating_column() -> LogLikMatrix {
        LogLikMatrix::from_rows(vec![vec![0.0, 0.5f64.ln()], vec![0.0, 0.5f64.ln()]]).unwrap()
    }

    fn ids(m: usize) -> Vec<String> {
        PriorWeights::default_ids(m)
    }

    #[test]
    fn symmetric_instance_uniform_prior() {
        let lik = symmetric_2x2();
        let prior = PriorWeights::uniform(2).unwrap();
        let ev = eval_nll(&lik, &prior, 1.0).unwrap();
        assert!((ev.nll() - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(ev.log_c().values().iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn point_mass_on_dominating_column() {
        let lik = dominating_column();
        let prior = PriorWeights::from_linear(ids(2), &[1.0, 0.0]).unwrap();
        let ev = eval_nll(&lik, &prior, 1.0).unwrap();
        assert!(ev.nll().abs() < 1e-12);
        assert!(ev.log_c().values()[0].abs() < 1e-12);
        assert!((ev.log_c().values()[1] - 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn random_instance_matches_exact_rational_oracle() {
        use num::rational::BigRational;
        use num::{FromPrimitive, ToPrimitive, Zero};

        // Fixed 4x3 instance in moderate linear range so the oracle can work
        // in exact rational arithmetic with a single final log.
        let lin: [[f64; 3]; 4] = [
            [0.62, 0.11, 0.47],
            [0.05, 0.93, 0.30],
            [0.81, 0.42, 0.19],
            [0.27, 0.66, 0.55],
        ];
        let weights = [0.2, 0.5, 0.3];
        let rows: Vec<Vec<f64>> = lin
            .iter()
            .map(|r| r.iter().map(|v| v.ln()).collect())
            .collect();
        let lik = LogLikMatrix::from_rows(rows).unwrap();
        let prior = PriorWeights::from_linear(ids(3), &weights).unwrap();
        let ev = eval_nll(&lik, &prior, 1.0).unwrap();

        let mut total = 0.0;
        for row in &lin {
            let mut s = BigRational::zero();
            for (l, w) in row.iter().zip(prior.linear_weights().iter()) {
                s += BigRational::from_f64(*l).unwrap() * BigRational::from_f64(*w).unwrap();
            }
            total += s.to_f64().unwrap().ln();
        }
        let oracle_nll = -total / 4.0;
        assert!(
            (ev.nll() - oracle_nll).abs() < 1e-10,
            "nll {} vs oracle {}",
            ev.nll(),
            oracle_nll
        );
    }

    #[test]
    fn one_hot_prior_returns_column_mean_exactly() {
        let lik = LogLikMatrix::from_rows(vec![
            vec![-3.25, -0.5, -7.0],
            vec![-1.5, -2.75, -0.25],
            vec![-4.0, -1.125, -2.5],
        ])
        .unwrap();
        for j in 0..3 {
            let mut lw = vec![f64::NEG_INFINITY; 3];
            lw[j] = 0.0;
            let prior = PriorWeights {
                support_ids: ids(3),
                log_weights: LogWeightVector::new(lw).unwrap(),
            };
            let ev = eval_nll(&lik, &prior, 1.0).unwrap();
            let expected = -((0..3).map(|i| lik.get(i, j)).sum::<f64>() / 3.0);
            assert_eq!(ev.nll(), expected);
        }
    }

    #[test]
    fn prior_c_identity_sums_to_one() {
        // Σ_j p_j c_j = 1 in linear domain for any valid evaluation.
        let lik = LogLikMatrix::from_rows(vec![
            vec![-0.2, -1.7, -3.1, -0.9],
            vec![-2.4, -0.3, -1.2, -2.2],
            vec![-1.1, -1.0, -0.4, -3.5],
        ])
        .unwrap();
        for (a, w) in [
            (1.0, [0.4, 0.3, 0.2, 0.1]),
            (0.5, [0.25; 4]),
            (2.0, [0.1, 0.2, 0.3, 0.4]),
        ] {
            let prior = PriorWeights::from_linear(ids(4), &w).unwrap();
            let ev = eval_nll(&lik, &prior, a).unwrap();
            let total: f64 = prior
                .log_weights()
                .values()
                .iter()
                .zip(ev.log_c().values())
                .map(|(&lw, &lc)| (lw + lc).exp())
                .sum();
            assert!((total - 1.0).abs() < 1e-9, "alpha {a}: sum {total}");
        }
    }

    #[test]
    fn lower_bound_examples() {
        let lik = symmetric_2x2();
        let prior = PriorWeights::uniform(2).unwrap();
        let ev = eval_nll(&lik, &prior, 1.0).unwrap();
        assert!((lower_bound(&ev) - std::f64::consts::LN_2).abs() < 1e-12);

        let lik = dominating_column();
        let prior = PriorWeights::uniform(2).unwrap();
        let ev = eval_nll(&lik, &prior, 1.0).unwrap();
        assert!((ev.nll() + 0.75f64.ln()).abs() < 1e-12);
        assert!((ev.max_log_c().0 - (4.0f64 / 3.0).ln()).abs() < 1e-12);
        assert!(lower_bound(&ev).abs() < 1e-12);
    }

    #[test]
    fn lower_bound_never_exceeds_nll() {
        let lik = LogLikMatrix::from_rows(vec![
            vec![-0.5, -2.0, -1.0],
            vec![-3.0, -0.1, -0.7],
            vec![-1.4, -1.4, -0.2],
            vec![-0.9, -2.5, -2.5],
        ])
        .unwrap();
        for w in [[1.0, 1.0, 1.0], [5.0, 1.0, 2.0], [0.01, 0.98, 0.01]] {
            let prior = PriorWeights::from_linear(ids(3), &w).unwrap();
            let ev = eval_nll(&lik, &prior, 1.0).unwrap();
            assert!(lower_bound(&ev) <= ev.nll() + 1e-12);
        }
    }

    #[test]
    fn kkt_certifies_symmetric_uniform() {
        let lik = symmetric_2x2();
        let prior = PriorWeights::uniform(2).unwrap();
        let ev = eval_nll(&lik, &prior, 1.0).unwrap();
        let cert = kkt_check(&ev, &prior, 1e-6).unwrap();
        assert!(cert.holds);
        assert!(cert.worst_violation <= 1e-6);
    }

    #[test]
    fn kkt_certifies_dominating_point_mass() {
        let lik = dominating_column();
        let prior = PriorWeights::from_linear(ids(2), &[1.0, 0.0]).unwrap();
        let ev = eval_nll(&lik, &prior, 1.0).unwrap();
        let cert = kkt_check(&ev, &prior, 1e-6).unwrap();
        assert!(cert.holds, "c = [1, 0.5] satisfies the KKT condition");
    }

    #[test]
    fn kkt_flags_suboptimal_uniform_on_dominating() {
        let lik = dominating_column();
        let prior = PriorWeights::uniform(2).unwrap();
        let ev = eval_nll(&lik, &prior, 1.0).unwrap();
        let cert = kkt_check(&ev, &prior, 1e-6).unwrap();
        assert!(!cert.holds);
        assert_eq!(cert.worst_index, 0, "worst violation at the first column");
        assert!((cert.worst_violation - (4.0f64 / 3.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn max_log_c_ties_break_to_the_lowest_index() {
        // Columns 1 and 2 are identical, so their c values tie at the max.
        let lik = LogLikMatrix::from_rows(vec![
            vec![0.0, 0.0, 0.5f64.ln()],
            vec![0.0, 0.0, 0.5f64.ln()],
        ])
        .unwrap();
        let prior = PriorWeights::uniform(3).unwrap();
        let ev = eval_nll(&lik, &prior, 1.0).unwrap();
        assert_eq!(ev.log_c().values()[0], ev.log_c().values()[1]);
        assert_eq!(ev.max_log_c().1, 0);
    }

    #[test]
    fn impossible_data_point_is_an_error() {
        let lik = LogLikMatrix::from_rows(vec![
            vec![f64::NEG_INFINITY, -1.0],
            vec![-1.0, f64::NEG_INFINITY],
        ])
        .unwrap();
        // Point mass on the second column makes row 1 impossible.
        let prior = PriorWeights::from_linear(ids(2), &[0.0, 1.0]).unwrap();
        let err = eval_nll(&lik, &prior, 1.0).unwrap_err();
        assert!(matches!(err, Error::ImpossibleDataPoint(1)));
    }

    #[test]
    fn all_neg_inf_row_rejected_at_construction() {
        let err = LogLikMatrix::from_rows(vec![
            vec![-1.0, -2.0],
            vec![f64::NEG_INFINITY, f64::NEG_INFINITY],
        ])
        .unwrap_err();
        assert!(matches!(err, Error::ImpossibleDataPoint(1)));
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let lik = symmetric_2x2();
        let prior = PriorWeights::uniform(3).unwrap();
        assert!(matches!(
            eval_nll(&lik, &prior, 1.0),
            Err(Error::InvalidDimension(_))
        ));
    }

    #[test]
    fn alpha_must_be_positive() {
        let lik = symmetric_2x2();
        let prior = PriorWeights::uniform(2).unwrap();
        assert!(matches!(
            eval_nll(&lik, &prior, 0.0),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            eval_nll(&lik, &prior, -1.0),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn csv_round_trip_with_neg_inf() {
        let lik = LogLikMatrix::from_rows(vec![
            vec![-0.105360515657826, f64::NEG_INFINITY],
            vec![-2.25, -0.105360515657826],
        ])
        .unwrap();
        let ids = PriorWeights::default_ids(2);
        let mut buf = Vec::new();
        lik.write_csv(&ids, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("id,z_1,z_2\n"));
        assert!(text.contains("-inf"));
        let (parsed, parsed_ids) = LogLikMatrix::read_csv(&buf[..]).unwrap();
        assert_eq!(parsed, lik);
        assert_eq!(parsed_ids, ids);
    }

    #[test]
    fn csv_parse_errors_carry_line_numbers() {
        let text = "id,z_1,z_2\nx1,-0.5,-1.0\nx2,abc,-1.0\n";
        let err = LogLikMatrix::read_csv(text.as_bytes()).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        let text = "id,z_1,z_2\nx1,-0.5\n";
        let err = LogLikMatrix::read_csv(text.as_bytes()).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn csv_all_neg_inf_row_names_the_row() {
        let text = "id,z_1,z_2\nx1,-0.5,-1.0\nx2,-inf,-inf\n";
        let err = LogLikMatrix::read_csv(text.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::ImpossibleDataPoint(1)));
    }

    #[test]
    fn prior_json_round_trip() {
        let prior = PriorWeights::from_linear(ids(3), &[0.2, 0.0, 0.8]).unwrap();
        let mut buf = Vec::new();
        prior.write_json(&mut buf).unwrap();
        let parsed = PriorWeights::read_json(&buf[..]).unwrap();
        assert_eq!(parsed.support_ids(), prior.support_ids());
        for (a, b) in parsed
            .linear_weights()
            .iter()
            .zip(prior.linear_weights().iter())
        {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn distinct_row_count_collapses_duplicates() {
        let lik =
            LogLikMatrix::from_rows(vec![vec![-1.0, -2.0], vec![-1.0, -2.0], vec![-3.0, -0.5]])
                .unwrap();
        assert_eq!(lik.distinct_row_count(), 2);
    }
}
