//! Continuous-latent-space diagnostics on a closed-form linear-Gaussian
//! model.
//!
//! The model is z ~ N(0, C·Cᵀ), x | z ~ N(Az + b, σ²I). It is the one
//! continuous family where the evidence p(x), the posterior Q(z|x) and the
//! prior pushforward are all available in closed form, which lets every
//! estimator in this module be validated exactly:
//!
//! - [`exact_log_evidence`] is the closed-form marginal N(b, A·C·Cᵀ·Aᵀ + σ²I),
//! - [`iwae_log_evidence`] is the K-sample importance-sampling lower-bound
//!   estimator of log p(x),
//! - [`glossy_run`] samples latent points at the posterior means and computes
//!   the glossy statistics of their log c(z) values,
//! - [`pushforward_check`] and [`pushforward_check_mc`] verify that moving a
//!   change of prior into the decoder leaves the evidence unchanged.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::erf;
use std::io::{BufRead, BufReader, Read, Write};

use crate::error::{Error, Result};
use crate::numerics::{log_sum_exp_slice, population_std};

const LN_2PI: f64 = 1.8378770664093453;

/// Cholesky factor of a covariance matrix together with its log determinant.
#[derive(Debug, Clone)]
struct CholFactor {
    l: DMatrix<f64>,
    log_det: f64,
}

impl CholFactor {
    fn new(cov: DMatrix<f64>, what: &str) -> Result<Self> {
        let chol = nalgebra::Cholesky::new(cov)
            .ok_or_else(|| Error::SingularCovariance(what.to_string()))?;
        let l = chol.unpack();
        let log_det = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        if !log_det.is_finite() {
            return Err(Error::SingularCovariance(format!(
                "{what}: log determinant is {log_det}"
            )));
        }
        Ok(Self { l, log_det })
    }

    fn dim(&self) -> usize {
        self.l.nrows()
    }

    fn logpdf(&self, x: &DVector<f64>, mean: &DVector<f64>) -> f64 {
        let diff = x - mean;
        let y = self
            .l
            .solve_lower_triangular(&diff)
            .expect("factor has positive diagonal");
        -0.5 * (self.dim() as f64 * LN_2PI + self.log_det + y.norm_squared())
    }

    fn sample(&self, mean: &DVector<f64>, rng: &mut impl Rng) -> DVector<f64> {
        let eps = DVector::from_fn(self.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        mean + &self.l * eps
    }
}

/// A multivariate Gaussian usable as an importance-sampling proposal.
#[derive(Debug, Clone)]
pub struct Gaussian {
    mean: DVector<f64>,
    factor: CholFactor,
}

impl Gaussian {
    /// Requires a positive-definite covariance.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::InvalidDimension(format!(
                "covariance is {}x{} for a mean of length {}",
                cov.nrows(),
                cov.ncols(),
                mean.len()
            )));
        }
        let factor = CholFactor::new(cov, "proposal covariance")?;
        Ok(Self { mean, factor })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn log_density(&self, z: &DVector<f64>) -> f64 {
        self.factor.logpdf(z, &self.mean)
    }

    pub fn sample(&self, rng: &mut impl Rng) -> DVector<f64> {
        self.factor.sample(&self.mean, rng)
    }
}

/// Closed-form latent variable model: prior z ~ N(0, C·Cᵀ), likelihood
/// x | z ~ N(Az + b, σ²I).
#[derive(Debug, Clone)]
pub struct LinearGaussianModel {
    decoder_matrix: DMatrix<f64>,
    decoder_offset: DVector<f64>,
    noise_std: f64,
    prior_cov_factor: DMatrix<f64>,
    // caches built at construction
    prior: Gaussian,
    noise_factor: CholFactor,
    marginal_factor: CholFactor,
    posterior_gain: DMatrix<f64>,
    posterior_cov: DMatrix<f64>,
}

impl LinearGaussianModel {
    /// Builds the model and its closed-form caches (prior, marginal and
    /// posterior factors). σ must be positive and C nonsingular.
    pub fn new(
        decoder_matrix: DMatrix<f64>,
        decoder_offset: DVector<f64>,
        noise_std: f64,
        prior_cov_factor: DMatrix<f64>,
    ) -> Result<Self> {
        let d = decoder_matrix.nrows();
        let k = decoder_matrix.ncols();
        if decoder_offset.len() != d {
            return Err(Error::InvalidDimension(format!(
                "offset has length {} for a {}x{} decoder",
                decoder_offset.len(),
                d,
                k
            )));
        }
        if prior_cov_factor.nrows() != k || prior_cov_factor.ncols() != k {
            return Err(Error::InvalidDimension(format!(
                "prior factor is {}x{} for latent dimension {}",
                prior_cov_factor.nrows(),
                prior_cov_factor.ncols(),
                k
            )));
        }
        if !noise_std.is_finite() || noise_std <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "noise_std must be a positive finite real, got {noise_std}"
            )));
        }

        let prior_cov = &prior_cov_factor * prior_cov_factor.transpose();
        let prior = Gaussian::new(DVector::zeros(k), prior_cov.clone())
            .map_err(|_| Error::SingularCovariance("prior factor C is singular".into()))?;

        let sigma2 = noise_std * noise_std;
        let noise_factor = CholFactor::new(
            DMatrix::identity(d, d) * sigma2,
            "likelihood noise covariance",
        )?;

        let marginal_cov = &decoder_matrix * &prior_cov * decoder_matrix.transpose()
            + DMatrix::identity(d, d) * sigma2;
        let marginal_factor = CholFactor::new(marginal_cov, "marginal covariance")?;

        // Σ_post = (P⁻¹ + AᵀA/σ²)⁻¹, gain = Σ_post Aᵀ/σ².
        let prior_precision = nalgebra::Cholesky::new(prior_cov)
            .ok_or_else(|| Error::SingularCovariance("prior covariance".into()))?
            .inverse();
        let post_precision =
            prior_precision + decoder_matrix.transpose() * &decoder_matrix / sigma2;
        let posterior_cov = nalgebra::Cholesky::new(post_precision)
            .ok_or_else(|| Error::SingularCovariance("posterior precision".into()))?
            .inverse();
        let posterior_gain = &posterior_cov * decoder_matrix.transpose() / sigma2;

        Ok(Self {
            decoder_matrix,
            decoder_offset,
            noise_std,
            prior_cov_factor,
            prior,
            noise_factor,
            marginal_factor,
            posterior_gain,
            posterior_cov,
        })
    }

    /// Standard prior (C = I).
    pub fn with_standard_prior(
        decoder_matrix: DMatrix<f64>,
        decoder_offset: DVector<f64>,
        noise_std: f64,
    ) -> Result<Self> {
        let k = decoder_matrix.ncols();
        Self::new(
            decoder_matrix,
            decoder_offset,
            noise_std,
            DMatrix::identity(k, k),
        )
    }

    pub fn latent_dim(&self) -> usize {
        self.decoder_matrix.ncols()
    }

    pub fn data_dim(&self) -> usize {
        self.decoder_matrix.nrows()
    }

    pub fn decoder_matrix(&self) -> &DMatrix<f64> {
        &self.decoder_matrix
    }

    pub fn decoder_offset(&self) -> &DVector<f64> {
        &self.decoder_offset
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    pub fn prior_cov_factor(&self) -> &DMatrix<f64> {
        &self.prior_cov_factor
    }

    /// The prior as a sampleable Gaussian.
    pub fn prior(&self) -> &Gaussian {
        &self.prior
    }

    /// log ℓ(x|z) = log N(x; Az + b, σ²I).
    pub fn log_lik(&self, x: &DVector<f64>, z: &DVector<f64>) -> f64 {
        let mean = &self.decoder_matrix * z + &self.decoder_offset;
        self.log_lik_at_mean(x, &mean)
    }

    /// Isotropic Gaussian log density with a precomputed decoder mean.
    /// Evaluates the same expression as the Cholesky path on σ²I, without
    /// allocating, so it stays bit-identical to the evidence path when the
    /// decoder ignores the latent.
    fn log_lik_at_mean(&self, x: &DVector<f64>, mean: &DVector<f64>) -> f64 {
        let mut quad = 0.0;
        for d in 0..x.len() {
            let y = (x[d] - mean[d]) / self.noise_std;
            quad += y * y;
        }
        -0.5 * (x.len() as f64 * LN_2PI + self.noise_factor.log_det + quad)
    }

    /// Mean of the exact Gaussian posterior Q(z|x):
    /// Σ_post Aᵀ(x − b)/σ² with Σ_post = (C⁻ᵀC⁻¹ + AᵀA/σ²)⁻¹.
    pub fn posterior_mean(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.posterior_gain * (x - &self.decoder_offset)
    }

    pub fn posterior_cov(&self) -> &DMatrix<f64> {
        &self.posterior_cov
    }

    /// Draws one sample x ~ p(x) by ancestral sampling.
    pub fn sample_data(&self, rng: &mut impl Rng) -> DVector<f64> {
        let z = self.prior.sample(rng);
        let mean = &self.decoder_matrix * z + &self.decoder_offset;
        self.noise_factor.sample(&mean, rng)
    }

    fn check_data_dim(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.data_dim() {
            return Err(Error::InvalidDimension(format!(
                "data vector has length {} but the model has data dimension {}",
                x.len(),
                self.data_dim()
            )));
        }
        Ok(())
    }
}

/// JSON interchange form of a linear-Gaussian model: `A` and `C` row-major.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearGaussianModelSpec {
    pub latent_dim: usize,
    pub data_dim: usize,
    #[serde(rename = "A")]
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub sigma: f64,
    #[serde(rename = "C")]
    pub c: Vec<f64>,
}

impl LinearGaussianModelSpec {
    pub fn to_model(&self) -> Result<LinearGaussianModel> {
        if self.a.len() != self.data_dim * self.latent_dim {
            return Err(Error::InvalidDimension(format!(
                "A has {} entries, expected {}x{}",
                self.a.len(),
                self.data_dim,
                self.latent_dim
            )));
        }
        if self.c.len() != self.latent_dim * self.latent_dim {
            return Err(Error::InvalidDimension(format!(
                "C has {} entries, expected {}x{}",
                self.c.len(),
                self.latent_dim,
                self.latent_dim
            )));
        }
        LinearGaussianModel::new(
            DMatrix::from_row_slice(self.data_dim, self.latent_dim, &self.a),
            DVector::from_column_slice(&self.b),
            self.sigma,
            DMatrix::from_row_slice(self.latent_dim, self.latent_dim, &self.c),
        )
    }

    pub fn read_json<R: Read>(reader: R) -> Result<Self> {
        Ok(serde_json::from_reader(reader)?)
    }
}

/// Reads data vectors from CSV, one comma-separated row per point, no header.
pub fn read_data_csv<R: Read>(reader: R) -> Result<Vec<DVector<f64>>> {
    let buf = BufReader::new(reader);
    let mut data = Vec::new();
    let mut width = None;
    for (idx, line) in buf.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for field in line.split(',') {
            let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("cannot parse '{}' as a number", field.trim()),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("data entries must be finite, got {v}"),
                });
            }
            row.push(v);
        }
        if *width.get_or_insert(row.len()) != row.len() {
            return Err(Error::Parse {
                line: lineno,
                msg: "inconsistent row width".into(),
            });
        }
        data.push(DVector::from_vec(row));
    }
    if data.is_empty() {
        return Err(Error::InvalidDimension("data file has no rows".into()));
    }
    Ok(data)
}

/// Writes data vectors as CSV, one row per point.
pub fn write_data_csv<W: Write>(data: &[DVector<f64>], mut w: W) -> Result<()> {
    for x in data {
        let fields: Vec<String> = x.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", fields.join(","))?;
    }
    Ok(())
}

/// Closed-form log evidence log p(x) = log N(x; b, A·C·Cᵀ·Aᵀ + σ²I).
pub fn exact_log_evidence(model: &LinearGaussianModel, x: &DVector<f64>) -> Result<f64> {
    model.check_data_dim(x)?;
    Ok(model.marginal_factor.logpdf(x, &model.decoder_offset))
}

/// K-sample importance-sampling estimate of log p(x):
/// log[(1/K) Σ_k p(z_k) ℓ(x|z_k) / q(z_k)] with z_k ~ q. Deterministic for a
/// fixed seed; the estimate lower-bounds log p(x) in expectation and tightens
/// monotonically in K.
pub fn iwae_log_evidence(
    model: &LinearGaussianModel,
    x: &DVector<f64>,
    proposal: &Gaussian,
    k: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    iwae_with_rng(model, x, proposal, k, &mut rng)
}

fn iwae_with_rng(
    model: &LinearGaussianModel,
    x: &DVector<f64>,
    proposal: &Gaussian,
    k: usize,
    rng: &mut impl Rng,
) -> Result<f64> {
    model.check_data_dim(x)?;
    if k == 0 {
        return Err(Error::InvalidConfig(
            "iwae sample count K must be ≥ 1".into(),
        ));
    }
    if proposal.dim() != model.latent_dim() {
        return Err(Error::InvalidDimension(format!(
            "proposal dimension {} does not match latent dimension {}",
            proposal.dim(),
            model.latent_dim()
        )));
    }
    let mut log_weights = Vec::with_capacity(k);
    for _ in 0..k {
        let z = proposal.sample(rng);
        let lw = model.prior.log_density(&z) + model.log_lik(x, &z) - proposal.log_density(&z);
        log_weights.push(lw);
    }
    let lse = log_sum_exp_slice(&log_weights);
    if lse == f64::NEG_INFINITY {
        return Err(Error::EstimatorDegenerate(k));
    }
    Ok(lse - (k as f64).ln())
}

/// Latent points and their log c values from one glossy sampling pass.
#[derive(Debug, Clone)]
pub struct GlossySample {
    pub latent_points: Vec<DVector<f64>>,
    pub log_c_values: Vec<f64>,
}

/// max and population standard deviation of sampled log c(z) values; both
/// zero exactly at an optimal prior.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GlossyStats {
    pub max_stat: f64,
    pub std_stat: f64,
}

/// Computes the glossy statistics of a finite sample of log c values.
pub fn glossy_statistics(log_c_values: &[f64]) -> Result<GlossyStats> {
    if log_c_values.is_empty() {
        return Err(Error::InvalidDimension(
            "glossy statistics need at least one value".into(),
        ));
    }
    if let Some(bad) = log_c_values.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidWeights(format!(
            "glossy log c values must be finite, got {bad}"
        )));
    }
    let max_stat = log_c_values
        .iter()
        .fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    Ok(GlossyStats {
        max_stat,
        std_stat: population_std(log_c_values),
    })
}

/// How log p(x_n) is evaluated inside [`glossy_run`].
#[derive(Debug, Clone, Copy)]
pub enum EvidenceMode {
    /// Closed-form marginal; available because the model is linear-Gaussian.
    Exact,
    /// K-sample importance sampling with the prior as proposal. A lower
    /// bound on log p(x) turns the sampled max into an upper bound on the
    /// per-point gap.
    Iwae { k: usize, seed: u64 },
}

/// Evaluates log p(x_n) for every data point under the given evidence mode.
/// In `Iwae` mode the single run seed feeds one deterministic sub-stream per
/// data index, so results do not depend on evaluation order.
pub fn evidence_for_mode(
    model: &LinearGaussianModel,
    data: &[DVector<f64>],
    mode: EvidenceMode,
) -> Result<Vec<f64>> {
    match mode {
        EvidenceMode::Exact => data.iter().map(|x| exact_log_evidence(model, x)).collect(),
        EvidenceMode::Iwae { k, seed } => {
            let proposal = model.prior().clone();
            data.iter()
                .enumerate()
                .map(|(i, x)| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(i as u64);
                    iwae_with_rng(model, x, &proposal, k, &mut rng)
                })
                .collect()
        }
    }
}

/// Samples latent points at the posterior means z_i = E[z|x_i] and evaluates
/// log c(z_i) = log[(1/N) Σ_n ℓ(x_n|z_i) / p(x_n)].
pub fn glossy_run(
    model: &LinearGaussianModel,
    data: &[DVector<f64>],
    mode: EvidenceMode,
) -> Result<(GlossySample, GlossyStats)> {
    if data.is_empty() {
        return Err(Error::InvalidDimension("glossy run needs data".into()));
    }
    for x in data {
        model.check_data_dim(x)?;
    }
    let n = data.len();
    let log_evidence = evidence_for_mode(model, data, mode)?;

    let latent_points: Vec<DVector<f64>> = data.iter().map(|x| model.posterior_mean(x)).collect();
    let log_n = (n as f64).ln();
    let mut scratch = vec![0.0; n];
    let mut log_c_values = Vec::with_capacity(latent_points.len());
    for z in &latent_points {
        let mean = model.decoder_matrix() * z + model.decoder_offset();
        for (slot, (x, le)) in scratch.iter_mut().zip(data.iter().zip(&log_evidence)) {
            *slot = model.log_lik_at_mean(x, &mean) - le;
        }
        log_c_values.push(log_sum_exp_slice(&scratch) - log_n);
    }
    let stats = glossy_statistics(&log_c_values)?;
    Ok((
        GlossySample {
            latent_points,
            log_c_values,
        },
        stats,
    ))
}

/// Result of a pushforward equivalence check: the NLL under the target prior
/// with the original decoder, against the NLL under the source prior with
/// the pushforward folded into the decoder.
#[derive(Debug, Clone, Serialize)]
pub struct PushforwardReport {
    pub nll_target_prior: f64,
    pub nll_pushforward: f64,
    pub abs_diff: f64,
    /// Standard error of the difference; only for the Monte Carlo variant.
    pub std_err: Option<f64>,
    pub passed: bool,
}

/// Closed-form check of the linear pushforward: the model (prior factor Ĉ,
/// decoder A) and the model (standard prior, decoder A·Ĉ) have identical
/// evidence. Passes at 1e-10.
pub fn pushforward_check(
    model: &LinearGaussianModel,
    target_cov_factor: &DMatrix<f64>,
    data: &[DVector<f64>],
) -> Result<PushforwardReport> {
    if data.is_empty() {
        return Err(Error::InvalidDimension(
            "pushforward check needs data".into(),
        ));
    }
    let k = model.latent_dim();
    if target_cov_factor.nrows() != k || target_cov_factor.ncols() != k {
        return Err(Error::InvalidDimension(format!(
            "target factor is {}x{}, expected {k}x{k}",
            target_cov_factor.nrows(),
            target_cov_factor.ncols()
        )));
    }
    let target_model = LinearGaussianModel::new(
        model.decoder_matrix().clone(),
        model.decoder_offset().clone(),
        model.noise_std(),
        target_cov_factor.clone(),
    )?;
    let pushforward_model = LinearGaussianModel::new(
        model.decoder_matrix() * target_cov_factor,
        model.decoder_offset().clone(),
        model.noise_std(),
        DMatrix::identity(k, k),
    )?;

    let mut nll_a = 0.0;
    let mut nll_b = 0.0;
    for x in data {
        nll_a -= exact_log_evidence(&target_model, x)?;
        nll_b -= exact_log_evidence(&pushforward_model, x)?;
    }
    nll_a /= data.len() as f64;
    nll_b /= data.len() as f64;
    let abs_diff = (nll_a - nll_b).abs();
    Ok(PushforwardReport {
        nll_target_prior: nll_a,
        nll_pushforward: nll_b,
        abs_diff,
        std_err: None,
        passed: abs_diff <= 1e-10,
    })
}

/// A continuous univariate distribution with an invertible CDF, usable as
/// one component of a product prior.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum UnivariateDist {
    Uniform { lo: f64, hi: f64 },
    Gaussian { mean: f64, std: f64 },
    Laplace { loc: f64, scale: f64 },
}

impl UnivariateDist {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            UnivariateDist::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && hi > lo,
            UnivariateDist::Gaussian { mean, std } => {
                mean.is_finite() && std > 0.0 && std.is_finite()
            }
            UnivariateDist::Laplace { loc, scale } => {
                loc.is_finite() && scale > 0.0 && scale.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidTransform(format!(
                "CDF component {self:?} is not a continuous invertible distribution"
            )))
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            UnivariateDist::Uniform { lo, hi } => ((x - lo) / (hi - lo)).clamp(0.0, 1.0),
            UnivariateDist::Gaussian { mean, std } => std_normal_cdf((x - mean) / std),
            UnivariateDist::Laplace { loc, scale } => {
                let t = (x - loc) / scale;
                if t < 0.0 {
                    0.5 * t.exp()
                } else {
                    1.0 - 0.5 * (-t).exp()
                }
            }
        }
    }

    /// Quantile function; `p` must lie strictly inside (0, 1).
    pub fn inv_cdf(&self, p: f64) -> f64 {
        match *self {
            UnivariateDist::Uniform { lo, hi } => lo + p * (hi - lo),
            UnivariateDist::Gaussian { mean, std } => mean + std * std_normal_quantile(p),
            UnivariateDist::Laplace { loc, scale } => {
                if p < 0.5 {
                    loc + scale * (2.0 * p).ln()
                } else {
                    loc - scale * (2.0 * (1.0 - p)).ln()
                }
            }
        }
    }
}

fn std_normal_cdf(x: f64) -> f64 {
    // erfc keeps the lower tail free of cancellation.
    0.5 * erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile: erf_inv initial guess polished by Newton steps.
/// The library inverse alone carries ~1e-10 round-trip error, which is a
/// systematic bias the common-random-number pushforward check would see.
fn std_normal_quantile(p: f64) -> f64 {
    let mut x = std::f64::consts::SQRT_2 * erf::erf_inv(2.0 * p - 1.0);
    for _ in 0..2 {
        let err = std_normal_cdf(x) - p;
        let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let step = err / pdf;
        if !step.is_finite() {
            break;
        }
        x -= step;
    }
    x
}

/// Monte Carlo pushforward check for product priors with invertible CDFs.
///
/// Builds g componentwise as target-inverse-CDF ∘ source-CDF, estimates both
/// NLLs with n_mc common-random-number samples, and reports the difference
/// with a delta-method standard error. Passes when the difference sits
/// within 3 standard errors of zero.
pub fn pushforward_check_mc<F>(
    source: &[UnivariateDist],
    target: &[UnivariateDist],
    log_lik: F,
    data: &[DVector<f64>],
    n_mc: usize,
    seed: u64,
) -> Result<PushforwardReport>
where
    F: Fn(&DVector<f64>, &DVector<f64>) -> f64,
{
    if source.is_empty() || source.len() != target.len() {
        return Err(Error::InvalidDimension(format!(
            "source has {} components, target has {}",
            source.len(),
            target.len()
        )));
    }
    if data.is_empty() {
        return Err(Error::InvalidDimension(
            "pushforward check needs data".into(),
        ));
    }
    if n_mc < 2 {
        return Err(Error::InvalidConfig("n_mc must be at least 2".into()));
    }
    for dist in source.iter().chain(target) {
        dist.validate()?;
    }
    let dim = source.len();

    // Common random numbers: y_s and z_s share the uniform draw, and the
    // pushforward g(z_s) = F_target⁻¹(F_source(z_s)) retraces it.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut target_draws = Vec::with_capacity(n_mc);
    let mut mapped_draws = Vec::with_capacity(n_mc);
    for _ in 0..n_mc {
        let mut y = DVector::zeros(dim);
        let mut gz = DVector::zeros(dim);
        for j in 0..dim {
            let u: f64 = rng.gen::<f64>().clamp(1e-300, 1.0 - 1e-16);
            y[j] = target[j].inv_cdf(u);
            let z = source[j].inv_cdf(u);
            gz[j] = target[j].inv_cdf(source[j].cdf(z));
        }
        target_draws.push(y);
        mapped_draws.push(gz);
    }

    let n = data.len() as f64;
    let mut nll_a = 0.0;
    let mut nll_b = 0.0;
    // Per-sample influence of the paired difference, for the delta-method
    // standard error under common random numbers.
    let mut influence = vec![0.0; n_mc];
    let mut wa = vec![0.0; n_mc];
    let mut wb = vec![0.0; n_mc];
    for x in data {
        for s in 0..n_mc {
            wa[s] = log_lik(x, &target_draws[s]);
            wb[s] = log_lik(x, &mapped_draws[s]);
        }
        let la = log_sum_exp_slice(&wa);
        let lb = log_sum_exp_slice(&wb);
        if la == f64::NEG_INFINITY || lb == f64::NEG_INFINITY {
            return Err(Error::EstimatorDegenerate(n_mc));
        }
        nll_a -= la - (n_mc as f64).ln();
        nll_b -= lb - (n_mc as f64).ln();
        for s in 0..n_mc {
            // a_s/μ_A − b_s/μ_B, computed in the shifted domain.
            influence[s] += ((wa[s] - la).exp() - (wb[s] - lb).exp()) * n_mc as f64 / n;
        }
    }
    nll_a /= n;
    nll_b /= n;
    let abs_diff = (nll_a - nll_b).abs();
    let std_err = population_std(&influence) / (n_mc as f64).sqrt();
    Ok(PushforwardReport {
        nll_target_prior: nll_a,
        nll_pushforward: nll_b,
        abs_diff,
        std_err: Some(std_err),
        passed: abs_diff <= 3.0 * std_err + 1e-12,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vec1(x: f64) -> DVector<f64> {
        DVector::from_vec(vec![x])
    }

    fn scalar_model(a: f64, b: f64, sigma: f64) -> LinearGaussianModel {
        LinearGaussianModel::new(
            DMatrix::from_row_slice(1, 1, &[a]),
            vec1(b),
            sigma,
            DMatrix::identity(1, 1),
        )
        .unwrap()
    }

    fn small_model() -> LinearGaussianModel {
        // k = 2, d = 3.
        LinearGaussianModel::new(
            DMatrix::from_row_slice(3, 2, &[0.8, -0.3, 0.2, 0.9, -0.5, 0.4]),
            DVector::from_vec(vec![0.1, -0.2, 0.3]),
            0.7,
            DMatrix::identity(2, 2),
        )
        .unwrap()
    }

    #[test]
    fn exact_evidence_ignoring_decoder_is_standard_normal() {
        let model = scalar_model(0.0, 0.0, 1.0);
        let le = exact_log_evidence(&model, &vec1(0.0)).unwrap();
        assert!((le + 0.5 * LN_2PI).abs() < 1e-12);
    }

    #[test]
    fn exact_evidence_identity_decoder_has_variance_two() {
        let model = scalar_model(1.0, 0.0, 1.0);
        let le = exact_log_evidence(&model, &vec1(0.0)).unwrap();
        // log N(0; 0, 2) = −0.5·log(4π)
        let expected = -0.5 * (4.0 * std::f64::consts::PI).ln();
        assert!((le - expected).abs() < 1e-12);
    }

    #[test]
    fn exact_evidence_agrees_with_importance_sampling() {
        let model = small_model();
        let x = DVector::from_vec(vec![0.4, -0.6, 0.9]);
        let exact = exact_log_evidence(&model, &x).unwrap();

        // Self-consistency: high-K estimate with a delta-method standard
        // error derived from the same weights.
        let k = 50_000;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let proposal = model.prior().clone();
        let mut log_w = Vec::with_capacity(k);
        for _ in 0..k {
            let z = proposal.sample(&mut rng);
            log_w.push(
                model.prior().log_density(&z) + model.log_lik(&x, &z) - proposal.log_density(&z),
            );
        }
        let lse = log_sum_exp_slice(&log_w);
        let estimate = lse - (k as f64).ln();
        let ratios: Vec<f64> = log_w.iter().map(|w| (w - lse).exp() * k as f64).collect();
        let se = population_std(&ratios) / (k as f64).sqrt();
        assert!(
            (estimate - exact).abs() <= 3.0 * se,
            "estimate {estimate} vs exact {exact} (se {se})"
        );
    }

    #[test]
    fn iwae_constant_likelihood_returns_the_constant() {
        let model = scalar_model(0.0, 0.5, 1.3);
        let x = vec1(0.2);
        let expected = model.log_lik(&x, &vec1(0.0));
        for k in [1, 7, 100] {
            let got = iwae_log_evidence(&model, &x, model.prior(), k, 4).unwrap();
            assert!((got - expected).abs() < 1e-12, "K={k}: {got} vs {expected}");
        }
    }

    #[test]
    fn iwae_single_sample_is_a_likelihood_draw() {
        let model = small_model();
        let x = DVector::from_vec(vec![0.0, 0.1, -0.2]);
        let got = iwae_log_evidence(&model, &x, model.prior(), 1, 12).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let z = model.prior().sample(&mut rng);
        assert_eq!(got, model.log_lik(&x, &z));
    }

    #[test]
    fn iwae_is_deterministic_per_seed_and_rejects_k_zero() {
        let model = small_model();
        let x = DVector::from_vec(vec![0.4, -0.6, 0.9]);
        let a = iwae_log_evidence(&model, &x, model.prior(), 64, 7).unwrap();
        let b = iwae_log_evidence(&model, &x, model.prior(), 64, 7).unwrap();
        assert_eq!(a, b);
        assert!(matches!(
            iwae_log_evidence(&model, &x, model.prior(), 0, 7),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn glossy_statistics_cases() {
        let stats = glossy_statistics(&[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(stats.max_stat, 0.0);
        assert_eq!(stats.std_stat, 0.0);

        let ln2 = std::f64::consts::LN_2;
        let stats = glossy_statistics(&[0.0, 0.0, ln2]).unwrap();
        assert!((stats.max_stat - ln2).abs() < 1e-15);
        let mean = ln2 / 3.0;
        let expected_std = ((2.0 * mean * mean + (ln2 - mean) * (ln2 - mean)) / 3.0).sqrt();
        assert!((stats.std_stat - expected_std).abs() < 1e-12);
        assert!((stats.std_stat - 0.3268).abs() < 1e-4);

        let stats = glossy_statistics(&[-1.25]).unwrap();
        assert_eq!(stats.max_stat, -1.25);
        assert_eq!(stats.std_stat, 0.0);

        assert!(matches!(
            glossy_statistics(&[]),
            Err(Error::InvalidDimension(_))
        ));
        assert!(glossy_statistics(&[f64::NEG_INFINITY]).is_err());
    }

    #[test]
    fn decoder_ignoring_latent_gives_exactly_zero_glossy_stats() {
        // A = 0 makes ℓ(x|z) = p(x) identically: every prior is optimal and
        // log c vanishes after cancellation.
        let model = LinearGaussianModel::new(
            DMatrix::zeros(2, 2),
            DVector::from_vec(vec![0.3, -0.1]),
            0.9,
            DMatrix::identity(2, 2),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data: Vec<DVector<f64>> = (0..40).map(|_| model.sample_data(&mut rng)).collect();
        let (sample, stats) = glossy_run(&model, &data, EvidenceMode::Exact).unwrap();
        for v in &sample.log_c_values {
            assert!(v.abs() <= 1e-12, "log c = {v}");
        }
        assert!(stats.max_stat.abs() <= 1e-12);
        assert!(stats.std_stat.abs() <= 1e-12);
    }

    #[test]
    fn glossy_run_is_deterministic_in_iwae_mode() {
        let model = small_model();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let data: Vec<DVector<f64>> = (0..12).map(|_| model.sample_data(&mut rng)).collect();
        let mode = EvidenceMode::Iwae { k: 32, seed: 123 };
        let (a, _) = glossy_run(&model, &data, mode).unwrap();
        let (b, _) = glossy_run(&model, &data, mode).unwrap();
        assert_eq!(a.log_c_values, b.log_c_values);
    }

    #[test]
    fn posterior_mean_matches_finite_difference_map() {
        // The Gaussian posterior mean is the MAP of log p(z) + log ℓ(x|z);
        // recover it independently with a finite-difference Newton solve.
        let model = LinearGaussianModel::new(
            DMatrix::from_row_slice(3, 2, &[0.8, -0.3, 0.2, 0.9, -0.5, 0.4]),
            DVector::from_vec(vec![0.1, -0.2, 0.3]),
            0.7,
            DMatrix::from_row_slice(2, 2, &[1.2, 0.0, 0.4, 0.8]),
        )
        .unwrap();
        let x = DVector::from_vec(vec![0.7, -0.4, 0.2]);
        let f = |z: &DVector<f64>| model.prior().log_density(z) + model.log_lik(&x, z);

        let h = 1e-5;
        let mut z = DVector::zeros(2);
        for _ in 0..4 {
            let mut grad = DVector::zeros(2);
            let mut hess = DMatrix::zeros(2, 2);
            for i in 0..2 {
                let mut zp = z.clone();
                let mut zm = z.clone();
                zp[i] += h;
                zm[i] -= h;
                grad[i] = (f(&zp) - f(&zm)) / (2.0 * h);
                for j in 0..2 {
                    let mut zpp = z.clone();
                    let mut zpm = z.clone();
                    let mut zmp = z.clone();
                    let mut zmm = z.clone();
                    zpp[i] += h;
                    zpp[j] += h;
                    zpm[i] += h;
                    zpm[j] -= h;
                    zmp[i] -= h;
                    zmp[j] += h;
                    zmm[i] -= h;
                    zmm[j] -= h;
                    hess[(i, j)] = (f(&zpp) - f(&zpm) - f(&zmp) + f(&zmm)) / (4.0 * h * h);
                }
            }
            let step = hess.lu().solve(&grad).unwrap();
            z -= step;
        }

        let mean = model.posterior_mean(&x);
        for i in 0..2 {
            assert!(
                (z[i] - mean[i]).abs() < 1e-6,
                "coordinate {i}: MAP {} vs posterior mean {}",
                z[i],
                mean[i]
            );
        }
    }

    #[test]
    fn pushforward_identity_factor_is_exact() {
        let model = small_model();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let data: Vec<DVector<f64>> = (0..10).map(|_| model.sample_data(&mut rng)).collect();
        let report = pushforward_check(&model, &DMatrix::identity(2, 2), &data).unwrap();
        assert_eq!(report.abs_diff, 0.0);
        assert!(report.passed);
    }

    #[test]
    fn pushforward_diagonal_and_rotation_factors() {
        let model = small_model();
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let data: Vec<DVector<f64>> = (0..15).map(|_| model.sample_data(&mut rng)).collect();

        let diag = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5]);
        let report = pushforward_check(&model, &diag, &data).unwrap();
        assert!(report.abs_diff <= 1e-10, "diag: {}", report.abs_diff);

        let theta: f64 = 0.77;
        let rot =
            DMatrix::from_row_slice(2, 2, &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()]);
        let report = pushforward_check(&model, &rot, &data).unwrap();
        assert!(report.abs_diff <= 1e-10, "rotation: {}", report.abs_diff);
    }

    #[test]
    fn univariate_cdf_inverse_round_trips() {
        let dists = [
            UnivariateDist::Uniform { lo: -1.0, hi: 3.0 },
            UnivariateDist::Gaussian {
                mean: 0.5,
                std: 1.7,
            },
            UnivariateDist::Laplace {
                loc: -0.3,
                scale: 0.8,
            },
        ];
        for dist in dists {
            dist.validate().unwrap();
            for p in [0.01, 0.2, 0.5, 0.77, 0.99] {
                let x = dist.inv_cdf(p);
                assert!((dist.cdf(x) - p).abs() < 1e-9, "{dist:?} at {p}");
            }
        }
        assert!(UnivariateDist::Uniform { lo: 1.0, hi: 1.0 }
            .validate()
            .is_err());
        assert!(UnivariateDist::Gaussian {
            mean: 0.0,
            std: 0.0
        }
        .validate()
        .is_err());
        assert!(UnivariateDist::Laplace {
            loc: 0.0,
            scale: -1.0
        }
        .validate()
        .is_err());
    }

    #[test]
    fn mc_pushforward_identity_components() {
        let model = small_model();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let data: Vec<DVector<f64>> = (0..8).map(|_| model.sample_data(&mut rng)).collect();
        let comps = vec![
            UnivariateDist::Gaussian {
                mean: 0.0,
                std: 1.0
            };
            2
        ];
        // g is the identity map componentwise.
        let g = |z: f64| {
            UnivariateDist::Gaussian {
                mean: 0.0,
                std: 1.0,
            }
            .inv_cdf(
                UnivariateDist::Gaussian {
                    mean: 0.0,
                    std: 1.0,
                }
                .cdf(z),
            )
        };
        for z in [-2.0, -0.5, 0.0, 1.3] {
            assert!((g(z) - z).abs() < 1e-9);
        }
        let report =
            pushforward_check_mc(&comps, &comps, |x, z| model.log_lik(x, z), &data, 5_000, 77)
                .unwrap();
        assert!(report.passed, "{report:?}");
        assert!(report.abs_diff < 1e-6);
    }

    #[test]
    fn model_json_round_trip() {
        let spec = LinearGaussianModelSpec {
            latent_dim: 2,
            data_dim: 3,
            a: vec![0.8, -0.3, 0.2, 0.9, -0.5, 0.4],
            b: vec![0.1, -0.2, 0.3],
            sigma: 0.7,
            c: vec![1.0, 0.0, 0.0, 1.0],
        };
        let json = serde_json::to_string(&spec).unwrap();
        assert!(json.contains("\"A\"") && json.contains("\"C\""));
        let parsed = LinearGaussianModelSpec::read_json(json.as_bytes()).unwrap();
        let model = parsed.to_model().unwrap();
        assert_eq!(model.latent_dim(), 2);
        assert_eq!(model.data_dim(), 3);
    }

    #[test]
    fn data_csv_round_trip_and_errors() {
        let data = vec![
            DVector::from_vec(vec![0.25, -1.5]),
            DVector::from_vec(vec![3.0, 0.125]),
        ];
        let mut buf = Vec::new();
        write_data_csv(&data, &mut buf).unwrap();
        let parsed = read_data_csv(&buf[..]).unwrap();
        assert_eq!(parsed, data);

        let err = read_data_csv("1.0,2.0\n3.0\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = read_data_csv("1.0,abc\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn singular_prior_factor_is_rejected() {
        let err = LinearGaussianModel::new(
            DMatrix::identity(2, 2),
            DVector::zeros(2),
            1.0,
            DMatrix::zeros(2, 2),
        )
        .unwrap_err();
        assert!(matches!(err, Error::SingularCovariance(_)));
    }
}
