//! Log-domain kernels and simplex utilities shared by all other modules.
//!
//! Log-weights are extended reals in nats: finite or negative infinity
//! ("impossible"), never positive infinity and never NaN. NaN anywhere is a
//! contract violation, not a value.

use crate::error::{Error, Result};

/// A vector of log-domain weights (nats). Entries are finite or `-inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogWeightVector {
    values: Vec<f64>,
}

impl LogWeightVector {
    /// Validates the log-weight invariants: nonempty, no NaN, no `+inf`.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidDimension(
                "log-weight vector must be nonempty".into(),
            ));
        }
        for (i, &v) in values.iter().enumerate() {
            if v.is_nan() {
                return Err(Error::InvalidWeights(format!(
                    "NaN log-weight at index {i}"
                )));
            }
            if v == f64::INFINITY {
                return Err(Error::InvalidWeights(format!(
                    "+inf log-weight at index {i}"
                )));
            }
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Length is always positive; emptiness is rejected at construction.
    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// log Σ_j exp(v_j) over this vector's entries.
    pub fn log_sum_exp(&self) -> f64 {
        log_sum_exp_slice(&self.values)
    }
}

/// A probability vector: nonnegative entries summing to 1 within 1e-12.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexVector {
    weights: Vec<f64>,
}

impl SimplexVector {
    /// Accepts a vector already on the simplex (sum within 1e-12 of 1).
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        validate_nonnegative(&weights)?;
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidWeights(format!(
                "weights sum to {sum}, expected 1 within 1e-12"
            )));
        }
        Ok(Self { weights })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Length is always positive; emptiness is rejected at construction.
    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.weights.len()
    }
}

fn validate_nonnegative(v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::InvalidDimension("empty weight vector".into()));
    }
    for (i, &x) in v.iter().enumerate() {
        if !x.is_finite() {
            return Err(Error::InvalidWeights(format!(
                "non-finite weight {x} at index {i}"
            )));
        }
        if x < 0.0 {
            return Err(Error::InvalidWeights(format!(
                "negative weight {x} at index {i}"
            )));
        }
    }
    Ok(())
}

/// log Σ_j exp(v_j), computed by max-shift.
///
/// Exact for a single finite entry; returns `-inf` iff all entries are `-inf`.
/// Entries must be finite or `-inf` (the [`LogWeightVector`] invariant).
pub fn log_sum_exp(v: &LogWeightVector) -> f64 {
    log_sum_exp_slice(v.values())
}

/// Slice form of [`log_sum_exp`] for internal hot paths.
///
/// Errors are reserved for the typed entry point; this returns `-inf` on an
/// empty slice only in unreachable internal paths, so we keep the checked
/// variant separate.
pub(crate) fn log_sum_exp_slice(values: &[f64]) -> f64 {
    let max = values.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    // Split off the max term so a single finite entry comes back exactly:
    // exp(0) contributes 1 and ln(1 + 0) = 0.
    let mut rest = 0.0;
    let mut max_seen = false;
    for &v in values {
        if !max_seen && v == max {
            max_seen = true;
        } else {
            rest += (v - max).exp();
        }
    }
    max + rest.ln_1p()
}

/// Checked log-sum-exp over a raw slice.
pub fn log_sum_exp_checked(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidDimension(
            "log_sum_exp of empty vector".into(),
        ));
    }
    Ok(log_sum_exp_slice(values))
}

/// Proportional rescaling of a nonnegative vector onto the simplex.
///
/// Requires at least one strictly positive entry; all entries finite and
/// nonnegative. The output sums to 1.0 exactly, which makes normalize
/// idempotent: re-normalizing a normalized vector returns it unchanged.
pub fn normalize(v: &[f64]) -> Result<SimplexVector> {
    validate_nonnegative(v)?;
    let mut w = v.to_vec();
    let s: f64 = w.iter().sum();
    if s <= 0.0 {
        return Err(Error::InvalidWeights(
            "cannot normalize: all weights are zero".into(),
        ));
    }
    if s == 1.0 {
        return Ok(SimplexVector { weights: w });
    }
    for x in w.iter_mut() {
        *x /= s;
    }
    if w.iter().sum::<f64>() == 1.0 {
        return Ok(SimplexVector { weights: w });
    }
    // Division leaves the sum a few ulp off 1. Rewrite the trailing positive
    // atom as the exact complement of its prefix sum; the trailing zeros add
    // exactly, so the sequential sum of the result computes to 1.0 and
    // re-normalizing returns the vector unchanged.
    let t = w.iter().rposition(|&x| x > 0.0).expect("sum is positive");
    for _ in 0..4 {
        let prefix: f64 = w[..t].iter().sum();
        if prefix <= 1.0 {
            w[t] = 1.0 - prefix;
            break;
        }
        // The prefix alone overshoots 1 (the trailing atom is ulp-sized);
        // shave the excess off the largest prefix atom and retry.
        let k = w[..t]
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .expect("positive prefix");
        w[k] -= prefix - 1.0;
    }
    debug_assert_eq!(w.iter().sum::<f64>(), 1.0);
    Ok(SimplexVector { weights: w })
}

/// Population standard deviation of a nonempty slice.
pub(crate) fn population_std(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    var.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn lse_single_entry_identity() {
        let v = LogWeightVector::new(vec![0.0]).unwrap();
        assert_eq!(log_sum_exp(&v), 0.0);
        let v = LogWeightVector::new(vec![-123.456]).unwrap();
        assert_eq!(log_sum_exp(&v), -123.456);
    }

    #[test]
    fn lse_two_halves_sum_to_one() {
        let v = LogWeightVector::new(vec![0.5f64.ln(), 0.5f64.ln()]).unwrap();
        assert!(log_sum_exp(&v).abs() < 1e-15);
    }

    #[test]
    fn lse_deep_underflow_is_exact_after_shift() {
        // log(exp(-1000) + exp(-1000)) = -1000 + log 2; naive evaluation
        // underflows to -inf.
        let v = LogWeightVector::new(vec![-1000.0, -1000.0]).unwrap();
        let expected = -1000.0 + std::f64::consts::LN_2;
        assert!((log_sum_exp(&v) - expected).abs() < 1e-12);
        assert_eq!(
            ((-1000.0f64).exp() + (-1000.0f64).exp()).ln(),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn lse_all_neg_inf() {
        let v = LogWeightVector::new(vec![f64::NEG_INFINITY; 3]).unwrap();
        assert_eq!(log_sum_exp(&v), f64::NEG_INFINITY);
    }

    #[test]
    fn lse_mixed_neg_inf() {
        let v = LogWeightVector::new(vec![f64::NEG_INFINITY, -2.0, f64::NEG_INFINITY]).unwrap();
        assert_eq!(log_sum_exp(&v), -2.0);
    }

    #[test]
    fn lse_empty_is_invalid_dimension() {
        assert!(matches!(
            log_sum_exp_checked(&[]),
            Err(Error::InvalidDimension(_))
        ));
        assert!(matches!(
            LogWeightVector::new(vec![]),
            Err(Error::InvalidDimension(_))
        ));
    }

    #[test]
    fn log_weight_vector_rejects_nan_and_pos_inf() {
        assert!(LogWeightVector::new(vec![0.0, f64::NAN]).is_err());
        assert!(LogWeightVector::new(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn normalize_symmetry() {
        let s = normalize(&[2.0, 2.0]).unwrap();
        assert_eq!(s.weights(), &[0.5, 0.5]);
    }

    #[test]
    fn normalize_proportionality() {
        let s = normalize(&[1.0, 0.0, 3.0]).unwrap();
        assert_eq!(s.weights(), &[0.25, 0.0, 0.75]);
    }

    #[test]
    fn normalize_rejects_degenerate_input() {
        assert!(matches!(
            normalize(&[0.0, 0.0]),
            Err(Error::InvalidWeights(_))
        ));
        assert!(matches!(
            normalize(&[1.0, -0.5]),
            Err(Error::InvalidWeights(_))
        ));
        assert!(matches!(
            normalize(&[1.0, f64::INFINITY]),
            Err(Error::InvalidWeights(_))
        ));
        assert!(matches!(normalize(&[]), Err(Error::InvalidDimension(_))));
    }

    #[test]
    fn normalize_output_sums_to_one_exactly() {
        let s = normalize(&[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(s.weights().iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn simplex_vector_rejects_off_simplex() {
        assert!(SimplexVector::new(vec![0.5, 0.5000001]).is_err());
        assert!(SimplexVector::new(vec![0.5, 0.5]).is_ok());
    }

    proptest! {
        #[test]
        fn lse_permutation_invariant(mut v in proptest::collection::vec(-50.0f64..50.0, 1..12)) {
            let a = log_sum_exp_checked(&v).unwrap();
            v.reverse();
            let b = log_sum_exp_checked(&v).unwrap();
            prop_assert!((a - b).abs() <= 1e-12);
        }

        #[test]
        fn lse_shift_identity(
            v in proptest::collection::vec(-50.0f64..50.0, 1..12),
            c in -30.0f64..30.0,
        ) {
            let base = log_sum_exp_checked(&v).unwrap();
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            let with_shift = log_sum_exp_checked(&shifted).unwrap();
            prop_assert!((with_shift - (base + c)).abs() <= 1e-12);
        }

        #[test]
        fn normalize_is_idempotent_exactly(v in proptest::collection::vec(0.0f64..100.0, 1..10)) {
            prop_assume!(v.iter().any(|&x| x > 0.0));
            let once = normalize(&v).unwrap();
            let twice = normalize(once.weights()).unwrap();
            prop_assert_eq!(once.weights(), twice.weights());
        }

        #[test]
        fn normalize_lands_on_simplex(v in proptest::collection::vec(0.0f64..100.0, 1..10)) {
            prop_assume!(v.iter().any(|&x| x > 0.0));
            let s = normalize(&v).unwrap();
            prop_assert!((s.weights().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(s.weights().iter().all(|&w| w >= 0.0));
        }
    }
}
