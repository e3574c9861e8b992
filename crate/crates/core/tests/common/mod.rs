//! Shared test oracles: brute-force minimization of the prior objective over
//! the simplex, independent of the Blahut-Arimoto implementation path.

#![allow(dead_code)]

use glossy_core::model::{eval_nll, LogLikMatrix, PriorWeights};
use rand::prelude::*;

pub fn nll_at(lik: &LogLikMatrix, weights: &[f64], alpha: f64) -> f64 {
    let prior = PriorWeights::from_linear(PriorWeights::default_ids(weights.len()), weights)
        .expect("valid prior weights");
    eval_nll(lik, &prior, alpha)
        .expect("valid evaluation")
        .nll()
}

/// Dense grid search over the simplex, step `step`, for M ∈ {2, 3}.
pub fn grid_min_nll(lik: &LogLikMatrix, alpha: f64, step: f64) -> f64 {
    let m = lik.n_support();
    let steps = (1.0 / step).round() as usize;
    let mut best = f64::INFINITY;
    match m {
        2 => {
            for i in 0..=steps {
                let w1 = i as f64 * step;
                let v = nll_at(lik, &[w1, (1.0 - w1).max(0.0)], alpha);
                best = best.min(v);
            }
        }
        3 => {
            for i in 0..=steps {
                let w1 = i as f64 * step;
                for j in 0..=(steps - i) {
                    let w2 = j as f64 * step;
                    let w3 = (1.0 - w1 - w2).max(0.0);
                    let v = nll_at(lik, &[w1, w2, w3], alpha);
                    best = best.min(v);
                }
            }
        }
        _ => panic!("grid oracle supports M <= 3, got {m}"),
    }
    best
}

fn golden_min(mut f: impl FnMut(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..90 {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
    }
    f1.min(f2)
}

/// High-precision minimum of the prior objective over the simplex for
/// M ∈ {2, 3}: the objective is convex in the weights, so nested
/// golden-section search converges to the global minimum.
pub fn refined_min_nll(lik: &LogLikMatrix, alpha: f64) -> f64 {
    match lik.n_support() {
        2 => golden_min(
            |w1| nll_at(lik, &[w1, (1.0 - w1).max(0.0)], alpha),
            0.0,
            1.0,
        ),
        3 => golden_min(
            |w1| {
                let slack = (1.0 - w1).max(0.0);
                golden_min(
                    |w2| nll_at(lik, &[w1, w2, (slack - w2).max(0.0)], alpha),
                    0.0,
                    slack,
                )
            },
            0.0,
            1.0,
        ),
        m => panic!("refined oracle supports M <= 3, got {m}"),
    }
}

/// Random log-likelihood matrix with entries log-uniform in [e^-scale, 1].
pub fn random_loglik(rng: &mut impl Rng, n: usize, m: usize, scale: f64) -> LogLikMatrix {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..m).map(|_| -scale * rng.gen::<f64>()).collect())
        .collect();
    LogLikMatrix::from_rows(rows).expect("finite rows")
}
