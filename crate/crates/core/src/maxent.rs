//! Binary maximum-entropy classifier: L2-regularized logistic regression
//! with a deterministic batch L-BFGS trainer.
//!
//! The loss is sum of logistic losses plus (l2_c / 2) * ||w||^2; the bias
//! is unregularized and there is no feature scaling or class weighting.
//! Training examples are sorted into a canonical order before optimizing,
//! so permuting the inputs cannot change the learned weights.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureSpace, FeatureVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// L2 penalty multiplier; larger means stronger regularization.
    pub l2_c: f64,
    pub max_iterations: usize,
    /// Convergence threshold on the gradient L2 norm.
    pub tolerance: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { l2_c: 1.0, max_iterations: 500, tolerance: 1e-6 }
    }
}

/// Trained classifier: dense weights over a frozen feature space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxEntModel {
    pub bias: f64,
    pub weights: Vec<f64>,
    pub space: FeatureSpace,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub iterations: usize,
    pub converged: bool,
    pub final_loss: f64,
    pub final_gradient_norm: f64,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TrainError {
    #[error("the {0} class has no training examples")]
    EmptyClass(&'static str),
    #[error("non-finite feature value at id {0}")]
    NonFinite(u32),
    #[error("feature id {id} outside the space of size {size}")]
    OutOfSpace { id: u32, size: usize },
    #[error("config field {0} must be positive")]
    BadConfig(&'static str),
}

fn validate_vectors(vectors: &[FeatureVector], dim: usize) -> Result<(), TrainError> {
    for v in vectors {
        for (id, value) in v.iter() {
            if !value.is_finite() {
                return Err(TrainError::NonFinite(id));
            }
            if id as usize >= dim {
                return Err(TrainError::OutOfSpace { id, size: dim });
            }
        }
    }
    Ok(())
}

/// Train on positive and negative feature vectors over the given space.
pub fn train(
    pos: &[FeatureVector],
    neg: &[FeatureVector],
    space: FeatureSpace,
    cfg: &TrainConfig,
) -> Result<MaxEntModel, TrainError> {
    train_detailed(pos, neg, space, cfg).map(|(m, _)| m)
}

pub fn train_detailed(
    pos: &[FeatureVector],
    neg: &[FeatureVector],
    space: FeatureSpace,
    cfg: &TrainConfig,
) -> Result<(MaxEntModel, TrainSummary), TrainError> {
    if pos.is_empty() {
        return Err(TrainError::EmptyClass("positive"));
    }
    if neg.is_empty() {
        return Err(TrainError::EmptyClass("negative"));
    }
    if cfg.l2_c <= 0.0 {
        return Err(TrainError::BadConfig("l2_c"));
    }
    if cfg.max_iterations == 0 {
        return Err(TrainError::BadConfig("max_iterations"));
    }
    if cfg.tolerance <= 0.0 {
        return Err(TrainError::BadConfig("tolerance"));
    }
    let dim = space.len();
    validate_vectors(pos, dim)?;
    validate_vectors(neg, dim)?;

    let data = canonical_examples(pos, neg);
    let (params, summary) = lbfgs(dim, &data, cfg);
    let (weights, bias) = split_params(&params);
    log::debug!(
        "maxent: {} iterations, converged={}, loss={:.6e}, |g|={:.3e}",
        summary.iterations,
        summary.converged,
        summary.final_loss,
        summary.final_gradient_norm
    );
    Ok((MaxEntModel { bias, weights: weights.to_vec(), space }, summary))
}

/// Examples in canonical order: label first, then the sparse entries
/// compared lexicographically. Training over any permutation of the same
/// multiset visits examples identically.
fn canonical_examples<'a>(
    pos: &'a [FeatureVector],
    neg: &'a [FeatureVector],
) -> Vec<(f64, &'a FeatureVector)> {
    let mut data: Vec<(f64, &FeatureVector)> = pos
        .iter()
        .map(|v| (1.0, v))
        .chain(neg.iter().map(|v| (0.0, v)))
        .collect();
    data.sort_by(|a, b| {
        a.0.total_cmp(&b.0).then_with(|| {
            let ea = a.1.entries();
            let eb = b.1.entries();
            ea.iter()
                .map(|&(id, v)| (id, v.to_bits()))
                .cmp(eb.iter().map(|&(id, v)| (id, v.to_bits())))
        })
    });
    data
}

fn split_params(params: &[f64]) -> (&[f64], f64) {
    let (bias, weights) = params.split_last().expect("params include bias");
    (weights, *bias)
}

fn dot_sparse(weights: &[f64], x: &FeatureVector) -> f64 {
    x.iter().map(|(id, v)| weights[id as usize] * v).sum()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + exp(m)) without overflow.
fn log1p_exp(m: f64) -> f64 {
    m.max(0.0) + (-m.abs()).exp().ln_1p()
}

/// Regularized loss and gradient at `params` = [weights..., bias].
fn eval(params: &[f64], data: &[(f64, &FeatureVector)], l2_c: f64) -> (f64, Vec<f64>) {
    let (weights, bias) = split_params(params);
    let mut grad = vec![0.0; params.len()];
    let mut loss = 0.0;
    for &(y, x) in data {
        let z = dot_sparse(weights, x) + bias;
        let sign = 2.0 * y - 1.0;
        loss += log1p_exp(-sign * z);
        let residual = sigmoid(z) - y;
        for (id, v) in x.iter() {
            grad[id as usize] += residual * v;
        }
        grad[params.len() - 1] += residual;
    }
    for (g, w) in grad.iter_mut().zip(weights) {
        *g += l2_c * w;
    }
    loss += 0.5 * l2_c * weights.iter().map(|w| w * w).sum::<f64>();
    (loss, grad)
}

/// Regularized negative log-likelihood and its exact gradient for a model
/// and labeled data; the gradient is returned as (d/dw, d/dbias).
pub fn loss_and_gradient(
    model: &MaxEntModel,
    pos: &[FeatureVector],
    neg: &[FeatureVector],
    cfg: &TrainConfig,
) -> Result<(f64, Vec<f64>, f64), TrainError> {
    let dim = model.weights.len();
    validate_vectors(pos, dim)?;
    validate_vectors(neg, dim)?;
    let data = canonical_examples(pos, neg);
    let mut params = model.weights.clone();
    params.push(model.bias);
    let (loss, mut grad) = eval(&params, &data, cfg.l2_c);
    let grad_bias = grad.pop().expect("bias gradient");
    Ok((loss, grad, grad_bias))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

const LBFGS_MEMORY: usize = 10;
const ARMIJO_C1: f64 = 1e-4;

fn lbfgs(dim: usize, data: &[(f64, &FeatureVector)], cfg: &TrainConfig) -> (Vec<f64>, TrainSummary) {
    let n = dim + 1;
    let mut x = vec![0.0; n];
    let (mut f, mut g) = eval(&x, data, cfg.l2_c);
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut iterations = 0;
    let mut converged = norm(&g) <= cfg.tolerance;

    while !converged && iterations < cfg.max_iterations {
        let mut dir = descent_direction(&history, &g);
        let mut slope: f64 = dir.iter().zip(&g).map(|(d, gi)| d * gi).sum();
        if slope >= 0.0 {
            // not a descent direction; fall back to steepest descent
            dir = g.iter().map(|gi| -gi).collect();
            slope = -g.iter().map(|gi| gi * gi).sum::<f64>();
        }

        let mut step = if history.is_empty() { (1.0 / norm(&g)).min(1.0) } else { 1.0 };
        let mut accepted = None;
        for _ in 0..60 {
            let candidate: Vec<f64> =
                x.iter().zip(&dir).map(|(xi, di)| xi + step * di).collect();
            let (fc, gc) = eval(&candidate, data, cfg.l2_c);
            if fc <= f + ARMIJO_C1 * step * slope {
                accepted = Some((candidate, fc, gc));
                break;
            }
            step *= 0.5;
        }
        let (x_new, f_new, g_new) = match accepted {
            Some(t) => t,
            None => break, // cannot make progress within machine precision
        };

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&yv).map(|(a, b)| a * b).sum();
        if sy > 1e-12 * norm(&s) * norm(&yv) {
            if history.len() == LBFGS_MEMORY {
                history.pop_front();
            }
            let rho = 1.0 / sy;
            history.push_back((s, yv, rho));
        }

        x = x_new;
        f = f_new;
        g = g_new;
        iterations += 1;
        converged = norm(&g) <= cfg.tolerance;
    }

    let summary = TrainSummary {
        iterations,
        converged,
        final_loss: f,
        final_gradient_norm: norm(&g),
    };
    (x, summary)
}

/// Two-loop recursion over the curvature history.
fn descent_direction(history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>, g: &[f64]) -> Vec<f64> {
    if history.is_empty() {
        return g.iter().map(|gi| -gi).collect();
    }
    let mut q: Vec<f64> = g.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let alpha = rho * s.iter().zip(&q).map(|(a, b)| a * b).sum::<f64>();
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= alpha * yi;
        }
        alphas.push(alpha);
    }
    let (s_last, y_last, _) = history.back().expect("non-empty");
    let sy: f64 = s_last.iter().zip(y_last).map(|(a, b)| a * b).sum();
    let yy: f64 = y_last.iter().map(|y| y * y).sum();
    let gamma = if yy > 0.0 { sy / yy } else { 1.0 };
    for qi in q.iter_mut() {
        *qi *= gamma;
    }
    for ((s, y, rho), alpha) in history.iter().zip(alphas.into_iter().rev()) {
        let beta = rho * y.iter().zip(&q).map(|(a, b)| a * b).sum::<f64>();
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += si * (alpha - beta);
        }
    }
    q.iter().map(|qi| -qi).collect()
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PredictError {
    #[error("feature id {id} outside the model space of size {size}")]
    OutOfSpace { id: u32, size: usize },
}

/// Probability of the narrative (positive) class: sigmoid(w.x + b).
pub fn predict_prob(model: &MaxEntModel, x: &FeatureVector) -> Result<f64, PredictError> {
    if let Some(max) = x.max_id() {
        if max as usize >= model.weights.len() {
            return Err(PredictError::OutOfSpace { id: max, size: model.weights.len() });
        }
    }
    Ok(sigmoid(dot_sparse(&model.weights, x) + model.bias))
}

/// Probability of the negative class; complements [`predict_prob`]
/// exactly.
pub fn predict_prob_negclass(model: &MaxEntModel, x: &FeatureVector) -> Result<f64, PredictError> {
    predict_prob(model, x).map(|p| 1.0 - p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::NamedFeatures;

    fn space_of(names: &[&str]) -> FeatureSpace {
        let named: NamedFeatures = names.iter().map(|n| (n.to_string(), 1.0)).collect();
        FeatureSpace::from_named([&named])
    }

    fn vec_of(entries: &[(u32, f64)]) -> FeatureVector {
        FeatureVector::from_entries(entries.to_vec())
    }

    fn accuracy(model: &MaxEntModel, pos: &[FeatureVector], neg: &[FeatureVector]) -> f64 {
        let correct = pos
            .iter()
            .filter(|x| predict_prob(model, x).unwrap() >= 0.5)
            .count()
            + neg.iter().filter(|x| predict_prob(model, x).unwrap() < 0.5).count();
        correct as f64 / (pos.len() + neg.len()) as f64
    }

    #[test]
    fn separable_toy_reaches_full_accuracy() {
        let space = space_of(&["f0", "f1"]);
        let pos = vec![vec_of(&[(0, 1.0)]); 10];
        let neg = vec![vec_of(&[(1, 1.0)]); 10];
        let (model, summary) =
            train_detailed(&pos, &neg, space, &TrainConfig::default()).unwrap();
        assert!(summary.converged, "summary: {summary:?}");
        assert_eq!(accuracy(&model, &pos, &neg), 1.0);
        assert!(model.weights[0] > 0.0 && model.weights[1] < 0.0);
    }

    #[test]
    fn degenerate_balanced_data_predicts_half() {
        let space = space_of(&["f0"]);
        let x = vec_of(&[(0, 1.0)]);
        let pos = vec![x.clone(); 10];
        let neg = vec![x.clone(); 10];
        let model = train(&pos, &neg, space, &TrainConfig::default()).unwrap();
        let p = predict_prob(&model, &x).unwrap();
        assert!((p - 0.5).abs() < 1e-6, "p = {p}");
    }

    #[test]
    fn degenerate_one_to_five_ratio_matches_class_prior() {
        let space = space_of(&["f0"]);
        let x = vec_of(&[(0, 1.0)]);
        let pos = vec![x.clone(); 4];
        let neg = vec![x.clone(); 20];
        let model = train(&pos, &neg, space, &TrainConfig::default()).unwrap();
        // closed form: unregularized bias absorbs the prior, weights decay to 0
        let p = predict_prob(&model, &x).unwrap();
        assert!((p - 1.0 / 6.0).abs() < 1e-4, "p = {p}");
    }

    #[test]
    fn predict_prob_evaluates_the_logistic_function() {
        let model = MaxEntModel {
            bias: 0.0,
            weights: vec![1.0],
            space: space_of(&["f0"]),
        };
        let p = predict_prob(&model, &vec_of(&[(0, 1.0)])).unwrap();
        assert!((p - 0.7310585786300049).abs() < 1e-12);

        let zero = MaxEntModel { bias: 0.0, weights: vec![0.0], space: space_of(&["f0"]) };
        assert_eq!(predict_prob(&zero, &vec_of(&[(0, 3.5)])).unwrap(), 0.5);

        // monotone in the margin
        let mut last = 0.0;
        for k in 0..6 {
            let p = predict_prob(&model, &vec_of(&[(0, k as f64)])).unwrap();
            assert!(p > last);
            last = p;
        }
    }

    #[test]
    fn negclass_complements_exactly() {
        let model = MaxEntModel { bias: 0.3, weights: vec![0.7], space: space_of(&["f0"]) };
        let x = vec_of(&[(0, 2.0)]);
        let p = predict_prob(&model, &x).unwrap();
        let q = predict_prob_negclass(&model, &x).unwrap();
        assert_eq!(p + q, 1.0);
    }

    #[test]
    fn out_of_space_id_is_an_error() {
        let model = MaxEntModel { bias: 0.0, weights: vec![0.0], space: space_of(&["f0"]) };
        let err = predict_prob(&model, &vec_of(&[(5, 1.0)])).unwrap_err();
        assert_eq!(err, PredictError::OutOfSpace { id: 5, size: 1 });
    }

    #[test]
    fn empty_class_and_nonfinite_are_errors() {
        let space = space_of(&["f0"]);
        let x = vec![vec_of(&[(0, 1.0)])];
        assert_eq!(
            train(&[], &x, space.clone(), &TrainConfig::default()).unwrap_err(),
            TrainError::EmptyClass("positive")
        );
        let bad = vec![vec_of(&[(0, f64::NAN)])];
        assert_eq!(
            train(&bad, &x, space, &TrainConfig::default()).unwrap_err(),
            TrainError::NonFinite(0)
        );
    }

    #[test]
    fn gradient_matches_central_finite_differences() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let cfg = TrainConfig::default();

        for trial in 0..20 {
            let dim = rng.random_range(2..6usize);
            let names: Vec<String> = (0..dim).map(|i| format!("f{i}")).collect();
            let named: NamedFeatures = names.iter().map(|n| (n.clone(), 1.0)).collect();
            let space = FeatureSpace::from_named([&named]);
            let rand_vec = |rng: &mut rand_chacha::ChaCha8Rng| {
                vec_of(
                    &(0..dim)
                        .map(|i| (i as u32, rng.random_range(-2.0..2.0)))
                        .collect::<Vec<_>>(),
                )
            };
            let pos: Vec<FeatureVector> = (0..5).map(|_| rand_vec(&mut rng)).collect();
            let neg: Vec<FeatureVector> = (0..5).map(|_| rand_vec(&mut rng)).collect();
            let model = MaxEntModel {
                bias: rng.random_range(-1.0..1.0),
                weights: (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
                space,
            };

            let (_, grad_w, grad_b) = loss_and_gradient(&model, &pos, &neg, &cfg).unwrap();
            let h = 1e-5;
            let loss_at = |m: &MaxEntModel| loss_and_gradient(m, &pos, &neg, &cfg).unwrap().0;
            for i in 0..=dim {
                let mut plus = model.clone();
                let mut minus = model.clone();
                if i < dim {
                    plus.weights[i] += h;
                    minus.weights[i] -= h;
                } else {
                    plus.bias += h;
                    minus.bias -= h;
                }
                let numeric = (loss_at(&plus) - loss_at(&minus)) / (2.0 * h);
                let analytic = if i < dim { grad_w[i] } else { grad_b };
                let scale = analytic.abs().max(numeric.abs()).max(1e-8);
                assert!(
                    (numeric - analytic).abs() / scale < 1e-4,
                    "trial {trial} coord {i}: numeric {numeric} vs analytic {analytic}"
                );
            }
        }
    }

    #[test]
    fn gradient_norm_small_at_optimum() {
        let space = space_of(&["f0", "f1"]);
        let pos = vec![vec_of(&[(0, 1.0)]); 10];
        let neg = vec![vec_of(&[(1, 1.0)]); 10];
        let cfg = TrainConfig::default();
        let model = train(&pos, &neg, space, &cfg).unwrap();
        let (_, grad_w, grad_b) = loss_and_gradient(&model, &pos, &neg, &cfg).unwrap();
        let total: f64 = grad_w.iter().chain([&grad_b]).map(|g| g * g).sum::<f64>().sqrt();
        assert!(total <= cfg.tolerance, "|g| = {total:.3e}");
    }

    #[test]
    fn doubling_l2_never_shrinks_the_penalty_term() {
        // penalty = 0.5 * l2_c * ||w||^2 at fixed weights
        let w = [0.5, -2.0, 1.0];
        let penalty = |c: f64| 0.5 * c * w.iter().map(|x| x * x).sum::<f64>();
        for c in [0.25, 1.0, 4.0] {
            assert!(penalty(2.0 * c) >= penalty(c));
        }
    }

    #[test]
    fn permuting_examples_leaves_weights_unchanged() {
        let space = space_of(&["f0", "f1", "f2"]);
        let pos = vec![
            vec_of(&[(0, 1.0), (2, 0.5)]),
            vec_of(&[(0, 2.0)]),
            vec_of(&[(1, 0.25), (2, 1.5)]),
        ];
        let neg = vec![vec_of(&[(1, 1.0)]), vec_of(&[(1, 2.0), (2, 0.125)])];
        let cfg = TrainConfig::default();
        let a = train(&pos, &neg, space.clone(), &cfg).unwrap();

        let pos_perm = vec![pos[2].clone(), pos[0].clone(), pos[1].clone()];
        let neg_perm = vec![neg[1].clone(), neg[0].clone()];
        let b = train(&pos_perm, &neg_perm, space, &cfg).unwrap();
        assert_eq!(a.weights, b.weights);
        assert_eq!(a.bias, b.bias);
    }

    #[test]
    fn model_json_round_trip() {
        let space = space_of(&["f0", "f1"]);
        let pos = vec![vec_of(&[(0, 1.0)]); 3];
        let neg = vec![vec_of(&[(1, 1.0)]); 3];
        let model = train(&pos, &neg, space, &TrainConfig::default()).unwrap();
        let json = serde_json::to_string(&model).unwrap();
        assert!(json.starts_with("{\"bias\":"));
        let back: MaxEntModel = serde_json::from_str(&json).unwrap();
        assert_eq!(model, back);
    }
}
