//! Optimization and structure-recovery metrics.

use crate::error::{CboError, Result};
use crate::parent_posterior::{ParentPosterior, ParentSet};

/// Best (minimum) observed target value.
pub fn y_star(ys: &[f64]) -> Result<f64> {
    if ys.is_empty() {
        return Err(CboError::Precondition("no trials recorded".into()));
    }
    Ok(ys.iter().copied().fold(f64::INFINITY, f64::min))
}

/// Mean observed target value.
pub fn y_bar(ys: &[f64]) -> Result<f64> {
    if ys.is_empty() {
        return Err(CboError::Precondition("no trials recorded".into()));
    }
    Ok(ys.iter().sum::<f64>() / ys.len() as f64)
}

/// Running minimum.
pub fn best_so_far(ys: &[f64]) -> Vec<f64> {
    ys.iter()
        .scan(f64::INFINITY, |b, &y| {
            *b = b.min(y);
            Some(*b)
        })
        .collect()
}

/// Fraction of the `candidates` on which `set` and `truth` agree.
pub fn set_accuracy(set: &ParentSet, truth: &ParentSet, candidates: &[usize]) -> f64 {
    if candidates.is_empty() {
        return 1.0;
    }
    let agree = candidates
        .iter()
        .filter(|&&i| set.contains(i) == truth.contains(i))
        .count();
    agree as f64 / candidates.len() as f64
}

/// `2 TP / (2 TP + FP + FN)`, with 1 when both sets are empty.
pub fn set_f1(set: &ParentSet, truth: &ParentSet) -> f64 {
    let tp = set.members().iter().filter(|&&i| truth.contains(i)).count();
    let fp = set.len() - tp;
    let fn_ = truth.len() - tp;
    if tp + fp + fn_ == 0 {
        return 1.0;
    }
    2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
}

/// Posterior-weighted accuracy over `weighted` sets; `candidates` are the
/// non-target nodes.
pub fn weighted_accuracy(
    weighted: &[(ParentSet, f64)],
    truth: &ParentSet,
    candidates: &[usize],
) -> f64 {
    weighted
        .iter()
        .map(|(s, w)| w * set_accuracy(s, truth, candidates))
        .sum()
}

pub fn weighted_f1(weighted: &[(ParentSet, f64)], truth: &ParentSet) -> f64 {
    weighted.iter().map(|(s, w)| w * set_f1(s, truth)).sum()
}

fn weighted_sets(post: &ParentPosterior) -> Vec<(ParentSet, f64)> {
    post.entries()
        .iter()
        .zip(post.weights())
        .map(|(e, w)| (e.set.clone(), w))
        .collect()
}

fn non_target(post: &ParentPosterior) -> Vec<usize> {
    (0..post.num_nodes()).filter(|&i| i != post.target()).collect()
}

pub fn mean_accuracy(post: &ParentPosterior, truth: &ParentSet) -> f64 {
    weighted_accuracy(&weighted_sets(post), truth, &non_target(post))
}

pub fn mean_f1(post: &ParentPosterior, truth: &ParentSet) -> f64 {
    weighted_f1(&weighted_sets(post), truth)
}

/// Fraction of chosen intervention sets contained in the true parents.
pub fn parent_intervention_proportion(elements: &[ParentSet], truth: &ParentSet) -> Result<f64> {
    if elements.is_empty() {
        return Err(CboError::Precondition("no trials recorded".into()));
    }
    let hits = elements.iter().filter(|e| e.is_subset_of(truth)).count();
    Ok(hits as f64 / elements.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parent_posterior::PosteriorConfig;

    fn set(v: &[usize]) -> ParentSet {
        ParentSet::new(v.to_vec())
    }

    #[test]
    fn best_so_far_is_monotone() {
        assert_eq!(best_so_far(&[3.0, 1.0, 2.0, 0.5]), vec![3.0, 1.0, 1.0, 0.5]);
    }

    #[test]
    fn metrics_are_affine_in_weights() {
        let truth = set(&[0, 2]);
        let cands = [0, 1, 2, 3];
        let a = vec![(set(&[0]), 0.3), (set(&[0, 2]), 0.7)];
        let b = vec![(set(&[1, 3]), 0.6), (set(&[]), 0.4)];
        let lambda = 0.35;
        let mix: Vec<(ParentSet, f64)> = a
            .iter()
            .map(|(s, w)| (s.clone(), lambda * w))
            .chain(b.iter().map(|(s, w)| (s.clone(), (1.0 - lambda) * w)))
            .collect();
        let acc = |p: &[(ParentSet, f64)]| weighted_accuracy(p, &truth, &cands);
        let f1 = |p: &[(ParentSet, f64)]| weighted_f1(p, &truth);
        assert!((acc(&mix) - (lambda * acc(&a) + (1.0 - lambda) * acc(&b))).abs() < 1e-15);
        assert!((f1(&mix) - (lambda * f1(&a) + (1.0 - lambda) * f1(&b))).abs() < 1e-15);
    }

    #[test]
    fn posterior_wrappers_use_non_target_count() {
        let post = ParentPosterior::new(
            6,
            5,
            &[(set(&[0, 1]), 0.5), (set(&[0]), 0.5)],
            PosteriorConfig::default(),
        )
        .unwrap();
        assert!((mean_accuracy(&post, &set(&[0, 1])) - 0.9).abs() < 1e-15);
        assert!((mean_f1(&post, &set(&[0, 1])) - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
    }
}
