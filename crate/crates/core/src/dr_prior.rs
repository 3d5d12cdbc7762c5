//! Prior over parent sets from observational data.
//!
//! For each candidate `X_j` the statistic
//! `chi_j = E[(E[Y | X] - E[Y | X_{-j}])^2]` is estimated with 2-fold
//! cross-fitting and tested against zero. Bootstrap replicates of the
//! resulting point estimate give the prior frequencies.

use std::collections::BTreeMap;

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{CboError, Result};
use crate::parent_posterior::{FourierFeatureMap, ParentSet};
use crate::rng;
use crate::scm::Dataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Regressor {
    /// Ridge regression on random Fourier features. The RBF lengthscale is
    /// the median pairwise distance of the training inputs over all
    /// candidates; leave-one-out fits share it and the frequency draw.
    KernelRidgeRff { num_features: usize, ridge: f64 },
    NearestNeighbor { k: usize },
}

impl Default for Regressor {
    fn default() -> Self {
        Regressor::KernelRidgeRff {
            num_features: 200,
            ridge: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DrConfig {
    pub bootstrap_count: usize,
    pub confidence: f64,
    pub regressor: Regressor,
    pub sample_fraction: f64,
    /// Whether the empty set may carry prior mass.
    pub allow_empty: bool,
}

impl Default for DrConfig {
    fn default() -> Self {
        Self {
            bootstrap_count: 30,
            confidence: 0.95,
            regressor: Regressor::default(),
            sample_fraction: 1.0,
            allow_empty: true,
        }
    }
}

impl DrConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bootstrap_count == 0 {
            return Err(CboError::Config("bootstrap_count must be >= 1".into()));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(CboError::Config("confidence must lie in (0, 1)".into()));
        }
        if !(self.sample_fraction > 0.0 && self.sample_fraction <= 1.0) {
            return Err(CboError::Config("sample_fraction must lie in (0, 1]".into()));
        }
        match self.regressor {
            Regressor::KernelRidgeRff { num_features, ridge } => {
                if num_features == 0 || !(ridge > 0.0) {
                    return Err(CboError::Config(
                        "kernel ridge needs num_features >= 1 and ridge > 0".into(),
                    ));
                }
            }
            Regressor::NearestNeighbor { k } => {
                if k == 0 {
                    return Err(CboError::Config("nearest-neighbor k must be >= 1".into()));
                }
            }
        }
        Ok(())
    }
}

pub const MIN_SAMPLES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiEstimate {
    pub estimate: f64,
    pub stderr: f64,
    /// One-sample t statistic of the per-point scores; `+inf` when the
    /// scores are constant and positive.
    pub t: f64,
    pub n: usize,
}

impl ChiEstimate {
    pub fn rejects_zero(&self, confidence: f64) -> bool {
        if self.t.is_infinite() {
            return self.t > 0.0;
        }
        if self.n < 2 || !self.t.is_finite() {
            return false;
        }
        let dist = StudentsT::new(0.0, 1.0, (self.n - 1) as f64).expect("valid dof");
        self.t > dist.inverse_cdf(confidence)
    }
}

fn columns_of(data: &Dataset, rows: &[usize], cols: &[usize]) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|&i| {
            let r = data.row(i);
            cols.iter().map(|&c| r[c]).collect()
        })
        .collect()
}

fn median_pairwise_distance(x: &[Vec<f64>]) -> f64 {
    let m = x.len().min(200);
    let mut d = Vec::with_capacity(m * (m - 1) / 2);
    for i in 0..m {
        for j in (i + 1)..m {
            let s: f64 = x[i].iter().zip(&x[j]).map(|(a, b)| (a - b).powi(2)).sum();
            d.push(s.sqrt());
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    let med = d[d.len() / 2];
    if med > 1e-9 {
        med
    } else {
        1.0
    }
}

/// Fits the configured regressor of `y` on `x_train` and predicts at
/// `x_test`. Kernel ridge uses the given feature map.
fn fit_predict(
    regressor: &Regressor,
    map: Option<&FourierFeatureMap>,
    x_train: &[Vec<f64>],
    y_train: &[f64],
    x_test: &[Vec<f64>],
) -> Result<Vec<f64>> {
    let n = y_train.len();
    let y_mean = y_train.iter().sum::<f64>() / n as f64;
    let dim = x_train.first().map_or(0, Vec::len);
    if dim == 0 {
        return Ok(vec![y_mean; x_test.len()]);
    }
    match (regressor, map) {
        (&Regressor::KernelRidgeRff { ridge, .. }, Some(map)) => {
            let z = map.featurize_rows(x_train.iter().map(Vec::as_slice))?;
            let yc = DVector::from_iterator(n, y_train.iter().map(|v| v - y_mean));
            let mut a = z.tr_mul(&z);
            for i in 0..map.dimension() {
                a[(i, i)] += ridge * n as f64;
            }
            let chol = a.cholesky().ok_or_else(|| {
                CboError::Regressor("kernel ridge system is not positive definite".into())
            })?;
            let w = chol.solve(&z.tr_mul(&yc));
            x_test
                .iter()
                .map(|x| Ok(y_mean + map.featurize(x)?.dot(&w)))
                .collect()
        }
        (Regressor::KernelRidgeRff { .. }, None) => {
            Err(CboError::Regressor("kernel ridge needs a feature map".into()))
        }
        (&Regressor::NearestNeighbor { k }, _) => {
            let k = k.min(n);
            Ok(x_test
                .iter()
                .map(|x| {
                    let mut d: Vec<(f64, usize)> = x_train
                        .iter()
                        .enumerate()
                        .map(|(i, t)| {
                            let s: f64 = t.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum();
                            (s, i)
                        })
                        .collect();
                    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                    d[..k].iter().map(|&(_, i)| y_train[i]).sum::<f64>() / k as f64
                })
                .collect())
        }
    }
}

/// Cross-fitted test of every candidate. `groups[i]` identifies the source
/// of row `i`; rows of one group always share a fold, so bootstrap
/// duplicates never straddle the split.
fn chi_all(
    data: &Dataset,
    target: usize,
    candidates: &[usize],
    groups: &[usize],
    cfg: &DrConfig,
    seed: u64,
) -> Result<Vec<ChiEstimate>> {
    let n = data.len();
    if n < MIN_SAMPLES {
        return Err(CboError::Precondition(format!(
            "doubly robust test needs at least {MIN_SAMPLES} rows, got {n}"
        )));
    }
    if candidates.contains(&target) {
        return Err(CboError::Precondition("target listed as a candidate".into()));
    }
    let num_groups = groups.iter().max().map_or(0, |m| m + 1);
    let mut order: Vec<usize> = (0..num_groups).collect();
    order.shuffle(&mut rng::stream(seed, "dr-folds", 0));
    let mut group_fold = vec![0usize; num_groups];
    for (pos, &g) in order.iter().enumerate() {
        group_fold[g] = usize::from(pos >= num_groups / 2);
    }
    let folds: [Vec<usize>; 2] = [0, 1].map(|f| (0..n).filter(|&i| group_fold[groups[i]] == f).collect());
    if folds.iter().any(|f| f.len() < 2) {
        return Err(CboError::Precondition(
            "too few distinct rows for cross-fitting".into(),
        ));
    }

    let y = data.column(target);
    let mut scores: Vec<Vec<f64>> = vec![Vec::with_capacity(n); candidates.len()];
    for f in 0..2 {
        let (train, test) = (&folds[f], &folds[1 - f]);
        let y_train: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let x_train = columns_of(data, train, candidates);
        // Reduced fits reuse the full fit's lengthscale and frequencies with
        // column j dropped, so m and m_{-j} differ only in X_j.
        let map = match cfg.regressor {
            Regressor::KernelRidgeRff { num_features, .. } if !candidates.is_empty() => {
                let ls = median_pairwise_distance(&x_train);
                let mut r = rng::stream(seed, "dr-full", f as u64);
                Some(FourierFeatureMap::sample(candidates.len(), num_features, 1.0, ls, &mut r)?)
            }
            _ => None,
        };
        let full = fit_predict(
            &cfg.regressor,
            map.as_ref(),
            &x_train,
            &y_train,
            &columns_of(data, test, candidates),
        )?;
        for (ci, &j) in candidates.iter().enumerate() {
            let reduced_cols: Vec<usize> = candidates.iter().copied().filter(|&c| c != j).collect();
            let reduced_map = map.as_ref().map(|m| m.without_input(ci));
            let reduced = fit_predict(
                &cfg.regressor,
                reduced_map.as_ref(),
                &columns_of(data, train, &reduced_cols),
                &y_train,
                &columns_of(data, test, &reduced_cols),
            )?;
            // (y - m_{-j})^2 - (y - m)^2 = (m - m_{-j})^2 + 2 (y - m)(m - m_{-j}):
            // the plug-in squared difference plus its first-order correction.
            for (k, &i) in test.iter().enumerate() {
                let s = (y[i] - reduced[k]).powi(2) - (y[i] - full[k]).powi(2);
                scores[ci].push(s);
            }
        }
    }
    Ok(scores.iter().map(|s| summarize(s)).collect())
}

fn summarize(s: &[f64]) -> ChiEstimate {
    let n = s.len();
    let mean = s.iter().sum::<f64>() / n as f64;
    let var = s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0).max(1.0);
    let stderr = (var / n as f64).sqrt();
    let t = if stderr > 1e-300 {
        mean / stderr
    } else if mean > 1e-12 {
        f64::INFINITY
    } else {
        0.0
    };
    ChiEstimate {
        estimate: mean,
        stderr,
        t,
        n,
    }
}

/// Cross-fitted estimate of `chi_j` for one candidate, conditioning on the
/// other `candidates`.
pub fn chi_statistic(
    data: &Dataset,
    target: usize,
    candidates: &[usize],
    j: usize,
    cfg: &DrConfig,
    seed: u64,
) -> Result<ChiEstimate> {
    cfg.validate()?;
    let pos = candidates
        .iter()
        .position(|&c| c == j)
        .ok_or_else(|| CboError::Precondition(format!("node {j} is not a candidate")))?;
    let groups: Vec<usize> = (0..data.len()).collect();
    Ok(chi_all(data, target, candidates, &groups, cfg, seed)?[pos])
}

/// Candidates whose statistic is significantly positive.
pub fn point_estimate_parents(
    data: &Dataset,
    target: usize,
    candidates: &[usize],
    cfg: &DrConfig,
    seed: u64,
) -> Result<ParentSet> {
    cfg.validate()?;
    let groups: Vec<usize> = (0..data.len()).collect();
    estimate_with_groups(data, target, candidates, &groups, cfg, seed)
}

fn estimate_with_groups(
    data: &Dataset,
    target: usize,
    candidates: &[usize],
    groups: &[usize],
    cfg: &DrConfig,
    seed: u64,
) -> Result<ParentSet> {
    let chis = chi_all(data, target, candidates, groups, cfg, seed)?;
    Ok(ParentSet::new(
        candidates
            .iter()
            .zip(&chis)
            .filter(|(_, c)| c.rejects_zero(cfg.confidence))
            .map(|(&j, _)| j)
            .collect(),
    ))
}

/// Bootstrap frequency of each estimated parent set, sorted by set.
pub fn bootstrap_prior(
    data: &Dataset,
    target: usize,
    candidates: &[usize],
    cfg: &DrConfig,
    seed: u64,
) -> Result<Vec<(ParentSet, f64)>> {
    cfg.validate()?;
    let n = data.len();
    let m = ((cfg.sample_fraction * n as f64).round() as usize).max(1);
    let mut counts: BTreeMap<ParentSet, usize> = BTreeMap::new();
    for b in 0..cfg.bootstrap_count {
        let mut r = rng::stream(seed, "bootstrap", b as u64);
        let picks: Vec<usize> = (0..m).map(|_| r.random_range(0..n)).collect();
        let sample = data.select_rows(&picks);
        let est = estimate_with_groups(
            &sample,
            target,
            candidates,
            &picks,
            cfg,
            rng::derive_seed(seed, "bootstrap-fit", b as u64),
        )?;
        log::debug!("bootstrap {b}: parents {:?}", est.members());
        *counts.entry(est).or_default() += 1;
    }
    if !cfg.allow_empty {
        counts.remove(&ParentSet::empty());
        if counts.is_empty() {
            log::warn!("every bootstrap estimate is empty; using a uniform prior over singletons");
            return Ok(uniform_singletons(candidates));
        }
    }
    let total: usize = counts.values().sum();
    Ok(counts
        .into_iter()
        .map(|(s, c)| (s, c as f64 / total as f64))
        .collect())
}

pub fn uniform_singletons(candidates: &[usize]) -> Vec<(ParentSet, f64)> {
    let p = 1.0 / candidates.len() as f64;
    candidates
        .iter()
        .map(|&c| (ParentSet::new(vec![c]), p))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn dataset(rows: &[Vec<f64>]) -> Dataset {
        let mut d = Dataset::new((0..rows[0].len()).map(|i| format!("V{i}")).collect());
        for r in rows {
            d.push(r, None).unwrap();
        }
        d
    }

    fn linear_data(n: usize, seed: u64, noise: f64) -> Dataset {
        let mut r = rng::rng_from(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let x1: f64 = StandardNormal.sample(&mut r);
                let x2: f64 = StandardNormal.sample(&mut r);
                let e: f64 = StandardNormal.sample(&mut r);
                vec![x1, x2, 3.0 * x1 + noise * e]
            })
            .collect();
        dataset(&rows)
    }

    #[test]
    fn detects_parent_and_rejects_independent_noise() {
        let cfg = DrConfig::default();
        let mut null_accepts = 0;
        for seed in 0..10 {
            let d = linear_data(2000, seed, 1.0);
            let c1 = chi_statistic(&d, 2, &[0, 1], 0, &cfg, seed).unwrap();
            assert!(c1.rejects_zero(0.95), "{c1:?}");
            let c2 = chi_statistic(&d, 2, &[0, 1], 1, &cfg, seed).unwrap();
            if !c2.rejects_zero(0.95) {
                null_accepts += 1;
            }
        }
        assert!(null_accepts >= 8, "{null_accepts}");
    }

    #[test]
    fn many_noise_candidates_rarely_pass() {
        // One true parent among 20 independent noise columns: the leave-one-out
        // fits must not all drift together, so rejections stay near the level.
        let mut r = rng::rng_from(11);
        let rows: Vec<Vec<f64>> = (0..200)
            .map(|_| {
                let mut row: Vec<f64> = (0..21).map(|_| StandardNormal.sample(&mut r)).collect();
                let e: f64 = StandardNormal.sample(&mut r);
                row.push(2.0 * row[0] + e);
                row
            })
            .collect();
        let d = dataset(&rows);
        let cands: Vec<usize> = (0..21).collect();
        let mut false_pos = 0;
        for seed in 0..5 {
            let est = point_estimate_parents(&d, 21, &cands, &DrConfig::default(), seed).unwrap();
            false_pos += est.members().iter().filter(|&&j| j != 0).count();
        }
        // 100 null tests at the 5% level
        assert!(false_pos <= 15, "{false_pos}");
    }

    #[test]
    fn constant_target_gives_zero() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![(i as f64).sin(), 0.0]).collect();
        let c = chi_statistic(&dataset(&rows), 1, &[0], 0, &DrConfig::default(), 0).unwrap();
        assert!(c.estimate.abs() < 1e-12);
        assert!(!c.rejects_zero(0.95));
    }

    #[test]
    fn too_few_rows() {
        let d = linear_data(10, 0, 1.0);
        assert!(matches!(
            chi_statistic(&d, 2, &[0, 1], 0, &DrConfig::default(), 0),
            Err(CboError::Precondition(_))
        ));
    }

    #[test]
    fn noiseless_parent_detected() {
        let d = linear_data(200, 4, 0.0);
        let est = point_estimate_parents(&d, 2, &[0, 1], &DrConfig::default(), 1).unwrap();
        assert!(est.contains(0));
    }

    #[test]
    fn nearest_neighbor_regressor_detects_parent() {
        let cfg = DrConfig {
            regressor: Regressor::NearestNeighbor { k: 10 },
            ..Default::default()
        };
        let d = linear_data(400, 2, 1.0);
        let est = point_estimate_parents(&d, 2, &[0, 1], &cfg, 0).unwrap();
        assert!(est.contains(0));
    }

    #[test]
    fn bootstrap_is_distribution_and_deterministic() {
        let d = linear_data(200, 7, 1.0);
        let cfg = DrConfig {
            bootstrap_count: 8,
            ..Default::default()
        };
        let p = bootstrap_prior(&d, 2, &[0, 1], &cfg, 3).unwrap();
        assert!(p.len() <= 8);
        assert!((p.iter().map(|(_, w)| w).sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|(_, w)| *w > 0.0));
        assert_eq!(p, bootstrap_prior(&d, 2, &[0, 1], &cfg, 3).unwrap());
    }

    #[test]
    fn empty_fallback_when_inadmissible() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![(i as f64).sin(), (i as f64).cos(), 0.0]).collect();
        let cfg = DrConfig {
            bootstrap_count: 3,
            allow_empty: false,
            ..Default::default()
        };
        let p = bootstrap_prior(&dataset(&rows), 2, &[0, 1], &cfg, 0).unwrap();
        assert_eq!(p, uniform_singletons(&[0, 1]));
    }

    #[test]
    fn config_validation() {
        let bad = DrConfig {
            bootstrap_count: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = DrConfig {
            confidence: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
