//! Posterior over the direct-parent set of the target.
//!
//! Each candidate set `s` carries a Bayesian linear model
//! `Y = theta_s . phi(x_s) + eps`, with `phi` the identity (linear mode) or a
//! frozen random Fourier feature map (nonlinear mode). The weight of a set is
//! its prior times the sequential marginal likelihood of every sample seen
//! after initialization, kept in log space.

mod belief;
mod features;
mod parent_set;

pub use belief::GaussianBelief;
pub use features::FourierFeatureMap;
pub use parent_set::ParentSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{CboError, Result};
use crate::rng;
use crate::scm::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PosteriorMode {
    Linear,
    Nonlinear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorConfig {
    pub mode: PosteriorMode,
    /// Observation noise variance of the target after standardization.
    pub noise_variance: f64,
    /// Prior variance of each weight.
    pub prior_variance: f64,
    pub num_features: usize,
    pub kernel_variance: f64,
    pub lengthscale: f64,
    /// Seeds the per-set feature maps.
    pub seed: u64,
}

impl Default for PosteriorConfig {
    fn default() -> Self {
        Self {
            mode: PosteriorMode::Linear,
            noise_variance: 1.0,
            prior_variance: 1.0,
            num_features: 100,
            kernel_variance: 1.0,
            lengthscale: 1.0,
            seed: 0,
        }
    }
}

impl PosteriorConfig {
    fn validate(&self) -> Result<()> {
        let positive = [
            ("noise_variance", self.noise_variance),
            ("prior_variance", self.prior_variance),
            ("kernel_variance", self.kernel_variance),
            ("lengthscale", self.lengthscale),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(CboError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.mode == PosteriorMode::Nonlinear && self.num_features == 0 {
            return Err(CboError::Config("num_features must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorEntry {
    pub set: ParentSet,
    pub log_weight: f64,
    pub belief: GaussianBelief,
    features: Option<FourierFeatureMap>,
}

impl PosteriorEntry {
    /// Regression features of a full observation row.
    pub fn phi(&self, row: &[f64]) -> Result<DVector<f64>> {
        let xs: Vec<f64> = self
            .set
            .members()
            .iter()
            .map(|&i| {
                row.get(i).copied().ok_or(CboError::DimensionMismatch {
                    expected: i + 1,
                    found: row.len(),
                })
            })
            .collect::<Result<_>>()?;
        match &self.features {
            None => Ok(DVector::from_vec(xs)),
            Some(map) => map.featurize(&xs),
        }
    }

    pub fn feature_map(&self) -> Option<&FourierFeatureMap> {
        self.features.as_ref()
    }

    /// Posterior predictive mean and variance of the target at `row`,
    /// including observation noise.
    pub fn predict(&self, row: &[f64], noise_variance: f64) -> Result<(f64, f64)> {
        let (m, v) = self.belief.predict(&self.phi(row)?);
        Ok((m, v + noise_variance))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSnapshot {
    pub mode: PosteriorMode,
    pub noise_variance: f64,
    pub prior_variance: f64,
    /// `(mask, weight)` pairs in posterior order.
    pub entries: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParentPosterior {
    num_nodes: usize,
    target: usize,
    config: PosteriorConfig,
    entries: Vec<PosteriorEntry>,
    num_updates: usize,
}

impl ParentPosterior {
    /// Candidate sets with zero prior mass are dropped. Beliefs start at
    /// `N(0, prior_variance I)`; call [`ParentPosterior::fit_observational`]
    /// to condition them on observational data.
    pub fn new(
        num_nodes: usize,
        target: usize,
        prior: &[(ParentSet, f64)],
        config: PosteriorConfig,
    ) -> Result<Self> {
        config.validate()?;
        if target >= num_nodes {
            return Err(CboError::Precondition(format!(
                "target index {target} out of range for {num_nodes} nodes"
            )));
        }
        if prior.iter().any(|(_, p)| !(p.is_finite() && *p >= 0.0)) {
            return Err(CboError::Precondition(
                "prior probabilities must be finite and nonnegative".into(),
            ));
        }
        let mut entries: Vec<PosteriorEntry> = Vec::new();
        for (set, p) in prior {
            if *p == 0.0 {
                continue;
            }
            if set.contains(target) || set.members().iter().any(|&i| i >= num_nodes) {
                return Err(CboError::Precondition(format!(
                    "candidate set {:?} is not a set of non-target nodes",
                    set.members()
                )));
            }
            if entries.iter().any(|e| &e.set == set) {
                return Err(CboError::Precondition(format!(
                    "candidate set {:?} listed twice",
                    set.members()
                )));
            }
            let features = match config.mode {
                PosteriorMode::Linear => None,
                PosteriorMode::Nonlinear => {
                    let mut r = rng::stream(
                        config.seed,
                        "rff",
                        rng::hash_indices(set.members()),
                    );
                    Some(FourierFeatureMap::sample(
                        set.len(),
                        config.num_features,
                        config.kernel_variance,
                        config.lengthscale,
                        &mut r,
                    )?)
                }
            };
            let dim = features
                .as_ref()
                .map_or(set.len(), FourierFeatureMap::dimension);
            entries.push(PosteriorEntry {
                set: set.clone(),
                log_weight: p.ln(),
                belief: GaussianBelief::isotropic(dim, config.prior_variance),
                features,
            });
        }
        if entries.is_empty() {
            return Err(CboError::Precondition(
                "prior assigns zero mass to every candidate set".into(),
            ));
        }
        let mut post = Self {
            num_nodes,
            target,
            config,
            entries,
            num_updates: 0,
        };
        post.normalize()?;
        Ok(post)
    }

    /// Prior plus batch fit of every belief on `obs` (already standardized).
    /// Weights stay at the prior.
    pub fn init_beliefs(
        num_nodes: usize,
        target: usize,
        prior: &[(ParentSet, f64)],
        obs: &Dataset,
        config: PosteriorConfig,
    ) -> Result<Self> {
        let mut post = Self::new(num_nodes, target, prior, config)?;
        post.fit_observational(obs)?;
        Ok(post)
    }

    pub fn fit_observational(&mut self, obs: &Dataset) -> Result<()> {
        if obs.is_empty() {
            return Err(CboError::Precondition("observational dataset is empty".into()));
        }
        if obs.width() != self.num_nodes {
            return Err(CboError::DimensionMismatch {
                expected: self.num_nodes,
                found: obs.width(),
            });
        }
        let y = DVector::from_vec(obs.column(self.target));
        if y.iter().any(|v| !v.is_finite()) {
            return Err(CboError::NonFinite("observational target column".into()));
        }
        for e in &mut self.entries {
            let rows = obs.rows().map(|r| e.phi(r)).collect::<Result<Vec<_>>>()?;
            let p = e.belief.dim();
            let phi = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
            e.belief = GaussianBelief::fit_batch(
                &phi,
                &y,
                self.config.noise_variance,
                self.config.prior_variance,
            )?;
        }
        Ok(())
    }

    /// Sequential Bayesian update with one full observation row.
    pub fn update(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.num_nodes {
            return Err(CboError::DimensionMismatch {
                expected: self.num_nodes,
                found: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(CboError::NonFinite("posterior update row".into()));
        }
        let y = row[self.target];
        let s2 = self.config.noise_variance;
        let mut next = Vec::with_capacity(self.entries.len());
        for e in &self.entries {
            let (inc, belief) = e.belief.condition(&e.phi(row)?, y, s2)?;
            next.push((e.log_weight + inc, belief));
        }
        for (e, (lw, b)) in self.entries.iter_mut().zip(next) {
            e.log_weight = lw;
            e.belief = b;
        }
        self.num_updates += 1;
        self.normalize()
    }

    pub fn update_batch(&mut self, data: &Dataset) -> Result<()> {
        for r in data.rows() {
            self.update(r)?;
        }
        Ok(())
    }

    /// Log-sum-exp renormalization of the log weights.
    pub fn normalize(&mut self) -> Result<()> {
        let lw: Vec<f64> = self.entries.iter().map(|e| e.log_weight).collect();
        let norm = normalize_log_weights(&lw)?;
        for (e, w) in self.entries.iter_mut().zip(norm) {
            e.log_weight = w;
        }
        Ok(())
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn config(&self) -> &PosteriorConfig {
        &self.config
    }

    pub fn entries(&self) -> &[PosteriorEntry] {
        &self.entries
    }

    pub fn num_updates(&self) -> usize {
        self.num_updates
    }

    pub fn weights(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.log_weight.exp()).collect()
    }

    pub fn weight_of(&self, set: &ParentSet) -> f64 {
        self.entries
            .iter()
            .find(|e| &e.set == set)
            .map_or(0.0, |e| e.log_weight.exp())
    }

    /// Probability that each node is a direct parent of the target.
    pub fn parent_marginals(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.num_nodes];
        for e in &self.entries {
            let w = e.log_weight.exp();
            for &i in e.set.members() {
                m[i] += w;
            }
        }
        m.iter_mut().for_each(|v| *v = v.min(1.0));
        m
    }

    pub fn snapshot(&self) -> PosteriorSnapshot {
        PosteriorSnapshot {
            mode: self.config.mode,
            noise_variance: self.config.noise_variance,
            prior_variance: self.config.prior_variance,
            entries: self
                .entries
                .iter()
                .map(|e| (e.set.mask_string(self.num_nodes), e.log_weight.exp()))
                .collect(),
        }
    }
}

/// Log weights shifted so that their exponentials sum to one.
pub fn normalize_log_weights(log_weights: &[f64]) -> Result<Vec<f64>> {
    if log_weights.iter().any(|w| w.is_nan() || *w == f64::INFINITY) {
        return Err(CboError::NonFinite("posterior log weight".into()));
    }
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(CboError::DegeneratePosterior(
            "every candidate set has zero likelihood".into(),
        ));
    }
    let lse = max + log_weights.iter().map(|w| (w - max).exp()).sum::<f64>().ln();
    Ok(log_weights.iter().map(|w| w - lse).collect())
}

/// Largest candidate pool for which every subset is enumerated.
pub const MAX_EXHAUSTIVE_CANDIDATES: usize = 10;

/// Uniform prior over every subset of `candidates`, including the empty set.
pub fn exhaustive_prior(candidates: &[usize]) -> Result<Vec<(ParentSet, f64)>> {
    let k = candidates.len();
    if k > MAX_EXHAUSTIVE_CANDIDATES {
        return Err(CboError::Precondition(format!(
            "exhaustive mode supports at most {MAX_EXHAUSTIVE_CANDIDATES} candidates, got {k}"
        )));
    }
    let n = 1usize << k;
    let p = 1.0 / n as f64;
    Ok((0..n)
        .map(|bits| {
            let members = (0..k)
                .filter(|b| bits >> b & 1 == 1)
                .map(|b| candidates[b])
                .collect();
            (ParentSet::new(members), p)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn set(v: &[usize]) -> ParentSet {
        ParentSet::new(v.to_vec())
    }

    #[test]
    fn normalization_examples() {
        let w = normalize_log_weights(&[0.0, 3f64.ln()]).unwrap();
        assert_abs_diff_eq!(w[0].exp(), 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(w[1].exp(), 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(normalize_log_weights(&[-7.0]).unwrap()[0], 0.0);
        assert!(matches!(
            normalize_log_weights(&[f64::NEG_INFINITY; 2]),
            Err(CboError::DegeneratePosterior(_))
        ));
    }

    #[test]
    fn equal_prior_gives_equal_log_weights() {
        let post = ParentPosterior::new(
            3,
            2,
            &[(set(&[0]), 0.5), (set(&[1]), 0.5)],
            PosteriorConfig::default(),
        )
        .unwrap();
        for e in post.entries() {
            assert_abs_diff_eq!(e.log_weight, 0.5f64.ln(), epsilon = 1e-15);
        }
    }

    #[test]
    fn single_row_fit_scalar_algebra() {
        let mut obs = Dataset::new(vec!["X".into(), "Y".into()]);
        obs.push(&[2.0, 3.0], None).unwrap();
        let post = ParentPosterior::init_beliefs(
            2,
            1,
            &[(set(&[0]), 1.0)],
            &obs,
            PosteriorConfig::default(),
        )
        .unwrap();
        let b = &post.entries()[0].belief;
        assert_abs_diff_eq!(b.covariance()[(0, 0)], 1.0 / 5.0, epsilon = 1e-14);
        assert_abs_diff_eq!(b.mean()[0], 6.0 / 5.0, epsilon = 1e-14);
    }

    #[test]
    fn symmetric_sets_stay_balanced() {
        // Columns 0 and 1 always carry the same value, so both sets explain Y equally.
        let mut post = ParentPosterior::new(
            3,
            2,
            &[(set(&[0]), 0.5), (set(&[1]), 0.5)],
            PosteriorConfig::default(),
        )
        .unwrap();
        for i in 0..20 {
            let x = (i as f64 * 0.7).sin();
            post.update(&[x, x, 2.0 * x + 0.1]).unwrap();
        }
        let w = post.weights();
        assert_abs_diff_eq!(w[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(w[1], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn marginals_examples() {
        let post =
            ParentPosterior::new(5, 4, &[(set(&[1, 3]), 1.0)], PosteriorConfig::default()).unwrap();
        assert_eq!(post.parent_marginals(), vec![0.0, 1.0, 0.0, 1.0, 0.0]);
        let post = ParentPosterior::new(
            3,
            2,
            &[(set(&[0]), 1.0), (set(&[1]), 1.0)],
            PosteriorConfig::default(),
        )
        .unwrap();
        let m = post.parent_marginals();
        assert_abs_diff_eq!(m[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(m[1], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn zero_mass_sets_dropped_and_all_zero_rejected() {
        let post = ParentPosterior::new(
            3,
            2,
            &[(set(&[0]), 0.0), (set(&[1]), 2.0)],
            PosteriorConfig::default(),
        )
        .unwrap();
        assert_eq!(post.entries().len(), 1);
        assert!(ParentPosterior::new(3, 2, &[(set(&[0]), 0.0)], PosteriorConfig::default())
            .is_err());
        assert!(ParentPosterior::new(3, 2, &[(set(&[2]), 1.0)], PosteriorConfig::default())
            .is_err());
    }

    #[test]
    fn update_rejects_non_finite() {
        let mut post =
            ParentPosterior::new(2, 1, &[(set(&[0]), 1.0)], PosteriorConfig::default()).unwrap();
        assert!(matches!(
            post.update(&[f64::INFINITY, 0.0]),
            Err(CboError::NonFinite(_))
        ));
    }

    #[test]
    fn exhaustive_prior_enumerates_power_set() {
        let p = exhaustive_prior(&[0, 2, 5]).unwrap();
        assert_eq!(p.len(), 8);
        assert!(p.iter().any(|(s, _)| s.is_empty()));
        assert!(p.iter().any(|(s, _)| s.members() == [0, 2, 5]));
        assert_abs_diff_eq!(p.iter().map(|(_, w)| w).sum::<f64>(), 1.0);
    }

    #[test]
    fn nonlinear_maps_are_per_set_and_seeded() {
        let cfg = PosteriorConfig {
            mode: PosteriorMode::Nonlinear,
            seed: 4,
            ..Default::default()
        };
        let prior = [(set(&[0]), 0.5), (set(&[0, 1]), 0.5)];
        let a = ParentPosterior::new(3, 2, &prior, cfg.clone()).unwrap();
        let b = ParentPosterior::new(3, 2, &prior, cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.entries()[0].feature_map().unwrap().input_dim(), 1);
        assert_eq!(a.entries()[1].feature_map().unwrap().input_dim(), 2);
        assert_eq!(a.entries()[0].belief.dim(), 100);
    }

    proptest::proptest! {
        #[test]
        fn weights_sum_to_one(rows in proptest::collection::vec(
            proptest::collection::vec(-3.0f64..3.0, 4), 1..30)) {
            let prior = exhaustive_prior(&[0, 1, 2]).unwrap();
            let mut post = ParentPosterior::new(4, 3, &prior, PosteriorConfig::default()).unwrap();
            for r in &rows {
                post.update(r).unwrap();
                let s: f64 = post.weights().iter().sum();
                proptest::prop_assert!((s - 1.0).abs() < 1e-12);
                proptest::prop_assert!(post.parent_marginals().iter().all(|&m| (0.0..=1.0).contains(&m)));
            }
        }

        #[test]
        fn update_order_invariant(rows in proptest::collection::vec(
            proptest::collection::vec(-3.0f64..3.0, 3), 2..15), shift in 1usize..14) {
            let prior = exhaustive_prior(&[0, 1]).unwrap();
            let mut a = ParentPosterior::new(3, 2, &prior, PosteriorConfig::default()).unwrap();
            let mut b = a.clone();
            for r in &rows {
                a.update(r).unwrap();
            }
            let k = shift % rows.len();
            for r in rows[k..].iter().chain(&rows[..k]) {
                b.update(r).unwrap();
            }
            for (x, y) in a.weights().iter().zip(b.weights()) {
                proptest::prop_assert!((x - y).abs() < 1e-8);
            }
        }
    }
}
