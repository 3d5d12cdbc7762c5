use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, PosteriorSettings, PriorSpec, ScmSource};
use super::{fit_standardizer, initial_prior};
use crate::dr_prior::DrConfig;
use crate::error::{CboError, Result};
use crate::metrics;
use crate::parent_posterior::{ParentPosterior, ParentSet};
use crate::rng;
use crate::scm::{Dataset, Domain, Intervention, Scm};

/// Two posteriors that start from the same state: one sees only further
/// observational batches, the other sees the same batches with every
/// second one replaced by an interventional batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PosteriorDemoConfig {
    pub scm: ScmSource,
    pub n_obs: usize,
    pub steps: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub prior: PriorSpec,
    pub dr: DrConfig,
    pub posterior: PosteriorSettings,
    /// Chance that each manipulative node is intervened on in a row of an
    /// interventional batch.
    pub intervention_probability: f64,
}

impl Default for PosteriorDemoConfig {
    fn default() -> Self {
        Self {
            scm: ScmSource::builtin("toy"),
            n_obs: 200,
            steps: 10,
            batch_size: 10,
            seed: 0,
            prior: PriorSpec::Exhaustive,
            dr: DrConfig::default(),
            posterior: PosteriorSettings::default(),
            intervention_probability: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDemoResult {
    pub seed: u64,
    pub scm_name: String,
    pub true_parents_mask: String,
    /// Index 0 is the shared starting point; index `s` follows batch `s`.
    pub obs_accuracy: Vec<f64>,
    pub obs_f1: Vec<f64>,
    pub int_accuracy: Vec<f64>,
    pub int_f1: Vec<f64>,
}

fn interventional_batch(
    scm: &Scm,
    domains: &[Domain],
    manip: &[usize],
    cfg: &PosteriorDemoConfig,
    step: usize,
) -> Result<Dataset> {
    let mut out = Dataset::new(scm.dag().names().to_vec());
    for i in 0..cfg.batch_size {
        let idx = (step * cfg.batch_size + i) as u64;
        let mut r = rng::stream(cfg.seed, "demo-int", idx);
        let mut targets: Vec<usize> = manip
            .iter()
            .copied()
            .filter(|_| r.random_bool(cfg.intervention_probability))
            .collect();
        if targets.is_empty() {
            targets.push(manip[r.random_range(0..manip.len())]);
        }
        let values = targets
            .iter()
            .map(|&j| r.random_range(domains[j].lo..=domains[j].hi))
            .collect();
        let iv = Intervention::new(targets, values)?;
        let rows = scm.sample_interventional(&iv, 1, rng::derive_seed(cfg.seed, "demo-int-sample", idx))?;
        out.push(rows.row(0), Some(iv))?;
    }
    Ok(out)
}

pub fn run_posterior_demo(cfg: &PosteriorDemoConfig) -> Result<PosteriorDemoResult> {
    if cfg.n_obs < 2 || cfg.batch_size == 0 {
        return Err(CboError::Config("n_obs must be >= 2 and batch_size >= 1".into()));
    }
    if !(0.0..=1.0).contains(&cfg.intervention_probability) {
        return Err(CboError::Config("intervention_probability must lie in [0, 1]".into()));
    }
    let scm = cfg.scm.load(cfg.seed)?;
    let manip = scm.dag().manipulative();
    if manip.is_empty() {
        return Err(CboError::Precondition("SCM has no manipulative nodes".into()));
    }
    let truth = ParentSet::new(scm.dag().target_parents().to_vec());

    let obs_raw = scm.sample_observational(cfg.n_obs, rng::derive_seed(cfg.seed, "obs", 0))?;
    let domains = scm.resolve_domains(&obs_raw)?;
    let st = fit_standardizer(&obs_raw, &domains, &manip)?;
    let obs = st.apply(&obs_raw);

    let exp = ExperimentConfig {
        scm: cfg.scm.clone(),
        seed: cfg.seed,
        prior: cfg.prior.clone(),
        dr: cfg.dr.clone(),
        ..ExperimentConfig::default()
    };
    let prior = initial_prior(&exp, &scm, &obs)?;
    let pcfg = cfg
        .posterior
        .resolve(&scm, rng::derive_seed(cfg.seed, "posterior", 0));
    let mut obs_arm = ParentPosterior::init_beliefs(scm.num_nodes(), scm.target(), &prior, &obs, pcfg)?;
    let mut int_arm = obs_arm.clone();

    let mut res = PosteriorDemoResult {
        seed: cfg.seed,
        scm_name: scm.name().to_string(),
        true_parents_mask: truth.mask_string(scm.num_nodes()),
        obs_accuracy: vec![metrics::mean_accuracy(&obs_arm, &truth)],
        obs_f1: vec![metrics::mean_f1(&obs_arm, &truth)],
        int_accuracy: vec![metrics::mean_accuracy(&int_arm, &truth)],
        int_f1: vec![metrics::mean_f1(&int_arm, &truth)],
    };
    for s in 0..cfg.steps {
        let batch = scm.sample_observational(
            cfg.batch_size,
            rng::derive_seed(cfg.seed, "demo-obs", s as u64),
        )?;
        obs_arm.update_batch(&st.apply(&batch))?;
        if s % 2 == 0 {
            int_arm.update_batch(&st.apply(&batch))?;
        } else {
            let ib = interventional_batch(&scm, &domains, &manip, cfg, s)?;
            int_arm.update_batch(&st.apply(&ib))?;
        }
        res.obs_accuracy.push(metrics::mean_accuracy(&obs_arm, &truth));
        res.obs_f1.push(metrics::mean_f1(&obs_arm, &truth));
        res.int_accuracy.push(metrics::mean_accuracy(&int_arm, &truth));
        res.int_f1.push(metrics::mean_f1(&int_arm, &truth));
    }
    Ok(res)
}
