//! The optimization loop and its baselines.
//!
//! Every method shares the same observational sample, initial interventional
//! sample, and per-trial exogenous noise for a given seed, so differences
//! between methods come from the interventions they choose.

mod config;
mod demo;
mod trace;

pub use config::{
    ExperimentConfig, GivenSet, Method, ModeSetting, PosteriorSettings, PriorSpec, ScmSource,
};
pub use demo::{run_posterior_demo, PosteriorDemoConfig, PosteriorDemoResult};
pub use trace::{
    InitialIntervention, IterationRecord, Trace, TraceHeader, TraceSummary, TRACE_FORMAT_VERSION,
};

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::acquisition::{self, default_pool, ExplorationSet, Selection};
use crate::dr_prior;
use crate::error::{CboError, Result};
use crate::metrics;
use crate::parent_posterior::{exhaustive_prior, ParentPosterior, ParentSet};
use crate::rng;
use crate::scm::{Dataset, Domain, Intervention, Scm, Standardizer};
use crate::surrogate::{CausalPrior, GpSurrogate, InputScaling};

/// Runs one replicate. Configuration and SCM loading problems are returned
/// as errors; failures after that end the run early and are recorded in the
/// trace summary.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Trace> {
    cfg.validate()?;
    let scm = cfg.scm.load(cfg.seed)?;
    let mut runner = Runner::new(cfg, scm);
    let outcome = runner.run();
    Ok(runner.finish(outcome.err()))
}

pub fn run_cbo_u(cfg: &ExperimentConfig) -> Result<Trace> {
    run_with(cfg, Method::CboU)
}

pub fn run_cbo_known(cfg: &ExperimentConfig) -> Result<Trace> {
    run_with(cfg, Method::CboKnown)
}

pub fn run_cbo_wrong(cfg: &ExperimentConfig) -> Result<Trace> {
    run_with(cfg, Method::CboWrong)
}

pub fn run_random(cfg: &ExperimentConfig) -> Result<Trace> {
    run_with(cfg, Method::Random)
}

pub fn run_bo(cfg: &ExperimentConfig) -> Result<Trace> {
    run_with(cfg, Method::Bo)
}

fn run_with(cfg: &ExperimentConfig, method: Method) -> Result<Trace> {
    let mut c = cfg.clone();
    c.method = method;
    run_experiment(&c)
}

fn mask_of(set: &ParentSet, n: usize) -> String {
    set.mask_string(n)
}

fn uniform_values(domains: &[Domain], element: &ParentSet, r: &mut rng::Rng) -> Vec<f64> {
    element
        .members()
        .iter()
        .map(|&i| r.random_range(domains[i].lo..=domains[i].hi))
        .collect()
}

/// Observational standardization, with the scale of each manipulative node
/// floored at the spread of a uniform draw over its domain. Without the
/// floor a node that barely varies observationally (a saturated sigmoid,
/// say) puts interventional values hundreds of units from the origin.
pub fn fit_standardizer(obs: &Dataset, domains: &[Domain], manip: &[usize]) -> Result<Standardizer> {
    let mut st = Standardizer::fit(obs)?;
    for &j in manip {
        st.stds[j] = st.stds[j].max(domains[j].width() / 12f64.sqrt());
    }
    Ok(st)
}

/// Initial parent-set prior for CBO-U.
pub fn initial_prior(
    cfg: &ExperimentConfig,
    scm: &Scm,
    obs_std: &Dataset,
) -> Result<Vec<(ParentSet, f64)>> {
    let dag = scm.dag();
    let candidates = dag.non_target();
    match &cfg.prior {
        PriorSpec::DoublyRobust => dr_prior::bootstrap_prior(
            obs_std,
            dag.target(),
            &candidates,
            &cfg.dr,
            rng::derive_seed(cfg.seed, "dr", 0),
        ),
        PriorSpec::Exhaustive => exhaustive_prior(&candidates),
        PriorSpec::Given { sets } => sets
            .iter()
            .map(|g| {
                let members = g
                    .nodes
                    .iter()
                    .map(|n| {
                        dag.index_of(n).ok_or_else(|| {
                            CboError::Config(format!("prior names unknown node `{n}`"))
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok((ParentSet::new(members), g.probability))
            })
            .collect(),
    }
}

/// A fixed set of manipulative non-parents with as many members as the
/// manipulative true parents (fewer if not enough exist).
pub fn wrong_parent_set(scm: &Scm, seed: u64) -> Result<ParentSet> {
    let dag = scm.dag();
    let truth = ParentSet::new(dag.target_parents().to_vec());
    let manip = dag.manipulative();
    let mut pool: Vec<usize> = manip.iter().copied().filter(|&i| !truth.contains(i)).collect();
    if pool.is_empty() {
        return Err(CboError::Precondition(
            "every manipulative node is a parent of the target; no wrong graph exists".into(),
        ));
    }
    let k = manip
        .iter()
        .filter(|&&i| truth.contains(i))
        .count()
        .clamp(1, pool.len());
    pool.shuffle(&mut rng::stream(seed, "wrong", 0));
    Ok(ParentSet::new(pool[..k].to_vec()))
}

struct Runner<'a> {
    cfg: &'a ExperimentConfig,
    scm: Scm,
    header: TraceHeader,
    iterations: Vec<IterationRecord>,
    chosen: Vec<(ParentSet, Vec<f64>)>,
    truth: ParentSet,
    manip: Vec<usize>,
    pool: Vec<ParentSet>,
    st: Standardizer,
    domains: Vec<Domain>,
    d_int: Dataset,
    post: Option<ParentPosterior>,
}

impl<'a> Runner<'a> {
    fn new(cfg: &'a ExperimentConfig, scm: Scm) -> Self {
        let dag = scm.dag();
        let n = dag.num_nodes();
        let truth = ParentSet::new(dag.target_parents().to_vec());
        let manip = dag.manipulative();
        let header = TraceHeader {
            format_version: TRACE_FORMAT_VERSION,
            package_version: env!("CARGO_PKG_VERSION").to_string(),
            method: cfg.method,
            seed: cfg.seed,
            config: cfg.clone(),
            scm_name: scm.name().to_string(),
            node_names: dag.names().to_vec(),
            target: dag.target(),
            true_parents_mask: mask_of(&truth, n),
            manipulative_mask: mask_of(&ParentSet::new(manip.clone()), n),
            domains: Vec::new(),
            prior: Vec::new(),
            initial_interventions: Vec::new(),
        };
        let d_int = Dataset::new(dag.names().to_vec());
        Self {
            cfg,
            header,
            iterations: Vec::new(),
            chosen: Vec::new(),
            truth,
            pool: default_pool(&manip),
            manip,
            st: Standardizer::identity(n),
            domains: Vec::new(),
            d_int,
            post: None,
            scm,
        }
    }

    fn n(&self) -> usize {
        self.scm.num_nodes()
    }

    fn target(&self) -> usize {
        self.scm.target()
    }

    fn run(&mut self) -> Result<()> {
        if self.manip.is_empty() {
            return Err(CboError::Precondition("SCM has no manipulative nodes".into()));
        }
        let seed = self.cfg.seed;
        let obs_raw = self
            .scm
            .sample_observational(self.cfg.n_obs, rng::derive_seed(seed, "obs", 0))?;
        self.domains = self.scm.resolve_domains(&obs_raw)?;
        self.st = fit_standardizer(&obs_raw, &self.domains, &self.manip)?;
        let obs = self.st.apply(&obs_raw);
        self.header.domains = self.domains.iter().map(|d| (d.lo, d.hi)).collect();

        let full = ParentSet::new(self.manip.clone());
        for i in 0..self.cfg.n_int {
            let mut r = rng::stream(seed, "init-int", i as u64);
            let element = match self.cfg.method {
                Method::Bo => full.clone(),
                _ => self.pool[r.random_range(0..self.pool.len())].clone(),
            };
            let values = uniform_values(&self.domains, &element, &mut r);
            let y = self.intervene(&element, &values, rng::derive_seed(seed, "init-sample", i as u64))?;
            self.header.initial_interventions.push(InitialIntervention {
                element_mask: mask_of(&element, self.n()),
                values,
                y,
            });
        }

        let prior = match self.cfg.method {
            Method::CboU => Some(initial_prior(self.cfg, &self.scm, &obs)?),
            Method::CboKnown => Some(vec![(self.truth.clone(), 1.0)]),
            Method::CboWrong => Some(vec![(wrong_parent_set(&self.scm, seed)?, 1.0)]),
            Method::Random | Method::Bo => None,
        };
        if let Some(prior) = prior {
            self.header.prior = prior.iter().map(|(s, p)| (mask_of(s, self.n()), *p)).collect();
            let pcfg = self
                .cfg
                .posterior
                .resolve(&self.scm, rng::derive_seed(seed, "posterior", 0));
            let mut post = ParentPosterior::init_beliefs(self.n(), self.target(), &prior, &obs, pcfg)?;
            if self.cfg.method == Method::CboU {
                for r in self.d_int.rows() {
                    post.update(&self.st.scale_row(r))?;
                }
            }
            self.post = Some(post);
        }

        for t in 1..=self.cfg.trials {
            self.step(t)?;
        }
        Ok(())
    }

    /// Samples one row under `do(element = values)`, appends it to the
    /// interventional data and returns the target value.
    fn intervene(&mut self, element: &ParentSet, values: &[f64], seed: u64) -> Result<f64> {
        let iv = Intervention::new(element.members().to_vec(), values.to_vec())?;
        let data = self.scm.sample_interventional(&iv, 1, seed)?;
        let row = data.row(0).to_vec();
        self.d_int.push(&row, Some(iv))?;
        Ok(row[self.target()])
    }

    fn y_best_standardized(&self) -> f64 {
        let t = self.target();
        let best = self
            .d_int
            .rows()
            .map(|r| self.st.scale(t, r[t]))
            .fold(f64::INFINITY, f64::min);
        if best.is_finite() {
            best
        } else {
            0.0
        }
    }

    fn surrogate(&self, element: &ParentSet, prior: CausalPrior, t: usize) -> Result<GpSurrogate> {
        let members = element.members();
        let scaling = InputScaling {
            domains: members.iter().map(|&i| self.domains[i]).collect(),
            standardization: members
                .iter()
                .map(|&i| (self.st.means[i], self.st.stds[i]))
                .collect(),
        };
        let mut gp_cfg = self.cfg.gp.clone();
        gp_cfg.seed = rng::derive_seed(
            rng::derive_seed(self.cfg.seed, "gp", t as u64),
            "element",
            rng::hash_indices(members),
        );
        let mut gp = GpSurrogate::new(members.to_vec(), scaling, prior, gp_cfg)?;
        let target = self.target();
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..self.d_int.len() {
            if let Some(iv) = self.d_int.tag(i) {
                if iv.targets() == members {
                    xs.push(iv.values().to_vec());
                    ys.push(self.st.scale(target, self.d_int.row(i)[target]));
                }
            }
        }
        gp.fit(&xs, &ys)?;
        Ok(gp)
    }

    fn step(&mut self, t: usize) -> Result<()> {
        let started = Instant::now();
        let seed = self.cfg.seed;
        let y_best = self.y_best_standardized();
        let mut es_fallback = false;
        let mut exploration: Vec<ParentSet> = Vec::new();
        let mut hypers = Vec::new();
        let mut explore_rng = rng::stream(seed, "explore", t as u64);

        let selection = match self.cfg.method {
            Method::Random => {
                let mut r = rng::stream(seed, "random", t as u64);
                let element = self.pool[r.random_range(0..self.pool.len())].clone();
                let values = uniform_values(&self.domains, &element, &mut r);
                Selection {
                    element,
                    values,
                    ei: 0.0,
                    element_max_ei: Vec::new(),
                    exploration_fallback: false,
                }
            }
            Method::Bo => {
                let full = ParentSet::new(self.manip.clone());
                let gp = self.surrogate(&full, CausalPrior::constant(0.0, 0.0), t)?;
                exploration.push(full.clone());
                hypers.push((mask_of(&full, self.n()), gp.hyper()));
                acquisition::select_intervention(
                    &[gp],
                    y_best,
                    &self.cfg.acquisition,
                    &mut explore_rng,
                )?
            }
            Method::CboU | Method::CboKnown | Method::CboWrong => {
                let post = self.post.as_ref().expect("posterior initialized");
                let es = match acquisition::build_exploration_set(
                    post,
                    &self.manip,
                    self.cfg.acquisition.threshold,
                ) {
                    Ok(es) => es,
                    Err(CboError::EmptyExplorationSet) => {
                        es_fallback = true;
                        log::info!("trial {t}: no weighted set meets a manipulative node; using the default pool");
                        ExplorationSet::new(self.pool.clone())?
                    }
                    Err(e) => return Err(e),
                };
                let mut gps = Vec::with_capacity(es.len());
                for element in es.elements() {
                    let prior = CausalPrior::from_posterior(element.members(), post);
                    let gp = self.surrogate(element, prior, t)?;
                    hypers.push((mask_of(element, self.n()), gp.hyper()));
                    gps.push(gp);
                }
                exploration = es.elements().to_vec();
                acquisition::select_intervention(
                    &gps,
                    y_best,
                    &self.cfg.acquisition,
                    &mut explore_rng,
                )?
            }
        };

        let y = self.intervene(
            &selection.element,
            &selection.values,
            rng::derive_seed(seed, "trial", t as u64),
        )?;
        if self.cfg.method == Method::CboU {
            let row = self.st.scale_row(self.d_int.row(self.d_int.len() - 1));
            self.post.as_mut().expect("posterior initialized").update(&row)?;
        }

        let y_star = self
            .iterations
            .last()
            .map_or(y, |r: &IterationRecord| r.y_star.min(y));
        let n = self.n();
        let (posterior, mean_acc, mean_f1) = match &self.post {
            Some(p) => (
                Some(p.snapshot()),
                Some(metrics::mean_accuracy(p, &self.truth)),
                Some(metrics::mean_f1(p, &self.truth)),
            ),
            None => (None, None, None),
        };
        let wall_ms = if self.cfg.record_wall_time {
            started.elapsed().as_secs_f64() * 1e3
        } else {
            0.0
        };
        self.iterations.push(IterationRecord {
            t,
            element_mask: mask_of(&selection.element, n),
            values: selection.values.clone(),
            y,
            y_star,
            exploration_set: exploration.iter().map(|e| mask_of(e, n)).collect(),
            exploration_set_fallback: es_fallback,
            random_fallback: selection.exploration_fallback,
            element_max_ei: selection
                .element_max_ei
                .iter()
                .map(|(e, v)| (mask_of(e, n), *v))
                .collect(),
            gp_hyper: hypers,
            posterior,
            mean_acc,
            mean_f1,
            wall_ms,
        });
        self.chosen.push((selection.element, selection.values));
        Ok(())
    }

    fn finish(self, error: Option<CboError>) -> Trace {
        let ys: Vec<f64> = self.iterations.iter().map(|r| r.y).collect();
        let best = ys
            .iter()
            .enumerate()
            .fold(None, |acc: Option<(usize, f64)>, (i, &y)| match acc {
                Some((_, b)) if b <= y => acc,
                _ => Some((i, y)),
            })
            .map(|(i, _)| i);
        let elements: Vec<ParentSet> = self.chosen.iter().map(|(e, _)| e.clone()).collect();
        let n = self.n();
        let summary = TraceSummary {
            trials_completed: ys.len(),
            y_star: metrics::y_star(&ys).ok(),
            y_bar: metrics::y_bar(&ys).ok(),
            best_element_mask: best.map(|i| mask_of(&self.chosen[i].0, n)),
            best_values: best.map(|i| self.chosen[i].1.clone()),
            parent_intervention_proportion: metrics::parent_intervention_proportion(
                &elements,
                &self.truth,
            )
            .ok(),
            final_mean_acc: self.iterations.last().and_then(|r| r.mean_acc),
            final_mean_f1: self.iterations.last().and_then(|r| r.mean_f1),
            error: error.map(|e| e.to_string()),
        };
        if let Some(e) = &summary.error {
            log::warn!("run stopped after {} trials: {e}", ys.len());
        }
        Trace {
            header: self.header,
            iterations: self.iterations,
            summary,
        }
    }
}
