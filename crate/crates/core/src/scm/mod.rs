//! Structural causal models: graph, mechanisms, ancestral sampling under
//! hard interventions, benchmark environments and random graphs.

mod builtin;
mod dag;
mod dataset;
mod erdos_renyi;
mod mechanism;
pub mod spec_file;

use serde::{Deserialize, Serialize};

pub use builtin::{builtin, make_epidemiology, make_healthcare, make_toy, BUILTIN_NAMES};
pub use dag::{Dag, Role};
pub use dataset::{Dataset, Intervention, Standardizer};
pub use erdos_renyi::{generate_erdos_renyi, ErKind};
pub use mechanism::{sigmoid, AnalyticFn, Mechanism, MechanismKind, Noise, RandomMlp};
pub use spec_file::{load_scm_spec, save_scm_spec};

use crate::error::{CboError, Result};
use crate::rng;

/// Closed interval of admissible intervention values for one node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub lo: f64,
    pub hi: f64,
}

impl Domain {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(CboError::Config(format!("invalid domain [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// A DAG plus one mechanism per node, with optional declared intervention domains.
#[derive(Debug, Clone, PartialEq)]
pub struct Scm {
    name: String,
    dag: Dag,
    mechanisms: Vec<Mechanism>,
    domains: Vec<Option<Domain>>,
}

impl Scm {
    pub fn new(
        name: impl Into<String>,
        dag: Dag,
        mechanisms: Vec<Mechanism>,
        domains: Vec<Option<Domain>>,
    ) -> Result<Self> {
        let n = dag.num_nodes();
        if mechanisms.len() != n {
            return Err(CboError::InvalidGraph(format!(
                "{} mechanisms for {} nodes",
                mechanisms.len(),
                n
            )));
        }
        if domains.len() != n {
            return Err(CboError::InvalidGraph(format!(
                "{} domains for {} nodes",
                domains.len(),
                n
            )));
        }
        for (i, m) in mechanisms.iter().enumerate() {
            m.validate(dag.name(i), dag.parents(i).len())?;
        }
        Ok(Self {
            name: name.into(),
            dag,
            mechanisms,
            domains,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dag(&self) -> &Dag {
        &self.dag
    }

    pub fn mechanisms(&self) -> &[Mechanism] {
        &self.mechanisms
    }

    pub fn declared_domains(&self) -> &[Option<Domain>] {
        &self.domains
    }

    pub fn num_nodes(&self) -> usize {
        self.dag.num_nodes()
    }

    pub fn target(&self) -> usize {
        self.dag.target()
    }

    fn empty_dataset(&self) -> Dataset {
        Dataset::new(self.dag.names().to_vec())
    }

    /// Checks role constraints of `iv` against this model.
    pub fn check_intervention(&self, iv: &Intervention) -> Result<()> {
        for &t in iv.targets() {
            if t >= self.num_nodes() {
                return Err(CboError::InvalidIntervention(format!("node {t} out of range")));
            }
            match self.dag.role(t) {
                Role::Target => {
                    return Err(CboError::InvalidIntervention(format!(
                        "cannot intervene on target `{}`",
                        self.dag.name(t)
                    )))
                }
                Role::NonManipulative => {
                    return Err(CboError::InvalidIntervention(format!(
                        "node `{}` is non-manipulative",
                        self.dag.name(t)
                    )))
                }
                Role::Manipulative => {}
            }
        }
        Ok(())
    }

    /// Exogenous noise for one row; drawn for every node in index order
    /// regardless of interventions so equal seeds give equal noise.
    fn draw_noise(&self, r: &mut rng::Rng) -> Vec<f64> {
        self.mechanisms.iter().map(|m| m.noise.sample(r)).collect()
    }

    /// Evaluates one row from fixed exogenous noise, clamping intervened nodes.
    pub fn evaluate(&self, noise: &[f64], iv: Option<&Intervention>) -> Vec<f64> {
        let mut values = vec![0.0; self.num_nodes()];
        let mut args = Vec::new();
        for &v in self.dag.topological_order() {
            if let Some(x) = iv.and_then(|iv| iv.value_of(v)) {
                values[v] = x;
                continue;
            }
            args.clear();
            args.extend(self.dag.parents(v).iter().map(|&p| values[p]));
            values[v] = self.mechanisms[v].mean(&args) + noise[v];
        }
        values
    }

    fn sample(&self, iv: Option<&Intervention>, n: usize, seed: u64) -> Result<Dataset> {
        if n == 0 {
            return Err(CboError::Precondition("sample size must be >= 1".into()));
        }
        let mut r = rng::rng_from(seed);
        let mut out = self.empty_dataset();
        for _ in 0..n {
            let noise = self.draw_noise(&mut r);
            let row = self.evaluate(&noise, iv);
            out.push(&row, iv.cloned())?;
        }
        Ok(out)
    }

    /// `n` i.i.d. rows drawn ancestrally from the observational distribution.
    pub fn sample_observational(&self, n: usize, seed: u64) -> Result<Dataset> {
        self.sample(None, n, seed)
    }

    /// `n` rows from the mutilated model under `iv`; all rows carry the tag.
    pub fn sample_interventional(&self, iv: &Intervention, n: usize, seed: u64) -> Result<Dataset> {
        self.check_intervention(iv)?;
        self.sample(Some(iv), n, seed)
    }

    /// Intervention domains: declared ones, else the empirical
    /// [1st, 99th] percentile range of `obs`.
    pub fn resolve_domains(&self, obs: &Dataset) -> Result<Vec<Domain>> {
        (0..self.num_nodes())
            .map(|j| match self.domains[j] {
                Some(d) => Ok(d),
                None => {
                    let mut col = obs.column(j);
                    if col.is_empty() {
                        return Err(CboError::Precondition(
                            "cannot derive domains from empty data".into(),
                        ));
                    }
                    col.sort_by(f64::total_cmp);
                    let lo = percentile(&col, 0.01);
                    let mut hi = percentile(&col, 0.99);
                    if hi <= lo {
                        hi = lo + 1e-6;
                    }
                    Domain::new(lo, hi)
                }
            })
            .collect()
    }
}

/// Linear-interpolated percentile of sorted data.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_rows_is_an_error() {
        let scm = make_toy();
        assert!(matches!(
            scm.sample_observational(0, 1),
            Err(CboError::Precondition(_))
        ));
    }

    #[test]
    fn toy_with_zero_noise_matches_closed_form() {
        let scm = make_toy();
        let row = scm.evaluate(&[0.0, 0.0, 0.0], None);
        assert_eq!(row[0], 0.0);
        assert!((row[1] - 5.0).abs() < 1e-12);
        let y = 5.0f64.cos() - (-5.0f64 / 20.0).exp();
        assert!((row[2] - y).abs() < 1e-12);
    }

    #[test]
    fn sampling_is_deterministic() {
        let scm = make_healthcare();
        let a = scm.sample_observational(50, 9).unwrap();
        let b = scm.sample_observational(50, 9).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, scm.sample_observational(50, 10).unwrap());
    }

    #[test]
    fn interventions_on_target_or_non_manipulative_rejected() {
        let scm = make_healthcare();
        let y = scm.target();
        let iv = Intervention::new(vec![y], vec![0.0]).unwrap();
        assert!(scm.sample_interventional(&iv, 1, 0).is_err());
        let a = scm.dag().index_of("A").unwrap();
        let iv = Intervention::new(vec![a], vec![60.0]).unwrap();
        assert!(scm.sample_interventional(&iv, 1, 0).is_err());
    }

    #[test]
    fn healthcare_clamps_aspirin_and_statin() {
        let scm = make_healthcare();
        let as_ = scm.dag().index_of("As").unwrap();
        let s = scm.dag().index_of("S").unwrap();
        let iv = Intervention::new(vec![as_, s], vec![1.0, 1.0]).unwrap();
        let d = scm.sample_interventional(&iv, 200, 3).unwrap();
        for r in d.rows() {
            assert_eq!(r[as_], 1.0);
            assert_eq!(r[s], 1.0);
        }
        assert!(d.tag(0).is_some());
    }

    #[test]
    fn toy_do_z_zero_has_zero_mean_target() {
        let scm = make_toy();
        let iv = Intervention::new(vec![1], vec![0.0]).unwrap();
        let d = scm.sample_interventional(&iv, 20_000, 5).unwrap();
        let ys = d.column(2);
        assert!(d.column(1).iter().all(|&z| z == 0.0));
        let mean = ys.iter().sum::<f64>() / ys.len() as f64;
        // cos(0) - e^0 = 0; standard error 1/sqrt(20000) ~ 0.007
        assert!(mean.abs() < 0.03, "mean {mean}");
    }

    #[test]
    fn intervening_on_a_root_leaves_descendant_noise_unchanged() {
        let scm = make_toy();
        let obs = scm.sample_observational(100, 21).unwrap();
        let x0 = obs.row(0)[0];
        let iv = Intervention::new(vec![0], vec![x0]).unwrap();
        let int = scm.sample_interventional(&iv, 1, 21).unwrap();
        assert_eq!(obs.row(0), int.row(0));
    }

    #[test]
    fn empirical_domains_cover_central_mass() {
        let scm = generate_erdos_renyi(6, ErKind::Linear, 4).unwrap();
        let obs = scm.sample_observational(500, 1).unwrap();
        let domains = scm.resolve_domains(&obs).unwrap();
        for (j, d) in domains.iter().enumerate() {
            let col = obs.column(j);
            let inside = col.iter().filter(|&&x| d.contains(x)).count();
            assert!(inside >= 480, "node {j}: {inside}");
        }
    }
}
