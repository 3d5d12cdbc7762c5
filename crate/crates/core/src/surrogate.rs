//! Gaussian-process surrogates, one per intervention set.
//!
//! Inputs are intervention values in original units. Inside, the kernel sees
//! them rescaled to `[0, 1]` by the intervention domain, and the causal prior
//! sees them standardized with the observational statistics. Targets are
//! standardized `Y` values.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{CboError, Result};
use crate::parent_posterior::{ParentPosterior, PosteriorEntry};
use crate::rng;
use crate::scm::Domain;

/// Posterior weights below this are left out of the prior mixture.
const MIXTURE_CUTOFF: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
enum PriorKind {
    Mixture {
        element: Vec<usize>,
        num_nodes: usize,
        noise_variance: f64,
        components: Vec<(f64, PosteriorEntry)>,
    },
    Constant {
        mean: f64,
        variance: f64,
    },
}

/// Prior mean `m(v)` and standard deviation `sigma(v)` of `Y` under
/// `do(element = v)`, averaged over the parent-set posterior.
#[derive(Debug, Clone, PartialEq)]
pub struct CausalPrior(PriorKind);

impl CausalPrior {
    pub fn constant(mean: f64, std: f64) -> Self {
        CausalPrior(PriorKind::Constant {
            mean,
            variance: std * std,
        })
    }

    /// Each candidate set `g` contributes its belief's prediction with the
    /// coordinates of `g` outside `element` held at their observational
    /// mean (zero after standardization). Falls back to the observational
    /// mean and std of `Y` when no weighted set meets `element`.
    pub fn from_posterior(element: &[usize], post: &ParentPosterior) -> Self {
        let weights = post.weights();
        let mut components: Vec<(f64, PosteriorEntry)> = post
            .entries()
            .iter()
            .zip(&weights)
            .filter(|(_, &w)| w > MIXTURE_CUTOFF)
            .map(|(e, &w)| (w, e.clone()))
            .collect();
        let touches = components
            .iter()
            .any(|(_, e)| element.iter().any(|&i| e.set.contains(i)));
        if !touches {
            log::debug!("element {element:?} meets no weighted parent set; using observational prior");
            return Self::constant(0.0, 1.0);
        }
        let total: f64 = components.iter().map(|(w, _)| w).sum();
        components.iter_mut().for_each(|(w, _)| *w /= total);
        CausalPrior(PriorKind::Mixture {
            element: element.to_vec(),
            num_nodes: post.num_nodes(),
            noise_variance: post.config().noise_variance,
            components,
        })
    }

    /// Prior mean and variance at standardized values `z` of the element.
    pub fn mean_var(&self, z: &[f64]) -> Result<(f64, f64)> {
        match &self.0 {
            PriorKind::Constant { mean, variance } => Ok((*mean, *variance)),
            PriorKind::Mixture {
                element,
                num_nodes,
                noise_variance,
                components,
            } => {
                if z.len() != element.len() {
                    return Err(CboError::DimensionMismatch {
                        expected: element.len(),
                        found: z.len(),
                    });
                }
                let mut row = vec![0.0; *num_nodes];
                for (&i, &v) in element.iter().zip(z) {
                    row[i] = v;
                }
                let inner = components
                    .iter()
                    .map(|(w, e)| Ok((*w, e.predict(&row, *noise_variance)?)))
                    .collect::<Result<Vec<_>>>()?;
                let mean: f64 = inner.iter().map(|(w, (m, _))| w * m).sum();
                let var: f64 = inner
                    .iter()
                    .map(|(w, (m, v))| w * (v + (m - mean).powi(2)))
                    .sum();
                Ok((mean, var.max(0.0)))
            }
        }
    }

    /// Per-set `(weight, inner mean, inner variance)` at `z`.
    pub fn components_at(&self, z: &[f64]) -> Result<Vec<(f64, f64, f64)>> {
        match &self.0 {
            PriorKind::Constant { mean, variance } => Ok(vec![(1.0, *mean, *variance)]),
            PriorKind::Mixture {
                element,
                num_nodes,
                noise_variance,
                components,
            } => {
                let mut row = vec![0.0; *num_nodes];
                for (&i, &v) in element.iter().zip(z) {
                    row[i] = v;
                }
                components
                    .iter()
                    .map(|(w, e)| {
                        let (m, v) = e.predict(&row, *noise_variance)?;
                        Ok((*w, m, v))
                    })
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpHyper {
    pub lengthscale: f64,
    pub signal_variance: f64,
    pub noise_variance: f64,
}

impl Default for GpHyper {
    fn default() -> Self {
        Self {
            lengthscale: 0.3,
            signal_variance: 1.0,
            noise_variance: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpConfig {
    pub optimize: bool,
    pub restarts: usize,
    /// Starting point of the first restart, and the values used when
    /// optimization is off or there are fewer than three points.
    pub init: GpHyper,
    /// Keeps the noise variance at `init.noise_variance`.
    pub fixed_noise: bool,
    pub lengthscale_bounds: (f64, f64),
    /// Relative to the variance of the training residuals.
    pub signal_variance_bounds: (f64, f64),
    pub noise_variance_bounds: (f64, f64),
    pub seed: u64,
}

impl Default for GpConfig {
    fn default() -> Self {
        Self {
            optimize: true,
            restarts: 5,
            init: GpHyper::default(),
            fixed_noise: false,
            lengthscale_bounds: (0.02, 3.0),
            signal_variance_bounds: (1e-3, 10.0),
            noise_variance_bounds: (1e-4, 2.0),
            seed: 0,
        }
    }
}

/// Maps original-unit values of one intervention set to kernel and prior
/// coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct InputScaling {
    pub domains: Vec<Domain>,
    /// `(mean, std)` of each variable in the observational data.
    pub standardization: Vec<(f64, f64)>,
}

impl InputScaling {
    fn check(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.domains.len() {
            return Err(CboError::DimensionMismatch {
                expected: self.domains.len(),
                found: v.len(),
            });
        }
        for (x, d) in v.iter().zip(&self.domains) {
            let tol = 1e-9 * d.width().max(1.0);
            if !x.is_finite() || *x < d.lo - tol || *x > d.hi + tol {
                return Err(CboError::OutOfDomain(format!(
                    "value {x} outside [{}, {}]",
                    d.lo, d.hi
                )));
            }
        }
        Ok(())
    }

    fn unit(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(&self.domains)
            .map(|(x, d)| (x - d.lo) / d.width())
            .collect()
    }

    fn standardized(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(&self.standardization)
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }
}

const JITTERS: [f64; 7] = [0.0, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3];
const MAX_JITTER: f64 = 1e-2;

#[derive(Debug, Clone)]
struct Fitted {
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
}

/// GP with mean `m(v)` and kernel
/// `s2 exp(-|u - u'|^2 / (2 l^2)) + sigma(v) sigma(v') + noise delta`.
#[derive(Debug, Clone)]
pub struct GpSurrogate {
    element: Vec<usize>,
    scaling: InputScaling,
    prior: CausalPrior,
    config: GpConfig,
    hyper: GpHyper,
    train_u: Vec<Vec<f64>>,
    train_mean: Vec<f64>,
    train_std: Vec<f64>,
    train_y: Vec<f64>,
    fitted: Option<Fitted>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

impl GpSurrogate {
    pub fn new(
        element: Vec<usize>,
        scaling: InputScaling,
        prior: CausalPrior,
        config: GpConfig,
    ) -> Result<Self> {
        if scaling.domains.len() != element.len() || scaling.standardization.len() != element.len()
        {
            return Err(CboError::DimensionMismatch {
                expected: element.len(),
                found: scaling.domains.len(),
            });
        }
        let hyper = config.init;
        Ok(Self {
            element,
            scaling,
            prior,
            config,
            hyper,
            train_u: Vec::new(),
            train_mean: Vec::new(),
            train_std: Vec::new(),
            train_y: Vec::new(),
            fitted: None,
        })
    }

    pub fn element(&self) -> &[usize] {
        &self.element
    }

    pub fn domains(&self) -> &[Domain] {
        &self.scaling.domains
    }

    pub fn hyper(&self) -> GpHyper {
        self.hyper
    }

    pub fn num_train(&self) -> usize {
        self.train_y.len()
    }

    pub fn prior(&self) -> &CausalPrior {
        &self.prior
    }

    fn prior_at(&self, v: &[f64]) -> Result<(f64, f64)> {
        let (m, var) = self.prior.mean_var(&self.scaling.standardized(v))?;
        Ok((m, var.sqrt()))
    }

    fn kernel(&self, h: &GpHyper, a: &[f64], b: &[f64], sa: f64, sb: f64) -> f64 {
        h.signal_variance * (-sq_dist(a, b) / (2.0 * h.lengthscale * h.lengthscale)).exp() + sa * sb
    }

    fn gram(&self, h: &GpHyper) -> DMatrix<f64> {
        let n = self.train_y.len();
        let mut k = DMatrix::from_fn(n, n, |i, j| {
            self.kernel(
                h,
                &self.train_u[i],
                &self.train_u[j],
                self.train_std[i],
                self.train_std[j],
            )
        });
        for i in 0..n {
            k[(i, i)] += h.noise_variance;
        }
        k
    }

    fn factor(&self, h: &GpHyper) -> Result<(Cholesky<f64, Dyn>, f64)> {
        let k = self.gram(h);
        let n = k.nrows();
        let scale = (k.trace() / n.max(1) as f64).max(1e-300);
        for &j in JITTERS.iter().chain(std::iter::once(&MAX_JITTER)) {
            let mut kj = k.clone();
            for i in 0..n {
                kj[(i, i)] += j * scale;
            }
            if let Some(c) = Cholesky::new(kj) {
                return Ok((c, j));
            }
        }
        Err(CboError::GpFit(format!(
            "kernel matrix not positive definite after jitter {MAX_JITTER}"
        )))
    }

    fn residuals(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.train_y.len(),
            self.train_y.iter().zip(&self.train_mean).map(|(y, m)| y - m),
        )
    }

    /// Log marginal likelihood of the training residuals under `h`.
    pub fn log_marginal_likelihood(&self, h: &GpHyper) -> Result<f64> {
        let (chol, _) = self.factor(h)?;
        let r = self.residuals();
        let alpha = chol.solve(&r);
        let log_det: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
        Ok(-0.5 * r.dot(&alpha)
            - log_det
            - 0.5 * r.len() as f64 * (2.0 * std::f64::consts::PI).ln())
    }

    /// Conditions on `(values, y)` pairs, replacing previous training data,
    /// and optimizes hyperparameters when configured.
    pub fn fit(&mut self, xs: &[Vec<f64>], ys: &[f64]) -> Result<()> {
        if xs.len() != ys.len() {
            return Err(CboError::DimensionMismatch {
                expected: xs.len(),
                found: ys.len(),
            });
        }
        if ys.iter().any(|y| !y.is_finite()) {
            return Err(CboError::NonFinite("surrogate training target".into()));
        }
        self.train_u.clear();
        self.train_mean.clear();
        self.train_std.clear();
        for x in xs {
            self.scaling.check(x)?;
            let (m, s) = self.prior_at(x)?;
            self.train_u.push(self.scaling.unit(x));
            self.train_mean.push(m);
            self.train_std.push(s);
        }
        self.train_y = ys.to_vec();
        self.hyper = self.config.init;
        if self.train_y.is_empty() {
            self.fitted = None;
            return Ok(());
        }
        if self.config.optimize && self.train_y.len() >= 3 {
            self.hyper = self.optimize_hyper()?;
        }
        let (chol, _) = self.factor(&self.hyper)?;
        let alpha = chol.solve(&self.residuals());
        self.fitted = Some(Fitted { chol, alpha });
        Ok(())
    }

    fn optimize_hyper(&self) -> Result<GpHyper> {
        let r = self.residuals();
        let n = r.len() as f64;
        let mean = r.sum() / n;
        let scale = (r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).max(1e-2);
        let cfg = &self.config;
        let lo = [
            cfg.lengthscale_bounds.0.ln(),
            (cfg.signal_variance_bounds.0 * scale).ln(),
            (cfg.noise_variance_bounds.0 * scale).ln(),
        ];
        let hi = [
            cfg.lengthscale_bounds.1.ln(),
            (cfg.signal_variance_bounds.1 * scale).ln(),
            (cfg.noise_variance_bounds.1 * scale).ln(),
        ];
        let free = if cfg.fixed_noise { 2 } else { 3 };
        let to_hyper = |p: &[f64; 3]| GpHyper {
            lengthscale: p[0].exp(),
            signal_variance: p[1].exp(),
            noise_variance: if cfg.fixed_noise {
                cfg.init.noise_variance
            } else {
                p[2].exp()
            },
        };
        let objective = |p: &[f64; 3]| {
            self.log_marginal_likelihood(&to_hyper(p))
                .unwrap_or(f64::NEG_INFINITY)
        };

        let mut r = rng::rng_from(cfg.seed);
        let mut best: Option<([f64; 3], f64)> = None;
        for start in 0..cfg.restarts.max(1) {
            let mut p = if start == 0 {
                [
                    cfg.init.lengthscale.ln(),
                    cfg.init.signal_variance.ln(),
                    cfg.init.noise_variance.ln(),
                ]
            } else {
                [0, 1, 2].map(|i| r.random_range(lo[i]..=hi[i]))
            };
            for i in 0..3 {
                p[i] = p[i].clamp(lo[i], hi[i]);
            }
            let mut val = objective(&p);
            let mut step = 1.0;
            let mut evals = 0;
            while step > 1e-2 && evals < 400 {
                let mut improved = false;
                for i in 0..free {
                    for dir in [1.0, -1.0] {
                        let mut q = p;
                        q[i] = (q[i] + dir * step).clamp(lo[i], hi[i]);
                        if q[i] == p[i] {
                            continue;
                        }
                        evals += 1;
                        let v = objective(&q);
                        if v > val {
                            p = q;
                            val = v;
                            improved = true;
                            break;
                        }
                    }
                }
                if !improved {
                    step *= 0.5;
                }
            }
            if best.is_none_or(|(_, b)| val > b) {
                best = Some((p, val));
            }
        }
        match best {
            Some((p, v)) if v.is_finite() => Ok(to_hyper(&p)),
            _ => Err(CboError::GpFit(
                "marginal likelihood is not finite at any hyperparameter setting".into(),
            )),
        }
    }

    /// Latent mean and variance at `v` (original units).
    pub fn predict(&self, v: &[f64]) -> Result<(f64, f64)> {
        self.scaling.check(v)?;
        let (m, s) = self.prior_at(v)?;
        let u = self.scaling.unit(v);
        let prior_var = self.hyper.signal_variance + s * s;
        let Some(f) = &self.fitted else {
            return Ok((m, prior_var));
        };
        let kstar = DVector::from_fn(self.train_y.len(), |i, _| {
            self.kernel(&self.hyper, &u, &self.train_u[i], s, self.train_std[i])
        });
        let mean = m + kstar.dot(&f.alpha);
        let w = f
            .chol
            .l_dirty()
            .solve_lower_triangular(&kstar)
            .ok_or_else(|| CboError::GpFit("triangular solve failed".into()))?;
        let var = prior_var - w.norm_squared();
        if !mean.is_finite() || !var.is_finite() {
            return Err(CboError::NonFinite("surrogate prediction".into()));
        }
        Ok((mean, if var < 1e-10 { var.max(0.0) } else { var }))
    }
}
