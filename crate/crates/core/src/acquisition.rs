//! Exploration sets and expected-improvement selection (minimization).

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{CboError, Result};
use crate::parent_posterior::{ParentPosterior, ParentSet};
use crate::rng::Rng;
use crate::scm::Domain;
use crate::surrogate::GpSurrogate;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcquisitionConfig {
    /// Candidate points per element.
    pub grid_size: usize,
    /// Posterior weight a set needs to contribute an element.
    pub threshold: f64,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        Self {
            grid_size: 100,
            threshold: 1e-6,
        }
    }
}

/// Deduplicated intervention sets, ordered by cardinality then node indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplorationSet {
    elements: Vec<ParentSet>,
}

fn element_order(a: &ParentSet, b: &ParentSet) -> std::cmp::Ordering {
    a.len().cmp(&b.len()).then_with(|| a.cmp(b))
}

impl ExplorationSet {
    pub fn new(mut elements: Vec<ParentSet>) -> Result<Self> {
        elements.retain(|e| !e.is_empty());
        elements.sort_by(element_order);
        elements.dedup();
        if elements.is_empty() {
            return Err(CboError::EmptyExplorationSet);
        }
        Ok(Self { elements })
    }

    pub fn elements(&self) -> &[ParentSet] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }
}

/// `{s ∩ manipulative : weight(s) > threshold}` without the empty set.
pub fn build_exploration_set(
    post: &ParentPosterior,
    manipulative: &[usize],
    threshold: f64,
) -> Result<ExplorationSet> {
    let manip = ParentSet::new(manipulative.to_vec());
    let elements = post
        .entries()
        .iter()
        .zip(post.weights())
        .filter(|(_, w)| *w > threshold)
        .map(|(e, _)| e.set.intersection(&manip))
        .collect();
    ExplorationSet::new(elements)
}

/// Every nonempty subset of the manipulative variables when there are at
/// most three of them, otherwise the singletons.
pub fn default_pool(manipulative: &[usize]) -> Vec<ParentSet> {
    let k = manipulative.len();
    if k <= 3 {
        (1..(1usize << k))
            .map(|bits| {
                ParentSet::new(
                    (0..k)
                        .filter(|b| bits >> b & 1 == 1)
                        .map(|b| manipulative[b])
                        .collect(),
                )
            })
            .collect()
    } else {
        manipulative.iter().map(|&m| ParentSet::new(vec![m])).collect()
    }
}

/// `E[max(y_best - f, 0)]` for `f ~ N(mean, variance)`.
pub fn expected_improvement(mean: f64, variance: f64, y_best: f64) -> f64 {
    let gap = y_best - mean;
    let sd = variance.max(0.0).sqrt();
    if sd < 1e-12 {
        return gap.max(0.0);
    }
    let z = gap / sd;
    let pdf = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let cdf = 0.5 * erfc(-z / std::f64::consts::SQRT_2);
    (gap * cdf + sd * pdf).max(0.0)
}

pub fn causal_ei(gp: &impl Surrogate, y_best: f64, v: &[f64]) -> Result<f64> {
    let (m, var) = gp.predict(v)?;
    Ok(expected_improvement(m, var, y_best))
}

/// What selection needs from a surrogate.
pub trait Surrogate {
    fn element(&self) -> &[usize];
    fn domains(&self) -> &[Domain];
    fn predict(&self, v: &[f64]) -> Result<(f64, f64)>;
}

impl Surrogate for GpSurrogate {
    fn element(&self) -> &[usize] {
        GpSurrogate::element(self)
    }

    fn domains(&self) -> &[Domain] {
        GpSurrogate::domains(self)
    }

    fn predict(&self, v: &[f64]) -> Result<(f64, f64)> {
        GpSurrogate::predict(self, v)
    }
}

fn halton(mut i: usize, base: usize) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

fn first_primes(k: usize) -> Vec<usize> {
    let mut p: Vec<usize> = Vec::with_capacity(k);
    let mut c = 2;
    while p.len() < k {
        if p.iter().take_while(|&&q| q * q <= c).all(|&q| c % q != 0) {
            p.push(c);
        }
        c += 1;
    }
    p
}

/// Deterministic candidate points over a box: an evenly spaced grid in one
/// dimension, otherwise the box corners (up to three dimensions) followed by
/// a Halton sequence, `size` points in total.
pub fn candidate_grid(domains: &[Domain], size: usize) -> Result<Vec<Vec<f64>>> {
    let k = domains.len();
    if k == 0 || size == 0 {
        return Err(CboError::Precondition(
            "candidate grid needs a nonempty box and size >= 1".into(),
        ));
    }
    let place = |u: &[f64]| -> Vec<f64> {
        u.iter()
            .zip(domains)
            .map(|(t, d)| d.lo + t * d.width())
            .collect()
    };
    if k == 1 {
        if size == 1 {
            return Ok(vec![place(&[0.5])]);
        }
        return Ok((0..size)
            .map(|i| place(&[i as f64 / (size - 1) as f64]))
            .collect());
    }
    let mut pts = Vec::with_capacity(size);
    if k <= 3 {
        for bits in 0..(1usize << k) {
            if pts.len() == size {
                break;
            }
            let u: Vec<f64> = (0..k).map(|b| (bits >> b & 1) as f64).collect();
            pts.push(place(&u));
        }
    }
    let primes = first_primes(k);
    let mut i = 1;
    while pts.len() < size {
        let u: Vec<f64> = primes.iter().map(|&b| halton(i, b)).collect();
        pts.push(place(&u));
        i += 1;
    }
    Ok(pts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub element: ParentSet,
    pub values: Vec<f64>,
    pub ei: f64,
    /// Largest expected improvement found on each element's grid.
    pub element_max_ei: Vec<(ParentSet, f64)>,
    /// Chosen at random because every candidate had zero improvement.
    pub exploration_fallback: bool,
}

/// Maximizes expected improvement over every element's candidate grid.
/// Ties go to the smaller element, then the lower node indices, then the
/// earlier grid point.
pub fn select_intervention<S: Surrogate>(
    surrogates: &[S],
    y_best: f64,
    cfg: &AcquisitionConfig,
    rng: &mut Rng,
) -> Result<Selection> {
    if surrogates.is_empty() {
        return Err(CboError::EmptyExplorationSet);
    }
    let mut order: Vec<usize> = (0..surrogates.len()).collect();
    let sets: Vec<ParentSet> = surrogates
        .iter()
        .map(|s| ParentSet::new(s.element().to_vec()))
        .collect();
    order.sort_by(|&a, &b| element_order(&sets[a], &sets[b]));

    let mut best: Option<(usize, Vec<f64>, f64)> = None;
    let mut element_max_ei = Vec::with_capacity(order.len());
    for &idx in &order {
        let s = &surrogates[idx];
        let mut emax = 0.0f64;
        for v in candidate_grid(s.domains(), cfg.grid_size)? {
            let ei = causal_ei(s, y_best, &v)?;
            emax = emax.max(ei);
            if best.as_ref().is_none_or(|(_, _, b)| ei > *b) {
                best = Some((idx, v, ei));
            }
        }
        element_max_ei.push((sets[idx].clone(), emax));
    }
    let (idx, values, ei) = best.expect("at least one candidate");
    if ei > 0.0 {
        return Ok(Selection {
            element: sets[idx].clone(),
            values,
            ei,
            element_max_ei,
            exploration_fallback: false,
        });
    }
    log::info!("expected improvement is zero everywhere; choosing a random intervention");
    let pick = order[rng.random_range(0..order.len())];
    let values = surrogates[pick]
        .domains()
        .iter()
        .map(|d| rng.random_range(d.lo..=d.hi))
        .collect();
    Ok(Selection {
        element: sets[pick].clone(),
        values,
        ei: 0.0,
        element_max_ei,
        exploration_fallback: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parent_posterior::PosteriorConfig;
    use crate::rng;
    use approx::assert_abs_diff_eq;

    struct Mock {
        element: Vec<usize>,
        domains: Vec<Domain>,
        f: fn(&[f64]) -> (f64, f64),
        shift: f64,
    }

    impl Surrogate for Mock {
        fn element(&self) -> &[usize] {
            &self.element
        }
        fn domains(&self) -> &[Domain] {
            &self.domains
        }
        fn predict(&self, v: &[f64]) -> Result<(f64, f64)> {
            let (m, s) = (self.f)(v);
            Ok((m + self.shift, s))
        }
    }

    fn mock(element: &[usize], f: fn(&[f64]) -> (f64, f64)) -> Mock {
        Mock {
            element: element.to_vec(),
            domains: vec![Domain { lo: 0.0, hi: 1.0 }; element.len()],
            f,
            shift: 0.0,
        }
    }

    fn set(v: &[usize]) -> ParentSet {
        ParentSet::new(v.to_vec())
    }

    #[test]
    fn ei_identities() {
        assert_abs_diff_eq!(expected_improvement(-1.0, 1e-30, 0.0), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            expected_improvement(0.0, 1.0, 0.0),
            1.0 / (2.0 * std::f64::consts::PI).sqrt(),
            epsilon = 1e-15
        );
        assert_eq!(expected_improvement(0.5, 0.0, 0.0), 0.0);
    }

    #[test]
    fn exploration_set_from_posterior() {
        let post = ParentPosterior::new(
            4,
            3,
            &[(set(&[1, 2]), 0.7), (set(&[2]), 0.3), (set(&[0]), 1e-9)],
            PosteriorConfig::default(),
        )
        .unwrap();
        let es = build_exploration_set(&post, &[0, 1, 2], 1e-6).unwrap();
        assert_eq!(es.elements(), &[set(&[2]), set(&[1, 2])]);
        // A non-manipulative member is intersected away.
        let es = build_exploration_set(&post, &[2], 1e-6).unwrap();
        assert_eq!(es.elements(), &[set(&[2])]);
        assert!(matches!(
            build_exploration_set(&post, &[0], 1e-6),
            Err(CboError::EmptyExplorationSet)
        ));
    }

    #[test]
    fn default_pools() {
        assert_eq!(default_pool(&[0, 2]), vec![set(&[0]), set(&[2]), set(&[0, 2])]);
        assert_eq!(default_pool(&[0, 1, 2, 3]).len(), 4);
        assert_eq!(default_pool(&[0, 1, 2]).len(), 7);
    }

    #[test]
    fn grids() {
        let d = [Domain { lo: -1.0, hi: 1.0 }];
        let g = candidate_grid(&d, 5).unwrap();
        assert_eq!(g, vec![vec![-1.0], vec![-0.5], vec![0.0], vec![0.5], vec![1.0]]);
        let d2 = [Domain { lo: 0.0, hi: 2.0 }, Domain { lo: 5.0, hi: 6.0 }];
        let g = candidate_grid(&d2, 100).unwrap();
        assert_eq!(g.len(), 100);
        assert_eq!(g[3], vec![2.0, 6.0]);
        assert!(g.iter().all(|p| (0.0..=2.0).contains(&p[0]) && (5.0..=6.0).contains(&p[1])));
        assert_eq!(g, candidate_grid(&d2, 100).unwrap());
    }

    #[test]
    fn single_candidate() {
        let s = [mock(&[0], |_| (0.0, 1.0))];
        let cfg = AcquisitionConfig {
            grid_size: 1,
            ..Default::default()
        };
        let sel = select_intervention(&s, 0.0, &cfg, &mut rng::rng_from(0)).unwrap();
        assert_eq!(sel.element, set(&[0]));
        assert_eq!(sel.values, vec![0.5]);
    }

    #[test]
    fn dominant_element_wins() {
        let s = [mock(&[0], |_| (1.0, 0.01)), mock(&[1], |v| (-v[0], 0.01))];
        let sel =
            select_intervention(&s, 0.0, &AcquisitionConfig::default(), &mut rng::rng_from(0))
                .unwrap();
        assert_eq!(sel.element, set(&[1]));
        assert_eq!(sel.values, vec![1.0]);
    }

    #[test]
    fn ties_prefer_smaller_element() {
        let s = [mock(&[0, 1], |_| (-1.0, 0.0)), mock(&[1], |_| (-1.0, 0.0))];
        let sel =
            select_intervention(&s, 0.0, &AcquisitionConfig::default(), &mut rng::rng_from(0))
                .unwrap();
        assert_eq!(sel.element, set(&[1]));
        assert_eq!(sel.values, vec![0.0]);
    }

    #[test]
    fn zero_improvement_falls_back_to_random() {
        let s = [mock(&[0], |_| (5.0, 0.0)), mock(&[1], |_| (5.0, 0.0))];
        let a = select_intervention(&s, 0.0, &AcquisitionConfig::default(), &mut rng::rng_from(3))
            .unwrap();
        assert!(a.exploration_fallback);
        let b = select_intervention(&s, 0.0, &AcquisitionConfig::default(), &mut rng::rng_from(3))
            .unwrap();
        assert_eq!(a, b);
    }

    proptest::proptest! {
        #[test]
        fn shift_invariance(shift in -64i32..64, y_best in -2.0f64..2.0) {
            let c = shift as f64 * 0.25;
            let f: fn(&[f64]) -> (f64, f64) = |v| ((6.0 * v[0]).sin() + v[1], 0.1 + v[0] * v[1]);
            let g: fn(&[f64]) -> (f64, f64) = |v| ((3.0 * v[0]).cos(), 0.2);
            let base = [mock(&[0, 1], f), mock(&[2], g)];
            let mut shifted = [mock(&[0, 1], f), mock(&[2], g)];
            shifted.iter_mut().for_each(|m| m.shift = c);
            let cfg = AcquisitionConfig::default();
            let a = select_intervention(&base, y_best, &cfg, &mut rng::rng_from(1)).unwrap();
            let b = select_intervention(&shifted, y_best + c, &cfg, &mut rng::rng_from(1)).unwrap();
            proptest::prop_assert_eq!(a.element, b.element);
            proptest::prop_assert_eq!(a.values, b.values);
            proptest::prop_assert!(a.element_max_ei.iter().all(|(_, e)| *e >= 0.0));
        }
    }
}
