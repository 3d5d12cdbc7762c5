use cbou_core::parent_posterior::{FourierFeatureMap, GaussianBelief};
use cbou_core::rng;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// log of the integral over theta of N(y; theta . x, s2) N(theta; mu, Sigma),
/// by trapezoid quadrature on a grid of +/- 10 prior std per axis.
fn quadrature_log_evidence(b: &GaussianBelief, x: &[f64], y: f64, s2: f64, pts: usize) -> f64 {
    let mu = b.mean();
    let cov = b.covariance();
    let prec = b.precision();
    let dim = mu.len();
    let norm_prior = -0.5 * (dim as f64 * (2.0 * std::f64::consts::PI).ln())
        - 0.5 * b.log_det_covariance();
    let norm_lik = -0.5 * (2.0 * std::f64::consts::PI * s2).ln();
    let axes: Vec<Vec<f64>> = (0..dim)
        .map(|i| {
            let sd = cov[(i, i)].sqrt();
            let lo = mu[i] - 10.0 * sd;
            let h = 20.0 * sd / (pts - 1) as f64;
            (0..pts).map(|k| lo + h * k as f64).collect()
        })
        .collect();
    let step: Vec<f64> = axes.iter().map(|a| a[1] - a[0]).collect();
    let weight = |k: usize| if k == 0 || k == pts - 1 { 0.5 } else { 1.0 };
    let log_integrand = |t: &[f64]| {
        let d: Vec<f64> = (0..dim).map(|i| t[i] - mu[i]).collect();
        let mut q = 0.0;
        for i in 0..dim {
            for j in 0..dim {
                q += d[i] * prec[(i, j)] * d[j];
            }
        }
        let pred: f64 = (0..dim).map(|i| t[i] * x[i]).sum();
        norm_prior - 0.5 * q + norm_lik - (y - pred).powi(2) / (2.0 * s2)
    };
    let mut total = 0.0;
    match dim {
        1 => {
            for (k, &t) in axes[0].iter().enumerate() {
                total += weight(k) * log_integrand(&[t]).exp();
            }
            total *= step[0];
        }
        2 => {
            for (k0, &t0) in axes[0].iter().enumerate() {
                for (k1, &t1) in axes[1].iter().enumerate() {
                    total += weight(k0) * weight(k1) * log_integrand(&[t0, t1]).exp();
                }
            }
            total *= step[0] * step[1];
        }
        _ => unreachable!(),
    }
    total.ln()
}

#[test]
fn increment_matches_quadrature() {
    let mut r = rng::rng_from(11);
    for probe in 0..10 {
        let dim = 1 + probe % 2;
        let n = 3;
        let phi = DMatrix::from_fn(n, dim, |_, _| r.random_range(-2.0..2.0));
        let y = DVector::from_fn(n, |_, _| r.random_range(-2.0..2.0));
        let b = GaussianBelief::fit_batch(&phi, &y, 1.0, 1.0).unwrap();
        let x: Vec<f64> = (0..dim).map(|_| r.random_range(-2.0..2.0)).collect();
        let yq = r.random_range(-3.0..3.0);
        let (inc, _) = b.condition(&DVector::from_column_slice(&x), yq, 1.0).unwrap();
        let oracle = quadrature_log_evidence(&b, &x, yq, 1.0, 801);
        assert!((inc - oracle).abs() < 1e-3, "probe {probe}: {inc} vs {oracle}");
    }
}

fn rbf(x: &[f64], y: &[f64]) -> f64 {
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum();
    (-d2 / 2.0).exp()
}

fn random_pair(r: &mut impl Rng, dim: usize) -> (Vec<f64>, Vec<f64>) {
    loop {
        let x: Vec<f64> = (0..dim).map(|_| r.random_range(-2.0..2.0)).collect();
        let y: Vec<f64> = (0..dim).map(|_| r.random_range(-2.0..2.0)).collect();
        if rbf(&x, &y) >= (-2.0f64).exp() {
            return (x, y);
        }
    }
}

#[test]
fn feature_inner_product_approximates_kernel_on_average() {
    let mut r = rng::rng_from(3);
    let maps: Vec<FourierFeatureMap> = (0..50)
        .map(|i| {
            let mut mr = rng::stream(9, "maps", i);
            FourierFeatureMap::sample(2, 100, 1.0, 1.0, &mut mr).unwrap()
        })
        .collect();
    for _ in 0..20 {
        let (x, y) = random_pair(&mut r, 2);
        let est: f64 = maps
            .iter()
            .map(|m| m.featurize(&x).unwrap().dot(&m.featurize(&y).unwrap()))
            .sum::<f64>()
            / maps.len() as f64;
        assert!((est - rbf(&x, &y)).abs() < 0.05, "{est} vs {}", rbf(&x, &y));
    }
}

#[test]
fn approximation_error_shrinks_with_more_features() {
    let mut r = rng::rng_from(5);
    let pairs: Vec<_> = (0..100).map(|_| random_pair(&mut r, 3)).collect();
    let err = |d: usize| {
        let mut mr = rng::stream(2, "decay", d as u64);
        let m = FourierFeatureMap::sample(3, d, 1.0, 1.0, &mut mr).unwrap();
        pairs
            .iter()
            .map(|(x, y)| {
                (m.featurize(x).unwrap().dot(&m.featurize(y).unwrap()) - rbf(x, y)).abs()
            })
            .sum::<f64>()
            / pairs.len() as f64
    };
    assert!(err(400) < err(25));
}
