use cbou_core::parent_posterior::{ParentPosterior, ParentSet, PosteriorConfig, PosteriorMode};
use cbou_core::rng;
use cbou_core::scm::{Dataset, Domain, Standardizer};
use cbou_core::surrogate::{CausalPrior, GpConfig, GpHyper, GpSurrogate, InputScaling};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn linear_obs(n: usize, seed: u64) -> Dataset {
    let mut r = rng::rng_from(seed);
    let mut d = Dataset::new(vec!["X0".into(), "X1".into(), "Y".into()]);
    for _ in 0..n {
        let x0: f64 = StandardNormal.sample(&mut r);
        let x1: f64 = StandardNormal.sample(&mut r);
        let e: f64 = StandardNormal.sample(&mut r);
        d.push(&[x0, x1, 2.0 * x0 + e], None).unwrap();
    }
    d
}

fn sets(v: &[&[usize]]) -> Vec<(ParentSet, f64)> {
    let p = 1.0 / v.len() as f64;
    v.iter().map(|s| (ParentSet::new(s.to_vec()), p)).collect()
}

#[test]
fn total_variance_matches_direct_mixture() {
    let obs = linear_obs(100, 1);
    for mode in [PosteriorMode::Linear, PosteriorMode::Nonlinear] {
        let cfg = PosteriorConfig {
            mode,
            ..Default::default()
        };
        let mut post =
            ParentPosterior::init_beliefs(3, 2, &sets(&[&[0], &[1], &[0, 1], &[]]), &obs, cfg)
                .unwrap();
        post.update(&[0.3, -0.2, 0.9]).unwrap();
        let prior = CausalPrior::from_posterior(&[0, 1], &post);
        let mut r = rng::rng_from(2);
        for _ in 0..20 {
            let z = [r.random_range(-2.0..2.0), r.random_range(-2.0..2.0)];
            let (m, v) = prior.mean_var(&z).unwrap();
            let comps = prior.components_at(&z).unwrap();
            let ey: f64 = comps.iter().map(|(w, m, _)| w * m).sum();
            let ey2: f64 = comps.iter().map(|(w, m, v)| w * (v + m * m)).sum();
            assert!((m - ey).abs() < 1e-10);
            assert!((v - (ey2 - ey * ey)).abs() < 1e-10, "{v} vs {}", ey2 - ey * ey);
        }
    }
}

#[test]
fn equal_weight_sharp_sets_give_midpoint_and_half_gap() {
    let mut obs = Dataset::new(vec!["X0".into(), "X1".into(), "Y".into()]);
    let mut r = rng::rng_from(3);
    for _ in 0..200 {
        let x0: f64 = StandardNormal.sample(&mut r);
        let x1: f64 = StandardNormal.sample(&mut r);
        obs.push(&[x0, x1, 2.0 * x0 - x1], None).unwrap();
    }
    let cfg = PosteriorConfig {
        noise_variance: 1e-10,
        ..Default::default()
    };
    let post = ParentPosterior::init_beliefs(3, 2, &sets(&[&[0], &[0, 1]]), &obs, cfg).unwrap();
    let prior = CausalPrior::from_posterior(&[0, 1], &post);
    let z = [0.7, 1.1];
    let comps = prior.components_at(&z).unwrap();
    let (m1, m2) = (comps[0].1, comps[1].1);
    let (m, v) = prior.mean_var(&z).unwrap();
    assert!((m - (m1 + m2) / 2.0).abs() < 1e-9);
    assert!((v - (m1 - m2).powi(2) / 4.0).abs() < 1e-6, "{v}");
}

#[test]
fn linear_prior_mean_tracks_effect() {
    let raw = linear_obs(200, 4);
    let st = Standardizer::fit(&raw).unwrap();
    let obs = st.apply(&raw);
    let post = ParentPosterior::init_beliefs(
        3,
        2,
        &sets(&[&[0]]),
        &obs,
        PosteriorConfig::default(),
    )
    .unwrap();
    let prior = CausalPrior::from_posterior(&[0], &post);
    let (m, _) = prior.mean_var(&[st.scale(0, 3.0)]).unwrap();
    let y = st.unscale(2, m);
    assert!((y - 6.0).abs() < 0.3, "{y}");
}

fn unit_scaling(k: usize) -> InputScaling {
    InputScaling {
        domains: vec![Domain { lo: 0.0, hi: 1.0 }; k],
        standardization: vec![(0.0, 1.0); k],
    }
}

#[test]
fn repeated_observations_converge_to_empirical_mean() {
    let cfg = GpConfig {
        optimize: false,
        init: GpHyper {
            lengthscale: 0.2,
            signal_variance: 1.0,
            noise_variance: 0.25,
        },
        ..Default::default()
    };
    let mut gp =
        GpSurrogate::new(vec![0], unit_scaling(1), CausalPrior::constant(0.0, 0.0), cfg).unwrap();
    let mut r = rng::rng_from(9);
    let ys: Vec<f64> = (0..20)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut r);
            1.5 + 0.5 * z
        })
        .collect();
    let xs = vec![vec![0.4]; 20];
    gp.fit(&xs, &ys).unwrap();
    let empirical = ys.iter().sum::<f64>() / 20.0;
    let se = 0.5 / 20f64.sqrt();
    let (m, _) = gp.predict(&[0.4]).unwrap();
    assert!((m - empirical).abs() < 2.0 * se, "{m} vs {empirical}");
}

#[test]
fn adding_points_never_increases_variance() {
    let cfg = GpConfig {
        optimize: false,
        init: GpHyper {
            lengthscale: 0.25,
            signal_variance: 1.0,
            noise_variance: 1e-6,
        },
        ..Default::default()
    };
    let mut r = rng::rng_from(6);
    let prior = CausalPrior::constant(0.2, 0.4);
    for _ in 0..5 {
        let xs: Vec<Vec<f64>> = (0..8)
            .map(|_| vec![r.random_range(0.0..1.0), r.random_range(0.0..1.0)])
            .collect();
        let ys: Vec<f64> = (0..8).map(|_| r.random_range(-1.0..1.0)).collect();
        let probes: Vec<Vec<f64>> = (0..50)
            .map(|_| vec![r.random_range(0.0..1.0), r.random_range(0.0..1.0)])
            .collect();
        let mut prev: Option<Vec<f64>> = None;
        for k in 0..=xs.len() {
            let mut gp =
                GpSurrogate::new(vec![0, 1], unit_scaling(2), prior.clone(), cfg.clone()).unwrap();
            gp.fit(&xs[..k], &ys[..k]).unwrap();
            let vars: Vec<f64> = probes.iter().map(|p| gp.predict(p).unwrap().1).collect();
            if let Some(p) = &prev {
                for (a, b) in vars.iter().zip(p) {
                    assert!(*a <= b + 1e-8, "{a} > {b}");
                }
            }
            if k > 0 {
                let (_, v) = gp.predict(&xs[k - 1]).unwrap();
                assert!(v <= 1.0 + 0.16 + 1e-12);
            }
            prev = Some(vars);
        }
    }
}
