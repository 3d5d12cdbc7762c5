//! Benchmark environments: Toy, Healthcare and Epidemiology.
//!
//! Parent arguments of every analytic mechanism follow ascending node index,
//! so node order below is significant.

use super::{AnalyticFn, Dag, Domain, Mechanism, Noise, Role, Scm};

pub const BUILTIN_NAMES: &[&str] = &["toy", "healthcare", "epidemiology"];

pub fn builtin(name: &str) -> Option<Scm> {
    match name {
        "toy" => Some(make_toy()),
        "healthcare" => Some(make_healthcare()),
        "epidemiology" => Some(make_epidemiology()),
        _ => None,
    }
}

fn names(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn domain(lo: f64, hi: f64) -> Option<Domain> {
    Some(Domain { lo, hi })
}

/// X -> Z -> Y.
pub fn make_toy() -> Scm {
    use Role::*;
    let dag = Dag::new(
        names(&["X", "Z", "Y"]),
        vec![Manipulative, Manipulative, Target],
        vec![(0, 1), (1, 2)],
    )
    .expect("toy graph is a DAG");
    let mechanisms = vec![
        Mechanism::root(Noise::gaussian(1.0)),
        Mechanism::analytic(AnalyticFn::ToyZ, Noise::gaussian(1.0)),
        Mechanism::analytic(AnalyticFn::ToyY, Noise::gaussian(1.0)),
    ];
    let domains = vec![domain(-5.0, 5.0), domain(-5.0, 20.0), None];
    Scm::new("toy", dag, mechanisms, domains).expect("toy mechanisms match graph")
}

/// Statin/aspirin dosing against PSA. A (age) and B (BMI) are
/// non-manipulative, C (cancer) is a non-manipulative mediator. Note that
/// the `-0.5 A` term in C's sigmoid keeps C within ~1e-12 of zero over the
/// whole age range, as written.
pub fn make_healthcare() -> Scm {
    use Role::*;
    // A=0, B=1, As=2, S=3, C=4, Y=5
    let dag = Dag::new(
        names(&["A", "B", "As", "S", "C", "Y"]),
        vec![
            NonManipulative,
            NonManipulative,
            Manipulative,
            Manipulative,
            NonManipulative,
            Target,
        ],
        vec![
            (0, 1),
            (0, 2),
            (0, 3),
            (0, 4),
            (0, 5),
            (1, 2),
            (1, 3),
            (1, 4),
            (1, 5),
            (2, 4),
            (2, 5),
            (3, 4),
            (3, 5),
            (4, 5),
        ],
    )
    .expect("healthcare graph is a DAG");
    let mechanisms = vec![
        Mechanism::root(Noise::Uniform { lo: 55.0, hi: 75.0 }),
        Mechanism::analytic(AnalyticFn::HealthcareB, Noise::gaussian(0.7)),
        Mechanism::analytic(AnalyticFn::HealthcareAs, Noise::none()),
        Mechanism::analytic(AnalyticFn::HealthcareS, Noise::none()),
        Mechanism::analytic(AnalyticFn::HealthcareC, Noise::none()),
        Mechanism::analytic(AnalyticFn::HealthcareY, Noise::gaussian(0.4)),
    ];
    let domains = vec![None, None, domain(0.0, 1.0), domain(0.0, 1.0), None, None];
    Scm::new("healthcare", dag, mechanisms, domains).expect("healthcare mechanisms match graph")
}

/// Two treatments T and R against viral load. B and L are non-manipulative;
/// L and R are noiseless. Y's formula reads L, so L -> Y is an edge.
pub fn make_epidemiology() -> Scm {
    use Role::*;
    // B=0, T=1, L=2, R=3, Y=4
    let dag = Dag::new(
        names(&["B", "T", "L", "R", "Y"]),
        vec![NonManipulative, Manipulative, NonManipulative, Manipulative, Target],
        vec![(0, 2), (0, 4), (1, 2), (1, 3), (1, 4), (2, 3), (2, 4), (3, 4)],
    )
    .expect("epidemiology graph is a DAG");
    let mechanisms = vec![
        Mechanism::root(Noise::Uniform { lo: -1.0, hi: 1.0 }),
        Mechanism::root(Noise::Uniform { lo: 4.0, hi: 8.0 }),
        Mechanism::analytic(AnalyticFn::EpidemiologyL, Noise::none()),
        Mechanism::analytic(AnalyticFn::EpidemiologyR, Noise::none()),
        Mechanism::analytic(AnalyticFn::EpidemiologyY, Noise::gaussian(1.0)),
    ];
    let domains = vec![None, domain(4.0, 8.0), None, domain(4.0, 12.0), None];
    Scm::new("epidemiology", dag, mechanisms, domains)
        .expect("epidemiology mechanisms match graph")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scm::sigmoid;

    #[test]
    fn toy_has_two_edges_and_target_y() {
        let scm = make_toy();
        assert_eq!(scm.dag().edges().len(), 2);
        assert_eq!(scm.dag().name(scm.target()), "Y");
        assert_eq!(scm.dag().target_parents(), &[1]);
    }

    #[test]
    fn healthcare_bmi_point_check() {
        let scm = make_healthcare();
        // A=65 from its noise draw, everything else noiseless
        let row = scm.evaluate(&[65.0, 0.0, 0.0, 0.0, 0.0, 0.0], None);
        assert!((row[1] - 20.5).abs() < 1e-12);
        let as_ = sigmoid(-0.8 + 6.5 + 0.03 * 20.5);
        let s = sigmoid(-13.0 + 6.5 + 0.2 * 20.5);
        let c = sigmoid(2.2 - 32.5 + 0.01 * 20.5 - 0.04 * s + 0.02 * as_);
        let y = 6.8 + 0.04 * 65.0 - 0.15 * 20.5 - 0.6 * s + 0.55 * as_ + c;
        assert!((row[2] - as_).abs() < 1e-15);
        assert!((row[3] - s).abs() < 1e-15);
        assert!((row[4] - c).abs() < 1e-15);
        assert!((row[5] - y).abs() < 1e-12);
        assert!(c < 1e-12);
    }

    #[test]
    fn epidemiology_point_check() {
        let scm = make_epidemiology();
        let row = scm.evaluate(&[0.0, 4.0, 0.0, 0.0, 0.0], None);
        let l = sigmoid(2.0);
        let r = 4.0 + 4.0 * l;
        let y = 0.5 + 16.0f64.cos() + (-l + 2.0 * r).sin();
        assert!((row[2] - l).abs() < 1e-15);
        assert!((row[3] - r).abs() < 1e-12);
        assert!((row[4] - y).abs() < 1e-12);
    }

    #[test]
    fn healthcare_age_mean_matches_uniform() {
        let scm = make_healthcare();
        let d = scm.sample_observational(100_000, 17).unwrap();
        let a = d.column(0);
        let mean = a.iter().sum::<f64>() / a.len() as f64;
        assert!((64.7..=65.3).contains(&mean), "mean {mean}");
    }

    #[test]
    fn builtin_lookup() {
        for name in BUILTIN_NAMES {
            assert_eq!(builtin(name).unwrap().name(), *name);
        }
        assert!(builtin("nope").is_none());
    }
}
