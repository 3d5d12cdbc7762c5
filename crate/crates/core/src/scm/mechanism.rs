use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{CboError, Result};
use crate::rng;

/// Exogenous noise added to a node's mechanism output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Noise {
    Gaussian { std: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl Noise {
    pub fn gaussian(std: f64) -> Self {
        Noise::Gaussian { std }
    }

    pub fn none() -> Self {
        Noise::Gaussian { std: 0.0 }
    }

    /// Always consumes randomness, even when the noise is degenerate, so
    /// that draws stay aligned across nodes and interventions.
    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Noise::Gaussian { std } => {
                let z: f64 = StandardNormal.sample(rng);
                std * z
            }
            Noise::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
        }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        match *self {
            Noise::Gaussian { std } if !(std >= 0.0 && std.is_finite()) => {
                Err(format!("noise std must be finite and >= 0, got {std}"))
            }
            Noise::Uniform { lo, hi } if !(lo <= hi && lo.is_finite() && hi.is_finite()) => {
                Err(format!("uniform noise needs finite lo <= hi, got [{lo}, {hi}]"))
            }
            _ => Ok(()),
        }
    }
}

/// Closed-form mechanisms of the benchmark SCMs. Arguments are the node's
/// parents in ascending node-index order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnalyticFn {
    /// Z = 4 + exp(-X)
    ToyZ,
    /// Y = cos(Z) - exp(-Z/20)
    ToyY,
    /// B = 27 - 0.1 A
    HealthcareB,
    /// As = sigmoid(-0.8 + 0.1 A + 0.03 B)
    HealthcareAs,
    /// S = sigmoid(-13 + 0.1 A + 0.2 B)
    HealthcareS,
    /// C = sigmoid(2.2 - 0.5 A + 0.01 B - 0.04 S + 0.02 As); args (A, B, As, S)
    HealthcareC,
    /// Y = 6.8 + 0.04 A - 0.15 B - 0.6 S + 0.55 As + C; args (A, B, As, S, C)
    HealthcareY,
    /// L = expit(0.5 T + B); args (B, T)
    EpidemiologyL,
    /// R = 4 + L T; args (T, L)
    EpidemiologyR,
    /// Y = 0.5 + cos(4T) + sin(-L + 2R) + B; args (B, T, L, R)
    EpidemiologyY,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl AnalyticFn {
    pub fn arity(self) -> usize {
        match self {
            AnalyticFn::ToyZ | AnalyticFn::ToyY | AnalyticFn::HealthcareB => 1,
            AnalyticFn::HealthcareAs
            | AnalyticFn::HealthcareS
            | AnalyticFn::EpidemiologyL
            | AnalyticFn::EpidemiologyR => 2,
            AnalyticFn::HealthcareC | AnalyticFn::EpidemiologyY => 4,
            AnalyticFn::HealthcareY => 5,
        }
    }

    pub fn eval(self, a: &[f64]) -> f64 {
        match self {
            AnalyticFn::ToyZ => 4.0 + (-a[0]).exp(),
            AnalyticFn::ToyY => a[0].cos() - (-a[0] / 20.0).exp(),
            AnalyticFn::HealthcareB => 27.0 - 0.1 * a[0],
            AnalyticFn::HealthcareAs => sigmoid(-0.8 + 0.1 * a[0] + 0.03 * a[1]),
            AnalyticFn::HealthcareS => sigmoid(-13.0 + 0.1 * a[0] + 0.2 * a[1]),
            AnalyticFn::HealthcareC => {
                let (age, bmi, aspirin, statin) = (a[0], a[1], a[2], a[3]);
                sigmoid(2.2 - 0.5 * age + 0.01 * bmi - 0.04 * statin + 0.02 * aspirin)
            }
            AnalyticFn::HealthcareY => {
                let (age, bmi, aspirin, statin, cancer) = (a[0], a[1], a[2], a[3], a[4]);
                6.8 + 0.04 * age - 0.15 * bmi - 0.6 * statin + 0.55 * aspirin + cancer
            }
            AnalyticFn::EpidemiologyL => sigmoid(0.5 * a[1] + a[0]),
            AnalyticFn::EpidemiologyR => 4.0 + a[1] * a[0],
            AnalyticFn::EpidemiologyY => {
                let (b, t, l, r) = (a[0], a[1], a[2], a[3]);
                0.5 + (4.0 * t).cos() + (-l + 2.0 * r).sin() + b
            }
        }
    }
}

/// A fixed random feed-forward network: `hidden_layers` tanh layers of
/// `width` units, Normal(0, 1) weights and biases, linear scalar output.
/// Fully determined by `seed` and the shape, so only those are persisted.
#[derive(Debug, Clone)]
pub struct RandomMlp {
    seed: u64,
    inputs: usize,
    hidden_layers: usize,
    width: usize,
    // (weights row-major out x in, biases)
    layers: Vec<(Vec<f64>, Vec<f64>)>,
}

impl PartialEq for RandomMlp {
    fn eq(&self, other: &Self) -> bool {
        self.seed == other.seed
            && self.inputs == other.inputs
            && self.hidden_layers == other.hidden_layers
            && self.width == other.width
    }
}

impl RandomMlp {
    pub const DEFAULT_HIDDEN_LAYERS: usize = 5;
    pub const DEFAULT_WIDTH: usize = 16;

    pub fn new(seed: u64, inputs: usize, hidden_layers: usize, width: usize) -> Self {
        let mut r = rng::rng_from(seed);
        let mut layers = Vec::with_capacity(hidden_layers + 1);
        let mut fan_in = inputs;
        for layer in 0..=hidden_layers {
            let fan_out = if layer == hidden_layers { 1 } else { width };
            let w: Vec<f64> = (0..fan_out * fan_in)
                .map(|_| StandardNormal.sample(&mut r))
                .collect();
            let b: Vec<f64> = (0..fan_out).map(|_| StandardNormal.sample(&mut r)).collect();
            layers.push((w, b));
            fan_in = fan_out;
        }
        Self {
            seed,
            inputs,
            hidden_layers,
            width,
            layers,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn hidden_layers(&self) -> usize {
        self.hidden_layers
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut h = x.to_vec();
        let last = self.layers.len() - 1;
        for (idx, (w, b)) in self.layers.iter().enumerate() {
            let fan_in = h.len();
            let out: Vec<f64> = b
                .iter()
                .enumerate()
                .map(|(o, bias)| {
                    let row = &w[o * fan_in..(o + 1) * fan_in];
                    let pre = bias + row.iter().zip(&h).map(|(a, b)| a * b).sum::<f64>();
                    if idx == last {
                        pre
                    } else {
                        pre.tanh()
                    }
                })
                .collect();
            h = out;
        }
        h[0]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MechanismKind {
    Linear { weights: Vec<f64>, bias: f64 },
    RandomMlp(RandomMlp),
    Analytic(AnalyticFn),
}

/// Causal mechanism `v = f(parents) + noise` of one node.
#[derive(Debug, Clone, PartialEq)]
pub struct Mechanism {
    pub kind: MechanismKind,
    pub noise: Noise,
}

impl Mechanism {
    pub fn linear(weights: Vec<f64>, bias: f64, noise: Noise) -> Self {
        Self {
            kind: MechanismKind::Linear { weights, bias },
            noise,
        }
    }

    pub fn root(noise: Noise) -> Self {
        Self::linear(Vec::new(), 0.0, noise)
    }

    pub fn analytic(f: AnalyticFn, noise: Noise) -> Self {
        Self {
            kind: MechanismKind::Analytic(f),
            noise,
        }
    }

    pub fn arity(&self) -> usize {
        match &self.kind {
            MechanismKind::Linear { weights, .. } => weights.len(),
            MechanismKind::RandomMlp(m) => m.inputs(),
            MechanismKind::Analytic(f) => f.arity(),
        }
    }

    /// Deterministic part `f(parents)`.
    pub fn mean(&self, parents: &[f64]) -> f64 {
        match &self.kind {
            MechanismKind::Linear { weights, bias } => {
                bias + weights.iter().zip(parents).map(|(w, x)| w * x).sum::<f64>()
            }
            MechanismKind::RandomMlp(m) => m.eval(parents),
            MechanismKind::Analytic(f) => f.eval(parents),
        }
    }

    pub fn validate(&self, node: &str, in_degree: usize) -> Result<()> {
        self.noise
            .validate()
            .map_err(|reason| CboError::InvalidMechanism {
                node: node.to_string(),
                reason,
            })?;
        if self.arity() != in_degree {
            return Err(CboError::Arity {
                node: node.to_string(),
                expected: self.arity(),
                found: in_degree,
            });
        }
        if let MechanismKind::Linear { weights, bias } = &self.kind {
            if !bias.is_finite() || weights.iter().any(|w| !w.is_finite()) {
                return Err(CboError::InvalidMechanism {
                    node: node.to_string(),
                    reason: "linear weights must be finite".into(),
                });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_is_stable_for_large_inputs() {
        assert_eq!(sigmoid(800.0), 1.0);
        assert!(sigmoid(-800.0) >= 0.0);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn random_mlp_is_determined_by_seed() {
        let a = RandomMlp::new(11, 3, 5, 16);
        let b = RandomMlp::new(11, 3, 5, 16);
        let x = [0.3, -1.2, 2.0];
        assert_eq!(a.eval(&x).to_bits(), b.eval(&x).to_bits());
        assert_ne!(a.eval(&x), RandomMlp::new(12, 3, 5, 16).eval(&x));
    }

    #[test]
    fn linear_arity_mismatch_is_reported() {
        let m = Mechanism::linear(vec![1.0, 2.0, 3.0], 0.0, Noise::gaussian(1.0));
        assert!(matches!(
            m.validate("Y", 2),
            Err(CboError::Arity { expected: 3, found: 2, .. })
        ));
    }
}
