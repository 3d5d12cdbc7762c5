use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{Dag, Mechanism, MechanismKind, Noise, RandomMlp, Role, Scm};
use crate::error::{CboError, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErKind {
    Linear,
    Nonlinear,
}

const MAX_ATTEMPTS: u64 = 1000;
const NOISE_STD: f64 = 1.0;

/// Random Erdős–Rényi DAG with `d` nodes and `d` expected edges.
///
/// A random permutation fixes the causal order and each forward pair is an
/// edge with probability `2 / (d - 1)`. The target is drawn uniformly among
/// nodes with at least one parent and its outgoing edges are dropped. Every
/// other node is manipulative. Linear mechanisms draw weights from
/// U(-5, 5); nonlinear ones are seeded random tanh networks. All nodes carry
/// Gaussian noise of std 1.
pub fn generate_erdos_renyi(d: usize, kind: ErKind, seed: u64) -> Result<Scm> {
    if d < 3 {
        return Err(CboError::Precondition(format!(
            "Erdős–Rényi graphs need d >= 3, got {d}"
        )));
    }
    let p = 2.0 / (d as f64 - 1.0);
    for attempt in 0..MAX_ATTEMPTS {
        let mut r = rng::stream(seed, "er-graph", attempt);
        let mut order: Vec<usize> = (0..d).collect();
        order.shuffle(&mut r);
        let mut edges = Vec::new();
        for i in 0..d {
            for j in (i + 1)..d {
                if r.random::<f64>() < p {
                    edges.push((order[i], order[j]));
                }
            }
        }
        let mut indegree = vec![0usize; d];
        for &(_, c) in &edges {
            indegree[c] += 1;
        }
        let candidates: Vec<usize> = (0..d).filter(|&v| indegree[v] > 0).collect();
        if candidates.is_empty() {
            continue;
        }
        let target = candidates[r.random_range(0..candidates.len())];
        edges.retain(|&(p, _)| p != target);
        edges.sort_unstable();

        let names: Vec<String> = (0..d)
            .map(|i| if i == target { "Y".to_string() } else { format!("X{i}") })
            .collect();
        let roles: Vec<Role> = (0..d)
            .map(|i| if i == target { Role::Target } else { Role::Manipulative })
            .collect();
        let dag = Dag::new(names, roles, edges)?;

        let noise = Noise::gaussian(NOISE_STD);
        let mechanisms = (0..d)
            .map(|v| {
                let k = dag.parents(v).len();
                if k == 0 {
                    return Mechanism::root(noise);
                }
                match kind {
                    ErKind::Linear => {
                        let weights = (0..k).map(|_| r.random_range(-5.0..5.0)).collect();
                        Mechanism::linear(weights, 0.0, noise)
                    }
                    ErKind::Nonlinear => Mechanism {
                        kind: MechanismKind::RandomMlp(RandomMlp::new(
                            rng::derive_seed(seed, "er-mlp", v as u64),
                            k,
                            RandomMlp::DEFAULT_HIDDEN_LAYERS,
                            RandomMlp::DEFAULT_WIDTH,
                        )),
                        noise,
                    },
                }
            })
            .collect();
        let label = match kind {
            ErKind::Linear => format!("er-linear-d{d}"),
            ErKind::Nonlinear => format!("er-nonlinear-d{d}"),
        };
        return Scm::new(label, dag, mechanisms, vec![None; d]);
    }
    Err(CboError::InvalidGraph(format!(
        "no node with a parent after {MAX_ATTEMPTS} Erdős–Rényi draws"
    )))
}
