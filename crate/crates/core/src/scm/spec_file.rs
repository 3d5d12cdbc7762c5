//! TOML serialization of SCMs.
//!
//! ```toml
//! scm_spec_version = 1
//! name = "toy"
//! edges = [["X", "Z"], ["Z", "Y"]]
//!
//! [[nodes]]
//! name = "X"
//! role = "manipulative"        # manipulative | non-manipulative | target
//! noise_std = 1.0              # or: noise_uniform = [lo, hi]
//!
//! [mechanisms.Z]
//! kind = "analytic"            # analytic | linear | random-mlp
//! id = "toy_z"
//!
//! [domains]
//! X = [-5.0, 5.0]
//! ```
//!
//! Linear `weights` are listed in the order the node's parents appear in
//! `nodes`. A node without a `mechanisms` entry must be a root and is pure
//! noise. `random-mlp` mechanisms store only `seed`, `hidden_layers` and
//! `width`; their input count is the node's in-degree.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AnalyticFn, Dag, Domain, Mechanism, MechanismKind, Noise, RandomMlp, Role, Scm};
use crate::error::{CboError, Result};

pub const SCM_SPEC_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecFile {
    scm_spec_version: u32,
    name: String,
    #[serde(default)]
    edges: Vec<[String; 2]>,
    nodes: Vec<NodeSpec>,
    #[serde(default)]
    mechanisms: BTreeMap<String, MechanismSpec>,
    #[serde(default)]
    domains: BTreeMap<String, [f64; 2]>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeSpec {
    name: String,
    role: Role,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    noise_std: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    noise_uniform: Option<[f64; 2]>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
enum MechanismSpec {
    Linear {
        weights: Vec<f64>,
        #[serde(default)]
        bias: f64,
    },
    RandomMlp {
        seed: u64,
        hidden_layers: usize,
        width: usize,
    },
    Analytic {
        id: AnalyticFn,
    },
}

pub fn to_toml_string(scm: &Scm) -> Result<String> {
    let dag = scm.dag();
    let nodes = (0..dag.num_nodes())
        .map(|i| {
            let (noise_std, noise_uniform) = match scm.mechanisms()[i].noise {
                Noise::Gaussian { std } => (Some(std), None),
                Noise::Uniform { lo, hi } => (None, Some([lo, hi])),
            };
            NodeSpec {
                name: dag.name(i).to_string(),
                role: dag.role(i),
                noise_std,
                noise_uniform,
            }
        })
        .collect();
    let edges = dag
        .edges()
        .iter()
        .map(|&(p, c)| [dag.name(p).to_string(), dag.name(c).to_string()])
        .collect();
    let mut mechanisms = BTreeMap::new();
    for (i, m) in scm.mechanisms().iter().enumerate() {
        let spec = match &m.kind {
            MechanismKind::Linear { weights, bias } => {
                if weights.is_empty() && *bias == 0.0 {
                    continue;
                }
                MechanismSpec::Linear {
                    weights: weights.clone(),
                    bias: *bias,
                }
            }
            MechanismKind::RandomMlp(mlp) => MechanismSpec::RandomMlp {
                seed: mlp.seed(),
                hidden_layers: mlp.hidden_layers(),
                width: mlp.width(),
            },
            MechanismKind::Analytic(f) => MechanismSpec::Analytic { id: *f },
        };
        mechanisms.insert(dag.name(i).to_string(), spec);
    }
    let domains = scm
        .declared_domains()
        .iter()
        .enumerate()
        .filter_map(|(i, d)| d.map(|d| (dag.name(i).to_string(), [d.lo, d.hi])))
        .collect();
    let file = SpecFile {
        scm_spec_version: SCM_SPEC_VERSION,
        name: scm.name().to_string(),
        edges,
        nodes,
        mechanisms,
        domains,
    };
    toml::to_string(&file).map_err(|e| CboError::MalformedSpec(e.to_string()))
}

pub fn from_toml_str(text: &str) -> Result<Scm> {
    let file: SpecFile =
        toml::from_str(text).map_err(|e| CboError::MalformedSpec(e.to_string()))?;
    if file.scm_spec_version != SCM_SPEC_VERSION {
        return Err(CboError::MalformedSpec(format!(
            "unsupported scm_spec_version {} (expected {SCM_SPEC_VERSION})",
            file.scm_spec_version
        )));
    }
    let names: Vec<String> = file.nodes.iter().map(|n| n.name.clone()).collect();
    let index = |name: &str| -> Result<usize> {
        names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| CboError::MalformedSpec(format!("unknown node `{name}`")))
    };
    let mut seen = std::collections::BTreeSet::new();
    for n in &names {
        if !seen.insert(n.as_str()) {
            return Err(CboError::MalformedSpec(format!("duplicate node `{n}`")));
        }
    }
    let edges = file
        .edges
        .iter()
        .map(|[p, c]| Ok((index(p)?, index(c)?)))
        .collect::<Result<Vec<_>>>()?;
    let roles = file.nodes.iter().map(|n| n.role).collect();
    let dag = Dag::new(names.clone(), roles, edges)?;

    for key in file.mechanisms.keys().chain(file.domains.keys()) {
        index(key)?;
    }

    let mut mechanisms = Vec::with_capacity(names.len());
    for (i, node) in file.nodes.iter().enumerate() {
        let noise = match (node.noise_std, node.noise_uniform) {
            (Some(std), None) => Noise::Gaussian { std },
            (None, Some([lo, hi])) => Noise::Uniform { lo, hi },
            (None, None) => Noise::none(),
            (Some(_), Some(_)) => {
                return Err(CboError::MalformedSpec(format!(
                    "node `{}` sets both noise_std and noise_uniform",
                    node.name
                )))
            }
        };
        let kind = match file.mechanisms.get(&node.name) {
            None if dag.parents(i).is_empty() => MechanismKind::Linear {
                weights: Vec::new(),
                bias: 0.0,
            },
            None => {
                return Err(CboError::MalformedSpec(format!(
                    "node `{}` has parents but no mechanism",
                    node.name
                )))
            }
            Some(MechanismSpec::Linear { weights, bias }) => MechanismKind::Linear {
                weights: weights.clone(),
                bias: *bias,
            },
            Some(MechanismSpec::RandomMlp {
                seed,
                hidden_layers,
                width,
            }) => MechanismKind::RandomMlp(RandomMlp::new(
                *seed,
                dag.parents(i).len(),
                *hidden_layers,
                *width,
            )),
            Some(MechanismSpec::Analytic { id }) => MechanismKind::Analytic(*id),
        };
        mechanisms.push(Mechanism { kind, noise });
    }

    let mut domains = vec![None; names.len()];
    for (name, [lo, hi]) in &file.domains {
        domains[index(name)?] = Some(
            Domain::new(*lo, *hi).map_err(|_| {
                CboError::MalformedSpec(format!("domain of `{name}` is not a valid interval"))
            })?,
        );
    }
    Scm::new(file.name, dag, mechanisms, domains)
}

pub fn save_scm_spec(scm: &Scm, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_toml_string(scm)?)?;
    Ok(())
}

pub fn load_scm_spec(path: impl AsRef<Path>) -> Result<Scm> {
    let text = std::fs::read_to_string(path)?;
    from_toml_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scm::{generate_erdos_renyi, make_epidemiology, make_healthcare, make_toy, ErKind};

    #[test]
    fn builtins_round_trip() {
        for scm in [make_toy(), make_healthcare(), make_epidemiology()] {
            let text = to_toml_string(&scm).unwrap();
            assert_eq!(from_toml_str(&text).unwrap(), scm, "{text}");
        }
    }

    #[test]
    fn random_graphs_round_trip() {
        for kind in [ErKind::Linear, ErKind::Nonlinear] {
            let scm = generate_erdos_renyi(9, kind, 3).unwrap();
            let back = from_toml_str(&to_toml_string(&scm).unwrap()).unwrap();
            assert_eq!(back, scm);
            assert_eq!(
                back.sample_observational(5, 2).unwrap(),
                scm.sample_observational(5, 2).unwrap()
            );
        }
    }

    const CYCLIC: &str = r#"
scm_spec_version = 1
name = "cyclic"
edges = [["A", "B"], ["B", "A"], ["B", "Y"]]

[[nodes]]
name = "A"
role = "manipulative"
noise_std = 1.0

[[nodes]]
name = "B"
role = "manipulative"
noise_std = 1.0

[[nodes]]
name = "Y"
role = "target"
noise_std = 1.0

[mechanisms.A]
kind = "linear"
weights = [1.0]

[mechanisms.B]
kind = "linear"
weights = [1.0]

[mechanisms.Y]
kind = "linear"
weights = [1.0]
"#;

    #[test]
    fn cycle_error_names_nodes() {
        match from_toml_str(CYCLIC).unwrap_err() {
            CboError::Cycle(nodes) => {
                assert!(nodes.iter().any(|n| n == "A"));
                assert!(nodes.iter().any(|n| n == "B"));
            }
            other => panic!("expected cycle error, got {other:?}"),
        }
    }

    #[test]
    fn arity_error_for_extra_weights() {
        let text = r#"
scm_spec_version = 1
name = "bad"
edges = [["A", "Y"], ["B", "Y"]]

[[nodes]]
name = "A"
role = "manipulative"

[[nodes]]
name = "B"
role = "manipulative"

[[nodes]]
name = "Y"
role = "target"
noise_std = 1.0

[mechanisms.Y]
kind = "linear"
weights = [1.0, 2.0, 3.0]
"#;
        assert!(matches!(
            from_toml_str(text).unwrap_err(),
            CboError::Arity { expected: 3, found: 2, .. }
        ));
    }

    #[test]
    fn malformed_and_versioned() {
        assert!(matches!(
            from_toml_str("this is not toml = = ").unwrap_err(),
            CboError::MalformedSpec(_)
        ));
        let text = CYCLIC.replace("scm_spec_version = 1", "scm_spec_version = 2");
        assert!(matches!(from_toml_str(&text).unwrap_err(), CboError::MalformedSpec(_)));
    }
}
