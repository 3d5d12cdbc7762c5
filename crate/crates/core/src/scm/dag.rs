use serde::{Deserialize, Serialize};

use crate::error::{CboError, Result};

/// What an experimenter may do with a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Manipulative,
    NonManipulative,
    Target,
}

/// Directed acyclic graph with node roles and a single target.
#[derive(Debug, Clone, PartialEq)]
pub struct Dag {
    names: Vec<String>,
    roles: Vec<Role>,
    edges: Vec<(usize, usize)>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    topo_order: Vec<usize>,
    target: usize,
}

impl Dag {
    pub fn new(names: Vec<String>, roles: Vec<Role>, edges: Vec<(usize, usize)>) -> Result<Self> {
        let n = names.len();
        if n == 0 {
            return Err(CboError::InvalidGraph("graph has no nodes".into()));
        }
        if roles.len() != n {
            return Err(CboError::InvalidGraph(format!(
                "{} names but {} roles",
                n,
                roles.len()
            )));
        }
        let targets: Vec<usize> = (0..n).filter(|&i| roles[i] == Role::Target).collect();
        if targets.len() != 1 {
            return Err(CboError::InvalidGraph(format!(
                "exactly one target node required, found {}",
                targets.len()
            )));
        }
        let target = targets[0];

        let mut parents = vec![Vec::new(); n];
        let mut children = vec![Vec::new(); n];
        let mut sorted_edges = edges.clone();
        sorted_edges.sort_unstable();
        for w in sorted_edges.windows(2) {
            if w[0] == w[1] {
                return Err(CboError::InvalidGraph(format!(
                    "duplicate edge {} -> {}",
                    names[w[0].0], names[w[0].1]
                )));
            }
        }
        for &(p, c) in &edges {
            if p >= n || c >= n {
                return Err(CboError::InvalidGraph(format!(
                    "edge ({p}, {c}) references a node outside 0..{n}"
                )));
            }
            if p == c {
                return Err(CboError::Cycle(vec![names[p].clone(), names[p].clone()]));
            }
            parents[c].push(p);
            children[p].push(c);
        }
        for list in parents.iter_mut().chain(children.iter_mut()) {
            list.sort_unstable();
        }
        if !children[target].is_empty() {
            return Err(CboError::InvalidGraph(format!(
                "target `{}` must not have outgoing edges",
                names[target]
            )));
        }

        let topo_order = match topological_order(&parents, &children) {
            Some(order) => order,
            None => return Err(CboError::Cycle(find_cycle(&children, &names))),
        };

        Ok(Self {
            names,
            roles,
            edges,
            parents,
            children,
            topo_order,
            target,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn roles(&self) -> &[Role] {
        &self.roles
    }

    pub fn role(&self, i: usize) -> Role {
        self.roles[i]
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn parents(&self, i: usize) -> &[usize] {
        &self.parents[i]
    }

    pub fn children(&self, i: usize) -> &[usize] {
        &self.children[i]
    }

    pub fn topological_order(&self) -> &[usize] {
        &self.topo_order
    }

    pub fn target(&self) -> usize {
        self.target
    }

    /// Direct parents of the target.
    pub fn target_parents(&self) -> &[usize] {
        &self.parents[self.target]
    }

    pub fn manipulative(&self) -> Vec<usize> {
        (0..self.num_nodes())
            .filter(|&i| self.roles[i] == Role::Manipulative)
            .collect()
    }

    /// All nodes except the target, in index order.
    pub fn non_target(&self) -> Vec<usize> {
        (0..self.num_nodes()).filter(|&i| i != self.target).collect()
    }

    /// Nodes reachable from any of `sources` (sources included).
    pub fn descendants(&self, sources: &[usize]) -> Vec<bool> {
        let mut seen = vec![false; self.num_nodes()];
        let mut stack: Vec<usize> = sources.to_vec();
        while let Some(v) = stack.pop() {
            if seen[v] {
                continue;
            }
            seen[v] = true;
            stack.extend(self.children[v].iter().copied());
        }
        seen
    }
}

fn topological_order(parents: &[Vec<usize>], children: &[Vec<usize>]) -> Option<Vec<usize>> {
    let n = parents.len();
    let mut indegree: Vec<usize> = parents.iter().map(Vec::len).collect();
    // Smallest-index-first keeps the order deterministic.
    let mut ready: std::collections::BTreeSet<usize> =
        (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(&v) = ready.iter().next() {
        ready.remove(&v);
        order.push(v);
        for &c in &children[v] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                ready.insert(c);
            }
        }
    }
    (order.len() == n).then_some(order)
}

/// Returns the node names along one directed cycle, first node repeated at the end.
fn find_cycle(children: &[Vec<usize>], names: &[String]) -> Vec<String> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Active,
        Done,
    }
    let n = children.len();
    let mut mark = vec![Mark::New; n];
    let mut path: Vec<usize> = Vec::new();

    fn visit(
        v: usize,
        children: &[Vec<usize>],
        mark: &mut [Mark],
        path: &mut Vec<usize>,
    ) -> Option<Vec<usize>> {
        mark[v] = Mark::Active;
        path.push(v);
        for &c in &children[v] {
            match mark[c] {
                Mark::Active => {
                    let start = path.iter().position(|&p| p == c).unwrap_or(0);
                    let mut cycle = path[start..].to_vec();
                    cycle.push(c);
                    return Some(cycle);
                }
                Mark::New => {
                    if let Some(cycle) = visit(c, children, mark, path) {
                        return Some(cycle);
                    }
                }
                Mark::Done => {}
            }
        }
        path.pop();
        mark[v] = Mark::Done;
        None
    }

    for s in 0..n {
        if mark[s] == Mark::New {
            if let Some(cycle) = visit(s, children, &mut mark, &mut path) {
                return cycle.into_iter().map(|i| names[i].clone()).collect();
            }
        }
    }
    Vec::new()
}
