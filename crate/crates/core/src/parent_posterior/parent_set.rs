use serde::{Deserialize, Serialize};

/// Hypothesized direct-parent set of the target, as sorted node indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
pub struct ParentSet(Vec<usize>);

impl ParentSet {
    pub fn new(mut members: Vec<usize>) -> Self {
        members.sort_unstable();
        members.dedup();
        Self(members)
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn from_mask(mask: &[bool]) -> Self {
        Self(
            mask.iter()
                .enumerate()
                .filter_map(|(i, &b)| b.then_some(i))
                .collect(),
        )
    }

    pub fn members(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, node: usize) -> bool {
        self.0.binary_search(&node).is_ok()
    }

    pub fn is_subset_of(&self, other: &ParentSet) -> bool {
        self.0.iter().all(|&i| other.contains(i))
    }

    pub fn intersection(&self, other: &ParentSet) -> ParentSet {
        Self(self.0.iter().copied().filter(|&i| other.contains(i)).collect())
    }

    pub fn to_mask(&self, num_nodes: usize) -> Vec<bool> {
        let mut m = vec![false; num_nodes];
        for &i in &self.0 {
            if i < num_nodes {
                m[i] = true;
            }
        }
        m
    }

    /// Bit string over node indices, e.g. `"010"` for `{1}` in a 3-node graph.
    pub fn mask_string(&self, num_nodes: usize) -> String {
        self.to_mask(num_nodes)
            .iter()
            .map(|&b| if b { '1' } else { '0' })
            .collect()
    }
}

impl From<Vec<usize>> for ParentSet {
    fn from(v: Vec<usize>) -> Self {
        ParentSet::new(v)
    }
}
