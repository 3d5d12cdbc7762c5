use serde::{Deserialize, Serialize};

use crate::error::{CboError, Result};

/// Hard intervention `do(X_s = v)`. Targets are kept sorted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Intervention {
    targets: Vec<usize>,
    values: Vec<f64>,
}

impl Intervention {
    pub fn new(targets: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if targets.len() != values.len() {
            return Err(CboError::InvalidIntervention(format!(
                "{} targets but {} values",
                targets.len(),
                values.len()
            )));
        }
        if targets.is_empty() {
            return Err(CboError::InvalidIntervention("no intervention targets".into()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(CboError::InvalidIntervention(format!("non-finite value {v}")));
        }
        let mut pairs: Vec<(usize, f64)> = targets.into_iter().zip(values).collect();
        pairs.sort_by_key(|p| p.0);
        if pairs.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(CboError::InvalidIntervention("duplicate target".into()));
        }
        let (targets, values) = pairs.into_iter().unzip();
        Ok(Self { targets, values })
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value_of(&self, node: usize) -> Option<f64> {
        self.targets
            .iter()
            .position(|&t| t == node)
            .map(|i| self.values[i])
    }
}

/// Row-major sample matrix with one column per node and an optional
/// intervention tag per row (absent = observational).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    columns: Vec<String>,
    data: Vec<f64>,
    tags: Vec<Option<Intervention>>,
}

impl Dataset {
    pub fn new(columns: Vec<String>) -> Self {
        Self {
            columns,
            data: Vec::new(),
            tags: Vec::new(),
        }
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn push(&mut self, row: &[f64], tag: Option<Intervention>) -> Result<()> {
        if row.len() != self.width() {
            return Err(CboError::DimensionMismatch {
                expected: self.width(),
                found: row.len(),
            });
        }
        if let Some(iv) = &tag {
            for (&t, &v) in iv.targets().iter().zip(iv.values()) {
                if t >= row.len() || row[t] != v {
                    return Err(CboError::InvalidIntervention(format!(
                        "tagged row does not carry intervened value at column {t}"
                    )));
                }
            }
        }
        self.data.extend_from_slice(row);
        self.tags.push(tag);
        Ok(())
    }

    pub fn extend(&mut self, other: &Dataset) -> Result<()> {
        for i in 0..other.len() {
            self.push(other.row(i), other.tag(i).cloned())?;
        }
        Ok(())
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.width();
        &self.data[i * w..(i + 1) * w]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.width().max(1))
    }

    pub fn tag(&self, i: usize) -> Option<&Intervention> {
        self.tags[i].as_ref()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    /// New dataset made of the given row indices (repeats allowed).
    pub fn select_rows(&self, indices: &[usize]) -> Dataset {
        let mut out = Dataset::new(self.columns.clone());
        for &i in indices {
            out.data.extend_from_slice(self.row(i));
            out.tags.push(self.tags[i].clone());
        }
        out
    }
}

/// Per-column affine standardization fitted on observational data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Standardizer {
    /// Columns whose spread is negligible relative to their magnitude keep
    /// scale 1, so near-deterministic nodes are not amplified into noise.
    pub fn fit(data: &Dataset) -> Result<Self> {
        if data.is_empty() {
            return Err(CboError::Precondition(
                "cannot standardize an empty dataset".into(),
            ));
        }
        let n = data.len() as f64;
        let w = data.width();
        let mut means = vec![0.0; w];
        for r in data.rows() {
            for (m, x) in means.iter_mut().zip(r) {
                *m += x;
            }
        }
        means.iter_mut().for_each(|m| *m /= n);
        let mut vars = vec![0.0; w];
        for r in data.rows() {
            for j in 0..w {
                vars[j] += (r[j] - means[j]).powi(2);
            }
        }
        let stds = vars
            .iter()
            .zip(&means)
            .map(|(v, m)| {
                let sd = (v / (n - 1.0).max(1.0)).sqrt();
                if sd > 1e-9 * m.abs().max(1.0) {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { means, stds })
    }

    pub fn identity(width: usize) -> Self {
        Self {
            means: vec![0.0; width],
            stds: vec![1.0; width],
        }
    }

    pub fn scale(&self, j: usize, x: f64) -> f64 {
        (x - self.means[j]) / self.stds[j]
    }

    pub fn unscale(&self, j: usize, z: f64) -> f64 {
        self.means[j] + self.stds[j] * z
    }

    pub fn scale_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter().enumerate().map(|(j, &x)| self.scale(j, x)).collect()
    }

    pub fn apply(&self, data: &Dataset) -> Dataset {
        let mut out = Dataset::new(data.columns.clone());
        for r in data.rows() {
            out.data.extend(self.scale_row(r));
        }
        // Tags keep original units; they annotate which columns were clamped.
        out.tags = data.tags.clone();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tagged_row_must_match_values() {
        let mut d = Dataset::new(vec!["X".into(), "Y".into()]);
        let iv = Intervention::new(vec![0], vec![2.0]).unwrap();
        assert!(d.push(&[1.0, 0.0], Some(iv.clone())).is_err());
        d.push(&[2.0, 0.0], Some(iv)).unwrap();
        assert_eq!(d.len(), 1);
    }

    #[test]
    fn standardizer_keeps_constant_columns_finite() {
        let mut d = Dataset::new(vec!["a".into(), "b".into()]);
        for i in 0..10 {
            d.push(&[i as f64, 3.0], None).unwrap();
        }
        let s = Standardizer::fit(&d).unwrap();
        assert_eq!(s.stds[1], 1.0);
        assert!((s.scale(0, 4.5)).abs() < 1e-12);
    }

    #[test]
    fn intervention_sorts_targets() {
        let iv = Intervention::new(vec![3, 1], vec![0.5, -0.5]).unwrap();
        assert_eq!(iv.targets(), &[1, 3]);
        assert_eq!(iv.value_of(3), Some(0.5));
        assert!(Intervention::new(vec![1, 1], vec![0.0, 0.0]).is_err());
    }
}
