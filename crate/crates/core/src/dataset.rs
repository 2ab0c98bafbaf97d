use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Row-major feature matrix with aligned targets.
///
/// `alt_y` is either empty (no alternative ground truths anywhere) or has
/// one entry per row holding up to two alternative targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset<T> {
    feature_names: Vec<String>,
    x: Vec<T>,
    y: Vec<T>,
    alt_y: Vec<Vec<T>>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DatasetError {
    #[error("row {row} has {got} features, expected {expected}")]
    RowWidth { row: usize, got: usize, expected: usize },
    #[error("{what} has {got} rows, expected {expected}")]
    Misaligned {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("row {row} carries {got} alternative targets (at most 2)")]
    TooManyAlternatives { row: usize, got: usize },
    #[error("non-finite value at row {row}")]
    NonFinite { row: usize },
}

impl<T: Scalar> Dataset<T> {
    pub fn new(
        feature_names: Vec<String>,
        rows: Vec<Vec<T>>,
        y: Vec<T>,
        alt_y: Vec<Vec<T>>,
    ) -> Result<Self, DatasetError> {
        let d = feature_names.len();
        if y.len() != rows.len() {
            return Err(DatasetError::Misaligned {
                what: "y",
                got: y.len(),
                expected: rows.len(),
            });
        }
        if !alt_y.is_empty() && alt_y.len() != rows.len() {
            return Err(DatasetError::Misaligned {
                what: "alt_y",
                got: alt_y.len(),
                expected: rows.len(),
            });
        }
        let mut x = Vec::with_capacity(rows.len() * d);
        for (row, r) in rows.iter().enumerate() {
            if r.len() != d {
                return Err(DatasetError::RowWidth {
                    row,
                    got: r.len(),
                    expected: d,
                });
            }
            if r.iter().any(|v| !v.is_finite()) || !y[row].is_finite() {
                return Err(DatasetError::NonFinite { row });
            }
            x.extend_from_slice(r);
        }
        for (row, a) in alt_y.iter().enumerate() {
            if a.len() > 2 {
                return Err(DatasetError::TooManyAlternatives { row, got: a.len() });
            }
        }
        let alt_y = if alt_y.iter().all(Vec::is_empty) {
            Vec::new()
        } else {
            alt_y
        };
        Ok(Self {
            feature_names,
            x,
            y,
            alt_y,
        })
    }

    /// Dataset without alternative targets.
    pub fn from_rows(
        feature_names: Vec<String>,
        rows: Vec<Vec<T>>,
        y: Vec<T>,
    ) -> Result<Self, DatasetError> {
        Self::new(feature_names, rows, y, Vec::new())
    }

    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn row(&self, i: usize) -> &[T] {
        let d = self.n_features();
        &self.x[i * d..(i + 1) * d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        (0..self.n_rows()).map(move |i| self.row(i))
    }

    pub fn value(&self, row: usize, feature: usize) -> T {
        self.x[row * self.n_features() + feature]
    }

    pub fn y(&self) -> &[T] {
        &self.y
    }

    /// Per-row alternative targets; empty slice when the dataset has none.
    pub fn alt_y(&self) -> &[Vec<T>] {
        &self.alt_y
    }

    pub fn has_alternatives(&self) -> bool {
        !self.alt_y.is_empty()
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let d = self.n_features();
        let mut x = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            x.extend_from_slice(self.row(i));
        }
        let alt_y = if self.alt_y.is_empty() {
            Vec::new()
        } else {
            indices.iter().map(|&i| self.alt_y[i].clone()).collect()
        };
        let alt_y = if alt_y.iter().all(Vec::is_empty) {
            Vec::new()
        } else {
            alt_y
        };
        Self {
            feature_names: self.feature_names.clone(),
            x,
            y: indices.iter().map(|&i| self.y[i]).collect(),
            alt_y,
        }
    }

    /// Same rows with every feature value mapped through `f(feature, value)`.
    pub fn map_features(&self, f: impl Fn(usize, T) -> T) -> Self {
        let d = self.n_features();
        let x = self
            .x
            .iter()
            .enumerate()
            .map(|(k, &v)| f(k % d, v))
            .collect();
        Self {
            x,
            ..self.clone()
        }
    }

    /// Converts to another scalar type.
    pub fn cast<U: Scalar>(&self) -> Dataset<U> {
        let c = |v: &T| U::lit(v.as_f64());
        Dataset {
            feature_names: self.feature_names.clone(),
            x: self.x.iter().map(c).collect(),
            y: self.y.iter().map(c).collect(),
            alt_y: self
                .alt_y
                .iter()
                .map(|a| a.iter().map(c).collect())
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("f{i}")).collect()
    }

    #[test]
    fn rejects_misaligned_rows() {
        let err = Dataset::<f64>::from_rows(names(2), vec![vec![1.0, 2.0], vec![1.0]], vec![0.0, 1.0])
            .unwrap_err();
        assert_eq!(err, DatasetError::RowWidth { row: 1, got: 1, expected: 2 });
        let err = Dataset::<f64>::from_rows(names(1), vec![vec![1.0]], vec![]).unwrap_err();
        assert!(matches!(err, DatasetError::Misaligned { what: "y", .. }));
        let err = Dataset::<f64>::from_rows(names(1), vec![vec![f64::NAN]], vec![0.0]).unwrap_err();
        assert_eq!(err, DatasetError::NonFinite { row: 0 });
    }

    #[test]
    fn empty_alternatives_collapse() {
        let ds = Dataset::<f64>::new(names(1), vec![vec![1.0], vec![2.0]], vec![1.0, 2.0], vec![vec![], vec![]])
            .unwrap();
        assert!(!ds.has_alternatives());
        let ds = Dataset::<f64>::new(names(1), vec![vec![1.0], vec![2.0]], vec![1.0, 2.0], vec![vec![], vec![3.0]])
            .unwrap();
        assert!(ds.has_alternatives());
        assert!(!ds.subset(&[0]).has_alternatives());
        assert_eq!(ds.subset(&[1, 0]).y(), &[2.0, 1.0]);
    }

    #[test]
    fn cast_preserves_values() {
        let ds = Dataset::<f64>::from_rows(names(2), vec![vec![1.5, -2.0]], vec![3.0]).unwrap();
        let f: Dataset<f32> = ds.cast();
        assert_eq!(f.row(0), &[1.5f32, -2.0]);
    }
}
