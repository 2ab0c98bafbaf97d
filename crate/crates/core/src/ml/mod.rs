//! Regression and classification models with a uniform train/predict contract.
//!
//! All models are deterministic functions of (dataset, hyperparameters);
//! the seed is carried in the artifact metadata for provenance only.

mod artifact;
pub mod gbm;
mod knn;
mod linalg;
mod logistic;
mod ridge;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Dataset;
use crate::scalar::Scalar;
use crate::timeutil::DateRange;

pub use artifact::{ArtifactError, ARTIFACT_SCHEMA_VERSION};
pub use gbm::{GbmTrace, Node};
pub use linalg::solve_linear_system;

/// Registry of model kinds. Declaration order is the tie-break order used by
/// model selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ModelKind {
    Mean,
    Ridge,
    Knn,
    Gbm,
    Logistic,
}

impl ModelKind {
    pub const REGRESSORS: [ModelKind; 4] =
        [ModelKind::Mean, ModelKind::Ridge, ModelKind::Knn, ModelKind::Gbm];

    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Mean => "MEAN",
            ModelKind::Ridge => "RIDGE",
            ModelKind::Knn => "KNN",
            ModelKind::Gbm => "GBM",
            ModelKind::Logistic => "LOGISTIC",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "MEAN" => Ok(ModelKind::Mean),
            "RIDGE" => Ok(ModelKind::Ridge),
            "KNN" => Ok(ModelKind::Knn),
            "GBM" => Ok(ModelKind::Gbm),
            "LOGISTIC" => Ok(ModelKind::Logistic),
            _ => Err(ModelError::BadHyper(format!("unknown model kind `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbmHyper {
    pub rounds: usize,
    pub max_depth: usize,
    pub shrinkage: f64,
    pub min_samples_leaf: usize,
}

impl Default for GbmHyper {
    fn default() -> Self {
        Self {
            rounds: 300,
            max_depth: 3,
            shrinkage: 0.1,
            min_samples_leaf: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticHyper {
    pub step: f64,
    pub max_iter: usize,
    pub l2: f64,
}

impl Default for LogisticHyper {
    fn default() -> Self {
        Self {
            step: 0.5,
            max_iter: 500,
            l2: 1e-4,
        }
    }
}

/// Kind-specific hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Hyper {
    Mean,
    Ridge { lambda: f64 },
    Knn { k: usize },
    Gbm(GbmHyper),
    Logistic(LogisticHyper),
}

impl Hyper {
    pub fn kind(&self) -> ModelKind {
        match self {
            Hyper::Mean => ModelKind::Mean,
            Hyper::Ridge { .. } => ModelKind::Ridge,
            Hyper::Knn { .. } => ModelKind::Knn,
            Hyper::Gbm(_) => ModelKind::Gbm,
            Hyper::Logistic(_) => ModelKind::Logistic,
        }
    }

    /// Defaults for each kind.
    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Mean => Hyper::Mean,
            ModelKind::Ridge => Hyper::Ridge { lambda: 1.0 },
            ModelKind::Knn => Hyper::Knn { k: 10 },
            ModelKind::Gbm => Hyper::Gbm(GbmHyper::default()),
            ModelKind::Logistic => Hyper::Logistic(LogisticHyper::default()),
        }
    }

    fn validate(&self, n_rows: usize) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::BadHyper(m));
        match *self {
            Hyper::Mean => Ok(()),
            Hyper::Ridge { lambda } if !(lambda.is_finite() && lambda >= 0.0) => {
                bad(format!("ridge lambda must be finite and >= 0, got {lambda}"))
            }
            Hyper::Ridge { .. } => Ok(()),
            Hyper::Knn { k } if k == 0 || k > n_rows => {
                bad(format!("knn k must be in 1..={n_rows}, got {k}"))
            }
            Hyper::Knn { .. } => Ok(()),
            Hyper::Gbm(h) => {
                if !(1..=10_000).contains(&h.rounds) {
                    bad(format!("gbm rounds must be in 1..=10000, got {}", h.rounds))
                } else if !(1..=16).contains(&h.max_depth) {
                    bad(format!("gbm depth must be in 1..=16, got {}", h.max_depth))
                } else if !(h.shrinkage > 0.0 && h.shrinkage <= 1.0) {
                    bad(format!("gbm shrinkage must be in (0, 1], got {}", h.shrinkage))
                } else if h.min_samples_leaf == 0 {
                    bad("gbm min_samples_leaf must be >= 1".into())
                } else {
                    Ok(())
                }
            }
            Hyper::Logistic(h) => {
                if !(h.step > 0.0 && h.step.is_finite()) {
                    bad(format!("logistic step must be > 0, got {}", h.step))
                } else if h.max_iter == 0 {
                    bad("logistic max_iter must be >= 1".into())
                } else if !(h.l2 >= 0.0 && h.l2.is_finite()) {
                    bad(format!("logistic l2 must be >= 0, got {}", h.l2))
                } else {
                    Ok(())
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("empty dataset")]
    EmptyDataset,
    #[error("singular normal equations (rank-deficient features with lambda = 0)")]
    SingularSystem,
    #[error("bad hyperparameters: {0}")]
    BadHyper(String),
    #[error("feature schema mismatch: expected {expected} features, got {got}")]
    SchemaMismatch { expected: usize, got: usize },
    #[error("model kind {0} is not a classifier")]
    NotClassifier(ModelKind),
    #[error("class label {0} is not a non-negative integer")]
    BadLabel(String),
}

/// Ordered feature names plus the standardization constants learned on the
/// training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema<T> {
    pub names: Vec<String>,
    pub mean: Vec<T>,
    pub scale: Vec<T>,
}

impl<T: Scalar> FeatureSchema<T> {
    /// Column means and population standard deviations; zero-variance
    /// columns get scale 1.
    pub fn fit(ds: &Dataset<T>) -> Self {
        let n = T::from_usize_lossy(ds.n_rows());
        let d = ds.n_features();
        let mut mean = vec![T::zero(); d];
        for row in ds.rows() {
            for (m, &v) in mean.iter_mut().zip(row) {
                *m = *m + v;
            }
        }
        for m in &mut mean {
            *m = *m / n;
        }
        let mut var = vec![T::zero(); d];
        for row in ds.rows() {
            for ((s, &v), &m) in var.iter_mut().zip(row).zip(&mean) {
                *s = *s + (v - m) * (v - m);
            }
        }
        let scale = var
            .into_iter()
            .zip(&mean)
            .map(|(s, &m)| {
                let sd = (s / n).sqrt();
                let tiny = T::epsilon().sqrt() * (T::one() + m.abs());
                if sd > tiny {
                    sd
                } else {
                    T::one()
                }
            })
            .collect();
        Self {
            names: ds.feature_names().to_vec(),
            mean,
            scale,
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn standardize_into(&self, x: &[T], out: &mut [T]) {
        for (((o, &v), &m), &s) in out.iter_mut().zip(x).zip(&self.mean).zip(&self.scale) {
            *o = (v - m) / s;
        }
    }

    pub fn standardize(&self, x: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); x.len()];
        self.standardize_into(x, &mut out);
        out
    }
}

/// Kind-specific learned parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelParams<T> {
    Mean {
        value: T,
    },
    /// Weights and intercept in the original (unstandardized) feature space.
    Ridge {
        weights: Vec<T>,
        intercept: T,
        lambda: f64,
    },
    /// Training rows stored standardized.
    Knn {
        k: usize,
        x: Vec<Vec<T>>,
        y: Vec<T>,
    },
    Gbm {
        init: T,
        shrinkage: f64,
        max_depth: usize,
        min_samples_leaf: usize,
        trees: Vec<Node<T>>,
    },
    /// One weight row and intercept per class; classes sorted by label.
    Logistic {
        classes: Vec<String>,
        weights: Vec<Vec<T>>,
        intercepts: Vec<T>,
        single_class: bool,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub samples: usize,
    pub seed: u64,
}

/// Immutable trained model artifact.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel<T> {
    pub model_kind: ModelKind,
    pub feature_schema: FeatureSchema<T>,
    pub params: ModelParams<T>,
    pub train_meta: TrainMeta,
    pub trained_range: Option<DateRange>,
    pub sector_id: Option<String>,
    pub target: Option<String>,
}

impl<T: Scalar> TrainedModel<T> {
    /// Attaches provenance (range, sector, target) to a freshly trained model.
    pub fn with_provenance(
        mut self,
        trained_range: Option<DateRange>,
        sector_id: Option<String>,
        target: Option<String>,
    ) -> Self {
        self.trained_range = trained_range;
        self.sector_id = sector_id;
        self.target = target;
        self
    }

    pub fn n_features(&self) -> usize {
        self.feature_schema.len()
    }

    pub fn is_classifier(&self) -> bool {
        self.model_kind == ModelKind::Logistic
    }

    fn check_width(&self, x: &[T]) -> Result<(), ModelError> {
        if x.len() != self.n_features() {
            return Err(ModelError::SchemaMismatch {
                expected: self.n_features(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Raw model output before the non-negativity clamp. For classifiers,
    /// the predicted class index.
    pub fn predict_raw(&self, x: &[T]) -> Result<T, ModelError> {
        self.check_width(x)?;
        let out = match &self.params {
            ModelParams::Mean { value } => *value,
            ModelParams::Ridge {
                weights, intercept, ..
            } => ridge::predict(weights, *intercept, x),
            ModelParams::Knn { k, x: train_x, y } => {
                knn::predict(&self.feature_schema, *k, train_x, y, x)
            }
            ModelParams::Gbm {
                init,
                shrinkage,
                trees,
                ..
            } => gbm::predict(*init, T::lit(*shrinkage), trees, x),
            ModelParams::Logistic { .. } => {
                let (label, _) = self.predict_class(x)?;
                T::from_usize_lossy(label)
            }
        };
        Ok(out)
    }

    /// Real-valued prediction clamped at 0.
    pub fn predict(&self, x: &[T]) -> Result<T, ModelError> {
        self.predict_raw(x).map(|v| v.max(T::zero()))
    }

    /// Class index (into `classes()`) and the probability vector.
    pub fn predict_class(&self, x: &[T]) -> Result<(usize, Vec<T>), ModelError> {
        self.check_width(x)?;
        match &self.params {
            ModelParams::Logistic {
                weights,
                intercepts,
                ..
            } => Ok(logistic::predict(&self.feature_schema, weights, intercepts, x)),
            _ => Err(ModelError::NotClassifier(self.model_kind)),
        }
    }

    /// Class labels of a classifier, sorted ascending.
    pub fn classes(&self) -> &[String] {
        match &self.params {
            ModelParams::Logistic { classes, .. } => classes,
            _ => &[],
        }
    }

    pub fn is_single_class(&self) -> bool {
        matches!(&self.params, ModelParams::Logistic { single_class: true, .. })
    }
}

fn finish<T: Scalar>(
    kind: ModelKind,
    schema: FeatureSchema<T>,
    params: ModelParams<T>,
    samples: usize,
    seed: u64,
) -> TrainedModel<T> {
    TrainedModel {
        model_kind: kind,
        feature_schema: schema,
        params,
        train_meta: TrainMeta { samples, seed },
        trained_range: None,
        sector_id: None,
        target: None,
    }
}

/// Trains a model of the kind selected by `hyper`.
///
/// For `Hyper::Logistic` the targets are interpreted as non-negative integer
/// class ids; use [`train_classifier`] for string labels.
pub fn train<T: Scalar>(
    dataset: &Dataset<T>,
    hyper: &Hyper,
    seed: u64,
) -> Result<TrainedModel<T>, ModelError> {
    if dataset.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    hyper.validate(dataset.n_rows())?;
    let schema = FeatureSchema::fit(dataset);
    let kind = hyper.kind();
    let params = match *hyper {
        Hyper::Mean => {
            let n = T::from_usize_lossy(dataset.n_rows());
            ModelParams::Mean {
                value: dataset.y().iter().copied().sum::<T>() / n,
            }
        }
        Hyper::Ridge { lambda } => ridge::fit(dataset, &schema, lambda)?,
        Hyper::Knn { k } => knn::fit(dataset, &schema, k),
        Hyper::Gbm(h) => gbm::fit(dataset, &h, None).0,
        Hyper::Logistic(h) => {
            let labels = dataset
                .y()
                .iter()
                .map(|v| {
                    let f = v.as_f64();
                    if f >= 0.0 && f.fract() == 0.0 {
                        Ok(format!("{}", f as u64))
                    } else {
                        Err(ModelError::BadLabel(v.to_string()))
                    }
                })
                .collect::<Result<Vec<_>, _>>()?;
            logistic::fit(dataset, &schema, &labels, &h)
        }
    };
    Ok(finish(kind, schema, params, dataset.n_rows(), seed))
}

/// Trains a GBM and returns the per-round training SSE alongside it.
pub fn train_gbm_traced<T: Scalar>(
    dataset: &Dataset<T>,
    hyper: &GbmHyper,
    seed: u64,
) -> Result<(TrainedModel<T>, GbmTrace<T>), ModelError> {
    if dataset.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    Hyper::Gbm(*hyper).validate(dataset.n_rows())?;
    let schema = FeatureSchema::fit(dataset);
    let mut trace = GbmTrace::default();
    let (params, _) = gbm::fit(dataset, hyper, Some(&mut trace));
    Ok((
        finish(ModelKind::Gbm, schema, params, dataset.n_rows(), seed),
        trace,
    ))
}

/// Multinomial logistic regression on string labels. Targets in `dataset`
/// are ignored. A single distinct label yields a constant classifier.
pub fn train_classifier<T: Scalar>(
    dataset: &Dataset<T>,
    labels: &[String],
    hyper: &LogisticHyper,
    seed: u64,
) -> Result<TrainedModel<T>, ModelError> {
    if dataset.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    if labels.len() != dataset.n_rows() {
        return Err(ModelError::SchemaMismatch {
            expected: dataset.n_rows(),
            got: labels.len(),
        });
    }
    Hyper::Logistic(*hyper).validate(dataset.n_rows())?;
    let schema = FeatureSchema::fit(dataset);
    let params = logistic::fit(dataset, &schema, labels, hyper);
    Ok(finish(
        ModelKind::Logistic,
        schema,
        params,
        dataset.n_rows(),
        seed,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(rows: Vec<Vec<f64>>, y: Vec<f64>) -> Dataset<f64> {
        let d = rows.first().map_or(0, Vec::len);
        Dataset::from_rows((0..d).map(|i| format!("x{i}")).collect(), rows, y).unwrap()
    }

    #[test]
    fn mean_model_is_constant() {
        let data = ds(vec![vec![1.0], vec![2.0], vec![3.0]], vec![2.0, 4.0, 6.0]);
        let m = train(&data, &Hyper::Mean, 0).unwrap();
        assert_eq!(m.predict(&[1.0]).unwrap(), 4.0);
        assert_eq!(m.predict(&[-100.0]).unwrap(), 4.0);
    }

    #[test]
    fn ridge_recovers_exact_line() {
        let xs = [[0.0, 3.0], [1.0, -1.0], [2.0, 4.0], [3.0, 0.5], [4.0, 2.0]];
        let rows: Vec<Vec<f64>> = xs.iter().map(|r| r.to_vec()).collect();
        let y: Vec<f64> = xs.iter().map(|r| 2.0 * r[0] + 1.0).collect();
        let m = train(&ds(rows, y), &Hyper::Ridge { lambda: 0.0 }, 0).unwrap();
        let ModelParams::Ridge {
            weights, intercept, ..
        } = &m.params
        else {
            panic!("ridge params expected");
        };
        assert!((weights[0] - 2.0).abs() < 1e-9);
        assert!(weights[1].abs() < 1e-9);
        assert!((intercept - 1.0).abs() < 1e-9);
    }

    #[test]
    fn ridge_rank_deficient_is_singular() {
        let rows = vec![vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0], vec![4.0, 8.0]];
        let err = train(&ds(rows, vec![1.0, 2.0, 3.0, 4.0]), &Hyper::Ridge { lambda: 0.0 }, 0)
            .unwrap_err();
        assert_eq!(err, ModelError::SingularSystem);
    }

    #[test]
    fn negative_output_is_clamped() {
        let rows = vec![vec![0.0], vec![1.0], vec![2.0]];
        let m = train(&ds(rows, vec![1.0, 0.0, -1.0]), &Hyper::Ridge { lambda: 0.0 }, 0).unwrap();
        let raw = m.predict_raw(&[1.3]).unwrap();
        assert!((raw + 0.3).abs() < 1e-12);
        assert_eq!(m.predict(&[1.3]).unwrap(), 0.0);
    }

    #[test]
    fn knn_k1_returns_training_target() {
        let rows = vec![vec![0.0, 1.0], vec![5.0, 2.0], vec![3.0, -4.0]];
        let m = train(&ds(rows.clone(), vec![7.0, 9.0, 11.0]), &Hyper::Knn { k: 1 }, 0).unwrap();
        for (r, want) in rows.iter().zip([7.0, 9.0, 11.0]) {
            assert_eq!(m.predict(r).unwrap(), want);
        }
    }

    #[test]
    fn width_mismatch_is_schema_error() {
        let m = train(&ds(vec![vec![1.0, 2.0]], vec![1.0]), &Hyper::Mean, 0).unwrap();
        assert_eq!(
            m.predict(&[1.0]).unwrap_err(),
            ModelError::SchemaMismatch { expected: 2, got: 1 }
        );
    }

    #[test]
    fn bad_hyper_and_empty() {
        let data = ds(vec![vec![1.0]], vec![1.0]);
        assert!(matches!(
            train(&data, &Hyper::Knn { k: 2 }, 0),
            Err(ModelError::BadHyper(_))
        ));
        assert!(matches!(
            train(&data, &Hyper::Ridge { lambda: -1.0 }, 0),
            Err(ModelError::BadHyper(_))
        ));
        let empty = Dataset::<f64>::from_rows(vec!["x".into()], vec![], vec![]).unwrap();
        assert_eq!(train(&empty, &Hyper::Mean, 0).unwrap_err(), ModelError::EmptyDataset);
    }

    #[test]
    fn classifier_on_separable_classes() {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..100 {
            let t = f64::from(i) / 10.0;
            let class = i % 2;
            let x = if class == 0 { -1.0 - t * 0.1 } else { 1.0 + t * 0.1 };
            rows.push(vec![x, t]);
            labels.push(if class == 0 { "EAST" } else { "WEST" }.to_string());
        }
        let data = ds(rows.clone(), vec![0.0; 100]);
        let m = train_classifier(&data, &labels, &LogisticHyper::default(), 0).unwrap();
        assert_eq!(m.classes(), &["EAST".to_string(), "WEST".to_string()]);
        let correct = rows
            .iter()
            .zip(&labels)
            .filter(|(r, l)| m.classes()[m.predict_class(r).unwrap().0] == **l)
            .count();
        assert_eq!(correct, 100);
    }

    #[test]
    fn single_class_is_constant() {
        let data = ds(vec![vec![1.0], vec![2.0]], vec![0.0, 0.0]);
        let labels = vec!["WEST".to_string(), "WEST".to_string()];
        let m = train_classifier(&data, &labels, &LogisticHyper::default(), 0).unwrap();
        assert!(m.is_single_class());
        let (c, p) = m.predict_class(&[100.0]).unwrap();
        assert_eq!(c, 0);
        assert_eq!(p, vec![1.0]);
    }

    #[test]
    fn regressor_is_not_a_classifier() {
        let m = train(&ds(vec![vec![1.0]], vec![1.0]), &Hyper::Mean, 0).unwrap();
        assert_eq!(
            m.predict_class(&[1.0]).unwrap_err(),
            ModelError::NotClassifier(ModelKind::Mean)
        );
    }

    #[test]
    fn integer_targets_train_logistic() {
        let data = ds(
            vec![vec![-2.0], vec![-1.0], vec![1.0], vec![2.0]],
            vec![0.0, 0.0, 1.0, 1.0],
        );
        let m = train(&data, &Hyper::default_for(ModelKind::Logistic), 0).unwrap();
        assert_eq!(m.predict(&[3.0]).unwrap(), 1.0);
        let bad = ds(vec![vec![0.0]], vec![0.5]);
        assert!(matches!(
            train(&bad, &Hyper::default_for(ModelKind::Logistic), 0),
            Err(ModelError::BadLabel(_))
        ));
    }
}
