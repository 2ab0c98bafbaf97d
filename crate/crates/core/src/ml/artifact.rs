//! JSON encoding of model artifacts.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::{FeatureSchema, ModelKind, ModelParams, Node, TrainMeta, TrainedModel};
use crate::scalar::Scalar;
use crate::timeutil::DateRange;

pub const ARTIFACT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ArtifactError {
    #[error("artifact is not valid JSON: {0}")]
    Json(String),
    #[error("artifact schema mismatch: {0}")]
    SchemaMismatch(String),
}

#[derive(Serialize)]
struct ArtifactOut<'a, T> {
    schema_version: u32,
    model_kind: ModelKind,
    feature_schema: &'a FeatureSchema<T>,
    params: &'a ModelParams<T>,
    trained_range: Option<DateRange>,
    sector_id: Option<&'a str>,
    target: Option<&'a str>,
    train_meta: &'a TrainMeta,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ArtifactIn {
    schema_version: u32,
    model_kind: String,
    feature_schema: Value,
    params: Value,
    trained_range: Option<DateRange>,
    sector_id: Option<String>,
    target: Option<String>,
    train_meta: TrainMeta,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MeanIn<T> {
    value: T,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RidgeIn<T> {
    weights: Vec<T>,
    intercept: T,
    lambda: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct KnnIn<T> {
    k: usize,
    x: Vec<Vec<T>>,
    y: Vec<T>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GbmIn<T> {
    init: T,
    shrinkage: f64,
    max_depth: usize,
    min_samples_leaf: usize,
    trees: Vec<Node<T>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LogisticIn<T> {
    classes: Vec<String>,
    weights: Vec<Vec<T>>,
    intercepts: Vec<T>,
    single_class: bool,
}

fn mismatch(msg: impl Into<String>) -> ArtifactError {
    ArtifactError::SchemaMismatch(msg.into())
}

fn part<P: DeserializeOwned>(v: Value, what: &str) -> Result<P, ArtifactError> {
    serde_json::from_value(v).map_err(|e| mismatch(format!("{what}: {e}")))
}

fn node_ok<T>(node: &Node<T>, d: usize) -> bool {
    match node {
        Node::Leaf { .. } => true,
        Node::Split {
            feature,
            left,
            right,
            ..
        } => *feature < d && node_ok(left, d) && node_ok(right, d),
    }
}

impl<T: Scalar> TrainedModel<T> {
    /// Serializes to the artifact JSON document.
    pub fn to_json(&self) -> String {
        let out = ArtifactOut {
            schema_version: ARTIFACT_SCHEMA_VERSION,
            model_kind: self.model_kind,
            feature_schema: &self.feature_schema,
            params: &self.params,
            trained_range: self.trained_range,
            sector_id: self.sector_id.as_deref(),
            target: self.target.as_deref(),
            train_meta: &self.train_meta,
        };
        serde_json::to_string(&out).expect("artifact serialization is infallible")
    }

    /// Parses and validates an artifact document.
    pub fn from_json(text: &str) -> Result<Self, ArtifactError> {
        let raw: ArtifactIn =
            serde_json::from_str(text).map_err(|e| ArtifactError::Json(e.to_string()))?;
        if raw.schema_version != ARTIFACT_SCHEMA_VERSION {
            return Err(mismatch(format!(
                "schema_version {} (expected {ARTIFACT_SCHEMA_VERSION})",
                raw.schema_version
            )));
        }
        let model_kind: ModelKind = serde_json::from_value(Value::String(raw.model_kind.clone()))
            .map_err(|_| mismatch(format!("unknown model_kind `{}`", raw.model_kind)))?;
        let feature_schema: FeatureSchema<T> = part(raw.feature_schema, "feature_schema")?;
        let d = feature_schema.names.len();
        if feature_schema.mean.len() != d || feature_schema.scale.len() != d {
            return Err(mismatch("feature_schema constants do not match names"));
        }

        let params = match model_kind {
            ModelKind::Mean => {
                let p: MeanIn<T> = part(raw.params, "MEAN params")?;
                ModelParams::Mean { value: p.value }
            }
            ModelKind::Ridge => {
                let p: RidgeIn<T> = part(raw.params, "RIDGE params")?;
                if p.weights.len() != d {
                    return Err(mismatch("ridge weight count differs from feature count"));
                }
                ModelParams::Ridge {
                    weights: p.weights,
                    intercept: p.intercept,
                    lambda: p.lambda,
                }
            }
            ModelKind::Knn => {
                let p: KnnIn<T> = part(raw.params, "KNN params")?;
                if p.x.len() != p.y.len() || p.x.iter().any(|r| r.len() != d) || p.k == 0 {
                    return Err(mismatch("knn stored data is inconsistent"));
                }
                ModelParams::Knn {
                    k: p.k,
                    x: p.x,
                    y: p.y,
                }
            }
            ModelKind::Gbm => {
                let p: GbmIn<T> = part(raw.params, "GBM params")?;
                if !p.trees.iter().all(|t| node_ok(t, d) && t.depth() <= p.max_depth) {
                    return Err(mismatch("gbm tree references unknown feature or exceeds depth"));
                }
                ModelParams::Gbm {
                    init: p.init,
                    shrinkage: p.shrinkage,
                    max_depth: p.max_depth,
                    min_samples_leaf: p.min_samples_leaf,
                    trees: p.trees,
                }
            }
            ModelKind::Logistic => {
                let p: LogisticIn<T> = part(raw.params, "LOGISTIC params")?;
                let c = p.classes.len();
                if c == 0
                    || p.weights.len() != c
                    || p.intercepts.len() != c
                    || p.weights.iter().any(|w| w.len() != d)
                {
                    return Err(mismatch("logistic weights do not match classes/features"));
                }
                ModelParams::Logistic {
                    classes: p.classes,
                    weights: p.weights,
                    intercepts: p.intercepts,
                    single_class: p.single_class,
                }
            }
        };
        Ok(TrainedModel {
            model_kind,
            feature_schema,
            params,
            train_meta: raw.train_meta,
            trained_range: raw.trained_range,
            sector_id: raw.sector_id,
            target: raw.target,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Dataset;
    use crate::ml::{train, GbmHyper, Hyper};

    fn sample() -> Dataset<f64> {
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![f64::from(i) * 0.25, f64::from(i % 3)])
            .collect();
        let y = (0..40).map(|i| f64::from(i % 7) + 0.125).collect();
        Dataset::from_rows(vec!["a".into(), "b".into()], rows, y).unwrap()
    }

    #[test]
    fn every_kind_round_trips_byte_identically() {
        let ds = sample();
        let hypers = [
            Hyper::Mean,
            Hyper::Ridge { lambda: 0.5 },
            Hyper::Knn { k: 3 },
            Hyper::Gbm(GbmHyper {
                rounds: 5,
                ..GbmHyper::default()
            }),
        ];
        for h in hypers {
            let m = train(&ds, &h, 7).unwrap();
            let text = m.to_json();
            let back = TrainedModel::<f64>::from_json(&text).unwrap();
            assert_eq!(back, m);
            assert_eq!(back.to_json(), text);
        }
    }

    #[test]
    fn gbm_nodes_use_nested_layout() {
        let h = Hyper::Gbm(GbmHyper {
            rounds: 1,
            max_depth: 1,
            shrinkage: 0.1,
            min_samples_leaf: 1,
        });
        let text = train(&sample(), &h, 0).unwrap().to_json();
        let v: Value = serde_json::from_str(&text).unwrap();
        let tree = &v["params"]["trees"][0];
        assert!(tree.get("feature").is_some() && tree.get("threshold").is_some());
        assert!(tree["left"].get("leaf").is_some());
    }

    #[test]
    fn unknown_kind_is_schema_mismatch() {
        let m = train(&sample(), &Hyper::Mean, 0).unwrap();
        let text = m.to_json().replace("\"MEAN\"", "\"PERCEPTRON\"");
        assert!(matches!(
            TrainedModel::<f64>::from_json(&text),
            Err(ArtifactError::SchemaMismatch(_))
        ));
        assert!(matches!(
            TrainedModel::<f64>::from_json("{"),
            Err(ArtifactError::Json(_))
        ));
    }

    #[test]
    fn params_must_match_kind() {
        let m = train(&sample(), &Hyper::Mean, 0).unwrap();
        let text = m.to_json().replace("\"MEAN\"", "\"RIDGE\"");
        assert!(matches!(
            TrainedModel::<f64>::from_json(&text),
            Err(ArtifactError::SchemaMismatch(_))
        ));
    }

    #[test]
    fn f32_artifacts_round_trip() {
        let ds: Dataset<f32> = sample().cast();
        let m = train(&ds, &Hyper::Ridge { lambda: 0.1 }, 0).unwrap();
        let back = TrainedModel::<f32>::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
    }
}
