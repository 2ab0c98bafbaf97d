use std::cmp::Ordering;

use super::{FeatureSchema, ModelParams};
use crate::dataset::Dataset;
use crate::scalar::Scalar;

pub(super) fn fit<T: Scalar>(ds: &Dataset<T>, schema: &FeatureSchema<T>, k: usize) -> ModelParams<T> {
    ModelParams::Knn {
        k,
        x: ds.rows().map(|r| schema.standardize(r)).collect(),
        y: ds.y().to_vec(),
    }
}

/// Mean target of the `k` nearest stored rows (Euclidean distance on
/// standardized features; ties broken by lower row index).
pub(super) fn predict<T: Scalar>(
    schema: &FeatureSchema<T>,
    k: usize,
    train_x: &[Vec<T>],
    train_y: &[T],
    x: &[T],
) -> T {
    let q = schema.standardize(x);
    let mut dist: Vec<(T, usize)> = train_x
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let d2 = r
                .iter()
                .zip(&q)
                .fold(T::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b));
            (d2, i)
        })
        .collect();
    let k = k.min(dist.len());
    let cmp = |a: &(T, usize), b: &(T, usize)| {
        a.0.partial_cmp(&b.0)
            .unwrap_or(Ordering::Equal)
            .then(a.1.cmp(&b.1))
    };
    if k < dist.len() {
        dist.select_nth_unstable_by(k - 1, cmp);
    }
    let sum: T = dist[..k].iter().map(|&(_, i)| train_y[i]).sum();
    sum / T::from_usize_lossy(k)
}
