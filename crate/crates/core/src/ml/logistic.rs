use std::collections::BTreeSet;

use super::{FeatureSchema, LogisticHyper, ModelParams};
use crate::dataset::Dataset;
use crate::scalar::Scalar;

/// Full-batch gradient descent on the L2-regularized softmax cross-entropy,
/// over standardized features. Classes are the sorted distinct labels.
pub(super) fn fit<T: Scalar>(
    ds: &Dataset<T>,
    schema: &FeatureSchema<T>,
    labels: &[String],
    h: &LogisticHyper,
) -> ModelParams<T> {
    let classes: Vec<String> = labels
        .iter()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let d = ds.n_features();
    let c = classes.len();
    if c == 1 {
        return ModelParams::Logistic {
            classes,
            weights: vec![vec![T::zero(); d]],
            intercepts: vec![T::zero()],
            single_class: true,
        };
    }
    let target: Vec<usize> = labels
        .iter()
        .map(|l| classes.binary_search(l).expect("label in class set"))
        .collect();
    let z: Vec<Vec<T>> = ds.rows().map(|r| schema.standardize(r)).collect();
    let n = T::from_usize_lossy(z.len());
    let step = T::lit(h.step);
    let l2 = T::lit(h.l2);

    let mut w = vec![vec![T::zero(); d]; c];
    let mut b = vec![T::zero(); c];
    let mut gw = vec![vec![T::zero(); d]; c];
    let mut gb = vec![T::zero(); c];
    let mut p = vec![T::zero(); c];
    for _ in 0..h.max_iter {
        gw.iter_mut().for_each(|g| g.iter_mut().for_each(|v| *v = T::zero()));
        gb.iter_mut().for_each(|v| *v = T::zero());
        for (row, &t) in z.iter().zip(&target) {
            softmax_into(&w, &b, row, &mut p);
            for k in 0..c {
                let err = if k == t { p[k] - T::one() } else { p[k] };
                gb[k] = gb[k] + err;
                for (g, &x) in gw[k].iter_mut().zip(row) {
                    *g = *g + err * x;
                }
            }
        }
        for k in 0..c {
            b[k] = b[k] - step * gb[k] / n;
            for j in 0..d {
                let g = gw[k][j] / n + l2 * w[k][j];
                w[k][j] = w[k][j] - step * g;
            }
        }
    }
    ModelParams::Logistic {
        classes,
        weights: w,
        intercepts: b,
        single_class: false,
    }
}

fn softmax_into<T: Scalar>(w: &[Vec<T>], b: &[T], z: &[T], out: &mut [T]) {
    for (k, o) in out.iter_mut().enumerate() {
        *o = w[k].iter().zip(z).fold(b[k], |acc, (&wi, &zi)| acc + wi * zi);
    }
    let max = out.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for o in out.iter_mut() {
        *o = (*o - max).exp();
        total = total + *o;
    }
    for o in out.iter_mut() {
        *o = *o / total;
    }
}

/// Argmax class (lowest index on ties) and class probabilities.
pub(super) fn predict<T: Scalar>(
    schema: &FeatureSchema<T>,
    w: &[Vec<T>],
    b: &[T],
    x: &[T],
) -> (usize, Vec<T>) {
    let z = schema.standardize(x);
    let mut p = vec![T::zero(); w.len()];
    softmax_into(w, b, &z, &mut p);
    (argmax(&p), p)
}

pub(crate) fn argmax<T: Scalar>(p: &[T]) -> usize {
    let mut best = 0;
    for (k, &v) in p.iter().enumerate().skip(1) {
        if v > p[best] {
            best = k;
        }
    }
    best
}
