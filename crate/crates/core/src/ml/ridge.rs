use super::linalg::solve_linear_system;
use super::{FeatureSchema, ModelError, ModelParams};
use crate::dataset::Dataset;
use crate::scalar::Scalar;

/// Solves the regularized normal equations on standardized features with an
/// unpenalized intercept, then maps the solution back to raw feature units.
pub(super) fn fit<T: Scalar>(
    ds: &Dataset<T>,
    schema: &FeatureSchema<T>,
    lambda: f64,
) -> Result<ModelParams<T>, ModelError> {
    let d = ds.n_features();
    let n = d + 1;
    let mut a = vec![T::zero(); n * n];
    let mut b = vec![T::zero(); n];
    let mut z = vec![T::zero(); n];
    for (row, &y) in ds.rows().zip(ds.y()) {
        schema.standardize_into(row, &mut z[..d]);
        z[d] = T::one();
        for i in 0..n {
            let zi = z[i];
            b[i] = b[i] + zi * y;
            for j in i..n {
                a[i * n + j] = a[i * n + j] + zi * z[j];
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            a[i * n + j] = a[j * n + i];
        }
    }
    let lam = T::lit(lambda);
    for i in 0..d {
        a[i * n + i] = a[i * n + i] + lam;
    }
    let beta = solve_linear_system(a, b, n).ok_or(ModelError::SingularSystem)?;

    let weights: Vec<T> = (0..d).map(|j| beta[j] / schema.scale[j]).collect();
    let intercept = (0..d).fold(beta[d], |acc, j| acc - weights[j] * schema.mean[j]);
    Ok(ModelParams::Ridge {
        weights,
        intercept,
        lambda,
    })
}

pub(super) fn predict<T: Scalar>(weights: &[T], intercept: T, x: &[T]) -> T {
    weights
        .iter()
        .zip(x)
        .fold(intercept, |acc, (&w, &v)| acc + w * v)
}
