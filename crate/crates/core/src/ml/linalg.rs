use crate::scalar::Scalar;

/// Solves `a · x = b` for a dense `n×n` row-major matrix by Gaussian
/// elimination with partial pivoting. Returns `None` when a pivot falls
/// below `sqrt(eps)` relative to the largest entry magnitude.
pub fn solve_linear_system<T: Scalar>(mut a: Vec<T>, mut b: Vec<T>, n: usize) -> Option<Vec<T>> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n);
    let max_abs = a.iter().map(|v| v.abs()).fold(T::zero(), T::max);
    if max_abs == T::zero() {
        return None;
    }
    let tol = max_abs * T::epsilon().sqrt();

    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&r, &s| {
                a[r * n + col]
                    .abs()
                    .partial_cmp(&a[s * n + col].abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
                    // equal magnitudes: prefer the earlier row
                    .then(s.cmp(&r))
            })
            .unwrap_or(col);
        if !(a[pivot_row * n + col].abs() > tol) {
            return None;
        }
        if pivot_row != col {
            for k in 0..n {
                a.swap(col * n + k, pivot_row * n + k);
            }
            b.swap(col, pivot_row);
        }
        let p = a[col * n + col];
        for r in col + 1..n {
            let f = a[r * n + col] / p;
            if f == T::zero() {
                continue;
            }
            for k in col..n {
                let v = a[col * n + k];
                a[r * n + k] = a[r * n + k] - f * v;
            }
            b[r] = b[r] - f * b[col];
        }
    }

    let mut x = vec![T::zero(); n];
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s = s - a[i * n + k] * x[k];
        }
        x[i] = s / a[i * n + i];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        // 2x + y = 5, x - y = 1
        let x = solve_linear_system(vec![2.0f64, 1.0, 1.0, -1.0], vec![5.0, 1.0], 2).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn needs_pivoting() {
        let x = solve_linear_system(vec![0.0, 1.0, 1.0, 0.0], vec![3.0, 4.0], 2).unwrap();
        assert_eq!(x, vec![4.0, 3.0]);
    }

    #[test]
    fn detects_singular() {
        assert!(solve_linear_system(vec![1.0, 2.0, 2.0, 4.0], vec![1.0, 2.0], 2).is_none());
        assert!(solve_linear_system(vec![0.0f32; 4], vec![1.0, 2.0], 2).is_none());
    }
}
