use crate::scalar::Scalar;

use super::SparseError;

/// Largest system the dense oracle accepts.
pub const DENSE_LIMIT: usize = 2000;

/// Gaussian elimination with partial pivoting. Verification oracle for the
/// iterative solvers; not meant for production-sized systems.
#[allow(clippy::needless_range_loop)]
pub fn solve_dense_lu<T: Scalar>(a: &[Vec<T>], b: &[T]) -> Result<Vec<T>, SparseError> {
    let n = a.len();
    if n > DENSE_LIMIT {
        return Err(SparseError::TooLarge {
            n,
            limit: DENSE_LIMIT,
        });
    }
    if b.len() != n || a.iter().any(|r| r.len() != n) {
        return Err(SparseError::DimensionMismatch {
            expected: n,
            found: b.len(),
        });
    }
    let scale = a
        .iter()
        .flat_map(|r| r.iter())
        .fold(T::zero(), |m, v| m.max(v.abs()));
    let threshold = T::epsilon() * scale * T::from_count(n.max(1));

    let mut m: Vec<Vec<T>> = a.to_vec();
    let mut x: Vec<T> = b.to_vec();
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp_scalar(&m[j][col].abs()))
            .expect("non-empty range");
        if !(m[pivot_row][col].abs() > threshold) {
            return Err(SparseError::SingularPivot { col });
        }
        m.swap(col, pivot_row);
        x.swap(col, pivot_row);
        let pivot = m[col][col];
        for row in col + 1..n {
            let f = m[row][col] / pivot;
            if f == T::zero() {
                continue;
            }
            for k in col..n {
                let delta = f * m[col][k];
                m[row][k] -= delta;
            }
            let delta = f * x[col];
            x[row] -= delta;
        }
    }
    for col in (0..n).rev() {
        let mut acc = x[col];
        for k in col + 1..n {
            acc -= m[col][k] * x[k];
        }
        x[col] = acc / m[col][col];
    }
    Ok(x)
}
