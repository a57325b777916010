//! Direct solve for matrices that are triangular under a row/column
//! permutation.
//!
//! Implicit donor-cell matrices built from a potential-driven flux field have
//! an acyclic dependency graph (flux only runs from higher to lower head), so
//! a topological order turns the solve into one substitution sweep.

use std::collections::VecDeque;

use crate::scalar::Scalar;

use super::{CsrMatrix, SparseError};

#[derive(Debug, Clone)]
pub struct OrderedSubstitution<T> {
    order: Vec<usize>,
    matrix: CsrMatrix<T>,
    inv_diag: Vec<T>,
}

impl<T: Scalar> OrderedSubstitution<T> {
    /// Returns `None` when the off-diagonal graph has a cycle.
    pub fn new(matrix: &CsrMatrix<T>) -> Result<Option<Self>, SparseError> {
        let n = matrix.dim();
        let mut pending = vec![0usize; n];
        let mut dependents: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut inv_diag = vec![T::zero(); n];
        for i in 0..n {
            for (j, v) in matrix.row(i) {
                if j == i {
                    inv_diag[i] = T::one() / v;
                } else if v != T::zero() {
                    pending[i] += 1;
                    dependents[j].push(i);
                }
            }
            if !(inv_diag[i].is_finite() && inv_diag[i] != T::zero()) {
                return Err(SparseError::ZeroDiagonal { row: i });
            }
        }
        let mut queue: VecDeque<usize> = (0..n).filter(|&i| pending[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(j) = queue.pop_front() {
            order.push(j);
            for &i in &dependents[j] {
                pending[i] -= 1;
                if pending[i] == 0 {
                    queue.push_back(i);
                }
            }
        }
        if order.len() < n {
            return Ok(None);
        }
        Ok(Some(Self {
            order,
            matrix: matrix.clone(),
            inv_diag,
        }))
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = vec![T::zero(); b.len()];
        for &i in &self.order {
            let mut acc = b[i];
            for (j, v) in self.matrix.row(i) {
                if j != i {
                    acc -= v * x[j];
                }
            }
            x[i] = acc * self.inv_diag[i];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::super::solve_dense_lu;
    use super::*;

    #[test]
    fn permuted_lower_triangular() {
        // Dependencies: 2 <- 0, 1 <- 2, 3 <- 1 and 0.
        let dense = vec![
            vec![2.0f64, 0.0, 0.0, 0.0],
            vec![0.0, 3.0, -1.0, 0.0],
            vec![-1.0, 0.0, 4.0, 0.0],
            vec![-0.5, -0.5, 0.0, 1.0],
        ];
        let a = CsrMatrix::from_dense(&dense);
        let s = OrderedSubstitution::new(&a).unwrap().expect("acyclic");
        let b = [1.0, 2.0, 3.0, 4.0];
        let x = s.solve(&b);
        let exact = solve_dense_lu(&dense, &b).unwrap();
        for (u, v) in x.iter().zip(&exact) {
            assert!((u - v).abs() < 1e-15);
        }
    }

    #[test]
    fn cycle_is_detected() {
        let a = CsrMatrix::from_dense(&[vec![2.0, -1.0], vec![-1.0, 2.0]]);
        assert!(OrderedSubstitution::new(&a).unwrap().is_none());
    }

    #[test]
    fn zero_diagonal_is_an_error() {
        let a = CsrMatrix::from_dense(&[vec![0.0, 0.0], vec![-1.0, 2.0]]);
        assert!(matches!(
            OrderedSubstitution::new(&a),
            Err(SparseError::ZeroDiagonal { row: 0 })
        ));
    }
}
