use std::fmt::Write as _;

use crate::scalar::Scalar;

use super::SparseError;

/// Unordered `(row, col, value)` accumulation buffer for an `n × n` matrix.
#[derive(Debug, Clone)]
pub struct TripletBuffer<T> {
    n: usize,
    entries: Vec<(usize, usize, T)>,
}

impl<T: Scalar> TripletBuffer<T> {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(n: usize, cap: usize) -> Self {
        Self {
            n,
            entries: Vec::with_capacity(cap),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn push(&mut self, row: usize, col: usize, value: T) {
        self.entries.push((row, col, value));
    }

    /// Adds the symmetric two-point stencil `t (e_i - e_j)(e_i - e_j)^T`.
    pub fn push_pair(&mut self, i: usize, j: usize, t: T) {
        self.entries.push((i, i, t));
        self.entries.push((j, j, t));
        self.entries.push((i, j, -t));
        self.entries.push((j, i, -t));
    }

    /// Compresses to CSR. Duplicates are summed in a canonical order (sorted
    /// by value), so the output is bit-identical for any insertion order.
    pub fn to_csr(&self) -> Result<CsrMatrix<T>, SparseError> {
        for &(r, c, _) in &self.entries {
            if r >= self.n || c >= self.n {
                return Err(SparseError::IndexOutOfRange {
                    row: r,
                    col: c,
                    n: self.n,
                });
            }
        }
        let mut sorted = self.entries.clone();
        sorted.sort_by(|a, b| {
            a.0.cmp(&b.0)
                .then(a.1.cmp(&b.1))
                .then_with(|| a.2.total_cmp_scalar(&b.2))
        });
        let mut row_ptr = vec![0usize; self.n + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values: Vec<T> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            if last == Some((r, c)) {
                *values.last_mut().expect("entry exists") += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..self.n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(CsrMatrix {
            n: self.n,
            row_ptr,
            col_idx,
            values,
        })
    }
}

/// Square compressed-row matrix with sorted, unique column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> CsrMatrix<T> {
    pub fn identity(n: usize) -> Self {
        Self {
            n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![T::one(); n],
        }
    }

    pub fn from_dense(a: &[Vec<T>]) -> Self {
        let n = a.len();
        let mut buf = TripletBuffer::new(n);
        for (i, row) in a.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v != T::zero() {
                    buf.push(i, j, v);
                }
            }
        }
        buf.to_csr().expect("indices in range")
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of stored entries (structural nonzeros).
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(k) => self.values[r.start + k],
            Err(_) => T::zero(),
        }
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn mul_vec_into(&self, x: &[T], y: &mut [T]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = T::zero();
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *yi = acc;
        }
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn transpose(&self) -> Self {
        let mut buf = TripletBuffer::with_capacity(self.n, self.nnz());
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                buf.push(j, i, v);
            }
        }
        buf.to_csr().expect("indices in range")
    }

    /// `max |A - A^T|` over all entries.
    pub fn asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Symmetry check relative to the largest entry.
    pub fn is_symmetric(&self, rel_tol: T) -> bool {
        self.asymmetry() <= rel_tol * self.max_abs()
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let mut d = vec![vec![T::zero(); self.n]; self.n];
        for (i, row) in d.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        d
    }

    /// MatrixMarket coordinate export (1-based indices).
    pub fn to_matrix_market(&self) -> String {
        let mut s = String::from("%%MatrixMarket matrix coordinate real general\n");
        let _ = writeln!(s, "{} {} {}", self.n, self.n, self.nnz());
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                let _ = writeln!(s, "{} {} {}", i + 1, j + 1, v.to_f64_lossy());
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    #[test]
    fn duplicates_are_summed() {
        let mut b = TripletBuffer::<f64>::new(2);
        b.push(0, 0, 1.0);
        b.push(0, 0, 2.0);
        let a = b.to_csr().unwrap();
        assert_eq!(a.nnz(), 1);
        assert_eq!(a.get(0, 0), 3.0);
    }

    #[test]
    fn empty_buffer_gives_zero_matrix() {
        let a = TripletBuffer::<f64>::new(3).to_csr().unwrap();
        assert_eq!(a.dim(), 3);
        assert_eq!(a.nnz(), 0);
        assert_eq!(a.row_ptr(), &[0, 0, 0, 0]);
        assert_eq!(a.mul_vec(&[1.0, 2.0, 3.0]), vec![0.0; 3]);
    }

    #[test]
    fn out_of_range_index_is_rejected() {
        let mut b = TripletBuffer::<f64>::new(2);
        b.push(2, 0, 1.0);
        assert!(matches!(
            b.to_csr(),
            Err(SparseError::IndexOutOfRange {
                row: 2,
                col: 0,
                n: 2
            })
        ));
    }

    #[test]
    fn layout_independent_of_insertion_order() {
        let mut entries = Vec::new();
        for i in 0..5usize {
            for j in 0..5usize {
                if (i + 2 * j) % 3 != 1 {
                    let v = 1.0 / (1.0 + i as f64 + 0.37 * j as f64);
                    entries.push((i, j, v));
                    entries.push((i, j, v * 1e-3 + 0.1));
                    entries.push((i, j, -v * 0.7));
                }
            }
        }
        let build = |es: &[(usize, usize, f64)]| {
            let mut b = TripletBuffer::new(5);
            for &(i, j, v) in es {
                b.push(i, j, v);
            }
            b.to_csr().unwrap()
        };
        let reference = build(&entries);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            entries.shuffle(&mut rng);
            let a = build(&entries);
            assert_eq!(a.row_ptr(), reference.row_ptr());
            assert_eq!(a.col_idx(), reference.col_idx());
            let bits: Vec<u64> = a.values().iter().map(|v| v.to_bits()).collect();
            let ref_bits: Vec<u64> = reference.values().iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits, ref_bits);
        }
    }

    #[test]
    fn matrix_market_header() {
        let a = CsrMatrix::<f64>::identity(2);
        let mm = a.to_matrix_market();
        let mut lines = mm.lines();
        assert_eq!(
            lines.next(),
            Some("%%MatrixMarket matrix coordinate real general")
        );
        assert_eq!(lines.next(), Some("2 2 2"));
        assert_eq!(lines.next(), Some("1 1 1"));
    }

    #[test]
    fn transpose_and_symmetry() {
        let a = CsrMatrix::from_dense(&[vec![2.0, 1.0], vec![0.0, 3.0]]);
        let t = a.transpose();
        assert_eq!(t.get(1, 0), 1.0);
        assert_eq!(t.get(0, 1), 0.0);
        assert!(!a.is_symmetric(1e-12));
        assert!(CsrMatrix::from_dense(&[vec![2.0, 1.0], vec![1.0, 3.0]]).is_symmetric(0.0));
    }
}
