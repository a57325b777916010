use crate::scalar::Scalar;

use super::{CsrMatrix, SparseError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions<T> {
    /// Relative residual target `|Ax - b| / |b|`.
    pub tol: T,
    /// Iteration cap; `None` means `20 n`.
    pub max_iter: Option<usize>,
    /// Verify symmetry (CG only) before iterating.
    pub check_symmetry: bool,
}

impl<T: Scalar> Default for SolveOptions<T> {
    fn default() -> Self {
        Self {
            tol: T::of(1e-10),
            max_iter: None,
            check_symmetry: false,
        }
    }
}

impl<T: Scalar> SolveOptions<T> {
    pub fn with_tol(tol: T) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }

    fn cap(&self, n: usize) -> usize {
        self.max_iter.unwrap_or(20 * n.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveReport<T> {
    pub iterations: usize,
    /// Final true relative residual.
    pub residual: T,
    pub converged: bool,
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

fn norm<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

fn true_residual<T: Scalar>(a: &CsrMatrix<T>, x: &[T], b: &[T], r: &mut [T]) -> T {
    a.mul_vec_into(x, r);
    for (ri, &bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    norm(r)
}

fn jacobi<T: Scalar>(a: &CsrMatrix<T>) -> Result<Vec<T>, SparseError> {
    a.diagonal()
        .into_iter()
        .enumerate()
        .map(|(i, d)| {
            if d != T::zero() && d.is_finite() {
                Ok(T::one() / d)
            } else {
                Err(SparseError::ZeroDiagonal { row: i })
            }
        })
        .collect()
}

fn check_dims<T: Scalar>(a: &CsrMatrix<T>, b: &[T]) -> Result<(), SparseError> {
    if b.len() != a.dim() {
        return Err(SparseError::DimensionMismatch {
            expected: a.dim(),
            found: b.len(),
        });
    }
    Ok(())
}

/// Jacobi-preconditioned conjugate gradients for symmetric positive definite `a`.
pub fn solve_cg<T: Scalar>(
    a: &CsrMatrix<T>,
    b: &[T],
    opts: &SolveOptions<T>,
) -> Result<(Vec<T>, SolveReport<T>), SparseError> {
    check_dims(a, b)?;
    let n = a.dim();
    if opts.check_symmetry && !a.is_symmetric(T::of(1e-10)) {
        return Err(SparseError::NotSymmetric);
    }
    let bnorm = norm(b);
    let mut x = vec![T::zero(); n];
    if bnorm == T::zero() {
        return Ok((
            x,
            SolveReport {
                iterations: 0,
                residual: T::zero(),
                converged: true,
            },
        ));
    }
    let minv = jacobi(a)?;
    let cap = opts.cap(n);
    let target = opts.tol * bnorm;

    let mut r = b.to_vec();
    let mut z: Vec<T> = r.iter().zip(&minv).map(|(&ri, &mi)| ri * mi).collect();
    let mut p = z.clone();
    let mut ap = vec![T::zero(); n];
    let mut rz = dot(&r, &z);
    let mut it = 0;
    loop {
        let rnorm = norm(&r);
        if rnorm <= target {
            // Confirm against the true residual; restart if the recurrence drifted.
            let true_norm = true_residual(a, &x, b, &mut r);
            if true_norm <= target {
                return Ok((
                    x,
                    SolveReport {
                        iterations: it,
                        residual: true_norm / bnorm,
                        converged: true,
                    },
                ));
            }
            for i in 0..n {
                z[i] = r[i] * minv[i];
            }
            p.copy_from_slice(&z);
            rz = dot(&r, &z);
        }
        if it >= cap {
            let res = true_residual(a, &x, b, &mut r) / bnorm;
            return Err(SparseError::NotConverged {
                iterations: it,
                residual: res.to_f64_lossy(),
            });
        }
        a.mul_vec_into(&p, &mut ap);
        let curvature = dot(&p, &ap);
        if !(curvature > T::zero()) {
            return Err(SparseError::Breakdown { iteration: it });
        }
        let alpha = rz / curvature;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
            z[i] = r[i] * minv[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        it += 1;
    }
}

/// Conjugate gradients followed by up to `rounds` residual-correction
/// solves, each to the same relative tolerance. Stops early once a
/// correction no longer lowers the true residual.
pub fn solve_cg_refined<T: Scalar>(
    a: &CsrMatrix<T>,
    b: &[T],
    opts: &SolveOptions<T>,
    rounds: usize,
) -> Result<(Vec<T>, SolveReport<T>), SparseError> {
    let (mut x, mut report) = solve_cg(a, b, opts)?;
    let bnorm = norm(b);
    if bnorm == T::zero() {
        return Ok((x, report));
    }
    let mut r = vec![T::zero(); x.len()];
    let mut res = true_residual(a, &x, b, &mut r);
    for _ in 0..rounds {
        let (dx, inner) = match solve_cg(a, &r, opts) {
            Ok(v) => v,
            Err(SparseError::NotConverged { .. }) => break,
            Err(e) => return Err(e),
        };
        let trial: Vec<T> = x.iter().zip(&dx).map(|(&xi, &di)| xi + di).collect();
        let mut r_trial = vec![T::zero(); x.len()];
        let res_trial = true_residual(a, &trial, b, &mut r_trial);
        report.iterations += inner.iterations;
        if !(res_trial < res) {
            break;
        }
        x = trial;
        r = r_trial;
        res = res_trial;
    }
    report.residual = res / bnorm;
    Ok((x, report))
}

/// Right-Jacobi-preconditioned BiCGStab for general nonsingular `a`.
pub fn solve_bicgstab<T: Scalar>(
    a: &CsrMatrix<T>,
    b: &[T],
    opts: &SolveOptions<T>,
) -> Result<(Vec<T>, SolveReport<T>), SparseError> {
    check_dims(a, b)?;
    let n = a.dim();
    let zero = vec![T::zero(); n];
    solve_bicgstab_from(a, b, zero, opts)
}

/// BiCGStab starting from the initial guess `x0`.
pub fn solve_bicgstab_from<T: Scalar>(
    a: &CsrMatrix<T>,
    b: &[T],
    x0: Vec<T>,
    opts: &SolveOptions<T>,
) -> Result<(Vec<T>, SolveReport<T>), SparseError> {
    check_dims(a, b)?;
    let n = a.dim();
    let bnorm = norm(b);
    if bnorm == T::zero() {
        return Ok((
            vec![T::zero(); n],
            SolveReport {
                iterations: 0,
                residual: T::zero(),
                converged: true,
            },
        ));
    }
    let minv = jacobi(a)?;
    let cap = opts.cap(n);
    let target = opts.tol * bnorm;

    let mut x = x0;
    let mut r = vec![T::zero(); n];
    let mut rnorm = true_residual(a, &x, b, &mut r);
    let mut it = 0;
    // Outer loop restarts with a fresh shadow residual on breakdown or drift.
    'restart: loop {
        if rnorm <= target {
            return Ok((
                x,
                SolveReport {
                    iterations: it,
                    residual: rnorm / bnorm,
                    converged: true,
                },
            ));
        }
        let r_hat = r.clone();
        let (mut rho, mut alpha, mut omega) = (T::one(), T::one(), T::one());
        let mut v = vec![T::zero(); n];
        let mut p = vec![T::zero(); n];
        let mut y = vec![T::zero(); n];
        let mut s = vec![T::zero(); n];
        let mut zz = vec![T::zero(); n];
        let mut t = vec![T::zero(); n];
        loop {
            if it >= cap {
                let res = true_residual(a, &x, b, &mut r) / bnorm;
                return Err(SparseError::NotConverged {
                    iterations: it,
                    residual: res.to_f64_lossy(),
                });
            }
            it += 1;
            let rho_new = dot(&r_hat, &r);
            if rho_new == T::zero() || !rho_new.is_finite() {
                rnorm = true_residual(a, &x, b, &mut r);
                if rnorm <= target {
                    continue 'restart;
                }
                return Err(SparseError::Breakdown { iteration: it });
            }
            let beta = (rho_new / rho) * (alpha / omega);
            rho = rho_new;
            for i in 0..n {
                p[i] = r[i] + beta * (p[i] - omega * v[i]);
                y[i] = minv[i] * p[i];
            }
            a.mul_vec_into(&y, &mut v);
            let denom = dot(&r_hat, &v);
            if denom == T::zero() || !denom.is_finite() {
                return Err(SparseError::Breakdown { iteration: it });
            }
            alpha = rho / denom;
            for i in 0..n {
                s[i] = r[i] - alpha * v[i];
            }
            if norm(&s) <= target {
                for i in 0..n {
                    x[i] += alpha * y[i];
                }
                rnorm = true_residual(a, &x, b, &mut r);
                continue 'restart;
            }
            for i in 0..n {
                zz[i] = minv[i] * s[i];
            }
            a.mul_vec_into(&zz, &mut t);
            let tt = dot(&t, &t);
            if tt == T::zero() {
                return Err(SparseError::Breakdown { iteration: it });
            }
            omega = dot(&t, &s) / tt;
            for i in 0..n {
                x[i] += alpha * y[i] + omega * zz[i];
                r[i] = s[i] - omega * t[i];
            }
            if norm(&r) <= target {
                rnorm = true_residual(a, &x, b, &mut r);
                continue 'restart;
            }
            if omega == T::zero() {
                rnorm = true_residual(a, &x, b, &mut r);
                continue 'restart;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::{solve_dense_lu, TripletBuffer};
    use super::*;
    use rand::{Rng, SeedableRng};

    fn laplacian_1d(n: usize) -> CsrMatrix<f64> {
        let mut b = TripletBuffer::new(n);
        for i in 0..n {
            b.push(i, i, 2.0);
            if i > 0 {
                b.push(i, i - 1, -1.0);
            }
            if i + 1 < n {
                b.push(i, i + 1, -1.0);
            }
        }
        b.to_csr().unwrap()
    }

    fn max_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn cg_identity_single_iteration() {
        let a = CsrMatrix::<f64>::identity(4);
        let b = [1.0, -2.0, 3.5, 0.25];
        let (x, rep) = solve_cg(&a, &b, &SolveOptions::default()).unwrap();
        assert_eq!(x, b.to_vec());
        assert!(rep.iterations <= 1);
        assert!(rep.converged);
    }

    #[test]
    fn cg_zero_rhs() {
        let a = laplacian_1d(5);
        let (x, rep) = solve_cg(&a, &[0.0; 5], &SolveOptions::default()).unwrap();
        assert_eq!(x, vec![0.0; 5]);
        assert_eq!(rep.iterations, 0);
    }

    #[test]
    fn cg_matches_dense_on_laplacian() {
        let a = laplacian_1d(10);
        let mut b = vec![0.0; 10];
        b[0] = 1.0;
        let (x, rep) = solve_cg(&a, &b, &SolveOptions::default()).unwrap();
        let exact = solve_dense_lu(&a.to_dense(), &b).unwrap();
        assert!(max_diff(&x, &exact) < 1e-10);
        assert!(rep.residual <= 1e-10);
    }

    #[test]
    fn cg_rejects_asymmetric_when_asked() {
        let a = CsrMatrix::from_dense(&[vec![2.0, 1.0], vec![0.0, 2.0]]);
        let opts = SolveOptions {
            check_symmetry: true,
            ..SolveOptions::default()
        };
        assert!(matches!(
            solve_cg(&a, &[1.0, 1.0], &opts),
            Err(SparseError::NotSymmetric)
        ));
    }

    #[test]
    fn cg_reports_breakdown_on_indefinite() {
        let a = CsrMatrix::from_dense(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
        let r = solve_cg(&a, &[1.0, -1.0], &SolveOptions::default());
        assert!(matches!(r, Err(SparseError::Breakdown { .. })));
    }

    #[test]
    fn cg_iteration_cap() {
        let a = laplacian_1d(50);
        let b = vec![1.0; 50];
        let opts = SolveOptions {
            max_iter: Some(3),
            ..SolveOptions::default()
        };
        assert!(matches!(
            solve_cg(&a, &b, &opts),
            Err(SparseError::NotConverged { iterations: 3, .. })
        ));
    }

    #[test]
    fn cg_random_spd_agrees_with_dense() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(20);
        let n = 20;
        let m: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        // A = M M^T + n I
        let mut dense = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                dense[i][j] = (0..n).map(|k| m[i][k] * m[j][k]).sum::<f64>();
            }
            dense[i][i] += n as f64;
        }
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let a = CsrMatrix::from_dense(&dense);
        let (x, _) = solve_cg(&a, &b, &SolveOptions::with_tol(1e-13)).unwrap();
        let exact = solve_dense_lu(&dense, &b).unwrap();
        assert!(max_diff(&x, &exact) < 1e-10);
    }

    #[test]
    fn refinement_tightens_high_contrast_solve() {
        // Grounded chain with conductances alternating over six orders of magnitude.
        let n = 40;
        let mut t = TripletBuffer::new(n);
        for i in 0..n - 1 {
            let k = if i % 2 == 0 { 1e6 } else { 1.0 };
            t.push_pair(i, i + 1, k);
        }
        t.push(0, 0, 1.0);
        t.push(n - 1, n - 1, 1.0);
        let a = t.to_csr().unwrap();
        let mut b = vec![0.0; n];
        b[0] = 1.0;
        b[n - 1] = -1.0;
        let opts = SolveOptions::with_tol(1e-8);
        let (_, plain) = solve_cg(&a, &b, &opts).unwrap();
        let (x, refined) = solve_cg_refined(&a, &b, &opts, 2).unwrap();
        assert!(refined.residual <= plain.residual);
        let exact = solve_dense_lu(&a.to_dense(), &b).unwrap();
        let scale = exact.iter().fold(0.0f64, |m: f64, v: &f64| m.max(v.abs()));
        assert!(max_diff(&x, &exact) <= 1e-6 * scale);
    }

    #[test]
    fn refinement_without_rounds_is_plain_cg() {
        let a = laplacian_1d(12);
        let b = vec![1.0; 12];
        let opts = SolveOptions::with_tol(1e-10);
        let (x0, r0) = solve_cg(&a, &b, &opts).unwrap();
        let (x1, r1) = solve_cg_refined(&a, &b, &opts, 0).unwrap();
        assert_eq!(x0, x1);
        assert_eq!(r0.iterations, r1.iterations);
    }

    #[test]
    fn bicgstab_upper_bidiagonal() {
        let dense = vec![
            vec![2.0, -1.0, 0.0, 0.0],
            vec![0.0, 3.0, -1.0, 0.0],
            vec![0.0, 0.0, 1.5, -0.5],
            vec![0.0, 0.0, 0.0, 4.0],
        ];
        let b = [1.0, 2.0, 3.0, 4.0];
        let a = CsrMatrix::from_dense(&dense);
        let (x, _) = solve_bicgstab(&a, &b, &SolveOptions::with_tol(1e-15)).unwrap();
        let exact = solve_dense_lu(&dense, &b).unwrap();
        assert!(max_diff(&x, &exact) < 1e-12);
    }

    #[test]
    fn bicgstab_identity_one_step() {
        let a = CsrMatrix::<f64>::identity(6);
        let b: Vec<f64> = (0..6).map(|i| i as f64 - 2.0).collect();
        let (x, rep) = solve_bicgstab(&a, &b, &SolveOptions::default()).unwrap();
        assert_eq!(x, b);
        assert!(rep.iterations <= 1);
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn bicgstab_random_diagonally_dominant() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(50);
        let n = 50;
        let mut dense = vec![vec![0.0; n]; n];
        for i in 0..n {
            let mut row_sum = 0.0;
            for j in 0..n {
                if i != j && rng.gen_bool(0.2) {
                    let v: f64 = rng.gen_range(-1.0..1.0);
                    dense[i][j] = v;
                    row_sum += v.abs();
                }
            }
            dense[i][i] = row_sum + 1.0;
        }
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let a = CsrMatrix::from_dense(&dense);
        let (x, rep) = solve_bicgstab(&a, &b, &SolveOptions::with_tol(1e-13)).unwrap();
        assert!(rep.converged);
        let exact = solve_dense_lu(&dense, &b).unwrap();
        assert!(max_diff(&x, &exact) < 1e-10);
    }
}
