//! Small dense linear algebra: row-major matrices, a symmetric
//! eigensolver (Householder tridiagonalisation followed by implicit QL),
//! and a thin SVD built on the Gram matrix of the short side.

use crate::scalar::Scalar;

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    /// Panics when `data.len() != rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Self { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.rows, "matmul inner dimension");
        let mut out = Self::zeros(self.rows, rhs.cols);
        T::gemm(
            self.rows,
            self.cols,
            rhs.cols,
            T::one(),
            &self.data,
            self.cols as isize,
            1,
            &rhs.data,
            rhs.cols as isize,
            1,
            T::zero(),
            &mut out.data,
            rhs.cols as isize,
            1,
        );
        out
    }

    /// `A^T A`.
    pub fn gram(&self) -> Self {
        let k = self.cols;
        let mut g = Self::zeros(k, k);
        T::gemm(
            k,
            self.rows,
            k,
            T::one(),
            &self.data,
            1,
            k as isize,
            &self.data,
            k as isize,
            1,
            T::zero(),
            &mut g.data,
            k as isize,
            1,
        );
        // exact symmetry for the eigensolver
        for i in 0..k {
            for j in 0..i {
                let s = (g.data[i * k + j] + g.data[j * k + i]) * T::lit(0.5);
                g.data[i * k + j] = s;
                g.data[j * k + i] = s;
            }
        }
        g
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|&x| x * x).sum::<T>().sqrt()
    }
}

/// Eigen-decomposition of a symmetric matrix.
#[derive(Clone, Debug)]
pub struct SymmetricEigen<T> {
    /// Eigenvalues in non-increasing order.
    pub values: Vec<T>,
    /// Row `j` holds the unit eigenvector for `values[j]`.
    pub vectors: Matrix<T>,
}

/// Symmetric eigensolver (LAPACK `?syevr`). Callers pass exactly
/// symmetric input.
///
/// Panics if LAPACK reports a failure, which only happens for non-finite
/// input.
pub fn symmetric_eigen<T: Scalar>(a: &Matrix<T>) -> SymmetricEigen<T> {
    assert_eq!(a.rows, a.cols, "symmetric_eigen needs a square matrix");
    let n = a.rows;
    let mut work = a.data.clone();
    let mut asc = vec![T::zero(); n];
    let mut z = vec![T::zero(); n * n];
    assert!(T::sym_eigen(n, &mut work, &mut asc, &mut z), "symmetric eigensolver failed");
    let mut vectors = Matrix::zeros(n, n);
    for dst in 0..n {
        let src = n - 1 - dst;
        vectors.data[dst * n..(dst + 1) * n].copy_from_slice(&z[src * n..(src + 1) * n]);
    }
    asc.reverse();
    SymmetricEigen { values: asc, vectors }
}

/// Thin singular value decomposition `A = U diag(s) V^T`.
#[derive(Clone, Debug)]
pub struct Svd<T> {
    /// Non-increasing singular values, `min(rows, cols)` of them.
    pub values: Vec<T>,
    /// `rows x r`, orthonormal columns (zero columns for zero values).
    pub u: Matrix<T>,
    /// Row `j` is the right singular vector for `values[j]`.
    pub vt: Matrix<T>,
}

/// Thin SVD through the eigen-decomposition of the Gram matrix of the
/// shorter side. Singular values are recomputed as column norms of `A V`,
/// which keeps them accurate well below `sqrt(eps) * s_max`.
pub fn thin_svd<T: Scalar>(a: &Matrix<T>) -> Svd<T> {
    if a.rows < a.cols {
        let t = thin_svd(&a.transpose());
        return Svd { values: t.values, u: t.vt.transpose(), vt: t.u.transpose() };
    }
    let k = a.cols;
    let eig = symmetric_eigen(&a.gram());
    // B = A V, columns are U * s.
    let mut b = Matrix::zeros(a.rows, k);
    T::gemm(
        a.rows,
        k,
        k,
        T::one(),
        &a.data,
        k as isize,
        1,
        &eig.vectors.data,
        1,
        k as isize,
        T::zero(),
        &mut b.data,
        k as isize,
        1,
    );
    let norms: Vec<T> =
        (0..k).map(|j| (0..a.rows).map(|i| b.get(i, j) * b.get(i, j)).sum::<T>().sqrt()).collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap_or(std::cmp::Ordering::Equal));

    let mut values = Vec::with_capacity(k);
    let mut u = Matrix::zeros(a.rows, k);
    let mut vt = Matrix::zeros(k, k);
    for (dst, &src) in order.iter().enumerate() {
        let s = norms[src];
        values.push(s);
        if s > T::zero() {
            for i in 0..a.rows {
                u.set(i, dst, b.get(i, src) / s);
            }
        }
        vt.data[dst * k..(dst + 1) * k].copy_from_slice(eig.vectors.row(src));
    }
    Svd { values, u, vt }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    fn naive_mul(a: &Matrix<f64>, b: &Matrix<f64>) -> Matrix<f64> {
        Matrix::from_fn(a.rows(), b.cols(), |i, j| (0..a.cols()).map(|l| a.get(i, l) * b.get(l, j)).sum())
    }

    #[test]
    fn eigen_reconstructs_and_is_orthonormal() {
        for (n, seed) in [(1usize, 1u64), (2, 2), (5, 3), (17, 4), (40, 5)] {
            let r = random_matrix(n, n, seed);
            let a = Matrix::from_fn(n, n, |i, j| r.get(i, j) + r.get(j, i));
            let eig = symmetric_eigen(&a);
            for w in eig.values.windows(2) {
                assert!(w[0] >= w[1]);
            }
            let v = &eig.vectors;
            let vvt = naive_mul(v, &v.transpose());
            for i in 0..n {
                for j in 0..n {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((vvt.get(i, j) - want).abs() < 1e-12, "n={n}");
                }
            }
            // A v_j = lambda_j v_j
            for j in 0..n {
                for i in 0..n {
                    let av: f64 = (0..n).map(|k| a.get(i, k) * v.get(j, k)).sum();
                    assert!((av - eig.values[j] * v.get(j, i)).abs() < 1e-11, "n={n}");
                }
            }
        }
    }

    #[test]
    fn eigen_handles_diagonal_and_repeated_values() {
        let a = Matrix::from_fn(4, 4, |i, j| if i == j { [2.0, 5.0, 2.0, -1.0][i] } else { 0.0 });
        let eig = symmetric_eigen(&a);
        assert_eq!(eig.values, vec![5.0, 2.0, 2.0, -1.0]);
        let z = symmetric_eigen(&Matrix::<f64>::zeros(3, 3));
        assert!(z.values.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn thin_svd_reconstructs_tall_and_wide() {
        for (r, c, seed) in [(6usize, 4usize, 7u64), (4, 6, 8), (50, 9, 9), (1, 3, 10)] {
            let a = random_matrix(r, c, seed);
            let svd = thin_svd(&a);
            let k = r.min(c);
            assert!(svd.values.len() >= k);
            for w in svd.values.windows(2) {
                assert!(w[0] >= w[1]);
            }
            let recon = Matrix::from_fn(r, c, |i, j| {
                (0..svd.values.len()).map(|l| svd.u.get(i, l) * svd.values[l] * svd.vt.get(l, j)).sum::<f64>()
            });
            for (x, y) in recon.as_slice().iter().zip(a.as_slice()) {
                assert!((x - y).abs() < 1e-12, "{r}x{c}");
            }
        }
    }

    #[test]
    fn thin_svd_of_diagonal() {
        let a = Matrix::<f64>::from_vec(2, 2, vec![1.0, 0.0, 0.0, 3.0]);
        let svd = thin_svd(&a);
        assert!((svd.values[0] - 3.0).abs() < 1e-15 && (svd.values[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gram_matches_naive() {
        let a = random_matrix(13, 5, 12);
        let g = a.gram();
        let want = naive_mul(&a.transpose(), &a);
        for (x, y) in g.as_slice().iter().zip(want.as_slice()) {
            assert!((x - y).abs() < 1e-13);
        }
    }
}
