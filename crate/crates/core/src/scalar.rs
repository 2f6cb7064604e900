//! Floating point abstraction shared by every numerical module.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Real scalar used throughout the crate: `f32` or `f64`.
///
/// Besides the usual float arithmetic the trait carries the two dense
/// kernels of the SVD path (GEMM and a LAPACK symmetric eigensolver) for
/// either precision.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// `C <- alpha * A * B + beta * C` for strided row/column layouts.
    ///
    /// `A` is `m x k`, `B` is `k x n`, `C` is `m x n`; strides are in
    /// elements.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
        rsc: isize,
        csc: isize,
    );

    /// Eigen-decomposition of the symmetric `n x n` matrix `a` (row-major,
    /// overwritten). Eigenvalues go to `values` in ascending order and
    /// eigenvector `j` to `vectors[j * n..(j + 1) * n]`. Returns `false`
    /// when LAPACK reports a failure.
    fn sym_eigen(n: usize, a: &mut [Self], values: &mut [Self], vectors: &mut [Self]) -> bool;

    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    /// Conversion from a count or index.
    #[inline]
    fn from_usize_lossy(x: usize) -> Self {
        Self::from_usize(x).expect("usize representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

macro_rules! impl_scalar {
    ($t:ty, $kernel:path, $syevr:path) => {
        impl Scalar for $t {
            fn sym_eigen(n: usize, a: &mut [Self], values: &mut [Self], vectors: &mut [Self]) -> bool {
                assert!(a.len() >= n * n && values.len() >= n && vectors.len() >= n * n, "sym_eigen: buffers too short");
                if n == 0 {
                    return true;
                }
                let ni = n as i32;
                let mut found = 0;
                let mut support = vec![0i32; 2 * n];
                let mut info = 0;
                // symmetric input, so row- and column-major agree; column j of
                // the column-major output is row j here
                let mut query = [0.0 as $t];
                let mut iquery = [0i32];
                // SAFETY: buffer sizes are checked above and by the workspace query.
                unsafe {
                    $syevr(b'V', b'A', b'L', ni, a, ni, 0.0, 0.0, 0, 0, 0.0, &mut found, values, vectors, ni,
                        &mut support, &mut query, -1, &mut iquery, -1, &mut info);
                }
                if info != 0 {
                    return false;
                }
                let lwork = query[0] as usize;
                let liwork = iquery[0] as usize;
                let mut work = vec![0.0 as $t; lwork.max(1)];
                let mut iwork = vec![0i32; liwork.max(1)];
                unsafe {
                    $syevr(b'V', b'A', b'L', ni, a, ni, 0.0, 0.0, 0, 0, 0.0, &mut found, values, vectors, ni,
                        &mut support, &mut work, lwork as i32, &mut iwork, liwork as i32, &mut info);
                }
                info == 0 && found == ni
            }

            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                rsa: isize,
                csa: isize,
                b: &[Self],
                rsb: isize,
                csb: isize,
                beta: Self,
                c: &mut [Self],
                rsc: isize,
                csc: isize,
            ) {
                if m == 0 || n == 0 {
                    return;
                }
                let span = |rows: usize, cols: usize, rs: isize, cs: isize| {
                    if rows == 0 || cols == 0 {
                        0
                    } else {
                        ((rows - 1) as isize * rs + (cols - 1) as isize * cs) as usize + 1
                    }
                };
                assert!(a.len() >= span(m, k, rsa, csa), "gemm: lhs too short");
                assert!(b.len() >= span(k, n, rsb, csb), "gemm: rhs too short");
                assert!(c.len() >= span(m, n, rsc, csc), "gemm: output too short");
                // SAFETY: the asserts above bound every strided access inside
                // the provided slices, and `c` is uniquely borrowed.
                unsafe {
                    $kernel(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        rsc,
                        csc,
                    );
                }
            }
        }
    };
}

impl_scalar!(f32, matrixmultiply::sgemm, lapack::ssyevr);
impl_scalar!(f64, matrixmultiply::dgemm, lapack::dsyevr);
