//! Proximal maps and projections used by the primal-dual iteration.

use crate::error::{Error, Result};
use crate::grid::{Array, Image, LiftedTensor, Mask, SymField, VecField};
use crate::linalg::{symmetric_eigen, thin_svd, Matrix};
use crate::scalar::Scalar;

/// Penalty applied to each singular value of an atom matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Phi<T> {
    /// `phi(x) = x`, i.e. the nuclear norm.
    Linear,
    /// `x - eps*delta*x^2` on `[0, 1/(2 eps)]`, continued linearly with
    /// slope `1 - delta` beyond.
    Semiconvex { epsilon: T, delta: T },
}

impl<T: Scalar> Phi<T> {
    pub fn semiconvex(epsilon: T, delta: T) -> Result<Self> {
        if !(epsilon > T::zero()) || !epsilon.is_finite() {
            return Err(Error::param("epsilon", "must be positive and finite"));
        }
        if !(delta >= T::zero() && delta < T::one()) {
            return Err(Error::param("delta", "must lie in [0, 1)"));
        }
        Ok(Phi::Semiconvex { epsilon, delta })
    }

    pub fn value(&self, x: T) -> T {
        match *self {
            Phi::Linear => x,
            Phi::Semiconvex { epsilon, delta } => {
                let knee = T::one() / (T::lit(2.0) * epsilon);
                if x <= knee {
                    x - epsilon * delta * x * x
                } else {
                    (T::one() - delta) * x + delta / (T::lit(4.0) * epsilon)
                }
            }
        }
    }

    /// Largest `tau * rho` for which the scalar prox objective stays convex.
    pub fn max_tau_rho(&self) -> Option<T> {
        match *self {
            Phi::Linear => None,
            Phi::Semiconvex { epsilon, delta } if delta > T::zero() => {
                Some(T::one() / (T::lit(2.0) * epsilon * delta))
            }
            Phi::Semiconvex { .. } => None,
        }
    }

    /// Sum of `phi` over a list of singular values.
    pub fn energy(&self, sigmas: &[T]) -> T {
        sigmas.iter().map(|&s| self.value(s)).sum()
    }
}

/// `argmin_{x >= 0} (x - x0)^2 / 2 + tau_rho * phi(x)`.
pub fn prox_scalar_phi<T: Scalar>(x0: T, tau_rho: T, phi: &Phi<T>) -> Result<T> {
    match *phi {
        Phi::Linear => Ok((x0 - tau_rho).max(T::zero())),
        Phi::Semiconvex { epsilon, delta } => {
            if let Some(bound) = phi.max_tau_rho() {
                if tau_rho >= bound {
                    return Err(Error::StepsizeTooLarge {
                        tau_rho: tau_rho.to_f64_lossy(),
                        bound: bound.to_f64_lossy(),
                    });
                }
            }
            let two_e = T::lit(2.0) * epsilon;
            let upper = T::one() / two_e + tau_rho * (T::one() - delta);
            Ok(if x0 <= tau_rho {
                T::zero()
            } else if x0 <= upper {
                (x0 - tau_rho) / (T::one() - two_e * delta * tau_rho)
            } else {
                x0 - tau_rho * (T::one() - delta)
            })
        }
    }
}

/// Prox of `tau_rho * sum_i phi(sigma_i(X))` via a full SVD.
///
/// Singular values below `1e-12 * sigma_max` are treated as zero.
pub fn prox_nuclear<T: Scalar>(x: &Matrix<T>, tau_rho: T, phi: &Phi<T>) -> Result<Matrix<T>> {
    let svd = thin_svd(x);
    let smax = svd.values.first().copied().unwrap_or(T::zero());
    let cut = T::lit(1e-12) * smax;
    let mut out = Matrix::zeros(x.rows(), x.cols());
    let k = svd.values.len();
    for (j, &s) in svd.values.iter().enumerate() {
        if s <= cut {
            continue;
        }
        let g = prox_scalar_phi(s, tau_rho, phi)?;
        if g == T::zero() {
            continue;
        }
        let v = svd.vt.row(j);
        for i in 0..x.rows() {
            let ui = svd.u.get(i, j) * g;
            let row = &mut out.as_mut_slice()[i * x.cols()..(i + 1) * x.cols()];
            for (o, &vv) in row.iter_mut().zip(v) {
                *o += ui * vv;
            }
        }
    }
    debug_assert!(k == x.rows().min(x.cols()));
    Ok(out)
}

/// Singular value shrinkage of a lifted tensor viewed as a
/// `positions x n^2` matrix, done in place.
///
/// Only right singular vectors whose Gram eigenvalue can clear the
/// threshold are formed; the matching singular values are recomputed as
/// norms of `X v`. Returns the post-prox singular values (non-zero only),
/// in non-increasing order.
pub fn prox_nuclear_tensor<T: Scalar>(c: &mut LiftedTensor<T>, tau_rho: T, phi: &Phi<T>) -> Result<Vec<T>> {
    let m = c.grid().positions();
    let n = c.grid().atom_len();
    if let Some(bound) = phi.max_tau_rho() {
        if tau_rho >= bound {
            return Err(Error::StepsizeTooLarge { tau_rho: tau_rho.to_f64_lossy(), bound: bound.to_f64_lossy() });
        }
    }
    let x = c.as_mut_slice();
    let mut gram = Matrix::zeros(n, n);
    T::gemm(n, m, n, T::one(), x, 1, n as isize, x, n as isize, 1, T::zero(), gram.as_mut_slice(), n as isize, 1);
    for i in 0..n {
        for j in 0..i {
            let avg = (gram.get(i, j) + gram.get(j, i)) * T::lit(0.5);
            gram.set(i, j, avg);
            gram.set(j, i, avg);
        }
    }
    let eig = symmetric_eigen(&gram);
    let half = tau_rho * T::lit(0.5);
    let cand: Vec<usize> = (0..n).filter(|&j| eig.values[j].max(T::zero()).sqrt() > half).collect();
    let k = cand.len();
    if k == 0 {
        x.iter_mut().for_each(|v| *v = T::zero());
        return Ok(Vec::new());
    }
    // w: k x n, rows are candidate right singular vectors
    let mut w = Vec::with_capacity(k * n);
    for &j in &cand {
        w.extend_from_slice(eig.vectors.row(j));
    }
    // b = X w^T : m x k
    let mut b = vec![T::zero(); m * k];
    T::gemm(m, n, k, T::one(), x, n as isize, 1, &w, 1, n as isize, T::zero(), &mut b, k as isize, 1);
    let mut gains = Vec::with_capacity(k);
    let mut shrunk = Vec::with_capacity(k);
    for j in 0..k {
        let s = (0..m).map(|i| b[i * k + j] * b[i * k + j]).sum::<T>().sqrt();
        let g = if s > T::zero() { prox_scalar_phi(s, tau_rho, phi)? } else { T::zero() };
        gains.push(if g > T::zero() { g / s } else { T::zero() });
        if g > T::zero() {
            shrunk.push(g);
        }
    }
    for row in b.chunks_exact_mut(k) {
        for (v, &gn) in row.iter_mut().zip(&gains) {
            *v *= gn;
        }
    }
    // X = b w
    T::gemm(m, k, n, T::one(), &b, k as isize, 1, &w, n as isize, 1, T::zero(), x, n as isize, 1);
    shrunk.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    Ok(shrunk)
}

/// Projection onto the Euclidean ball of the given radius.
pub fn project_linf_l2<T: Scalar>(v: &[T], radius: T) -> Vec<T> {
    let norm = v.iter().map(|&x| x * x).sum::<T>().sqrt();
    let scale = T::one() / (norm / radius).max(T::one());
    v.iter().map(|&x| x * scale).collect()
}

#[inline]
fn shrink_factor<T: Scalar>(norm_sq: T, radius: T) -> T {
    T::one() / (norm_sq.sqrt() / radius).max(T::one())
}

/// Pointwise projection of a vector field onto `|p(i,j)| <= radius`.
pub fn project_vec_field<T: Scalar>(p: &mut VecField<T>, radius: T) {
    let (a, b) = p.channels_mut();
    for (x, y) in a.iter_mut().zip(b.iter_mut()) {
        let f = shrink_factor(*x * *x + *y * *y, radius);
        *x *= f;
        *y *= f;
    }
}

/// Pointwise projection of a symmetric field in the Frobenius norm
/// (off-diagonal counted twice).
pub fn project_sym_field<T: Scalar>(q: &mut SymField<T>, radius: T) {
    let two = T::lit(2.0);
    let (xx, yy, xy) = q.channels_mut();
    for ((a, b), c) in xx.iter_mut().zip(yy.iter_mut()).zip(xy.iter_mut()) {
        let f = shrink_factor(*a * *a + *b * *b + two * *c * *c, radius);
        *a *= f;
        *b *= f;
        *c *= f;
    }
}

/// Projection of every atom slice `C[a, b, :, :]` onto the l2 ball.
pub fn project_atom_slices<T: Scalar>(r: &mut LiftedTensor<T>, radius: T) {
    let len = r.grid().atom_len();
    for slice in r.as_mut_slice().chunks_exact_mut(len) {
        let f = shrink_factor(slice.iter().map(|&x| x * x).sum(), radius);
        if f < T::one() {
            slice.iter_mut().for_each(|x| *x *= f);
        }
    }
}

/// `argmin_u |u - u0|^2 / 2 + t_lambda |u - f0|^2 / 2`, per pixel.
#[inline]
pub fn prox_l2_data<T: Scalar>(u0: T, f0: T, t_lambda: T) -> T {
    (u0 + t_lambda * f0) / (T::one() + t_lambda)
}

/// Prox of the convex conjugate of `lambda |. - f0|^2 / 2` with step
/// `sigma`, per pixel.
#[inline]
pub fn prox_conj_l2_data<T: Scalar>(d0: T, f0: T, sigma: T, lambda: T) -> T {
    (d0 - sigma * f0) / (T::one() + sigma / lambda)
}

/// Reset observed pixels to the data.
pub fn project_inpaint<T: Scalar>(u: &mut Image<T>, f0: &Image<T>, mask: &Mask) {
    for ((x, &f), &keep) in u.as_mut_slice().iter_mut().zip(f0.as_slice()).zip(mask.as_slice()) {
        if keep {
            *x = f;
        }
    }
}
