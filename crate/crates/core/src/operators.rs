//! Linear operators of the saddle-point problem and their adjoints.
//!
//! Every forward map comes with an exact numerical transpose; the pairs are
//! exposed through [`LinearOperator`] so that adjointness and operator norms
//! can be checked generically.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{dot, Array, CoeffGrid, Image, LiftedTensor, MomentField, SymField, VecField};
use crate::scalar::Scalar;

/// Inner-product space used by power iteration and adjoint checks.
pub trait VectorSpace<T: Scalar>: Clone {
    fn dot(&self, other: &Self) -> T;
    fn scale_mut(&mut self, alpha: T);
    /// Overwrite with i.i.d. standard normal entries.
    fn randomize(&mut self, rng: &mut ChaCha8Rng);

    fn norm(&self) -> T {
        self.dot(self).sqrt()
    }
}

pub(crate) fn fill_normal<T: Scalar>(xs: &mut [T], rng: &mut ChaCha8Rng) {
    for x in xs {
        let z: f64 = StandardNormal.sample(rng);
        *x = T::lit(z);
    }
}

macro_rules! euclidean_space {
    ($ty:ident) => {
        impl<T: Scalar> VectorSpace<T> for $ty<T> {
            fn dot(&self, other: &Self) -> T {
                dot(self.as_slice(), other.as_slice())
            }
            fn scale_mut(&mut self, alpha: T) {
                self.scale(alpha)
            }
            fn randomize(&mut self, rng: &mut ChaCha8Rng) {
                fill_normal(self.as_mut_slice(), rng)
            }
        }
    };
}

euclidean_space!(Image);
euclidean_space!(VecField);
euclidean_space!(LiftedTensor);
euclidean_space!(MomentField);

impl<T: Scalar> VectorSpace<T> for SymField<T> {
    fn dot(&self, other: &Self) -> T {
        self.frobenius(other)
    }
    fn scale_mut(&mut self, alpha: T) {
        self.scale(alpha)
    }
    fn randomize(&mut self, rng: &mut ChaCha8Rng) {
        fill_normal(self.as_mut_slice(), rng)
    }
}

/// A linear map between inner-product spaces together with its adjoint.
pub trait LinearOperator<T: Scalar> {
    type Domain: VectorSpace<T>;
    type Range: VectorSpace<T>;

    fn domain_zero(&self) -> Self::Domain;
    fn range_zero(&self) -> Self::Range;
    fn apply(&self, x: &Self::Domain) -> Self::Range;
    fn adjoint(&self, y: &Self::Range) -> Self::Domain;
}

/// Largest singular value of `op` by power iteration on `op^* op` from a
/// seeded Gaussian start.
///
/// The returned value is the running maximum of `||op x_k||` over unit
/// iterates, so it never decreases with `iters`.
pub fn op_norm_estimate<T: Scalar, B: LinearOperator<T>>(op: &B, iters: usize, seed: u64) -> T {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = op.domain_zero();
    x.randomize(&mut rng);
    let mut best = T::zero();
    for _ in 0..iters.max(1) {
        let nx = x.norm();
        if nx == T::zero() {
            break;
        }
        x.scale_mut(T::one() / nx);
        let y = op.apply(&x);
        best = best.max(y.norm());
        x = op.adjoint(&y);
    }
    best
}

/// Normalized adjoint mismatch `|<Lx, y> - <x, L*y>| / (|x| |y| |L|)` for a
/// seeded random pair.
pub fn adjoint_gap<T: Scalar, B: LinearOperator<T>>(op: &B, op_norm: T, seed: u64) -> T {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = op.domain_zero();
    let mut y = op.range_zero();
    x.randomize(&mut rng);
    y.randomize(&mut rng);
    let lhs = op.apply(&x).dot(&y);
    let rhs = x.dot(&op.adjoint(&y));
    (lhs - rhs).abs() / (x.norm() * y.norm() * op_norm.max(T::epsilon()))
}

// ---------------------------------------------------------------------------
// lifting

/// `(KC)(i, j)`: sum of every atom entry whose stamped pixel lands on
/// `(i, j)`; contributions outside the image are cropped.
pub fn lift_forward<T: Scalar>(c: &LiftedTensor<T>) -> Image<T> {
    let g = *c.grid();
    let mut out = Image::zeros(g.rows, g.cols);
    lift_forward_into(c, &mut out);
    out
}

// Parallel over image rows; each pixel sums its contributions in (a, b)
// order regardless of the thread count.
pub(crate) fn lift_forward_into<T: Scalar>(c: &LiftedTensor<T>, out: &mut Image<T>) {
    let g = *c.grid();
    let (cols, n) = (g.cols as isize, g.n);
    out.as_mut_slice().par_chunks_mut(g.cols).enumerate().for_each(|(i, row)| {
        row.fill(T::zero());
        let i = i as isize;
        for a in 0..g.nc {
            let r = i - g.row_offset(a);
            if r < 0 || r >= n as isize {
                continue;
            }
            let r = r as usize;
            for b in 0..g.mc {
                let pb = g.col_offset(b);
                let (s_lo, s_hi) = ((-pb).max(0) as usize, ((cols - pb).min(n as isize)).max(0) as usize);
                if s_lo >= s_hi {
                    continue;
                }
                let dst = &mut row[(pb + s_lo as isize) as usize..(pb + s_hi as isize) as usize];
                for (d, &v) in dst.iter_mut().zip(&c.slice(a, b)[r * n + s_lo..r * n + s_hi]) {
                    *d += v;
                }
            }
        }
    });
}

/// Patch selection `K^* u`: slice `(a, b)` is the image window under the
/// atom at that position, zero outside the image.
pub fn lift_adjoint<T: Scalar>(u: &Image<T>, grid: &CoeffGrid) -> LiftedTensor<T> {
    let mut out = LiftedTensor::zeros(*grid);
    lift_adjoint_into(u, &mut out);
    out
}

pub(crate) fn lift_adjoint_into<T: Scalar>(u: &Image<T>, out: &mut LiftedTensor<T>) {
    let g = *out.grid();
    assert_eq!(u.dims(), (g.rows, g.cols), "lift_adjoint: image/grid mismatch");
    let (rows, cols, n) = (g.rows as isize, g.cols as isize, g.n);
    let img = u.as_slice();
    out.as_mut_slice().par_chunks_mut(g.mc * n * n).enumerate().for_each(|(a, band)| {
        let pa = g.row_offset(a);
        for (b, slice) in band.chunks_mut(n * n).enumerate() {
            let pb = g.col_offset(b);
            let (s_lo, s_hi) = ((-pb).max(0) as usize, ((cols - pb).min(n as isize)).max(0) as usize);
            slice.fill(T::zero());
            if s_lo >= s_hi {
                continue;
            }
            for r in 0..n {
                let i = pa + r as isize;
                if i < 0 || i >= rows {
                    continue;
                }
                let base = (i * cols + pb) + s_lo as isize;
                let src = &img[base as usize..base as usize + (s_hi - s_lo)];
                slice[r * n + s_lo..r * n + s_hi].copy_from_slice(src);
            }
        }
    });
}

// ---------------------------------------------------------------------------
// moments

/// Per-position zeroth moment and first moments along atom rows and
/// columns, with 0-based atom coordinates.
pub fn moments<T: Scalar>(c: &LiftedTensor<T>) -> MomentField<T> {
    let g = *c.grid();
    let n = g.n;
    let mut data = Vec::with_capacity(3 * g.positions());
    for slice in c.as_slice().chunks_exact(n * n) {
        let (mut m0, mut m1, mut m2) = (T::zero(), T::zero(), T::zero());
        for r in 0..n {
            let rf = T::from_usize_lossy(r);
            let mut row_sum = T::zero();
            for s in 0..n {
                let v = slice[r * n + s];
                row_sum += v;
                m2 += T::from_usize_lossy(s) * v;
            }
            m0 += row_sum;
            m1 += rf * row_sum;
        }
        data.extend([m0, m1, m2]);
    }
    MomentField::from_vec(g.nc, g.mc, data).expect("moments of finite tensor are finite")
}

/// Exact adjoint of [`moments`].
pub fn moments_adjoint<T: Scalar>(m: &MomentField<T>, grid: &CoeffGrid) -> LiftedTensor<T> {
    assert_eq!(m.dims(), (grid.nc, grid.mc), "moments_adjoint: field/grid mismatch");
    let n = grid.n;
    let mut out = LiftedTensor::zeros(*grid);
    for (slice, mom) in out.as_mut_slice().chunks_exact_mut(n * n).zip(m.as_slice().chunks_exact(3)) {
        for r in 0..n {
            let base = mom[0] + T::from_usize_lossy(r) * mom[1];
            for s in 0..n {
                slice[r * n + s] = base + T::from_usize_lossy(s) * mom[2];
            }
        }
    }
    out
}

/// Moments followed by a fixed per-position 3x3 transform `L^{-1}`, where
/// `L L^T` is the Gram matrix of the three moment rows.
///
/// The transformed operator has orthonormal rows (unit norm) and the same
/// kernel as [`moments`], so constraining it to zero is the same constraint.
#[derive(Clone, Debug)]
pub struct WhitenedMoments<T> {
    grid: CoeffGrid,
    // lower-triangular inverse Cholesky factor, row-major 3x3
    linv: [[T; 3]; 3],
}

impl<T: Scalar> WhitenedMoments<T> {
    pub fn new(grid: CoeffGrid) -> Self {
        let n = grid.n;
        let rows: Vec<[f64; 3]> = (0..n * n).map(|k| [1.0, (k / n) as f64, (k % n) as f64]).collect();
        let mut gram = [[0.0f64; 3]; 3];
        for w in &rows {
            for i in 0..3 {
                for j in 0..3 {
                    gram[i][j] += w[i] * w[j];
                }
            }
        }
        // Cholesky of the 3x3 Gram, then invert the triangular factor.
        let mut l = [[0.0f64; 3]; 3];
        for i in 0..3 {
            for j in 0..=i {
                let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
                if i == j {
                    l[i][i] = (gram[i][i] - s).max(f64::MIN_POSITIVE).sqrt();
                } else {
                    l[i][j] = (gram[i][j] - s) / l[j][j];
                }
            }
        }
        let mut inv = [[0.0f64; 3]; 3];
        for col in 0..3 {
            for i in 0..3 {
                let rhs = if i == col { 1.0 } else { 0.0 };
                let s: f64 = (0..i).map(|k| l[i][k] * inv[k][col]).sum();
                inv[i][col] = (rhs - s) / l[i][i];
            }
        }
        let linv = inv.map(|row| row.map(T::lit));
        Self { grid, linv }
    }

    pub fn grid(&self) -> &CoeffGrid {
        &self.grid
    }

    pub fn apply_to(&self, c: &LiftedTensor<T>) -> MomentField<T> {
        let mut m = moments(c);
        for mom in m.as_mut_slice().chunks_exact_mut(3) {
            let v = [mom[0], mom[1], mom[2]];
            for i in 0..3 {
                mom[i] = (0..3).map(|k| self.linv[i][k] * v[k]).sum();
            }
        }
        m
    }

    pub fn adjoint_of(&self, m: &MomentField<T>) -> LiftedTensor<T> {
        let mut t = m.clone();
        for mom in t.as_mut_slice().chunks_exact_mut(3) {
            let v = [mom[0], mom[1], mom[2]];
            for i in 0..3 {
                mom[i] = (0..3).map(|k| self.linv[k][i] * v[k]).sum();
            }
        }
        moments_adjoint(&t, &self.grid)
    }

    /// Orthogonal projection of every slice onto the kernel of the moments.
    pub fn project_out(&self, c: &mut LiftedTensor<T>) {
        let back = self.adjoint_of(&self.apply_to(c));
        c.axpy(-T::one(), &back);
    }
}

// ---------------------------------------------------------------------------
// gradient / divergence

/// Forward differences with replicate (Neumann) boundary; channel 0
/// differentiates along rows, channel 1 along columns.
pub fn gradient<T: Scalar>(u: &Image<T>) -> VecField<T> {
    let (rows, cols) = u.dims();
    let mut p = VecField::zeros(rows, cols);
    gradient_into(u, &mut p);
    p
}

pub(crate) fn gradient_into<T: Scalar>(u: &Image<T>, p: &mut VecField<T>) {
    let (rows, cols) = u.dims();
    let x = u.as_slice();
    let (p0, p1) = p.channels_mut();
    for i in 0..rows {
        for j in 0..cols {
            let k = i * cols + j;
            p0[k] = if i + 1 < rows { x[k + cols] - x[k] } else { T::zero() };
            p1[k] = if j + 1 < cols { x[k + 1] - x[k] } else { T::zero() };
        }
    }
}

/// Negative adjoint of [`gradient`].
pub fn divergence<T: Scalar>(p: &VecField<T>) -> Image<T> {
    let (rows, cols) = p.dims();
    let mut out = Image::zeros(rows, cols);
    divergence_into(p, &mut out);
    out
}

pub(crate) fn divergence_into<T: Scalar>(p: &VecField<T>, out: &mut Image<T>) {
    let (rows, cols) = p.dims();
    let (p0, p1) = (p.channel(0), p.channel(1));
    let o = out.as_mut_slice();
    for i in 0..rows {
        for j in 0..cols {
            let k = i * cols + j;
            let mut v = T::zero();
            if i + 1 < rows {
                v += p0[k];
            }
            if i > 0 {
                v -= p0[k - cols];
            }
            if j + 1 < cols {
                v += p1[k];
            }
            if j > 0 {
                v -= p1[k - 1];
            }
            o[k] = v;
        }
    }
}

// Backward difference restricted to interior nodes 1..=len-2 along a
// strided axis; zero on both boundary nodes, so constants and Neumann
// gradients of affine images are annihilated.
#[inline]
fn bdiff<T: Scalar>(w: &[T], k: usize, idx: usize, len: usize, stride: usize) -> T {
    if idx >= 1 && idx + 1 < len {
        w[k] - w[k - stride]
    } else {
        T::zero()
    }
}

// Transpose of `bdiff` along the same axis.
#[inline]
fn bdiff_t<T: Scalar>(z: &[T], k: usize, idx: usize, len: usize, stride: usize) -> T {
    let mut v = T::zero();
    if idx >= 1 && idx + 1 < len {
        v += z[k];
    }
    if idx + 2 < len {
        v -= z[k + stride];
    }
    v
}

/// Symmetrized Jacobian `(d_r v0, d_c v1, (d_c v0 + d_r v1) / 2)` with
/// backward differences.
pub fn sym_jacobian<T: Scalar>(v: &VecField<T>) -> SymField<T> {
    let (rows, cols) = v.dims();
    let mut q = SymField::zeros(rows, cols);
    sym_jacobian_into(v, &mut q);
    q
}

pub(crate) fn sym_jacobian_into<T: Scalar>(v: &VecField<T>, q: &mut SymField<T>) {
    let (rows, cols) = v.dims();
    let half = T::lit(0.5);
    let (v0, v1) = (v.channel(0), v.channel(1));
    let (qxx, qyy, qxy) = q.channels_mut();
    for i in 0..rows {
        for j in 0..cols {
            let k = i * cols + j;
            qxx[k] = bdiff(v0, k, i, rows, cols);
            qyy[k] = bdiff(v1, k, j, cols, 1);
            qxy[k] = half * (bdiff(v0, k, j, cols, 1) + bdiff(v1, k, i, rows, cols));
        }
    }
}

/// Negative adjoint of [`sym_jacobian`] under the Frobenius pairing.
pub fn sym_divergence<T: Scalar>(q: &SymField<T>) -> VecField<T> {
    let (rows, cols) = q.dims();
    let mut v = VecField::zeros(rows, cols);
    sym_divergence_into(q, &mut v);
    v
}

pub(crate) fn sym_divergence_into<T: Scalar>(q: &SymField<T>, out: &mut VecField<T>) {
    let (rows, cols) = q.dims();
    let (qxx, qyy, qxy) = (q.channel(0), q.channel(1), q.channel(2));
    let (o0, o1) = out.channels_mut();
    for i in 0..rows {
        for j in 0..cols {
            let k = i * cols + j;
            o0[k] = -(bdiff_t(qxx, k, i, rows, cols) + bdiff_t(qxy, k, j, cols, 1));
            o1[k] = -(bdiff_t(qyy, k, j, cols, 1) + bdiff_t(qxy, k, i, rows, cols));
        }
    }
}

// ---------------------------------------------------------------------------
// blur

/// Normalized, isotropic Gaussian kernel of odd size.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussKernel<T> {
    size: usize,
    sigma: T,
    weights: Vec<T>,
}

impl<T: Scalar> GaussKernel<T> {
    pub fn new(size: usize, sigma: T) -> Result<Self> {
        if size == 0 || size % 2 == 0 {
            return Err(Error::param("kernel-size", format!("must be odd and positive, got {size}")));
        }
        if !(sigma > T::zero()) || !sigma.is_finite() {
            return Err(Error::param("sigma", "must be positive and finite"));
        }
        let h = (size / 2) as isize;
        let two_s2 = T::lit(2.0) * sigma * sigma;
        let mut weights = Vec::with_capacity(size * size);
        for di in -h..=h {
            for dj in -h..=h {
                let d2 = T::lit((di * di + dj * dj) as f64);
                weights.push((-d2 / two_s2).exp());
            }
        }
        let total: T = weights.iter().copied().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(Self { size, sigma, weights })
    }

    /// The 1x1 identity kernel.
    pub fn identity() -> Self {
        Self { size: 1, sigma: T::zero(), weights: vec![T::one()] }
    }

    /// Kernel whose standard deviation is `relative * size` pixels.
    pub fn with_relative_sigma(size: usize, relative: T) -> Result<Self> {
        Self::new(size, relative * T::from_usize_lossy(size))
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn sigma(&self) -> T {
        self.sigma
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }
}

// Symmetric (edge-repeating) reflection of an out-of-range index.
#[inline]
fn reflect(i: isize, len: usize) -> usize {
    let len = len as isize;
    let period = 2 * len;
    let mut m = i.rem_euclid(period);
    if m >= len {
        m = period - 1 - m;
    }
    m as usize
}

/// Correlation with `k` under symmetric boundary reflection.
pub fn blur<T: Scalar>(u: &Image<T>, k: &GaussKernel<T>) -> Image<T> {
    let (rows, cols) = u.dims();
    let h = (k.size / 2) as isize;
    let x = u.as_slice();
    let mut out = Image::zeros(rows, cols);
    let o = out.as_mut_slice();
    for i in 0..rows {
        for j in 0..cols {
            let mut acc = T::zero();
            for di in 0..k.size {
                let ii = reflect(i as isize + di as isize - h, rows);
                let wrow = &k.weights[di * k.size..(di + 1) * k.size];
                for (dj, &w) in wrow.iter().enumerate() {
                    let jj = reflect(j as isize + dj as isize - h, cols);
                    acc += w * x[ii * cols + jj];
                }
            }
            o[i * cols + j] = acc;
        }
    }
    out
}

/// Exact transpose of [`blur`]: scatters every weighted read back to its
/// source pixel.
pub fn blur_adjoint<T: Scalar>(y: &Image<T>, k: &GaussKernel<T>) -> Image<T> {
    let (rows, cols) = y.dims();
    let h = (k.size / 2) as isize;
    let ys = y.as_slice();
    let mut out = Image::zeros(rows, cols);
    let o = out.as_mut_slice();
    for i in 0..rows {
        for j in 0..cols {
            let yv = ys[i * cols + j];
            for di in 0..k.size {
                let ii = reflect(i as isize + di as isize - h, rows);
                let wrow = &k.weights[di * k.size..(di + 1) * k.size];
                for (dj, &w) in wrow.iter().enumerate() {
                    let jj = reflect(j as isize + dj as isize - h, cols);
                    o[ii * cols + jj] += w * yv;
                }
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// operator wrappers

/// Identity on any vector space; `template` fixes the shape.
pub struct Identity<V> {
    pub template: V,
}

impl<T: Scalar, V: VectorSpace<T>> LinearOperator<T> for Identity<V> {
    type Domain = V;
    type Range = V;
    fn domain_zero(&self) -> V {
        let mut v = self.template.clone();
        v.scale_mut(T::zero());
        v
    }
    fn range_zero(&self) -> V {
        self.domain_zero()
    }
    fn apply(&self, x: &V) -> V {
        x.clone()
    }
    fn adjoint(&self, y: &V) -> V {
        y.clone()
    }
}

/// `∇` with adjoint `-div`.
pub struct GradientOp {
    pub rows: usize,
    pub cols: usize,
}

impl<T: Scalar> LinearOperator<T> for GradientOp {
    type Domain = Image<T>;
    type Range = VecField<T>;
    fn domain_zero(&self) -> Image<T> {
        Image::zeros(self.rows, self.cols)
    }
    fn range_zero(&self) -> VecField<T> {
        VecField::zeros(self.rows, self.cols)
    }
    fn apply(&self, x: &Image<T>) -> VecField<T> {
        gradient(x)
    }
    fn adjoint(&self, y: &VecField<T>) -> Image<T> {
        let mut d = divergence(y);
        d.scale(-T::one());
        d
    }
}

/// `ℰ` with adjoint `-sym_div` (Frobenius pairing on the range).
pub struct SymJacobianOp {
    pub rows: usize,
    pub cols: usize,
}

impl<T: Scalar> LinearOperator<T> for SymJacobianOp {
    type Domain = VecField<T>;
    type Range = SymField<T>;
    fn domain_zero(&self) -> VecField<T> {
        VecField::zeros(self.rows, self.cols)
    }
    fn range_zero(&self) -> SymField<T> {
        SymField::zeros(self.rows, self.cols)
    }
    fn apply(&self, x: &VecField<T>) -> SymField<T> {
        sym_jacobian(x)
    }
    fn adjoint(&self, y: &SymField<T>) -> VecField<T> {
        let mut d = sym_divergence(y);
        d.scale(-T::one());
        d
    }
}

/// Lifting `K` with adjoint patch selection.
pub struct LiftingOp {
    pub grid: CoeffGrid,
}

impl<T: Scalar> LinearOperator<T> for LiftingOp {
    type Domain = LiftedTensor<T>;
    type Range = Image<T>;
    fn domain_zero(&self) -> LiftedTensor<T> {
        LiftedTensor::zeros(self.grid)
    }
    fn range_zero(&self) -> Image<T> {
        Image::zeros(self.grid.rows, self.grid.cols)
    }
    fn apply(&self, x: &LiftedTensor<T>) -> Image<T> {
        lift_forward(x)
    }
    fn adjoint(&self, y: &Image<T>) -> LiftedTensor<T> {
        lift_adjoint(y, &self.grid)
    }
}

/// Moment operator `M`.
pub struct MomentOp {
    pub grid: CoeffGrid,
}

impl<T: Scalar> LinearOperator<T> for MomentOp {
    type Domain = LiftedTensor<T>;
    type Range = MomentField<T>;
    fn domain_zero(&self) -> LiftedTensor<T> {
        LiftedTensor::zeros(self.grid)
    }
    fn range_zero(&self) -> MomentField<T> {
        MomentField::zeros(self.grid.nc, self.grid.mc)
    }
    fn apply(&self, x: &LiftedTensor<T>) -> MomentField<T> {
        moments(x)
    }
    fn adjoint(&self, y: &MomentField<T>) -> LiftedTensor<T> {
        moments_adjoint(y, &self.grid)
    }
}

impl<T: Scalar> LinearOperator<T> for WhitenedMoments<T> {
    type Domain = LiftedTensor<T>;
    type Range = MomentField<T>;
    fn domain_zero(&self) -> LiftedTensor<T> {
        LiftedTensor::zeros(self.grid)
    }
    fn range_zero(&self) -> MomentField<T> {
        MomentField::zeros(self.grid.nc, self.grid.mc)
    }
    fn apply(&self, x: &LiftedTensor<T>) -> MomentField<T> {
        self.apply_to(x)
    }
    fn adjoint(&self, y: &MomentField<T>) -> LiftedTensor<T> {
        self.adjoint_of(y)
    }
}

/// Gaussian blur `A`.
pub struct BlurOp<T> {
    pub kernel: GaussKernel<T>,
    pub rows: usize,
    pub cols: usize,
}

impl<T: Scalar> LinearOperator<T> for BlurOp<T> {
    type Domain = Image<T>;
    type Range = Image<T>;
    fn domain_zero(&self) -> Image<T> {
        Image::zeros(self.rows, self.cols)
    }
    fn range_zero(&self) -> Image<T> {
        Image::zeros(self.rows, self.cols)
    }
    fn apply(&self, x: &Image<T>) -> Image<T> {
        blur(x, &self.kernel)
    }
    fn adjoint(&self, y: &Image<T>) -> Image<T> {
        blur_adjoint(y, &self.kernel)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::coeff_grid;
    use crate::linalg::{symmetric_eigen, Matrix};
    use proptest::prelude::*;
    use rand::Rng;

    fn rand_tensor(g: CoeffGrid, seed: u64) -> LiftedTensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = (0..g.tensor_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        LiftedTensor::from_vec(g, d).unwrap()
    }

    // Direct quadruple loop over (a, b, r, s), independent of the row-slab
    // implementation.
    fn lift_brute(c: &LiftedTensor<f64>) -> Image<f64> {
        let g = *c.grid();
        let mut out = Image::zeros(g.rows, g.cols);
        for a in 0..g.nc {
            for b in 0..g.mc {
                for r in 0..g.n {
                    for s in 0..g.n {
                        let i = a as isize * g.eta as isize - (g.n as isize - 1) + r as isize;
                        let j = b as isize * g.eta as isize - (g.n as isize - 1) + s as isize;
                        if i >= 0 && j >= 0 && (i as usize) < g.rows && (j as usize) < g.cols {
                            let v = out.get(i as usize, j as usize) + c.get(a, b, r, s);
                            out.set(i as usize, j as usize, v);
                        }
                    }
                }
            }
        }
        out
    }

    #[test]
    fn lift_matches_brute_force() {
        let g = coeff_grid(30, 30, 15, 3).unwrap();
        let c = rand_tensor(g, 1);
        let fast = lift_forward(&c);
        let slow = lift_brute(&c);
        for (x, y) in fast.as_slice().iter().zip(slow.as_slice()) {
            assert!((x - y).abs() <= 1e-12);
        }
        let g2 = coeff_grid(11, 14, 4, 2).unwrap();
        let c2 = rand_tensor(g2, 2);
        for (x, y) in lift_forward(&c2).as_slice().iter().zip(lift_brute(&c2).as_slice()) {
            assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn lift_single_entry() {
        let g = coeff_grid(10, 10, 4, 2).unwrap();
        let mut c = LiftedTensor::zeros(g);
        c.set(3, 2, 1, 3, 1.0);
        let img = lift_forward(&c);
        let (i, j) = ((g.row_offset(3) + 1) as usize, (g.col_offset(2) + 3) as usize);
        assert_eq!(img.get(i, j), 1.0);
        assert_eq!(img.as_slice().iter().sum::<f64>(), 1.0);
        // entry landing outside the image
        let mut c = LiftedTensor::zeros(g);
        c.set(0, 0, 0, 0, 1.0);
        assert!(lift_forward(&c).as_slice().iter().all(|&x| x == 0.0));
        assert!(lift_forward(&LiftedTensor::<f64>::zeros(g)).as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn lift_of_rank_one_is_strided_convolution() {
        let g = coeff_grid(20, 17, 6, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let coeffs: Vec<f64> = (0..g.positions()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let atom: Vec<f64> = (0..36).map(|_| rng.random_range(-1.0..1.0)).collect();
        let img = lift_forward(&LiftedTensor::outer(g, &coeffs, &atom).unwrap());
        // two-loop convolution: for each pixel, sum over positions covering it
        for i in 0..g.rows {
            for j in 0..g.cols {
                let mut acc = 0.0;
                for a in 0..g.nc {
                    for b in 0..g.mc {
                        let r = i as isize - g.row_offset(a);
                        let s = j as isize - g.col_offset(b);
                        if (0..6).contains(&r) && (0..6).contains(&s) {
                            acc += coeffs[a * g.mc + b] * atom[(r * 6 + s) as usize];
                        }
                    }
                }
                assert!((img.get(i, j) - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn lift_is_linear() {
        let g = coeff_grid(16, 16, 6, 3).unwrap();
        let (c1, c2) = (rand_tensor(g, 7), rand_tensor(g, 8));
        let mut comb = c1.clone();
        comb.scale(0.3);
        comb.axpy(-1.7, &c2);
        let lhs = lift_forward(&comb);
        let mut rhs = lift_forward(&c1);
        rhs.scale(0.3);
        rhs.axpy(-1.7, &lift_forward(&c2));
        for (x, y) in lhs.as_slice().iter().zip(rhs.as_slice()) {
            assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn patch_selection_at_full_stride_is_right_inverse() {
        let g = coeff_grid(20, 20, 5, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u: Image<f64> = Image::from_fn(20, 20, |_, _| rng.random_range(0.0..1.0));
        let back = lift_forward(&lift_adjoint(&u, &g));
        for (x, y) in back.as_slice().iter().zip(u.as_slice()) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn adjoint_pairs_hold() {
        let g = coeff_grid(19, 23, 6, 3).unwrap();
        let lift = LiftingOp { grid: g };
        let (lift_norm, mom_norm): (f64, f64) =
            (op_norm_estimate(&lift, 20, 1), op_norm_estimate(&MomentOp { grid: g }, 20, 1));
        let mom = MomentOp { grid: g };
        let wmom = WhitenedMoments::new(g);
        let grad = GradientOp { rows: 19, cols: 23 };
        let sym = SymJacobianOp { rows: 19, cols: 23 };
        let blur = BlurOp { kernel: GaussKernel::new(5, 1.1).unwrap(), rows: 19, cols: 23 };
        for seed in 0..10 {
            assert!(adjoint_gap(&lift, lift_norm, seed) <= 1e-10);
            assert!(adjoint_gap(&mom, mom_norm, seed) <= 1e-10);
            assert!(adjoint_gap(&wmom, 1.0, seed) <= 1e-10);
            assert!(adjoint_gap(&grad, 2.0, seed) <= 1e-10);
            assert!(adjoint_gap(&sym, 2.0, seed) <= 1e-10);
            assert!(adjoint_gap(&blur, 1.0, seed) <= 1e-10);
        }
    }

    #[test]
    fn moments_examples() {
        let n = 5;
        let g = coeff_grid(12, 12, n, 1).unwrap();
        let mut c = LiftedTensor::<f64>::zeros(g);
        c.slice_mut(2, 3).iter_mut().for_each(|x| *x = 1.0 / 25.0);
        let m = moments(&c);
        assert!((m.get(2, 3, 0) - 1.0).abs() < 1e-15);
        // centered ramp r - (n-1)/2
        let mut c = LiftedTensor::zeros(g);
        for r in 0..n {
            for s in 0..n {
                c.set(1, 1, r, s, r as f64 - 2.0);
            }
        }
        let m = moments(&c);
        assert!(m.get(1, 1, 0).abs() < 1e-14);
        // sum_r r (r - 2) * n = n * (0 -1 +0 +3 +8) = 50
        assert!((m.get(1, 1, 1) - 50.0).abs() < 1e-12);
        assert!(m.get(1, 1, 2).abs() < 1e-12);
    }

    #[test]
    fn moments_match_loop_oracle() {
        let g = coeff_grid(14, 13, 4, 2).unwrap();
        let c = rand_tensor(g, 21);
        let m = moments(&c);
        for a in 0..g.nc {
            for b in 0..g.mc {
                let mut want = [0.0; 3];
                for r in 0..4 {
                    for s in 0..4 {
                        let v = c.get(a, b, r, s);
                        want[0] += v;
                        want[1] += r as f64 * v;
                        want[2] += s as f64 * v;
                    }
                }
                for ch in 0..3 {
                    assert!((m.get(a, b, ch) - want[ch]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn moments_adjoint_impulses() {
        let g = coeff_grid(8, 8, 3, 1).unwrap();
        let mut m = MomentField::zeros(g.nc, g.mc);
        let zero = moments_adjoint(&m, &g);
        assert!(zero.as_slice().iter().all(|&x| x == 0.0));
        let idx = (2 * g.mc + 1) * 3 + 1;
        m.as_mut_slice()[idx] = 1.0;
        let c = moments_adjoint(&m, &g);
        for r in 0..3 {
            for s in 0..3 {
                assert_eq!(c.get(2, 1, r, s), r as f64);
            }
        }
    }

    #[test]
    fn whitened_moments_have_orthonormal_rows_and_same_kernel() {
        let g = coeff_grid(20, 20, 15, 3).unwrap();
        let w = WhitenedMoments::<f64>::new(g);
        // W W^T = I on one position: apply to adjoint of unit moment vectors
        for ch in 0..3 {
            let mut m = MomentField::zeros(g.nc, g.mc);
            m.as_mut_slice()[ch] = 1.0;
            let back = w.apply_to(&w.adjoint_of(&m));
            for k in 0..3 {
                let want = if k == ch { 1.0 } else { 0.0 };
                assert!((back.as_slice()[k] - want).abs() < 1e-12);
            }
        }
        // a tensor in ker(M) stays in ker(W)
        let mut c = LiftedTensor::zeros(g);
        c.set(0, 0, 0, 0, 1.0);
        c.set(0, 0, 0, 1, -2.0);
        c.set(0, 0, 0, 2, 1.0);
        assert!(moments(&c).max_abs() < 1e-14);
        assert!(w.apply_to(&c).max_abs() < 1e-13);
    }

    #[test]
    fn gradient_examples() {
        let c = Image::constant(5, 4, 0.7);
        assert!(gradient(&c).max_abs() == 0.0);
        let ramp = Image::from_fn(5, 4, |i, _| i as f64);
        let g = gradient(&ramp);
        for i in 0..5 {
            for j in 0..4 {
                let want = if i < 4 { 1.0 } else { 0.0 };
                assert_eq!(g.channel(0)[i * 4 + j], want);
                assert_eq!(g.channel(1)[i * 4 + j], 0.0);
            }
        }
    }

    #[test]
    fn sym_jacobian_examples() {
        let mut v = VecField::zeros(6, 7);
        v.channel_mut(0).iter_mut().for_each(|x| *x = 0.4);
        v.channel_mut(1).iter_mut().for_each(|x| *x = -1.2);
        assert_eq!(sym_jacobian(&v).max_abs(), 0.0);
        let affine = Image::from_fn(6, 7, |i, j| 0.3 * i as f64 - 0.8 * j as f64 + 2.0);
        assert!(sym_jacobian(&gradient(&affine)).max_abs() < 1e-14);
    }

    #[test]
    fn gradient_norm_approaches_sqrt8() {
        // dense oracle on a small grid
        let (rows, cols) = (6, 5);
        let npx = rows * cols;
        let mut gt_g = Matrix::<f64>::zeros(npx, npx);
        for k in 0..npx {
            let mut e = Image::zeros(rows, cols);
            e.as_mut_slice()[k] = 1.0;
            let mut col = divergence(&gradient(&e));
            col.scale(-1.0);
            for (i, &v) in col.as_slice().iter().enumerate() {
                gt_g.set(i, k, v);
            }
        }
        let eig = symmetric_eigen(&gt_g);
        let exact = eig.values[0].sqrt();
        let est: f64 = op_norm_estimate(&GradientOp { rows, cols }, 500, 3);
        assert!((est - exact).abs() < 1e-6 * exact, "{est} vs {exact}");
        assert!(exact < 8f64.sqrt());
        // large grid: close to the sqrt(8) bound
        let big: f64 = op_norm_estimate(&GradientOp { rows: 96, cols: 96 }, 300, 3);
        assert!((big - 8f64.sqrt()).abs() < 0.01 * 8f64.sqrt(), "{big}");
    }

    #[test]
    fn op_norm_of_identity_and_monotonicity() {
        let id = Identity { template: Image::<f64>::zeros(7, 9) };
        assert!((op_norm_estimate(&id, 3, 1) - 1.0).abs() < 1e-6);
        let op = GradientOp { rows: 24, cols: 24 };
        let mut prev = 0.0f64;
        for iters in [1, 2, 5, 10, 20, 40, 80] {
            let l: f64 = op_norm_estimate(&op, iters, 4);
            assert!(l >= prev);
            prev = l;
        }
    }

    #[test]
    fn blur_examples() {
        let k = GaussKernel::new(9, 1.8).unwrap();
        assert!((k.weights().iter().sum::<f64>() - 1.0).abs() < 1e-14);
        // rotation symmetry
        for i in 0..9 {
            for j in 0..9 {
                assert!((k.weights()[i * 9 + j] - k.weights()[j * 9 + (8 - i)]).abs() < 1e-16);
            }
        }
        let mut delta = Image::zeros(21, 21);
        delta.set(10, 10, 1.0);
        let b = blur(&delta, &k);
        for i in 0..9 {
            for j in 0..9 {
                assert!((b.get(6 + i, 6 + j) - k.weights()[i * 9 + j]).abs() < 1e-16);
            }
        }
        let c = Image::constant(12, 15, 0.37);
        for x in blur(&c, &k).as_slice() {
            assert!((x - 0.37).abs() < 1e-15);
        }
        let id = GaussKernel::<f64>::identity();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u = Image::from_fn(5, 6, |_, _| rng.random_range(0.0..1.0));
        assert_eq!(blur(&u, &id), u);
        assert!(GaussKernel::<f64>::new(4, 1.0).is_err());
        assert!((GaussKernel::<f64>::with_relative_sigma(9, 0.2).unwrap().sigma() - 1.8).abs() < 1e-12);
    }

    #[test]
    fn reflect_is_symmetric_extension() {
        assert_eq!(reflect(-1, 5), 0);
        assert_eq!(reflect(-2, 5), 1);
        assert_eq!(reflect(5, 5), 4);
        assert_eq!(reflect(6, 5), 3);
        assert_eq!(reflect(2, 5), 2);
    }

    fn gap<B: LinearOperator<f64>>(op: &B, seed: u64) -> f64 {
        adjoint_gap(op, op_norm_estimate(op, 30, seed), seed)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn differential_operators_are_adjoint(rows in 1usize..20, cols in 1usize..20, seed in any::<u64>()) {
            let (grad, sym) = (GradientOp { rows, cols }, SymJacobianOp { rows, cols });
            prop_assert!(gap(&grad, seed) <= 1e-12);
            prop_assert!(gap(&sym, seed) <= 1e-12);
        }

        #[test]
        fn lifting_and_moments_are_adjoint(
            rows in 6usize..24, cols in 6usize..24, eta in 1usize..4, k in 1usize..3, seed in any::<u64>(),
        ) {
            let n = (eta * k).min(rows.min(cols) - 1) / eta * eta;
            prop_assume!(n > 0);
            let grid = coeff_grid(rows, cols, n, eta).unwrap();
            let (lift, mom) = (LiftingOp { grid }, MomentOp { grid });
            prop_assert!(gap(&lift, seed) <= 1e-12);
            prop_assert!(gap(&mom, seed) <= 1e-12);
            prop_assert!(gap(&WhitenedMoments::<f64>::new(grid), seed) <= 1e-12);
        }

        #[test]
        fn lifting_agrees_with_direct_stamping(rows in 5usize..20, cols in 5usize..20, eta in 1usize..3, seed in any::<u64>()) {
            let n = 4 / eta * eta;
            let grid = coeff_grid(rows, cols, n, eta).unwrap();
            let c = rand_tensor(grid, seed);
            let (fast, slow) = (lift_forward(&c), lift_brute(&c));
            for (x, y) in fast.as_slice().iter().zip(slow.as_slice()) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }

        #[test]
        fn blur_is_adjoint(rows in 1usize..20, cols in 1usize..20, half in 0usize..4, sigma in 0.3f64..3.0, seed in any::<u64>()) {
            let kernel = GaussKernel::new(2 * half + 1, sigma).unwrap();
            let op = BlurOp { kernel, rows, cols };
            prop_assert!(gap(&op, seed) <= 1e-12);
        }

        #[test]
        fn moment_projection_is_an_idempotent_annihilator(rows in 6usize..20, cols in 6usize..20, seed in any::<u64>()) {
            let grid = coeff_grid(rows, cols, 3, 1).unwrap();
            let w = WhitenedMoments::<f64>::new(grid);
            let mut c = rand_tensor(grid, seed);
            w.project_out(&mut c);
            let m = moments(&c);
            prop_assert!(m.as_slice().iter().all(|v| v.abs() <= 1e-12));
            let once = c.clone();
            w.project_out(&mut c);
            for (x, y) in c.as_slice().iter().zip(once.as_slice()) {
                prop_assert!((x - y).abs() <= 1e-13);
            }
        }
    }
}
