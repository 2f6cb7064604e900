//! Storage for images, per-pixel vector and tensor fields, and the lifted
//! four-index tensor together with its coefficient grid.
//!
//! All containers are dense, row-major and zero-indexed. Multi-channel
//! fields on the image grid are stored channel-major (one full plane per
//! channel); the moment field is stored position-major with its three
//! channels innermost.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Flat storage shared by every grid container.
pub trait Array<T: Scalar> {
    fn shape(&self) -> Vec<usize>;
    fn as_slice(&self) -> &[T];
    fn as_mut_slice(&mut self) -> &mut [T];

    fn len(&self) -> usize {
        self.as_slice().len()
    }

    fn is_empty(&self) -> bool {
        self.as_slice().is_empty()
    }

    fn fill(&mut self, value: T) {
        self.as_mut_slice().iter_mut().for_each(|x| *x = value);
    }

    fn scale(&mut self, alpha: T) {
        self.as_mut_slice().iter_mut().for_each(|x| *x *= alpha);
    }

    /// `self += alpha * x`.
    fn axpy(&mut self, alpha: T, x: &Self)
    where
        Self: Sized,
    {
        debug_assert_eq!(self.shape(), x.shape());
        for (y, &xv) in self.as_mut_slice().iter_mut().zip(x.as_slice()) {
            *y += alpha * xv;
        }
    }

    /// Plain sum of squares.
    fn norm_sq(&self) -> T {
        self.as_slice().iter().map(|&x| x * x).sum()
    }

    fn max_abs(&self) -> T {
        self.as_slice().iter().fold(T::zero(), |m, &x| m.max(x.abs()))
    }

    fn check_finite(&self) -> Result<()> {
        match self.as_slice().iter().position(|x| !x.is_finite()) {
            Some(index) => Err(Error::NonFinite { index }),
            None => Ok(()),
        }
    }
}

/// Euclidean pairing: sum of elementwise products.
pub fn inner<T: Scalar, A: Array<T>>(a: &A, b: &A) -> Result<T> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch { expected: a.shape(), got: b.shape() });
    }
    Ok(dot(a.as_slice(), b.as_slice()))
}

pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn check_len(expected: Vec<usize>, len: usize) -> Result<()> {
    let want: usize = expected.iter().product();
    if want != len {
        return Err(Error::ShapeMismatch { expected, got: vec![len] });
    }
    Ok(())
}

fn check_values<T: Scalar>(data: &[T]) -> Result<()> {
    match data.iter().position(|x| !x.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

macro_rules! impl_array {
    ($ty:ident, |$s:ident| $shape:expr) => {
        impl<T: Scalar> Array<T> for $ty<T> {
            fn shape(&self) -> Vec<usize> {
                let $s = self;
                $shape
            }
            fn as_slice(&self) -> &[T] {
                &self.data
            }
            fn as_mut_slice(&mut self) -> &mut [T] {
                &mut self.data
            }
        }
    };
}

/// Grayscale image with `rows x cols` pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct Image<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl_array!(Image, |s| vec![s.rows, s.cols]);

impl<T: Scalar> Image<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn constant(rows: usize, cols: usize, value: T) -> Self {
        Self { rows, cols, data: vec![value; rows * cols] }
    }

    /// Checked constructor: rejects wrong lengths and non-finite values.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        check_len(vec![rows, cols], data.len())?;
        check_values(&data)?;
        Ok(Self { rows, cols, data })
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

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: T) {
        self.data[i * self.cols + j] = value;
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&x| f(x)).collect() }
    }

    pub fn sub(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dims(), other.dims());
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| a - b).collect();
        Self { rows: self.rows, cols: self.cols, data }
    }

    pub fn add(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dims(), other.dims());
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| a + b).collect();
        Self { rows: self.rows, cols: self.cols, data }
    }

    pub fn mean(&self) -> T {
        if self.data.is_empty() {
            return T::zero();
        }
        self.data.iter().copied().sum::<T>() / T::from_usize_lossy(self.data.len())
    }

    pub fn min_max(&self) -> (T, T) {
        self.data
            .iter()
            .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &x| (lo.min(x), hi.max(x)))
    }

    /// Copy of the sub-image starting at `(top, left)`.
    pub fn crop(&self, top: usize, left: usize, rows: usize, cols: usize) -> Self {
        assert!(top + rows <= self.rows && left + cols <= self.cols, "crop out of bounds");
        Self::from_fn(rows, cols, |i, j| self.get(top + i, left + j))
    }
}

/// Per-pixel 2-vector field (two channel planes).
#[derive(Clone, Debug, PartialEq)]
pub struct VecField<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl_array!(VecField, |s| vec![2, s.rows, s.cols]);

impl<T: Scalar> VecField<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); 2 * rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        check_len(vec![2, rows, cols], data.len())?;
        check_values(&data)?;
        Ok(Self { rows, cols, data })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn channel(&self, c: usize) -> &[T] {
        let plane = self.rows * self.cols;
        &self.data[c * plane..(c + 1) * plane]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [T] {
        let plane = self.rows * self.cols;
        &mut self.data[c * plane..(c + 1) * plane]
    }

    pub fn channels_mut(&mut self) -> (&mut [T], &mut [T]) {
        let plane = self.rows * self.cols;
        self.data.split_at_mut(plane)
    }

    /// Sum over pixels of the Euclidean norm of the 2-vector.
    pub fn l1_norm(&self) -> T {
        let (a, b) = (self.channel(0), self.channel(1));
        a.iter().zip(b).map(|(&x, &y)| (x * x + y * y).sqrt()).sum()
    }

    /// Largest pointwise Euclidean norm.
    pub fn linf_norm(&self) -> T {
        let (a, b) = (self.channel(0), self.channel(1));
        a.iter().zip(b).fold(T::zero(), |m, (&x, &y)| m.max((x * x + y * y).sqrt()))
    }
}

/// Per-pixel symmetric 2x2 tensor field with channels `(xx, yy, xy)`.
///
/// The natural pairing is the Frobenius one, which counts the off-diagonal
/// channel twice; see [`SymField::frobenius`].
#[derive(Clone, Debug, PartialEq)]
pub struct SymField<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl_array!(SymField, |s| vec![3, s.rows, s.cols]);

impl<T: Scalar> SymField<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); 3 * rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        check_len(vec![3, rows, cols], data.len())?;
        check_values(&data)?;
        Ok(Self { rows, cols, data })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn channel(&self, c: usize) -> &[T] {
        let plane = self.rows * self.cols;
        &self.data[c * plane..(c + 1) * plane]
    }

    pub fn channels_mut(&mut self) -> (&mut [T], &mut [T], &mut [T]) {
        let plane = self.rows * self.cols;
        let (a, rest) = self.data.split_at_mut(plane);
        let (b, c) = rest.split_at_mut(plane);
        (a, b, c)
    }

    /// Frobenius pairing of the full symmetric matrices.
    pub fn frobenius(&self, other: &Self) -> T {
        let two = T::lit(2.0);
        let mut acc = dot(self.channel(0), other.channel(0)) + dot(self.channel(1), other.channel(1));
        acc += two * dot(self.channel(2), other.channel(2));
        acc
    }

    pub fn frobenius_norm_sq(&self) -> T {
        self.frobenius(self)
    }

    /// Sum over pixels of the pointwise Frobenius norm.
    pub fn l1_norm(&self) -> T {
        let two = T::lit(2.0);
        let (a, b, c) = (self.channel(0), self.channel(1), self.channel(2));
        (0..a.len()).map(|k| (a[k] * a[k] + b[k] * b[k] + two * c[k] * c[k]).sqrt()).sum()
    }

    /// Largest pointwise Frobenius norm.
    pub fn linf_norm(&self) -> T {
        let two = T::lit(2.0);
        let (a, b, c) = (self.channel(0), self.channel(1), self.channel(2));
        (0..a.len()).fold(T::zero(), |m, k| m.max((a[k] * a[k] + b[k] * b[k] + two * c[k] * c[k]).sqrt()))
    }
}

/// Admissible atom positions for a given image and atom size.
///
/// Position index `a` places the atom's top-left pixel at row offset
/// `a * eta - (n - 1)`, so atoms may hang over every image border.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CoeffGrid {
    pub rows: usize,
    pub cols: usize,
    pub n: usize,
    pub eta: usize,
    pub nc: usize,
    pub mc: usize,
}

/// Builds the strided coefficient grid for an `rows x cols` image.
pub fn coeff_grid(rows: usize, cols: usize, n: usize, eta: usize) -> Result<CoeffGrid> {
    if eta == 0 || n == 0 || n % eta != 0 {
        return Err(Error::InvalidStride { n, eta });
    }
    let min_dim = rows.min(cols);
    if n >= min_dim {
        return Err(Error::AtomTooLarge { n, min_dim });
    }
    Ok(CoeffGrid {
        rows,
        cols,
        n,
        eta,
        nc: (rows + n - 2) / eta + 1,
        mc: (cols + n - 2) / eta + 1,
    })
}

impl CoeffGrid {
    #[inline]
    pub fn row_offset(&self, a: usize) -> isize {
        (a * self.eta) as isize - (self.n as isize - 1)
    }

    #[inline]
    pub fn col_offset(&self, b: usize) -> isize {
        (b * self.eta) as isize - (self.n as isize - 1)
    }

    pub fn positions(&self) -> usize {
        self.nc * self.mc
    }

    pub fn atom_len(&self) -> usize {
        self.n * self.n
    }

    /// Total number of tensor entries.
    pub fn tensor_len(&self) -> usize {
        self.positions() * self.atom_len()
    }

    /// Position index whose atom top-left sits at `(row, col)`, if any.
    pub fn position_at(&self, row: isize, col: isize) -> Option<(usize, usize)> {
        let shift = self.n as isize - 1;
        let (ra, cb) = (row + shift, col + shift);
        let eta = self.eta as isize;
        if ra < 0 || cb < 0 || ra % eta != 0 || cb % eta != 0 {
            return None;
        }
        let (a, b) = ((ra / eta) as usize, (cb / eta) as usize);
        (a < self.nc && b < self.mc).then_some((a, b))
    }
}

/// Lifted tensor with dims `(nc, mc, n, n)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LiftedTensor<T> {
    grid: CoeffGrid,
    data: Vec<T>,
}

impl_array!(LiftedTensor, |s| vec![s.grid.nc, s.grid.mc, s.grid.n, s.grid.n]);

impl<T: Scalar> LiftedTensor<T> {
    pub fn zeros(grid: CoeffGrid) -> Self {
        Self { grid, data: vec![T::zero(); grid.tensor_len()] }
    }

    pub fn from_vec(grid: CoeffGrid, data: Vec<T>) -> Result<Self> {
        check_len(vec![grid.nc, grid.mc, grid.n, grid.n], data.len())?;
        check_values(&data)?;
        Ok(Self { grid, data })
    }

    /// Outer product `c ⊗ p` of a coefficient map (`nc x mc`, row-major)
    /// and an atom (`n x n`, row-major).
    pub fn outer(grid: CoeffGrid, coeffs: &[T], atom: &[T]) -> Result<Self> {
        check_len(vec![grid.nc, grid.mc], coeffs.len())?;
        check_len(vec![grid.n, grid.n], atom.len())?;
        let mut data = Vec::with_capacity(grid.tensor_len());
        for &c in coeffs {
            data.extend(atom.iter().map(|&p| c * p));
        }
        Self::from_vec(grid, data)
    }

    pub fn grid(&self) -> &CoeffGrid {
        &self.grid
    }

    #[inline]
    pub fn index(&self, a: usize, b: usize, r: usize, s: usize) -> usize {
        let n = self.grid.n;
        ((a * self.grid.mc + b) * n + r) * n + s
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize, r: usize, s: usize) -> T {
        self.data[self.index(a, b, r, s)]
    }

    #[inline]
    pub fn set(&mut self, a: usize, b: usize, r: usize, s: usize, value: T) {
        let k = self.index(a, b, r, s);
        self.data[k] = value;
    }

    /// The `n x n` atom slice at coefficient position `(a, b)`.
    pub fn slice(&self, a: usize, b: usize) -> &[T] {
        let len = self.grid.atom_len();
        let start = (a * self.grid.mc + b) * len;
        &self.data[start..start + len]
    }

    pub fn slice_mut(&mut self, a: usize, b: usize) -> &mut [T] {
        let len = self.grid.atom_len();
        let start = (a * self.grid.mc + b) * len;
        &mut self.data[start..start + len]
    }

    /// Mixed 1-2 norm: sum over positions of the Euclidean norm of the slice.
    pub fn l12_norm(&self) -> T {
        self.data
            .chunks_exact(self.grid.atom_len())
            .map(|s| s.iter().map(|&x| x * x).sum::<T>().sqrt())
            .sum()
    }
}

/// Matrix view with one row per coefficient position and one column per
/// atom pixel. Both indices enumerate their pairs in row-major order.
pub fn reshape_to_matrix<T: Scalar>(c: &LiftedTensor<T>) -> Matrix<T> {
    let g = c.grid;
    Matrix::from_vec(g.positions(), g.atom_len(), c.data.clone())
}

/// Inverse of [`reshape_to_matrix`].
pub fn reshape_from_matrix<T: Scalar>(m: Matrix<T>, grid: CoeffGrid) -> Result<LiftedTensor<T>> {
    if m.rows() != grid.positions() || m.cols() != grid.atom_len() {
        return Err(Error::ShapeMismatch {
            expected: vec![grid.positions(), grid.atom_len()],
            got: vec![m.rows(), m.cols()],
        });
    }
    LiftedTensor::from_vec(grid, m.into_vec())
}

/// Zeroth and first moments per coefficient position, dims `(nc, mc, 3)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentField<T> {
    nc: usize,
    mc: usize,
    data: Vec<T>,
}

impl_array!(MomentField, |s| vec![s.nc, s.mc, 3]);

impl<T: Scalar> MomentField<T> {
    pub fn zeros(nc: usize, mc: usize) -> Self {
        Self { nc, mc, data: vec![T::zero(); 3 * nc * mc] }
    }

    pub fn from_vec(nc: usize, mc: usize, data: Vec<T>) -> Result<Self> {
        check_len(vec![nc, mc, 3], data.len())?;
        check_values(&data)?;
        Ok(Self { nc, mc, data })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nc, self.mc)
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize, ch: usize) -> T {
        self.data[(a * self.mc + b) * 3 + ch]
    }
}

/// Boolean pixel mask; `true` marks an observed pixel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    rows: usize,
    cols: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<bool>) -> Result<Self> {
        check_len(vec![rows, cols], data.len())?;
        Ok(Self { rows, cols, data })
    }

    pub fn full(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![true; rows * cols] }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.data[i * self.cols + j]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.data
    }

    /// Number of observed pixels.
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn enumerate_offsets(len: usize, n: usize, eta: usize) -> Vec<isize> {
        // every multiple-of-eta shift of the first admissible offset -(n-1)
        // whose atom footprint still touches [0, len)
        let mut v = Vec::new();
        let mut o = -(n as isize - 1);
        while o <= len as isize - 1 {
            v.push(o);
            o += eta as isize;
        }
        v
    }

    #[test]
    fn grid_counts_match_enumeration() {
        for &(rows, n, eta) in &[(120, 15, 1), (120, 15, 3), (16, 15, 15), (30, 15, 5), (31, 4, 2)] {
            let g = coeff_grid(rows, rows, n, eta).unwrap();
            let offs = enumerate_offsets(rows, n, eta);
            assert_eq!(g.nc, offs.len(), "rows={rows} n={n} eta={eta}");
            for (a, &o) in offs.iter().enumerate() {
                assert_eq!(g.row_offset(a), o);
            }
        }
    }

    #[test]
    fn grid_examples() {
        assert_eq!(coeff_grid(120, 120, 15, 1).unwrap().nc, 134);
        let g = coeff_grid(120, 120, 15, 3).unwrap();
        assert_eq!((g.nc, g.mc), (45, 45));
        let g = coeff_grid(16, 16, 15, 15).unwrap();
        assert_eq!((g.nc, g.mc), (2, 2));
        assert_eq!((g.row_offset(0), g.row_offset(1)), (-14, 1));
    }

    #[test]
    fn grid_errors() {
        assert!(matches!(coeff_grid(120, 120, 15, 4), Err(Error::InvalidStride { .. })));
        assert!(matches!(coeff_grid(120, 120, 15, 0), Err(Error::InvalidStride { .. })));
        assert!(matches!(coeff_grid(15, 40, 15, 3), Err(Error::AtomTooLarge { .. })));
    }

    #[test]
    fn non_overlapping_stride_partitions_extended_domain() {
        let (rows, n) = (46, 5);
        let g = coeff_grid(rows, rows, n, n).unwrap();
        let lo = g.row_offset(0);
        let hi = g.row_offset(g.nc - 1) + n as isize;
        let mut cover = vec![0u32; (hi - lo) as usize];
        for a in 0..g.nc {
            let o = g.row_offset(a);
            for r in 0..n as isize {
                cover[(o + r - lo) as usize] += 1;
            }
        }
        assert!(cover.iter().all(|&c| c == 1));
        assert!(lo <= -(n as isize - 1) && hi >= rows as isize);
    }

    #[test]
    fn position_lookup_inverts_offsets() {
        let g = coeff_grid(30, 33, 6, 3).unwrap();
        for a in 0..g.nc {
            for b in 0..g.mc {
                assert_eq!(g.position_at(g.row_offset(a), g.col_offset(b)), Some((a, b)));
            }
        }
        assert_eq!(g.position_at(0, 0), None);
    }

    #[test]
    fn reshape_round_trip_and_layout() {
        let g = coeff_grid(12, 10, 3, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data: Vec<f64> = (0..g.tensor_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let c = LiftedTensor::from_vec(g, data).unwrap();
        let m = reshape_to_matrix(&c);
        assert_eq!((m.rows(), m.cols()), (g.nc * g.mc, 9));
        assert_eq!(m.get(1 * g.mc + 2, 2 * 3 + 1), c.get(1, 2, 2, 1));
        let back = reshape_from_matrix(m, g).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn reshape_of_outer_product_is_rank_one() {
        let g = coeff_grid(8, 8, 3, 1).unwrap();
        let coeffs: Vec<f64> = (0..g.positions()).map(|k| (k as f64 * 0.3).sin()).collect();
        let atom: Vec<f64> = (0..9).map(|k| k as f64 - 4.0).collect();
        let m = reshape_to_matrix(&LiftedTensor::outer(g, &coeffs, &atom).unwrap());
        for i in 0..m.rows() {
            for j in 0..m.cols() {
                assert_eq!(m.get(i, j), coeffs[i] * atom[j]);
            }
        }
        let z = reshape_to_matrix(&LiftedTensor::<f64>::zeros(g));
        assert!(z.as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn inner_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = Image::from_fn(17, 9, |_, _| rng.random_range(-1.0..1.0f64));
        let b = Image::from_fn(17, 9, |_, _| rng.random_range(-1.0..1.0f64));
        let mut naive = 0.0;
        for i in 0..17 {
            for j in 0..9 {
                naive += a.get(i, j) * b.get(i, j);
            }
        }
        let got = inner(&a, &b).unwrap();
        assert!((got - naive).abs() <= 1e-12 * naive.abs().max(1.0));
        assert_eq!(inner(&Image::zeros(17, 9), &b).unwrap(), 0.0);
        assert!(inner(&a, &a).unwrap() >= 0.0);
        assert!(matches!(inner(&a, &Image::zeros(9, 17)), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn constructors_reject_non_finite() {
        assert!(matches!(Image::from_vec(1, 2, vec![0.0, f64::NAN]), Err(Error::NonFinite { index: 1 })));
        assert!(VecField::from_vec(1, 1, vec![f64::INFINITY, 0.0]).is_err());
        assert!(SymField::from_vec(1, 1, vec![0.0f32; 2]).is_err());
        let g = coeff_grid(4, 4, 2, 1).unwrap();
        assert!(LiftedTensor::from_vec(g, vec![f64::NEG_INFINITY; g.tensor_len()]).is_err());
        assert!(MomentField::from_vec(1, 1, vec![0.0, 0.0, f64::NAN]).is_err());
    }

    #[test]
    fn sym_field_frobenius_counts_off_diagonal_twice() {
        let q = SymField::from_vec(1, 1, vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(q.frobenius_norm_sq(), 1.0 + 4.0 + 18.0);
        assert!((q.l1_norm() - 23f64.sqrt()).abs() < 1e-15);
    }

    fn grid_params() -> impl Strategy<Value = (usize, usize, usize, usize)> {
        (1usize..6, 1usize..4).prop_flat_map(|(eta, k)| {
            let n = eta * k;
            (n + 1..n + 30, n + 1..n + 30, Just(n), Just(eta))
        })
    }

    proptest! {
        #[test]
        fn offsets_cover_the_image_exactly((rows, cols, n, eta) in grid_params()) {
            let g = coeff_grid(rows, cols, n, eta).unwrap();
            prop_assert_eq!(g.row_offset(0), -(n as isize - 1));
            prop_assert!(g.row_offset(g.nc - 1) <= rows as isize - 1);
            prop_assert!(g.row_offset(g.nc - 1) + eta as isize > rows as isize - 1);
            prop_assert!(g.col_offset(g.mc - 1) <= cols as isize - 1);
            prop_assert!(g.col_offset(g.mc - 1) + eta as isize > cols as isize - 1);
            for a in 0..g.nc {
                for b in 0..g.mc {
                    prop_assert_eq!(g.position_at(g.row_offset(a), g.col_offset(b)), Some((a, b)));
                }
            }
        }

        #[test]
        fn reshape_round_trips((rows, cols, n, eta) in grid_params(), seed in any::<u64>()) {
            let g = coeff_grid(rows, cols, n, eta).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data: Vec<f64> = (0..g.tensor_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let c = LiftedTensor::from_vec(g, data).unwrap();
            let back = reshape_from_matrix(reshape_to_matrix(&c), g).unwrap();
            prop_assert_eq!(back, c);
        }
    }
}
