//! PNG input/output and display helpers.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use png::{BitDepth, ColorType, Transformations};

use crate::error::{Error, Result};
use crate::grid::{Array, Image, Mask};
use crate::scalar::Scalar;
use crate::solver::Atom;

/// Read a PNG as a grayscale image in [0, 1]. Color inputs are converted
/// with Rec. 601 luma weights; alpha is ignored.
pub fn read_png<T: Scalar>(path: impl AsRef<Path>) -> Result<Image<T>> {
    let mut decoder = png::Decoder::new(BufReader::new(File::open(path)?));
    decoder.set_transformations(Transformations::normalize_to_color8());
    let mut reader = decoder.read_info()?;
    let size = reader.output_buffer_size().ok_or_else(|| Error::param("input", "image too large"))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf)?;
    let (rows, cols) = (info.height as usize, info.width as usize);
    let (color, depth) = reader.output_color_type();
    debug_assert_eq!(depth, BitDepth::Eight);
    let channels = color.samples();
    let luma = |px: &[u8]| -> f64 {
        match color {
            ColorType::Grayscale | ColorType::GrayscaleAlpha => px[0] as f64,
            _ => 0.299 * px[0] as f64 + 0.587 * px[1] as f64 + 0.114 * px[2] as f64,
        }
    };
    let mut data = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let line = &buf[r * info.line_size..(r + 1) * info.line_size];
        for c in 0..cols {
            data.push(T::lit(luma(&line[c * channels..(c + 1) * channels]) / 255.0));
        }
    }
    Image::from_vec(rows, cols, data)
}

/// Quantize `x` in [0, 1] to 8 bits with rounding; values outside are clamped.
pub fn quantize<T: Scalar>(x: T) -> u8 {
    let v = x.to_f64_lossy();
    if v.is_nan() {
        return 0;
    }
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Write an image as 8-bit grayscale PNG.
pub fn write_png<T: Scalar>(path: impl AsRef<Path>, img: &Image<T>) -> Result<()> {
    let (rows, cols) = img.dims();
    let mut enc = png::Encoder::new(BufWriter::new(File::create(path)?), cols as u32, rows as u32);
    enc.set_color(ColorType::Grayscale);
    enc.set_depth(BitDepth::Eight);
    let mut writer = enc.write_header()?;
    let bytes: Vec<u8> = img.as_slice().iter().map(|&x| quantize(x)).collect();
    writer.write_image_data(&bytes)?;
    writer.finish()?;
    Ok(())
}

/// Read a mask PNG: nonzero pixels are observed.
pub fn read_mask(path: impl AsRef<Path>) -> Result<Mask> {
    let img: Image<f64> = read_png(path)?;
    let (rows, cols) = img.dims();
    Mask::from_vec(rows, cols, img.as_slice().iter().map(|&x| x > 0.0).collect())
}

pub fn write_mask(path: impl AsRef<Path>, mask: &Mask) -> Result<()> {
    let (rows, cols) = mask.dims();
    let img = Image::<f64>::from_fn(rows, cols, |i, j| if mask.get(i, j) { 1.0 } else { 0.0 });
    write_png(path, &img)
}

/// Affine map of `values` onto [0, 1]; constant input maps to 0.5.
pub fn rescale_unit<T: Scalar>(values: &[T]) -> Vec<T> {
    let (lo, hi) = values.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    if !(hi > lo) {
        return vec![T::lit(0.5); values.len()];
    }
    values.iter().map(|&x| (x - lo) / (hi - lo)).collect()
}

pub fn rescale_for_display<T: Scalar>(img: &Image<T>) -> Image<T> {
    let (rows, cols) = img.dims();
    Image::from_vec(rows, cols, rescale_unit(img.as_slice())).expect("same shape")
}

/// Tile atoms row-major (in the given order) on a near-square sheet with
/// 1-pixel white separators; each atom is rescaled to [0, 1] on its own.
pub fn atom_sheet<T: Scalar>(atoms: &[Atom<T>]) -> Image<T> {
    if atoms.is_empty() {
        return Image::zeros(1, 1);
    }
    let n = atoms[0].n;
    let per_row = (atoms.len() as f64).sqrt().ceil() as usize;
    let nrows = atoms.len().div_ceil(per_row);
    let (h, w) = (nrows * (n + 1) + 1, per_row * (n + 1) + 1);
    let mut sheet = Image::from_fn(h, w, |_, _| T::one());
    for (k, atom) in atoms.iter().enumerate() {
        let (r0, c0) = (1 + (k / per_row) * (n + 1), 1 + (k % per_row) * (n + 1));
        for (idx, v) in rescale_unit(&atom.values).into_iter().enumerate() {
            sheet.set(r0 + idx / n, c0 + idx % n, v);
        }
    }
    sheet
}
