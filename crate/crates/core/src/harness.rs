//! Synthetic scenes with known atoms, corruption models and metrics.
//!
//! Randomness comes from `ChaCha8Rng::seed_from_u64(seed)`; Gaussian
//! samples use `rand_distr::StandardNormal`. Every generator is a pure
//! function of its seed.
//!
//! Both scene generators tile each textured quadrant with period 15, with
//! tiles aligned to the atom offsets of the default `n = 15, eta = 3`
//! coefficient grid (offsets `-14 + 15k`). Quadrants therefore split at
//! row/column 61 rather than 60, so every tile inside a quadrant is a
//! complete atom placement and the texture is exactly representable.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::grid::{Array, Image, Mask};
use crate::scalar::Scalar;
use crate::solver::Atom;

pub const SCENE_SIZE: usize = 120;
pub const TILE: usize = 15;
/// First row/column of the lower/right quadrants.
pub const QUADRANT_SPLIT: usize = 61;
/// Tiles per quadrant side in the texture scene.
pub const TEXTURE_TILES: usize = 3;

/// A generated scene with its ground truth.
#[derive(Clone, Debug)]
pub struct SyntheticScene<T> {
    pub kind: &'static str,
    pub seed: u64,
    pub image: Image<T>,
    /// Zero-mean atoms used to build the texture.
    pub true_atoms: Vec<Atom<T>>,
    pub cartoon: Image<T>,
    pub texture: Image<T>,
}

// 15x15 line motifs (horizontal, vertical, diagonal, anti-diagonal) with
// pairwise disjoint supports and their intensities. Lines cross the whole
// tile so no window straddling two tiles packs more of a motif than a
// tile does; row 14 and column 14 stay empty so the tiles cut by the
// image border need no partial atoms. Intensities are chosen so that
// intensity * sqrt(support) differs by a factor 1.35 between motifs,
// which keeps the singular values of the ideal tensor separated.
fn texture_motifs() -> Vec<(Vec<f64>, f64)> {
    let lines: [(Vec<(usize, usize)>, f64); 4] = [
        ((0..14).map(|r| (r, r)).collect(), 1.0),
        ((0..14).map(|r| (r, 13 - r)).collect(), 0.8),
        ((0..14).flat_map(|k| [(0, k), (13, k), (k, 0), (k, 13)]).collect(), 0.6),
        ((0..14).flat_map(|k| [(6, k), (k, 6)]).collect(), 0.45),
    ];
    let mut taken = vec![false; 225];
    let mut out = Vec::new();
    for (pixels, intensity) in lines {
        let mut tile = vec![0.0; 225];
        for (r, c) in pixels {
            let k = r * 15 + c;
            if !taken[k] {
                taken[k] = true;
                tile[k] = 1.0;
            }
        }
        out.push((tile, intensity));
    }
    out
}

fn tile_atom<T: Scalar>(tile: &[f64]) -> Atom<T> {
    let values: Vec<T> = tile.iter().map(|&x| T::lit(x)).collect();
    let sigma = values.iter().map(|&x| x * x).sum::<T>().sqrt();
    Atom { n: TILE, sigma, values }
}

#[inline]
fn quadrant(i: usize, j: usize) -> usize {
    2 * usize::from(i >= QUADRANT_SPLIT) + usize::from(j >= QUADRANT_SPLIT)
}

// Tile-local coordinates of pixel (i, j) for tiles anchored at -14 + 15k.
#[inline]
fn tile_index(i: usize, j: usize) -> usize {
    ((i + TILE - 1) % TILE) * TILE + (j + TILE - 1) % TILE
}

// Rows (or columns) covered by the 3 x 3 tile block of either quadrant.
#[inline]
fn in_texture_block(i: usize) -> bool {
    let start = if i >= QUADRANT_SPLIT { QUADRANT_SPLIT } else { 1 };
    i >= start && i < start + TEXTURE_TILES * TILE
}

/// Four textured quadrants on a black background; the seed permutes four
/// thin line motifs (diagonal, anti-diagonal, box, cross) over the quadrants.
///
/// Each quadrant holds a 3 x 3 block of tiles starting at its first
/// grid-aligned offset; the remaining 15-pixel band is left blank, so no
/// 15 x 15 window sees texture from two quadrants.
///
/// Every motif spans 14 x 14 pixels, so exactly one stride-3 window holds
/// each tile. The true atoms are the motifs themselves (nonnegative, not
/// zero mean), the cartoon part is zero and the texture is the image.
pub fn gen_texture_scene<T: Scalar>(seed: u64) -> SyntheticScene<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let motifs = texture_motifs();
    let mut order: Vec<usize> = (0..motifs.len()).collect();
    order.shuffle(&mut rng);
    let tiles: Vec<Vec<f64>> = order
        .iter()
        .map(|&k| motifs[k].0.iter().map(|&x| x * motifs[k].1).collect())
        .collect();
    let image = Image::from_fn(SCENE_SIZE, SCENE_SIZE, |i, j| {
        if in_texture_block(i) && in_texture_block(j) {
            T::lit(tiles[quadrant(i, j)][tile_index(i, j)])
        } else {
            T::zero()
        }
    });
    SyntheticScene {
        kind: "texture",
        seed,
        true_atoms: tiles.iter().map(|t| tile_atom(t)).collect(),
        cartoon: Image::zeros(SCENE_SIZE, SCENE_SIZE),
        texture: image.clone(),
        image,
    }
}

// Smooth period-5 patterns, symmetric about the tile centre: zero mean and
// zero first moments, so they satisfy the moment constraint as placed.
fn patches_atoms() -> Vec<Vec<f64>> {
    let w = 2.0 * std::f64::consts::PI / 5.0;
    let stripes = (0..225).map(|k| 0.3 * (w * ((k / 15) as f64 - 7.0)).cos()).collect();
    let checker = (0..225)
        .map(|k| 0.3 * (w * ((k / 15) as f64 - 7.0)).cos() * (w * ((k % 15) as f64 - 7.0)).cos())
        .collect();
    let diagonal = (0..225).map(|k| 0.3 * (w * ((k / 15 + k % 15) as f64 - 14.0)).cos()).collect();
    vec![stripes, checker, diagonal]
}

/// Two textured quadrants (periodic zero-mean atoms around a constant
/// level) and two cartoon quadrants (a constant disk on a linear ramp).
/// The seed picks which diagonal holds the textures, which two of the
/// three atoms are used and the disk placement.
pub fn gen_patches_scene<T: Scalar>(seed: u64) -> SyntheticScene<T> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut atoms = patches_atoms();
    atoms.shuffle(&mut rng);
    atoms.truncate(2);
    let main_diagonal_textured = rng.random_bool(0.5);
    let textured = |q: usize| (q == 0 || q == 3) == main_diagonal_textured;
    let levels = [0.45, 0.55];
    // disk centre jitter and radius
    let jitter: [f64; 2] = [rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)];
    let radius = rng.random_range(14.0..20.0);

    let bounds = |q: usize| -> (f64, f64, f64, f64) {
        let (r0, r1) = if q < 2 { (0.0, QUADRANT_SPLIT as f64) } else { (QUADRANT_SPLIT as f64, SCENE_SIZE as f64) };
        let (c0, c1) = if q % 2 == 0 { (0.0, QUADRANT_SPLIT as f64) } else { (QUADRANT_SPLIT as f64, SCENE_SIZE as f64) };
        (r0, r1, c0, c1)
    };

    let mut cartoon = Image::zeros(SCENE_SIZE, SCENE_SIZE);
    let mut texture = Image::zeros(SCENE_SIZE, SCENE_SIZE);
    let mut tex_slot = 0;
    let mut slot_of = [usize::MAX; 4];
    for (q, slot) in slot_of.iter_mut().enumerate() {
        if textured(q) {
            *slot = tex_slot;
            tex_slot += 1;
        }
    }
    for i in 0..SCENE_SIZE {
        for j in 0..SCENE_SIZE {
            let q = quadrant(i, j);
            let (r0, r1, c0, c1) = bounds(q);
            if textured(q) {
                let s = slot_of[q];
                cartoon.set(i, j, T::lit(levels[s]));
                texture.set(i, j, T::lit(atoms[s][tile_index(i, j)]));
            } else {
                // ramp from 0.15 to 0.6 across the quadrant, disk at 0.9
                let t = ((j as f64 - c0) + (i as f64 - r0)) / ((c1 - c0) + (r1 - r0) - 2.0);
                let (ci, cj) = ((r0 + r1) / 2.0 + jitter[0], (c0 + c1) / 2.0 + jitter[1]);
                let inside = (i as f64 - ci).powi(2) + (j as f64 - cj).powi(2) <= radius * radius;
                cartoon.set(i, j, T::lit(if inside { 0.9 } else { 0.15 + 0.45 * t }));
            }
        }
    }
    let image = cartoon.add(&texture).map(|x| x.max(T::zero()).min(T::one()));
    SyntheticScene {
        kind: "patches",
        seed,
        image,
        true_atoms: atoms
            .iter()
            .map(|a| {
                let values: Vec<T> = a.iter().map(|&x| T::lit(x)).collect();
                let sigma = values.iter().map(|&x| x * x).sum::<T>().sqrt();
                Atom { n: TILE, sigma, values }
            })
            .collect(),
        cartoon,
        texture,
    }
}

/// Adds i.i.d. Gaussian noise of standard deviation `sigma_rel` (image
/// range is 1); no clamping.
pub fn add_noise<T: Scalar>(img: &Image<T>, sigma_rel: T, seed: u64) -> Image<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = img.clone();
    for x in out.as_mut_slice() {
        let z: f64 = StandardNormal.sample(&mut rng);
        *x += sigma_rel * T::lit(z);
    }
    out
}

/// Uniform mask with exactly `round(keep * rows * cols)` observed pixels.
pub fn gen_mask(rows: usize, cols: usize, keep: f64, seed: u64) -> Result<Mask> {
    if !(0.0..=1.0).contains(&keep) {
        return Err(Error::param("keep", "must lie in [0, 1]"));
    }
    let total = rows * cols;
    let count = (keep * total as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = vec![false; total];
    for k in rand::seq::index::sample(&mut rng, total, count) {
        data[k] = true;
    }
    Mask::from_vec(rows, cols, data)
}

pub const PSNR_CAP: f64 = 300.0;

/// Peak signal-to-noise ratio with peak 1, capped at 300 dB.
pub fn psnr<T: Scalar>(reference: &Image<T>, test: &Image<T>) -> Result<f64> {
    if reference.dims() != test.dims() {
        return Err(Error::ShapeMismatch { expected: reference.shape(), got: test.shape() });
    }
    let n = reference.len().max(1) as f64;
    let mse: f64 = reference
        .as_slice()
        .iter()
        .zip(test.as_slice())
        .map(|(&a, &b)| (a - b).to_f64_lossy().powi(2))
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP))
}

/// Best normalized correlation between `truth` and any learned atom over
/// all cyclic 2-D shifts and both signs.
pub fn atom_recovery<T: Scalar>(truth: &Atom<T>, learned: &[Atom<T>]) -> f64 {
    let n = truth.n;
    let a: Vec<f64> = truth.values.iter().map(|x| x.to_f64_lossy()).collect();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut best = 0.0f64;
    for atom in learned.iter().filter(|b| b.n == n) {
        let b: Vec<f64> = atom.values.iter().map(|x| x.to_f64_lossy()).collect();
        let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            continue;
        }
        for dr in 0..n {
            for dc in 0..n {
                let mut acc = 0.0;
                for r in 0..n {
                    let rs = (r + dr) % n;
                    for c in 0..n {
                        acc += a[r * n + c] * b[rs * n + (c + dc) % n];
                    }
                }
                best = best.max(acc.abs() / (na * nb));
            }
        }
    }
    best.min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn texture_scene_is_deterministic_and_tiled() {
        let a = gen_texture_scene::<f64>(7);
        let b = gen_texture_scene::<f64>(7);
        assert_eq!(a.image, b.image);
        assert_eq!(a.true_atoms.len(), 4);
        // the image is the lifting of the true atoms placed at tile anchors
        let g = crate::coeff_grid(SCENE_SIZE, SCENE_SIZE, TILE, 3).unwrap();
        let mut c = crate::LiftedTensor::zeros(g);
        for (q, atom) in a.true_atoms.iter().enumerate() {
            for (tr, tc) in (0..3).flat_map(|r| (0..3).map(move |c| (r, c))) {
                let r0 = if q / 2 == 0 { 1 } else { QUADRANT_SPLIT } + 15 * tr;
                let c0 = if q % 2 == 0 { 1 } else { QUADRANT_SPLIT } + 15 * tc;
                // p_a = 3a - 14
                let (ga, gb) = ((r0 + 14) / 3, (c0 + 14) / 3);
                for k in 0..225 {
                    c.set(ga, gb, k / 15, k % 15, atom.values[k]);
                }
            }
        }
        let synth = crate::operators::lift_forward(&c);
        assert!(synth.sub(&a.image).max_abs() < 1e-12);
        let (lo, hi) = a.image.min_max();
        assert!(lo >= 0.0 && hi <= 1.0);
        assert_ne!(gen_texture_scene::<f64>(1).image, gen_texture_scene::<f64>(2).image);
    }

    #[test]
    fn patches_scene_properties() {
        let s = gen_patches_scene::<f64>(3);
        assert_eq!(s.image, gen_patches_scene::<f64>(3).image);
        assert!(s.true_atoms.len() <= 3);
        for atom in &s.true_atoms {
            assert!(atom.values.iter().sum::<f64>().abs() < 1e-12);
            let m1: f64 = atom.values.iter().enumerate().map(|(k, v)| (k / 15) as f64 * v).sum();
            let m2: f64 = atom.values.iter().enumerate().map(|(k, v)| (k % 15) as f64 * v).sum();
            assert!(m1.abs() < 1e-12 && m2.abs() < 1e-12);
        }
        // texture vanishes on exactly two quadrants
        let mut empty = 0;
        for q in 0..4 {
            let (r, c) = (if q < 2 { 10 } else { 100 }, if q % 2 == 0 { 10 } else { 100 });
            let e: f64 = (0..15).flat_map(|i| (0..15).map(move |j| (i, j))).map(|(i, j)| s.texture.get(r + i, c + j).abs()).sum();
            if e == 0.0 {
                empty += 1;
            }
        }
        assert_eq!(empty, 2);
    }

    #[test]
    fn noise_statistics() {
        let img = Image::<f64>::constant(120, 120, 0.5);
        assert_eq!(add_noise(&img, 0.0, 1), img);
        let noisy = add_noise(&img, 0.1, 4);
        assert_eq!(noisy, add_noise(&img, 0.1, 4));
        let d = noisy.sub(&img);
        let mean = d.mean();
        let var = d.as_slice().iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (d.len() - 1) as f64;
        assert!((var.sqrt() - 0.1).abs() < 0.005);
    }

    #[test]
    fn mask_counts() {
        assert_eq!(gen_mask(120, 120, 0.2, 1).unwrap().count(), 2880);
        assert_eq!(gen_mask(10, 10, 1.0, 1).unwrap().count(), 100);
        assert_eq!(gen_mask(10, 10, 0.0, 1).unwrap().count(), 0);
        assert_eq!(gen_mask(30, 30, 0.3, 9).unwrap(), gen_mask(30, 30, 0.3, 9).unwrap());
        assert!(gen_mask(3, 3, 1.5, 0).is_err());
    }

    #[test]
    fn psnr_examples() {
        let a = Image::<f64>::constant(8, 8, 0.3);
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP);
        let b = a.map(|x| x + 0.1);
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
        let c = a.map(|x| x - 0.1);
        assert!((psnr(&a, &b).unwrap() - psnr(&a, &c).unwrap()).abs() < 1e-9);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x: Image<f64> = Image::from_fn(13, 11, |_, _| rng.random_range(0.0..1.0));
        let y: Image<f64> = Image::from_fn(13, 11, |_, _| rng.random_range(0.0..1.0));
        let mut mse = 0.0f64;
        for i in 0..13 {
            for j in 0..11 {
                mse += (x.get(i, j) - y.get(i, j)).powi(2);
            }
        }
        mse /= 143.0;
        assert!((psnr(&x, &y).unwrap() - 10.0 * (1.0 / mse).log10()).abs() < 1e-10);
        assert!(psnr(&x, &a).is_err());
    }

    #[test]
    fn recovery_examples() {
        let scene = gen_patches_scene::<f64>(0);
        let a = &scene.true_atoms[0];
        assert!((atom_recovery(a, std::slice::from_ref(a)) - 1.0).abs() < 1e-12);
        // negated, cyclically shifted copy
        let shifted: Vec<f64> = (0..225).map(|k| -a.values[((k / 15 + 4) % 15) * 15 + (k % 15 + 9) % 15]).collect();
        let b = Atom { n: 15, sigma: 1.0, values: shifted };
        assert!((atom_recovery(a, &[b]) - 1.0).abs() < 1e-12);
        // a constant atom is orthogonal to every zero-mean atom
        let flat = Atom { n: 15, sigma: 1.0, values: vec![1.0; 225] };
        assert!(atom_recovery(a, &[flat]) < 1e-12);
        assert_eq!(atom_recovery(a, &[]), 0.0);
    }

    proptest! {
        #[test]
        fn recovery_ignores_shift_sign_and_scale(
            n in 2usize..7, dr in 0usize..7, dc in 0usize..7, scale in -5.0f64..5.0, seed in any::<u64>(),
        ) {
            prop_assume!(scale.abs() > 1e-3);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let values: Vec<f64> = (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let shifted = (0..n * n)
                .map(|k| scale * values[((k / n + dr) % n) * n + (k % n + dc) % n])
                .collect();
            let truth = Atom { n, sigma: 1.0, values };
            let learned = Atom { n, sigma: 1.0, values: shifted };
            prop_assert!((atom_recovery(&truth, &[learned]) - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn mask_keeps_the_rounded_count(rows in 1usize..40, cols in 1usize..40, keep in 0.0f64..=1.0, seed in any::<u64>()) {
            let m = gen_mask(rows, cols, keep, seed).unwrap();
            let kept = m.as_slice().iter().filter(|&&b| b).count();
            prop_assert_eq!(kept, (keep * (rows * cols) as f64).round() as usize);
        }

        #[test]
        fn psnr_is_symmetric_and_capped(rows in 1usize..10, cols in 1usize..10, seed in any::<u64>()) {
            let a = add_noise(&Image::<f64>::zeros(rows, cols), 0.2, seed);
            let b = add_noise(&a, 0.05, seed ^ 1);
            prop_assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
            prop_assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP);
        }
    }
}
