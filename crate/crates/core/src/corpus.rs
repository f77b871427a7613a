//! Colour patches for training the patch flow.
//!
//! The bundled corpus is procedural: smooth colour gradients plus
//! multi-octave value noise with a `1/f` amplitude falloff, which gives
//! patches with natural-image-like local statistics.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::{read_png, Image};

#[derive(Clone, Debug, PartialEq)]
pub struct PatchCorpus {
    pub patch_size: usize,
    /// Flattened `S×S×3` patches in a seeded random order.
    pub patches: Vec<Vec<f64>>,
}

/// Value noise on a `cells×cells` lattice, bilinearly interpolated.
fn value_noise<R: Rng + ?Sized>(size: usize, cells: usize, rng: &mut R) -> Vec<f64> {
    let lattice: Vec<f64> = (0..(cells + 1) * (cells + 1))
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let at = |i: usize, j: usize| lattice[j * (cells + 1) + i];
    let mut out = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let fx = x as f64 / size as f64 * cells as f64;
            let fy = y as f64 / size as f64 * cells as f64;
            let (i, j) = (fx as usize, fy as usize);
            let (u, v) = (fx - i as f64, fy - j as f64);
            let (u, v) = (u * u * (3.0 - 2.0 * u), v * v * (3.0 - 2.0 * v));
            let top = at(i, j) * (1.0 - u) + at(i + 1, j) * u;
            let bottom = at(i, j + 1) * (1.0 - u) + at(i + 1, j + 1) * u;
            out.push(top * (1.0 - v) + bottom * v);
        }
    }
    out
}

/// One procedural texture of `size×size` pixels.
pub fn procedural_texture<R: Rng + ?Sized>(size: usize, rng: &mut R) -> Image {
    let c0: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.1..0.9));
    let c1: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.1..0.9));
    let tint: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.6..1.0));
    let angle = rng.random_range(0.0..std::f64::consts::TAU);
    let (ca, sa) = (angle.cos(), angle.sin());
    let contrast = rng.random_range(0.05..0.3);

    let mut luminance = vec![0.0; size * size];
    let mut cells = 2;
    let mut amp = 1.0;
    while cells <= size / 2 {
        for (l, n) in luminance.iter_mut().zip(value_noise(size, cells, rng)) {
            *l += amp * n;
        }
        cells *= 2;
        amp *= 0.5;
    }
    let chroma: Vec<Vec<f64>> = (0..3).map(|_| value_noise(size, 4, rng)).collect();

    let mut img = Image::new(size, size);
    for y in 0..size {
        for x in 0..size {
            let s = ((x as f64 * ca + y as f64 * sa) / size as f64 * 0.5 + 0.5).clamp(0.0, 1.0);
            let i = y * size + x;
            let rgb = std::array::from_fn(|c| {
                let base = c0[c] * (1.0 - s) + c1[c] * s;
                (base + contrast * (tint[c] * luminance[i] + 0.2 * chroma[c][i])).clamp(0.0, 1.0)
            });
            img.set_pixel(x, y, rgb);
        }
    }
    img
}

fn extract(image: &Image, size: usize, x0: usize, y0: usize) -> Vec<f64> {
    let mut p = Vec::with_capacity(size * size * 3);
    for y in y0..y0 + size {
        let start = 3 * (y * image.width + x0);
        p.extend_from_slice(&image.data[start..start + 3 * size]);
    }
    p
}

impl PatchCorpus {
    /// All patches on a `stride` grid of every image, shuffled with `seed`.
    /// With `dequantize`, each 8-bit value `v` becomes `(255v + u)/256` with
    /// `u ~ U[0, 1)`, so the flow sees a continuous density.
    pub fn from_images(
        images: &[Image],
        patch_size: usize,
        stride: usize,
        seed: u64,
        dequantize: bool,
    ) -> Result<Self> {
        if patch_size == 0 || stride == 0 {
            return Err(Error::invalid("corpus", "patch size and stride must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut patches = Vec::new();
        for img in images {
            if img.width < patch_size || img.height < patch_size {
                continue;
            }
            for y0 in (0..=img.height - patch_size).step_by(stride) {
                for x0 in (0..=img.width - patch_size).step_by(stride) {
                    let mut p = extract(img, patch_size, x0, y0);
                    if dequantize {
                        for v in p.iter_mut() {
                            *v = ((*v * 255.0).round() + rng.random::<f64>()) / 256.0;
                        }
                    }
                    patches.push(p);
                }
            }
        }
        patches.shuffle(&mut rng);
        Ok(Self { patch_size, patches })
    }

    /// Procedural corpus of `images` textures of `image_size` pixels.
    pub fn bundled(images: usize, image_size: usize, patch_size: usize, stride: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let textures: Vec<Image> = (0..images).map(|_| procedural_texture(image_size, &mut rng)).collect();
        Self::from_images(&textures, patch_size, stride, seed.wrapping_add(1), false)
    }

    /// Every PNG in `dir` (sorted by file name).
    pub fn from_dir(dir: &Path, patch_size: usize, stride: usize, seed: u64) -> Result<Self> {
        let mut paths: Vec<_> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
            .collect();
        paths.sort();
        let images = paths.iter().map(|p| read_png(p)).collect::<Result<Vec<_>>>()?;
        Self::from_images(&images, patch_size, stride, seed, true)
    }

    /// Splits off the last `fraction` of the (already shuffled) patches.
    pub fn split(&self, fraction: f64) -> (&[Vec<f64>], &[Vec<f64>]) {
        let held = ((self.patches.len() as f64 * fraction.clamp(0.0, 1.0)).round() as usize)
            .clamp(1, self.patches.len().saturating_sub(1).max(1));
        self.patches.split_at(self.patches.len() - held)
    }
}

/// Patches with every entry drawn from `U[0, 1]`.
pub fn uniform_noise_patches<R: Rng + ?Sized>(count: usize, patch_size: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| (0..patch_size * patch_size * 3).map(|_| rng.random::<f64>()).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textures_are_in_range_and_deterministic() {
        let a = procedural_texture(32, &mut ChaCha8Rng::seed_from_u64(1));
        let b = procedural_texture(32, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(a, b);
        assert!(a.data.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn grid_extraction_counts_and_contents() {
        let mut img = Image::new(5, 4);
        for (i, v) in img.data.iter_mut().enumerate() {
            *v = i as f64 / 60.0;
        }
        let c = PatchCorpus::from_images(&[img.clone()], 2, 2, 0, false).unwrap();
        // x0 in {0, 2}, y0 in {0, 2}
        assert_eq!(c.patches.len(), 4);
        let first = extract(&img, 2, 2, 2);
        assert!(c.patches.contains(&first));
        assert_eq!(first[..3], img.pixel(2, 2));
        assert_eq!(first[9..], img.pixel(3, 3));
    }

    #[test]
    fn split_is_disjoint_and_complete() {
        let c = PatchCorpus::bundled(2, 16, 4, 4, 3).unwrap();
        let (train, held) = c.split(0.25);
        assert_eq!(train.len() + held.len(), c.patches.len());
        assert_eq!(held.len(), 8);
    }
}
