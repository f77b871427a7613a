//! Ground-truth rendering and on-disk datasets.
//!
//! A dataset directory holds `manifest.json`, `images/<id>.png` and
//! `depth/<id>.svdp`. Poses are stored as row-major 3×4 `[R|t]` with `R`
//! camera-to-world (columns: x right, y down, z forward) and `t` the camera
//! position.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::scene::SyntheticScene;
use crate::geometry::{generate_rays, stratified_in, CameraIntrinsics, CameraPose, Vec3};
use crate::image::{read_depth, read_png, write_depth, write_png, DepthMap, Image};
use crate::render::composite_weights;

/// Dense quadrature of the analytic scene with `n_dense` bin-midpoint
/// samples per ray. Pixels are rendered in parallel into fixed slots.
pub fn oracle_render(
    scene: &SyntheticScene,
    pose: &CameraPose,
    intr: &CameraIntrinsics,
    n_dense: usize,
) -> Result<(Image, DepthMap)> {
    if n_dense < 1024 {
        return Err(Error::invalid("oracle render", "n_dense must be at least 1024"));
    }
    let (w, h) = (intr.width as usize, intr.height as usize);
    let pixels: Vec<(u32, u32)> = (0..intr.height)
        .flat_map(|y| (0..intr.width).map(move |x| (x, y)))
        .collect();
    let rays = generate_rays(pose, intr, &pixels, scene.near, scene.far)?;
    let mut unused = ChaCha8Rng::seed_from_u64(0);
    let ts = stratified_in(scene.near, scene.far, n_dense, &mut unused, false);
    let shaded: Vec<Result<([f64; 3], f64, f64)>> = rays
        .par_iter()
        .map(|ray| {
            let mut sigmas = Vec::with_capacity(n_dense);
            let mut colors = Vec::with_capacity(n_dense);
            for &t in &ts {
                let (s, c) = scene.sample(&ray.at(t));
                sigmas.push(s);
                colors.push(c);
            }
            let (weights, _) = composite_weights(&sigmas, &ts, ray.far)?;
            let mut rgb = [0.0; 3];
            let (mut depth, mut opacity) = (0.0, 0.0);
            for ((wi, c), t) in weights.iter().zip(&colors).zip(&ts) {
                for k in 0..3 {
                    rgb[k] += wi * c[k];
                }
                depth += wi * t;
                opacity += wi;
            }
            if let Some(bg) = scene.background {
                for k in 0..3 {
                    rgb[k] += (1.0 - opacity) * bg[k];
                }
            }
            Ok((rgb, depth, opacity))
        })
        .collect();
    let mut image = Image::new(w, h);
    let mut depth = DepthMap::new(w, h);
    for (i, s) in shaded.into_iter().enumerate() {
        let (rgb, d, o) = s?;
        image.data[3 * i..3 * i + 3].copy_from_slice(&rgb);
        depth.depth[i] = d;
        depth.opacity[i] = o;
    }
    Ok((image, depth))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub id: String,
    pub image: String,
    pub depth: Option<String>,
    /// Row-major 3×4 `[R|t]`.
    pub pose: [f64; 12],
    pub intrinsics: CameraIntrinsics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Splits {
    pub input: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub scene: String,
    pub seed: u64,
    pub near: f64,
    pub far: f64,
    pub background: Option<[f64; 3]>,
    pub frames: Vec<FrameRecord>,
    pub splits: Splits,
}

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub id: String,
    pub pose: CameraPose,
    pub intrinsics: CameraIntrinsics,
    pub image: Image,
    pub depth: Option<DepthMap>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub scene: String,
    pub seed: u64,
    pub near: f64,
    pub far: f64,
    pub background: Option<[f64; 3]>,
    pub frames: Vec<Frame>,
    /// Indices into `frames`.
    pub input: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetOptions {
    pub resolution: u32,
    /// Focal length in pixels.
    pub focal: f64,
    pub n_dense: usize,
    /// Half-width of the azimuth arc, degrees.
    pub arc_degrees: f64,
    pub elevation_degrees: f64,
    /// Uniform elevation jitter half-width, degrees.
    pub elevation_jitter: f64,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        Self {
            resolution: 64,
            focal: 70.0,
            n_dense: 1024,
            arc_degrees: 60.0,
            elevation_degrees: 25.0,
            elevation_jitter: 5.0,
        }
    }
}

/// Indices of `n_input` views spread evenly over `total`.
pub fn even_selection(total: usize, n_input: usize) -> Vec<usize> {
    match n_input {
        0 => vec![],
        1 => vec![total / 2],
        n => (0..n)
            .map(|k| ((k * (total - 1)) as f64 / (n - 1) as f64).round() as usize)
            .collect(),
    }
}

/// Cameras on an arc around the scene focus, all looking at it with world
/// `+z` up; input views are spread evenly over the arc and the rest are
/// test views.
pub fn make_dataset(
    scene: &SyntheticScene,
    n_input: usize,
    n_test: usize,
    seed: u64,
    options: &DatasetOptions,
) -> Result<Dataset> {
    scene.validate()?;
    if n_input == 0 || n_test == 0 {
        return Err(Error::invalid("dataset", "need at least one input and one test view"));
    }
    let total = n_input + n_test;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let res = options.resolution;
    let intr = CameraIntrinsics::centered(res, res, options.focal)?;
    let focus = scene.focus();
    let mut frames = Vec::with_capacity(total);
    for k in 0..total {
        let phi =
            (-options.arc_degrees + 2.0 * options.arc_degrees * k as f64 / (total - 1).max(1) as f64).to_radians();
        let jitter = if options.elevation_jitter > 0.0 {
            rng.random_range(-options.elevation_jitter..options.elevation_jitter)
        } else {
            0.0
        };
        let theta = (options.elevation_degrees + jitter).to_radians();
        let dir = Vec3::new(phi.sin() * theta.cos(), -phi.cos() * theta.cos(), theta.sin());
        let pose = CameraPose::look_at(focus + dir * scene.camera_distance, focus, Vec3::z())?;
        let (image, depth) = oracle_render(scene, &pose, &intr, options.n_dense)?;
        frames.push(Frame {
            id: format!("{k:03}"),
            pose,
            intrinsics: intr,
            image,
            depth: Some(depth),
        });
    }
    let input = even_selection(total, n_input);
    let test = (0..total).filter(|i| !input.contains(i)).collect();
    Ok(Dataset {
        scene: scene.name.clone(),
        seed,
        near: scene.near,
        far: scene.far,
        background: scene.background,
        frames,
        input,
        test,
    })
}

impl Dataset {
    pub fn manifest(&self) -> Manifest {
        let ids = |idx: &[usize]| idx.iter().map(|&i| self.frames[i].id.clone()).collect();
        Manifest {
            scene: self.scene.clone(),
            seed: self.seed,
            near: self.near,
            far: self.far,
            background: self.background,
            frames: self
                .frames
                .iter()
                .map(|f| FrameRecord {
                    id: f.id.clone(),
                    image: format!("images/{}.png", f.id),
                    depth: f.depth.as_ref().map(|_| format!("depth/{}.svdp", f.id)),
                    pose: f.pose.to_rows_3x4(),
                    intrinsics: f.intrinsics,
                })
                .collect(),
            splits: Splits {
                input: ids(&self.input),
                test: ids(&self.test),
            },
        }
    }

    /// Writes images, depth maps and the manifest; returns the manifest path.
    pub fn write(&self, dir: &Path) -> Result<std::path::PathBuf> {
        std::fs::create_dir_all(dir.join("images"))?;
        std::fs::create_dir_all(dir.join("depth"))?;
        let manifest = self.manifest();
        for (frame, record) in self.frames.iter().zip(&manifest.frames) {
            write_png(&dir.join(&record.image), &frame.image)?;
            if let (Some(d), Some(path)) = (&frame.depth, &record.depth) {
                write_depth(&dir.join(path), d)?;
            }
        }
        let path = dir.join(MANIFEST_FILE);
        std::fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(path)
    }

    /// Loads a dataset from a directory containing `manifest.json`, or from
    /// the manifest file itself.
    pub fn load(path: &Path) -> Result<Self> {
        let (dir, manifest_path) = if path.is_dir() {
            (path.to_path_buf(), path.join(MANIFEST_FILE))
        } else {
            (
                path.parent().unwrap_or(Path::new(".")).to_path_buf(),
                path.to_path_buf(),
            )
        };
        let manifest: Manifest = serde_json::from_slice(&std::fs::read(&manifest_path)?)?;
        let mut frames = Vec::with_capacity(manifest.frames.len());
        for r in &manifest.frames {
            r.intrinsics.validate()?;
            let image = read_png(&dir.join(&r.image))?;
            if image.width != r.intrinsics.width as usize || image.height != r.intrinsics.height as usize {
                return Err(Error::DimensionMismatch(format!(
                    "image {} does not match its intrinsics",
                    r.image
                )));
            }
            let depth = match &r.depth {
                Some(p) if dir.join(p).exists() => Some(read_depth(&dir.join(p))?),
                _ => None,
            };
            frames.push(Frame {
                id: r.id.clone(),
                pose: CameraPose::from_rows_3x4(&r.pose)?,
                intrinsics: r.intrinsics,
                image,
                depth,
            });
        }
        let index = |ids: &[String]| -> Result<Vec<usize>> {
            ids.iter()
                .map(|id| {
                    frames
                        .iter()
                        .position(|f| &f.id == id)
                        .ok_or_else(|| Error::invalid("manifest", format!("split names unknown frame `{id}`")))
                })
                .collect()
        };
        let input = index(&manifest.splits.input)?;
        let test = index(&manifest.splits.test)?;
        Ok(Self {
            scene: manifest.scene,
            seed: manifest.seed,
            near: manifest.near,
            far: manifest.far,
            background: manifest.background,
            frames,
            input,
            test,
        })
    }

    pub fn poses(&self) -> Vec<CameraPose> {
        self.frames.iter().map(|f| f.pose).collect()
    }

    pub fn input_pixel_count(&self) -> usize {
        self.input
            .iter()
            .map(|&i| self.frames[i].intrinsics.pixel_count())
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn even_selection_spreads_views() {
        assert_eq!(even_selection(11, 3), vec![0, 5, 10]);
        assert_eq!(even_selection(9, 1), vec![4]);
        assert_eq!(even_selection(4, 4), vec![0, 1, 2, 3]);
    }

    #[test]
    fn oracle_rejects_sparse_quadrature() {
        let scene = crate::eval::scene::slab_scene();
        let intr = CameraIntrinsics::centered(4, 4, 4.0).unwrap();
        assert!(oracle_render(&scene, &CameraPose::identity(), &intr, 512).is_err());
    }
}
