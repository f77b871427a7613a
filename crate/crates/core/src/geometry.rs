//! Cameras, rays, the distribution of unobserved poses, and the ray-interval
//! annealing schedule.
//!
//! Camera convention: `rotation` maps camera to world coordinates and its
//! columns are the camera axes in world space: x right, y down, z forward
//! (OpenCV style). `position` is the camera centre in world units. The
//! "up" direction of a camera is therefore the negated y column.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

const ORTHO_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub focal_x: f64,
    pub focal_y: f64,
    pub principal_x: f64,
    pub principal_y: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(
        focal_x: f64,
        focal_y: f64,
        principal_x: f64,
        principal_y: f64,
        width: u32,
        height: u32,
    ) -> Result<Self> {
        let intr = Self {
            focal_x,
            focal_y,
            principal_x,
            principal_y,
            width,
            height,
        };
        intr.validate()?;
        Ok(intr)
    }

    /// Square pixels with the principal point at the image centre.
    pub fn centered(width: u32, height: u32, focal: f64) -> Result<Self> {
        Self::new(focal, focal, width as f64 / 2.0, height as f64 / 2.0, width, height)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.focal_x > 0.0 && self.focal_y > 0.0) {
            return Err(Error::invalid("intrinsics", "focal lengths must be positive"));
        }
        let inside = |p: f64, extent: u32| (0.0..=extent as f64).contains(&p);
        if !inside(self.principal_x, self.width) || !inside(self.principal_y, self.height) {
            return Err(Error::invalid("intrinsics", "principal point outside the image"));
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraPose {
    rotation: Mat3,
    position: Vec3,
}

impl CameraPose {
    pub fn new(rotation: Mat3, position: Vec3) -> Result<Self> {
        let gram = rotation.transpose() * rotation;
        let ortho_err = (gram - Mat3::identity()).abs().max();
        let det = rotation.determinant();
        if ortho_err > ORTHO_TOL || (det - 1.0).abs() > ORTHO_TOL {
            return Err(Error::invalid(
                "camera pose",
                format!("rotation is not a proper rotation (|RᵀR − I| = {ortho_err:e}, det = {det})"),
            ));
        }
        Ok(Self { rotation, position })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Mat3::identity(),
            position: Vec3::zeros(),
        }
    }

    /// Builds a camera at `position` looking at `focus`.
    pub fn look_at(position: Vec3, focus: Vec3, up: Vec3) -> Result<Self> {
        Ok(Self {
            rotation: lookat_rotation(up, focus, position)?,
            position,
        })
    }

    pub fn rotation(&self) -> &Mat3 {
        &self.rotation
    }

    pub fn position(&self) -> Vec3 {
        self.position
    }

    pub fn forward(&self) -> Vec3 {
        self.rotation.column(2).into_owned()
    }

    pub fn right(&self) -> Vec3 {
        self.rotation.column(0).into_owned()
    }

    pub fn up(&self) -> Vec3 {
        -self.rotation.column(1).into_owned()
    }

    /// `[R | t]` as 12 row-major values.
    pub fn to_rows_3x4(&self) -> [f64; 12] {
        let r = &self.rotation;
        let t = &self.position;
        [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            t[0],
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            t[1],
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
            t[2],
        ]
    }

    pub fn from_rows_3x4(m: &[f64]) -> Result<Self> {
        if m.len() != 12 {
            return Err(Error::invalid(
                "camera pose",
                format!("expected 12 values, got {}", m.len()),
            ));
        }
        let rotation = Mat3::new(m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]);
        Self::new(rotation, Vec3::new(m[3], m[7], m[11]))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
    pub near: f64,
    pub far: f64,
}

impl Ray {
    pub fn new(origin: Vec3, direction: Vec3, near: f64, far: f64) -> Result<Self> {
        if ((direction.norm() - 1.0).abs()) > 1e-9 {
            return Err(Error::invalid("ray", "direction must be unit length"));
        }
        if !(0.0 < near && near < far) {
            return Err(Error::invalid("ray", format!("need 0 < near < far, got {near}, {far}")));
        }
        Ok(Self {
            origin,
            direction,
            near,
            far,
        })
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }

    pub fn with_bounds(&self, near: f64, far: f64) -> Result<Self> {
        Self::new(self.origin, self.direction, near, far)
    }
}

/// Pinhole rays through pixel centres. Pixels are `(x, y)` = (column, row).
pub fn generate_rays(
    pose: &CameraPose,
    intr: &CameraIntrinsics,
    pixels: &[(u32, u32)],
    near: f64,
    far: f64,
) -> Result<Vec<Ray>> {
    pixels
        .iter()
        .map(|&(x, y)| {
            if x >= intr.width || y >= intr.height {
                return Err(Error::PixelOutOfBounds {
                    x: x as i64,
                    y: y as i64,
                    width: intr.width,
                    height: intr.height,
                });
            }
            let cam = Vec3::new(
                (x as f64 + 0.5 - intr.principal_x) / intr.focal_x,
                (y as f64 + 0.5 - intr.principal_y) / intr.focal_y,
                1.0,
            );
            let dir = (pose.rotation * cam).normalize();
            Ray::new(pose.position, dir, near, far)
        })
        .collect()
}

/// Camera rotation whose forward (z) column points from `position` to
/// `focus` and whose negated y column is the component of `up` orthogonal
/// to forward.
pub fn lookat_rotation(up: Vec3, focus: Vec3, position: Vec3) -> Result<Mat3> {
    let to_focus = focus - position;
    let dist = to_focus.norm();
    if !(dist > 1e-9) {
        return Err(Error::DegenerateLookAt("focus coincides with position".into()));
    }
    let forward = to_focus / dist;
    let right = forward.cross(&up);
    let right_norm = right.norm();
    if !(right_norm > 1e-9) {
        return Err(Error::DegenerateLookAt(
            "up is parallel to the viewing direction".into(),
        ));
    }
    let right = right / right_norm;
    let down = forward.cross(&right);
    Ok(Mat3::from_columns(&[right, down, forward]))
}

/// Least-squares point closest to all optical axes: minimises
/// Σᵢ ‖(I − dᵢdᵢᵀ)(p − oᵢ)‖² via the 3×3 normal equations.
pub fn mean_focus_point(poses: &[CameraPose]) -> Result<Vec3> {
    if poses.len() < 2 {
        return Err(Error::invalid("focus point", "need at least two poses"));
    }
    let mut a = Mat3::zeros();
    let mut b = Vec3::zeros();
    for pose in poses {
        let d = pose.forward();
        let proj = Mat3::identity() - d * d.transpose();
        a += proj;
        b += proj * pose.position;
    }
    let sv = a.singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(cond < 1e12) {
        return Err(Error::SingularFocus(cond));
    }
    a.lu().solve(&b).ok_or(Error::SingularFocus(cond))
}

/// Distribution of unobserved camera poses: positions uniform in the box
/// spanned by the target cameras, orientations looking at a jittered common
/// focus point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseSampleSpace {
    pub box_min: Vec3,
    pub box_max: Vec3,
    pub mean_up: Vec3,
    pub focus: Vec3,
    pub jitter_std: f64,
}

pub const DEFAULT_FOCUS_JITTER: f64 = 0.125;

pub fn build_sample_space(target_poses: &[CameraPose], jitter_std: f64) -> Result<PoseSampleSpace> {
    if target_poses.len() < 2 {
        return Err(Error::invalid("sample space", "need at least two target poses"));
    }
    if !(jitter_std >= 0.0) {
        return Err(Error::invalid("sample space", "jitter must be non-negative"));
    }
    let mut box_min = Vec3::repeat(f64::INFINITY);
    let mut box_max = Vec3::repeat(f64::NEG_INFINITY);
    let mut up_sum = Vec3::zeros();
    for pose in target_poses {
        box_min = box_min.inf(&pose.position);
        box_max = box_max.sup(&pose.position);
        up_sum += pose.up();
    }
    let up_norm = up_sum.norm();
    if !(up_norm > 1e-12) {
        return Err(Error::invalid("sample space", "target up axes cancel out"));
    }
    Ok(PoseSampleSpace {
        box_min,
        box_max,
        mean_up: up_sum / up_norm,
        focus: mean_focus_point(target_poses)?,
        jitter_std,
    })
}

impl PoseSampleSpace {
    pub fn diagonal(&self) -> f64 {
        (self.box_max - self.box_min).norm()
    }
}

const LOOKAT_RETRIES: usize = 16;

pub fn sample_unobserved_pose<R: Rng + ?Sized>(space: &PoseSampleSpace, rng: &mut R) -> Result<CameraPose> {
    let mut last_err = None;
    for _ in 0..LOOKAT_RETRIES {
        let position = Vec3::from_fn(|i, _| {
            let (lo, hi) = (space.box_min[i], space.box_max[i]);
            if hi > lo {
                rng.random_range(lo..hi)
            } else {
                lo
            }
        });
        let jitter = if space.jitter_std > 0.0 {
            let normal = Normal::new(0.0, space.jitter_std).expect("positive std");
            Vec3::from_fn(|_, _| normal.sample(rng))
        } else {
            Vec3::zeros()
        };
        match lookat_rotation(space.mean_up, space.focus + jitter, position) {
            Ok(rotation) => return Ok(CameraPose { rotation, position }),
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.expect("at least one attempt"))
}

/// Ray-interval annealing: the sampling window starts as a fraction
/// `start_fraction` of the full interval around `mid` and widens linearly
/// to the full `[near, far]` over `iterations` steps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnealSchedule {
    pub near: f64,
    pub far: f64,
    pub mid: f64,
    pub iterations: u64,
    pub start_fraction: f64,
}

pub const DEFAULT_ANNEAL_ITERS: u64 = 256;
pub const DEFAULT_ANNEAL_START: f64 = 0.5;

impl AnnealSchedule {
    pub fn new(near: f64, far: f64, mid: Option<f64>, iterations: u64, start_fraction: f64) -> Result<Self> {
        let mid = mid.unwrap_or(0.5 * (near + far));
        if !(near < mid && mid < far) {
            return Err(Error::invalid("anneal schedule", "need near < mid < far"));
        }
        if iterations < 1 {
            return Err(Error::invalid("anneal schedule", "iterations must be at least 1"));
        }
        if !(start_fraction > 0.0 && start_fraction <= 1.0) {
            return Err(Error::invalid("anneal schedule", "start fraction must lie in (0, 1]"));
        }
        Ok(Self {
            near,
            far,
            mid,
            iterations,
            start_fraction,
        })
    }

    /// `min(max(i / N_t, p_s), 1)`.
    pub fn eta(&self, iteration: u64) -> f64 {
        (iteration as f64 / self.iterations as f64)
            .max(self.start_fraction)
            .min(1.0)
    }

    pub fn bounds(&self, iteration: u64) -> (f64, f64) {
        let eta = self.eta(iteration);
        (
            self.mid + (self.near - self.mid) * eta,
            self.mid + (self.far - self.mid) * eta,
        )
    }
}

pub fn anneal_bounds(schedule: &AnnealSchedule, iteration: u64) -> (f64, f64) {
    schedule.bounds(iteration)
}

/// `n` sorted sample positions in `[ray.near, ray.far]`, one per equal-width
/// bin: bin midpoints, or uniform within each bin when `jitter` is set.
pub fn stratified_samples<R: Rng + ?Sized>(ray: &Ray, n: usize, rng: &mut R, jitter: bool) -> Vec<f64> {
    stratified_in(ray.near, ray.far, n, rng, jitter)
}

pub fn stratified_in<R: Rng + ?Sized>(near: f64, far: f64, n: usize, rng: &mut R, jitter: bool) -> Vec<f64> {
    assert!(n >= 2, "stratified sampling needs at least two samples");
    let width = (far - near) / n as f64;
    (0..n)
        .map(|k| {
            let u = if jitter { rng.random::<f64>() } else { 0.5 };
            near + (k as f64 + u) * width
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn assert_vec_close(a: Vec3, b: Vec3, tol: f64) {
        assert!((a - b).norm() < tol, "{a:?} vs {b:?}");
    }

    #[test]
    fn principal_pixel_looks_forward() {
        let intr = CameraIntrinsics::new(10.0, 10.0, 2.5, 2.5, 5, 5).unwrap();
        let pose = CameraPose::look_at(Vec3::new(1.0, 2.0, 3.0), Vec3::zeros(), Vec3::y()).unwrap();
        let rays = generate_rays(&pose, &intr, &[(2, 2)], 0.1, 10.0).unwrap();
        assert_vec_close(rays[0].direction, pose.forward(), 1e-12);
        assert_vec_close(rays[0].origin, pose.position(), 0.0 + 1e-15);
    }

    #[test]
    fn corner_pixel_half_angle() {
        let intr = CameraIntrinsics::centered(64, 64, 64.0).unwrap();
        let rays = generate_rays(&CameraPose::identity(), &intr, &[(0, 0), (63, 63), (0, 63)], 1.0, 2.0).unwrap();
        for r in &rays {
            let ratio = (r.direction.x / r.direction.z).abs();
            // Pixel centre sits half a pixel inside the corner.
            assert!((ratio - (32.0 - 0.5) / 64.0).abs() < 1e-12);
            assert!((r.direction.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn out_of_bounds_pixel_is_rejected() {
        let intr = CameraIntrinsics::centered(4, 4, 4.0).unwrap();
        assert!(matches!(
            generate_rays(&CameraPose::identity(), &intr, &[(4, 0)], 1.0, 2.0),
            Err(Error::PixelOutOfBounds { .. })
        ));
    }

    #[test]
    fn axis_aligned_lookat() {
        let r = lookat_rotation(Vec3::y(), Vec3::zeros(), Vec3::new(0.0, 0.0, -1.0)).unwrap();
        assert_vec_close(r.column(2).into_owned(), Vec3::z(), 1e-15);
        assert_vec_close(-r.column(1).into_owned(), Vec3::y(), 1e-15);
        assert!((r.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_lookat() {
        assert!(lookat_rotation(Vec3::z(), Vec3::z(), Vec3::zeros()).is_err());
        assert!(lookat_rotation(Vec3::y(), Vec3::zeros(), Vec3::zeros()).is_err());
    }

    #[test]
    fn focus_of_two_crossing_axes() {
        let a = CameraPose::look_at(Vec3::new(1.0, 0.0, 0.0), Vec3::new(-5.0, 0.0, 0.0), Vec3::y()).unwrap();
        let b = CameraPose::look_at(Vec3::new(0.0, 1.0, 0.0), Vec3::new(0.0, -5.0, 0.0), Vec3::x()).unwrap();
        assert_vec_close(mean_focus_point(&[a, b]).unwrap(), Vec3::zeros(), 1e-12);
    }

    #[test]
    fn parallel_axes_are_singular() {
        let a = CameraPose::look_at(Vec3::new(0.0, 0.0, 0.0), Vec3::new(0.0, 0.0, 1.0), Vec3::y()).unwrap();
        let b = CameraPose::look_at(Vec3::new(1.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 1.0), Vec3::y()).unwrap();
        assert!(matches!(mean_focus_point(&[a, b]), Err(Error::SingularFocus(_))));
    }

    #[test]
    fn sample_space_box_and_up() {
        let a = CameraPose::look_at(Vec3::new(0.0, 0.0, 0.0), Vec3::new(0.5, 0.5, 5.0), Vec3::y()).unwrap();
        let b = CameraPose::look_at(Vec3::new(1.0, 2.0, 3.0), Vec3::new(0.5, 0.5, 5.0), Vec3::y()).unwrap();
        let space = build_sample_space(&[a, b], DEFAULT_FOCUS_JITTER).unwrap();
        assert_eq!(space.box_min, Vec3::zeros());
        assert_eq!(space.box_max, Vec3::new(1.0, 2.0, 3.0));
        assert_eq!(space.jitter_std, 0.125);

        let c = CameraPose::look_at(Vec3::new(3.0, 0.0, 0.0), Vec3::zeros(), Vec3::y()).unwrap();
        let d = CameraPose::look_at(Vec3::new(0.0, 0.0, 3.0), Vec3::zeros(), Vec3::y()).unwrap();
        let space = build_sample_space(&[c, d], 0.0).unwrap();
        assert_vec_close(space.mean_up, Vec3::y(), 1e-12);
    }

    #[test]
    fn zero_jitter_looks_exactly_at_focus() {
        let c = CameraPose::look_at(Vec3::new(3.0, 1.0, 0.0), Vec3::zeros(), Vec3::y()).unwrap();
        let d = CameraPose::look_at(Vec3::new(0.0, 1.0, 3.0), Vec3::zeros(), Vec3::y()).unwrap();
        let space = build_sample_space(&[c, d], 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let pose = sample_unobserved_pose(&space, &mut rng).unwrap();
            let expected = (space.focus - pose.position()).normalize();
            assert_vec_close(pose.forward(), expected, 1e-12);
        }
    }

    #[test]
    fn anneal_examples() {
        let s = AnnealSchedule::new(2.0, 6.0, Some(4.0), 100, 0.5).unwrap();
        assert_eq!(s.eta(0), 0.5);
        assert_eq!(s.bounds(0), (3.0, 5.0));
        assert_eq!(s.bounds(100), (2.0, 6.0));
        assert_eq!(s.bounds(1000), (2.0, 6.0));
        assert_eq!(s.eta(75), 0.75);
        assert_eq!(s.bounds(75), (2.5, 5.5));
    }

    #[test]
    fn anneal_rejects_bad_parameters() {
        assert!(AnnealSchedule::new(2.0, 6.0, Some(7.0), 10, 0.5).is_err());
        assert!(AnnealSchedule::new(2.0, 6.0, None, 0, 0.5).is_err());
        assert!(AnnealSchedule::new(2.0, 6.0, None, 10, 0.0).is_err());
        assert_eq!(AnnealSchedule::new(2.0, 6.0, None, 10, 1.0).unwrap().mid, 4.0);
    }

    #[test]
    fn stratified_midpoints() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(
            stratified_in(0.0, 1.0, 4, &mut rng, false),
            vec![0.125, 0.375, 0.625, 0.875]
        );
        assert_eq!(stratified_in(2.0, 6.0, 2, &mut rng, false), vec![3.0, 5.0]);
    }

    #[test]
    fn jittered_samples_stay_in_their_bins() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ray = Ray::new(Vec3::zeros(), Vec3::z(), 1.0, 3.0).unwrap();
        for _ in 0..100 {
            let ts = stratified_samples(&ray, 8, &mut rng, true);
            for (k, t) in ts.iter().enumerate() {
                let lo = 1.0 + 0.25 * k as f64;
                assert!(*t >= lo && *t <= lo + 0.25);
            }
            assert!(ts.windows(2).all(|w| w[0] < w[1]));
        }
    }
}
