use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use svrf_core::eval::{
    make_dataset, oracle_render, psnr, scene_by_name, scene_names, ssim, Albedo, Dataset, DatasetOptions,
    MetricsReport, Primitive, Shape, SyntheticScene,
};
use svrf_core::geometry::{mean_focus_point, CameraIntrinsics, CameraPose, Vec3};
use svrf_core::Image;

fn random_image(w: usize, h: usize, rng: &mut ChaCha8Rng) -> Image {
    Image::from_data(w, h, (0..w * h * 3).map(|_| rng.random()).collect()).unwrap()
}

/// Direct SSIM: for every window position, weighted means and moments over
/// the 11×11 patch with the outer-product Gaussian.
fn straight_ssim(a: &Image, b: &Image) -> f64 {
    let (w, h) = (a.width, a.height);
    let gray = |img: &Image, x: usize, y: usize| img.pixel(x, y).iter().sum::<f64>() / 3.0;
    let g1: Vec<f64> = (0..11)
        .map(|i| (-((i as f64 - 5.0).powi(2)) / (2.0 * 1.5 * 1.5)).exp())
        .collect();
    let norm: f64 = g1.iter().sum::<f64>().powi(2);
    let (c1, c2) = (1e-4, 9e-4);
    let mut total = 0.0;
    let mut count = 0;
    for y0 in 0..=h - 11 {
        for x0 in 0..=w - 11 {
            let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for j in 0..11 {
                for i in 0..11 {
                    let wt = g1[i] * g1[j] / norm;
                    let (p, q) = (gray(a, x0 + i, y0 + j), gray(b, x0 + i, y0 + j));
                    ma += wt * p;
                    mb += wt * q;
                    saa += wt * p * p;
                    sbb += wt * q * q;
                    sab += wt * p * q;
                }
            }
            let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    total / count as f64
}

#[test]
fn ssim_matches_direct_windowed_computation() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (w, h) in [(11, 11), (17, 13), (24, 24)] {
        let a = random_image(w, h, &mut rng);
        let mut b = a.clone();
        b.data
            .iter_mut()
            .for_each(|v| *v = (*v + rng.random_range(-0.2..0.2)).clamp(0.0, 1.0));
        let fast = ssim(&a, &b).unwrap();
        let slow = straight_ssim(&a, &b);
        assert!((fast - slow).abs() < 1e-6, "{w}x{h}: {fast} vs {slow}");
        let unrelated = random_image(w, h, &mut rng);
        assert!((ssim(&a, &unrelated).unwrap() - straight_ssim(&a, &unrelated)).abs() < 1e-6);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn metrics_are_symmetric(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_image(12, 12, &mut rng);
        let b = random_image(12, 12, &mut rng);
        prop_assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
        prop_assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn reports_are_self_consistent(psnr in 0.0f64..99.0, s in -1.0f64..=1.0) {
        let r = MetricsReport::from_psnr_ssim(psnr, s, None);
        prop_assert!(r.consistency_error() < 1e-9);
    }
}

#[test]
fn shifted_constant_loses_luminance_similarity() {
    let a = Image::from_data(16, 16, vec![0.2; 768]).unwrap();
    let b = Image::from_data(16, 16, vec![0.7; 768]).unwrap();
    assert!(ssim(&a, &b).unwrap() < 1.0);
    assert_eq!(ssim(&a, &a).unwrap(), 1.0);
}

fn scene(primitives: Vec<Primitive>, background: Option<[f64; 3]>) -> SyntheticScene {
    SyntheticScene {
        name: "test".into(),
        primitives,
        background,
        softness: 0.0,
        focus: [0.0; 3],
        camera_distance: 3.0,
        near: 1.0,
        far: 5.0,
    }
}

#[test]
fn empty_scene_renders_background() {
    let s = scene(vec![], Some([0.25, 0.5, 0.75]));
    let pose = CameraPose::look_at(Vec3::new(0.0, -3.0, 0.0), Vec3::zeros(), Vec3::z()).unwrap();
    let intr = CameraIntrinsics::centered(6, 5, 6.0).unwrap();
    let (img, depth) = oracle_render(&s, &pose, &intr, 1024).unwrap();
    assert!(img.data.chunks(3).all(|p| p == [0.25, 0.5, 0.75]));
    assert!(depth.opacity.iter().all(|o| *o == 0.0));
}

#[test]
fn too_few_oracle_samples_is_an_error() {
    let s = scene(vec![], None);
    let intr = CameraIntrinsics::centered(4, 4, 4.0).unwrap();
    assert!(oracle_render(&s, &CameraPose::identity(), &intr, 512).is_err());
}

#[test]
fn center_ray_hits_front_of_opaque_sphere() {
    let radius = 0.8;
    let s = scene(
        vec![Primitive {
            shape: Shape::Sphere {
                center: [0.0; 3],
                radius,
            },
            albedo: Albedo::Solid { rgb: [1.0, 0.0, 0.0] },
            density: 1e3,
        }],
        Some([1.0, 1.0, 1.0]),
    );
    let pose = CameraPose::look_at(Vec3::new(0.0, -3.0, 0.0), Vec3::zeros(), Vec3::z()).unwrap();
    let intr = CameraIntrinsics::centered(15, 15, 15.0).unwrap();
    let n = 1024;
    let (img, depth) = oracle_render(&s, &pose, &intr, n).unwrap();
    let rgb = img.pixel(7, 7);
    assert!(
        (rgb[0] - 1.0).abs() < 1e-6 && rgb[1].abs() < 1e-6 && rgb[2].abs() < 1e-6,
        "{rgb:?}"
    );
    let bin = (s.far - s.near) / n as f64;
    let d = depth.depth[7 * 15 + 7];
    assert!((d - (3.0 - radius)).abs() < 2.0 * bin, "depth {d}");
}

#[test]
fn oracle_converges_on_bundled_scenes() {
    let intr = CameraIntrinsics::centered(12, 12, 13.0).unwrap();
    for name in scene_names() {
        let s = scene_by_name(name).unwrap();
        let pose = CameraPose::look_at(Vec3::new(1.2, -2.6, 1.0), s.focus(), Vec3::z()).unwrap();
        let renders: Vec<Image> = [1024, 2048, 4096]
            .iter()
            .map(|n| oracle_render(&s, &pose, &intr, *n).unwrap().0)
            .collect();
        let linf = |a: &Image, b: &Image| {
            a.data
                .iter()
                .zip(&b.data)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max)
        };
        let d1 = linf(&renders[0], &renders[1]);
        let d2 = linf(&renders[1], &renders[2]);
        assert!(d1 < 1e-3, "{name}: {d1}");
        assert!(d2 < d1, "{name}: {d2} after {d1}");
    }
}

fn options() -> DatasetOptions {
    DatasetOptions {
        resolution: 16,
        focal: 17.5,
        ..DatasetOptions::default()
    }
}

#[test]
fn dataset_has_requested_splits_and_shared_focus() {
    let s = scene_by_name("spheres").unwrap();
    let ds = make_dataset(&s, 3, 5, 1, &options()).unwrap();
    assert_eq!(ds.frames.len(), 8);
    assert_eq!(ds.input.len(), 3);
    assert_eq!(ds.test.len(), 5);
    assert_eq!(ds.manifest().splits.input.len(), 3);
    let focus = mean_focus_point(&ds.poses()).unwrap();
    assert!((focus - s.focus()).norm() < 1e-6, "{focus:?}");
}

#[test]
fn dataset_bytes_depend_only_on_seed() {
    let s = scene_by_name("slab").unwrap();
    let dirs: Vec<tempfile::TempDir> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
    for d in &dirs {
        make_dataset(&s, 2, 1, 7, &options()).unwrap().write(d.path()).unwrap();
    }
    for rel in ["manifest.json", "images/000.png", "images/002.png", "depth/001.svdp"] {
        let a = std::fs::read(dirs[0].path().join(rel)).unwrap();
        let b = std::fs::read(dirs[1].path().join(rel)).unwrap();
        assert_eq!(a, b, "{rel}");
    }
}

#[test]
fn dataset_round_trips_through_disk() {
    let s = scene_by_name("texture-box").unwrap();
    let ds = make_dataset(&s, 2, 2, 3, &options()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let manifest = ds.write(dir.path()).unwrap();
    let back = Dataset::load(&manifest).unwrap();
    assert_eq!(back.input, ds.input);
    assert_eq!(back.test, ds.test);
    for (a, b) in ds.frames.iter().zip(&back.frames) {
        assert!((a.pose.position() - b.pose.position()).norm() < 1e-12);
        assert!(a
            .image
            .data
            .iter()
            .zip(&b.image.data)
            .all(|(x, y)| (x - y).abs() <= 0.5 / 255.0 + 1e-12));
        let (da, db) = (a.depth.as_ref().unwrap(), b.depth.as_ref().unwrap());
        assert!(da.depth.iter().zip(&db.depth).all(|(x, y)| (x - y).abs() < 1e-5));
    }
}

#[test]
fn unknown_scene_lists_bundled_ones() {
    let err = scene_by_name("teapot").unwrap_err().to_string();
    for name in ["slab", "spheres", "texture-box"] {
        assert!(err.contains(name), "{err}");
    }
}

#[test]
fn identical_images_report_the_cap() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let a = random_image(16, 16, &mut rng);
    let r = MetricsReport::compare(&a, &a, None).unwrap();
    assert_eq!(r.psnr, 99.0);
    assert_eq!(r.ssim, 1.0);
    assert!(r.consistency_error() < 1e-9);
}
