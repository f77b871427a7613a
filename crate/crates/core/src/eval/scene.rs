//! Analytic scenes built from soft-edged primitives, and the bundled scene
//! registry.

use std::sync::LazyLock;

use serde::{Deserialize, Serialize};
use svrf_autodiff::{Graph, ParameterStore, Tensor};

use crate::error::{Error, Result};
use crate::field::FieldOutput;
use crate::geometry::{Ray, Vec3};
use crate::render::RadianceSource;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Shape {
    Sphere {
        center: [f64; 3],
        radius: f64,
    },
    Box {
        center: [f64; 3],
        half_extent: [f64; 3],
    },
    /// Infinite in the two axes other than `axis`.
    Slab {
        axis: usize,
        min: f64,
        max: f64,
    },
}

impl Shape {
    /// Signed distance-like value: negative inside, positive outside.
    fn signed_distance(&self, x: &Vec3) -> f64 {
        match *self {
            Shape::Sphere { center, radius } => (x - Vec3::from(center)).norm() - radius,
            Shape::Box { center, half_extent } => {
                let q = (x - Vec3::from(center)).abs() - Vec3::from(half_extent);
                let outside = q.map(|v| v.max(0.0)).norm();
                outside + q.max().min(0.0)
            }
            Shape::Slab { axis, min, max } => (min - x[axis]).max(x[axis] - max),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Albedo {
    Solid {
        rgb: [f64; 3],
    },
    /// 3-D checkerboard of cell size `cell` with smoothed cell borders.
    Checker {
        a: [f64; 3],
        b: [f64; 3],
        cell: f64,
    },
    /// Sum of sinusoids per channel, in `[0, 1]`.
    Waves {
        frequency: f64,
    },
}

impl Albedo {
    pub fn at(&self, x: &Vec3) -> [f64; 3] {
        match *self {
            Albedo::Solid { rgb } => rgb,
            Albedo::Checker { a, b, cell } => {
                let f = std::f64::consts::PI / cell;
                let s = (f * x[0]).sin() * (f * x[1]).sin() * (f * x[2]).sin();
                let u = (0.5 + 4.0 * s).clamp(0.0, 1.0);
                let u = u * u * (3.0 - 2.0 * u);
                std::array::from_fn(|k| b[k] + (a[k] - b[k]) * u)
            }
            Albedo::Waves { frequency } => {
                let f = frequency * std::f64::consts::TAU;
                [
                    0.5 + 0.4 * (f * x[0]).sin() * (f * 0.7 * x[2]).cos(),
                    0.5 + 0.4 * (f * 1.3 * x[1] + 1.0).sin(),
                    0.5 + 0.3 * (f * (x[0] + x[1] + x[2])).cos(),
                ]
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    pub shape: Shape,
    pub albedo: Albedo,
    /// Density inside the primitive.
    pub density: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScene {
    pub name: String,
    pub primitives: Vec<Primitive>,
    /// Composited behind the scene; `None` leaves empty pixels black.
    pub background: Option<[f64; 3]>,
    /// Width of the smooth density falloff at primitive boundaries.
    pub softness: f64,
    pub focus: [f64; 3],
    pub camera_distance: f64,
    pub near: f64,
    pub far: f64,
}

static EMPTY_STORE: LazyLock<ParameterStore> = LazyLock::new(ParameterStore::new);

impl SyntheticScene {
    pub fn validate(&self) -> Result<()> {
        for p in &self.primitives {
            if !(p.density >= 0.0) {
                return Err(Error::invalid("scene", "densities must be non-negative"));
            }
            if let Albedo::Solid { rgb } = p.albedo {
                if rgb.iter().any(|c| !(0.0..=1.0).contains(c)) {
                    return Err(Error::invalid("scene", "albedo must lie in [0, 1]"));
                }
            }
        }
        if !(0.0 < self.near && self.near < self.far) {
            return Err(Error::invalid("scene", "need 0 < near < far"));
        }
        Ok(())
    }

    /// Density and colour at `x`. Overlapping primitives add densities and
    /// mix colours by density.
    pub fn sample(&self, x: &Vec3) -> (f64, [f64; 3]) {
        let mut sigma = 0.0;
        let mut rgb = [0.0; 3];
        for p in &self.primitives {
            let sd = p.shape.signed_distance(x);
            let occupancy = if self.softness > 0.0 {
                let u = (0.5 - sd / self.softness).clamp(0.0, 1.0);
                u * u * (3.0 - 2.0 * u)
            } else if sd <= 0.0 {
                1.0
            } else {
                0.0
            };
            if occupancy > 0.0 {
                let s = p.density * occupancy;
                let c = p.albedo.at(x);
                for k in 0..3 {
                    rgb[k] += s * c[k];
                }
                sigma += s;
            }
        }
        if sigma > 0.0 {
            rgb.iter_mut().for_each(|c| *c /= sigma);
        }
        (sigma, rgb)
    }

    pub fn focus(&self) -> Vec3 {
        Vec3::from(self.focus)
    }
}

impl RadianceSource for SyntheticScene {
    fn query_batch(&self, g: &mut Graph, rays: &[Ray], ts: &[f64], n: usize, _footprint: f64) -> Result<FieldOutput> {
        let mut sigma = Vec::with_capacity(ts.len());
        let mut rgb = Vec::with_capacity(3 * ts.len());
        for (r, ray) in rays.iter().enumerate() {
            for &t in &ts[r * n..(r + 1) * n] {
                let (s, c) = self.sample(&ray.at(t));
                sigma.push(s);
                rgb.extend_from_slice(&c);
            }
        }
        Ok(FieldOutput {
            sigma: g.constant(Tensor::new(ts.len(), 1, sigma)?),
            rgb: g.constant(Tensor::new(ts.len(), 3, rgb)?),
        })
    }

    fn parameters(&self) -> &ParameterStore {
        &EMPTY_STORE
    }
}

const DENSE: f64 = 40.0;
const SOFTNESS: f64 = 0.03;

fn solid(rgb: [f64; 3]) -> Albedo {
    Albedo::Solid { rgb }
}

fn base(name: &str, primitives: Vec<Primitive>, background: Option<[f64; 3]>) -> SyntheticScene {
    SyntheticScene {
        name: name.to_string(),
        primitives,
        background,
        softness: SOFTNESS,
        focus: [0.0, 0.0, 0.0],
        camera_distance: 3.0,
        near: 1.0,
        far: 5.0,
    }
}

/// A red box in front of an infinite blue slab.
pub fn slab_scene() -> SyntheticScene {
    base(
        "slab",
        vec![
            Primitive {
                shape: Shape::Box {
                    center: [-0.2, -0.2, 0.0],
                    half_extent: [0.45, 0.1, 0.5],
                },
                albedo: solid([0.9, 0.15, 0.1]),
                density: DENSE,
            },
            Primitive {
                shape: Shape::Slab {
                    axis: 1,
                    min: 0.6,
                    max: 0.9,
                },
                albedo: solid([0.1, 0.3, 0.85]),
                density: DENSE,
            },
        ],
        None,
    )
}

/// Three spheres resting on a ground plate, white background.
pub fn spheres_scene() -> SyntheticScene {
    let sphere = |center: [f64; 3], radius: f64, rgb: [f64; 3]| Primitive {
        shape: Shape::Sphere { center, radius },
        albedo: solid(rgb),
        density: DENSE,
    };
    base(
        "spheres",
        vec![
            Primitive {
                shape: Shape::Box {
                    center: [0.0, 0.0, -0.55],
                    half_extent: [1.2, 1.2, 0.05],
                },
                albedo: Albedo::Checker {
                    a: [0.75, 0.75, 0.7],
                    b: [0.45, 0.45, 0.5],
                    cell: 0.4,
                },
                density: DENSE,
            },
            sphere([-0.55, 0.1, -0.15], 0.35, [0.85, 0.2, 0.15]),
            sphere([0.45, 0.25, -0.2], 0.3, [0.15, 0.7, 0.25]),
            sphere([0.0, -0.35, -0.25], 0.25, [0.2, 0.3, 0.85]),
        ],
        Some([1.0, 1.0, 1.0]),
    )
}

/// A procedurally textured cube on a ground plate, white background.
pub fn texture_box_scene() -> SyntheticScene {
    base(
        "texture-box",
        vec![
            Primitive {
                shape: Shape::Box {
                    center: [0.0, 0.0, -0.55],
                    half_extent: [1.2, 1.2, 0.05],
                },
                albedo: solid([0.6, 0.6, 0.6]),
                density: DENSE,
            },
            Primitive {
                shape: Shape::Box {
                    center: [0.0, 0.0, -0.1],
                    half_extent: [0.4, 0.4, 0.4],
                },
                albedo: Albedo::Waves { frequency: 1.5 },
                density: DENSE,
            },
        ],
        Some([1.0, 1.0, 1.0]),
    )
}

/// A named scene constructor.
pub trait SceneBuilder: Send + Sync {
    fn name(&self) -> &'static str;
    fn build(&self) -> SyntheticScene;
}

struct Bundled(&'static str, fn() -> SyntheticScene);

impl SceneBuilder for Bundled {
    fn name(&self) -> &'static str {
        self.0
    }

    fn build(&self) -> SyntheticScene {
        (self.1)()
    }
}

static SCENES: [&dyn SceneBuilder; 3] = [
    &Bundled("slab", slab_scene),
    &Bundled("spheres", spheres_scene),
    &Bundled("texture-box", texture_box_scene),
];

pub fn scene_names() -> Vec<&'static str> {
    SCENES.iter().map(|s| s.name()).collect()
}

pub fn scene_by_name(name: &str) -> Result<SyntheticScene> {
    SCENES
        .iter()
        .find(|s| s.name() == name)
        .map(|s| s.build())
        .ok_or_else(|| Error::Unknown {
            kind: "scene",
            name: name.to_string(),
            available: scene_names().join(", "),
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry() {
        assert_eq!(scene_names(), vec!["slab", "spheres", "texture-box"]);
        for name in scene_names() {
            let s = scene_by_name(name).unwrap();
            assert_eq!(s.name, name);
            s.validate().unwrap();
        }
        assert!(matches!(scene_by_name("dtu"), Err(Error::Unknown { .. })));
    }

    #[test]
    fn sphere_density_inside_and_out() {
        let mut s = spheres_scene();
        s.softness = 0.0;
        let (sigma, rgb) = s.sample(&Vec3::new(-0.55, 0.1, -0.15));
        assert_eq!(sigma, DENSE);
        assert_eq!(rgb, [0.85, 0.2, 0.15]);
        assert_eq!(s.sample(&Vec3::new(0.0, 0.0, 1.5)).0, 0.0);
    }

    #[test]
    fn box_distance() {
        let b = Shape::Box {
            center: [0.0; 3],
            half_extent: [1.0, 2.0, 3.0],
        };
        assert!((b.signed_distance(&Vec3::new(2.0, 0.0, 0.0)) - 1.0).abs() < 1e-15);
        assert!((b.signed_distance(&Vec3::new(0.5, 0.0, 0.0)) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn waves_stay_in_unit_range() {
        let a = Albedo::Waves { frequency: 1.5 };
        for i in 0..200 {
            let x = Vec3::new(i as f64 * 0.031, -(i as f64) * 0.017, i as f64 * 0.005);
            assert!(a.at(&x).iter().all(|c| (0.0..=1.0).contains(c)));
        }
    }
}
