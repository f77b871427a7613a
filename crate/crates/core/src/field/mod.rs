//! The radiance field: an MLP mapping encoded position (and optionally
//! encoded view direction) to density and colour.
//!
//! Density depends on position only; the view direction enters the colour
//! branch alone.

pub mod encoding;

use rand::Rng;
use serde::{Deserialize, Serialize};
use svrf_autodiff::{compose, Graph, NodeId, ParameterStore, Tensor};

use crate::binding::Binding;
use crate::error::{Error, Result};
use crate::geometry::{Ray, Vec3};

pub use encoding::{
    encode_node, encoding_by_name, encoding_names, integrated_encode, positional_encode, EncodingConfig,
    IntegratedEncoding, PointEncoding, PositionEncoding, RaySegmentGaussian,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldConfig {
    pub encoding: EncodingConfig,
    /// Units per trunk layer.
    pub width: usize,
    /// Number of trunk layers.
    pub depth: usize,
    /// Trunk layer whose input is re-concatenated with the position encoding.
    pub skip_layer: Option<usize>,
    /// Units of the hidden layer in the colour branch.
    pub color_width: usize,
    /// Initial bias of the density head, so a fresh field starts mostly transparent.
    pub density_shift: f64,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self {
            encoding: EncodingConfig::default(),
            width: 128,
            depth: 4,
            skip_layer: Some(2),
            color_width: 64,
            density_shift: -1.0,
        }
    }
}

/// Name of the checkpoint entry carrying the architecture.
pub const FIELD_TAG: &str = "FIELD";

impl FieldConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoding.validate()?;
        if self.width == 0 || self.depth == 0 || self.color_width == 0 {
            return Err(Error::invalid(
                "field config",
                "width, depth and color_width must be positive",
            ));
        }
        if let Some(s) = self.skip_layer {
            if s == 0 || s >= self.depth {
                return Err(Error::invalid("field config", "skip_layer must lie in 1..depth"));
            }
        }
        Ok(())
    }

    fn layer_input(&self, layer: usize) -> usize {
        let enc = self.encoding.position_dim();
        match layer {
            0 => enc,
            l if Some(l) == self.skip_layer => self.width + enc,
            _ => self.width,
        }
    }

    fn to_tag(self) -> Vec<f64> {
        vec![
            self.encoding.position_freqs as f64,
            self.encoding.direction_freqs as f64,
            if self.encoding.integrated { 1.0 } else { 0.0 },
            self.width as f64,
            self.depth as f64,
            self.skip_layer.map_or(-1.0, |s| s as f64),
            self.color_width as f64,
            self.density_shift,
        ]
    }

    fn from_tag(v: &[f64]) -> Result<Self> {
        if v.len() != 8 {
            return Err(Error::invalid("field checkpoint", "FIELD entry must hold 8 values"));
        }
        let cfg = Self {
            encoding: EncodingConfig {
                position_freqs: v[0] as usize,
                direction_freqs: v[1] as usize,
                integrated: v[2] != 0.0,
            },
            width: v[3] as usize,
            depth: v[4] as usize,
            skip_layer: (v[5] >= 0.0).then_some(v[5] as usize),
            color_width: v[6] as usize,
            density_shift: v[7],
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Output nodes of a field query over `N` samples.
#[derive(Clone, Copy, Debug)]
pub struct FieldOutput {
    /// `N×1`, non-negative.
    pub sigma: NodeId,
    /// `N×3`, in `[0, 1]`.
    pub rgb: NodeId,
}

/// Field architecture together with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldParams {
    pub config: FieldConfig,
    pub store: ParameterStore,
}

fn uniform_init<R: Rng + ?Sized>(rng: &mut R, fan_in: usize, fan_out: usize, bound: f64) -> Vec<f64> {
    (0..fan_in * fan_out).map(|_| rng.random_range(-bound..bound)).collect()
}

impl FieldParams {
    /// He-uniform trunk weights, Glorot-uniform heads, zero biases except the
    /// density bias which starts at `density_shift`.
    pub fn init<R: Rng + ?Sized>(config: FieldConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut store = ParameterStore::new();
        let w = config.width;
        for l in 0..config.depth {
            let fan_in = config.layer_input(l);
            let bound = (6.0 / fan_in as f64).sqrt();
            store.insert(
                format!("field.l{l}.w"),
                vec![fan_in, w],
                uniform_init(rng, fan_in, w, bound),
            )?;
            store.insert(format!("field.l{l}.b"), vec![w], vec![0.0; w])?;
        }
        let glorot = |a: usize, b: usize| (6.0 / (a + b) as f64).sqrt();
        store.insert("field.density.w", vec![w, 1], uniform_init(rng, w, 1, glorot(w, 1)))?;
        store.insert("field.density.b", vec![1], vec![config.density_shift])?;
        let color_in = w + config.encoding.direction_dim();
        let cw = config.color_width;
        store.insert(
            "field.color0.w",
            vec![color_in, cw],
            uniform_init(rng, color_in, cw, (6.0 / color_in as f64).sqrt()),
        )?;
        store.insert("field.color0.b", vec![cw], vec![0.0; cw])?;
        store.insert("field.color1.w", vec![cw, 3], uniform_init(rng, cw, 3, glorot(cw, 3)))?;
        store.insert("field.color1.b", vec![3], vec![0.0; 3])?;
        Ok(Self { config, store })
    }

    /// Every parameter set to zero.
    pub fn zeroed(config: FieldConfig) -> Result<Self> {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let mut p = Self::init(config, &mut rng)?;
        for (_, e) in p.store.iter_mut() {
            e.values_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        Ok(p)
    }

    pub fn parameter_count(&self) -> usize {
        self.store.total_len()
    }

    /// Builds the network over `N` encoded samples. `pos_enc` is `N×6L_x`;
    /// `dir_enc` is `N×6L_d` and required when `L_d > 0`.
    pub fn query(
        &self,
        g: &mut Graph,
        binding: Binding,
        pos_enc: NodeId,
        dir_enc: Option<NodeId>,
    ) -> Result<FieldOutput> {
        query(&self.config, g, binding, pos_enc, dir_enc)
    }

    /// Encodes the samples of a batch of rays. Rows are ray-major: sample
    /// `k` of ray `r` is row `r·n + k`. `ts` holds `n` sorted positions per
    /// ray; `footprint` is the pixel radius per unit distance.
    pub fn encode_samples(&self, rays: &[Ray], ts: &[f64], n: usize, footprint: f64) -> (Tensor, Option<Tensor>) {
        encode_samples(&self.config.encoding, rays, ts, n, footprint)
    }

    /// Density and colour at a single point, evaluated with point encoding.
    pub fn query_point(&self, x: &Vec3, d: &Vec3) -> Result<(f64, [f64; 3])> {
        let mut g = Graph::new();
        let pos = g.constant(Tensor::row(positional_encode(x, self.config.encoding.position_freqs)));
        let dir = (self.config.encoding.direction_freqs > 0)
            .then(|| g.constant(Tensor::row(positional_encode(d, self.config.encoding.direction_freqs))));
        let out = self.query(&mut g, Binding::Trainable, pos, dir)?;
        let eval = g.evaluate(&self.store)?;
        let rgb = eval.value(out.rgb).data();
        Ok((eval.scalar(out.sigma), [rgb[0], rgb[1], rgb[2]]))
    }

    /// Parameters plus a `FIELD` entry describing the architecture.
    pub fn to_checkpoint(&self) -> ParameterStore {
        let mut store = self.store.clone();
        let tag = self.config.to_tag();
        store
            .set(FIELD_TAG, vec![tag.len()], tag)
            .expect("tag shape matches its length");
        store
    }

    pub fn from_checkpoint(mut store: ParameterStore) -> Result<Self> {
        let tag = store
            .remove(FIELD_TAG)
            .ok_or_else(|| Error::invalid("field checkpoint", "missing FIELD entry"))?;
        let config = FieldConfig::from_tag(tag.values())?;
        let expected = Self::zeroed(config)?;
        if !expected.store.same_layout(&store) {
            return Err(Error::invalid(
                "field checkpoint",
                "parameter layout does not match FIELD entry",
            ));
        }
        Ok(Self { config, store })
    }
}

pub fn query(
    config: &FieldConfig,
    g: &mut Graph,
    binding: Binding,
    pos_enc: NodeId,
    dir_enc: Option<NodeId>,
) -> Result<FieldOutput> {
    let mut h = pos_enc;
    for l in 0..config.depth {
        let input = if Some(l) == config.skip_layer {
            g.concat_cols(&[h, pos_enc])
        } else {
            h
        };
        let w = binding.leaf(g, &format!("field.l{l}.w"))?;
        let b = binding.leaf(g, &format!("field.l{l}.b"))?;
        let z = compose::linear(g, input, w, b);
        h = compose::relu(g, z);
    }
    let dw = binding.leaf(g, "field.density.w")?;
    let db = binding.leaf(g, "field.density.b")?;
    let density_pre = compose::linear(g, h, dw, db);
    let sigma = compose::softplus(g, density_pre);

    let color_in = match (config.encoding.direction_freqs, dir_enc) {
        (0, _) => h,
        (_, Some(d)) => g.concat_cols(&[h, d]),
        (_, None) => {
            return Err(Error::invalid(
                "field query",
                "direction encoding required when direction_freqs > 0",
            ));
        }
    };
    let c0w = binding.leaf(g, "field.color0.w")?;
    let c0b = binding.leaf(g, "field.color0.b")?;
    let c = compose::linear(g, color_in, c0w, c0b);
    let c = compose::relu(g, c);
    let c1w = binding.leaf(g, "field.color1.w")?;
    let c1b = binding.leaf(g, "field.color1.b")?;
    let c = compose::linear(g, c, c1w, c1b);
    let rgb = compose::sigmoid(g, c);
    Ok(FieldOutput { sigma, rgb })
}

pub fn encode_samples(
    config: &EncodingConfig,
    rays: &[Ray],
    ts: &[f64],
    n: usize,
    footprint: f64,
) -> (Tensor, Option<Tensor>) {
    assert_eq!(ts.len(), rays.len() * n, "ts must hold n samples per ray");
    let encoding = config.position_encoding();
    let pd = config.position_dim();
    let mut pos = Vec::with_capacity(ts.len() * pd);
    for (r, ray) in rays.iter().enumerate() {
        let row = &ts[r * n..(r + 1) * n];
        for k in 0..n {
            let next = if k + 1 < n { row[k + 1] } else { ray.far };
            encoding.encode_sample(ray, row[k], next, footprint, config.position_freqs, &mut pos);
        }
    }
    let pos = Tensor::new(ts.len(), pd, pos).expect("encoding length");
    let dir = (config.direction_freqs > 0).then(|| {
        let dd = config.direction_dim();
        let mut dir = Vec::with_capacity(ts.len() * dd);
        for ray in rays {
            let e = positional_encode(&ray.direction, config.direction_freqs);
            for _ in 0..n {
                dir.extend_from_slice(&e);
            }
        }
        Tensor::new(ts.len(), dd, dir).expect("encoding length")
    });
    (pos, dir)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small() -> FieldConfig {
        FieldConfig {
            encoding: EncodingConfig {
                position_freqs: 3,
                direction_freqs: 2,
                integrated: false,
            },
            width: 16,
            depth: 3,
            skip_layer: Some(1),
            color_width: 8,
            density_shift: -1.0,
        }
    }

    #[test]
    fn zero_network_outputs() {
        let p = FieldParams::zeroed(small()).unwrap();
        let (sigma, rgb) = p.query_point(&Vec3::new(0.1, 0.2, 0.3), &Vec3::z()).unwrap();
        assert!((sigma - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(rgb, [0.5, 0.5, 0.5]);
    }

    #[test]
    fn outputs_in_range_for_random_params() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = FieldParams::init(small(), &mut rng).unwrap();
        for i in 0..20 {
            let x = Vec3::new(i as f64 * 0.37 - 3.0, (i as f64).sin() * 10.0, 0.5);
            let (sigma, rgb) = p.query_point(&x, &Vec3::new(0.6, 0.0, 0.8)).unwrap();
            assert!(sigma >= 0.0 && sigma.is_finite());
            assert!(rgb.iter().all(|c| (0.0..=1.0).contains(c)));
        }
    }

    #[test]
    fn density_ignores_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = FieldParams::init(small(), &mut rng).unwrap();
        let x = Vec3::new(0.3, -0.2, 0.9);
        let (s1, c1) = p.query_point(&x, &Vec3::z()).unwrap();
        let (s2, c2) = p.query_point(&x, &Vec3::new(0.0, 0.6, 0.8)).unwrap();
        assert_eq!(s1, s2);
        assert_ne!(c1, c2);
    }

    #[test]
    fn checkpoint_round_trip_and_layout_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = FieldParams::init(small(), &mut rng).unwrap();
        let back = FieldParams::from_checkpoint(p.to_checkpoint()).unwrap();
        assert_eq!(back, p);

        let mut broken = p.to_checkpoint();
        broken.remove("field.color1.b");
        assert!(FieldParams::from_checkpoint(broken).is_err());
    }

    #[test]
    fn missing_direction_encoding_is_rejected() {
        let p = FieldParams::zeroed(small()).unwrap();
        let mut g = Graph::new();
        let pos = g.constant(Tensor::zeros(1, 18));
        assert!(p.query(&mut g, Binding::Trainable, pos, None).is_err());
    }
}
