//! RealNVP-style flow over flattened `S×S×3` colour patches.
//!
//! Patches are flattened pixel-major, channel-minor: index `(y·S + x)·3 + c`.
//! An optional logit preprocessing squeezes `[0, 1]` to `[ε, 1 − ε]` and
//! maps it to the real line. Each coupling layer keeps the dimensions of
//! one checkerboard parity fixed and transforms the others as
//! `y = x·exp(s) + t`, where `s = s_max·tanh(raw)` and `(raw, t)` come from
//! a two-layer MLP of the fixed dimensions. Parity alternates per layer.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use svrf_autodiff::{compose, Graph, NodeId, ParameterStore, Tensor};

use crate::binding::Binding;
use crate::corpus::PatchCorpus;
use crate::error::{Error, Result};
use crate::optim::{Adam, AdamConfig};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowConfig {
    pub patch_size: usize,
    pub layers: usize,
    /// Hidden units of each coupling network.
    pub width: usize,
    pub s_max: f64,
    /// Squeeze bound of the logit preprocessing; `None` disables it.
    pub eps_logit: Option<f64>,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            patch_size: 8,
            layers: 6,
            width: 128,
            s_max: 2.0,
            eps_logit: Some(1e-3),
        }
    }
}

/// Name of the checkpoint entry carrying the architecture.
pub const FLOW_TAG: &str = "FLOW";

impl FlowConfig {
    pub fn dim(&self) -> usize {
        self.patch_size * self.patch_size * 3
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 || self.width == 0 {
            return Err(Error::invalid("flow config", "patch_size and width must be positive"));
        }
        if self.layers < 2 {
            return Err(Error::invalid(
                "flow config",
                "at least two coupling layers are needed to touch every dimension",
            ));
        }
        if !(self.s_max > 0.0) {
            return Err(Error::invalid("flow config", "s_max must be positive"));
        }
        if let Some(e) = self.eps_logit {
            if !(e > 0.0 && e < 0.5) {
                return Err(Error::invalid("flow config", "eps_logit must lie in (0, 0.5)"));
            }
        }
        Ok(())
    }

    /// 1 for dimensions held fixed by coupling layer `layer`.
    pub fn mask(&self, layer: usize) -> Vec<f64> {
        (0..self.dim())
            .map(|k| if (k + layer) % 2 == 0 { 1.0 } else { 0.0 })
            .collect()
    }

    fn to_tag(self) -> Vec<f64> {
        vec![
            self.patch_size as f64,
            self.layers as f64,
            self.width as f64,
            self.s_max,
            self.eps_logit.unwrap_or(-1.0),
        ]
    }

    fn from_tag(v: &[f64]) -> Result<Self> {
        if v.len() != 5 {
            return Err(Error::invalid("flow checkpoint", "FLOW entry must hold 5 values"));
        }
        let cfg = Self {
            patch_size: v[0] as usize,
            layers: v[1] as usize,
            width: v[2] as usize,
            s_max: v[3],
            eps_logit: (v[4] > 0.0).then_some(v[4]),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn names(layer: usize) -> [String; 4] {
    ["w0", "b0", "w1", "b1"].map(|p| format!("flow.c{layer}.{p}"))
}

/// Result of a plain forward pass over one patch.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowForward {
    pub z: Vec<f64>,
    pub log_det: f64,
    /// Log-determinant of the logit preprocessing (0 when disabled).
    pub preprocess_log_det: f64,
    /// Log-determinant of each coupling layer.
    pub layer_log_dets: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowParams {
    pub config: FlowConfig,
    pub store: ParameterStore,
}

impl FlowParams {
    /// He-uniform input layers and zero output layers, so the couplings
    /// start as the identity.
    pub fn init<R: Rng + ?Sized>(config: FlowConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let d = config.dim();
        let w = config.width;
        let mut store = ParameterStore::new();
        let bound = (6.0 / d as f64).sqrt();
        for l in 0..config.layers {
            let [w0, b0, w1, b1] = names(l);
            store.insert(
                w0,
                vec![d, w],
                (0..d * w).map(|_| rng.random_range(-bound..bound)).collect(),
            )?;
            store.insert(b0, vec![w], vec![0.0; w])?;
            store.insert(w1, vec![w, 2 * d], vec![0.0; w * 2 * d])?;
            store.insert(b1, vec![2 * d], vec![0.0; 2 * d])?;
        }
        Ok(Self { config, store })
    }

    pub fn dim(&self) -> usize {
        self.config.dim()
    }

    pub fn to_checkpoint(&self) -> ParameterStore {
        let mut store = self.store.clone();
        let tag = self.config.to_tag();
        store
            .set(FLOW_TAG, vec![tag.len()], tag)
            .expect("tag shape matches its length");
        store
    }

    pub fn from_checkpoint(mut store: ParameterStore) -> Result<Self> {
        let tag = store
            .remove(FLOW_TAG)
            .ok_or_else(|| Error::invalid("flow checkpoint", "missing FLOW entry"))?;
        let config = FlowConfig::from_tag(tag.values())?;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let expected = Self::init(config, &mut rng)?;
        if !expected.store.same_layout(&store) {
            return Err(Error::invalid(
                "flow checkpoint",
                "parameter layout does not match FLOW entry",
            ));
        }
        Ok(Self { config, store })
    }

    fn layer(&self, l: usize) -> [&[f64]; 4] {
        names(l).map(|n| self.store.values(&n).expect("layer present by construction"))
    }

    /// `(s, t)` of coupling layer `l` for input `x`, already masked.
    fn coupling(&self, l: usize, x: &[f64], mask: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let d = self.dim();
        let w = self.config.width;
        let [w0, b0, w1, b1] = self.layer(l);
        let mut hidden = b0.to_vec();
        for (k, xk) in x.iter().enumerate() {
            let xm = xk * mask[k];
            if xm != 0.0 {
                for (h, wk) in hidden.iter_mut().zip(&w0[k * w..(k + 1) * w]) {
                    *h += xm * wk;
                }
            }
        }
        let mut out = b1.to_vec();
        for (j, h) in hidden.iter().enumerate() {
            let h = h.max(0.0);
            if h != 0.0 {
                for (o, wj) in out.iter_mut().zip(&w1[j * 2 * d..(j + 1) * 2 * d]) {
                    *o += h * wj;
                }
            }
        }
        let s = (0..d)
            .map(|k| (1.0 - mask[k]) * self.config.s_max * out[k].tanh())
            .collect();
        let t = (0..d).map(|k| (1.0 - mask[k]) * out[d + k]).collect();
        (s, t)
    }

    /// Maps a patch to latent space. Layer 0 in [`Error::FlowNonFinite`] is
    /// the preprocessing; coupling layer `l` reports as `l + 1`.
    pub fn forward(&self, patch: &[f64]) -> Result<FlowForward> {
        let d = self.dim();
        if patch.len() != d {
            return Err(Error::DimensionMismatch(format!(
                "patch of {} values for a {d}-dim flow",
                patch.len()
            )));
        }
        let mut x = patch.to_vec();
        let mut preprocess_log_det = 0.0;
        if let Some(eps) = self.config.eps_logit {
            let scale = 1.0 - 2.0 * eps;
            for v in x.iter_mut() {
                let q = eps + scale * *v;
                preprocess_log_det += scale.ln() - q.ln() - (1.0 - q).ln();
                *v = q.ln() - (1.0 - q).ln();
            }
            if !preprocess_log_det.is_finite() || x.iter().any(|v| !v.is_finite()) {
                return Err(Error::FlowNonFinite { layer: 0 });
            }
        }
        let mut layer_log_dets = Vec::with_capacity(self.config.layers);
        for l in 0..self.config.layers {
            let mask = self.config.mask(l);
            let (s, t) = self.coupling(l, &x, &mask);
            for k in 0..d {
                x[k] = x[k] * s[k].exp() + t[k];
            }
            let ld: f64 = s.iter().sum();
            if !ld.is_finite() || x.iter().any(|v| !v.is_finite()) {
                return Err(Error::FlowNonFinite { layer: l + 1 });
            }
            layer_log_dets.push(ld);
        }
        let log_det = preprocess_log_det + layer_log_dets.iter().sum::<f64>();
        Ok(FlowForward {
            z: x,
            log_det,
            preprocess_log_det,
            layer_log_dets,
        })
    }

    /// Exact inverse of [`FlowParams::forward`].
    pub fn inverse(&self, z: &[f64]) -> Result<Vec<f64>> {
        let d = self.dim();
        if z.len() != d {
            return Err(Error::DimensionMismatch(format!(
                "latent of {} values for a {d}-dim flow",
                z.len()
            )));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("latent", "values must be finite"));
        }
        let mut y = z.to_vec();
        for l in (0..self.config.layers).rev() {
            let mask = self.config.mask(l);
            let (s, t) = self.coupling(l, &y, &mask);
            for k in 0..d {
                y[k] = (y[k] - t[k]) * (-s[k]).exp();
            }
        }
        if let Some(eps) = self.config.eps_logit {
            let scale = 1.0 - 2.0 * eps;
            for v in y.iter_mut() {
                *v = (compose::scalar::sigmoid(*v) - eps) / scale;
            }
        }
        Ok(y)
    }

    /// `½‖z‖² + (d/2)·log 2π − log|det J|`.
    pub fn patch_nll(&self, patch: &[f64]) -> Result<f64> {
        let f = self.forward(patch)?;
        Ok(gaussian_nll(&f.z) - f.log_det)
    }

    pub fn mean_nll(&self, patches: &[Vec<f64>]) -> Result<f64> {
        let mut total = 0.0;
        for p in patches {
            total += self.patch_nll(p)?;
        }
        Ok(total / patches.len().max(1) as f64)
    }

    /// Differentiable per-patch NLL of the `N×d` node `x`, as an `N×1` node.
    pub fn nll_node(&self, g: &mut Graph, binding: Binding, x: NodeId) -> Result<NodeId> {
        nll_node(&self.config, g, binding, x)
    }
}

/// Standard-normal negative log density.
pub fn gaussian_nll(z: &[f64]) -> f64 {
    0.5 * z.iter().map(|v| v * v).sum::<f64>() + 0.5 * z.len() as f64 * (2.0 * PI).ln()
}

pub fn nll_node(config: &FlowConfig, g: &mut Graph, binding: Binding, x: NodeId) -> Result<NodeId> {
    let d = config.dim();
    let ones = g.constant(Tensor::filled(d, 1, 1.0));
    let mut h = x;
    let mut log_det: Option<NodeId> = None;
    let mut constant = 0.5 * d as f64 * (2.0 * PI).ln();
    if let Some(eps) = config.eps_logit {
        let scale = 1.0 - 2.0 * eps;
        let q = g.scale(x, scale);
        let q = g.offset(q, eps);
        let log_q = g.log(q);
        let nq = g.neg(q);
        let one_minus = g.offset(nq, 1.0);
        let log_1mq = g.log(one_minus);
        h = compose::sub(g, log_q, log_1mq);
        let both = g.add(log_q, log_1mq);
        let per_row = g.matmul(both, ones);
        log_det = Some(g.neg(per_row));
        constant -= d as f64 * scale.ln();
    }
    for l in 0..config.layers {
        let mask = config.mask(l);
        let inv: Vec<f64> = mask.iter().map(|m| 1.0 - m).collect();
        let mask = g.constant(Tensor::row(mask));
        let inv = g.constant(Tensor::row(inv));
        let [w0, b0, w1, b1] = names(l).map(|n| binding.leaf(g, &n));
        let (w0, b0, w1, b1) = (w0?, b0?, w1?, b1?);
        let fixed = g.mul_row(h, mask);
        let hidden = compose::linear(g, fixed, w0, b0);
        let hidden = compose::relu(g, hidden);
        let out = compose::linear(g, hidden, w1, b1);
        let raw = g.slice_cols(out, 0, d);
        let t = g.slice_cols(out, d, 2 * d);
        let s = compose::tanh(g, raw);
        let s = g.scale(s, config.s_max);
        let s = g.mul_row(s, inv);
        let t = g.mul_row(t, inv);
        let es = g.exp(s);
        let scaled = g.mul(h, es);
        h = g.add(scaled, t);
        let ld = g.matmul(s, ones);
        log_det = Some(match log_det {
            Some(acc) => g.add(acc, ld),
            None => ld,
        });
    }
    let sq = compose::square(g, h);
    let energy = g.matmul(sq, ones);
    let energy = g.scale(energy, 0.5);
    let nll = match log_det {
        Some(ld) => compose::sub(g, energy, ld),
        None => energy,
    };
    Ok(g.offset(nll, constant))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowTrainConfig {
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
    /// Fraction of the corpus held out for evaluation.
    pub held_out_fraction: f64,
    pub min_patches: usize,
    /// Record the mean batch NLL every this many steps.
    pub log_every: usize,
}

impl Default for FlowTrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            batch: 64,
            lr: 1e-3,
            seed: 0,
            held_out_fraction: 0.1,
            min_patches: 256,
            log_every: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowTrainReport {
    pub params: FlowParams,
    /// `(step, mean batch NLL)` before the update of that step.
    pub curve: Vec<(usize, f64)>,
    pub initial_train_nll: f64,
    pub final_train_nll: f64,
    pub held_out_nll: f64,
}

/// Maximum-likelihood training with Adam on shuffled mini-batches.
pub fn train_flow(corpus: &PatchCorpus, config: FlowConfig, train: &FlowTrainConfig) -> Result<FlowTrainReport> {
    config.validate()?;
    if corpus.patch_size != config.patch_size {
        return Err(Error::invalid(
            "flow training",
            "corpus patch size differs from the flow's",
        ));
    }
    if corpus.patches.len() < train.min_patches.max(2) {
        return Err(Error::NotEnoughPatches {
            found: corpus.patches.len(),
            required: train.min_patches.max(2),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(train.seed);
    let mut params = FlowParams::init(config, &mut rng)?;
    let (train_set, held_out) = corpus.split(train.held_out_fraction);
    let probe: Vec<Vec<f64>> = train_set.iter().take(512).cloned().collect();
    let initial_train_nll = params.mean_nll(&probe)?;

    let adam_config = AdamConfig {
        clip_value: None,
        clip_norm: Some(100.0),
        ..AdamConfig::default()
    };
    let mut adam = Adam::new(adam_config, &params.store);
    let d = config.dim();
    let batch = train.batch.clamp(1, train_set.len());
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut cursor = order.len();
    let mut curve = Vec::new();
    for step in 0..train.steps {
        let mut data = Vec::with_capacity(batch * d);
        for _ in 0..batch {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            data.extend_from_slice(&train_set[order[cursor]]);
            cursor += 1;
        }
        let mut g = Graph::new();
        let x = g.constant(Tensor::new(batch, d, data)?);
        let nll = params.nll_node(&mut g, Binding::Trainable, x)?;
        let loss = compose::mean(&mut g, nll, batch);
        let (eval, mut grads) = g.gradient(&params.store, loss)?;
        let value = eval.scalar(loss);
        if !value.is_finite() {
            return Err(Error::FlowNonFinite { layer: config.layers });
        }
        if train.log_every > 0 && step % train.log_every == 0 {
            curve.push((step, value));
        }
        adam.clip_and_step(&mut params.store, &mut grads, train.lr)?;
    }
    let final_train_nll = params.mean_nll(&probe)?;
    let held_out_nll = params.mean_nll(&held_out)?;
    curve.push((train.steps, final_train_nll));
    Ok(FlowTrainReport {
        params,
        curve,
        initial_train_nll,
        final_train_nll,
        held_out_nll,
    })
}
