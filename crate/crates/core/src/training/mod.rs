//! Scene training: loss assembly, sampling of input rays and unobserved
//! patches, annealing and the optimization loop.

pub mod losses;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use svrf_autodiff::{Evaluation, Graph, NodeId};

use crate::error::{Error, Result};
use crate::eval::Dataset;
use crate::field::{FieldConfig, FieldParams};
use crate::flow::FlowParams;
use crate::geometry::{
    build_sample_space, generate_rays, sample_unobserved_pose, AnnealSchedule, Ray, DEFAULT_ANNEAL_ITERS,
    DEFAULT_ANNEAL_START, DEFAULT_FOCUS_JITTER,
};
use crate::optim::{lr_schedule, Adam, AdamConfig};
use crate::render::{pixel_footprint, render_graph, sample_batch};

pub use losses::{
    loss_color_nll, loss_depth_smoothness, loss_mse, loss_opacity_reg, regularizer_by_name, regularizer_names,
    regularizers, PatchNodes, Regularizer,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub field: FieldConfig,
    pub n_samples: usize,
    pub batch_rays: usize,
    pub patches_per_step: usize,
    pub patch_size: usize,
    pub lambda_ds: f64,
    pub lambda_nll: f64,
    /// Weight of the opacity binarization penalty; 0 disables it.
    pub lambda_opacity: f64,
    pub lr_init: f64,
    pub lr_final: f64,
    pub clip_value: Option<f64>,
    pub clip_norm: Option<f64>,
    pub anneal: bool,
    pub anneal_iters: u64,
    pub anneal_start: f64,
    /// Annealing centre; defaults to the midpoint of near and far.
    pub anneal_mid: Option<f64>,
    pub pixel_epochs: f64,
    /// Upper bound on the iteration count derived from `pixel_epochs`.
    pub max_iterations: Option<u64>,
    /// Focus jitter std as a fraction of the camera bounding-box diagonal.
    pub focus_jitter: f64,
    /// Uniform jitter of samples within their strata.
    pub jitter_samples: bool,
    pub seed: u64,
    pub log_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            field: FieldConfig::default(),
            n_samples: 32,
            batch_rays: 512,
            patches_per_step: 4,
            patch_size: 8,
            lambda_ds: 1.0,
            lambda_nll: 1.0,
            lambda_opacity: 0.0,
            lr_init: 2e-3,
            lr_final: 2e-5,
            clip_value: Some(0.1),
            clip_norm: Some(0.1),
            anneal: true,
            anneal_iters: DEFAULT_ANNEAL_ITERS,
            anneal_start: DEFAULT_ANNEAL_START,
            anneal_mid: None,
            pixel_epochs: 500.0,
            max_iterations: None,
            focus_jitter: DEFAULT_FOCUS_JITTER,
            jitter_samples: true,
            seed: 0,
            log_every: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.field.validate()?;
        if self.n_samples < 2 || self.batch_rays == 0 {
            return Err(Error::invalid(
                "train config",
                "need n_samples >= 2 and batch_rays >= 1",
            ));
        }
        if [self.lambda_ds, self.lambda_nll, self.lambda_opacity]
            .iter()
            .any(|l| !(*l >= 0.0))
        {
            return Err(Error::invalid("train config", "loss weights must be non-negative"));
        }
        if !(self.lr_init > 0.0 && self.lr_final > 0.0) {
            return Err(Error::invalid("train config", "learning rates must be positive"));
        }
        if !(self.pixel_epochs >= 0.0) {
            return Err(Error::invalid("train config", "pixel_epochs must be non-negative"));
        }
        if self.uses_patches() && self.patch_size < 2 {
            return Err(Error::invalid("train config", "patch_size must be at least 2"));
        }
        Ok(())
    }

    /// `ceil(pixel_epochs · pixels / batch_rays)`, capped by `max_iterations`.
    pub fn iterations(&self, input_pixels: usize) -> u64 {
        let n = (self.pixel_epochs * input_pixels as f64 / self.batch_rays as f64).ceil() as u64;
        self.max_iterations.map_or(n, |m| n.min(m))
    }

    /// Whether any active regularizer needs unobserved patches.
    pub fn uses_patches(&self) -> bool {
        self.patches_per_step > 0 && regularizers().iter().any(|r| r.weight(self) > 0.0)
    }

    /// Disables both patch regularizers and annealing.
    pub fn baseline(mut self) -> Self {
        self.lambda_ds = 0.0;
        self.lambda_nll = 0.0;
        self.lambda_opacity = 0.0;
        self.anneal = false;
        self
    }
}

/// Values of every loss term at one step, with optional per-term gradient
/// norms (weighted terms, keyed by term name).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub mse: f64,
    pub ds: f64,
    pub nll: f64,
    pub opacity_reg: f64,
    pub total: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub grad_norms: BTreeMap<String, f64>,
}

impl LossBreakdown {
    fn set(&mut self, term: &str, value: f64) {
        match term {
            "mse" => self.mse = value,
            "depth-smoothness" => self.ds = value,
            "color-nll" => self.nll = value,
            "opacity" => self.opacity_reg = value,
            _ => {}
        }
    }

    pub fn all_finite(&self) -> bool {
        [self.mse, self.ds, self.nll, self.opacity_reg, self.total]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Rays and samples of one training step.
#[derive(Clone, Debug)]
pub struct StepBatch {
    pub input_rays: Vec<Ray>,
    pub input_ts: Vec<f64>,
    /// `3·input_rays.len()` target colours.
    pub targets: Vec<f64>,
    /// `patches·S²` rays, patch-major and row-major within each patch.
    pub patch_rays: Vec<Ray>,
    pub patch_ts: Vec<f64>,
    pub patches: usize,
    pub patch_size: usize,
    pub n_samples: usize,
    pub footprint: f64,
    pub background: Option<[f64; 3]>,
}

impl StepBatch {
    /// Smallest and largest sample position over both ray sets.
    pub fn sample_range(&self) -> (f64, f64) {
        self.input_ts
            .iter()
            .chain(&self.patch_ts)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| {
                (lo.min(*t), hi.max(*t))
            })
    }
}

/// Nodes of the assembled loss.
#[derive(Clone, Debug)]
pub struct LossGraph {
    pub total: NodeId,
    pub mse: NodeId,
    /// `(name, weight, unweighted node)` of every active regularizer.
    pub terms: Vec<(&'static str, f64, NodeId)>,
}

impl LossGraph {
    pub fn breakdown(&self, eval: &Evaluation) -> LossBreakdown {
        let mut b = LossBreakdown {
            mse: eval.scalar(self.mse),
            total: eval.scalar(self.total),
            ..LossBreakdown::default()
        };
        for (name, _, node) in &self.terms {
            b.set(name, eval.scalar(*node));
        }
        b
    }
}

/// `L_MSE + Σ λ·R` over the regularizers with positive weight. Terms with
/// zero weight are not built, so with all weights zero the total is the
/// MSE node itself.
pub fn total_loss(
    g: &mut Graph,
    field: &FieldParams,
    flow: Option<&FlowParams>,
    batch: &StepBatch,
    config: &TrainConfig,
) -> Result<LossGraph> {
    let n = batch.n_samples;
    let input = render_graph(
        g,
        field,
        &batch.input_rays,
        &batch.input_ts,
        n,
        batch.footprint,
        batch.background,
    )?;
    let mse = loss_mse(g, input.color, &batch.targets)?;
    let mut total = mse;
    let mut terms = Vec::new();
    let active: Vec<_> = regularizers().iter().filter(|r| r.weight(config) > 0.0).collect();
    if !active.is_empty() && batch.patches > 0 {
        let rendered = render_graph(
            g,
            field,
            &batch.patch_rays,
            &batch.patch_ts,
            n,
            batch.footprint,
            batch.background,
        )?;
        let nodes = PatchNodes {
            color: rendered.color,
            depth: rendered.depth,
            opacity: rendered.opacity,
            patches: batch.patches,
            size: batch.patch_size,
        };
        for r in active {
            let w = r.weight(config);
            let term = r.build(g, &nodes, flow)?;
            let weighted = g.scale(term, w);
            total = g.add(total, weighted);
            terms.push((r.name(), w, term));
        }
    }
    Ok(LossGraph { total, mse, terms })
}

/// One logged training step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub iteration: u64,
    pub lr: f64,
    /// Annealed sampling bounds used at this step.
    pub near: f64,
    pub far: f64,
    /// Extremes of the sample positions actually drawn.
    pub sample_min: f64,
    pub sample_max: f64,
    pub loss: LossBreakdown,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_psnr: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub field: FieldParams,
    pub log: Vec<LogRecord>,
    pub iterations: u64,
}

/// Draws the rays of one step from the input views and, when patches are
/// needed, from poses sampled around the dataset cameras.
struct Sampler<'a> {
    dataset: &'a Dataset,
    config: &'a TrainConfig,
    space: Option<crate::geometry::PoseSampleSpace>,
    schedule: Option<AnnealSchedule>,
    input_pixels: usize,
}

impl<'a> Sampler<'a> {
    fn new(dataset: &'a Dataset, config: &'a TrainConfig) -> Result<Self> {
        let space = if config.uses_patches() {
            let poses = dataset.poses();
            let unit = build_sample_space(&poses, 0.0)?;
            Some(build_sample_space(&poses, config.focus_jitter * unit.diagonal())?)
        } else {
            None
        };
        let schedule = if config.anneal {
            Some(AnnealSchedule::new(
                dataset.near,
                dataset.far,
                config.anneal_mid,
                config.anneal_iters,
                config.anneal_start,
            )?)
        } else {
            None
        };
        Ok(Self {
            dataset,
            config,
            space,
            schedule,
            input_pixels: dataset.input_pixel_count(),
        })
    }

    fn bounds(&self, iteration: u64) -> (f64, f64) {
        match &self.schedule {
            Some(s) => s.bounds(iteration),
            None => (self.dataset.near, self.dataset.far),
        }
    }

    fn draw(&self, iteration: u64, rng: &mut ChaCha8Rng) -> Result<StepBatch> {
        let (near, far) = self.bounds(iteration);
        let cfg = self.config;
        let ds = self.dataset;
        let mut input_rays = Vec::with_capacity(cfg.batch_rays);
        let mut targets = Vec::with_capacity(3 * cfg.batch_rays);
        for _ in 0..cfg.batch_rays {
            let mut k = rng.random_range(0..self.input_pixels);
            let frame = ds
                .input
                .iter()
                .map(|&i| &ds.frames[i])
                .find(|f| {
                    let n = f.intrinsics.pixel_count();
                    if k < n {
                        true
                    } else {
                        k -= n;
                        false
                    }
                })
                .expect("index below total pixel count");
            let w = frame.intrinsics.width as usize;
            let (x, y) = ((k % w) as u32, (k / w) as u32);
            input_rays.extend(generate_rays(&frame.pose, &frame.intrinsics, &[(x, y)], near, far)?);
            targets.extend_from_slice(&frame.image.pixel(x as usize, y as usize));
        }
        let jitter = cfg.jitter_samples;
        let input_ts = sample_batch(&input_rays, cfg.n_samples, rng, jitter);

        let intr = ds.frames[ds.input[0]].intrinsics;
        let mut patch_rays = Vec::new();
        let mut patches = 0;
        if let Some(space) = &self.space {
            let s = cfg.patch_size as u32;
            if s > intr.width || s > intr.height {
                return Err(Error::invalid("train config", "patch larger than the image"));
            }
            for _ in 0..cfg.patches_per_step {
                let pose = sample_unobserved_pose(space, rng)?;
                let cx = rng.random_range(s / 2..=intr.width - (s - s / 2));
                let cy = rng.random_range(s / 2..=intr.height - (s - s / 2));
                patch_rays.extend(crate::render::patch_rays(
                    &pose,
                    &intr,
                    (cx, cy),
                    cfg.patch_size,
                    near,
                    far,
                )?);
                patches += 1;
            }
        }
        let patch_ts = sample_batch(&patch_rays, cfg.n_samples, rng, jitter);
        Ok(StepBatch {
            input_rays,
            input_ts,
            targets,
            patch_rays,
            patch_ts,
            patches,
            patch_size: cfg.patch_size,
            n_samples: cfg.n_samples,
            footprint: pixel_footprint(&intr),
            background: ds.background,
        })
    }
}

/// Trains a field on the input views of `dataset`. `observer` sees every
/// logged record (and may fill in `test_psnr`) together with the current
/// field; an error from it aborts training.
pub fn train_scene(
    dataset: &Dataset,
    flow: Option<&FlowParams>,
    config: &TrainConfig,
    observer: &mut dyn FnMut(&mut LogRecord, &FieldParams) -> Result<()>,
) -> Result<TrainOutcome> {
    config.validate()?;
    if dataset.input.is_empty() {
        return Err(Error::invalid("dataset", "no input views"));
    }
    if config.lambda_nll > 0.0 && config.uses_patches() {
        match flow {
            None => return Err(Error::invalid("training", "a flow is required when lambda_nll > 0")),
            Some(f) if f.config.patch_size != config.patch_size => {
                return Err(Error::invalid("training", "flow patch size differs from patch_size"));
            }
            _ => {}
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut field = FieldParams::init(config.field, &mut rng)?;
    let adam_config = AdamConfig {
        clip_value: config.clip_value,
        clip_norm: config.clip_norm,
        ..AdamConfig::default()
    };
    let mut adam = Adam::new(adam_config, &field.store);
    let sampler = Sampler::new(dataset, config)?;
    let iterations = config.iterations(sampler.input_pixels);
    let mut log = Vec::new();

    for i in 0..iterations {
        let batch = sampler.draw(i, &mut rng)?;
        let lr = lr_schedule(i, iterations, config.lr_init, config.lr_final);
        let mut g = Graph::new();
        let loss = total_loss(&mut g, &field, flow, &batch, config)?;
        let (eval, mut grads) = g.gradient(&field.store, loss.total)?;
        let mut breakdown = loss.breakdown(&eval);
        if !breakdown.all_finite() {
            return Err(Error::NonFiniteLoss {
                iteration: i,
                breakdown: Box::new(breakdown),
            });
        }
        let logged = config.log_every > 0 && (i % config.log_every == 0 || i + 1 == iterations);
        if logged {
            let mse_grad = g.backward(&eval, &field.store, loss.mse)?;
            breakdown.grad_norms.insert("mse".into(), mse_grad.global_norm());
            for (name, w, node) in &loss.terms {
                let term_grad = g.backward(&eval, &field.store, *node)?;
                breakdown.grad_norms.insert((*name).into(), w * term_grad.global_norm());
            }
            breakdown.grad_norms.insert("total".into(), grads.global_norm());
        }
        adam.clip_and_step(&mut field.store, &mut grads, lr)?;
        if logged {
            let (near, far) = sampler.bounds(i);
            let (sample_min, sample_max) = batch.sample_range();
            let mut record = LogRecord {
                iteration: i,
                lr,
                near,
                far,
                sample_min,
                sample_max,
                loss: breakdown,
                test_psnr: None,
            };
            observer(&mut record, &field)?;
            log.push(record);
        }
    }
    Ok(TrainOutcome { field, log, iterations })
}
