//! Quadrature volume rendering: colour, expected depth and opacity per ray.
//!
//! For samples `t₁ < … < t_N` on a ray with far bound `t_f`:
//! `δᵢ = tᵢ₊₁ − tᵢ` (with `δ_N = t_f − t_N`), `αᵢ = 1 − exp(−σᵢδᵢ)`,
//! `Tᵢ = exp(−Σ_{j<i} σⱼδⱼ)` and `wᵢ = Tᵢαᵢ`. Colour is `Σ wᵢcᵢ` (plus
//! `(1 − Σwᵢ)·bg` when a background is set) and depth is the
//! un-normalised `Σ wᵢtᵢ`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use svrf_autodiff::{Graph, NodeId, ParameterStore, Tensor};

use crate::binding::Binding;
use crate::error::{Error, Result};
use crate::field::{FieldOutput, FieldParams};
use crate::geometry::{generate_rays, stratified_in, CameraIntrinsics, CameraPose, Ray};
use crate::image::{DepthMap, Image};

/// Anything that can produce per-sample density and colour nodes for a
/// batch of rays.
pub trait RadianceSource: Sync {
    /// Samples are ray-major: `ts[r·n + k]` is sample `k` of ray `r`.
    fn query_batch(&self, g: &mut Graph, rays: &[Ray], ts: &[f64], n: usize, footprint: f64) -> Result<FieldOutput>;

    /// Store the graph's parameter leaves are resolved against.
    fn parameters(&self) -> &ParameterStore;
}

impl RadianceSource for FieldParams {
    fn query_batch(&self, g: &mut Graph, rays: &[Ray], ts: &[f64], n: usize, footprint: f64) -> Result<FieldOutput> {
        let (pos, dir) = self.encode_samples(rays, ts, n, footprint);
        let pos = g.constant(pos);
        let dir = dir.map(|d| g.constant(d));
        self.query(g, Binding::Trainable, pos, dir)
    }

    fn parameters(&self) -> &ParameterStore {
        &self.store
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderResult {
    pub color: [f64; 3],
    pub depth: f64,
    pub opacity: f64,
    pub weights: Vec<f64>,
    pub transmittance: Vec<f64>,
}

fn check_samples(ts: &[f64], far: f64) -> Result<()> {
    if ts.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::invalid("samples", "positions must be strictly increasing"));
    }
    if let Some(&last) = ts.last() {
        if !(last <= far) {
            return Err(Error::invalid("samples", "last sample lies beyond the far bound"));
        }
    }
    Ok(())
}

fn deltas(ts: &[f64], far: f64) -> impl Iterator<Item = f64> + '_ {
    ts.iter()
        .enumerate()
        .map(move |(i, &t)| ts.get(i + 1).copied().unwrap_or(far) - t)
}

/// Quadrature weights and transmittances for one ray.
pub fn composite_weights(sigmas: &[f64], ts: &[f64], far: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if sigmas.len() != ts.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} densities for {} samples",
            sigmas.len(),
            ts.len()
        )));
    }
    if sigmas.iter().any(|s| !(*s >= 0.0)) {
        return Err(Error::invalid("densities", "must be non-negative"));
    }
    check_samples(ts, far)?;
    let mut weights = Vec::with_capacity(ts.len());
    let mut trans = Vec::with_capacity(ts.len());
    let mut optical_depth = 0.0_f64;
    for (sigma, delta) in sigmas.iter().zip(deltas(ts, far)) {
        let sd = sigma * delta;
        let t = (-optical_depth).exp();
        trans.push(t);
        weights.push(t * (1.0 - (-sd).exp()));
        optical_depth += sd;
    }
    Ok((weights, trans))
}

/// Output nodes of a batch render of `R` rays with `n` samples each.
#[derive(Clone, Copy, Debug)]
pub struct RayBatchNodes {
    /// `R×3`.
    pub color: NodeId,
    /// `R×1`.
    pub depth: NodeId,
    /// `R×1`.
    pub opacity: NodeId,
    /// `R×n`.
    pub weights: NodeId,
    /// `R×n`.
    pub transmittance: NodeId,
}

/// Pixel radius per unit distance for a pinhole camera.
pub fn pixel_footprint(intr: &CameraIntrinsics) -> f64 {
    2.0 / (12f64.sqrt() * intr.focal_x)
}

/// Differentiable compositing of a ray batch. `ts` holds `n` sorted samples
/// per ray inside that ray's `[near, far]`.
pub fn render_graph(
    g: &mut Graph,
    source: &dyn RadianceSource,
    rays: &[Ray],
    ts: &[f64],
    n: usize,
    footprint: f64,
    background: Option<[f64; 3]>,
) -> Result<RayBatchNodes> {
    let r = rays.len();
    if r == 0 || n == 0 || ts.len() != r * n {
        return Err(Error::DimensionMismatch(format!(
            "{} sample positions for {r} rays × {n} samples",
            ts.len()
        )));
    }
    let mut delta = Vec::with_capacity(r * n);
    for (i, ray) in rays.iter().enumerate() {
        let row = &ts[i * n..(i + 1) * n];
        check_samples(row, ray.far)?;
        delta.extend(deltas(row, ray.far));
    }
    let out = source.query_batch(g, rays, ts, n, footprint)?;

    let sigma = g.reshape(out.sigma, r, n);
    let delta = g.constant(Tensor::new(r, n, delta)?);
    let sd = g.mul(sigma, delta);
    let nsd = g.neg(sd);
    let step_trans = g.exp(nsd);
    let neg_step = g.neg(step_trans);
    let alpha = g.offset(neg_step, 1.0);
    // Exclusive prefix sum along each row as a product with a strictly
    // upper-triangular matrix of ones.
    let mut upper = Tensor::zeros(n, n);
    for j in 0..n {
        for i in j + 1..n {
            upper.data_mut()[j * n + i] = 1.0;
        }
    }
    let upper = g.constant(upper);
    let cum = g.matmul(sd, upper);
    let ncum = g.neg(cum);
    let transmittance = g.exp(ncum);
    let weights = g.mul(transmittance, alpha);

    let ones = g.constant(Tensor::filled(n, 1, 1.0));
    let opacity = g.matmul(weights, ones);
    let tconst = g.constant(Tensor::new(r, n, ts.to_vec())?);
    let wt = g.mul(weights, tconst);
    let depth = g.matmul(wt, ones);

    let w_col = g.reshape(weights, r * n, 1);
    let wc = g.mul_col(out.rgb, w_col);
    let wc = g.reshape(wc, r, n * 3);
    let mut selector = Tensor::zeros(n * 3, 3);
    for k in 0..n {
        for c in 0..3 {
            selector.data_mut()[(k * 3 + c) * 3 + c] = 1.0;
        }
    }
    let selector = g.constant(selector);
    let mut color = g.matmul(wc, selector);
    if let Some(bg) = background {
        let nop = g.neg(opacity);
        let remaining = g.offset(nop, 1.0);
        let bg_rows = g.constant(Tensor::new(r, 3, bg.iter().copied().cycle().take(3 * r).collect())?);
        let bg_term = g.mul_col(bg_rows, remaining);
        color = g.add(color, bg_term);
    }
    Ok(RayBatchNodes {
        color,
        depth,
        opacity,
        weights,
        transmittance,
    })
}

/// Stratified samples for every ray, flattened ray-major.
pub fn sample_batch<R: Rng + ?Sized>(rays: &[Ray], n: usize, rng: &mut R, jitter: bool) -> Vec<f64> {
    rays.iter()
        .flat_map(|ray| stratified_in(ray.near, ray.far, n, rng, jitter))
        .collect()
}

/// Renders and evaluates a batch of rays without gradients.
pub fn render_batch(
    source: &dyn RadianceSource,
    rays: &[Ray],
    ts: &[f64],
    n: usize,
    footprint: f64,
    background: Option<[f64; 3]>,
) -> Result<Vec<RenderResult>> {
    let mut g = Graph::new();
    let nodes = render_graph(&mut g, source, rays, ts, n, footprint, background)?;
    let eval = g.evaluate(source.parameters())?;
    let color = eval.value(nodes.color);
    let depth = eval.value(nodes.depth);
    let opacity = eval.value(nodes.opacity);
    let weights = eval.value(nodes.weights);
    let trans = eval.value(nodes.transmittance);
    Ok((0..rays.len())
        .map(|i| RenderResult {
            color: [color.get(i, 0), color.get(i, 1), color.get(i, 2)],
            depth: depth.data()[i],
            opacity: opacity.data()[i],
            weights: weights.row_slice(i).to_vec(),
            transmittance: trans.row_slice(i).to_vec(),
        })
        .collect())
}

/// Colour, depth and opacity of one ray with `n` stratified samples.
pub fn render_color<R: Rng + ?Sized>(
    source: &dyn RadianceSource,
    ray: &Ray,
    n: usize,
    rng: &mut R,
    jitter: bool,
    footprint: f64,
    background: Option<[f64; 3]>,
) -> Result<RenderResult> {
    let ts = stratified_in(ray.near, ray.far, n, rng, jitter);
    Ok(render_batch(source, std::slice::from_ref(ray), &ts, n, footprint, background)?.remove(0))
}

/// Expected depth `Σ wᵢtᵢ` of one ray.
pub fn render_depth<R: Rng + ?Sized>(
    source: &dyn RadianceSource,
    ray: &Ray,
    n: usize,
    rng: &mut R,
    jitter: bool,
    footprint: f64,
) -> Result<f64> {
    Ok(render_color(source, ray, n, rng, jitter, footprint, None)?.depth)
}

/// Rays of the `size×size` patch centred on `center` (the patch covers
/// columns `cx − size/2 .. cx − size/2 + size`, likewise rows). Row-major.
pub fn patch_rays(
    pose: &CameraPose,
    intr: &CameraIntrinsics,
    center: (u32, u32),
    size: usize,
    near: f64,
    far: f64,
) -> Result<Vec<Ray>> {
    let half = (size / 2) as i64;
    let (x0, y0) = (center.0 as i64 - half, center.1 as i64 - half);
    let (x1, y1) = (x0 + size as i64 - 1, y0 + size as i64 - 1);
    for (x, y) in [(x0, y0), (x1, y1)] {
        if x < 0 || y < 0 || x >= intr.width as i64 || y >= intr.height as i64 {
            return Err(Error::PixelOutOfBounds {
                x,
                y,
                width: intr.width,
                height: intr.height,
            });
        }
    }
    let pixels: Vec<(u32, u32)> = (0..size as i64)
        .flat_map(|j| (0..size as i64).map(move |i| ((x0 + i) as u32, (y0 + j) as u32)))
        .collect();
    generate_rays(pose, intr, &pixels, near, far)
}

/// A rendered patch: `size·size·3` colours and `size·size` depths, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderedPatch {
    pub size: usize,
    pub color: Vec<f64>,
    pub depth: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
pub fn render_patch<R: Rng + ?Sized>(
    source: &dyn RadianceSource,
    pose: &CameraPose,
    intr: &CameraIntrinsics,
    center: (u32, u32),
    size: usize,
    n: usize,
    near: f64,
    far: f64,
    rng: &mut R,
    jitter: bool,
    background: Option<[f64; 3]>,
) -> Result<RenderedPatch> {
    let rays = patch_rays(pose, intr, center, size, near, far)?;
    let ts = sample_batch(&rays, n, rng, jitter);
    let results = render_batch(source, &rays, &ts, n, pixel_footprint(intr), background)?;
    Ok(RenderedPatch {
        size,
        color: results.iter().flat_map(|r| r.color).collect(),
        depth: results.iter().map(|r| r.depth).collect(),
    })
}

/// Renders a full image with bin-midpoint samples, `chunk` rays per graph.
/// Chunks are evaluated in parallel and written back in pixel order.
#[allow(clippy::too_many_arguments)]
pub fn render_image(
    source: &dyn RadianceSource,
    pose: &CameraPose,
    intr: &CameraIntrinsics,
    near: f64,
    far: f64,
    n: usize,
    background: Option<[f64; 3]>,
    chunk: usize,
) -> Result<(Image, DepthMap)> {
    let pixels: Vec<(u32, u32)> = (0..intr.height)
        .flat_map(|y| (0..intr.width).map(move |x| (x, y)))
        .collect();
    let rays = generate_rays(pose, intr, &pixels, near, far)?;
    let footprint = pixel_footprint(intr);
    let chunks: Vec<Result<Vec<RenderResult>>> = rays
        .par_chunks(chunk.max(1))
        .map(|rs| {
            // Midpoint samples never draw from the generator.
            let mut unused = ChaCha8Rng::seed_from_u64(0);
            let ts = sample_batch(rs, n, &mut unused, false);
            render_batch(source, rs, &ts, n, footprint, background)
        })
        .collect();
    let mut image = Image::new(intr.width as usize, intr.height as usize);
    let mut depth = DepthMap::new(intr.width as usize, intr.height as usize);
    let mut idx = 0;
    for part in chunks {
        for r in part? {
            image.data[3 * idx..3 * idx + 3].copy_from_slice(&r.color);
            depth.depth[idx] = r.depth;
            depth.opacity[idx] = r.opacity;
            idx += 1;
        }
    }
    Ok((image, depth))
}
