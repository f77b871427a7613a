//! Loss terms and the regularizer registry.

use svrf_autodiff::{compose, Graph, NodeId, Tensor};

use crate::binding::Binding;
use crate::error::{Error, Result};
use crate::flow::FlowParams;
use crate::training::TrainConfig;

/// Mean over rays of the squared colour error summed over channels.
/// `color` is `R×3`; `target` holds `3R` values.
pub fn loss_mse(g: &mut Graph, color: NodeId, target: &[f64]) -> Result<NodeId> {
    let rays = target.len() / 3;
    if rays == 0 || target.len() % 3 != 0 {
        return Err(Error::invalid("mse loss", "need a non-empty set of RGB targets"));
    }
    let target = g.constant(Tensor::new(rays, 3, target.to_vec())?);
    let diff = compose::sub(g, color, target);
    let sq = compose::square(g, diff);
    let total = g.sum(sq);
    Ok(g.scale(total, 1.0 / rays as f64))
}

/// Differences between each depth and its lower and right neighbour, for
/// rows and columns `0..S−1` of every patch. `depth` is `P·S²×1`, row-major
/// within each patch.
pub fn loss_depth_smoothness(g: &mut Graph, depth: NodeId, patches: usize, size: usize) -> Result<NodeId> {
    if size < 2 {
        return Err(Error::invalid("depth smoothness", "patch size must be at least 2"));
    }
    let s2 = size * size;
    let inner = (size - 1) * (size - 1);
    // Columns of `diff` are one (vertical, horizontal) difference each.
    let mut diff = Tensor::zeros(s2, 2 * inner);
    let mut col = 0;
    for i in 0..size - 1 {
        for j in 0..size - 1 {
            let here = i * size + j;
            diff.data_mut()[here * 2 * inner + col] += 1.0;
            diff.data_mut()[(here + size) * 2 * inner + col] -= 1.0;
            diff.data_mut()[here * 2 * inner + col + inner] += 1.0;
            diff.data_mut()[(here + 1) * 2 * inner + col + inner] -= 1.0;
            col += 1;
        }
    }
    let grid = g.reshape(depth, patches, s2);
    let diff = g.constant(diff);
    let d = g.matmul(grid, diff);
    let sq = compose::square(g, d);
    Ok(g.sum(sq))
}

/// Sum of the frozen flow's NLL over rendered patches. `color` is
/// `P·S²×3`, row-major within each patch.
pub fn loss_color_nll(g: &mut Graph, flow: &FlowParams, color: NodeId, patches: usize) -> Result<NodeId> {
    let d = flow.dim();
    let flat = g.reshape(color, patches, d);
    let nll = flow.nll_node(g, Binding::Frozen(&flow.store), flat)?;
    Ok(g.sum(nll))
}

/// `Σ −log(o² + (1 − o)²)` over the rays of an `R×1` opacity node.
pub fn loss_opacity_reg(g: &mut Graph, opacity: NodeId) -> NodeId {
    let o2 = compose::square(g, opacity);
    let no = g.neg(opacity);
    let rest = g.offset(no, 1.0);
    let r2 = compose::square(g, rest);
    let both = g.add(o2, r2);
    let log = g.log(both);
    let total = g.sum(log);
    g.neg(total)
}

/// Rendered patches from unobserved viewpoints.
#[derive(Clone, Copy, Debug)]
pub struct PatchNodes {
    /// `P·S²×3`.
    pub color: NodeId,
    /// `P·S²×1`.
    pub depth: NodeId,
    /// `P·S²×1`.
    pub opacity: NodeId,
    pub patches: usize,
    pub size: usize,
}

/// A loss on rendered unobserved-view patches, with its weight taken from
/// the training config.
pub trait Regularizer: Send + Sync {
    fn name(&self) -> &'static str;

    fn weight(&self, config: &TrainConfig) -> f64;

    /// Unweighted scalar loss node.
    fn build(&self, g: &mut Graph, patches: &PatchNodes, flow: Option<&FlowParams>) -> Result<NodeId>;
}

pub struct DepthSmoothness;

impl Regularizer for DepthSmoothness {
    fn name(&self) -> &'static str {
        "depth-smoothness"
    }

    fn weight(&self, config: &TrainConfig) -> f64 {
        config.lambda_ds
    }

    fn build(&self, g: &mut Graph, p: &PatchNodes, _flow: Option<&FlowParams>) -> Result<NodeId> {
        loss_depth_smoothness(g, p.depth, p.patches, p.size)
    }
}

pub struct ColorNll;

impl Regularizer for ColorNll {
    fn name(&self) -> &'static str {
        "color-nll"
    }

    fn weight(&self, config: &TrainConfig) -> f64 {
        config.lambda_nll
    }

    fn build(&self, g: &mut Graph, p: &PatchNodes, flow: Option<&FlowParams>) -> Result<NodeId> {
        let flow = flow.ok_or_else(|| Error::invalid("color nll", "a flow is required when lambda_nll > 0"))?;
        if flow.config.patch_size != p.size {
            return Err(Error::invalid(
                "color nll",
                "flow patch size differs from the rendered patches",
            ));
        }
        loss_color_nll(g, flow, p.color, p.patches)
    }
}

pub struct OpacityBinarization;

impl Regularizer for OpacityBinarization {
    fn name(&self) -> &'static str {
        "opacity"
    }

    fn weight(&self, config: &TrainConfig) -> f64 {
        config.lambda_opacity
    }

    fn build(&self, g: &mut Graph, p: &PatchNodes, _flow: Option<&FlowParams>) -> Result<NodeId> {
        Ok(loss_opacity_reg(g, p.opacity))
    }
}

static REGULARIZERS: [&dyn Regularizer; 3] = [&DepthSmoothness, &ColorNll, &OpacityBinarization];

pub fn regularizers() -> &'static [&'static dyn Regularizer] {
    &REGULARIZERS
}

pub fn regularizer_names() -> Vec<&'static str> {
    REGULARIZERS.iter().map(|r| r.name()).collect()
}

pub fn regularizer_by_name(name: &str) -> Result<&'static dyn Regularizer> {
    REGULARIZERS
        .iter()
        .copied()
        .find(|r| r.name() == name)
        .ok_or_else(|| Error::Unknown {
            kind: "regularizer",
            name: name.to_string(),
            available: regularizer_names().join(", "),
        })
}
