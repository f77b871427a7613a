//! Higher-level functions composed from tape primitives.
//!
//! The saturating activations are written so that every `exp` sees a
//! non-positive argument; they stay finite for any finite input and their
//! gradients never evaluate `inf * 0`.

use crate::graph::{Graph, NodeId};

pub fn sub(g: &mut Graph, a: NodeId, b: NodeId) -> NodeId {
    let nb = g.neg(b);
    g.add(a, nb)
}

pub fn square(g: &mut Graph, a: NodeId) -> NodeId {
    g.mul(a, a)
}

pub fn relu(g: &mut Graph, a: NodeId) -> NodeId {
    g.max_const(a, 0.0)
}

/// Returns `(max(x, 0), max(-x, 0))`; their sum is `|x|`.
fn split_sign(g: &mut Graph, x: NodeId) -> (NodeId, NodeId) {
    let pos = g.max_const(x, 0.0);
    let nx = g.neg(x);
    let neg = g.max_const(nx, 0.0);
    (pos, neg)
}

/// `log(1 + exp(x)) = max(x, 0) + log(1 + exp(-|x|))`.
pub fn softplus(g: &mut Graph, x: NodeId) -> NodeId {
    let (pos, neg) = split_sign(g, x);
    let abs = g.add(pos, neg);
    let nabs = g.neg(abs);
    let e = g.exp(nabs);
    let one_plus = g.offset(e, 1.0);
    let l = g.log(one_plus);
    g.add(pos, l)
}

/// `exp(min(x, 0)) / (1 + exp(-|x|))`.
pub fn sigmoid(g: &mut Graph, x: NodeId) -> NodeId {
    let (pos, neg) = split_sign(g, x);
    let min0 = g.neg(neg);
    let num = g.exp(min0);
    let abs = g.add(pos, neg);
    let nabs = g.neg(abs);
    let e = g.exp(nabs);
    let den = g.offset(e, 1.0);
    let r = g.recip(den);
    g.mul(num, r)
}

/// `2·sigmoid(2x) − 1`.
pub fn tanh(g: &mut Graph, x: NodeId) -> NodeId {
    let x2 = g.scale(x, 2.0);
    let s = sigmoid(g, x2);
    let s2 = g.scale(s, 2.0);
    g.offset(s2, -1.0)
}

/// `x · W + b` with `b` broadcast over rows.
pub fn linear(g: &mut Graph, x: NodeId, weight: NodeId, bias: NodeId) -> NodeId {
    let xw = g.matmul(x, weight);
    g.add_row(xw, bias)
}

/// Mean of all elements of a node with `count` elements.
pub fn mean(g: &mut Graph, a: NodeId, count: usize) -> NodeId {
    let s = g.sum(a);
    g.scale(s, 1.0 / count as f64)
}

/// Plain-`f64` counterparts used by non-differentiable code paths.
pub mod scalar {
    pub fn softplus(x: f64) -> f64 {
        x.max(0.0) + (-x.abs()).exp().ln_1p()
    }

    pub fn sigmoid(x: f64) -> f64 {
        x.min(0.0).exp() / (1.0 + (-x.abs()).exp())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::ParameterStore;
    use crate::tensor::Tensor;

    fn eval_unary(f: fn(&mut Graph, NodeId) -> NodeId, xs: &[f64]) -> Vec<f64> {
        let mut g = Graph::new();
        let x = g.constant(Tensor::row(xs.to_vec()));
        let y = f(&mut g, x);
        g.evaluate_node(&ParameterStore::new(), y).unwrap().into_data()
    }

    #[test]
    fn activations_match_reference_and_stay_finite() {
        let xs = [-800.0, -30.0, -1.0, 0.0, 0.5, 30.0, 800.0];
        for (x, y) in xs.iter().zip(eval_unary(softplus, &xs)) {
            let reference = if *x > 30.0 { *x } else { x.exp().ln_1p() };
            assert!(y.is_finite());
            assert!((y - reference).abs() < 1e-12, "softplus({x}) = {y}");
        }
        for (x, y) in xs.iter().zip(eval_unary(sigmoid, &xs)) {
            assert!((y - 1.0 / (1.0 + (-x).exp())).abs() < 1e-15);
        }
        for (x, y) in xs.iter().zip(eval_unary(tanh, &xs)) {
            assert!((y - x.tanh()).abs() < 1e-15);
        }
    }

    #[test]
    fn saturated_activation_gradients_are_finite() {
        let mut params = ParameterStore::new();
        params.insert("x", vec![4], vec![-800.0, -40.0, 40.0, 800.0]).unwrap();
        for f in [softplus, sigmoid, tanh] {
            let mut g = Graph::new();
            let x = g.param("x");
            let y = f(&mut g, x);
            let s = g.sum(y);
            let (_, grads) = g.gradient(&params, s).unwrap();
            assert!(grads.all_finite());
        }
    }
}
