//! The tape: an append-only list of primitive operations over 2-D arrays.
//!
//! Graphs are built first and evaluated later against a [`ParameterStore`],
//! so the same graph can be re-evaluated under perturbed parameters (which
//! is how the finite-difference checks work). Parameter leaves are looked up
//! by name at evaluation time; constants carry their data inline.
//!
//! Arithmetic primitives: add, mul, neg, reciprocal, exp, log, sin, cos,
//! sqrt, max, sum and matmul. Scaling and offsetting by a literal, row and
//! column broadcasts, reshape, column slicing and concatenation are
//! structural helpers on top of those. Everything else (sigmoid, softplus,
//! tanh, ...) is composed in [`crate::compose`].

use std::collections::HashMap;

use crate::error::{AutodiffError, Result};
use crate::store::ParameterStore;
use crate::tensor::{gemm, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub(crate) usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
pub(crate) enum Op {
    Param(String),
    Const(Tensor),
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Neg(NodeId),
    Recip(NodeId),
    Exp(NodeId),
    Log(NodeId),
    Sin(NodeId),
    Cos(NodeId),
    Sqrt(NodeId),
    Max(NodeId, NodeId),
    MaxConst(NodeId, f64),
    Scale(NodeId, f64),
    Offset(NodeId, f64),
    Sum(NodeId),
    MatMul(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    MulRow(NodeId, NodeId),
    MulCol(NodeId, NodeId),
    Reshape(NodeId, usize, usize),
    SliceCols(NodeId, usize, usize),
    ConcatCols(Vec<NodeId>),
    ConcatRows(Vec<NodeId>),
}

impl Op {
    fn inputs(&self) -> Vec<NodeId> {
        use Op::*;
        match self {
            Param(_) | Const(_) => vec![],
            Neg(a) | Recip(a) | Exp(a) | Log(a) | Sin(a) | Cos(a) | Sqrt(a) | Sum(a) => vec![*a],
            MaxConst(a, _) | Scale(a, _) | Offset(a, _) | Reshape(a, _, _) | SliceCols(a, _, _) => {
                vec![*a]
            }
            Add(a, b) | Mul(a, b) | Max(a, b) | MatMul(a, b) | AddRow(a, b) | MulRow(a, b) | MulCol(a, b) => {
                vec![*a, *b]
            }
            ConcatCols(v) | ConcatRows(v) => v.clone(),
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Node {
    pub(crate) op: Op,
    pub(crate) requires_grad: bool,
}

/// A recorded computation. Nodes are stored in creation order, which is
/// always a topological order because inputs must exist before use.
#[derive(Clone, Debug, Default)]
pub struct Graph {
    pub(crate) nodes: Vec<Node>,
    params: HashMap<String, NodeId>,
}

/// Forward values for every node of a graph.
#[derive(Clone, Debug)]
pub struct Evaluation {
    values: Vec<Tensor>,
}

impl Evaluation {
    pub fn value(&self, node: NodeId) -> &Tensor {
        &self.values[node.0]
    }

    /// Value of a 1x1 node.
    pub fn scalar(&self, node: NodeId) -> f64 {
        let v = &self.values[node.0];
        assert_eq!(v.len(), 1, "node {} is not scalar", node.0);
        v.data()[0]
    }

    pub(crate) fn values(&self) -> &[Tensor] {
        &self.values
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op) -> NodeId {
        let requires_grad = match &op {
            Op::Param(_) => true,
            Op::Const(_) => false,
            other => other.inputs().iter().any(|n| self.nodes[n.0].requires_grad),
        };
        self.nodes.push(Node { op, requires_grad });
        NodeId(self.nodes.len() - 1)
    }

    /// Leaf bound to a named parameter. Repeated calls with the same name
    /// return the same node.
    pub fn param(&mut self, name: &str) -> NodeId {
        if let Some(&id) = self.params.get(name) {
            return id;
        }
        let id = self.push(Op::Param(name.to_string()));
        self.params.insert(name.to_string(), id);
        id
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Const(value))
    }

    pub fn scalar(&mut self, value: f64) -> NodeId {
        self.constant(Tensor::scalar(value))
    }

    pub fn requires_grad(&self, node: NodeId) -> bool {
        self.nodes[node.0].requires_grad
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Add(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Mul(a, b))
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Neg(a))
    }

    pub fn recip(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Recip(a))
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Exp(a))
    }

    pub fn log(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Log(a))
    }

    pub fn sin(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Sin(a))
    }

    pub fn cos(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Cos(a))
    }

    pub fn sqrt(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Sqrt(a))
    }

    /// Elementwise maximum. At ties the gradient flows to `a`.
    pub fn max(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Max(a, b))
    }

    /// Elementwise `max(a, c)`. At ties the gradient is zero.
    pub fn max_const(&mut self, a: NodeId, c: f64) -> NodeId {
        self.push(Op::MaxConst(a, c))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        self.push(Op::Scale(a, c))
    }

    pub fn offset(&mut self, a: NodeId, c: f64) -> NodeId {
        self.push(Op::Offset(a, c))
    }

    /// Sum of all elements, as a 1x1 node.
    pub fn sum(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Sum(a))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::MatMul(a, b))
    }

    /// `a[i, j] + row[0, j]`.
    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> NodeId {
        self.push(Op::AddRow(a, row))
    }

    /// `a[i, j] * row[0, j]`.
    pub fn mul_row(&mut self, a: NodeId, row: NodeId) -> NodeId {
        self.push(Op::MulRow(a, row))
    }

    /// `a[i, j] * col[i, 0]`.
    pub fn mul_col(&mut self, a: NodeId, col: NodeId) -> NodeId {
        self.push(Op::MulCol(a, col))
    }

    /// Reinterprets the row-major buffer with a new shape.
    pub fn reshape(&mut self, a: NodeId, rows: usize, cols: usize) -> NodeId {
        self.push(Op::Reshape(a, rows, cols))
    }

    /// Columns `start..end`.
    pub fn slice_cols(&mut self, a: NodeId, start: usize, end: usize) -> NodeId {
        self.push(Op::SliceCols(a, start, end))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        self.push(Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> NodeId {
        self.push(Op::ConcatRows(parts.to_vec()))
    }

    fn check_node(&self, node: NodeId) -> Result<()> {
        if node.0 < self.nodes.len() {
            Ok(())
        } else {
            Err(AutodiffError::UnknownNode(node.0))
        }
    }

    /// Runs the forward pass. Deterministic: identical inputs give
    /// bitwise-identical values.
    pub fn evaluate(&self, params: &ParameterStore) -> Result<Evaluation> {
        let mut values: Vec<Tensor> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v = forward(&node.op, &values, params)?;
            values.push(v);
        }
        Ok(Evaluation { values })
    }

    /// Forward value of a single node.
    pub fn evaluate_node(&self, params: &ParameterStore, node: NodeId) -> Result<Tensor> {
        self.check_node(node)?;
        let mut eval = self.evaluate(params)?;
        Ok(eval.values.swap_remove(node.0))
    }

    /// ∂output/∂p for every entry of `params`. Entries the output does not
    /// depend on get zeros.
    pub fn gradient(&self, params: &ParameterStore, output: NodeId) -> Result<(Evaluation, ParameterStore)> {
        let eval = self.evaluate(params)?;
        let grads = self.backward(&eval, params, output)?;
        Ok((eval, grads))
    }

    /// Reverse pass over an existing forward evaluation. Adjoints are
    /// accumulated in reverse tape order.
    pub fn backward(&self, eval: &Evaluation, params: &ParameterStore, output: NodeId) -> Result<ParameterStore> {
        self.check_node(output)?;
        let out_val = &eval.values[output.0];
        if out_val.len() != 1 {
            return Err(AutodiffError::NonScalarOutput {
                rows: out_val.rows(),
                cols: out_val.cols(),
            });
        }
        let mut grads = params.zeros_like();
        if !self.nodes[output.0].requires_grad {
            return Ok(grads);
        }
        let mut adjoints: Vec<Option<Tensor>> = vec![None; output.0 + 1];
        adjoints[output.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=output.0).rev() {
            let Some(g) = adjoints[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            if let Op::Param(name) = &node.op {
                let entry = grads
                    .get_mut(name)
                    .ok_or_else(|| AutodiffError::UnresolvedParameter(name.clone()))?;
                for (acc, v) in entry.values_mut().iter_mut().zip(g.data()) {
                    *acc += v;
                }
                continue;
            }
            for (input, contribution) in backward_op(&node.op, &g, &eval.values, idx) {
                if !self.nodes[input.0].requires_grad {
                    continue;
                }
                match &mut adjoints[input.0] {
                    Some(acc) => acc.accumulate(&contribution),
                    slot @ None => *slot = Some(contribution),
                }
            }
        }
        Ok(grads)
    }

    /// Elements of max nodes whose two operands are within `tolerance` of
    /// each other, i.e. points where the function is not differentiable.
    pub fn count_near_ties(&self, eval: &Evaluation, tolerance: f64) -> usize {
        let values = eval.values();
        self.nodes
            .iter()
            .map(|node| match node.op {
                Op::Max(a, b) => values[a.0]
                    .data()
                    .iter()
                    .zip(values[b.0].data())
                    .filter(|(x, y)| (*x - *y).abs() <= tolerance)
                    .count(),
                Op::MaxConst(a, c) => values[a.0]
                    .data()
                    .iter()
                    .filter(|x| (*x - c).abs() <= tolerance)
                    .count(),
                _ => 0,
            })
            .sum()
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() == b.shape() {
        Ok(())
    } else {
        Err(AutodiffError::ShapeMismatch {
            op,
            lhs: a.shape(),
            rhs: b.shape(),
        })
    }
}

fn forward(op: &Op, values: &[Tensor], params: &ParameterStore) -> Result<Tensor> {
    let v = |n: &NodeId| &values[n.0];
    Ok(match op {
        Op::Param(name) => params
            .get(name)
            .ok_or_else(|| AutodiffError::UnresolvedParameter(name.clone()))?
            .to_tensor(),
        Op::Const(t) => t.clone(),
        Op::Add(a, b) => {
            same_shape("add", v(a), v(b))?;
            v(a).zip(v(b), |x, y| x + y)
        }
        Op::Mul(a, b) => {
            same_shape("mul", v(a), v(b))?;
            v(a).zip(v(b), |x, y| x * y)
        }
        Op::Max(a, b) => {
            same_shape("max", v(a), v(b))?;
            v(a).zip(v(b), |x, y| if x >= y { x } else { y })
        }
        Op::Neg(a) => v(a).map(|x| -x),
        Op::Recip(a) => v(a).map(|x| 1.0 / x),
        Op::Exp(a) => v(a).map(f64::exp),
        Op::Log(a) => v(a).map(f64::ln),
        Op::Sin(a) => v(a).map(f64::sin),
        Op::Cos(a) => v(a).map(f64::cos),
        Op::Sqrt(a) => v(a).map(f64::sqrt),
        Op::MaxConst(a, c) => v(a).map(|x| if x > *c { x } else { *c }),
        Op::Scale(a, c) => v(a).map(|x| x * c),
        Op::Offset(a, c) => v(a).map(|x| x + c),
        Op::Sum(a) => Tensor::scalar(v(a).data().iter().sum()),
        Op::MatMul(a, b) => {
            let (x, y) = (v(a), v(b));
            if x.cols() != y.rows() {
                return Err(AutodiffError::ShapeMismatch {
                    op: "matmul",
                    lhs: x.shape(),
                    rhs: y.shape(),
                });
            }
            gemm(x, false, y, false)
        }
        Op::AddRow(a, r) | Op::MulRow(a, r) => {
            let (x, row) = (v(a), v(r));
            if row.rows() != 1 || row.cols() != x.cols() {
                return Err(AutodiffError::ShapeMismatch {
                    op: "row broadcast",
                    lhs: x.shape(),
                    rhs: row.shape(),
                });
            }
            let add = matches!(op, Op::AddRow(..));
            let cols = x.cols();
            let data = x
                .data()
                .iter()
                .enumerate()
                .map(|(i, &val)| {
                    let rv = row.data()[i % cols];
                    if add {
                        val + rv
                    } else {
                        val * rv
                    }
                })
                .collect();
            Tensor::new(x.rows(), cols, data)?
        }
        Op::MulCol(a, c) => {
            let (x, col) = (v(a), v(c));
            if col.cols() != 1 || col.rows() != x.rows() {
                return Err(AutodiffError::ShapeMismatch {
                    op: "column broadcast",
                    lhs: x.shape(),
                    rhs: col.shape(),
                });
            }
            let cols = x.cols().max(1);
            let data = x
                .data()
                .iter()
                .enumerate()
                .map(|(i, &val)| val * col.data()[i / cols])
                .collect();
            Tensor::new(x.rows(), x.cols(), data)?
        }
        Op::Reshape(a, r, c) => {
            let x = v(a);
            if r * c != x.len() {
                return Err(AutodiffError::ShapeMismatch {
                    op: "reshape",
                    lhs: x.shape(),
                    rhs: (*r, *c),
                });
            }
            Tensor::new(*r, *c, x.data().to_vec())?
        }
        Op::SliceCols(a, s, e) => {
            let x = v(a);
            if s >= e || *e > x.cols() {
                return Err(AutodiffError::ShapeMismatch {
                    op: "slice",
                    lhs: x.shape(),
                    rhs: (*s, *e),
                });
            }
            let mut data = Vec::with_capacity(x.rows() * (e - s));
            for r in 0..x.rows() {
                data.extend_from_slice(&x.row_slice(r)[*s..*e]);
            }
            Tensor::new(x.rows(), e - s, data)?
        }
        Op::ConcatCols(parts) => {
            let rows = v(&parts[0]).rows();
            for p in parts {
                if v(p).rows() != rows {
                    return Err(AutodiffError::ShapeMismatch {
                        op: "concat_cols",
                        lhs: v(&parts[0]).shape(),
                        rhs: v(p).shape(),
                    });
                }
            }
            let cols: usize = parts.iter().map(|p| v(p).cols()).sum();
            let mut data = Vec::with_capacity(rows * cols);
            for r in 0..rows {
                for p in parts {
                    data.extend_from_slice(v(p).row_slice(r));
                }
            }
            Tensor::new(rows, cols, data)?
        }
        Op::ConcatRows(parts) => {
            let cols = v(&parts[0]).cols();
            for p in parts {
                if v(p).cols() != cols {
                    return Err(AutodiffError::ShapeMismatch {
                        op: "concat_rows",
                        lhs: v(&parts[0]).shape(),
                        rhs: v(p).shape(),
                    });
                }
            }
            let rows: usize = parts.iter().map(|p| v(p).rows()).sum();
            let mut data = Vec::with_capacity(rows * cols);
            for p in parts {
                data.extend_from_slice(v(p).data());
            }
            Tensor::new(rows, cols, data)?
        }
    })
}

/// Adjoint contributions of one node to its inputs.
fn backward_op(op: &Op, g: &Tensor, values: &[Tensor], idx: usize) -> Vec<(NodeId, Tensor)> {
    let v = |n: &NodeId| &values[n.0];
    let out = &values[idx];
    match op {
        Op::Param(_) | Op::Const(_) => vec![],
        Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
        Op::Mul(a, b) => vec![(*a, g.zip(v(b), |gi, y| gi * y)), (*b, g.zip(v(a), |gi, x| gi * x))],
        Op::Neg(a) => vec![(*a, g.map(|x| -x))],
        Op::Recip(a) => vec![(*a, g.zip(out, |gi, y| -gi * y * y))],
        Op::Exp(a) => vec![(*a, g.zip(out, |gi, y| gi * y))],
        Op::Log(a) => vec![(*a, g.zip(v(a), |gi, x| gi / x))],
        Op::Sin(a) => vec![(*a, g.zip(v(a), |gi, x| gi * x.cos()))],
        Op::Cos(a) => vec![(*a, g.zip(v(a), |gi, x| -gi * x.sin()))],
        Op::Sqrt(a) => vec![(*a, g.zip(out, |gi, y| gi * 0.5 / y))],
        Op::Max(a, b) => {
            let mask_a = v(a).zip(v(b), |x, y| if x >= y { 1.0 } else { 0.0 });
            vec![
                (*a, g.zip(&mask_a, |gi, m| gi * m)),
                (*b, g.zip(&mask_a, |gi, m| gi * (1.0 - m))),
            ]
        }
        Op::MaxConst(a, c) => vec![(*a, g.zip(v(a), |gi, x| if x > *c { gi } else { 0.0 }))],
        Op::Scale(a, c) => vec![(*a, g.map(|x| x * c))],
        Op::Offset(a, _) => vec![(*a, g.clone())],
        Op::Sum(a) => {
            let x = v(a);
            vec![(*a, Tensor::filled(x.rows(), x.cols(), g.data()[0]))]
        }
        Op::MatMul(a, b) => vec![(*a, gemm(g, false, v(b), true)), (*b, gemm(v(a), true, g, false))],
        Op::AddRow(a, r) => {
            let cols = g.cols();
            let mut gr = vec![0.0; cols];
            for row in 0..g.rows() {
                for (acc, val) in gr.iter_mut().zip(g.row_slice(row)) {
                    *acc += val;
                }
            }
            vec![(*a, g.clone()), (*r, Tensor::row(gr))]
        }
        Op::MulRow(a, r) => {
            let (x, row) = (v(a), v(r));
            let cols = g.cols();
            let mut ga = g.clone();
            let mut gr = vec![0.0; cols];
            for i in 0..g.rows() {
                let gs = &mut ga.data_mut()[i * cols..(i + 1) * cols];
                let xs = x.row_slice(i);
                for j in 0..cols {
                    gr[j] += gs[j] * xs[j];
                    gs[j] *= row.data()[j];
                }
            }
            vec![(*a, ga), (*r, Tensor::row(gr))]
        }
        Op::MulCol(a, c) => {
            let (x, col) = (v(a), v(c));
            let cols = g.cols();
            let mut ga = g.clone();
            let mut gc = vec![0.0; g.rows()];
            for i in 0..g.rows() {
                let gs = &mut ga.data_mut()[i * cols..(i + 1) * cols];
                let xs = x.row_slice(i);
                let ci = col.data()[i];
                for j in 0..cols {
                    gc[i] += gs[j] * xs[j];
                    gs[j] *= ci;
                }
            }
            vec![(*a, ga), (*c, Tensor::column(gc))]
        }
        Op::Reshape(a, _, _) => {
            let x = v(a);
            vec![(
                *a,
                Tensor::new(x.rows(), x.cols(), g.data().to_vec()).expect("reshape preserves length"),
            )]
        }
        Op::SliceCols(a, s, e) => {
            let x = v(a);
            let mut ga = Tensor::zeros(x.rows(), x.cols());
            let cols = x.cols();
            for r in 0..x.rows() {
                ga.data_mut()[r * cols + s..r * cols + e].copy_from_slice(g.row_slice(r));
            }
            vec![(*a, ga)]
        }
        Op::ConcatCols(parts) => {
            let mut offset = 0;
            parts
                .iter()
                .map(|p| {
                    let w = v(p).cols();
                    let mut data = Vec::with_capacity(g.rows() * w);
                    for r in 0..g.rows() {
                        data.extend_from_slice(&g.row_slice(r)[offset..offset + w]);
                    }
                    offset += w;
                    (*p, Tensor::new(g.rows(), w, data).expect("concat split"))
                })
                .collect()
        }
        Op::ConcatRows(parts) => {
            let cols = g.cols();
            let mut offset = 0;
            parts
                .iter()
                .map(|p| {
                    let n = v(p).rows() * cols;
                    let t =
                        Tensor::new(v(p).rows(), cols, g.data()[offset..offset + n].to_vec()).expect("concat split");
                    offset += n;
                    (*p, t)
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(entries: &[(&str, Vec<usize>, Vec<f64>)]) -> ParameterStore {
        let mut s = ParameterStore::new();
        for (n, shape, v) in entries {
            s.insert(*n, shape.clone(), v.clone()).unwrap();
        }
        s
    }

    #[test]
    fn square_value_and_gradient() {
        let params = store(&[("w", vec![], vec![3.0])]);
        let mut g = Graph::new();
        let w = g.param("w");
        let y = g.mul(w, w);
        assert_eq!(g.evaluate_node(&params, y).unwrap().item(), Some(9.0));
        let (_, grads) = g.gradient(&params, y).unwrap();
        assert_eq!(grads.values("w").unwrap(), &[6.0]);
    }

    #[test]
    fn exp_of_zero_is_one() {
        let mut g = Graph::new();
        let x = g.scalar(0.0);
        let y = g.exp(x);
        assert_eq!(g.evaluate_node(&ParameterStore::new(), y).unwrap().item(), Some(1.0));
    }

    #[test]
    fn product_rule() {
        let params = store(&[("a", vec![], vec![2.0]), ("b", vec![], vec![5.0])]);
        let mut g = Graph::new();
        let a = g.param("a");
        let b = g.param("b");
        let y = g.mul(a, b);
        let (_, grads) = g.gradient(&params, y).unwrap();
        assert_eq!(grads.values("a").unwrap(), &[5.0]);
        assert_eq!(grads.values("b").unwrap(), &[2.0]);
    }

    #[test]
    fn untouched_parameters_get_zero_gradient() {
        let params = store(&[("a", vec![2], vec![1.0, 2.0]), ("unused", vec![3], vec![1.0; 3])]);
        let mut g = Graph::new();
        let a = g.param("a");
        let s = g.sum(a);
        let (_, grads) = g.gradient(&params, s).unwrap();
        assert_eq!(grads.values("unused").unwrap(), &[0.0; 3]);
        assert_eq!(grads.values("a").unwrap(), &[1.0, 1.0]);
    }

    #[test]
    fn unresolved_parameter_is_an_error() {
        let mut g = Graph::new();
        let w = g.param("missing");
        let _ = g.exp(w);
        assert!(matches!(
            g.evaluate(&ParameterStore::new()),
            Err(AutodiffError::UnresolvedParameter(n)) if n == "missing"
        ));
    }

    #[test]
    fn matmul_shape_mismatch_is_an_error() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(2, 3));
        let b = g.constant(Tensor::zeros(2, 3));
        let _ = g.matmul(a, b);
        assert!(matches!(
            g.evaluate(&ParameterStore::new()),
            Err(AutodiffError::ShapeMismatch { op: "matmul", .. })
        ));
    }

    #[test]
    fn non_scalar_output_is_rejected() {
        let params = store(&[("w", vec![2], vec![1.0, 2.0])]);
        let mut g = Graph::new();
        let w = g.param("w");
        let y = g.exp(w);
        assert!(matches!(
            g.gradient(&params, y),
            Err(AutodiffError::NonScalarOutput { rows: 1, cols: 2 })
        ));
    }

    #[test]
    fn structural_ops_round_trip_gradients() {
        // sum(concat(slice(x, 0..1), slice(x, 1..3)) * c) has gradient c rearranged.
        let params = store(&[("x", vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0])]);
        let mut g = Graph::new();
        let x = g.param("x");
        let left = g.slice_cols(x, 0, 1);
        let right = g.slice_cols(x, 1, 3);
        let joined = g.concat_cols(&[right, left]);
        let c = g.constant(Tensor::new(2, 3, vec![10.0, 20.0, 30.0, 40.0, 50.0, 60.0]).unwrap());
        let prod = g.mul(joined, c);
        let s = g.sum(prod);
        let (_, grads) = g.gradient(&params, s).unwrap();
        assert_eq!(grads.values("x").unwrap(), &[30.0, 10.0, 20.0, 60.0, 40.0, 50.0]);
    }
}
