//! Reverse-mode differentiation over named, flat parameter arrays.
//!
//! A [`Graph`] records primitive operations on 2-D `f64` arrays whose leaves
//! are either inline constants or references to entries of a
//! [`ParameterStore`]. [`Graph::evaluate`] runs the forward pass and
//! [`Graph::gradient`] returns ∂output/∂p for every stored parameter.
//!
//! ```
//! use svrf_autodiff::{Graph, ParameterStore};
//!
//! let mut params = ParameterStore::new();
//! params.insert("w", vec![], vec![3.0]).unwrap();
//! let mut g = Graph::new();
//! let w = g.param("w");
//! let y = g.mul(w, w);
//! let (eval, grads) = g.gradient(&params, y).unwrap();
//! assert_eq!(eval.scalar(y), 9.0);
//! assert_eq!(grads.values("w").unwrap(), &[6.0]);
//! ```

pub mod check;
pub mod checkpoint;
pub mod compose;
mod error;
mod graph;
mod store;
mod tensor;

pub use check::{finite_difference_check, relative_error, FdReport};
pub use error::{AutodiffError, Result};
pub use graph::{Evaluation, Graph, NodeId};
pub use store::{Entry, ParameterStore};
pub use tensor::Tensor;
