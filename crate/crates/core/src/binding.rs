use svrf_autodiff::{Graph, NodeId, ParameterStore};

use crate::error::{Error, Result};

/// How a model's named parameters enter a graph: as trainable parameter
/// leaves resolved at evaluation time, or as constants copied from a frozen
/// store (no gradient flows into them).
#[derive(Clone, Copy, Debug)]
pub enum Binding<'a> {
    Trainable,
    Frozen(&'a ParameterStore),
}

impl Binding<'_> {
    pub fn leaf(&self, g: &mut Graph, name: &str) -> Result<NodeId> {
        match self {
            Binding::Trainable => Ok(g.param(name)),
            Binding::Frozen(store) => {
                let entry = store
                    .get(name)
                    .ok_or_else(|| Error::Autodiff(svrf_autodiff::AutodiffError::UnresolvedParameter(name.into())))?;
                Ok(g.constant(entry.to_tensor()))
            }
        }
    }
}
