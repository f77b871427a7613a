//! Central finite-difference comparison against the reverse pass.

use crate::error::Result;
use crate::graph::{Graph, NodeId};
use crate::store::ParameterStore;

/// Outcome of a finite-difference gradient check.
#[derive(Clone, Debug, PartialEq)]
pub struct FdReport {
    /// Largest elementwise `|analytic − numeric| / max(|analytic|, |numeric|, 1e-8)`.
    pub max_relative_error: f64,
    /// Parameter name and flat index where the maximum occurred.
    pub worst: Option<(String, usize)>,
    /// Number of scalar parameters compared.
    pub compared: usize,
    /// Max-node elements sitting within the perturbation radius of a tie.
    /// Non-zero means the comparison straddles a kink and is not reliable.
    pub near_ties: usize,
}

impl FdReport {
    pub fn is_reliable(&self) -> bool {
        self.near_ties == 0
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-8);
    (analytic - numeric).abs() / denom
}

/// Compares `graph.gradient` for `output` with central differences of step
/// `step` on every parameter value. `step` must be positive.
pub fn finite_difference_check(graph: &Graph, params: &ParameterStore, output: NodeId, step: f64) -> Result<FdReport> {
    assert!(step > 0.0, "finite-difference step must be positive");
    let (eval, analytic) = graph.gradient(params, output)?;
    let near_ties = graph.count_near_ties(&eval, 10.0 * step);

    let mut work = params.clone();
    let mut report = FdReport {
        max_relative_error: 0.0,
        worst: None,
        compared: 0,
        near_ties,
    };
    let names: Vec<String> = params.names().map(str::to_string).collect();
    for name in names {
        let len = params.values(&name)?.len();
        for i in 0..len {
            let original = params.values(&name)?[i];
            work.get_mut(&name).expect("cloned store").values_mut()[i] = original + step;
            let plus = graph.evaluate(&work)?.scalar(output);
            work.get_mut(&name).expect("cloned store").values_mut()[i] = original - step;
            let minus = graph.evaluate(&work)?.scalar(output);
            work.get_mut(&name).expect("cloned store").values_mut()[i] = original;

            let numeric = (plus - minus) / (2.0 * step);
            let err = relative_error(analytic.values(&name)?[i], numeric);
            report.compared += 1;
            if err > report.max_relative_error || report.worst.is_none() {
                report.max_relative_error = err;
                report.worst = Some((name.clone(), i));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_function_is_exact() {
        let mut params = ParameterStore::new();
        params.insert("w", vec![3], vec![0.3, -1.2, 2.5]).unwrap();
        let mut g = Graph::new();
        let w = g.param("w");
        let scaled = g.scale(w, 3.5);
        let shifted = g.offset(scaled, 1.0);
        let s = g.sum(shifted);
        let report = finite_difference_check(&g, &params, s, 1e-5).unwrap();
        assert!(report.max_relative_error < 1e-10, "{report:?}");
        assert_eq!(report.compared, 3);
    }

    #[test]
    fn exp_at_one() {
        let mut params = ParameterStore::new();
        params.insert("w", vec![], vec![1.0]).unwrap();
        let mut g = Graph::new();
        let w = g.param("w");
        let y = g.exp(w);
        let report = finite_difference_check(&g, &params, y, 1e-5).unwrap();
        assert!(report.max_relative_error < 1e-8, "{report:?}");
        assert!(report.is_reliable());
    }

    #[test]
    fn max_at_tie_is_flagged() {
        let mut params = ParameterStore::new();
        params.insert("a", vec![], vec![1.0]).unwrap();
        params.insert("b", vec![], vec![1.0]).unwrap();
        let mut g = Graph::new();
        let a = g.param("a");
        let b = g.param("b");
        let m = g.max(a, b);
        let report = finite_difference_check(&g, &params, m, 1e-5).unwrap();
        assert!(!report.is_reliable());
        assert!(report.max_relative_error > 0.1);
    }
}
