//! Central finite-difference verification of reverse-mode gradients.
//!
//! The numeric side only ever calls `value`, so it stays independent of the
//! backward rules it is checking.

use super::{Graph, Tensor, VarId};
use crate::error::TensorError;

/// Relative errors are measured against `max(|analytic|, |numeric|, FLOOR)`
/// so that dead-zero components do not divide by zero and difference noise
/// on vanishing gradients is not amplified. Components below the floor are
/// effectively compared absolutely at `threshold · FLOOR`.
pub const REL_ERROR_FLOOR: f64 = 1e-3;

/// A scalar-valued map with an analytic gradient, the object under test.
pub trait DifferentiableMap {
    /// Scalar value at `inputs`.
    fn value(&self, inputs: &[Tensor]) -> Result<f64, TensorError>;

    /// Analytic gradient with respect to every input, one flat buffer per
    /// input in the same order.
    fn grad(&self, inputs: &[Tensor]) -> Result<Vec<Vec<f64>>, TensorError>;
}

/// Wraps a graph-building closure as a [`DifferentiableMap`]: the value
/// comes from the forward pass, the gradient from `Graph::backward`.
pub struct GraphMap<F>
where
    F: Fn(&mut Graph, &[VarId]) -> Result<VarId, TensorError>,
{
    build: F,
}

impl<F> GraphMap<F>
where
    F: Fn(&mut Graph, &[VarId]) -> Result<VarId, TensorError>,
{
    pub fn new(build: F) -> Self {
        Self { build }
    }
}

impl<F> DifferentiableMap for GraphMap<F>
where
    F: Fn(&mut Graph, &[VarId]) -> Result<VarId, TensorError>,
{
    fn value(&self, inputs: &[Tensor]) -> Result<f64, TensorError> {
        let mut g = Graph::new();
        let ids: Vec<VarId> = inputs.iter().map(|t| g.leaf(t.clone(), false)).collect();
        let out = (self.build)(&mut g, &ids)?;
        expect_scalar(&g, out)?;
        Ok(g.value(out).data()[0])
    }

    fn grad(&self, inputs: &[Tensor]) -> Result<Vec<Vec<f64>>, TensorError> {
        let mut g = Graph::new();
        let ids: Vec<VarId> = inputs.iter().map(|t| g.leaf(t.clone(), true)).collect();
        let out = (self.build)(&mut g, &ids)?;
        expect_scalar(&g, out)?;
        g.backward(out)?;
        Ok(ids
            .iter()
            .zip(inputs)
            .map(|(&id, t)| match g.grad(id) {
                Some(buf) => buf.to_vec(),
                None => vec![0.0; t.numel()],
            })
            .collect())
    }
}

fn expect_scalar(g: &Graph, id: VarId) -> Result<(), TensorError> {
    if g.value(id).numel() != 1 {
        return Err(TensorError::InvalidParam {
            op: "grad_check",
            msg: format!("map must be scalar-valued, got {:?}", g.value(id).shape()),
        });
    }
    Ok(())
}

/// Worst single comparison in a check, for diagnostics.
#[derive(Debug, Clone)]
pub struct WorstEntry {
    pub input: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

/// Outcome of one gradient check.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub name: String,
    /// Worst relative error over all inputs and elements.
    pub max_rel_error: f64,
    /// Max relative error per named input.
    pub per_input: Vec<(String, f64)>,
    pub worst: Option<WorstEntry>,
}

impl GradCheckReport {
    pub fn passed(&self, threshold: f64) -> bool {
        self.max_rel_error < threshold
    }
}

/// Compare the map's analytic gradient against central finite differences
/// elementwise and report the worst relative error.
///
/// `h` must lie in `[1e-6, 1e-4]`: below that the difference quotient
/// drowns in rounding noise even at f64, above it truncation error bites.
pub fn grad_check(
    name: &str,
    map: &dyn DifferentiableMap,
    inputs: &[(&str, Tensor)],
    h: f64,
) -> Result<GradCheckReport, TensorError> {
    if !(1e-6..=1e-4).contains(&h) {
        return Err(TensorError::InvalidParam {
            op: "grad_check",
            msg: format!("step h = {h} outside [1e-6, 1e-4]"),
        });
    }
    let tensors: Vec<Tensor> = inputs.iter().map(|(_, t)| t.clone()).collect();
    let analytic = map.grad(&tensors)?;

    let mut report = GradCheckReport {
        name: name.to_string(),
        max_rel_error: 0.0,
        per_input: Vec::new(),
        worst: None,
    };

    for (pi, (pname, tensor)) in inputs.iter().enumerate() {
        let mut input_max = 0.0f64;
        for i in 0..tensor.numel() {
            let mut plus = tensors.clone();
            plus[pi].data_mut()[i] += h;
            let f_plus = map.value(&plus)?;

            let mut minus = tensors.clone();
            minus[pi].data_mut()[i] -= h;
            let f_minus = map.value(&minus)?;

            if !f_plus.is_finite() || !f_minus.is_finite() {
                return Err(TensorError::NonFinite { op: "grad_check" });
            }

            let numeric = (f_plus - f_minus) / (2.0 * h);
            let a = analytic[pi][i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
            input_max = input_max.max(rel);
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some(WorstEntry {
                    input: pname.to_string(),
                    index: i,
                    analytic: a,
                    numeric,
                    rel_error: rel,
                });
            }
        }
        report.per_input.push((pname.to_string(), input_max));
    }
    Ok(report)
}
