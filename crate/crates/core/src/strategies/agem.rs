//! Gradient projection that keeps updates from increasing replay loss.

use crate::error::{Error, Result};
use crate::nn::FlatGradient;

/// Whether the gradient was left unchanged or projected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectionOutcome {
    Unchanged,
    Projected,
}

/// Projects `grad` so its inner product with the reference gradient is
/// non-negative. When `grad . reference >= 0` the gradient is returned
/// unchanged; otherwise the component along the reference direction is
/// removed:
///
/// `g <- g - (g . r / r . r) * r`
///
/// A zero reference gradient always leaves `grad` unchanged.
pub fn agem_project(
    grad: &mut FlatGradient,
    reference: &FlatGradient,
) -> Result<ProjectionOutcome> {
    if grad.len() != reference.len() {
        return Err(Error::shape(format!(
            "gradient has {} entries, reference has {}",
            grad.len(),
            reference.len()
        )));
    }
    if let Some(i) = grad.first_non_finite() {
        return Err(Error::NonFinite {
            index: i,
            context: "gradient passed to projection".into(),
        });
    }
    if let Some(i) = reference.first_non_finite() {
        return Err(Error::NonFinite {
            index: i,
            context: "reference gradient passed to projection".into(),
        });
    }
    let g = grad.as_mut_slice();
    let r = reference.as_slice();
    let mut dot_gr = 0.0;
    let mut dot_rr = 0.0;
    for (gi, ri) in g.iter().zip(r) {
        dot_gr += gi * ri;
        dot_rr += ri * ri;
    }
    if dot_gr >= 0.0 || dot_rr == 0.0 {
        return Ok(ProjectionOutcome::Unchanged);
    }
    let scale = dot_gr / dot_rr;
    for (gi, ri) in g.iter_mut().zip(r) {
        *gi -= scale * ri;
    }
    Ok(ProjectionOutcome::Projected)
}
