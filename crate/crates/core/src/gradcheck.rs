//! Central finite-difference check of backprop gradients.

use crate::backprop::loss_and_gradients;
use crate::error::Result;
use crate::layers::cross_entropy_loss;
use crate::network::Network;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    /// `(param tensor index, element index)` of the worst element.
    pub worst: (usize, usize),
}

/// Denominator floor for [`relative_error`]; below it the error is effectively absolute.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

/// Relative error `|a - n| / max(|a| + |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(floor)
}

/// Compares every parameter's backprop gradient with `(L(θ+h) - L(θ-h)) / 2h`.
pub fn check_gradients(net: &Network<f64>, x: &Tensor<f64>, label: usize, h: f64) -> Result<GradCheckReport> {
    let (_, grads, _) = loss_and_gradients(net, x, label)?;
    let mut probe = net.clone();
    let mut report = GradCheckReport {
        checked: 0,
        max_rel_error: 0.0,
        worst: (0, 0),
    };
    for (pi, g) in grads.tensors().iter().enumerate() {
        for j in 0..g.len() {
            let orig = probe.params()[pi].data()[j];
            probe.params_mut()[pi].data_mut()[j] = orig + h;
            let lp = cross_entropy_loss(&probe.predict(x)?, label)?;
            probe.params_mut()[pi].data_mut()[j] = orig - h;
            let lm = cross_entropy_loss(&probe.predict(x)?, label)?;
            probe.params_mut()[pi].data_mut()[j] = orig;
            let numeric = (lp - lm) / (2.0 * h);
            let err = relative_error(g.data()[j], numeric, REL_ERROR_FLOOR);
            report.checked += 1;
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = (pi, j);
            }
        }
    }
    Ok(report)
}
