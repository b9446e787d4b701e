use crate::backprop::Gradients;
use crate::error::{CoreError, Result};
use crate::network::Network;
use crate::scalar::Scalar;

/// Plain SGD hyper-parameters.
///
/// The default rate suits inputs with pixel std 32 under Glorot init; at
/// 0.01 the first updates regularly push every hidden FC unit below zero and
/// the network freezes at a constant prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            learning_rate: 0.003,
            batch_size: 32,
        }
    }
}

/// `p <- p - lr * g` elementwise.
pub fn sgd_update<T: Scalar>(params: &mut [T], grads: &[T], lr: T) {
    debug_assert_eq!(params.len(), grads.len());
    for (p, &g) in params.iter_mut().zip(grads) {
        *p -= lr * g;
    }
}

pub fn sgd_step<T: Scalar>(net: &mut Network<T>, grads: &Gradients<T>, lr: f64) -> Result<()> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(CoreError::invalid("sgd_step", format!("learning rate must be positive, got {lr}")));
    }
    let lr = T::from_f64_lossy(lr);
    let g = grads.tensors();
    let mut params = net.params_mut();
    if g.len() != params.len() {
        return Err(CoreError::dim("sgd_step", "parameter tensor count", params.len(), g.len()));
    }
    for (p, g) in params.iter_mut().zip(g) {
        if p.shape() != g.shape() {
            return Err(CoreError::dim("sgd_step", "gradient length", p.len(), g.len()));
        }
        sgd_update(p.data_mut(), g.data(), lr);
    }
    Ok(())
}
