//! Error rates and the test-set average of the first-layer KL.

use boltzlens_core::problens::{discretize_prior, first_layer_kl, BinEdges, EmpiricalDistribution, PriorSpec};
use boltzlens_core::{Network, Scalar, Tensor};

use crate::data::Example;
use crate::error::Result;

/// Fraction of examples whose arg-max prediction differs from the label.
pub fn evaluate<T: Scalar>(net: &Network<T>, examples: &[Example<T>]) -> Result<f64> {
    if examples.is_empty() {
        return Ok(0.0);
    }
    let mut wrong = 0usize;
    for (x, y) in examples {
        if net.predict(x)?.argmax() != *y {
            wrong += 1;
        }
    }
    Ok(wrong as f64 / examples.len() as f64)
}

/// Mean of `KL[P(X) || P̂(F1)]` over `inputs`.
pub fn mean_first_layer_kl<'a, T: Scalar>(
    net: &Network<T>,
    inputs: impl IntoIterator<Item = &'a Tensor<T>>,
    prior_hist: &EmpiricalDistribution,
) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for x in inputs {
        sum += first_layer_kl(net, x, prior_hist)?;
        n += 1;
    }
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

pub fn prior_histogram(prior: &PriorSpec, edges: &BinEdges) -> EmpiricalDistribution {
    discretize_prior(prior, edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use boltzlens_core::network::Layer;
    use boltzlens_core::{init_params, NetworkSpec};

    fn inputs(n: usize) -> Vec<Tensor<f64>> {
        (0..n).map(|i| Tensor::from_fn(&[12, 12, 1], |p| ((p * 7 + i * 13) % 23) as f64 - 11.0)).collect()
    }

    /// Network whose output is fixed to class `k` by a dominant bias.
    fn constant(k: usize) -> Network<f64> {
        let mut net = init_params::<f64>(&NetworkSpec::tiny(), 1).unwrap();
        let last = net.layers().len() - 1;
        if let Layer::Fc { params, .. } = &mut net.layers_mut()[last] {
            params.weights.data_mut().fill(0.0);
            params.bias.data_mut()[k] = 100.0;
        }
        net
    }

    #[test]
    fn constant_predictor_error() {
        let net = constant(3);
        let xs = inputs(16);
        let all_three: Vec<Example<f64>> = xs.iter().map(|x| (x.clone(), 3)).collect();
        assert_eq!(evaluate(&net, &all_three).unwrap(), 0.0);
        // Balanced over 8 classes: 7/8 wrong.
        let balanced: Vec<Example<f64>> = xs.iter().enumerate().map(|(i, x)| (x.clone(), i % 8)).collect();
        assert_eq!(evaluate(&net, &balanced).unwrap(), 14.0 / 16.0);
    }

    #[test]
    fn matches_loop_oracle() {
        let net = init_params::<f64>(&NetworkSpec::tiny(), 4).unwrap();
        let ex: Vec<Example<f64>> = inputs(40).into_iter().enumerate().map(|(i, x)| (x, (i * 5) % 8)).collect();
        let mut wrong = 0;
        for (x, y) in &ex {
            let p = net.predict(x).unwrap();
            let best = (0..p.len()).fold(0, |b, i| if p.data()[i] > p.data()[b] { i } else { b });
            wrong += (best != *y) as usize;
        }
        assert_eq!(evaluate(&net, &ex).unwrap(), wrong as f64 / 40.0);
    }
}
