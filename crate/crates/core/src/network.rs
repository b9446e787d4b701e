use rand::Rng;

use crate::error::{CoreError, Result};
use crate::layers::{conv2d_im2col, fc_forward, maxpool_forward, relu, softmax, ConvLayerParams, FcLayerParams};
use crate::rng::seeded;
use crate::scalar::Scalar;
use crate::spec::{NetworkSpec, Stage};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T> {
    Conv { params: ConvLayerParams<T>, relu: bool },
    MaxPool { window: usize },
    Fc { params: FcLayerParams<T>, relu: bool },
}

impl<T: Scalar> Layer<T> {
    pub fn stage(&self) -> Stage {
        match self {
            Layer::Conv { params, relu } => Stage::Conv {
                kernel: params.kernel().0,
                out_channels: params.out_channels(),
                relu: *relu,
            },
            Layer::MaxPool { window } => Stage::MaxPool { window: *window },
            Layer::Fc { params, relu } => Stage::Fc {
                out: params.outputs(),
                relu: *relu,
            },
        }
    }

    pub fn is_conv(&self) -> bool {
        matches!(self, Layer::Conv { .. })
    }

    pub fn is_fc(&self) -> bool {
        matches!(self, Layer::Fc { .. })
    }
}

/// A network built from a [`NetworkSpec`] with concrete parameters.
///
/// Training mutates a network through `&mut`; inference only needs `&`, so a
/// trained network can be shared across threads for evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    spec: NetworkSpec,
    layers: Vec<Layer<T>>,
}

impl<T: Scalar> Network<T> {
    /// All-zero parameters.
    pub fn zeros(spec: &NetworkSpec) -> Result<Self> {
        let plan = spec.plan()?;
        let layers = plan
            .iter()
            .map(|p| match p.stage {
                Stage::Conv { kernel, out_channels, relu } => Layer::Conv {
                    params: ConvLayerParams::zeros(kernel, kernel, p.input_shape[2], out_channels),
                    relu,
                },
                Stage::MaxPool { window } => Layer::MaxPool { window },
                Stage::Fc { out, relu } => Layer::Fc {
                    params: FcLayerParams::zeros(p.input_shape[0], out),
                    relu,
                },
            })
            .collect();
        Ok(Network { spec: spec.clone(), layers })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.spec.input_shape
    }

    pub fn num_classes(&self) -> usize {
        match self.layers.last() {
            Some(Layer::Fc { params, .. }) => params.outputs(),
            _ => 0,
        }
    }

    /// Parameter tensors in layer order, weights before bias.
    pub fn params(&self) -> Vec<&Tensor<T>> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Conv { params, .. } => {
                    out.push(&params.filters);
                    out.push(&params.bias);
                }
                Layer::Fc { params, .. } => {
                    out.push(&params.weights);
                    out.push(&params.bias);
                }
                Layer::MaxPool { .. } => {}
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Conv { params, .. } => {
                    out.push(&mut params.filters);
                    out.push(&mut params.bias);
                }
                Layer::Fc { params, .. } => {
                    out.push(&mut params.weights);
                    out.push(&mut params.bias);
                }
                Layer::MaxPool { .. } => {}
            }
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        let layers = self
            .layers
            .iter()
            .map(|l| match l {
                Layer::Conv { params, relu } => Layer::Conv {
                    params: ConvLayerParams {
                        filters: params.filters.cast(),
                        bias: params.bias.cast(),
                    },
                    relu: *relu,
                },
                Layer::MaxPool { window } => Layer::MaxPool { window: *window },
                Layer::Fc { params, relu } => Layer::Fc {
                    params: FcLayerParams {
                        weights: params.weights.cast(),
                        bias: params.bias.cast(),
                    },
                    relu: *relu,
                },
            })
            .collect();
        Network {
            spec: self.spec.clone(),
            layers,
        }
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let want = self.spec.input_shape;
        if x.shape() != want {
            if x.len() == want.iter().product::<usize>() && x.ndim() != 3 {
                return Err(CoreError::dim("forward", "input rank", 3, x.ndim()));
            }
            for (axis, name) in ["input height", "input width", "input channels"].iter().enumerate() {
                let found = x.shape().get(axis).copied().unwrap_or(0);
                if found != want[axis] {
                    return Err(CoreError::dim("forward", name, want[axis], found));
                }
            }
            return Err(CoreError::dim("forward", "input rank", 3, x.ndim()));
        }
        Ok(())
    }

    /// Class probabilities without keeping intermediate activations.
    pub fn predict(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let mut cur = x.clone();
        for layer in &self.layers {
            cur = match layer {
                Layer::Conv { params, relu: r } => {
                    let pre = conv2d_im2col(&cur, params)?;
                    if *r {
                        relu(&pre)
                    } else {
                        pre
                    }
                }
                Layer::MaxPool { window } => maxpool_forward(&cur, *window)?.output,
                Layer::Fc { params, relu: r } => {
                    let pre = fc_forward(&cur, params)?;
                    if *r {
                        relu(&pre)
                    } else {
                        pre
                    }
                }
            };
        }
        Ok(softmax(&cur))
    }
}

/// Glorot-uniform weights, zero biases, drawn in layer order from `seed`.
pub fn init_params<T: Scalar>(spec: &NetworkSpec, seed: u64) -> Result<Network<T>> {
    let mut net = Network::<T>::zeros(spec)?;
    let mut rng = seeded(seed);
    for layer in net.layers_mut() {
        let (weights, fan_in, fan_out) = match layer {
            Layer::Conv { params, .. } => {
                let (kh, kw) = params.kernel();
                let fi = kh * kw * params.in_channels();
                let fo = kh * kw * params.out_channels();
                (&mut params.filters, fi, fo)
            }
            Layer::Fc { params, .. } => {
                let (fi, fo) = (params.inputs(), params.outputs());
                (&mut params.weights, fi, fo)
            }
            Layer::MaxPool { .. } => continue,
        };
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for w in weights.data_mut() {
            *w = T::from_f64_lossy(rng.gen_range(-limit..limit));
        }
    }
    Ok(net)
}

/// One stage of a recorded forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry<T> {
    pub stage: Stage,
    /// Linear map output for conv/fc; the pooled input for max pooling.
    pub pre_activation: Tensor<T>,
    /// Output after the nonlinearity or pooling.
    pub activation: Tensor<T>,
    /// Winning input index per pooled cell (max pooling only).
    pub argmax: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace<T> {
    pub input: Tensor<T>,
    pub entries: Vec<TraceEntry<T>>,
    pub probs: Tensor<T>,
}

impl<T: Scalar> LayerTrace<T> {
    pub fn logits(&self) -> &Tensor<T> {
        &self.entries.last().expect("trace has at least one entry").activation
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Input seen by entry `i`.
    pub fn input_of(&self, i: usize) -> &Tensor<T> {
        if i == 0 {
            &self.input
        } else {
            &self.entries[i - 1].activation
        }
    }
}

/// Forward pass that records every stage's pre-activation and activation.
pub fn forward_with_trace<T: Scalar>(net: &Network<T>, x: &Tensor<T>) -> Result<(Tensor<T>, LayerTrace<T>)> {
    net.check_input(x)?;
    let mut entries: Vec<TraceEntry<T>> = Vec::with_capacity(net.layers.len());
    for layer in &net.layers {
        let input = entries.last().map(|e| &e.activation).unwrap_or(x);
        let entry = match layer {
            Layer::Conv { params, relu: r } => {
                let pre = conv2d_im2col(input, params)?;
                let act = if *r { relu(&pre) } else { pre.clone() };
                TraceEntry {
                    stage: layer.stage(),
                    pre_activation: pre,
                    activation: act,
                    argmax: None,
                }
            }
            Layer::MaxPool { window } => {
                let pooled = maxpool_forward(input, *window)?;
                TraceEntry {
                    stage: layer.stage(),
                    pre_activation: input.clone(),
                    activation: pooled.output,
                    argmax: Some(pooled.argmax),
                }
            }
            Layer::Fc { params, relu: r } => {
                let pre = fc_forward(input, params)?;
                let act = if *r { relu(&pre) } else { pre.clone() };
                TraceEntry {
                    stage: layer.stage(),
                    pre_activation: pre,
                    activation: act,
                    argmax: None,
                }
            }
        };
        entries.push(entry);
    }
    let probs = softmax(&entries.last().expect("spec has an output layer").activation);
    let trace = LayerTrace {
        input: x.clone(),
        entries,
        probs: probs.clone(),
    };
    Ok((probs, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::Preset;

    #[test]
    fn zero_net_is_uniform() {
        let net = Network::<f64>::zeros(&Preset::Cnn2.spec()).unwrap();
        let x = Tensor::from_fn(&[32, 32, 1], |i| (i as f64).sin() * 30.0);
        let (probs, trace) = forward_with_trace(&net, &x).unwrap();
        assert!(probs.data().iter().all(|&p| (p - 0.1).abs() < 1e-15));
        assert_eq!(trace.len(), 6);
    }

    #[test]
    fn trace_shapes_match_presets() {
        for preset in Preset::ALL {
            let net = init_params::<f64>(&preset.spec(), 1).unwrap();
            let x = Tensor::from_fn(&[32, 32, 1], |i| ((i * 37) % 101) as f64 - 50.0);
            let (_, trace) = forward_with_trace(&net, &x).unwrap();
            let n = preset.first_conv_channels();
            let shapes: Vec<&[usize]> = trace.entries.iter().map(|e| e.activation.shape()).collect();
            assert_eq!(shapes, vec![&[30, 30, n][..], &[15, 15, n], &[11, 11, 20], &[5, 5, 20], &[20], &[10]]);
            for e in &trace.entries {
                if let Stage::Conv { relu: true, .. } | Stage::Fc { relu: true, .. } = e.stage {
                    assert_eq!(e.activation, crate::layers::relu(&e.pre_activation));
                }
            }
        }
    }

    #[test]
    fn predict_matches_trace() {
        let net = init_params::<f64>(&Preset::Cnn1.spec(), 3).unwrap();
        let x = Tensor::from_fn(&[32, 32, 1], |i| ((i * 13) % 64) as f64 - 32.0);
        let (probs, _) = forward_with_trace(&net, &x).unwrap();
        assert_eq!(net.predict(&x).unwrap(), probs);
    }

    #[test]
    fn rejects_wrong_input_shape() {
        let net = Network::<f64>::zeros(&Preset::Cnn1.spec()).unwrap();
        let err = forward_with_trace(&net, &Tensor::zeros(&[28, 28, 1])).unwrap_err();
        assert!(matches!(err, CoreError::Dimension { axis: "input height", .. }));
    }

    #[test]
    fn init_is_seed_deterministic() {
        let spec = Preset::Cnn2.spec();
        let a = init_params::<f64>(&spec, 5).unwrap();
        let b = init_params::<f64>(&spec, 5).unwrap();
        let c = init_params::<f64>(&spec, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn init_weight_mean_within_three_sigma() {
        // Uniform(-a, a) has variance a²/3, so the sample mean of n draws has
        // standard deviation a / sqrt(3n).
        let net = init_params::<f64>(&Preset::Cnn3.spec(), 11).unwrap();
        for layer in net.layers() {
            let (w, fi, fo) = match layer {
                Layer::Conv { params, .. } => {
                    let (kh, kw) = params.kernel();
                    (&params.filters, kh * kw * params.in_channels(), kh * kw * params.out_channels())
                }
                Layer::Fc { params, .. } => (&params.weights, params.inputs(), params.outputs()),
                Layer::MaxPool { .. } => continue,
            };
            let a = (6.0 / (fi + fo) as f64).sqrt();
            let n = w.len() as f64;
            let mean = w.sum() / n;
            assert!(mean.abs() < 3.0 * a / (3.0 * n).sqrt(), "mean {mean} for {fi}x{fo}");
            assert!(w.data().iter().all(|v| v.abs() <= a));
        }
        for layer in net.layers() {
            match layer {
                Layer::Conv { params, .. } => assert!(params.bias.data().iter().all(|&b| b == 0.0)),
                Layer::Fc { params, .. } => assert!(params.bias.data().iter().all(|&b| b == 0.0)),
                Layer::MaxPool { .. } => {}
            }
        }
    }
}
