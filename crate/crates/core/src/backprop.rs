//! Reverse-mode gradients of the softmax cross-entropy loss.

use crate::error::{CoreError, Result};
use crate::layers::{col2im, cross_entropy_loss, im2col};
use crate::network::{forward_with_trace, Layer, LayerTrace, Network};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads<T> {
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Gradients laid out like the network's layers (`None` for pooling).
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<Option<ParamGrads<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(net: &Network<T>) -> Self {
        let layers = net
            .layers()
            .iter()
            .map(|l| match l {
                Layer::Conv { params, .. } => Some(ParamGrads {
                    weights: Tensor::zeros(params.filters.shape()),
                    bias: Tensor::zeros(params.bias.shape()),
                }),
                Layer::Fc { params, .. } => Some(ParamGrads {
                    weights: Tensor::zeros(params.weights.shape()),
                    bias: Tensor::zeros(params.bias.shape()),
                }),
                Layer::MaxPool { .. } => None,
            })
            .collect();
        Gradients { layers }
    }

    /// Same ordering as [`Network::params`].
    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        self.layers
            .iter()
            .flatten()
            .flat_map(|g| [&g.weights, &g.bias])
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers
            .iter_mut()
            .flatten()
            .flat_map(|g| [&mut g.weights, &mut g.bias])
            .collect()
    }

    pub fn add_assign(&mut self, other: &Gradients<T>) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, &y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: T) {
        for t in self.tensors_mut() {
            for x in t.data_mut() {
                *x *= factor;
            }
        }
    }

    pub fn l2_norm(&self) -> T {
        self.tensors()
            .iter()
            .flat_map(|t| t.data().iter())
            .map(|&v| v * v)
            .sum::<T>()
            .sqrt()
    }
}

fn check_trace<T: Scalar>(net: &Network<T>, trace: &LayerTrace<T>) -> Result<()> {
    if trace.entries.len() != net.layers().len() {
        return Err(CoreError::StaleTrace(format!(
            "trace has {} entries, network has {} layers",
            trace.entries.len(),
            net.layers().len()
        )));
    }
    if trace.input.shape() != net.input_shape() {
        return Err(CoreError::StaleTrace(format!(
            "trace input shape {:?} != network input {:?}",
            trace.input.shape(),
            net.input_shape()
        )));
    }
    for (i, (layer, entry)) in net.layers().iter().zip(&trace.entries).enumerate() {
        if layer.stage() != entry.stage {
            return Err(CoreError::StaleTrace(format!("entry {i} was recorded for {:?}", entry.stage)));
        }
        let ok = match layer {
            Layer::Conv { params, .. } => params
                .output_shape(trace.input_of(i).shape())
                .map(|s| entry.pre_activation.shape() == s)
                .unwrap_or(false),
            Layer::Fc { params, .. } => {
                trace.input_of(i).len() == params.inputs() && entry.pre_activation.len() == params.outputs()
            }
            Layer::MaxPool { .. } => entry.argmax.as_ref().map(|a| a.len()) == Some(entry.activation.len()),
        };
        if !ok {
            return Err(CoreError::StaleTrace(format!("entry {i} shapes do not match layer parameters")));
        }
    }
    Ok(())
}

/// Gradient of `-ln softmax(logits)[label]` w.r.t. every parameter.
///
/// The loss gradient at the logits is `probs - onehot(label)`; it is pushed
/// back through each stage in reverse, with ReLU gated on `pre > 0` and max
/// pooling routing to the recorded argmax.
pub fn backward<T: Scalar>(net: &Network<T>, trace: &LayerTrace<T>, label: usize) -> Result<Gradients<T>> {
    check_trace(net, trace)?;
    let classes = trace.probs.len();
    if label >= classes {
        return Err(CoreError::LabelOutOfRange { label, classes });
    }
    let mut grads = Gradients::zeros_like(net);
    let mut upstream = trace.probs.clone();
    upstream.data_mut()[label] -= T::one();

    for (i, layer) in net.layers().iter().enumerate().rev() {
        let entry = &trace.entries[i];
        let input = trace.input_of(i);
        let need_input_grad = i > 0;
        match layer {
            Layer::Conv { params, relu } => {
                let mut g = upstream;
                if *relu {
                    gate_relu(&mut g, &entry.pre_activation);
                }
                let (kh, kw) = params.kernel();
                let oc = params.out_channels();
                let (cols, rows, k) = im2col(input, kh, kw)?;
                let pg = grads.layers[i].as_mut().expect("conv has grads");
                let dw = pg.weights.data_mut();
                let db = pg.bias.data_mut();
                let gd = g.data();
                for p in 0..rows {
                    let g_row = &gd[p * oc..(p + 1) * oc];
                    for (b, &gv) in db.iter_mut().zip(g_row) {
                        *b += gv;
                    }
                    for (kk, &cv) in cols[p * k..(p + 1) * k].iter().enumerate() {
                        if cv == T::zero() {
                            continue;
                        }
                        for (w, &gv) in dw[kk * oc..(kk + 1) * oc].iter_mut().zip(g_row) {
                            *w += cv * gv;
                        }
                    }
                }
                upstream = if need_input_grad {
                    let f = params.filters.data();
                    let mut dcols = vec![T::zero(); rows * k];
                    for p in 0..rows {
                        let g_row = &gd[p * oc..(p + 1) * oc];
                        for kk in 0..k {
                            let w_row = &f[kk * oc..(kk + 1) * oc];
                            dcols[p * k + kk] = w_row.iter().zip(g_row).map(|(&w, &gv)| w * gv).sum();
                        }
                    }
                    col2im(&dcols, input.shape(), kh, kw)
                } else {
                    Tensor::zeros(&[1])
                };
            }
            Layer::MaxPool { .. } => {
                let argmax = entry.argmax.as_ref().expect("checked above");
                let mut dx = Tensor::zeros(entry.pre_activation.shape());
                let d = dx.data_mut();
                for (&idx, &gv) in argmax.iter().zip(upstream.data()) {
                    d[idx] += gv;
                }
                upstream = dx;
            }
            Layer::Fc { params, relu } => {
                let mut g = upstream;
                if *relu {
                    gate_relu(&mut g, &entry.pre_activation);
                }
                let (n_in, n_out) = (params.inputs(), params.outputs());
                let x = input.data();
                let gd = g.data();
                let pg = grads.layers[i].as_mut().expect("fc has grads");
                for (b, &gv) in pg.bias.data_mut().iter_mut().zip(gd) {
                    *b += gv;
                }
                let dw = pg.weights.data_mut();
                for (r, &xv) in x.iter().enumerate() {
                    if xv == T::zero() {
                        continue;
                    }
                    for (w, &gv) in dw[r * n_out..(r + 1) * n_out].iter_mut().zip(gd) {
                        *w += xv * gv;
                    }
                }
                upstream = if need_input_grad {
                    let w = params.weights.data();
                    let dx: Vec<T> = (0..n_in)
                        .map(|r| w[r * n_out..(r + 1) * n_out].iter().zip(gd).map(|(&a, &b)| a * b).sum())
                        .collect();
                    Tensor::new(input.shape().to_vec(), dx)?
                } else {
                    Tensor::zeros(&[1])
                };
            }
        }
    }
    Ok(grads)
}

fn gate_relu<T: Scalar>(g: &mut Tensor<T>, pre: &Tensor<T>) {
    for (gv, &p) in g.data_mut().iter_mut().zip(pre.data()) {
        if p <= T::zero() {
            *gv = T::zero();
        }
    }
}

/// Forward, loss and backward for one labelled example.
pub fn loss_and_gradients<T: Scalar>(net: &Network<T>, x: &Tensor<T>, label: usize) -> Result<(T, Gradients<T>, Tensor<T>)> {
    let (probs, trace) = forward_with_trace(net, x)?;
    let loss = cross_entropy_loss(&probs, label)?;
    let grads = backward(net, &trace, label)?;
    Ok((loss, grads, probs))
}
