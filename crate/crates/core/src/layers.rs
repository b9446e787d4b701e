//! Forward kernels for the layer types used by the presets.
//!
//! Convolution is valid cross-correlation with stride 1 (no kernel flip);
//! max pooling uses a 2×2 window with stride 2 and drops a trailing odd
//! row/column.

use crate::error::{CoreError, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Probabilities below this are clamped before taking the log in the loss.
pub const CE_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayerParams<T> {
    /// `[kH, kW, inC, outC]`
    pub filters: Tensor<T>,
    /// `[outC]`
    pub bias: Tensor<T>,
}

impl<T: Scalar> ConvLayerParams<T> {
    pub fn new(filters: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        if filters.ndim() != 4 {
            return Err(CoreError::invalid("conv params", "filters must be rank 4 [kH, kW, inC, outC]"));
        }
        let out_c = filters.shape()[3];
        if bias.shape() != [out_c] {
            return Err(CoreError::dim("conv params", "bias length", out_c, bias.len()));
        }
        Ok(ConvLayerParams { filters, bias })
    }

    pub fn zeros(kh: usize, kw: usize, in_c: usize, out_c: usize) -> Self {
        ConvLayerParams {
            filters: Tensor::zeros(&[kh, kw, in_c, out_c]),
            bias: Tensor::zeros(&[out_c]),
        }
    }

    #[inline]
    pub fn kernel(&self) -> (usize, usize) {
        (self.filters.shape()[0], self.filters.shape()[1])
    }

    #[inline]
    pub fn in_channels(&self) -> usize {
        self.filters.shape()[2]
    }

    #[inline]
    pub fn out_channels(&self) -> usize {
        self.filters.shape()[3]
    }

    /// Output shape for a given `[H, W, C]` input, validating the input.
    pub fn output_shape(&self, input: &[usize]) -> Result<[usize; 3]> {
        if input.len() != 3 {
            return Err(CoreError::dim("conv2d", "input rank", 3, input.len()));
        }
        let (kh, kw) = self.kernel();
        if input[2] != self.in_channels() {
            return Err(CoreError::dim("conv2d", "input channels", self.in_channels(), input[2]));
        }
        if input[0] < kh {
            return Err(CoreError::dim("conv2d", "input height (must be >= kernel height)", kh, input[0]));
        }
        if input[1] < kw {
            return Err(CoreError::dim("conv2d", "input width (must be >= kernel width)", kw, input[1]));
        }
        Ok([input[0] - kh + 1, input[1] - kw + 1, self.out_channels()])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FcLayerParams<T> {
    /// `[in, out]`
    pub weights: Tensor<T>,
    /// `[out]`
    pub bias: Tensor<T>,
}

impl<T: Scalar> FcLayerParams<T> {
    pub fn new(weights: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        if weights.ndim() != 2 {
            return Err(CoreError::invalid("fc params", "weights must be rank 2 [in, out]"));
        }
        let out = weights.shape()[1];
        if bias.shape() != [out] {
            return Err(CoreError::dim("fc params", "bias length", out, bias.len()));
        }
        Ok(FcLayerParams { weights, bias })
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        FcLayerParams {
            weights: Tensor::zeros(&[inputs, outputs]),
            bias: Tensor::zeros(&[outputs]),
        }
    }

    #[inline]
    pub fn inputs(&self) -> usize {
        self.weights.shape()[0]
    }

    #[inline]
    pub fn outputs(&self) -> usize {
        self.weights.shape()[1]
    }
}

/// `c[m×n] += a[m×k] · b[k×n]`, all row-major.
pub fn gemm_acc<T: Scalar>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let c_row = &mut c[i * n..(i + 1) * n];
        let a_row = &a[i * k..(i + 1) * k];
        for (p, &av) in a_row.iter().enumerate() {
            if av == T::zero() {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                *cv += av * bv;
            }
        }
    }
}

/// Direct sliding-window convolution.
pub fn conv2d_forward<T: Scalar>(input: &Tensor<T>, params: &ConvLayerParams<T>) -> Result<Tensor<T>> {
    let [oh, ow, oc] = params.output_shape(input.shape())?;
    let (kh, kw) = params.kernel();
    let (w, ic) = (input.shape()[1], input.shape()[2]);
    let x = input.data();
    let f = params.filters.data();
    let mut out = Vec::with_capacity(oh * ow * oc);
    for oy in 0..oh {
        for ox in 0..ow {
            let mut acc: Vec<T> = params.bias.data().to_vec();
            for ky in 0..kh {
                for kx in 0..kw {
                    let base = ((oy + ky) * w + ox + kx) * ic;
                    for ci in 0..ic {
                        let xv = x[base + ci];
                        let frow = &f[((ky * kw + kx) * ic + ci) * oc..][..oc];
                        for (a, &fv) in acc.iter_mut().zip(frow) {
                            *a += xv * fv;
                        }
                    }
                }
            }
            out.extend_from_slice(&acc);
        }
    }
    Tensor::new(vec![oh, ow, oc], out)
}

/// Unrolls every `kh×kw×C` patch of an `[H, W, C]` input into one row.
///
/// The result is an `(outH·outW) × (kh·kw·C)` row-major matrix whose column
/// order matches the flattened `[kH, kW, inC]` prefix of the filter tensor,
/// so the filters can be used as a `(kh·kw·C) × outC` matrix directly.
pub fn im2col<T: Scalar>(input: &Tensor<T>, kh: usize, kw: usize) -> Result<(Vec<T>, usize, usize)> {
    if input.ndim() != 3 {
        return Err(CoreError::dim("im2col", "input rank", 3, input.ndim()));
    }
    let (h, w, c) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    if h < kh || w < kw {
        return Err(CoreError::invalid("im2col", format!("kernel {kh}x{kw} does not fit input {h}x{w}")));
    }
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    let row_len = kh * kw * c;
    let x = input.data();
    let mut cols = Vec::with_capacity(oh * ow * row_len);
    for oy in 0..oh {
        for ox in 0..ow {
            for ky in 0..kh {
                let start = ((oy + ky) * w + ox) * c;
                cols.extend_from_slice(&x[start..start + kw * c]);
            }
        }
    }
    Ok((cols, oh * ow, row_len))
}

/// Scatter-adds patch-matrix gradients back onto an `[H, W, C]` input.
pub fn col2im<T: Scalar>(cols: &[T], input_shape: &[usize], kh: usize, kw: usize) -> Tensor<T> {
    let (h, w, c) = (input_shape[0], input_shape[1], input_shape[2]);
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    let row_len = kh * kw * c;
    let mut out = Tensor::zeros(input_shape);
    let x = out.data_mut();
    for oy in 0..oh {
        for ox in 0..ow {
            let row = &cols[(oy * ow + ox) * row_len..][..row_len];
            for ky in 0..kh {
                let start = ((oy + ky) * w + ox) * c;
                for (xv, &g) in x[start..start + kw * c].iter_mut().zip(&row[ky * kw * c..(ky + 1) * kw * c]) {
                    *xv += g;
                }
            }
        }
    }
    out
}

/// Convolution as a single matrix product of the patch matrix with the filters.
pub fn conv2d_im2col<T: Scalar>(input: &Tensor<T>, params: &ConvLayerParams<T>) -> Result<Tensor<T>> {
    let [oh, ow, oc] = params.output_shape(input.shape())?;
    let (kh, kw) = params.kernel();
    let (cols, rows, k) = im2col(input, kh, kw)?;
    let mut out = Vec::with_capacity(rows * oc);
    for _ in 0..rows {
        out.extend_from_slice(params.bias.data());
    }
    gemm_acc(&cols, params.filters.data(), &mut out, rows, k, oc);
    Tensor::new(vec![oh, ow, oc], out)
}

/// Result of a max-pooling pass: pooled map plus, per output cell, the flat
/// index of the winning input element.
#[derive(Debug, Clone, PartialEq)]
pub struct Pooled<T> {
    pub output: Tensor<T>,
    pub argmax: Vec<usize>,
}

pub fn maxpool_forward<T: Scalar>(input: &Tensor<T>, window: usize) -> Result<Pooled<T>> {
    if input.ndim() != 3 {
        return Err(CoreError::dim("maxpool", "input rank", 3, input.ndim()));
    }
    if window == 0 {
        return Err(CoreError::invalid("maxpool", "window must be positive"));
    }
    let (h, w, c) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (oh, ow) = (h / window, w / window);
    if oh == 0 || ow == 0 {
        return Err(CoreError::invalid("maxpool", format!("input {h}x{w} smaller than window {window}")));
    }
    let x = input.data();
    let mut out = Vec::with_capacity(oh * ow * c);
    let mut argmax = Vec::with_capacity(oh * ow * c);
    for oy in 0..oh {
        for ox in 0..ow {
            for ch in 0..c {
                let mut best_idx = ((oy * window) * w + ox * window) * c + ch;
                let mut best = x[best_idx];
                for dy in 0..window {
                    for dx in 0..window {
                        let idx = ((oy * window + dy) * w + ox * window + dx) * c + ch;
                        if x[idx] > best {
                            best = x[idx];
                            best_idx = idx;
                        }
                    }
                }
                out.push(best);
                argmax.push(best_idx);
            }
        }
    }
    Ok(Pooled {
        output: Tensor::new(vec![oh, ow, c], out)?,
        argmax,
    })
}

pub fn relu<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// `out = Wᵀ · input + b` over the flattened input.
pub fn fc_forward<T: Scalar>(input: &Tensor<T>, params: &FcLayerParams<T>) -> Result<Tensor<T>> {
    if input.len() != params.inputs() {
        return Err(CoreError::dim("fc", "flattened input length", params.inputs(), input.len()));
    }
    let mut out = params.bias.data().to_vec();
    gemm_acc(input.data(), params.weights.data(), &mut out, 1, params.inputs(), params.outputs());
    Ok(Tensor::from_vec(out))
}

/// Max-shifted softmax over all elements.
pub fn softmax<T: Scalar>(logits: &Tensor<T>) -> Tensor<T> {
    Tensor::from_vec(softmax_slice(logits.data()))
}

pub fn softmax_slice<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&v| (v - max).exp()).collect();
    let z: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// `-ln(probs[label])` with the probability clamped at [`CE_EPSILON`].
pub fn cross_entropy_loss<T: Scalar>(probs: &Tensor<T>, label: usize) -> Result<T> {
    if label >= probs.len() {
        return Err(CoreError::LabelOutOfRange {
            label,
            classes: probs.len(),
        });
    }
    let p = probs.data()[label].max(T::from_f64_lossy(CE_EPSILON));
    Ok(-p.ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn lcg(seed: u64) -> impl FnMut() -> f64 {
        let mut s = seed;
        move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        }
    }

    /// Independent sliding-window oracle indexed by (channel, row, col).
    fn naive_conv(x: &Tensor<f64>, p: &ConvLayerParams<f64>) -> Vec<f64> {
        let (h, w, ic) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let (kh, kw) = p.kernel();
        let oc = p.out_channels();
        let (oh, ow) = (h - kh + 1, w - kw + 1);
        let mut out = vec![0.0; oh * ow * oc];
        for n in 0..oc {
            for i in 0..oh {
                for j in 0..ow {
                    let mut s = p.bias.data()[n];
                    for q in 0..ic {
                        for a in 0..kh {
                            for b in 0..kw {
                                let f = p.filters.data()[((a * kw + b) * ic + q) * oc + n];
                                s += f * x.at3(i + a, j + b, q);
                            }
                        }
                    }
                    out[(i * ow + j) * oc + n] = s;
                }
            }
        }
        out
    }

    fn random_case(seed: u64, h: usize, w: usize, ic: usize, k: usize, oc: usize) -> (Tensor<f64>, ConvLayerParams<f64>) {
        let mut r = lcg(seed);
        let x = Tensor::from_fn(&[h, w, ic], |_| r());
        let f = Tensor::from_fn(&[k, k, ic, oc], |_| r());
        let b = Tensor::from_fn(&[oc], |_| r());
        (x, ConvLayerParams::new(f, b).unwrap())
    }

    #[test]
    fn conv_table1_shape() {
        let x = Tensor::<f64>::zeros(&[32, 32, 1]);
        let p = ConvLayerParams::zeros(3, 3, 1, 12);
        assert_eq!(conv2d_forward(&x, &p).unwrap().shape(), &[30, 30, 12]);
        let x = Tensor::<f64>::zeros(&[15, 15, 12]);
        let p = ConvLayerParams::zeros(5, 5, 12, 20);
        assert_eq!(conv2d_im2col(&x, &p).unwrap().shape(), &[11, 11, 20]);
    }

    #[test]
    fn zero_filters_give_bias() {
        let x = Tensor::from_fn(&[6, 7, 2], |i| i as f64);
        let mut p = ConvLayerParams::zeros(3, 3, 2, 3);
        p.bias = Tensor::from_vec(vec![0.5, -1.0, 2.0]);
        let y = conv2d_forward(&x, &p).unwrap();
        for (i, v) in y.data().iter().enumerate() {
            assert_eq!(*v, p.bias.data()[i % 3]);
        }
    }

    #[test]
    fn conv_matches_sliding_window_oracle() {
        let (x, p) = random_case(11, 5, 5, 2, 2, 3);
        let y = conv2d_forward(&x, &p).unwrap();
        let oracle = naive_conv(&x, &p);
        for (a, b) in y.data().iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn im2col_matches_direct() {
        for seed in 0..20 {
            let (x, p) = random_case(seed, 4 + seed as usize % 9, 5 + seed as usize % 7, 1 + seed as usize % 4, 1 + seed as usize % 4, 1 + seed as usize % 5);
            let a = conv2d_forward(&x, &p).unwrap();
            let b = conv2d_im2col(&x, &p).unwrap();
            assert!(a.max_abs_diff(&b).unwrap() < 1e-10);
        }
    }

    #[test]
    fn im2col_two_channel_layout() {
        // 3×3 input in two channels, 2×2 filters [[A,B],[C,D]] and [[E,F],[G,H]].
        let x1 = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0];
        let x2 = [10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0];
        let mut xd = Vec::new();
        for i in 0..9 {
            xd.push(x1[i]);
            xd.push(x2[i]);
        }
        let x = Tensor::new(vec![3, 3, 2], xd).unwrap();
        let (a, b, c, d, e, f, g, h) = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8);
        // [kH, kW, inC, outC=1]
        let filt = Tensor::new(vec![2, 2, 2, 1], vec![a, e, b, f, c, g, d, h]).unwrap();
        let p = ConvLayerParams::new(filt, Tensor::zeros(&[1])).unwrap();
        let z = conv2d_im2col(&x, &p).unwrap();
        assert_eq!(z.shape(), &[2, 2, 1]);
        let z1 = a * x1[0] + b * x1[1] + c * x1[3] + d * x1[4] + e * x2[0] + f * x2[1] + g * x2[3] + h * x2[4];
        let z4 = a * x1[4] + b * x1[5] + c * x1[7] + d * x1[8] + e * x2[4] + f * x2[5] + g * x2[7] + h * x2[8];
        assert_abs_diff_eq!(z.data()[0], z1, epsilon = 1e-12);
        assert_abs_diff_eq!(z.data()[3], z4, epsilon = 1e-12);
    }

    #[test]
    fn top_left_filter_crops() {
        let x = Tensor::from_fn(&[6, 5, 1], |i| i as f64 * 0.5 - 3.0);
        let mut p = ConvLayerParams::zeros(3, 3, 1, 1);
        p.filters.data_mut()[0] = 1.0;
        let y = conv2d_im2col(&x, &p).unwrap();
        assert_eq!(y.shape(), &[4, 3, 1]);
        for i in 0..4 {
            for j in 0..3 {
                assert_eq!(y.at3(i, j, 0), x.at3(i, j, 0));
            }
        }
    }

    #[test]
    fn conv_shape_errors_name_axis() {
        let x = Tensor::<f64>::zeros(&[8, 8, 2]);
        let p = ConvLayerParams::zeros(3, 3, 1, 4);
        match conv2d_forward(&x, &p).unwrap_err() {
            CoreError::Dimension { axis, expected, found, .. } => {
                assert_eq!(axis, "input channels");
                assert_eq!((expected, found), (1, 2));
            }
            e => panic!("unexpected {e}"),
        }
        let p = ConvLayerParams::zeros(9, 3, 2, 4);
        assert!(matches!(conv2d_im2col(&x, &p), Err(CoreError::Dimension { .. })));
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), g> == <x, col2im(g)>
        let mut r = lcg(3);
        let x = Tensor::from_fn(&[7, 6, 3], |_| r());
        let (cols, rows, k) = im2col(&x, 3, 2).unwrap();
        let g: Vec<f64> = (0..rows * k).map(|_| r()).collect();
        let lhs: f64 = cols.iter().zip(&g).map(|(a, b)| a * b).sum();
        let back = col2im(&g, x.shape(), 3, 2);
        let rhs: f64 = x.data().iter().zip(back.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn maxpool_shapes_and_constant() {
        let x = Tensor::full(&[30, 30, 4], 2.5f64);
        let p = maxpool_forward(&x, 2).unwrap();
        assert_eq!(p.output.shape(), &[15, 15, 4]);
        assert!(p.output.data().iter().all(|&v| v == 2.5));
        let x = Tensor::<f64>::zeros(&[11, 11, 20]);
        assert_eq!(maxpool_forward(&x, 2).unwrap().output.shape(), &[5, 5, 20]);
    }

    #[test]
    fn maxpool_floor_drops_last_row_and_col() {
        let mut x = Tensor::<f64>::zeros(&[3, 3, 1]);
        x.data_mut()[8] = 100.0; // (2, 2), dropped
        x.data_mut()[4] = 7.0; // (1, 1)
        let p = maxpool_forward(&x, 2).unwrap();
        assert_eq!(p.output.data(), &[7.0]);
        assert_eq!(p.argmax, vec![4]);
    }

    #[test]
    fn relu_cases() {
        let x = Tensor::from_vec(vec![-1.0, 0.0, 2.0]);
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.0]);
        let neg = Tensor::from_vec(vec![-3.0f32, -0.1, -1e9]);
        assert!(relu(&neg).data().iter().all(|&v| v == 0.0));
        let y = relu(&x);
        assert_eq!(relu(&y), y);
    }

    #[test]
    fn fc_identity_and_oracle() {
        let x = Tensor::from_vec(vec![1.0, -2.0, 3.5]);
        let mut id = FcLayerParams::zeros(3, 3);
        for i in 0..3 {
            id.weights.data_mut()[i * 3 + i] = 1.0;
        }
        assert_eq!(fc_forward(&x, &id).unwrap(), x);

        let mut r = lcg(9);
        let x = Tensor::from_fn(&[17], |_| r());
        let p = FcLayerParams::new(Tensor::from_fn(&[17, 5], |_| r()), Tensor::from_fn(&[5], |_| r())).unwrap();
        let y = fc_forward(&x, &p).unwrap();
        for o in 0..5 {
            let mut s = p.bias.data()[o];
            for i in 0..17 {
                s += p.weights.data()[i * 5 + o] * x.data()[i];
            }
            assert!((y.data()[o] - s).abs() < 1e-12);
        }
        assert!(matches!(fc_forward(&Tensor::from_vec(vec![0.0; 4]), &p), Err(CoreError::Dimension { .. })));
    }

    #[test]
    fn fc_table1_flatten() {
        let x = Tensor::<f64>::zeros(&[5, 5, 20]);
        let p = FcLayerParams::zeros(500, 20);
        assert_eq!(fc_forward(&x, &p).unwrap().shape(), &[20]);
    }

    #[test]
    fn softmax_closed_forms() {
        let u = softmax(&Tensor::from_vec(vec![3.0f64; 10]));
        assert!(u.data().iter().all(|&p| (p - 0.1).abs() < 1e-15));
        let p = softmax(&Tensor::from_vec(vec![0.0, 2f64.ln()]));
        assert_abs_diff_eq!(p.data()[0], 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.data()[1], 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn cross_entropy_closed_forms() {
        let u = Tensor::from_vec(vec![0.1f64; 10]);
        assert_abs_diff_eq!(cross_entropy_loss(&u, 3).unwrap(), 10f64.ln(), epsilon = 1e-12);
        let one = Tensor::from_vec(vec![0.0, 1.0, 0.0]);
        assert_eq!(cross_entropy_loss(&one, 1).unwrap(), 0.0);
        assert_abs_diff_eq!(cross_entropy_loss(&one, 0).unwrap(), -(1e-12f64).ln(), epsilon = 1e-9);
        let p = Tensor::from_vec(vec![0.25, 0.75]);
        assert_abs_diff_eq!(cross_entropy_loss(&p, 1).unwrap(), 0.2876820724517809, epsilon = 1e-12);
        assert!(matches!(cross_entropy_loss(&p, 2), Err(CoreError::LabelOutOfRange { label: 2, classes: 2 })));
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn softmax_normalized_and_shift_invariant(
                logits in prop::collection::vec(-500.0f64..500.0, 1..32),
                shift in -100.0f64..100.0,
            ) {
                let p = softmax(&Tensor::from_vec(logits.clone()));
                let s: f64 = p.data().iter().sum();
                prop_assert!((s - 1.0).abs() < 1e-12);
                prop_assert!(p.data().iter().all(|&v| v >= 0.0));
                let shifted: Vec<f64> = logits.iter().map(|v| v + shift).collect();
                let q = softmax(&Tensor::from_vec(shifted));
                prop_assert!(p.max_abs_diff(&q).unwrap() < 1e-12);
            }

            #[test]
            fn relu_idempotent(v in prop::collection::vec(-10.0f64..10.0, 1..64)) {
                let x = Tensor::from_vec(v);
                let once = relu(&x);
                prop_assert_eq!(relu(&once), once);
            }
        }
    }
}
