use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    Valid,
    /// Zero padding so that the output has `ceil(input / stride)` rows and columns.
    Same,
}

/// Architecture description used to initialise a [`Layer`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LayerSpec {
    Dense { units: usize },
    Conv2d { filters: usize, kernel: usize, stride: usize, padding: Padding },
    Relu,
    Avgpool2d { size: usize, stride: usize },
    Flatten,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T> {
    /// `y = W x + b` with `W` of shape `(out, in)`.
    Dense { weight: Tensor<T>, bias: Tensor<T> },
    /// Cross-correlation over a `(channels, height, width)` input, kernel `(outC, inC, kH, kW)`.
    Conv2d { weight: Tensor<T>, bias: Tensor<T>, stride: usize, padding: Padding },
    Relu,
    /// Mean pooling over `size x size` windows, no padding.
    AvgPool2d { size: usize, stride: usize },
    Flatten,
}

/// Gradient of the loss with respect to one parameterised layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrad<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeometry {
    pub in_c: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_c: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad_top: usize,
    pub pad_left: usize,
}

fn same_padding(input: usize, kernel: usize, stride: usize) -> (usize, usize) {
    let out = input.div_ceil(stride);
    let total = ((out - 1) * stride + kernel).saturating_sub(input);
    (out, total / 2)
}

fn spatial(input: &[usize], what: &str) -> Result<(usize, usize, usize)> {
    match *input {
        [c, h, w] => Ok((c, h, w)),
        _ => Err(Error::InvalidNetwork(format!("{what} expects a (C, H, W) input, got {input:?}"))),
    }
}

impl<T: Real> Layer<T> {
    /// Initialises a layer for the given input shape with Glorot-uniform weights and zero bias.
    pub fn init(spec: &LayerSpec, input: &[usize], rng: &mut impl Rng) -> Result<Self> {
        let mut uniform = |shape: Vec<usize>, fan_in: usize, fan_out: usize| {
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let len = shape.iter().product();
            let data = (0..len).map(|_| T::lit(rng.random_range(-a..=a))).collect();
            Tensor::from_parts_unchecked(shape, data)
        };
        let layer = match *spec {
            LayerSpec::Dense { units } => {
                let [inputs] = *input else {
                    return Err(Error::InvalidNetwork(format!(
                        "dense expects a flat input, got {input:?}"
                    )));
                };
                if units == 0 {
                    return Err(Error::InvalidNetwork("dense layer with zero units".into()));
                }
                Layer::Dense {
                    weight: uniform(vec![units, inputs], inputs, units),
                    bias: Tensor::zeros(&[units]),
                }
            }
            LayerSpec::Conv2d { filters, kernel, stride, padding } => {
                let (c, _, _) = spatial(input, "conv2d")?;
                if filters == 0 || kernel == 0 || stride == 0 {
                    return Err(Error::InvalidNetwork(
                        "conv2d filters, kernel and stride must be positive".into(),
                    ));
                }
                Layer::Conv2d {
                    weight: uniform(
                        vec![filters, c, kernel, kernel],
                        c * kernel * kernel,
                        filters * kernel * kernel,
                    ),
                    bias: Tensor::zeros(&[filters]),
                    stride,
                    padding,
                }
            }
            LayerSpec::Relu => Layer::Relu,
            LayerSpec::Avgpool2d { size, stride } => Layer::AvgPool2d { size, stride },
            LayerSpec::Flatten => Layer::Flatten,
        };
        layer.output_shape(input)?;
        Ok(layer)
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Layer::Dense { .. } => "dense",
            Layer::Conv2d { .. } => "conv2d",
            Layer::Relu => "relu",
            Layer::AvgPool2d { .. } => "avgpool2d",
            Layer::Flatten => "flatten",
        }
    }

    pub fn params(&self) -> Option<(&Tensor<T>, &Tensor<T>)> {
        match self {
            Layer::Dense { weight, bias } | Layer::Conv2d { weight, bias, .. } => Some((weight, bias)),
            _ => None,
        }
    }

    pub fn params_mut(&mut self) -> Option<(&mut Tensor<T>, &mut Tensor<T>)> {
        match self {
            Layer::Dense { weight, bias } | Layer::Conv2d { weight, bias, .. } => Some((weight, bias)),
            _ => None,
        }
    }

    pub(crate) fn conv_geometry(&self, input: &[usize]) -> Result<ConvGeometry> {
        let Layer::Conv2d { weight, stride, padding, .. } = self else {
            unreachable!("conv_geometry on non-conv layer")
        };
        let (c, h, w) = spatial(input, "conv2d")?;
        let ws = weight.shape();
        let (out_c, in_c, kh, kw) = (ws[0], ws[1], ws[2], ws[3]);
        if in_c != c {
            return Err(Error::InvalidNetwork(format!(
                "conv2d kernel expects {in_c} channels, input has {c}"
            )));
        }
        let stride = *stride;
        let (out_h, pad_top, out_w, pad_left) = match padding {
            Padding::Valid => {
                if h < kh || w < kw {
                    return Err(Error::InvalidNetwork(format!(
                        "conv2d kernel {kh}x{kw} larger than input {h}x{w}"
                    )));
                }
                ((h - kh) / stride + 1, 0, (w - kw) / stride + 1, 0)
            }
            Padding::Same => {
                let (oh, pt) = same_padding(h, kh, stride);
                let (ow, pl) = same_padding(w, kw, stride);
                (oh, pt, ow, pl)
            }
        };
        Ok(ConvGeometry {
            in_c,
            in_h: h,
            in_w: w,
            out_c,
            out_h,
            out_w,
            kh,
            kw,
            stride,
            pad_top,
            pad_left,
        })
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match self {
            Layer::Dense { weight, bias } => {
                let ws = weight.shape();
                if ws.len() != 2 || bias.shape() != [ws[0]] {
                    return Err(Error::InvalidNetwork("dense weight must be (out, in)".into()));
                }
                if input != [ws[1]] {
                    return Err(Error::ShapeMismatch { expected: vec![ws[1]], got: input.to_vec() });
                }
                Ok(vec![ws[0]])
            }
            Layer::Conv2d { weight, bias, stride, .. } => {
                if weight.shape().len() != 4 || bias.shape() != [weight.shape()[0]] {
                    return Err(Error::InvalidNetwork(
                        "conv2d weight must be (outC, inC, kH, kW)".into(),
                    ));
                }
                if *stride == 0 {
                    return Err(Error::InvalidNetwork("conv2d stride must be >= 1".into()));
                }
                let g = self.conv_geometry(input)?;
                Ok(vec![g.out_c, g.out_h, g.out_w])
            }
            Layer::Relu => Ok(input.to_vec()),
            Layer::AvgPool2d { size, stride } => {
                let (c, h, w) = spatial(input, "avgpool2d")?;
                if *size == 0 || *stride == 0 || h < *size || w < *size {
                    return Err(Error::InvalidNetwork(format!(
                        "avgpool2d size {size} stride {stride} invalid for {h}x{w}"
                    )));
                }
                Ok(vec![c, (h - size) / stride + 1, (w - size) / stride + 1])
            }
            Layer::Flatten => Ok(vec![input.iter().product()]),
        }
    }

    /// Forward pass for an input of the shape validated at network construction.
    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        match self {
            Layer::Dense { weight, bias } => {
                let mut y = self.dense_linear(weight, x.data());
                for (v, &b) in y.iter_mut().zip(bias.data()) {
                    *v += b;
                }
                Tensor::from_parts_unchecked(vec![y.len()], y)
            }
            Layer::Conv2d { bias, .. } => {
                let g = self.conv_geometry(x.shape()).expect("validated conv input");
                let mut y = self.conv_linear(&g, x.data());
                let plane = g.out_h * g.out_w;
                for (o, &b) in bias.data().iter().enumerate() {
                    y[o * plane..(o + 1) * plane].iter_mut().for_each(|v| *v += b);
                }
                Tensor::from_parts_unchecked(vec![g.out_c, g.out_h, g.out_w], y)
            }
            Layer::Relu => x.map(|v| if v > T::zero() { v } else { T::zero() }),
            Layer::AvgPool2d { size, stride } => {
                let (shape, y) = avgpool_forward(x.shape(), x.data(), *size, *stride);
                Tensor::from_parts_unchecked(shape, y)
            }
            Layer::Flatten => Tensor::from_parts_unchecked(vec![x.len()], x.data().to_vec()),
        }
    }

    /// Back-propagates `grad_out` through the layer evaluated at `x`.
    ///
    /// Returns the gradient with respect to `x` and, for parameterised layers,
    /// with respect to the weight and bias.
    pub fn backward(
        &self,
        x: &Tensor<T>,
        grad_out: &Tensor<T>,
        want_params: bool,
    ) -> (Tensor<T>, Option<ParamGrad<T>>) {
        match self {
            Layer::Dense { weight, .. } => {
                let gx = self.dense_adjoint(weight, grad_out.data());
                let pg = want_params.then(|| {
                    let (out, inp) = (weight.shape()[0], weight.shape()[1]);
                    let mut gw = vec![T::zero(); out * inp];
                    for (o, &g) in grad_out.data().iter().enumerate() {
                        if g == T::zero() {
                            continue;
                        }
                        for (w, &xi) in gw[o * inp..(o + 1) * inp].iter_mut().zip(x.data()) {
                            *w = g * xi;
                        }
                    }
                    ParamGrad {
                        weight: Tensor::from_parts_unchecked(vec![out, inp], gw),
                        bias: grad_out.clone(),
                    }
                });
                (Tensor::from_parts_unchecked(x.shape().to_vec(), gx), pg)
            }
            Layer::Conv2d { weight, .. } => {
                let g = self.conv_geometry(x.shape()).expect("validated conv input");
                let gx = self.conv_adjoint(&g, grad_out.data());
                let pg = want_params.then(|| {
                    let gw = conv_weight_grad(&g, x.data(), grad_out.data());
                    let plane = g.out_h * g.out_w;
                    let gb = (0..g.out_c)
                        .map(|o| grad_out.data()[o * plane..(o + 1) * plane].iter().copied().sum())
                        .collect();
                    ParamGrad {
                        weight: Tensor::from_parts_unchecked(weight.shape().to_vec(), gw),
                        bias: Tensor::from_parts_unchecked(vec![g.out_c], gb),
                    }
                });
                (Tensor::from_parts_unchecked(x.shape().to_vec(), gx), pg)
            }
            Layer::Relu => {
                let data = x
                    .data()
                    .iter()
                    .zip(grad_out.data())
                    .map(|(&xi, &g)| if xi > T::zero() { g } else { T::zero() })
                    .collect();
                (Tensor::from_parts_unchecked(x.shape().to_vec(), data), None)
            }
            Layer::AvgPool2d { size, stride } => {
                let gx = avgpool_adjoint(x.shape(), grad_out.data(), *size, *stride);
                (Tensor::from_parts_unchecked(x.shape().to_vec(), gx), None)
            }
            Layer::Flatten => (
                Tensor::from_parts_unchecked(x.shape().to_vec(), grad_out.data().to_vec()),
                None,
            ),
        }
    }

    /// Linear part of the layer (bias dropped) applied to a flat vector.
    pub(crate) fn linear_apply(&self, input: &[usize], v: &[T]) -> Vec<T> {
        match self {
            Layer::Dense { weight, .. } => self.dense_linear(weight, v),
            Layer::Conv2d { .. } => {
                let g = self.conv_geometry(input).expect("validated conv input");
                self.conv_linear(&g, v)
            }
            Layer::AvgPool2d { size, stride } => avgpool_forward(input, v, *size, *stride).1,
            Layer::Flatten => v.to_vec(),
            Layer::Relu => unreachable!("relu is not linear"),
        }
    }

    /// Transpose of [`Layer::linear_apply`].
    pub(crate) fn linear_adjoint(&self, input: &[usize], v: &[T]) -> Vec<T> {
        match self {
            Layer::Dense { weight, .. } => self.dense_adjoint(weight, v),
            Layer::Conv2d { .. } => {
                let g = self.conv_geometry(input).expect("validated conv input");
                self.conv_adjoint(&g, v)
            }
            Layer::AvgPool2d { size, stride } => avgpool_adjoint(input, v, *size, *stride),
            Layer::Flatten => v.to_vec(),
            Layer::Relu => unreachable!("relu is not linear"),
        }
    }

    fn dense_linear(&self, weight: &Tensor<T>, x: &[T]) -> Vec<T> {
        let inp = weight.shape()[1];
        weight
            .data()
            .chunks_exact(inp)
            .map(|row| row.iter().zip(x).map(|(&w, &xi)| w * xi).sum())
            .collect()
    }

    fn dense_adjoint(&self, weight: &Tensor<T>, g: &[T]) -> Vec<T> {
        let inp = weight.shape()[1];
        let mut gx = vec![T::zero(); inp];
        for (row, &go) in weight.data().chunks_exact(inp).zip(g) {
            if go == T::zero() {
                continue;
            }
            for (acc, &w) in gx.iter_mut().zip(row) {
                *acc += w * go;
            }
        }
        gx
    }

    fn conv_linear(&self, g: &ConvGeometry, x: &[T]) -> Vec<T> {
        let Layer::Conv2d { weight, .. } = self else { unreachable!() };
        let w = weight.data();
        let mut y = vec![T::zero(); g.out_c * g.out_h * g.out_w];
        for o in 0..g.out_c {
            for c in 0..g.in_c {
                let xplane = &x[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
                for p in 0..g.kh {
                    for q in 0..g.kw {
                        let wv = w[((o * g.in_c + c) * g.kh + p) * g.kw + q];
                        for i in 0..g.out_h {
                            let row = (i * g.stride + p) as isize - g.pad_top as isize;
                            if row < 0 || row >= g.in_h as isize {
                                continue;
                            }
                            let xrow = &xplane[row as usize * g.in_w..(row as usize + 1) * g.in_w];
                            let yrow = &mut y[(o * g.out_h + i) * g.out_w..(o * g.out_h + i + 1) * g.out_w];
                            for (j, yv) in yrow.iter_mut().enumerate() {
                                let col = (j * g.stride + q) as isize - g.pad_left as isize;
                                if col >= 0 && col < g.in_w as isize {
                                    *yv += wv * xrow[col as usize];
                                }
                            }
                        }
                    }
                }
            }
        }
        y
    }

    fn conv_adjoint(&self, g: &ConvGeometry, gy: &[T]) -> Vec<T> {
        let Layer::Conv2d { weight, .. } = self else { unreachable!() };
        let w = weight.data();
        let mut gx = vec![T::zero(); g.in_c * g.in_h * g.in_w];
        for o in 0..g.out_c {
            for c in 0..g.in_c {
                let xplane = &mut gx[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
                for p in 0..g.kh {
                    for q in 0..g.kw {
                        let wv = w[((o * g.in_c + c) * g.kh + p) * g.kw + q];
                        for i in 0..g.out_h {
                            let row = (i * g.stride + p) as isize - g.pad_top as isize;
                            if row < 0 || row >= g.in_h as isize {
                                continue;
                            }
                            let grow = &gy[(o * g.out_h + i) * g.out_w..(o * g.out_h + i + 1) * g.out_w];
                            let xrow = &mut xplane[row as usize * g.in_w..(row as usize + 1) * g.in_w];
                            for (j, &gv) in grow.iter().enumerate() {
                                let col = (j * g.stride + q) as isize - g.pad_left as isize;
                                if col >= 0 && col < g.in_w as isize {
                                    xrow[col as usize] += wv * gv;
                                }
                            }
                        }
                    }
                }
            }
        }
        gx
    }
}

fn conv_weight_grad<T: Real>(g: &ConvGeometry, x: &[T], gy: &[T]) -> Vec<T> {
    let mut gw = vec![T::zero(); g.out_c * g.in_c * g.kh * g.kw];
    for o in 0..g.out_c {
        for c in 0..g.in_c {
            let xplane = &x[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
            for p in 0..g.kh {
                for q in 0..g.kw {
                    let mut acc = T::zero();
                    for i in 0..g.out_h {
                        let row = (i * g.stride + p) as isize - g.pad_top as isize;
                        if row < 0 || row >= g.in_h as isize {
                            continue;
                        }
                        let grow = &gy[(o * g.out_h + i) * g.out_w..(o * g.out_h + i + 1) * g.out_w];
                        let xrow = &xplane[row as usize * g.in_w..(row as usize + 1) * g.in_w];
                        for (j, &gv) in grow.iter().enumerate() {
                            let col = (j * g.stride + q) as isize - g.pad_left as isize;
                            if col >= 0 && col < g.in_w as isize {
                                acc += gv * xrow[col as usize];
                            }
                        }
                    }
                    gw[((o * g.in_c + c) * g.kh + p) * g.kw + q] = acc;
                }
            }
        }
    }
    gw
}

fn avgpool_forward<T: Real>(shape: &[usize], x: &[T], size: usize, stride: usize) -> (Vec<usize>, Vec<T>) {
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    let (oh, ow) = ((h - size) / stride + 1, (w - size) / stride + 1);
    let inv = T::one() / T::lit((size * size) as f64);
    let mut y = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let plane = &x[ch * h * w..(ch + 1) * h * w];
        for i in 0..oh {
            for j in 0..ow {
                let mut acc = T::zero();
                for p in 0..size {
                    let row = &plane[(i * stride + p) * w..];
                    for q in 0..size {
                        acc += row[j * stride + q];
                    }
                }
                y.push(acc * inv);
            }
        }
    }
    (vec![c, oh, ow], y)
}

fn avgpool_adjoint<T: Real>(shape: &[usize], gy: &[T], size: usize, stride: usize) -> Vec<T> {
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    let (oh, ow) = ((h - size) / stride + 1, (w - size) / stride + 1);
    let inv = T::one() / T::lit((size * size) as f64);
    let mut gx = vec![T::zero(); c * h * w];
    for ch in 0..c {
        for i in 0..oh {
            for j in 0..ow {
                let g = gy[(ch * oh + i) * ow + j] * inv;
                for p in 0..size {
                    for q in 0..size {
                        gx[(ch * h + i * stride + p) * w + j * stride + q] += g;
                    }
                }
            }
        }
    }
    gx
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn same_padding_keeps_size_at_stride_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let spec = LayerSpec::Conv2d { filters: 4, kernel: 3, stride: 1, padding: Padding::Same };
        let layer = Layer::<f64>::init(&spec, &[2, 7, 5], &mut rng).unwrap();
        assert_eq!(layer.output_shape(&[2, 7, 5]).unwrap(), vec![4, 7, 5]);
        let spec = LayerSpec::Conv2d { filters: 1, kernel: 3, stride: 2, padding: Padding::Same };
        let layer = Layer::<f64>::init(&spec, &[1, 7, 8], &mut rng).unwrap();
        assert_eq!(layer.output_shape(&[1, 7, 8]).unwrap(), vec![1, 4, 4]);
    }

    #[test]
    fn valid_conv_matches_hand_computation() {
        // 1x3x3 input, single 2x2 kernel of ones: each output is a window sum.
        let layer = Layer::Conv2d {
            weight: Tensor::new(vec![1, 1, 2, 2], vec![1.0; 4]).unwrap(),
            bias: Tensor::new(vec![1], vec![0.5]).unwrap(),
            stride: 1,
            padding: Padding::Valid,
        };
        let x = Tensor::new(vec![1, 3, 3], (1..=9).map(f64::from).collect()).unwrap();
        let y = layer.forward(&x);
        assert_eq!(y.shape(), &[1, 2, 2]);
        assert_eq!(y.data(), &[12.5, 16.5, 24.5, 28.5]);
    }

    #[test]
    fn avgpool_halves_resolution() {
        let layer = Layer::<f64>::AvgPool2d { size: 2, stride: 2 };
        let x = Tensor::new(vec![1, 2, 4], vec![1.0, 3.0, 5.0, 7.0, 1.0, 3.0, 5.0, 7.0]).unwrap();
        assert_eq!(layer.forward(&x).data(), &[2.0, 6.0]);
    }

    #[test]
    fn linear_adjoint_is_transpose() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let input = [2usize, 5, 6];
        let spec = LayerSpec::Conv2d { filters: 3, kernel: 3, stride: 2, padding: Padding::Same };
        let layer = Layer::<f64>::init(&spec, &input, &mut rng).unwrap();
        let out = layer.output_shape(&input).unwrap();
        let x: Vec<f64> = (0..60).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..out.iter().product()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ax = layer.linear_apply(&input, &x);
        let aty = layer.linear_adjoint(&input, &y);
        let lhs: f64 = ax.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&aty).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
