use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::layer::{Layer, LayerSpec, ParamGrad};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::{self, Tensor};

/// Feed-forward classifier `f: R^m -> R^n` with a softmax cross-entropy head.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    input_shape: Vec<usize>,
    layers: Vec<Layer<T>>,
    num_classes: usize,
    /// Input shape of every layer, plus the final output shape.
    shapes: Vec<Vec<usize>>,
}

/// Parameter gradients, one entry per layer (`None` for parameter-free layers).
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<Option<ParamGrad<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            if let (Some(a), Some(b)) = (a.as_mut(), b.as_ref()) {
                a.weight.axpy(T::one(), &b.weight);
                a.bias.axpy(T::one(), &b.bias);
            }
        }
    }

    pub fn scale(&mut self, alpha: T) {
        for g in self.layers.iter_mut().flatten() {
            g.weight.scale(alpha);
            g.bias.scale(alpha);
        }
    }

    /// Gradient tensors in the same order as [`Network::param_tensors_mut`].
    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        self.layers.iter().flatten().flat_map(|g| [&g.weight, &g.bias]).collect()
    }
}

impl<T: Real> Network<T> {
    pub fn new(input_shape: Vec<usize>, layers: Vec<Layer<T>>, num_classes: usize) -> Result<Self> {
        if input_shape.is_empty() || input_shape.iter().any(|&d| d == 0) {
            return Err(Error::InvalidNetwork(format!("bad input shape {input_shape:?}")));
        }
        if num_classes < 2 {
            return Err(Error::InvalidNetwork("need at least two classes".into()));
        }
        let mut shapes = vec![input_shape.clone()];
        for (i, layer) in layers.iter().enumerate() {
            let next = layer
                .output_shape(shapes.last().unwrap())
                .map_err(|e| Error::InvalidNetwork(format!("layer {i} ({}): {e}", layer.kind_name())))?;
            shapes.push(next);
        }
        if shapes.last().unwrap() != &[num_classes] {
            return Err(Error::InvalidNetwork(format!(
                "final output shape {:?} does not match {num_classes} classes",
                shapes.last().unwrap()
            )));
        }
        Ok(Self { input_shape, layers, num_classes, shapes })
    }

    /// Builds a network from an architecture with seeded Glorot-uniform initialisation.
    pub fn init(specs: &[LayerSpec], input_shape: &[usize], num_classes: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut shape = input_shape.to_vec();
        let mut layers = Vec::with_capacity(specs.len());
        for (i, spec) in specs.iter().enumerate() {
            let layer = Layer::init(spec, &shape, &mut rng)
                .map_err(|e| Error::InvalidNetwork(format!("layer {i}: {e}")))?;
            shape = layer.output_shape(&shape)?;
            layers.push(layer);
        }
        Self::new(input_shape.to_vec(), layers, num_classes)
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    /// Input shape seen by layer `i`.
    pub(crate) fn layer_input_shape(&self, i: usize) -> &[usize] {
        &self.shapes[i]
    }

    pub fn param_tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers
            .iter_mut()
            .filter_map(|l| l.params_mut())
            .flat_map(|(w, b)| [w, b])
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().filter_map(|l| l.params()).map(|(w, b)| w.len() + b.len()).sum()
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        if x.shape() != self.input_shape.as_slice() {
            return Err(Error::ShapeMismatch { expected: self.input_shape.clone(), got: x.shape().to_vec() });
        }
        Ok(())
    }

    fn check_label(&self, label: usize) -> Result<()> {
        if label >= self.num_classes {
            return Err(Error::LabelOutOfRange { label, classes: self.num_classes });
        }
        Ok(())
    }

    /// Raw class scores (logits).
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let mut a = x.clone();
        for layer in &self.layers {
            a = layer.forward(&a);
        }
        Ok(a)
    }

    fn trace(&self, x: &Tensor<T>) -> Vec<Tensor<T>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.clone());
        for layer in &self.layers {
            let next = layer.forward(acts.last().unwrap());
            acts.push(next);
        }
        acts
    }

    /// `argmax` of the logits, smallest index on ties.
    pub fn classify(&self, x: &Tensor<T>) -> Result<usize> {
        Ok(self.forward(x)?.argmax())
    }

    /// Softmax cross-entropy at `label`.
    pub fn loss(&self, x: &Tensor<T>, label: usize) -> Result<T> {
        self.check_label(label)?;
        let z = self.forward(x)?;
        Ok(tensor::cross_entropy(z.data(), label))
    }

    /// Loss, gradient with respect to the input and optionally parameter gradients.
    pub fn backprop(
        &self,
        x: &Tensor<T>,
        label: usize,
        want_params: bool,
    ) -> Result<(T, Tensor<T>, Option<Gradients<T>>)> {
        self.backprop_predict(x, label, want_params).map(|(l, g, p, _)| (l, g, p))
    }

    #[allow(clippy::type_complexity)]
    fn backprop_predict(
        &self,
        x: &Tensor<T>,
        label: usize,
        want_params: bool,
    ) -> Result<(T, Tensor<T>, Option<Gradients<T>>, usize)> {
        self.check_input(x)?;
        self.check_label(label)?;
        let acts = self.trace(x);
        let logits = acts.last().unwrap().data();
        let loss = tensor::cross_entropy(logits, label);
        let predicted = tensor::argmax(logits);
        let mut probs = tensor::softmax(logits);
        probs[label] -= T::one();
        let mut grad = Tensor::from_parts_unchecked(vec![self.num_classes], probs);
        let mut param_grads = vec![None; self.layers.len()];
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let (gx, pg) = layer.backward(&acts[i], &grad, want_params);
            param_grads[i] = pg;
            grad = gx;
        }
        Ok((loss, grad, want_params.then_some(Gradients { layers: param_grads }), predicted))
    }

    /// Exact gradient of the loss with respect to the input.
    pub fn grad_input(&self, x: &Tensor<T>, label: usize) -> Result<Tensor<T>> {
        Ok(self.backprop(x, label, false)?.1)
    }

    pub fn grad_params(&self, x: &Tensor<T>, label: usize) -> Result<Gradients<T>> {
        Ok(self.backprop(x, label, true)?.2.unwrap())
    }

    /// Summed loss and summed parameter gradients over a batch.
    ///
    /// Per-example work runs in parallel; the reduction is sequential in batch
    /// order so results do not depend on scheduling.
    pub fn batch_grad_params(&self, inputs: &[Tensor<T>], labels: &[usize]) -> Result<(T, Gradients<T>, usize)> {
        if inputs.len() != labels.len() || inputs.is_empty() {
            return Err(Error::InvalidConfig("batch inputs/labels mismatch or empty".into()));
        }
        let parts: Vec<(T, Gradients<T>, bool)> = inputs
            .par_iter()
            .zip(labels.par_iter())
            .map(|(x, &l)| {
                let (loss, _, g, predicted) = self.backprop_predict(x, l, true)?;
                Ok((loss, g.unwrap(), predicted == l))
            })
            .collect::<Result<_>>()?;
        let mut iter = parts.into_iter();
        let (mut loss, mut total, c0) = iter.next().unwrap();
        let mut correct = usize::from(c0);
        for (l, g, c) in iter {
            loss += l;
            total.add_assign(&g);
            correct += usize::from(c);
        }
        Ok((loss, total, correct))
    }

    /// `params -= rate * grads`.
    pub fn apply_gradients(&mut self, grads: &Gradients<T>, rate: T) {
        for (layer, g) in self.layers.iter_mut().zip(&grads.layers) {
            if let (Some((w, b)), Some(g)) = (layer.params_mut(), g) {
                w.axpy(-rate, &g.weight);
                b.axpy(-rate, &g.bias);
            }
        }
    }

    /// Converts parameters to another scalar type.
    pub fn cast<U: Real>(&self) -> Network<U> {
        let cast = |t: &Tensor<T>| {
            Tensor::from_parts_unchecked(t.shape().to_vec(), t.data().iter().map(|&v| U::lit(v.as_f64())).collect())
        };
        let layers = self
            .layers
            .iter()
            .map(|l| match l {
                Layer::Dense { weight, bias } => Layer::Dense { weight: cast(weight), bias: cast(bias) },
                Layer::Conv2d { weight, bias, stride, padding } => Layer::Conv2d {
                    weight: cast(weight),
                    bias: cast(bias),
                    stride: *stride,
                    padding: *padding,
                },
                Layer::Relu => Layer::Relu,
                Layer::AvgPool2d { size, stride } => Layer::AvgPool2d { size: *size, stride: *stride },
                Layer::Flatten => Layer::Flatten,
            })
            .collect();
        Network { input_shape: self.input_shape.clone(), layers, num_classes: self.num_classes, shapes: self.shapes.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(w: Vec<f64>, b: Vec<f64>, out: usize, inp: usize) -> Layer<f64> {
        Layer::Dense { weight: Tensor::new(vec![out, inp], w).unwrap(), bias: Tensor::new(vec![out], b).unwrap() }
    }

    #[test]
    fn identity_dense_forward() {
        let net = Network::new(vec![2], vec![dense(vec![1.0, 0.0, 0.0, 1.0], vec![0.0, 0.0], 2, 2)], 2).unwrap();
        let y = net.forward(&Tensor::from_vec(vec![1.0, 2.0])).unwrap();
        assert_eq!(y.data(), &[1.0, 2.0]);
    }

    #[test]
    fn hand_linear_forward() {
        let net = Network::new(vec![2], vec![dense(vec![1.0, 0.0, 0.0, -1.0], vec![0.0, 1.0], 2, 2)], 2).unwrap();
        let y = net.forward(&Tensor::from_vec(vec![3.0, 5.0])).unwrap();
        assert_eq!(y.data(), &[3.0, -4.0]);
    }

    #[test]
    fn rejects_wrong_input_shape_and_label() {
        let net = Network::new(vec![2], vec![dense(vec![1.0; 4], vec![0.0; 2], 2, 2)], 2).unwrap();
        assert!(matches!(net.forward(&Tensor::from_vec(vec![1.0])), Err(Error::ShapeMismatch { .. })));
        assert!(matches!(
            net.loss(&Tensor::from_vec(vec![1.0, 1.0]), 2),
            Err(Error::LabelOutOfRange { .. })
        ));
    }

    #[test]
    fn rejects_unchained_layers() {
        let r = Network::new(vec![3], vec![dense(vec![1.0; 4], vec![0.0; 2], 2, 2)], 2);
        assert!(r.is_err());
        let r = Network::new(vec![2], vec![dense(vec![1.0; 6], vec![0.0; 3], 3, 2)], 2);
        assert!(r.is_err());
    }

    #[test]
    fn single_dense_gradient_closed_form() {
        // grad_x = W^T (softmax(z) - onehot)
        let w = vec![0.3, -0.2, 0.5, 0.1, 0.4, -0.7];
        let net = Network::new(vec![2], vec![dense(w.clone(), vec![0.1, 0.0, -0.1], 3, 2)], 3).unwrap();
        let x = Tensor::from_vec(vec![0.7, -1.2]);
        let z = net.forward(&x).unwrap();
        let mut p = tensor::softmax(z.data());
        p[1] -= 1.0;
        let expected = [
            w[0] * p[0] + w[2] * p[1] + w[4] * p[2],
            w[1] * p[0] + w[3] * p[1] + w[5] * p[2],
        ];
        let g = net.grad_input(&x, 1).unwrap();
        for (a, b) in g.data().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_weight_gradient_is_constant() {
        let net = Network::new(vec![2], vec![dense(vec![0.0; 4], vec![0.3, -0.3], 2, 2)], 2).unwrap();
        let g1 = net.grad_input(&Tensor::from_vec(vec![1.0, 2.0]), 0).unwrap();
        let g2 = net.grad_input(&Tensor::from_vec(vec![-5.0, 0.5]), 0).unwrap();
        assert_eq!(g1, g2);
        assert!(g1.data().iter().all(|&v| v == 0.0));
        let (loss, _, pg) = net.backprop(&Tensor::from_vec(vec![1.0, 2.0]), 0, true).unwrap();
        let p = tensor::softmax(&[0.3f64, -0.3]);
        assert!((loss + p[0].ln()).abs() < 1e-15);
        assert!((pg.unwrap().layers[0].as_ref().unwrap().bias.data()[0] - (p[0] - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn relu_only_network_has_no_parameter_gradients() {
        let net = Network::<f64>::new(vec![2], vec![Layer::Relu], 2).unwrap();
        let g = net.grad_params(&Tensor::from_vec(vec![0.5, -0.5]), 0).unwrap();
        assert!(g.tensors().is_empty());
        assert_eq!(net.num_params(), 0);
    }

    #[test]
    fn duplicated_batch_doubles_gradient() {
        let net = Network::<f64>::init(
            &[LayerSpec::Dense { units: 4 }, LayerSpec::Relu, LayerSpec::Dense { units: 3 }],
            &[5],
            3,
            9,
        )
        .unwrap();
        let x = Tensor::from_vec(vec![0.1, 0.2, -0.3, 0.4, 0.9]);
        let (_, single, _) = net.batch_grad_params(&[x.clone()], &[2]).unwrap();
        let (_, double, _) = net.batch_grad_params(&[x.clone(), x], &[2, 2]).unwrap();
        for (a, b) in single.tensors().iter().zip(double.tensors()) {
            for (&u, &v) in a.data().iter().zip(b.data()) {
                assert!((2.0 * u - v).abs() <= 1e-15 * (1.0 + v.abs()));
            }
        }
    }
}
