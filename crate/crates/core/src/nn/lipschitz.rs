//! Layer-wise L2 Lipschitz bounds.
//!
//! The bound is the product of per-layer operator norms. Affine layers use
//! power iteration on `A^T A` where `A` is the layer's linear operator at the
//! network's actual input shape; for convolutions this is the operator norm of
//! the convolution itself, not of the reshaped kernel.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layer::Layer;
use super::network::Network;
use crate::scalar::Real;

const MAX_ITERS: usize = 200;
const REL_TOL: f64 = 1e-6;
const SEED: u64 = 0x5eed_1195;

/// Largest singular value of a linear map given by `apply` and its transpose `adjoint`.
pub fn spectral_norm<T: Real>(
    dim: usize,
    apply: impl Fn(&[T]) -> Vec<T>,
    adjoint: impl Fn(&[T]) -> Vec<T>,
    seed: u64,
) -> T {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<T> = (0..dim).map(|_| T::lit(rng.random_range(-1.0..1.0))).collect();
    normalize(&mut v);
    let mut sigma = T::zero();
    for _ in 0..MAX_ITERS {
        let mut w = adjoint(&apply(&v));
        let n = norm(&w);
        if n == T::zero() {
            return T::zero();
        }
        let next = n.sqrt();
        w.iter_mut().for_each(|x| *x /= n);
        v = w;
        let done = (next - sigma).abs() <= T::lit(REL_TOL) * next;
        sigma = next;
        if done {
            break;
        }
    }
    sigma
}

fn norm<T: Real>(v: &[T]) -> T {
    v.iter().map(|&x| x * x).sum::<T>().sqrt()
}

fn normalize<T: Real>(v: &mut [T]) {
    let n = norm(v);
    if n > T::zero() {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

impl<T: Real> Layer<T> {
    /// Upper bound on the L2 operator norm of this layer at the given input shape.
    pub fn lipschitz_bound(&self, input: &[usize], seed: u64) -> T {
        match self {
            Layer::Relu | Layer::Flatten => T::one(),
            Layer::AvgPool2d { size, stride } if stride >= size => T::one() / T::lit(*size as f64),
            _ => {
                let dim = input.iter().product();
                spectral_norm(dim, |v| self.linear_apply(input, v), |v| self.linear_adjoint(input, v), seed)
            }
        }
    }
}

impl<T: Real> Network<T> {
    /// Product of per-layer operator-norm bounds: an upper bound on the L2
    /// Lipschitz constant of the logit map.
    pub fn lipschitz_upper_bound(&self) -> T {
        self.layers()
            .iter()
            .enumerate()
            .map(|(i, l)| l.lipschitz_bound(self.layer_input_shape(i), SEED.wrapping_add(i as u64)))
            .fold(T::one(), |acc, b| acc * b)
    }
}
