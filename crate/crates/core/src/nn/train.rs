use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::Network;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::Tensor;

/// Minibatch SGD schedule: every learning rate is used for `epochs_per_rate` epochs, in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rates: Vec<f64>,
    pub epochs_per_rate: usize,
    pub batch_size: usize,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { learning_rates: vec![0.1, 0.01], epochs_per_rate: 6, batch_size: 16, rng_seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some((i, r)) = self.learning_rates.iter().enumerate().find(|(_, r)| !(**r > 0.0 && r.is_finite())) {
            return Err(Error::InvalidConfig(format!("learning_rates[{i}] = {r} must be > 0")));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be positive".into()));
        }
        Ok(())
    }

    pub fn total_epochs(&self) -> usize {
        self.learning_rates.len() * self.epochs_per_rate
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub learning_rate: f64,
    pub mean_loss: f64,
    /// Fraction of training examples classified correctly before each update.
    pub accuracy: f64,
}

/// Trains a copy of `net` with plain minibatch SGD on mean cross-entropy.
pub fn train<T: Real>(net: &Network<T>, inputs: &[Tensor<T>], labels: &[usize], cfg: &TrainConfig) -> Result<Network<T>> {
    Ok(train_with(net, inputs, labels, cfg, |_, _, _, _| Ok(()))?.0)
}

/// Like [`train`], with a hook that may rewrite each minibatch before the gradient step.
///
/// The hook receives the current network, the batch inputs (already copied),
/// the batch labels and an RNG stream independent of the shuffling stream.
pub fn train_with<T, H>(
    net: &Network<T>,
    inputs: &[Tensor<T>],
    labels: &[usize],
    cfg: &TrainConfig,
    mut hook: H,
) -> Result<(Network<T>, Vec<EpochStats>)>
where
    T: Real,
    H: FnMut(&Network<T>, &mut [Tensor<T>], &[usize], &mut ChaCha8Rng) -> Result<()>,
{
    cfg.validate()?;
    if inputs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if inputs.len() != labels.len() {
        return Err(Error::InvalidConfig(format!("{} inputs but {} labels", inputs.len(), labels.len())));
    }
    let mut net = net.clone();
    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut hook_rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    hook_rng.set_stream(1);

    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut stats = Vec::with_capacity(cfg.total_epochs());
    let mut epoch = 0;
    for &rate in &cfg.learning_rates {
        for _ in 0..cfg.epochs_per_rate {
            order.shuffle(&mut order_rng);
            let (mut loss_sum, mut correct) = (0.0, 0);
            for chunk in order.chunks(cfg.batch_size) {
                let mut batch: Vec<Tensor<T>> = chunk.iter().map(|&i| inputs[i].clone()).collect();
                let batch_labels: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
                hook(&net, &mut batch, &batch_labels, &mut hook_rng)?;
                let (loss, grads, ok) = net.batch_grad_params(&batch, &batch_labels)?;
                loss_sum += loss.as_f64();
                correct += ok;
                net.apply_gradients(&grads, T::lit(rate / chunk.len() as f64));
            }
            stats.push(EpochStats {
                epoch,
                learning_rate: rate,
                mean_loss: loss_sum / inputs.len() as f64,
                accuracy: correct as f64 / inputs.len() as f64,
            });
            epoch += 1;
        }
    }
    Ok((net, stats))
}

/// Fraction of `inputs` that `net` labels correctly.
pub fn accuracy<T: Real>(net: &Network<T>, inputs: &[Tensor<T>], labels: &[usize]) -> Result<f64> {
    use rayon::prelude::*;
    if inputs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let correct = inputs
        .par_iter()
        .zip(labels.par_iter())
        .map(|(x, &l)| net.classify(x).map(|p| usize::from(p == l)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum::<usize>();
    Ok(correct as f64 / inputs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::LayerSpec;
    use rand::Rng;

    fn separable(n: usize, seed: u64) -> (Vec<Tensor<f64>>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        while xs.len() < n {
            let p: [f64; 2] = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let s = p[0] + 2.0 * p[1] - 0.1;
            if s.abs() < 0.05 {
                continue;
            }
            xs.push(Tensor::from_vec(p.to_vec()));
            ys.push(usize::from(s > 0.0));
        }
        (xs, ys)
    }

    fn linear_net() -> Network<f64> {
        Network::init(&[LayerSpec::Dense { units: 2 }], &[2], 2, 1).unwrap()
    }

    #[test]
    fn separable_set_is_learned() {
        let (xs, ys) = separable(200, 5);
        let cfg = TrainConfig { learning_rates: vec![0.5, 0.1], epochs_per_rate: 30, batch_size: 10, rng_seed: 2 };
        let trained = train(&linear_net(), &xs, &ys, &cfg).unwrap();
        assert!(accuracy(&trained, &xs, &ys).unwrap() >= 0.95);
    }

    #[test]
    fn zero_epochs_is_a_no_op() {
        let (xs, ys) = separable(20, 1);
        let cfg = TrainConfig { learning_rates: vec![0.1], epochs_per_rate: 0, batch_size: 4, rng_seed: 0 };
        let net = linear_net();
        assert_eq!(train(&net, &xs, &ys, &cfg).unwrap(), net);
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let (xs, ys) = separable(64, 3);
        let cfg = TrainConfig { learning_rates: vec![0.2], epochs_per_rate: 3, batch_size: 8, rng_seed: 11 };
        let a = train(&linear_net(), &xs, &ys, &cfg).unwrap();
        let b = train(&linear_net(), &xs, &ys, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_empty_dataset_and_bad_rates() {
        let cfg = TrainConfig::default();
        assert!(matches!(train(&linear_net(), &[], &[], &cfg), Err(Error::EmptyDataset)));
        let (xs, ys) = separable(4, 0);
        let bad = TrainConfig { learning_rates: vec![0.1, -1.0], ..TrainConfig::default() };
        assert!(train(&linear_net(), &xs, &ys, &bad).is_err());
    }
}
