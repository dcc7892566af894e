//! Filtered sub-models, vote and score ensembles, and margin certificates.

use std::path::PathBuf;
use std::sync::OnceLock;

use rand::RngCore;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attacks::{run_attack, AttackConfig, Attackable, Bpda};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::filters::FilterSpec;
use crate::image::{clamp01, Image};
use crate::nn::{train_with, EpochStats, LayerSpec, Network, TrainConfig};
use crate::scalar::Real;
use crate::tensor::{self, Tensor};

/// A front filter followed by the network trained on its output.
#[derive(Debug, Clone)]
pub struct SubModel<T> {
    pub name: String,
    pub filter: FilterSpec,
    pub net: Network<T>,
    lipschitz: OnceLock<T>,
}

impl<T: Real> SubModel<T> {
    /// Checks that `net` accepts the filter's output for images of `image_shape`.
    pub fn new(name: impl Into<String>, filter: FilterSpec, net: Network<T>, image_shape: [usize; 3]) -> Result<Self> {
        let out = filter.output_shape(image_shape)?;
        if net.input_shape() != out {
            return Err(Error::ShapeMismatch { expected: out.to_vec(), got: net.input_shape().to_vec() });
        }
        Ok(Self { name: name.into(), filter, net, lipschitz: OnceLock::new() })
    }

    pub fn filtered(&self, x: &Image<T>) -> Result<Tensor<T>> {
        Ok(self.filter.apply(x)?.to_tensor())
    }

    pub fn logits(&self, x: &Image<T>) -> Result<Tensor<T>> {
        self.net.forward(&self.filtered(x)?)
    }

    pub fn probabilities(&self, x: &Image<T>) -> Result<Vec<T>> {
        Ok(tensor::softmax(self.logits(x)?.data()))
    }

    /// Lipschitz bound of the network, computed once.
    pub fn lipschitz(&self) -> T {
        *self.lipschitz.get_or_init(|| self.net.lipschitz_upper_bound())
    }
}

impl<T: PartialEq> PartialEq for SubModel<T> {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.filter == other.filter && self.net == other.net
    }
}

impl<T: Real> Attackable<T> for SubModel<T> {
    fn predict(&self, x: &Image<T>) -> Result<usize> {
        Ok(self.logits(x)?.argmax())
    }

    fn loss_gradient(&self, x: &Image<T>, label: usize, bpda: Bpda) -> Result<Vec<T>> {
        if self.filter == FilterSpec::Identity {
            return Ok(self.net.grad_input(&x.to_tensor(), label)?.into_data());
        }
        let mode = bpda.mode().ok_or_else(|| {
            Error::InvalidConfig(format!("sub-model `{}`: gradients through a filter need bpda identity or adjoint", self.name))
        })?;
        let g = self.net.grad_input(&self.filtered(x)?, label)?;
        Ok(self.filter.bpda_backward(x.shape(), &g, mode)?.into_data())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnsembleMode {
    #[default]
    Vote,
    Score,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble<T> {
    submodels: Vec<SubModel<T>>,
    pub mode: EnsembleMode,
}

impl<T: Real> Ensemble<T> {
    pub fn new(submodels: Vec<SubModel<T>>, mode: EnsembleMode) -> Result<Self> {
        let first = submodels.first().ok_or(Error::InvalidNetwork("ensemble needs at least one sub-model".into()))?;
        let n = first.net.num_classes();
        if let Some(sm) = submodels.iter().find(|s| s.net.num_classes() != n) {
            return Err(Error::InvalidNetwork(format!(
                "sub-model `{}` has {} classes, expected {n}",
                sm.name,
                sm.net.num_classes()
            )));
        }
        Ok(Self { submodels, mode })
    }

    pub fn submodels(&self) -> &[SubModel<T>] {
        &self.submodels
    }

    pub fn num_classes(&self) -> usize {
        self.submodels[0].net.num_classes()
    }

    pub fn with_mode(&self, mode: EnsembleMode) -> Self {
        Self { mode, ..self.clone() }
    }

    /// Per-sub-model softmax outputs, in sub-model order.
    pub fn probabilities(&self, x: &Image<T>) -> Result<Vec<Vec<T>>> {
        self.submodels.par_iter().map(|s| s.probabilities(x)).collect()
    }

    pub fn labels(&self, x: &Image<T>) -> Result<Vec<usize>> {
        Ok(self.probabilities(x)?.iter().map(|p| tensor::argmax(p)).collect())
    }

    pub fn mean_probabilities(&self, x: &Image<T>) -> Result<Vec<T>> {
        Ok(mean(&self.probabilities(x)?))
    }

    pub fn predict_with(&self, x: &Image<T>, mode: EnsembleMode) -> Result<usize> {
        let probs = self.probabilities(x)?;
        let avg = mean(&probs);
        Ok(match mode {
            EnsembleMode::Score => tensor::argmax(&avg),
            EnsembleMode::Vote => {
                let labels: Vec<usize> = probs.iter().map(|p| tensor::argmax(p)).collect();
                vote(&labels, &avg)
            }
        })
    }

    /// True when every sub-model gives the same label.
    pub fn is_stable(&self, x: &Image<T>) -> Result<bool> {
        let labels = self.labels(x)?;
        Ok(labels.iter().all(|&l| l == labels[0]))
    }
}

fn mean<T: Real>(rows: &[Vec<T>]) -> Vec<T> {
    let k = T::lit(rows.len() as f64);
    let mut acc = vec![T::zero(); rows[0].len()];
    for r in rows {
        acc.iter_mut().zip(r).for_each(|(a, &v)| *a += v);
    }
    acc.iter_mut().for_each(|a| *a /= k);
    acc
}

/// Most frequent label; ties go to the highest mean score, then the smallest label.
pub fn vote<T: Real>(labels: &[usize], mean_scores: &[T]) -> usize {
    let mut counts = vec![0usize; mean_scores.len()];
    labels.iter().for_each(|&l| counts[l] += 1);
    let top = *counts.iter().max().unwrap();
    let mut best: Option<usize> = None;
    for (l, &c) in counts.iter().enumerate() {
        if c == top && best.is_none_or(|b| mean_scores[l] > mean_scores[b]) {
            best = Some(l);
        }
    }
    best.unwrap()
}

impl<T: Real> Attackable<T> for Ensemble<T> {
    fn predict(&self, x: &Image<T>) -> Result<usize> {
        self.predict_with(x, self.mode)
    }

    /// Sum of the sub-models' BPDA gradients.
    fn loss_gradient(&self, x: &Image<T>, label: usize, bpda: Bpda) -> Result<Vec<T>> {
        let grads: Vec<Vec<T>> = self.submodels.par_iter().map(|s| s.loss_gradient(x, label, bpda)).collect::<Result<_>>()?;
        let mut sum = vec![T::zero(); x.data().len()];
        for g in &grads {
            sum.iter_mut().zip(g).for_each(|(a, &v)| *a += v);
        }
        Ok(sum)
    }
}

/// Top logit minus the best other logit, with the top chosen as in `classify`.
pub fn logit_margin<T: Real>(logits: &[T]) -> T {
    let l = tensor::argmax(logits);
    let other = logits.iter().enumerate().filter(|&(i, _)| i != l).map(|(_, &v)| v).fold(T::neg_infinity(), T::max);
    if other == T::neg_infinity() {
        T::infinity()
    } else {
        logits[l] - other
    }
}

pub fn margin<T: Real>(net: &Network<T>, z: &Tensor<T>) -> Result<T> {
    Ok(logit_margin(net.forward(z)?.data()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessCertificate<T> {
    pub submodel_name: String,
    pub margin: T,
    pub lipschitz: T,
    /// Certified L2 radius in the network's input space.
    pub radius: T,
}

/// `margin / (sqrt(2) * lipschitz)`, or zero without a positive margin.
pub fn certified_radius<T: Real>(margin: T, lipschitz: T) -> T {
    if margin > T::zero() {
        margin / (T::SQRT_2() * lipschitz)
    } else {
        T::zero()
    }
}

/// Certificate for the filtered input `filter(x)`.
pub fn certify_submodel<T: Real>(sm: &SubModel<T>, x: &Image<T>) -> Result<RobustnessCertificate<T>> {
    let m = margin(&sm.net, &sm.filtered(x)?)?;
    let lipschitz = sm.lipschitz();
    Ok(RobustnessCertificate { submodel_name: sm.name.clone(), margin: m, lipschitz, radius: certified_radius(m, lipschitz) })
}

/// Bound on the product of two sub-models' sensitivities below which they cannot both be flipped.
pub fn pairwise_bound<T: Real>(a: &RobustnessCertificate<T>, b: &RobustnessCertificate<T>) -> T {
    if a.margin > T::zero() && b.margin > T::zero() {
        a.margin * b.margin / (T::lit(2.0) * a.lipschitz * b.lipschitz)
    } else {
        T::zero()
    }
}

/// Trains one network on `filter(image)` for every training image.
pub fn train_submodel<T: Real>(
    name: impl Into<String>,
    filter: FilterSpec,
    arch: &[LayerSpec],
    data: &Dataset<T>,
    cfg: &TrainConfig,
    init_seed: u64,
) -> Result<(SubModel<T>, Vec<EpochStats>)> {
    let shape = data.image_shape().ok_or(Error::EmptyDataset)?;
    let inputs = data.filtered_tensors(&filter)?;
    let init = Network::init(arch, &filter.output_shape(shape)?, data.num_classes, init_seed)?;
    let (net, stats) = train_with(&init, &inputs, &data.labels, cfg, |_, _, _, _| Ok(()))?;
    Ok((SubModel::new(name, filter, net, shape)?, stats))
}

/// Trains `count` identity-filter networks on inputs with fresh Gaussian pixel noise each batch.
///
/// Sub-model `k` uses initialisation seed `seed + k` and shuffling seed
/// `cfg.rng_seed + k`.
pub fn gaussian_noise_submodels<T: Real>(
    arch: &[LayerSpec],
    data: &Dataset<T>,
    sigma: f64,
    count: usize,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<Vec<(SubModel<T>, Vec<EpochStats>)>> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidConfig(format!("noise sigma {sigma} must be >= 0")));
    }
    let shape = data.image_shape().ok_or(Error::EmptyDataset)?;
    let inputs: Vec<Tensor<T>> = data.images.iter().map(Image::to_tensor).collect();
    (0..count)
        .map(|k| {
            let init = Network::init(arch, &shape, data.num_classes, seed.wrapping_add(k as u64))?;
            let cfg = TrainConfig { rng_seed: cfg.rng_seed.wrapping_add(k as u64), ..cfg.clone() };
            let (net, stats) = train_with(&init, &inputs, &data.labels, &cfg, |_, batch, _, rng| {
                if sigma > 0.0 {
                    let normal = Normal::new(0.0, sigma).expect("sigma is finite");
                    for t in batch.iter_mut() {
                        t.data_mut().iter_mut().for_each(|v| *v = clamp01(*v + T::lit(normal.sample(rng))));
                    }
                }
                Ok(())
            })?;
            Ok((SubModel::new(format!("gauss{k}"), FilterSpec::Identity, net, shape)?, stats))
        })
        .collect()
}

/// Minibatch SGD where every batch is replaced by adversarial examples against the current network.
pub fn adversarial_train<T: Real>(
    arch: &[LayerSpec],
    data: &Dataset<T>,
    attack: &AttackConfig,
    cfg: &TrainConfig,
    init_seed: u64,
) -> Result<(Network<T>, Vec<EpochStats>)> {
    attack.validate()?;
    let [c, h, w] = data.image_shape().ok_or(Error::EmptyDataset)?;
    let inputs: Vec<Tensor<T>> = data.images.iter().map(Image::to_tensor).collect();
    let init = Network::init(arch, &[c, h, w], data.num_classes, init_seed)?;
    train_with(&init, &inputs, &data.labels, cfg, |net, batch, labels, rng: &mut ChaCha8Rng| {
        let seeds: Vec<u64> = batch.iter().map(|_| rng.next_u64()).collect();
        let adv: Vec<Tensor<T>> = batch
            .par_iter()
            .zip(labels.par_iter())
            .zip(seeds.par_iter())
            .map(|((t, &l), &s)| {
                let x = Image::new(c, h, w, t.data().to_vec())?;
                let cfg = AttackConfig { rng_seed: s, ..attack.clone() };
                Ok(run_attack(net, &x, l, &cfg, 0)?.adversarial.to_tensor())
            })
            .collect::<Result<_>>()?;
        batch.clone_from_slice(&adv);
        Ok(())
    })
}

/// Discretize, low-pass and 16-colour octree: the least correlated filter trio.
pub fn min_correlated_filters() -> Vec<(String, FilterSpec)> {
    vec![
        ("discretize".into(), FilterSpec::Discretize),
        ("lowpass".into(), FilterSpec::LowPass { sigma: crate::filters::DEFAULT_SIGMA }),
        ("octree16".into(), FilterSpec::OctreeQuantize { max_colors: 16, depth: crate::filters::DEFAULT_OCTREE_DEPTH }),
    ]
}

/// Discretize, high-pass and grayscale: the most correlated filter trio.
pub fn max_correlated_filters() -> Vec<(String, FilterSpec)> {
    vec![
        ("discretize".into(), FilterSpec::Discretize),
        ("highpass".into(), FilterSpec::HighPass { sigma: crate::filters::DEFAULT_SIGMA }),
        ("grayscale".into(), FilterSpec::Grayscale),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub name: String,
    pub filter: FilterSpec,
    /// Model file, relative to the manifest's directory unless absolute.
    pub model: PathBuf,
}

/// On-disk description of an ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleManifest {
    #[serde(default)]
    pub mode: EnsembleMode,
    pub image_shape: [usize; 3],
    pub submodels: Vec<ManifestEntry>,
}

impl EnsembleManifest {
    /// Loads every model, resolving relative paths against `base`.
    pub fn load<T: Real>(&self, base: &std::path::Path) -> Result<Ensemble<T>> {
        let subs = self
            .submodels
            .iter()
            .map(|e| {
                let path = if e.model.is_absolute() { e.model.clone() } else { base.join(&e.model) };
                let net = crate::nn::load_network(&path).map_err(|err| Error::DataFile {
                    path: path.display().to_string(),
                    msg: err.to_string(),
                })?;
                SubModel::new(e.name.clone(), e.filter, net, self.image_shape)
            })
            .collect::<Result<_>>()?;
        Ensemble::new(subs, self.mode)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Layer;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    /// Constant-output network on 1x1x1 images: logits are `bias`.
    fn constant(name: &str, bias: Vec<f64>) -> SubModel<f64> {
        let n = bias.len();
        let layers = vec![
            Layer::Flatten,
            Layer::Dense { weight: Tensor::zeros(&[n, 1]), bias: Tensor::from_vec(bias) },
        ];
        let net = Network::new(vec![1, 1, 1], layers, n).unwrap();
        SubModel::new(name, FilterSpec::Identity, net, [1, 1, 1]).unwrap()
    }

    fn pixel() -> Image<f64> {
        Image::filled(1, 1, 1, 0.5).unwrap()
    }

    #[test]
    fn unanimous_and_majority_votes() {
        let e = Ensemble::new(
            vec![constant("a", vec![0.0, 0.0, 0.0, 5.0]), constant("b", vec![0.0, 0.0, 0.0, 1.0])],
            EnsembleMode::Vote,
        )
        .unwrap();
        assert_eq!(e.predict(&pixel()).unwrap(), 3);
        assert!(e.is_stable(&pixel()).unwrap());

        let e = Ensemble::new(
            vec![
                constant("a", vec![0.0, 1.0, 0.0]),
                constant("b", vec![0.0, 1.0, 0.0]),
                constant("c", vec![0.0, 0.0, 9.0]),
            ],
            EnsembleMode::Vote,
        )
        .unwrap();
        assert_eq!(e.predict(&pixel()).unwrap(), 1);
        assert!(!e.is_stable(&pixel()).unwrap());
        assert_eq!(e.predict_with(&pixel(), EnsembleMode::Score).unwrap(), 2);
    }

    #[test]
    fn three_way_tie_goes_to_mean_score() {
        let e = Ensemble::new(
            vec![
                constant("a", vec![1.0, 0.0, 0.0]),
                constant("b", vec![0.0, 1.0, 0.0]),
                constant("c", vec![0.0, 0.0, 4.0]),
            ],
            EnsembleMode::Vote,
        )
        .unwrap();
        assert_eq!(e.labels(&pixel()).unwrap(), vec![0, 1, 2]);
        assert_eq!(e.predict(&pixel()).unwrap(), 2);
        assert_eq!(vote(&[0, 1], &[0.5, 0.5]), 0);
    }

    #[test]
    fn rejects_mismatched_class_counts() {
        assert!(Ensemble::new(vec![constant("a", vec![0.0; 2]), constant("b", vec![0.0; 3])], EnsembleMode::Vote).is_err());
        assert!(Ensemble::<f64>::new(vec![], EnsembleMode::Vote).is_err());
    }

    #[test]
    fn margin_examples() {
        assert_eq!(logit_margin(&[2.0, 0.5, 0.0]), 1.5);
        assert_eq!(logit_margin(&[1.0, 3.0, 3.0]), 0.0);
    }

    #[test]
    fn identity_net_certificate() {
        let layers = vec![Layer::Flatten, Layer::Dense { weight: Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap(), bias: Tensor::zeros(&[2]) }];
        let net = Network::new(vec![1, 1, 2], layers, 2).unwrap();
        let sm = SubModel::new("id", FilterSpec::Identity, net, [1, 1, 2]).unwrap();
        let x = Image::<f64>::new(1, 1, 2, vec![0.9, 0.2]).unwrap();
        let c = certify_submodel(&sm, &x).unwrap();
        assert!((c.lipschitz - 1.0).abs() < 1e-9);
        assert!((c.margin - 0.7).abs() < 1e-12);
        assert!((c.radius - 0.7 / 2f64.sqrt()).abs() < 1e-9);
        let zero = RobustnessCertificate { margin: 0.0, radius: 0.0, ..c.clone() };
        assert_eq!(pairwise_bound(&c, &zero), 0.0);
        assert!((pairwise_bound(&c, &c) - c.radius * c.radius).abs() < 1e-12);
    }

    #[test]
    fn certificate_survives_random_search() {
        let arch = [LayerSpec::Flatten, LayerSpec::Dense { units: 8 }, LayerSpec::Relu, LayerSpec::Dense { units: 3 }];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for seed in 0..5 {
            let net = Network::<f64>::init(&arch, &[1, 4, 4], 3, seed).unwrap();
            let sm = SubModel::new("s", FilterSpec::Identity, net, [1, 4, 4]).unwrap();
            let x = Image::from_fn(1, 4, 4, |_, _, _| rng.random::<f64>()).unwrap();
            let c = certify_submodel(&sm, &x).unwrap();
            let z = x.to_tensor();
            let label = sm.net.classify(&z).unwrap();
            for _ in 0..500 {
                let d: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
                let n = d.iter().map(|v| v * v).sum::<f64>().sqrt();
                let s = c.radius * 0.999 * rng.random::<f64>() / n;
                let moved = Tensor::new(vec![1, 4, 4], z.data().iter().zip(&d).map(|(a, b)| a + s * b).collect()).unwrap();
                assert_eq!(sm.net.classify(&moved).unwrap(), label);
            }
        }
    }

    #[test]
    fn filter_shape_is_checked() {
        let net = Network::<f64>::init(&[LayerSpec::Flatten, LayerSpec::Dense { units: 2 }], &[3, 4, 4], 2, 0).unwrap();
        assert!(SubModel::new("g", FilterSpec::Grayscale, net.clone(), [3, 4, 4]).is_err());
        assert!(SubModel::new("i", FilterSpec::Identity, net, [3, 4, 4]).is_ok());
    }

    #[test]
    fn bpda_off_is_rejected_for_filtered_submodels() {
        let sm = constant("a", vec![0.0, 1.0]);
        assert!(sm.loss_gradient(&pixel(), 0, Bpda::Off).is_ok());
        let lp = SubModel::new("lp", FilterSpec::LowPass { sigma: 1.0 }, sm.net.clone(), [1, 1, 1]).unwrap();
        assert!(lp.loss_gradient(&pixel(), 0, Bpda::Off).is_err());
        assert!(lp.loss_gradient(&pixel(), 0, Bpda::Identity).is_ok());
    }

    fn random_members(seed: u64) -> Vec<SubModel<f64>> {
        let arch = [LayerSpec::Flatten, LayerSpec::Dense { units: 3 }];
        (0..3)
            .map(|k| {
                let net = Network::init(&arch, &[1, 2, 2], 3, seed * 7 + k).unwrap();
                SubModel::new(format!("m{k}"), FilterSpec::Identity, net, [1, 2, 2]).unwrap()
            })
            .collect()
    }

    proptest! {
        #[test]
        fn score_mode_ignores_member_order(seed in 0u64..1000, px in prop::collection::vec(0.0f64..1.0, 4)) {
            let members = random_members(seed);
            let x = Image::new(1, 2, 2, px).unwrap();
            let forward = Ensemble::new(members.clone(), EnsembleMode::Score).unwrap();
            let mut rev = members;
            rev.rotate_left(1);
            let rotated = Ensemble::new(rev, EnsembleMode::Score).unwrap();
            prop_assert_eq!(forward.predict(&x).unwrap(), rotated.predict(&x).unwrap());
        }

        #[test]
        fn vote_returns_a_member_label(seed in 0u64..1000, px in prop::collection::vec(0.0f64..1.0, 4)) {
            let e = Ensemble::new(random_members(seed), EnsembleMode::Vote).unwrap();
            let x = Image::new(1, 2, 2, px).unwrap();
            let labels = e.labels(&x).unwrap();
            prop_assert!(labels.contains(&e.predict(&x).unwrap()));
            let all_pairs = labels.iter().all(|a| labels.iter().all(|b| a == b));
            prop_assert_eq!(e.is_stable(&x).unwrap(), all_pairs);
        }

        #[test]
        fn one_flip_cannot_move_a_stable_vote(
            seed in 0u64..1000,
            px in prop::collection::vec(0.0f64..1.0, 4),
            delta in prop::collection::vec(-0.5f64..0.5, 4),
        ) {
            let e = Ensemble::new(random_members(seed), EnsembleMode::Vote).unwrap();
            let x = Image::new(1, 2, 2, px).unwrap();
            let moved = x.perturbed(&delta).unwrap();
            let (before, after) = (e.labels(&x).unwrap(), e.labels(&moved).unwrap());
            let flips = before.iter().zip(&after).filter(|(a, b)| a != b).count();
            if e.is_stable(&x).unwrap() && flips <= 1 {
                prop_assert_eq!(e.predict(&moved).unwrap(), before[0]);
            }
        }
    }

    fn tiny_data() -> Dataset<f64> {
        crate::data::synth_shapes(6, 8, 3).unwrap()
    }

    fn tiny_arch() -> Vec<LayerSpec> {
        vec![LayerSpec::Flatten, LayerSpec::Dense { units: 4 }]
    }

    fn quick_cfg() -> TrainConfig {
        TrainConfig { learning_rates: vec![0.1], epochs_per_rate: 2, batch_size: 8, rng_seed: 5 }
    }

    #[test]
    fn noiseless_gaussian_member_is_plain_training() {
        let data = tiny_data();
        let subs = gaussian_noise_submodels(&tiny_arch(), &data, 0.0, 1, &quick_cfg(), 17).unwrap();
        let (plain, stats) = train_submodel("p", FilterSpec::Identity, &tiny_arch(), &data, &quick_cfg(), 17).unwrap();
        assert_eq!(subs[0].0.net, plain.net);
        assert_eq!(subs[0].1, stats);
    }

    #[test]
    fn gaussian_members_differ() {
        let subs = gaussian_noise_submodels(&tiny_arch(), &tiny_data(), 0.02, 3, &quick_cfg(), 1).unwrap();
        assert_eq!(subs.len(), 3);
        assert_ne!(subs[0].0.net, subs[1].0.net);
        assert_ne!(subs[1].0.net, subs[2].0.net);
    }

    #[test]
    fn adversarial_training_is_deterministic_and_degenerates() {
        let data = tiny_data();
        let atk = AttackConfig { steps: 4, step_size: 2.0 / 255.0, ..AttackConfig::pgd(8.0 / 255.0) };
        let (a, _) = adversarial_train(&tiny_arch(), &data, &atk, &quick_cfg(), 2).unwrap();
        let (b, _) = adversarial_train(&tiny_arch(), &data, &atk, &quick_cfg(), 2).unwrap();
        assert_eq!(a, b);
        let (zero, _) = adversarial_train(&tiny_arch(), &data, &atk.with_radius(0.0), &quick_cfg(), 2).unwrap();
        let (plain, _) = train_submodel("p", FilterSpec::Identity, &tiny_arch(), &data, &quick_cfg(), 2).unwrap();
        assert_eq!(zero, plain.net);
        assert_ne!(a, zero);
    }
}
