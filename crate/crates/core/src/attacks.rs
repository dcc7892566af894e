//! Gradient attacks: FGSM, BIM, PGD, their BPDA variants, and transfer evaluation.
//!
//! Every attack works on anything implementing [`Attackable`]: a bare
//! network, a filtered sub-model (gradient through BPDA) or a whole ensemble
//! (sum of sub-model gradients). Perturbations always live in the space of
//! the original image.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::BpdaMode;
use crate::image::{clamp01, Image};
use crate::nn::Network;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Fgsm,
    Bim,
    Pgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Norm {
    #[serde(rename = "2")]
    L2,
    #[serde(rename = "inf")]
    Linf,
}

/// How gradients cross a front filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bpda {
    Off,
    #[default]
    Identity,
    Adjoint,
}

impl Bpda {
    pub fn mode(self) -> Option<BpdaMode> {
        match self {
            Bpda::Off => None,
            Bpda::Identity => Some(BpdaMode::Identity),
            Bpda::Adjoint => Some(BpdaMode::Adjoint),
        }
    }
}

/// Direction of the step relative to the loss gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossSign {
    /// Step up the loss (untargeted attack).
    #[default]
    Ascend,
    /// Step down the loss, `x - r * sign(grad)`.
    PaperLiteral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    pub method: Method,
    pub radius: f64,
    pub norm: Norm,
    pub steps: usize,
    pub step_size: f64,
    pub random_init: bool,
    pub bpda: Bpda,
    pub loss_sign: LossSign,
    pub rng_seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self::pgd(8.0 / 255.0)
    }
}

impl AttackConfig {
    pub fn fgsm(radius: f64) -> Self {
        Self {
            method: Method::Fgsm,
            radius,
            norm: Norm::Linf,
            steps: 1,
            step_size: radius,
            random_init: false,
            bpda: Bpda::Identity,
            loss_sign: LossSign::Ascend,
            rng_seed: 0,
        }
    }

    pub fn bim(radius: f64, steps: usize, step_size: f64) -> Self {
        Self { method: Method::Bim, steps, step_size, ..Self::fgsm(radius) }
    }

    /// 20 steps of size `radius / 10`, random start.
    pub fn pgd(radius: f64) -> Self {
        Self { method: Method::Pgd, steps: 20, step_size: radius / 10.0, random_init: true, ..Self::fgsm(radius) }
    }

    /// Same attack at another radius, keeping the ratio of step size to radius.
    pub fn with_radius(&self, radius: f64) -> Self {
        let step_size = if self.radius > 0.0 { self.step_size * radius / self.radius } else { radius };
        Self { radius, step_size, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius >= 0.0 && self.radius.is_finite()) {
            return Err(Error::InvalidConfig(format!("attack radius {} must be >= 0", self.radius)));
        }
        if self.steps == 0 {
            return Err(Error::InvalidConfig("attack steps must be >= 1".into()));
        }
        if self.radius > 0.0 && self.method != Method::Fgsm {
            if !(self.step_size > 0.0 && self.step_size.is_finite()) {
                return Err(Error::InvalidConfig(format!("attack step_size {} must be > 0", self.step_size)));
            }
            if self.step_size > self.radius * (1.0 + 1e-12) {
                return Err(Error::InvalidConfig(format!(
                    "attack step_size {} exceeds radius {}",
                    self.step_size, self.radius
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackResult<T> {
    pub adversarial: Image<T>,
    pub success: bool,
    /// Gradient evaluations spent.
    pub queries: usize,
    pub final_label: usize,
}

/// A classifier that attacks can query for labels and input gradients.
pub trait Attackable<T: Real>: Sync {
    fn predict(&self, x: &Image<T>) -> Result<usize>;

    /// Gradient of the attack loss with respect to the original image.
    fn loss_gradient(&self, x: &Image<T>, label: usize, bpda: Bpda) -> Result<Vec<T>>;
}

impl<T: Real> Attackable<T> for Network<T> {
    fn predict(&self, x: &Image<T>) -> Result<usize> {
        self.classify(&x.to_tensor())
    }

    fn loss_gradient(&self, x: &Image<T>, label: usize, _bpda: Bpda) -> Result<Vec<T>> {
        Ok(self.grad_input(&x.to_tensor(), label)?.into_data())
    }
}

/// `v / ||v||_p`, with `sign` for `p = inf`. `None` when `v` is zero.
fn normalized<T: Real>(v: &[T], norm: Norm) -> Option<Vec<T>> {
    match norm {
        Norm::Linf => {
            if v.iter().all(|g| g.is_zero()) {
                return None;
            }
            Some(v.iter().map(|&g| if g > T::zero() { T::one() } else if g < T::zero() { -T::one() } else { T::zero() }).collect())
        }
        Norm::L2 => {
            let n = v.iter().map(|&g| g * g).sum::<T>().sqrt();
            if !(n > T::zero()) {
                return None;
            }
            Some(v.iter().map(|&g| g / n).collect())
        }
    }
}

/// Projects `point` onto the radius-`r` ball around `centre`.
///
/// L-infinity clips each coordinate of the offset to `[-r, r]`; L2 rescales
/// an offset longer than `r` back onto the sphere along the same ray.
pub fn project<T: Real>(centre: &[T], point: &mut [T], r: T, norm: Norm) {
    match norm {
        Norm::Linf => {
            for (p, &c) in point.iter_mut().zip(centre) {
                *p = c + (*p - c).max(-r).min(r);
            }
        }
        Norm::L2 => {
            let d = point.iter().zip(centre).map(|(&p, &c)| (p - c) * (p - c)).sum::<T>().sqrt();
            if d > r {
                let k = r / d;
                for (p, &c) in point.iter_mut().zip(centre) {
                    *p = c + (*p - c) * k;
                }
            }
        }
    }
}

/// Uniform sample from the radius-`r` ball.
fn random_start<T: Real>(len: usize, r: f64, norm: Norm, rng: &mut ChaCha8Rng) -> Vec<T> {
    match norm {
        Norm::Linf => (0..len).map(|_| T::lit(rng.random_range(-r..=r))).collect(),
        Norm::L2 => {
            let dir: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
            let n = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            let scale = r * rng.random::<f64>().powf(1.0 / len as f64) / n;
            dir.into_iter().map(|v| T::lit(v * scale)).collect()
        }
    }
}

fn finish<T: Real, M: Attackable<T> + ?Sized>(model: &M, x: &Image<T>, label: usize, adv: Vec<T>, queries: usize) -> Result<AttackResult<T>> {
    let adversarial = x.with_data(adv);
    let final_label = model.predict(&adversarial)?;
    Ok(AttackResult { adversarial, success: final_label != label, queries, final_label })
}

fn direction<T: Real, M: Attackable<T> + ?Sized>(model: &M, x: &Image<T>, label: usize, cfg: &AttackConfig) -> Result<Option<Vec<T>>> {
    let mut g = model.loss_gradient(x, label, cfg.bpda)?;
    if cfg.loss_sign == LossSign::PaperLiteral {
        g.iter_mut().for_each(|v| *v = -*v);
    }
    Ok(normalized(&g, cfg.norm))
}

/// Single step `x + r * n(grad)`, clamped into `[0, 1]`.
pub fn fgsm<T: Real, M: Attackable<T> + ?Sized>(model: &M, x: &Image<T>, label: usize, cfg: &AttackConfig) -> Result<AttackResult<T>> {
    cfg.validate()?;
    if cfg.radius == 0.0 {
        return finish(model, x, label, x.data().to_vec(), 0);
    }
    let r = T::lit(cfg.radius);
    let adv = match direction(model, x, label, cfg)? {
        Some(d) => x.data().iter().zip(&d).map(|(&v, &s)| clamp01(v + r * s)).collect(),
        None => x.data().to_vec(),
    };
    finish(model, x, label, adv, 1)
}

/// Iterated sign steps with the accumulated perturbation kept inside the ball; no random start.
pub fn bim<T: Real, M: Attackable<T> + ?Sized>(model: &M, x: &Image<T>, label: usize, cfg: &AttackConfig) -> Result<AttackResult<T>> {
    iterate(model, x, label, cfg, false, 0)
}

/// Projected gradient descent (ascent) with optional random start.
pub fn pgd<T: Real, M: Attackable<T> + ?Sized>(model: &M, x: &Image<T>, label: usize, cfg: &AttackConfig) -> Result<AttackResult<T>> {
    iterate(model, x, label, cfg, cfg.random_init, 0)
}

fn iterate<T: Real, M: Attackable<T> + ?Sized>(
    model: &M,
    x: &Image<T>,
    label: usize,
    cfg: &AttackConfig,
    random_init: bool,
    stream: u64,
) -> Result<AttackResult<T>> {
    cfg.validate()?;
    if cfg.radius == 0.0 {
        return finish(model, x, label, x.data().to_vec(), 0);
    }
    let (r, alpha) = (T::lit(cfg.radius), T::lit(cfg.step_size));
    let centre = x.data();
    let mut cur: Vec<T> = centre.to_vec();
    if random_init {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
        rng.set_stream(stream);
        let start = random_start::<T>(centre.len(), cfg.radius, cfg.norm, &mut rng);
        cur.iter_mut().zip(start).for_each(|(v, d)| *v = clamp01(*v + d));
        project(centre, &mut cur, r, cfg.norm);
    }
    for _ in 0..cfg.steps {
        let here = x.with_data(cur.clone());
        if let Some(d) = direction(model, &here, label, cfg)? {
            cur.iter_mut().zip(&d).for_each(|(v, &s)| *v += alpha * s);
            project(centre, &mut cur, r, cfg.norm);
            cur.iter_mut().for_each(|v| *v = clamp01(*v));
        }
    }
    finish(model, x, label, cur, cfg.steps)
}

/// Runs the attack selected by `cfg.method`.
///
/// `stream` selects an independent random-start stream, so attacks on
/// different images of a batch do not share noise.
pub fn run_attack<T: Real, M: Attackable<T> + ?Sized>(
    model: &M,
    x: &Image<T>,
    label: usize,
    cfg: &AttackConfig,
    stream: u64,
) -> Result<AttackResult<T>> {
    match cfg.method {
        Method::Fgsm => fgsm(model, x, label, cfg),
        Method::Bim => iterate(model, x, label, cfg, false, stream),
        Method::Pgd => iterate(model, x, label, cfg, cfg.random_init, stream),
    }
}

/// Attacks every image in parallel; image `i` uses random stream `i`.
pub fn attack_all<T: Real, M: Attackable<T> + ?Sized>(
    model: &M,
    images: &[Image<T>],
    labels: &[usize],
    cfg: &AttackConfig,
) -> Result<Vec<AttackResult<T>>> {
    if images.len() != labels.len() {
        return Err(Error::InvalidConfig(format!("{} images but {} labels", images.len(), labels.len())));
    }
    images
        .par_iter()
        .zip(labels.par_iter())
        .enumerate()
        .map(|(i, (x, &l))| run_attack(model, x, l, cfg, i as u64))
        .collect()
}

/// Fraction of `images` that `model` labels correctly.
pub fn accuracy_on<T: Real, M: Attackable<T> + ?Sized>(model: &M, images: &[Image<T>], labels: &[usize]) -> Result<f64> {
    if images.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let correct = images
        .par_iter()
        .zip(labels.par_iter())
        .map(|(x, &l)| Ok(usize::from(model.predict(x)? == l)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum::<usize>();
    Ok(correct as f64 / images.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyRow {
    /// Attack radius on the `[0, 1]` pixel scale.
    pub epsilon: f64,
    pub model_name: String,
    pub accuracy: f64,
}

/// Crafts adversarial examples on `source` at each radius and scores every target on them.
pub fn transfer_eval<T: Real, S: Attackable<T> + ?Sized>(
    source: &S,
    targets: &[(&str, &dyn Attackable<T>)],
    images: &[Image<T>],
    labels: &[usize],
    epsilons: &[f64],
    cfg: &AttackConfig,
) -> Result<Vec<AccuracyRow>> {
    if images.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut rows = Vec::with_capacity(epsilons.len() * targets.len());
    for &eps in epsilons {
        let adv: Vec<Image<T>> =
            attack_all(source, images, labels, &cfg.with_radius(eps))?.into_iter().map(|r| r.adversarial).collect();
        for (name, target) in targets {
            rows.push(AccuracyRow { epsilon: eps, model_name: name.to_string(), accuracy: accuracy_on(*target, &adv, labels)? });
        }
    }
    Ok(rows)
}

/// Accuracy of `model` under its own attack at each radius.
pub fn robust_accuracy<T: Real, M: Attackable<T> + ?Sized>(
    model: &M,
    images: &[Image<T>],
    labels: &[usize],
    epsilons: &[f64],
    cfg: &AttackConfig,
) -> Result<Vec<f64>> {
    if images.is_empty() {
        return Err(Error::EmptyDataset);
    }
    epsilons
        .iter()
        .map(|&eps| {
            let res = attack_all(model, images, labels, &cfg.with_radius(eps))?;
            Ok(res.iter().filter(|r| !r.success).count() as f64 / images.len() as f64)
        })
        .collect()
}

/// Random corner of the L-infinity ball, clamped; a control for attack strength.
pub fn random_sign_noise<T: Real>(x: &Image<T>, radius: f64, rng: &mut impl Rng) -> Image<T> {
    let r = T::lit(radius);
    let data = x.data().iter().map(|&v| clamp01(if rng.random::<bool>() { v + r } else { v - r })).collect();
    x.with_data(data)
}
