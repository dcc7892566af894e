//! Filter sensitivity to input noise, and correlation between filters.
//!
//! The sensitivity of a filter `z` at image `x` under perturbation `d` is
//! `|| z(clamp(x + d)) - z(x) ||_2`. Sampling it over images and noise draws
//! gives one column per filter; Pearson coefficients between columns measure
//! how strongly two filters react to the same perturbations.

use std::fmt::Write as _;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::FilterSpec;
use crate::image::Image;
use crate::scalar::Real;

pub fn sensitivity<T: Real>(spec: &FilterSpec, x: &Image<T>, delta: &[T]) -> Result<T> {
    let moved = spec.apply(&x.perturbed(delta)?)?;
    let base = spec.apply(x)?;
    Ok(moved.distance_l2(&base))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Largest L-infinity noise radius.
    pub epsilon_max: f64,
    pub samples_per_image: usize,
    pub num_images: usize,
    pub rng_seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { epsilon_max: 20.0 / 255.0, samples_per_image: 10, num_images: 100, rng_seed: 0 }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon_max > 0.0 && self.epsilon_max.is_finite()) {
            return Err(Error::InvalidConfig(format!("epsilon_max {} must be > 0", self.epsilon_max)));
        }
        if self.samples_per_image == 0 || self.num_images == 0 {
            return Err(Error::InvalidConfig("samples_per_image and num_images must be positive".into()));
        }
        Ok(())
    }

    /// Noise stream for one image, independent of every other image's stream.
    pub fn image_stream(&self, image_id: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
        rng.set_stream(image_id as u64 + 1);
        rng
    }
}

/// One noise draw: radius uniform in `(0, epsilon_max]`, entries uniform in `[-radius, radius]`.
pub fn draw_noise<T: Real>(rng: &mut impl Rng, len: usize, epsilon_max: f64) -> Vec<T> {
    let eps = epsilon_max * (1.0 - rng.random::<f64>());
    (0..len).map(|_| T::lit(rng.random_range(-eps..=eps))).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivitySample<T> {
    pub image_id: usize,
    pub noise_id: usize,
    /// One sensitivity per filter, in filter order.
    pub values: Vec<T>,
}

/// Samples filter sensitivities over `cfg.num_images` randomly chosen images.
pub fn sample_sensitivities<T: Real>(
    filters: &[FilterSpec],
    images: &[Image<T>],
    cfg: &NoiseConfig,
) -> Result<Vec<SensitivitySample<T>>> {
    cfg.validate()?;
    if images.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if images.len() < cfg.num_images {
        return Err(Error::DatasetTooSmall { needed: cfg.num_images, have: images.len() });
    }
    let mut pick_rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut chosen = index::sample(&mut pick_rng, images.len(), cfg.num_images).into_vec();
    chosen.sort_unstable();

    let per_image: Vec<Vec<SensitivitySample<T>>> = chosen
        .par_iter()
        .map(|&id| {
            let x = &images[id];
            let clean: Vec<Image<T>> = filters.iter().map(|f| f.apply(x)).collect::<Result<_>>()?;
            let mut rng = cfg.image_stream(id);
            (0..cfg.samples_per_image)
                .map(|noise_id| {
                    let delta = draw_noise::<T>(&mut rng, x.data().len(), cfg.epsilon_max);
                    let moved = x.perturbed(&delta)?;
                    let values = filters
                        .iter()
                        .zip(&clean)
                        .map(|(f, c)| Ok(f.apply(&moved)?.distance_l2(c)))
                        .collect::<Result<_>>()?;
                    Ok(SensitivitySample { image_id: id, noise_id, values })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(per_image.into_iter().flatten().collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix<T> {
    pub filter_names: Vec<String>,
    pub rho: Vec<Vec<T>>,
}

impl<T: Real> CorrelationMatrix<T> {
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.filter_names.iter().position(|n| n == name)
    }

    pub fn get(&self, a: &str, b: &str) -> Option<T> {
        Some(self.rho[self.index_of(a)?][self.index_of(b)?])
    }

    /// Off-diagonal pairs `(i, j, rho)` with `i < j`, sorted by descending `|rho|`.
    pub fn ranked_pairs(&self) -> Vec<(usize, usize, T)> {
        let n = self.filter_names.len();
        let mut pairs: Vec<_> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).map(|(i, j)| (i, j, self.rho[i][j])).collect();
        pairs.sort_by(|a, b| b.2.abs().partial_cmp(&a.2.abs()).unwrap().then((a.0, a.1).cmp(&(b.0, b.1))));
        pairs
    }

    /// Header of filter names, then one row per filter, six decimals.
    pub fn to_csv(&self) -> String {
        let mut out = self.filter_names.join(",");
        out.push('\n');
        for row in &self.rho {
            let cells: Vec<String> = row.iter().map(|v| format!("{:.6}", v.as_f64())).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }
}

/// Sample Pearson correlation between every pair of columns (n - 1 normalisation).
pub fn pearson_matrix<T: Real>(names: &[String], samples: &[SensitivitySample<T>]) -> Result<CorrelationMatrix<T>> {
    let k = names.len();
    if samples.len() < 2 {
        return Err(Error::DatasetTooSmall { needed: 2, have: samples.len() });
    }
    if let Some(s) = samples.iter().find(|s| s.values.len() != k) {
        return Err(Error::ShapeMismatch { expected: vec![k], got: vec![s.values.len()] });
    }
    let n = T::lit(samples.len() as f64);
    let dof = n - T::one();
    let columns: Vec<Vec<T>> = (0..k).map(|j| samples.iter().map(|s| s.values[j]).collect()).collect();
    let means: Vec<T> = columns.iter().map(|c| c.iter().copied().sum::<T>() / n).collect();
    let centred: Vec<Vec<T>> = columns.iter().zip(&means).map(|(c, &m)| c.iter().map(|&v| v - m).collect()).collect();
    let sds: Vec<T> = centred.iter().map(|c| (c.iter().map(|&v| v * v).sum::<T>() / dof).sqrt()).collect();
    for (j, (&sd, &m)) in sds.iter().zip(&means).enumerate() {
        if !(sd > T::epsilon() * T::lit(64.0) * m.abs()) {
            return Err(Error::ConstantColumn(names[j].clone()));
        }
    }
    let mut rho = vec![vec![T::one(); k]; k];
    for i in 0..k {
        for j in i + 1..k {
            let cov = centred[i].iter().zip(&centred[j]).map(|(&a, &b)| a * b).sum::<T>() / dof;
            let r = (cov / (sds[i] * sds[j])).max(-T::one()).min(T::one());
            rho[i][j] = r;
            rho[j][i] = r;
        }
    }
    Ok(CorrelationMatrix { filter_names: names.to_vec(), rho })
}

/// The `k`-subset containing `must_include` whose largest pairwise `|rho|` is smallest.
///
/// Exhaustive over all subsets. Ties go to the subset whose sorted filter
/// names compare lexicographically first. The result lists filters in matrix order.
pub fn select_min_correlated<T: Real>(matrix: &CorrelationMatrix<T>, k: usize, must_include: &[&str]) -> Result<Vec<String>> {
    let n = matrix.filter_names.len();
    if k < must_include.len() {
        return Err(Error::InvalidConfig(format!("k = {k} is smaller than the {} required filters", must_include.len())));
    }
    if k == 0 || k > n {
        return Err(Error::InvalidConfig(format!("k = {k} outside 1..={n}")));
    }
    let required: Vec<usize> = must_include
        .iter()
        .map(|name| matrix.index_of(name).ok_or_else(|| Error::InvalidConfig(format!("unknown filter `{name}`"))))
        .collect::<Result<_>>()?;

    let mut best: Option<(T, Vec<String>, Vec<usize>)> = None;
    let mut subset = Vec::with_capacity(k);
    for_each_combination(n, k, &mut subset, &mut |s: &[usize]| {
        if !required.iter().all(|r| s.contains(r)) {
            return;
        }
        let worst = s
            .iter()
            .enumerate()
            .flat_map(|(a, &i)| s[a + 1..].iter().map(move |&j| (i, j)))
            .map(|(i, j)| matrix.rho[i][j].abs())
            .fold(T::zero(), T::max);
        let mut names: Vec<String> = s.iter().map(|&i| matrix.filter_names[i].clone()).collect();
        names.sort();
        let better = match &best {
            None => true,
            Some((w, bn, _)) => worst < *w || (worst == *w && names < *bn),
        };
        if better {
            best = Some((worst, names, s.to_vec()));
        }
    });
    let (_, _, idx) = best.expect("at least one subset contains the required filters");
    Ok(idx.into_iter().map(|i| matrix.filter_names[i].clone()).collect())
}

fn for_each_combination(n: usize, k: usize, current: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
    if current.len() == k {
        f(current);
        return;
    }
    let start = current.last().map_or(0, |&l| l + 1);
    for i in start..n {
        if n - i < k - current.len() {
            break;
        }
        current.push(i);
        for_each_combination(n, k, current, f);
        current.pop();
    }
}
