//! Front filters: deterministic image transforms placed before each network.
//!
//! Every filter maps a valid image to a valid image and declares how a
//! gradient is carried back through it when attacking with BPDA.

mod discretize;
mod octree;
mod resample;
mod spectral;

use serde::{Deserialize, Serialize};

pub use discretize::{discretize, from_byte, to_byte};
pub use octree::{octree_quantize, Octree};
pub use spectral::{
    dft2, gaussian_highpass_mask, gaussian_lowpass_mask, idft2, idft2_complex, mask_channel, Pass, Spectrum,
};

use crate::error::{Error, Result};
use crate::image::{clamp01, Image};
use crate::scalar::Real;
use crate::tensor::Tensor;

/// ITU-R BT.601 luma weights for R, G, B.
pub const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

pub const DEFAULT_SIGMA: f64 = 8.0;
pub const DEFAULT_OCTREE_DEPTH: usize = 7;

fn default_sigma() -> f64 {
    DEFAULT_SIGMA
}

fn default_depth() -> usize {
    DEFAULT_OCTREE_DEPTH
}

fn default_colors() -> usize {
    16
}

fn default_side() -> usize {
    16
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum FilterSpec {
    Identity,
    Discretize,
    Downsize {
        #[serde(default = "default_side")]
        height: usize,
        #[serde(default = "default_side")]
        width: usize,
    },
    Grayscale,
    #[serde(rename = "octree")]
    OctreeQuantize {
        #[serde(default = "default_colors")]
        max_colors: usize,
        #[serde(default = "default_depth")]
        depth: usize,
    },
    #[serde(rename = "lowpass")]
    LowPass {
        #[serde(default = "default_sigma")]
        sigma: f64,
    },
    #[serde(rename = "highpass")]
    HighPass {
        #[serde(default = "default_sigma")]
        sigma: f64,
    },
}

/// How a gradient crosses a shape-preserving filter during BPDA.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BpdaMode {
    /// Pass the gradient through unchanged.
    #[default]
    Identity,
    /// Use the adjoint of the filter's linear part where it has one
    /// (frequency masks); identity for the rest.
    Adjoint,
}

impl FilterSpec {
    /// Canonical lowercase kind name.
    pub fn kind_name(&self) -> &'static str {
        match self {
            FilterSpec::Identity => "identity",
            FilterSpec::Discretize => "discretize",
            FilterSpec::Downsize { .. } => "downsize",
            FilterSpec::Grayscale => "grayscale",
            FilterSpec::OctreeQuantize { .. } => "octree",
            FilterSpec::LowPass { .. } => "lowpass",
            FilterSpec::HighPass { .. } => "highpass",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            FilterSpec::Downsize { height, width } if height == 0 || width == 0 => {
                Err(Error::InvalidFilter("downsize target must be at least 1x1".into()))
            }
            FilterSpec::OctreeQuantize { max_colors, .. } if max_colors < 2 => {
                Err(Error::InvalidFilter(format!("octree max_colors {max_colors} < 2")))
            }
            FilterSpec::OctreeQuantize { depth, .. } if !(1..=8).contains(&depth) => {
                Err(Error::InvalidFilter(format!("octree depth {depth} outside 1..=8")))
            }
            FilterSpec::LowPass { sigma } | FilterSpec::HighPass { sigma } if !(sigma > 0.0 && sigma.is_finite()) => {
                Err(Error::InvalidFilter(format!("sigma {sigma} must be > 0")))
            }
            _ => Ok(()),
        }
    }

    /// `[channels, height, width]` produced for an input of the given shape.
    pub fn output_shape(&self, input: [usize; 3]) -> Result<[usize; 3]> {
        self.validate()?;
        let [c, h, w] = input;
        match *self {
            FilterSpec::Downsize { height, width } => {
                if height > h || width > w {
                    return Err(Error::InvalidFilter(format!("cannot downsize {h}x{w} to {height}x{width}")));
                }
                Ok([c, height, width])
            }
            FilterSpec::Grayscale => {
                if c != 3 {
                    return Err(Error::UnsupportedImage("grayscale needs an RGB image".into()));
                }
                Ok([1, h, w])
            }
            FilterSpec::OctreeQuantize { .. } if c != 3 => {
                Err(Error::UnsupportedImage("octree quantisation needs an RGB image".into()))
            }
            _ => Ok(input),
        }
    }

    pub fn preserves_shape(&self) -> bool {
        !matches!(self, FilterSpec::Downsize { .. } | FilterSpec::Grayscale)
    }

    pub fn apply<T: Real>(&self, img: &Image<T>) -> Result<Image<T>> {
        self.validate()?;
        match *self {
            FilterSpec::Identity => Ok(img.clone()),
            FilterSpec::Discretize => Ok(discretize(img)),
            FilterSpec::Downsize { height, width } => downsize(img, height, width),
            FilterSpec::Grayscale => grayscale(img),
            FilterSpec::OctreeQuantize { max_colors, depth } => octree_quantize(img, max_colors, depth),
            FilterSpec::LowPass { sigma } => Ok(frequency_filter(img, T::lit(sigma), Pass::Low)),
            FilterSpec::HighPass { sigma } => Ok(frequency_filter(img, T::lit(sigma), Pass::High)),
        }
    }

    /// Carries a gradient taken at the filter output back to the filter input.
    ///
    /// Shape-changing filters always use the adjoint of their linear map;
    /// shape-preserving filters follow `mode`.
    pub fn bpda_backward<T: Real>(&self, input: [usize; 3], upstream: &Tensor<T>, mode: BpdaMode) -> Result<Tensor<T>> {
        let out = self.output_shape(input)?;
        if upstream.shape() != out {
            return Err(Error::ShapeMismatch { expected: out.to_vec(), got: upstream.shape().to_vec() });
        }
        let [c, h, w] = input;
        let data = match (*self, mode) {
            (FilterSpec::Downsize { height, width }, _) => {
                resample::resize_adjoint(upstream.data(), c, h, w, height, width)
            }
            (FilterSpec::Grayscale, _) => {
                let g = upstream.data();
                LUMA.iter().flat_map(|&k| g.iter().map(move |&v| T::lit(k) * v)).collect()
            }
            (FilterSpec::LowPass { sigma }, BpdaMode::Adjoint) => per_channel(upstream.data(), c, h, w, |ch| {
                mask_channel(ch, h, w, T::lit(sigma), Pass::Low)
            }),
            (FilterSpec::HighPass { sigma }, BpdaMode::Adjoint) => per_channel(upstream.data(), c, h, w, |ch| {
                mask_channel(ch, h, w, T::lit(sigma), Pass::High)
            }),
            _ => upstream.data().to_vec(),
        };
        Ok(Tensor::from_parts_unchecked(input.to_vec(), data))
    }
}

fn per_channel<T: Real>(data: &[T], c: usize, h: usize, w: usize, f: impl Fn(&[T]) -> Vec<T>) -> Vec<T> {
    (0..c).flat_map(|ch| f(&data[ch * h * w..(ch + 1) * h * w])).collect()
}

/// Bilinear downsizing with half-pixel-centred sampling.
pub fn downsize<T: Real>(img: &Image<T>, height: usize, width: usize) -> Result<Image<T>> {
    let (c, h, w) = img.dims();
    if height == 0 || width == 0 || height > h || width > w {
        return Err(Error::InvalidFilter(format!("cannot downsize {h}x{w} to {height}x{width}")));
    }
    Image::from_clamped(c, height, width, resample::resize(img.data(), c, h, w, height, width))
}

/// BT.601 luma, producing a single-channel image.
pub fn grayscale<T: Real>(img: &Image<T>) -> Result<Image<T>> {
    let (c, h, w) = img.dims();
    if c != 3 {
        return Err(Error::UnsupportedImage("grayscale needs an RGB image".into()));
    }
    let [r, g, b] = [img.plane(0), img.plane(1), img.plane(2)];
    let k = LUMA.map(T::lit);
    let y = (0..h * w).map(|i| clamp01(k[0] * r[i] + k[1] * g[i] + k[2] * b[i])).collect();
    Image::new(1, h, w, y)
}

/// Gaussian low- or high-pass filtering of every channel, without the final clamp.
pub fn frequency_filter_raw<T: Real>(img: &Image<T>, sigma: T, pass: Pass) -> Vec<T> {
    let (c, h, w) = img.dims();
    per_channel(img.data(), c, h, w, |ch| mask_channel(ch, h, w, sigma, pass))
}

/// Gaussian low- or high-pass filtering of every channel, clamped to `[0, 1]`.
pub fn frequency_filter<T: Real>(img: &Image<T>, sigma: T, pass: Pass) -> Image<T> {
    let data = frequency_filter_raw(img, sigma, pass).into_iter().map(clamp01).collect();
    img.with_data(data)
}
