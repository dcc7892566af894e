use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::Tensor;

/// Channel-planar raster with pixels in `[0, 1]`.
///
/// Pixel `(c, y, x)` lives at `data[(c * height + y) * width + x]`, which is
/// also the layout of a `(C, H, W)` network input tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Image<T> {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Real> Image<T> {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::UnsupportedImage(format!("{channels} channels (expected 1 or 3)")));
        }
        if height == 0 || width == 0 {
            return Err(Error::UnsupportedImage("empty image".into()));
        }
        if data.len() != channels * height * width {
            return Err(Error::ShapeMismatch { expected: vec![channels, height, width], got: vec![data.len()] });
        }
        if let Some(v) = data.iter().find(|v| !(v.is_finite() && **v >= T::zero() && **v <= T::one())) {
            return Err(Error::UnsupportedImage(format!("pixel {v} outside [0, 1]")));
        }
        Ok(Self { channels, height, width, data })
    }

    /// Builds an image from arbitrary finite values, clamping into `[0, 1]`.
    pub fn from_clamped(channels: usize, height: usize, width: usize, mut data: Vec<T>) -> Result<Self> {
        data.iter_mut().for_each(|v| *v = clamp01(*v));
        Self::new(channels, height, width, data)
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: T) -> Result<Self> {
        Self::new(channels, height, width, vec![value; channels * height * width])
    }

    pub fn from_fn(channels: usize, height: usize, width: usize, mut f: impl FnMut(usize, usize, usize) -> T) -> Result<Self> {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self::new(channels, height, width, data)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// `[channels, height, width]`.
    pub fn shape(&self) -> [usize; 3] {
        [self.channels, self.height, self.width]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> T {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn plane(&self, c: usize) -> &[T] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn to_tensor(&self) -> Tensor<T> {
        Tensor::from_parts_unchecked(self.shape().to_vec(), self.data.clone())
    }

    /// Adds `delta` and clamps back into `[0, 1]`.
    pub fn perturbed(&self, delta: &[T]) -> Result<Self> {
        if delta.len() != self.data.len() {
            return Err(Error::ShapeMismatch { expected: self.shape().to_vec(), got: vec![delta.len()] });
        }
        let data = self.data.iter().zip(delta).map(|(&v, &d)| clamp01(v + d)).collect();
        Ok(Self { data, ..*self })
    }

    pub(crate) fn with_data(&self, data: Vec<T>) -> Self {
        debug_assert_eq!(data.len(), self.data.len());
        Self { data, ..*self }
    }

    pub fn distance_l2(&self, other: &Self) -> T {
        self.data.iter().zip(&other.data).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>().sqrt()
    }

    pub fn distance_linf(&self, other: &Self) -> T {
        self.data.iter().zip(&other.data).map(|(&a, &b)| (a - b).abs()).fold(T::zero(), T::max)
    }

    pub fn cast<U: Real>(&self) -> Image<U> {
        Image {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| U::lit(v.as_f64())).collect(),
        }
    }
}

impl<T> Image<T> {
    pub(crate) fn dims(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }
}

#[inline]
pub fn clamp01<T: Real>(v: T) -> T {
    v.max(T::zero()).min(T::one())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validates_range_and_channels() {
        assert!(Image::new(3, 1, 1, vec![0.0, 0.5, 1.0f64]).is_ok());
        assert!(Image::new(3, 1, 1, vec![0.0, 0.5, 1.01f64]).is_err());
        assert!(Image::new(2, 1, 1, vec![0.0, 0.5f64]).is_err());
        assert!(Image::new(1, 1, 2, vec![0.0f64]).is_err());
    }

    #[test]
    fn perturbation_is_clamped() {
        let img = Image::new(1, 1, 2, vec![0.1, 0.9f64]).unwrap();
        let p = img.perturbed(&[-0.5, 0.05]).unwrap();
        assert_eq!(p.data(), &[0.0, 0.9 + 0.05]);
        let p = img.perturbed(&[0.0, 0.5]).unwrap();
        assert_eq!(p.data()[1], 1.0);
    }
}
