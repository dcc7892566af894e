//! Centred 2-D DFT and Gaussian frequency masks.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::scalar::Real;

/// 2-D spectrum with the zero frequency moved to `(height / 2, width / 2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum<T> {
    pub height: usize,
    pub width: usize,
    /// Row-major shifted coefficients.
    pub data: Vec<Complex<T>>,
}

impl<T: Real> Spectrum<T> {
    pub fn get(&self, u: usize, v: usize) -> Complex<T> {
        self.data[u * self.width + v]
    }

    /// Pointwise product with a real mask laid out like `data`.
    pub fn masked(&self, mask: &[T]) -> Self {
        let data = self.data.iter().zip(mask).map(|(&c, &m)| c * m).collect();
        Self { data, ..*self }
    }
}

/// Unnormalised 2-D transform via row then column 1-D FFTs.
fn fft2_in_place<T: Real>(buf: &mut [Complex<T>], h: usize, w: usize, inverse: bool) {
    let mut planner = FftPlanner::<T>::new();
    let (row, col) = if inverse {
        (planner.plan_fft_inverse(w), planner.plan_fft_inverse(h))
    } else {
        (planner.plan_fft_forward(w), planner.plan_fft_forward(h))
    };
    row.process(buf);
    let mut column = vec![Complex::new(T::zero(), T::zero()); h];
    for x in 0..w {
        for (y, c) in column.iter_mut().enumerate() {
            *c = buf[y * w + x];
        }
        col.process(&mut column);
        for (y, c) in column.iter().enumerate() {
            buf[y * w + x] = *c;
        }
    }
}

/// Forward DFT of a single `h x w` channel, shifted so DC sits at the centre.
pub fn dft2<T: Real>(channel: &[T], h: usize, w: usize) -> Spectrum<T> {
    assert_eq!(channel.len(), h * w);
    let mut buf: Vec<Complex<T>> = channel.iter().map(|&v| Complex::new(v, T::zero())).collect();
    fft2_in_place(&mut buf, h, w, false);
    let mut data = vec![Complex::new(T::zero(), T::zero()); h * w];
    for y in 0..h {
        for x in 0..w {
            data[((y + h / 2) % h) * w + (x + w / 2) % w] = buf[y * w + x];
        }
    }
    Spectrum { height: h, width: w, data }
}

/// Inverse of [`dft2`], returning the complex spatial values.
pub fn idft2_complex<T: Real>(spec: &Spectrum<T>) -> Vec<Complex<T>> {
    let (h, w) = (spec.height, spec.width);
    let mut buf = vec![Complex::new(T::zero(), T::zero()); h * w];
    for y in 0..h {
        for x in 0..w {
            buf[y * w + x] = spec.data[((y + h / 2) % h) * w + (x + w / 2) % w];
        }
    }
    fft2_in_place(&mut buf, h, w, true);
    let scale = T::one() / T::lit((h * w) as f64);
    buf.iter_mut().for_each(|c| *c = *c * scale);
    buf
}

/// Real part of the inverse transform.
pub fn idft2<T: Real>(spec: &Spectrum<T>) -> Vec<T> {
    idft2_complex(spec).into_iter().map(|c| c.re).collect()
}

/// Gaussian low-pass mask `exp(-D^2 / (2 sigma^2))`, `D` measured from the spectrum centre.
pub fn gaussian_lowpass_mask<T: Real>(h: usize, w: usize, sigma: T) -> Vec<T> {
    let (cy, cx) = (T::lit((h / 2) as f64), T::lit((w / 2) as f64));
    let denom = T::lit(2.0) * sigma * sigma;
    let mut mask = Vec::with_capacity(h * w);
    for u in 0..h {
        for v in 0..w {
            let du = T::lit(u as f64) - cy;
            let dv = T::lit(v as f64) - cx;
            mask.push((-(du * du + dv * dv) / denom).exp());
        }
    }
    mask
}

/// Complement of [`gaussian_lowpass_mask`].
pub fn gaussian_highpass_mask<T: Real>(h: usize, w: usize, sigma: T) -> Vec<T> {
    gaussian_lowpass_mask(h, w, sigma).into_iter().map(|g| T::one() - g).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pass {
    Low,
    High,
}

/// Masks one channel in the frequency domain and returns the real part, unclamped.
pub fn mask_channel<T: Real>(channel: &[T], h: usize, w: usize, sigma: T, pass: Pass) -> Vec<T> {
    let mask = match pass {
        Pass::Low => gaussian_lowpass_mask(h, w, sigma),
        Pass::High => gaussian_highpass_mask(h, w, sigma),
    };
    idft2(&dft2(channel, h, w).masked(&mask))
}
