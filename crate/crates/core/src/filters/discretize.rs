//! Rounding to the 8-bit grid.

use crate::image::Image;
use crate::scalar::Real;

/// Scaled values within this distance of a half step count as exactly half a step.
fn half_step_slack<T: Real>() -> T {
    T::epsilon() * T::lit(1024.0)
}

/// Nearest 8-bit level of a `[0, 1]` value, halves rounded up.
#[inline]
pub fn to_byte<T: Real>(v: T) -> u8 {
    let scaled = v * T::lit(255.0) + T::lit(0.5) + half_step_slack::<T>();
    scaled.floor().max(T::zero()).min(T::lit(255.0)).to_u8().unwrap()
}

#[inline]
pub fn from_byte<T: Real>(b: u8) -> T {
    T::lit(f64::from(b)) / T::lit(255.0)
}

/// Rounds every pixel to the nearest multiple of 1/255 (half-up).
pub fn discretize<T: Real>(img: &Image<T>) -> Image<T> {
    img.with_data(img.data().iter().map(|&v| from_byte(to_byte(v))).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_rounds_up() {
        assert_eq!(to_byte(0.5f64 / 255.0), 1);
        assert_eq!(to_byte(0.49f64 / 255.0), 0);
        assert_eq!(to_byte(254.5f64 / 255.0), 255);
        assert_eq!(to_byte(1.0f64), 255);
        assert_eq!(to_byte(0.0f32), 0);
        assert_eq!(to_byte(0.5f32 / 255.0), 1);
    }

    #[test]
    fn byte_levels_round_trip() {
        for b in 0..=255u8 {
            assert_eq!(to_byte(from_byte::<f64>(b)), b);
            assert_eq!(to_byte(from_byte::<f32>(b)), b);
        }
    }

    #[test]
    fn discrete_image_is_unchanged() {
        let img = Image::from_fn(3, 2, 2, |c, y, x| from_byte::<f64>((c * 40 + y * 7 + x) as u8)).unwrap();
        assert_eq!(discretize(&img), img);
    }
}
