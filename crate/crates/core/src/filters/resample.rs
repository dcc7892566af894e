//! Bilinear resampling on a half-pixel-centred grid (align-corners off) and its adjoint.

use crate::scalar::Real;

/// For every output index, the two source taps and their weights.
pub(crate) fn axis_taps<T: Real>(src: usize, dst: usize) -> Vec<[(usize, T); 2]> {
    let scale = T::lit(src as f64) / T::lit(dst as f64);
    let half = T::lit(0.5);
    let last = T::lit((src - 1) as f64);
    (0..dst)
        .map(|d| {
            let s = ((T::lit(d as f64) + half) * scale - half).max(T::zero()).min(last);
            let i0 = s.floor();
            let frac = s - i0;
            let i0 = i0.to_usize().unwrap();
            let i1 = (i0 + 1).min(src - 1);
            [(i0, T::one() - frac), (i1, frac)]
        })
        .collect()
}

/// Resamples each `h x w` plane of `data` to `th x tw`.
pub(crate) fn resize<T: Real>(data: &[T], channels: usize, h: usize, w: usize, th: usize, tw: usize) -> Vec<T> {
    let ry = axis_taps::<T>(h, th);
    let rx = axis_taps::<T>(w, tw);
    let mut out = Vec::with_capacity(channels * th * tw);
    for c in 0..channels {
        let plane = &data[c * h * w..(c + 1) * h * w];
        for ty in &ry {
            for tx in &rx {
                let mut acc = T::zero();
                for &(y, wy) in ty {
                    for &(x, wx) in tx {
                        acc += wy * wx * plane[y * w + x];
                    }
                }
                out.push(acc);
            }
        }
    }
    out
}

/// Transpose of [`resize`]: maps a `th x tw` gradient back onto the `h x w` grid.
pub(crate) fn resize_adjoint<T: Real>(grad: &[T], channels: usize, h: usize, w: usize, th: usize, tw: usize) -> Vec<T> {
    let ry = axis_taps::<T>(h, th);
    let rx = axis_taps::<T>(w, tw);
    let mut out = vec![T::zero(); channels * h * w];
    for c in 0..channels {
        let plane = &mut out[c * h * w..(c + 1) * h * w];
        for (i, ty) in ry.iter().enumerate() {
            for (j, tx) in rx.iter().enumerate() {
                let g = grad[(c * th + i) * tw + j];
                for &(y, wy) in ty {
                    for &(x, wx) in tx {
                        plane[y * w + x] += wy * wx * g;
                    }
                }
            }
        }
    }
    out
}
