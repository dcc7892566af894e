use std::collections::HashSet;
use std::f64::consts::PI;

use fens::filters::{dft2, discretize, idft2_complex, BpdaMode, FilterSpec};
use fens::nn::{LayerSpec, Network, Padding};
use fens::{Image, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Direct double-sum DFT with the zero frequency moved to (h/2, w/2).
fn naive_shifted_dft(x: &[f64], h: usize, w: usize) -> Vec<(f64, f64)> {
    let mut out = vec![(0.0, 0.0); h * w];
    for u in 0..h {
        for v in 0..w {
            let (mut re, mut im) = (0.0, 0.0);
            for y in 0..h {
                for z in 0..w {
                    let a = -2.0 * PI * ((u * y) as f64 / h as f64 + (v * z) as f64 / w as f64);
                    re += x[y * w + z] * a.cos();
                    im += x[y * w + z] * a.sin();
                }
            }
            out[((u + h / 2) % h) * w + (v + w / 2) % w] = (re, im);
        }
    }
    out
}

fn random_image(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize) -> Image<f64> {
    Image::from_fn(c, h, w, |_, _, _| rng.random::<f64>()).unwrap()
}

#[test]
fn dft_matches_double_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let x: Vec<f64> = (0..64).map(|_| rng.random()).collect();
        let fast = dft2(&x, 8, 8);
        let slow = naive_shifted_dft(&x, 8, 8);
        for (f, (re, im)) in fast.data.iter().zip(slow) {
            assert!((f.re - re).abs() < 1e-9 && (f.im - im).abs() < 1e-9);
        }
    }
}

#[test]
fn dft_round_trip_and_parseval() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for (h, w) in [(8, 8), (5, 7), (6, 4), (32, 32)] {
        let x: Vec<f64> = (0..h * w).map(|_| rng.random()).collect();
        let spec = dft2(&x, h, w);
        let back = idft2_complex(&spec);
        let energy: f64 = x.iter().map(|v| v * v).sum();
        for (b, v) in back.iter().zip(&x) {
            assert!((b.re - v).abs() <= 1e-6 * energy.sqrt() && b.im.abs() <= 1e-6 * energy.sqrt());
        }
        let spectral: f64 = spec.data.iter().map(|c| c.norm_sqr()).sum::<f64>() / (h * w) as f64;
        assert!((spectral - energy).abs() <= 1e-6 * energy);
    }
}

#[test]
fn downsize_adjoint_is_the_transpose() {
    let (c, h, w, oh, ow) = (1, 7, 5, 3, 4);
    let spec = FilterSpec::Downsize { height: oh, width: ow };
    let n = h * w;
    // Explicit matrix: column j is downsize(e_j); downsize is linear on images with no clamping.
    let mut mat = vec![vec![0.0; n]; oh * ow];
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let out = spec.apply(&Image::new(c, h, w, e).unwrap()).unwrap();
        for (i, v) in out.data().iter().enumerate() {
            mat[i][j] = *v;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let g: Vec<f64> = (0..oh * ow).map(|_| rng.random_range(-1.0..1.0)).collect();
    let back = spec
        .bpda_backward([c, h, w], &Tensor::new(vec![c, oh, ow], g.clone()).unwrap(), BpdaMode::Identity)
        .unwrap();
    for j in 0..n {
        let expected: f64 = (0..oh * ow).map(|i| mat[i][j] * g[i]).sum();
        assert!((back.data()[j] - expected).abs() < 1e-12);
    }
}

#[test]
fn filter_contracts_on_random_images() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let octree = FilterSpec::OctreeQuantize { max_colors: 16, depth: 7 };
    for _ in 0..100 {
        let img = random_image(&mut rng, 3, 32, 32);
        let q = octree.apply(&img).unwrap();
        let colours: HashSet<[u64; 3]> = (0..32 * 32)
            .map(|p| [0, 1, 2].map(|c| q.data()[c * 1024 + p].to_bits()))
            .collect();
        assert!(colours.len() <= 16);
        let d = discretize(&img);
        assert_eq!(discretize(&d), d);
        let same = FilterSpec::Downsize { height: 32, width: 32 }.apply(&img).unwrap();
        assert!(same.data().iter().zip(img.data()).all(|(a, b)| (a - b).abs() < 1e-15));
    }
}

#[test]
fn gray_of_gray_pixels_is_the_value() {
    for k in 0..=255 {
        let v = k as f64 / 255.0;
        let g = FilterSpec::Grayscale.apply(&Image::filled(3, 2, 2, v).unwrap()).unwrap();
        assert!(g.data().iter().all(|p| (p - v).abs() < 1e-15));
    }
}

#[test]
fn lipschitz_bound_dominates_sampled_ratios() {
    let arch = [
        LayerSpec::Conv2d { filters: 3, kernel: 3, stride: 1, padding: Padding::Same },
        LayerSpec::Relu,
        LayerSpec::Avgpool2d { size: 3, stride: 2 },
        LayerSpec::Flatten,
        LayerSpec::Dense { units: 4 },
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for seed in 0..5 {
        let net = Network::<f64>::init(&arch, &[1, 6, 6], 4, seed).unwrap();
        let l = net.lipschitz_upper_bound();
        for _ in 0..200 {
            let a: Vec<f64> = (0..36).map(|_| rng.random()).collect();
            let b: Vec<f64> = a.iter().map(|v| v + rng.random_range(-0.01..0.01)).collect();
            let fa = net.forward(&Tensor::new(vec![1, 6, 6], a.clone()).unwrap()).unwrap();
            let fb = net.forward(&Tensor::new(vec![1, 6, 6], b.clone()).unwrap()).unwrap();
            let out: f64 = fa.data().iter().zip(fb.data()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            let inp: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            assert!(out <= l * inp * (1.0 + 1e-9));
        }
    }
}

#[test]
fn frequency_bpda_is_the_mask_operator() {
    // The adjoint-mode backward of a frequency filter is its own (self-adjoint) linear map:
    // <M a, b> == <a, M b> for arbitrary real channels.
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for spec in [FilterSpec::LowPass { sigma: 1.5 }, FilterSpec::HighPass { sigma: 1.5 }] {
        let a: Vec<f64> = (0..3 * 36).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..3 * 36).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ma = spec.bpda_backward([3, 6, 6], &Tensor::new(vec![3, 6, 6], a.clone()).unwrap(), BpdaMode::Adjoint).unwrap();
        let mb = spec.bpda_backward([3, 6, 6], &Tensor::new(vec![3, 6, 6], b.clone()).unwrap(), BpdaMode::Adjoint).unwrap();
        let lhs: f64 = ma.data().iter().zip(&b).map(|(x, y)| x * y).sum();
        let rhs: f64 = a.iter().zip(mb.data()).map(|(x, y)| x * y).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }
}

proptest! {
    #[test]
    fn filters_keep_pixels_in_range(seed in any::<u64>(), kind in 0usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let img = random_image(&mut rng, 3, 8, 8);
        let spec = [
            FilterSpec::Identity,
            FilterSpec::Discretize,
            FilterSpec::Downsize { height: 5, width: 3 },
            FilterSpec::Grayscale,
            FilterSpec::OctreeQuantize { max_colors: 4, depth: 7 },
            FilterSpec::LowPass { sigma: 2.0 },
            FilterSpec::HighPass { sigma: 2.0 },
        ][kind];
        let out = spec.apply(&img).unwrap();
        prop_assert_eq!(out.shape(), spec.output_shape(img.shape()).unwrap());
        prop_assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert_eq!(spec.apply(&img).unwrap(), out);
    }

    #[test]
    fn low_and_high_masks_partition_unity(h in 1usize..12, w in 1usize..12, sigma in 0.1f64..20.0) {
        let lo = fens::filters::gaussian_lowpass_mask::<f64>(h, w, sigma);
        let hi = fens::filters::gaussian_highpass_mask::<f64>(h, w, sigma);
        prop_assert!(lo.iter().zip(&hi).all(|(a, b)| (a + b - 1.0).abs() < 1e-15));
    }
}
