use fens::nn::{LayerSpec, Network, Padding};
use fens::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;

fn random_arch(rng: &mut ChaCha8Rng) -> (Vec<LayerSpec>, Vec<usize>) {
    let c = if rng.random::<bool>() { 1 } else { 3 };
    let side = rng.random_range(5..9);
    let mut arch = vec![LayerSpec::Conv2d {
        filters: rng.random_range(1..4),
        kernel: rng.random_range(1..4),
        stride: rng.random_range(1..3),
        padding: if rng.random::<bool>() { Padding::Same } else { Padding::Valid },
    }];
    arch.push(LayerSpec::Relu);
    if rng.random::<bool>() {
        let size = rng.random_range(1..3);
        arch.push(LayerSpec::Avgpool2d { size, stride: rng.random_range(1..=size) });
    }
    arch.push(LayerSpec::Flatten);
    if rng.random::<bool>() {
        arch.push(LayerSpec::Dense { units: rng.random_range(2..6) });
        arch.push(LayerSpec::Relu);
    }
    arch.push(LayerSpec::Dense { units: 3 });
    (arch, vec![c, side, side])
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

fn central<F: FnMut(usize, f64) -> f64>(n: usize, mut at: F) -> Vec<f64> {
    (0..n).map(|i| (at(i, H) - at(i, -H)) / (2.0 * H)).collect()
}

#[test]
fn input_and_parameter_gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for trial in 0..50 {
        let (arch, shape) = random_arch(&mut rng);
        let mut net = Network::<f64>::init(&arch, &shape, 3, trial).unwrap();
        for t in net.param_tensors_mut() {
            t.data_mut().iter_mut().for_each(|v| *v += rng.random_range(-0.05..0.05));
        }
        let n: usize = shape.iter().product();
        let x = Tensor::new(shape.clone(), (0..n).map(|_| rng.random::<f64>()).collect()).unwrap();
        let label = rng.random_range(0..3);

        let (_, gx, gp) = net.backprop(&x, label, true).unwrap();
        let numeric = central(n, |i, h| {
            let mut y = x.clone();
            y.data_mut()[i] += h;
            net.loss(&y, label).unwrap()
        });
        let e = rel_err(gx.data(), &numeric);
        assert!(e < 1e-4, "trial {trial} {arch:?}: input gradient rel err {e}");

        let analytic: Vec<f64> = gp.unwrap().tensors().iter().flat_map(|t| t.data().to_vec()).collect();
        let sizes: Vec<usize> = net.param_tensors_mut().iter().map(|t| t.len()).collect();
        let mut numeric = Vec::with_capacity(analytic.len());
        for (ti, &len) in sizes.iter().enumerate() {
            for j in 0..len {
                let eval = |h: f64| {
                    let mut moved = net.clone();
                    moved.param_tensors_mut()[ti].data_mut()[j] += h;
                    moved.loss(&x, label).unwrap()
                };
                numeric.push((eval(H) - eval(-H)) / (2.0 * H));
            }
        }
        let e = rel_err(&analytic, &numeric);
        assert!(e < 1e-4, "trial {trial} {arch:?}: parameter gradient rel err {e}");
    }
}

#[test]
fn f32_network_tracks_f64() {
    let net = Network::<f64>::init(&fens::nn::desk_architecture(4), &[3, 16, 16], 4, 1).unwrap();
    let x: Vec<f64> = (0..768).map(|i| ((i * 37) % 101) as f64 / 100.0).collect();
    let z64 = net.forward(&Tensor::new(vec![3, 16, 16], x.clone()).unwrap()).unwrap();
    let z32 = net
        .cast::<f32>()
        .forward(&Tensor::new(vec![3, 16, 16], x.iter().map(|&v| v as f32).collect()).unwrap())
        .unwrap();
    for (a, b) in z64.data().iter().zip(z32.data()) {
        assert!((a - *b as f64).abs() < 1e-4);
    }
}
