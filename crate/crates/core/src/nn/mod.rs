//! Small dense/convolutional network engine with exact backpropagation.

mod layer;
mod lipschitz;
mod network;
mod serialize;
mod train;

pub use layer::{Layer, LayerSpec, Padding, ParamGrad};
pub use lipschitz::spectral_norm;
pub use network::{Gradients, Network};
pub use serialize::{load_network, read_network, save_network, write_network, MAGIC};
pub use train::{accuracy, train, train_with, EpochStats, TrainConfig};

/// Default per-filter classifier: two conv/pool stages followed by a linear head.
pub fn desk_architecture(num_classes: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::Conv2d { filters: 8, kernel: 3, stride: 1, padding: Padding::Same },
        LayerSpec::Relu,
        LayerSpec::Avgpool2d { size: 2, stride: 2 },
        LayerSpec::Conv2d { filters: 16, kernel: 3, stride: 1, padding: Padding::Same },
        LayerSpec::Relu,
        LayerSpec::Avgpool2d { size: 2, stride: 2 },
        LayerSpec::Flatten,
        LayerSpec::Dense { units: num_classes },
    ]
}
