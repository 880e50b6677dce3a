//! A small convolutional classifier with hand-written forward and backward
//! passes, SGD training, and input-pixel gradients.

mod io;
mod model;
mod scalar;
mod tensor;
mod train;

pub use io::{load_model, read_model, save_model, write_model};
pub use model::{lenet_specs, softmax_rows, ConvNet, LayerSpec, Shape3};
pub use scalar::Real;
pub use tensor::Tensor;
pub use train::{argmax, evaluate_error, images_to_tensor, train, train_lenet, EpochStat, TrainConfig, TrainReport};

/// MNIST input geometry.
pub const MNIST_INPUT: Shape3 = Shape3::new(1, 28, 28);
