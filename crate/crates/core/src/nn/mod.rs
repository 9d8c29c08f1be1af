//! Feed-forward convolutional network: a strided conv trunk, one ELU hidden
//! layer and either a linear Q head or a sigmoid keypoint head.

mod adam;
mod checkpoint;
mod config;
mod gradcheck;
mod network;
mod params;
mod scalar;

pub use adam::Adam;
pub use checkpoint::Checkpoint;
pub use config::{Head, LayerKind, LayerSpec, NetworkConfig};
pub use gradcheck::{check_gradients, random_check_case, CheckCase, GradientCheck};
pub use network::{elu, sigmoid, Network};
pub use params::{glorot_init, glorot_limit, GradientStore, ParameterStore};
pub use scalar::Scalar;
