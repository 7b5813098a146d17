//! Dense NHWC tensors and layers with hand-written reverse-mode gradients.

pub mod checkpoint;
pub mod conv;
pub mod cot;
pub mod dense;
pub mod head;
pub mod inception;
pub mod layer;
pub mod linalg;
pub mod model;
pub mod ops;
pub mod residual;
pub mod tensor;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use conv::Conv2d;
pub use cot::CotLayer;
pub use dense::{ChannelAffine, Dense};
pub use head::{softmax, softmax_cross_entropy, MlpHead};
pub use inception::InceptionBlock;
pub use layer::Layer;
pub use model::{Gradients, GrcNet, ModelConfig};
pub use residual::ResidualUnit;
pub use tensor::{Param, Shape, Tensor};
