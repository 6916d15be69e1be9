//! Minimal differentiable-computation core for the fixed actor/critic
//! architectures: tensors, conv/dense/GRU layers with exact backward passes
//! (including through time), the tanh-Gaussian policy head, the quantile
//! critic head, Adam, and the checkpoint format.

pub mod adam;
pub mod checkpoint;
pub mod init;
pub mod layers;
pub mod nets;
pub mod tensor;

pub use layers::Param;
pub use tensor::{Scalar, Tensor};
