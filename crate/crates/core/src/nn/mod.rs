//! Dense `f64` tensors, a reverse-mode tape, and the encoder built on it.

pub mod checkpoint;
pub(crate) mod gemm;
pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod optim;
pub mod tensor;

pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use gradcheck::grad_check;
pub use graph::{Graph, Var, MASK_BIAS};
pub use layers::{encoder_forward, init_encoder, sinusoidal_positions, EncoderConfig, EncoderOutput};
pub use optim::{optimizer_step, Adam};
pub use tensor::{Gradients, ParamSet, Tensor};
