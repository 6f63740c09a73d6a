//! Tensor regression neural networks: Tucker-factored encoder and decoder
//! layers around a full tensor contraction, trained by backpropagation.

pub mod backprop;
pub mod baseline;
pub mod bundle;
pub mod datagen;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod layers;
pub mod model;
pub mod optimizer;
pub mod predictor;
pub mod tensor;

pub use error::{Result, TrnnError};
pub use model::{init_model, load_model, predict, save_model, train, NetworkSpec, TrainConfig, TrainReport, TrnnModel};
pub use predictor::Predictor;
pub use tensor::DenseTensor;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/tensors.md")]
    mod tensors {}
    #[doc = include_str!("../../../book/src/network.md")]
    mod network {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/baselines.md")]
    mod baselines {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/benchmarks.md")]
    mod benchmarks {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/formats.md")]
    mod formats {}
}
