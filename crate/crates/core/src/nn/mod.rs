//! Dense-network engine: batched forward/backward passes, AdamW, sinusoidal
//! timestep embeddings, and the loss functions used by the trainers.

mod adamw;
mod dense;
mod embed;
mod loss;

pub use adamw::{AdamW, AdamWConfig};
pub use dense::{Activation, BatchCache, DenseNet, NetGrads};
pub use embed::sinusoidal_embedding;
pub use loss::{cross_entropy_grad, cross_entropy_loss, mse_grad, mse_loss, softmax};
