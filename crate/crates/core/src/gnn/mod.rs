//! Message-passing surrogate for steady network flow.
//!
//! Node and edge features are lifted to a latent width by encoder MLPs,
//! refined by residual message-passing layers, and decoded into a pressure
//! per node and a flow per edge. The whole stack is run for several passes;
//! each later pass sees the previous prediction as an extra input. Known
//! boundary pressures are written over the pressure output after every pass.

mod features;
mod model;
mod params;
mod tape;
mod train;

pub use features::{
    encode, encode_sample, normalized_targets, Batch, EncodedSample, GraphFeatures, Moments,
    NormStats, EDGE_FEATURES, NODE_FEATURES,
};
pub use model::{
    batch_loss, check_gradients, forward, loss, pass_loss, predict, predict_normalized, PassOutput,
};
pub use params::{Layout, MlpSlots, ModelConfig, ModelParams, EDGE_INPUTS, NODE_INPUTS};
pub use tape::{silu, Tape, Var, LAYER_NORM_EPS};
pub use train::{
    cosine_lr, fit, mean_loss, train, Adam, Checkpoint, History, HistoryRow, TrainConfig,
    TrainOutcome, CHECKPOINT_VERSION,
};

pub(crate) use model::to_state;
