//! Triplet objectives over the four local descriptors and their meta
//! descriptors, with analytic gradients, and a trainer for per-channel
//! projections and codebook centroids.

mod data;
mod loss;
mod model;
mod train;
mod vlad;

pub use data::{generate_triplets, prepare_triplet, TrainingTriplet, TripletSample};
pub use loss::{
    loss_invariant, loss_local, loss_meta, loss_variant, mine_negatives, rotation_factor, total_loss, triplet_loss,
    uses_invariant_loss, variant_factor, ChannelSet, Correspondences, DescriptorGrad, Descriptors, Evaluated, LossConfig,
    LossParts, MetaGrad, Negative, PairGrad, TotalGrad, TripletDescriptors, NEGLIGIBLE_ROTATION,
};
pub use model::{Model, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use train::{evaluate, train, Gradient, LossRecord, OptimizerConfig, OptimizerKind, TrainConfig, TrainOutcome};
pub use vlad::{meta_descriptors, Centroids};
