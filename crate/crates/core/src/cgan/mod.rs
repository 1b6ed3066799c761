//! Conditional GAN translating normalised radiance frames into normalised
//! rain frames: a U-Net generator with a dilated bottleneck, a PatchGAN
//! discriminator and a fixed random feature stack for the perceptual term.
//!
//! Parameters are stored in `f32`; forward and backward passes run in `f64`.

pub mod checkpoint;
pub mod layers;
pub mod loss;
pub mod nets;
pub mod optim;
pub mod tensor;
pub mod train;

pub use checkpoint::{
    checkpoint_from_bytes, checkpoint_to_bytes, read_checkpoint, write_checkpoint,
};
pub use loss::{bce_with_logits, loss_discriminator, loss_generator, GenLoss, LossWeights};
pub use nets::{GanArchitecture, PerceptualExtractor};
pub use optim::{cyclic_lr, TrainConfig};
pub use train::{
    generator_objective, predict, train, train_step, training_pairs, GanCheckpoint, StepMetrics,
    TrainObserver, TrainingPair,
};
