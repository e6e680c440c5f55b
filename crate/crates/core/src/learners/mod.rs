//! Base learners: the per-site softmax classifier and the noisy-channel
//! simulator used in place of trained models.

pub mod channel;
pub mod softmax;

pub use channel::{channel_accuracy, channel_emit, channel_posterior, ChannelAccuracy, ChannelConfig, NoisyChannel};
pub use softmax::{loss_and_gradient, train_softmax, SoftmaxModel, SoftmaxTrainer, TrainConfig};
