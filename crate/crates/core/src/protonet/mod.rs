//! Episodic few-shot learning: episode sampling, class prototypes,
//! distance-softmax classification, the episode loss and the training loop.

mod episode;
mod loss;
mod optimizer;
mod prototypes;
mod train;

pub use episode::{sample_episode, sample_episode_with, Episode};
pub use loss::{episode_embeddings, episode_input, episode_loss, episode_loss_and_grad, prototype_head, HeadOutput};
pub use optimizer::AdamW;
pub use prototypes::{classify, compute_prototypes, squared_distance, Classification, PrototypeSet};
pub use train::{
    checkpoint_train_config, train, Distance, EpisodeRecord, TrainConfig, Trainer, TrainingLog, ValidationPoint,
};
