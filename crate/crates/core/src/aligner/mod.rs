//! EEG-to-keyword alignment: encoder, contrastive objective, training and
//! ordered anchor decoding.

mod checkpoint;
mod config;
mod decode;
pub mod encoder;
mod loss;
mod model;
pub mod nn;
mod train;

pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointHeader, BCLM_MAGIC, BCLM_VERSION};
pub use config::{EncoderConfig, Profile, TrainConfig};
pub use decode::{decode_anchors, predict_segments, select_anchors, AnchorEntry, AnchorSequence, SegmentPrediction};
pub use encoder::{Encoder, EncoderWeights, ForwardCache};
pub use loss::{alignment_loss, discrimination_loss, softmax_scaled, target_rank, LossGrad};
pub use model::AlignerModel;
pub use train::{
    argmax_rows, batch_gradient, evaluate_alignment, prepare_sequence, prepare_sequences, train, write_training_log,
    AlignmentStats, EpochMetrics, TrainOutcome, TrainSequence,
};
