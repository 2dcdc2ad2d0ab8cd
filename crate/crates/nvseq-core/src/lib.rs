//! Nonverbal conversation models: seq2seq listening and speaking over
//! AU+POSE frame sequences, trained with a weighted MSE plus a continuity
//! penalty, and a temporally-smoothed conditional GAN that renders frames
//! into schematic face images.

pub mod error;
pub mod features;
pub mod losses;
pub mod numerics;
pub mod seqmodels;
pub mod training;

pub use error::{Error, Result};
pub use features::{AuPose, AuPoseSequence, ConversationSample, NormStats, Split};
pub use losses::LossConfig;
pub use numerics::{ParamStore, RealArray, Tape};
