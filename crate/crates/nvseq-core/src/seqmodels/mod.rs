//! Sequence models: the relu6-LSTM cell, the listening encoder-decoder, and
//! the text-conditioned speaking model.

pub mod listening;
pub mod lstm;
pub mod speaking;

pub use listening::{DecodeMode, ListeningModel, ListeningModelConfig};
pub use lstm::{lstm_cell_step, LstmLayerParams};
pub use speaking::{EmbeddingTable, SpeakingModel, SpeakingModelConfig};
