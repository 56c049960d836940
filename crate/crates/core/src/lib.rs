//! Two-stage EEG-to-text decoding: word-aligned EEG features are decoded into
//! ordered keyword anchors from a fixed vocabulary, and anchors are expanded
//! into a single sentence with retrieval-grounded prompting. Includes the
//! evaluation harness, information-scale helpers and a synthetic benchmark.

pub mod aligner;
pub mod bench;
pub mod corpus;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod info_scale;
pub mod reconstruct;
pub mod synth;
pub mod vocab;

pub use error::{Error, Result};
