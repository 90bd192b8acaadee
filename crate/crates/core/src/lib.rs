//! Attentive encoder-decoder summarization with a semantic-relevance term.
//!
//! The crate covers the whole pipeline at desk scale: a small reverse-mode
//! autodiff engine ([`autodiff`]), character-level text handling ([`text`]),
//! the network and its loss ([`model`]), greedy and beam decoding
//! ([`decoding`]), ROUGE scoring ([`rouge`]) and the Adam training loop with
//! checkpoints and ablations ([`train`]).

pub mod autodiff;
pub mod decoding;
pub mod error;
pub mod kv;
pub mod model;
pub mod rouge;
pub mod text;
pub mod train;

pub use error::{Result, SrbError};
