pub mod abstractor;
pub mod corpus;
pub mod decoding;
pub mod error;
pub mod extractor;
pub mod metrics;
pub mod pipeline;
pub mod proxy;
pub mod rl;
pub mod substrate;

pub use error::{Error, Result};
