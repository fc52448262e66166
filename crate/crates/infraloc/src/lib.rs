//! File formats, parallel execution and the `infraloc` command line on top of
//! [`infraloc_core`].

pub mod cli;
pub mod error;
pub mod exec;
pub mod formats;
pub mod manifest;
pub mod overlay;
pub mod pose_doc;

pub use error::{Error, Result};
