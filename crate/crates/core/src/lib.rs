pub mod config;
pub mod data;
pub mod datamodel;
pub mod error;
pub mod experiment;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod networks;
pub mod pipeline;

pub use error::{Error, Result};
