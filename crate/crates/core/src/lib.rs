pub mod concept;
pub mod env;
pub mod error;
pub mod fixture;
pub mod formats;
pub mod kb;
pub mod mazegen;
pub mod metrics;
pub mod oracle;
pub mod proto;
pub mod render;
pub mod testgen;
pub mod types;

pub use error::{Error, Result};
