pub mod baseline;
pub mod error;
pub mod evalbench;
pub mod features;
pub mod hiermodel;
pub mod lmexp;
pub mod neuralnet;
pub mod textcore;
pub mod training;

pub use error::{Error, Result};
