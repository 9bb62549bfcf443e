//! No-reference image quality assessment with dual-branch CNN encoders and
//! Kolmogorov-Arnold regression heads.

pub mod color;
pub mod complexity;
pub mod data;
pub mod encoder;
pub mod error;
pub mod head;
pub mod kan;
pub mod kv;
pub mod losses;
pub mod metrics;
pub mod mlp;
pub mod model;
pub mod preprocess;
pub mod tensor;
pub mod toy;
pub mod trainer;
pub mod weights;

pub use error::{Error, Result};
