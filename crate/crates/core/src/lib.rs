pub mod bubbles;
pub mod config;
pub mod continuation;
pub mod degree;
pub mod error;
pub mod field;
pub mod fit;
pub mod functional;
pub mod green;
pub mod harmonics;
pub mod io;
pub mod kfield;
pub mod model;
pub mod operators;
pub mod parametrize;
pub mod reduced;
pub mod special;
pub mod sphere;
pub mod suites;

pub use error::{QcError, Result};
pub use field::Field;
pub use model::{ManifoldModel, ModelSpec};
