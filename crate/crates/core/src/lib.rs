//! Copula-based sensitivity analysis for long-term treatment effects
//! identified from surrogate outcomes.

pub mod copulas;
pub mod data;
pub mod dgp;
pub mod dml;
pub mod error;
pub mod learners;
pub mod numeric;
pub mod nuisance;
pub mod wsi;

pub use copulas::{CopulaSpec, Family};
pub use data::{CombinedDataset, Sample};
pub use error::{Error, Result};
pub use wsi::{Arm, Bound, Target};
