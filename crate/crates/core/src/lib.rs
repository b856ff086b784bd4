#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod model;
pub mod spectral;

pub use error::{Error, Result};
pub use model::{validate_model, ModelSpec, OffspringLaw, ValidationReport};
pub use spectral::{spectral_data, Matrix, SpectralData};
pub mod config;
pub mod experiments;
pub mod rng;
pub mod simulator;
pub mod spine;
pub mod stats;
pub mod testfn;
pub mod fkpp;
pub mod extremal;
