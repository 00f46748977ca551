//! Contextual bandits for tag-based query refinement, with an offline
//! log-replay harness, a synthetic session generator and multi-tenant
//! snapshot storage.

mod codec;
pub mod datagen;
pub mod domain;
pub mod encoders;
pub mod error;
pub mod neural;
pub mod policies;
pub mod replay;
pub mod tenancy;

pub use error::{Error, Result};
