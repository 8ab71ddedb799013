//! Offline evaluation of conversational recommenders against targets that
//! have judged alternative items.
//!
//! The crate covers the whole pipeline: catalogs and similarity search,
//! relevance judgments, target sampling and pooling, simulated users
//! (including meta-simulators that may settle for an alternative), systems
//! under test, the dialog loop and its metrics.

pub mod catalog;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod judgments;
pub mod pooling;
pub mod rng;
pub mod simulate;
pub mod synth;
pub mod systems;

pub use catalog::{Catalog, ItemId};
pub use error::{Error, Result};
pub use judgments::JudgmentSet;
