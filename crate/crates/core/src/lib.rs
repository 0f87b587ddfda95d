//! Branch & merge notebook engine.
//!
//! A notebook is a chain of stages; duplicating a window turns its stage
//! into a branch group, and every later window then shows one result per
//! combination of upstream alternatives.

pub mod engine;
pub mod layout;
pub mod minilang;
pub mod notebook;
pub mod oracle;
pub mod persistence;
pub mod protocol;
pub mod telemetry;

pub use engine::{upstream_combinations, Combination, ExecState, ExecStatus, OutputEntry};
pub use notebook::{Cell, EditError, Notebook, Stage, Window};
