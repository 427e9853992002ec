//! Review service for extraction runs. Each run is an initial extraction
//! record plus an append-only log of reviewer events; the current state is
//! a pure fold of that log, so replaying it reproduces every export.

pub mod api;
pub mod error;
pub mod model;
pub mod render;
pub mod state;
pub mod store;

pub use error::CurationError;
pub use model::{Action, Decision, DerivedStage, ReviewEvent, ReviewStage, ReviewTask, RunMeta, RunStatus, TaskStatus, TaskTarget};
pub use state::{ExportBundle, RunState};
pub use store::{load_run_dir, Pipeline, RunSource, RunStore};
