//! Extraction pipeline: parses a document, runs the structure and
//! measurement branches concurrently through model backends, joins the
//! results and persists an [`bioextract_core::record::ExtractionRecord`].
//! Backend calls can be recorded to and replayed from a cassette.

pub mod backend;
pub mod cassette;
pub mod config;
pub mod orchestrator;
pub mod schema;

pub use backend::{Backends, BackendError, Envelope, RetryPolicy, Transport};
pub use cassette::{Cassette, CassetteMode};
pub use config::PipelineConfig;
pub use orchestrator::{dedup_structures, explicit_structures, run_batch, run_document, DocumentInput, PipelineError, RunOptions};
