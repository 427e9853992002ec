use std::path::PathBuf;

use thiserror::Error;

use crate::model::{DerivedStage, ReviewStage, TaskStatus};

fn list<T: std::fmt::Debug>(items: &[T]) -> String {
    items.iter().map(|s| format!("{s:?}").to_lowercase()).collect::<Vec<_>>().join(", ")
}

#[derive(Debug, Error)]
pub enum CurationError {
    #[error("unknown run {0}")]
    UnknownRun(String),
    #[error("unknown task {0}")]
    UnknownTask(String),
    #[error("run has no page {0}")]
    UnknownPage(u32),
    #[error("document not found: {0}")]
    DocumentNotFound(PathBuf),
    #[error("run {0} is not ready for review")]
    NotReady(String),
    #[error("task {task} is already {status:?}")]
    TerminalTask { task: String, status: TaskStatus },
    #[error("invalid payload: {0}")]
    InvalidPayload(String),
    #[error("pending tasks upstream: {}", list(.0))]
    PendingUpstream(Vec<ReviewStage>),
    #[error("stages with pending tasks: {}", list(.0))]
    NotExportable(Vec<ReviewStage>),
    #[error("recompute first; dirty: {}", list(.0))]
    Dirty(Vec<DerivedStage>),
    #[error("event sequence broken: expected {expected}, got {got}")]
    Sequence { expected: u64, got: u64 },
    #[error("no pipeline backends configured; submit an extraction record instead")]
    NoPipeline,
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
}

impl CurationError {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CurationError {
        let path = path.into();
        move |source| CurationError::Io { path, source }
    }

    pub(crate) fn json(path: impl Into<PathBuf>) -> impl FnOnce(serde_json::Error) -> CurationError {
        let path = path.into();
        move |source| CurationError::Json { path, source }
    }
}
