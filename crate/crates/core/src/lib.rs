//! Core data model and algorithms for extracting protein-ligand bioactivity
//! records from documents: chemistry, Markush enumeration, measurement
//! normalization, joining, and evaluation.

pub mod chem;
pub mod eval;
pub mod geometry;
pub mod join;
pub mod markush;
pub mod measure;
pub mod record;
pub mod scalar;

pub use scalar::Scalar;

/// Box type used throughout the pipeline.
pub type PageBox = geometry::BBox<f64>;
