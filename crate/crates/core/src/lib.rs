//! MiniCQ, a small CadQuery-like program language, with a voxel geometry
//! kernel and the stages of an offline CAD-data pipeline: generator
//! tracing and slicing, canonicalization, augmentation, quality-diversity
//! sampling, metrics, depth rendering and evolutionary corpus growth.

pub mod augment;
pub mod canon;
pub mod evolve;
pub mod kernel;
pub mod lang;
pub mod manifest;
pub mod metrics;
pub mod proposer;
pub mod qd;
pub mod render;
pub mod trace;
