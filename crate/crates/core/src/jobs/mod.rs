//! Reference workloads built on the engine.

pub mod datagen;
pub mod input;
pub mod kmeans;
pub mod pi;
pub mod wordcount;
