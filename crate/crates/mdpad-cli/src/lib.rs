//! Operator surface for the motion-distillation PAD pipeline: dataset
//! manifests, run configuration, a synthetic corpus generator, the
//! pipeline commands and report/plot emission.

pub mod commands;
pub mod config;
pub mod corpus;
pub mod manifest;
pub mod svg;
