//! Decomposes HTML tables into image, text and layout modalities, builds
//! cell-level QA datasets from cell-ID-annotated questions, and scores
//! predictions with exact-match accuracy and ANLS.
//!
//! The pipeline runs `table_model` → `layout_engine` → `modality_export`,
//! with `qa_builder` tying tables to questions and `bundle` writing the
//! results to disk. `fusion_reference` is a small numerical model of how
//! layout tokens are embedded and interleaved with text.

pub mod bundle;
pub mod cli;
pub mod fusion_reference;
pub mod layout_engine;
pub mod metrics;
pub mod modality_export;
pub mod qa_builder;
pub mod table_model;
