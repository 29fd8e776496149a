//! Toolkit for the two FinSim-4 ESG systems: taxonomy enrichment through
//! sentence embeddings plus multinomial logistic regression, and binary
//! sustainable/unsustainable sentence classification through an encoder
//! representation feeding a feed-forward head.
//!
//! The crate is organized around one shared embedding layer:
//!
//! * [`corpus`] — taxonomy and sentence-dataset ingestion, validation, merging
//! * [`embedding`] — pluggable text-to-vector backends and similarity utilities
//! * [`concept`] — multinomial logistic regression over term embeddings with
//!   full probability ranking
//! * [`sustainability`] — feed-forward classification head over sentence
//!   encoder outputs, with an exact-gradient training loop
//! * [`eval`] — accuracy, mean rank, stratified splitting, report generation
//! * [`fortia`] — published statistics of the FinSim-4 datasets and
//!   deterministic synthetic stand-ins shaped to them
//!
//! Everything here is deterministic: backends, training, splitting, and
//! ranking all derive their randomness from explicit seeds, and repeated runs
//! produce bit-identical models and reports.

pub mod concept;
pub mod corpus;
pub mod embedding;
pub mod eval;
pub mod fortia;
mod math;
pub mod sustainability;
pub mod synthetic;
