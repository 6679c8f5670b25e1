//! Blockchain-anchored identity storage with biometric login.
//!
//! * [`content_store`] – content-addressed blob store (optionally encrypted)
//! * [`ledger`] – append-only transaction chain with a user index
//! * [`consensus`] – fair-chance miner eligibility and selection
//! * [`neural_kernel`], [`face`] – face detection, alignment and embeddings
//! * [`voice`] – acoustic features and GMM speaker authentication
//! * [`calibrate`] – equal-error threshold selection
//! * [`corpus`] – seeded synthetic users for end-to-end runs
//! * [`workflows`] – registration, login and retrieval
//! * [`bench`] – storage/retrieval/throughput benchmarks

pub mod bench;
pub mod calibrate;
pub mod content_store;
pub mod corpus;
pub mod face;
pub mod consensus;
pub mod ledger;
pub mod neural_kernel;
pub mod voice;
pub mod workflows;
