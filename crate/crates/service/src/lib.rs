//! Persistent project store, single-writer project engines, the HTTP API and
//! the operator CLI.

pub mod api;
pub mod cli;
pub mod engine;
pub mod error;
pub mod gateway;
pub mod store;
pub mod writer;
