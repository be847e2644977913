//! File formats, HTTP clients, the evaluation server, and the command line
//! for the metasynth pipeline.

pub mod cli;
pub mod config;
pub mod corpus_io;
pub mod http;
pub mod index_io;
pub mod report;
pub mod runner;
pub mod server;
pub mod store;
