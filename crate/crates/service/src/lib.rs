//! HTTP service and command-line front end for route previews, virtual
//! exploration and description evaluation.

pub mod api;
pub mod cli;
pub mod config;
pub mod error;
pub mod render;
pub mod store;
