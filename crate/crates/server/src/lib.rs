//! HTTP service, push stream and command line over [`hoi_core`].

pub mod api;
pub mod cli;
