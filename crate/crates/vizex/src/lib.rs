//! Command-line tool and HTTP service for the vizex engine.

pub mod api;
pub mod cli;
