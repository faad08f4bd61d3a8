//! Command-line tools and the HTTP session service for glanceseg.

pub mod adapter;
pub mod commands;
pub mod service;
