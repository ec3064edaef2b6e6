//! Data ingestion, association scans and simulation output for the `gscale`
//! command-line tool.

pub mod error;
pub mod io;
pub mod scan;
pub mod simulate;
