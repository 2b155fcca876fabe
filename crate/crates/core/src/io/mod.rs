//! File formats: FDMP feature dumps, FDBK model files, key=value configs
//! and the text artifacts passed between subcommands.

pub mod config;
pub mod fdbk;
pub mod fdmp;
pub mod text;

pub use config::{QueryGrid, RunConfig};
pub use fdbk::{read_fdbk, write_fdbk};
pub use fdmp::{read_fdmp, write_fdmp, FeatureSet};
