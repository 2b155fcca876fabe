pub mod adaptive;
pub mod calibrate;
pub mod distance;
pub mod dynamic;
pub mod error;
pub mod ingest;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod record;
pub mod synth;
pub mod taxonomy;

pub use error::{Error, Result};
