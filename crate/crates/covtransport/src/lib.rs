//! File formats, run reports and the command-line tool around
//! [`covtransport_core`].

pub mod cli;
pub mod io;
pub mod report;

pub use covtransport_core as model;
pub use io::{load_curves, read_matrix, write_curves, write_matrix, IoError};
pub use report::{read_report, write_report, RunReport};
