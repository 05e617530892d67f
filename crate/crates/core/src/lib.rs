pub mod bench;
pub mod cli;
pub mod collectives;
pub mod data;
pub mod engine;
pub mod error;
pub mod exchange;
pub mod perfmodel;
pub mod table;
pub mod transport;

pub use error::{Error, Result};
pub use perfmodel::Topology;
pub use table::ColumnTable;
