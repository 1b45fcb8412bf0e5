pub mod cascade;
pub mod config;
pub mod credibility;
pub mod error;
pub mod failure;
pub mod grid_sim;
pub mod lp;
pub mod matpower;
pub mod network;
pub mod optimizer;
pub mod powerflow;
pub mod procedure;
pub mod redispatch;
pub mod risk;
pub mod sampling;
pub mod tiny;

pub use error::{Error, Result};
