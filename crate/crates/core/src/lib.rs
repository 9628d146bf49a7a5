//! Multi-agent trajectory prediction over evolving multiscale hypergraphs.

pub mod config;
pub mod data;
pub mod error;
pub mod evolve;
pub mod gmm;
pub mod hypergraph;
pub mod mp;
pub mod nn;
pub mod sim;
pub mod system;
pub mod train_eval;

pub use error::{Error, Result};
