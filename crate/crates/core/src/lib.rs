pub mod algebra;
pub mod doc;
pub mod error;
pub mod expfam;
pub mod gme;
pub mod model;
pub mod sdp;
pub mod systest;
pub mod tomo;

pub use error::{Error, Result};
