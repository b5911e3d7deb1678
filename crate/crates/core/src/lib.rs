pub mod baselines;
pub mod error;
pub mod game;
pub mod harness;
pub mod math;
pub mod nn;
pub mod soft;

pub use error::{Error, Result};
pub mod rommeo_ac;
pub mod rommeo_q;
