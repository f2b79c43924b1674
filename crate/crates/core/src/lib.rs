pub mod error;
pub mod experiment;
pub mod joint;
pub mod onoff;
pub mod protocol;
pub mod quantum;
pub mod reconstruction;

pub use error::{Error, Result};
