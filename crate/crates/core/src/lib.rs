pub mod channels;
pub mod error;
pub mod fidelity;
pub mod fisher;
pub mod linalg;
pub mod states;
pub mod verify;

pub use error::{Error, Result};
