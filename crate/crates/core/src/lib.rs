pub mod error;
pub mod fredholm;
pub mod freeconv;
pub mod io;
pub mod kernel;
pub mod measures;
pub mod montecarlo;
pub mod quad;
pub mod roots;

pub use error::{Error, Result};
