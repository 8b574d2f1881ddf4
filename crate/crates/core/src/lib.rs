pub mod adversary;
mod clock;
pub mod dcopf;
pub mod decomposition;
pub mod error;
pub mod evaluation;
mod export;
pub mod parallel;
pub mod scuc;
pub mod solver;
pub mod system;
pub mod uncertainty;

pub use error::{Error, Result};
