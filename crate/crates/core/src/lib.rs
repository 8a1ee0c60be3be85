pub mod channels;
pub mod diagram;
pub mod error;
pub mod io;
pub mod linalg;
pub mod models;
pub mod network;
pub mod observables;
pub mod optimizer;
pub mod oracle;
pub mod spectral;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Tensor, C64};
