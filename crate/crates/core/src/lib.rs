pub mod analysis;
pub mod circuit;
pub mod error;
pub mod exact;
pub mod gates;
pub mod harness;
pub mod mpdo;
pub mod mps;
pub mod noise;
pub mod qec;
pub mod tensor;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
pub use tensor::{qr, svd_truncated, ComplexTensor, SvdResult};
