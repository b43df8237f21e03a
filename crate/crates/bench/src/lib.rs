pub use currier_core::*;
