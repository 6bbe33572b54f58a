//! Kibble-Zurek physics on simulated quantum hardware: Trotterized
//! transverse-field Ising quenches, dense and tensor-network simulation,
//! noise and error mitigation, and kink-number statistics.

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod analysis;
pub mod backend;
pub mod bits;
pub mod error;
pub mod experiment;
pub mod mitigation;
pub mod model;
pub mod mps;
pub mod oracle;
pub mod rng;
pub mod statevector;
pub mod trotter;

pub use backend::Backend;
pub use bits::BitString;
pub use error::{Error, ErrorKind, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/circuits.md")]
    mod circuits {}
    #[doc = include_str!("../../../book/src/backends.md")]
    mod backends {}
    #[doc = include_str!("../../../book/src/mitigation.md")]
    mod mitigation {}
    #[doc = include_str!("../../../book/src/statistics.md")]
    mod statistics {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/acceptance.md")]
    mod acceptance {}
}
