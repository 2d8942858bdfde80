//! Brascamp-Lieb-type constants computed from both sides of the
//! relative-entropy duality.
//!
//! The crate is `no_std` (it needs `alloc`). Everything here is a pure
//! numerical kernel: probability primitives on finite alphabets, the
//! forward (broadcast channel) and reverse (multiple access channel)
//! dualities, the classical special cases, and the finite-dimensional
//! Gaussian reductions. Reading problems from disk, reporting, and running
//! restarts on a thread pool live in the `blduality` crate.
//!
//! All logarithms are natural; every value is in nats.

#![no_std]
// When std is linked into the build its inherent float methods shadow `Float`.
#![allow(unused_imports)]

extern crate alloc;

mod error;
pub mod exec;
pub mod forward;
pub mod gaussian;
mod linalg;
mod lp;
pub mod prob;
pub mod reverse;
pub mod simplex;
pub mod special;

pub use error::{Error, Result};
pub use exec::{Executor, Sequential};
pub use prob::{Channel, Dist, Measure};
