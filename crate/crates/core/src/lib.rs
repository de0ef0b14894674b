//! Value distribution of `F'/F(sigma + it)` for L-functions with polynomial
//! Euler products: the limiting density `M_sigma`, its characteristic
//! function, the random Euler product model, approximants along vertical
//! lines, and the experiments comparing them.

pub mod approximant;
pub mod density;
pub mod empirical;
pub mod error;
pub mod experiments;
pub mod lfunc;
pub mod localfactor;
pub mod primes;
pub mod special;
pub mod testfn;

pub use error::{Error, Result};
pub use lfunc::LFunctionSpec;
