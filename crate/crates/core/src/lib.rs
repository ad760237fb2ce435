//! Mutation-selection dynamics on finite trait spaces at small mutation
//! scale, their Hamilton-Jacobi limit, and cross-checks between them.

pub mod config;
pub mod equilibria;
pub mod error;
pub mod finite_ode;
pub mod hj;
pub mod montecarlo;
pub mod output;
pub mod pde1d;
pub mod scenario;
pub mod study;
pub mod subset;
pub mod variational;

mod integrate;

pub use config::*;
pub use equilibria::*;
pub use error::*;
pub use finite_ode::*;
pub use hj::*;
pub use montecarlo::*;
pub use pde1d::*;
pub use scenario::*;
pub use study::*;
pub use subset::Subset;
pub use variational::*;
