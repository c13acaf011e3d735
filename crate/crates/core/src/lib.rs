//! Intrusive stochastic Galerkin solvers for Poisson problems with a lognormal
//! random diffusion coefficient.
//!
//! The crate covers the whole pipeline: Hermite polynomial chaos and its
//! multiplication tensors, Karhunen–Loève expansion of an exponential-covariance
//! field, P1 assembly of the coupled block system, one-level and two-grid
//! restricted additive Schwarz preconditioners (with an algebraic multigrid
//! coarse solve), Krylov solvers, a Picard loop for the nonlinear problem,
//! Monte Carlo verification and desk-scale scalability studies.

pub mod amg;
pub mod assembly;
pub mod bench;
pub mod chaos;
pub mod config;
pub mod dd;
mod error;
pub mod io;
pub mod mcs;
pub mod mesh;
pub mod randomfield;
pub mod solvers;
pub mod sparsela;

pub use error::{Error, Result};
