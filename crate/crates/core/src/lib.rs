//! Multivariate orthogonal polynomial (MVOPR) families built from block
//! factorizations of moment matrices, together with the rational spectral
//! (Geronimus / Christoffel–Geronimus–Uvarov) and additive (Uvarov)
//! transformations of the underlying linear functional, and the integrable
//! lattice flows that deform general biorthogonal families.
//!
//! The crate is organised around a handful of small modules:
//!
//! - [`mindex`]: multi-index combinatorics, graded ordering and the shift
//!   matrices realising coordinate multiplication on the monomial basis;
//! - [`poly`]: dense multivariate polynomials with complex coefficients;
//! - [`quad`]: Gauss–Legendre rules and tensor-product grids;
//! - [`functional`]: constructive linear functionals (densities, atoms,
//!   point multipoles, curve measures) and bilinear Gram generators;
//! - [`block`] / [`factor`]: graded block matrices, block Cholesky / LU,
//!   quasi-determinants;
//! - [`family`]: polynomial families attached to a factorization, their
//!   Christoffel–Darboux kernels and Jacobi matrices;
//! - [`transforms`]: rational spectral transformations through the R-matrix
//!   quasi-determinant formulas, with direct refactorization oracles;
//! - [`uvarov`]: additive point-multipole and curve perturbations;
//! - [`toda`]: time deformations of Gram matrices, Lax/Zakharov–Shabat
//!   residual checks, Baker functions and the bilinear identity;
//! - [`io`]: JSON wire formats shared with the command line front end.

pub mod block;
pub mod error;
pub mod factor;
pub mod family;
pub mod functional;
pub mod io;
pub mod mindex;
pub mod poly;
pub mod quad;
pub mod toda;
pub mod transforms;
pub mod uvarov;

pub use error::Error;

/// Complex scalar used throughout the crate.
pub type C64 = num_complex::Complex64;

/// Dense complex matrix.
pub type CMat = nalgebra::DMatrix<C64>;

/// Dense complex column vector.
pub type CVec = nalgebra::DVector<C64>;
