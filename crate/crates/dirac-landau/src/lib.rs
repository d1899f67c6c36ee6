//! Numerical laboratory for the two-dimensional magnetic Dirac operator and its
//! half-plane restriction under the infinite-mass boundary condition.
//!
//! The crate evaluates the explicit objects attached to these operators and
//! cross-validates them against one another:
//!
//! * [`specfun`]: the Macdonald functions K0, K0' and the Weber parabolic
//!   cylinder function U(a,z) that every kernel and the secular eigenvalue
//!   backend are built from.
//! * [`kernels`]: free and half-plane resolvent integral kernels, their
//!   magnetic phase dressings, and numerical verifiers for the defining
//!   identities (Dirac equation residual, boundary condition, Schur bounds).
//! * [`edge_fiber`]: the half-line fiber operator at momentum xi, solved by a
//!   staggered-grid discretization with a parabolic-cylinder secular equation
//!   as an independent second backend; dispersion branches and their
//!   Hellmann-Feynman velocities.
//! * [`funcalc`]: smooth compactly supported test functions, almost-analytic
//!   extensions, and a Helffer-Sjostrand functional calculus for small
//!   self-adjoint matrices.
//! * [`correspondence`]: bulk trace functionals, the integrated density of
//!   states, the Streda slope, edge current traces, spectral flow, and the
//!   real-space Chern character of the zero-mode projection, assembled into a
//!   bulk-edge verification report.
//! * [`checks`]: the runnable verification suites behind the CLI `verify`
//!   subcommand.

pub mod checks;
pub mod correspondence;
pub mod edge_fiber;
pub mod funcalc;
pub mod kernels;
pub mod specfun;

pub(crate) mod quad;
