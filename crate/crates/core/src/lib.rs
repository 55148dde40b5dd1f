//! Tensorized Map-Reduce Galerkin assembly.
//!
//! Stage I ([`batch`]) evaluates every element-local operator as one batched
//! contraction over element-major tensors. Stage II ([`reduce`]) aggregates
//! them into global CSR operators through precomputed binary routing
//! matrices. On top sit a Jacobi/BiCGSTAB [`solver`], [`physics`] problem
//! definitions with wave and Allen–Cahn steppers, and adjoint-based SIMP
//! topology optimization in [`topopt`].

pub mod batch;
pub mod error;
pub mod io;
pub mod linalg;
pub mod mesh;
pub mod physics;
pub mod reduce;
pub mod solver;
pub mod topopt;

pub use error::{FemError, Result};
