//! Newton-type solvers for generalized equations.
//!
//! A generalized equation asks for x with 0 in F(x) + T(x), where F is smooth
//! and T is a set-valued map carrying the problem's nonsmooth structure. Two
//! forms are supported:
//!
//! * polyhedral: T(x) is the normal cone to a polyhedral set D, composed with
//!   a smooth inner map G, covering variational inequalities and KKT systems;
//! * composite: T(x) is the subdifferential of a separable convex function q,
//!   covering regularized optimality systems.
//!
//! Both solvers build a local model at each iterate from one element of a
//! generalized derivative and inherit superlinear convergence from the
//! semismoothness of the residual. The crate exposes the building blocks
//! (polyhedral geometry, proximal maps, a least-distance QP engine) alongside
//! the drivers, a registry of synthetic benchmark problems, and a CLI.

pub mod cli;
pub mod ge_composite;
pub mod ge_polyhedral;
pub mod linalg;
pub mod newton;
pub mod polyhedral;
pub mod problems;
pub mod prox;
pub mod qp;
pub mod tol;
