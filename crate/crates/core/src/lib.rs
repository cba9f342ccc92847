//! Core numerics for wave propagation in a two-component domain whose
//! interior interface is imperfect: the solution jumps across the interface
//! and the flux through it is proportional to that jump.
//!
//! The crate builds structured two-component box domains, assembles the
//! coupled stiffness/mass operators, integrates the wave system with a
//! leapfrog scheme, evaluates energy and multiplier identities, estimates
//! observability constants empirically, and synthesizes exact internal
//! controls by conjugate-gradient inversion of the HUM operator.
//!
//! The crate is `no_std`-compatible (`default-features = false`); all file
//! formats, configuration and CLI plumbing live in the companion crate.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod math;

pub mod geometry;
pub mod material;
pub mod discretization;
pub mod wave;
