//! Characteristic (double-null) Einstein-Maxwell toolkit.
//!
//! The crate evaluates the null structure, null Bianchi and null Maxwell
//! equations on sampled spheres, audits their signature/scale bookkeeping,
//! builds short-pulse characteristic data on the initial outgoing cone and
//! runs the focusing model that decides whether a trapped sphere forms.

pub mod config;
pub mod currents;
pub mod eqreg;
pub mod formation;
pub mod idata;
pub mod normsuite;
pub mod null_state;
pub mod runner;
pub mod sigcalc;
pub mod sphere_ops;

pub use sphere_ops::{HorizontalField, Rank, SphereGrid};
