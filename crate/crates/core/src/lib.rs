//! Sampling-geometry diagnostics and sparse serial-section 3D
//! reconstruction for single-cell spatial data.
//!
//! The crate has two halves. The first simulates tissues as a pairwise
//! Markov random field on a voxel lattice ([`lattice`]), observes them
//! under matched-budget planar or serial geometries ([`sampling`]) and
//! measures how well maximum pseudo-likelihood recovers the generating
//! parameters ([`mple`], [`study`]). The second works on segmented cells:
//! section statistics ([`spatial_stats`]), cross-section matching and 3D
//! centroid estimation ([`matching`]), evaluation against a dense
//! reference ([`evaluation`]) and structure-level analyses
//! ([`structures`]).

pub mod advise;
pub mod cells;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod lattice;
pub mod matching;
pub mod mple;
pub mod optim;
pub mod pipeline;
pub mod rng;
pub mod sampling;
pub mod spatial_index;
pub mod spatial_stats;
pub mod structures;
pub mod study;
pub mod union_find;

pub use error::{Error, Result};
