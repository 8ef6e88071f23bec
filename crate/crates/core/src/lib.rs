//! Ground states, heat kernels and functional inequalities for singular
//! Schrödinger operators `-div(a∇) - V` on stratified domains.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod discretize;
pub mod error;
pub mod geometry;
pub mod heat;
pub mod inequalities;
pub mod linalg;
pub mod potentials;
pub mod quadrature;
pub mod spectral;

pub use error::{Error, Result};
pub use geometry::{
    BallKind, BallSpec, Coord, Exponents, Shape, StratifiedDomain, Stratum, StratumGeometry, Target, VolumeSandwich,
};
