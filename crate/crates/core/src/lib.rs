//! Gaussian kinematic formula toolkit: Lipschitz–Killing curvatures of
//! parameter spaces, Gaussian Minkowski functionals of rejection regions,
//! field simulation, excursion-set estimators and a Monte Carlo harness that
//! checks the closed forms against simulation.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod excursion;
pub mod fieldsim;
pub mod geomcore;
pub mod gkf;
pub mod gmf;
pub mod mcharness;
pub(crate) mod quad;
pub mod rng;

pub use error::{GkfError, Result};
