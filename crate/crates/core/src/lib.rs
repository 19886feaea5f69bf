//! Simulation and estimation toolkit for stabilizing functionals of
//! homogeneous Poisson point processes on a periodic window.
//!
//! The crate is organized bottom-up:
//!
//! * [`geometry`]: torus windows, marked configurations, Poisson sampling and
//!   periodized patches.
//! * [`spatial_index`]: exact range and k-nearest queries on the torus.
//! * [`functionals`]: the score functions (packing, birth-growth, germ-grain,
//!   nearest-neighbour threshold and k-NN degree).
//! * [`stabilization`]: statistical certification of stabilization radii and
//!   exponential tail fits.
//! * [`empirical`]: empirical point measures and point-field statistics.
//! * [`estimators`]: replicated Monte Carlo estimators of the limit objects
//!   (value law, LLN, variance density, scaled cumulants, quadratic rate).
//! * [`specinfo`]: exact finite-state checks of the specific-information
//!   variational identities.

pub mod empirical;
pub mod error;
pub mod estimators;
pub mod functionals;
pub mod geometry;
pub mod numeric;
pub mod spatial_index;
pub mod specinfo;
pub mod stabilization;
pub mod streams;

pub use error::{Error, Result};
pub use functionals::FunctionalSpec;
pub use geometry::{GrainLaw, MarkedPoint, PointConfiguration, TorusGeometry};
pub use spatial_index::NeighborIndex;
