//! Numerical toolkit for discrete integral varifolds and Q-valued functions.
//!
//! The crate models a varifold as an atomic quadrature measure carrying
//! tangent planes, integer multiplicities and mean curvature vectors, and
//! provides
//!
//! * linear algebra on unoriented planes ([`geometry`]),
//! * the varifold itself, excess functionals and scenario generators
//!   ([`varifold`]),
//! * the calculus of `Q`-valued functions with Almgren's matching metric
//!   ([`qvalued`]),
//! * the cylinder tilt and two-term height functionals ([`excess`]),
//! * the Lipschitz `Q`-valued approximation construction ([`approx`]),
//! * experiment drivers, CSV output and the command line front end
//!   ([`harness`]).
//!
//! Constants that only exist through compactness arguments are never
//! computed; they are configuration inputs, and experiments report the
//! empirical constants they observe.

pub mod approx;
pub mod error;
pub mod excess;
pub mod geometry;
pub mod harness;
pub mod numeric;
pub mod qvalued;
pub mod varifold;

pub use error::{Error, Result};
pub use geometry::{Cylinder, Height, Plane};
pub use qvalued::{QField, QValue};
pub use varifold::{Atom, Constants, DiscreteVarifold};
