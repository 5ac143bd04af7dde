//! Exact toric Fano polytope geometry and numerical Kähler–Einstein heights.

pub mod analysis;
pub mod ding;
pub mod error;
pub mod io;
pub mod legendre;
pub mod mabuchi;
pub mod polytope;
pub mod rational;

pub use error::{Error, Result};
pub use polytope::{builtin, Builtin, HalfSpace, LatticeClass, RationalPolytope, Triangulation};
pub use rational::{Rational, RationalVector};
