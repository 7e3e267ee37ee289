//! Symbolic–numeric toolkit for vector-field flows and operator
//! exponentials, Schrödinger–Virasoro generators and their finite
//! transformations, non-relativistic limits of Klein–Gordon fields,
//! block-diagonal metric curvature, and coordinates of accelerated frames.

pub mod accframe;
pub mod dd;
pub mod fieldcalc;
pub mod flowexp;
pub mod geomcurv;
pub mod nrlimit;
pub mod quad;
pub mod real;
pub mod svgen;

pub use dd::Dd;
pub use real::Real;
