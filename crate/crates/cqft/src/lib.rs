//! Desk-scale machinery for multi-scale constructive expansions of bosonic
//! Gaussian field theories, and its application to the Lévy area of
//! fractional Brownian motion.

pub mod cluster;
pub mod forests;
pub mod levyarea;
pub mod poly;
pub mod powercount;
pub mod quad;
pub mod rgflow;
pub mod rng;
pub mod scales;
pub mod series;
pub mod spectral;
pub mod tour;
pub mod wick;
