//! Hyperbolic random graphs: exact sampling and graph construction, isolated
//! and extreme vertex scores, limit constants, and Monte Carlo experiments on
//! the fluctuations of those scores.

pub mod experiments;
pub mod geometry;
pub mod graph;
pub mod measures;
pub mod model;
pub mod quadrature;
pub mod sampler;
pub mod scores;
pub mod stats;
