//! Uncertainty-annotated contextual goal models compiled to parametric
//! reliability and cost formulae, PRISM MDP emission, a brute-force oracle,
//! a formula-driven adaptation loop and a simulated body sensor network.

pub mod bsnsim;
pub mod cgm;
pub mod compiler;
pub mod gen;
pub mod oracle;
pub mod prismgen;
pub mod runtime;
pub mod symexpr;
