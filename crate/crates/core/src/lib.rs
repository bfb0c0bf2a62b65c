pub mod dynamics;
pub mod error;
pub mod kernel;
pub mod quadrature;
pub mod rng;
pub mod stats;
pub mod analytic;
pub mod payoff;
pub mod solver;
pub mod mc;
pub mod verify;
pub mod config;
pub mod cli;
