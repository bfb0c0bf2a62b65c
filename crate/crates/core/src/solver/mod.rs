//! Finite-difference solver for the obstacle problem on a tensor grid.

pub mod generator;
pub mod grid;
pub mod jumps;
pub mod march;
pub mod surface;
pub mod tridiag;

pub use generator::{apply_generator, GeneratorCoeffs, GridFunction};
pub use grid::Grid;
pub use jumps::JumpQuadrature;
pub use march::{solve, solve_localized, ExerciseMode, ObstacleMethod, SolverOptions, VInterp};
pub use surface::ValueSurface;
