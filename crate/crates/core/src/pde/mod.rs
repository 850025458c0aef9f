//! Explicit finite-difference solvers for the Fokker-Planck equation and
//! the Witten equation on 1-forms in two dimensions.

mod grid;
mod solver;

pub use grid::{Grid2D, GridField, MIN_NODES};
pub use solver::{
    apply_l_star, apply_l_tilde_star, field_csv, gaussian_bump, solve, solve_fp, solve_witten,
    Equation, GridPotential, PdeConfig, PdeRun, Snapshot,
};
