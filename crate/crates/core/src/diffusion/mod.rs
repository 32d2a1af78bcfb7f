//! Diffusion models, path simulation and Malliavin derivatives.

pub mod expr;
pub mod malliavin;
pub mod model;
pub mod path;

pub use expr::Expr;
pub use malliavin::{malliavin_derivative, second_malliavin_diag, second_malliavin_row};
pub use model::{Coefficients, DerivedCoefficients, DiffusionModel, ModelSpec};
pub use path::{check_grid, simulate_path, taylor_step, simulate_with_increments, SimulatedPath, DEFAULT_REFINE};
