//! Distributed optimal load-frequency control on a linearized power network.
//!
//! * [`network`]: buses, lines, incidence and Laplacian operators, TOML I/O
//! * [`costs`]: convex piecewise-quadratic costs and Clarke subgradients
//! * [`dynamics`]: swing dynamics with algebraic load buses
//! * [`controller`]: the primal-dual load controller with line-limit filters
//! * [`simulator`]: RK4 closed loop, scenarios, CSV logs and settling
//! * [`analysis`]: optimization oracle, KKT residuals, Lyapunov function

pub mod analysis;
pub mod controller;
pub mod costs;
pub mod dynamics;
pub mod error;
pub mod network;
pub mod simulator;

#[cfg(test)]
mod test_support;

pub use analysis::{
    check_theorem1, kkt_residuals, lyapunov, solve_olc, Equilibrium, KktReport, OptimalSolution,
    OracleOptions, Theorem1Report,
};
pub use controller::{ControllerConfig, ControllerState, MismatchSource};
pub use costs::{PiecewiseCost, SelectionRule};
pub use error::{Error, Result};
pub use network::NetworkModel;
pub use simulator::{ClosedLoopState, Scenario};
