//! Equilibrium analysis: an optimization oracle for the load-control
//! problem, KKT residuals, the Lyapunov function of the closed loop, and the
//! end-to-end equilibrium property checks.
//!
//! Nothing here calls into the controller; projections and subgradients are
//! re-implemented locally so that agreement between the closed loop and the
//! oracle is a meaningful check.

pub mod kkt;
pub mod lyapunov;
pub mod oracle;
pub mod pipeline;
pub mod theorem;

use serde::Serialize;

pub use kkt::{kkt_residuals, kkt_residuals_within, KktReport};
pub use lyapunov::{lyapunov, lyapunov_scaled, Equilibrium};
pub use oracle::{solve_olc, OracleOptions};
pub use pipeline::{check_scenario, AnchorSchedule, CheckOptions, CheckOutcome, LyapunovTrace};
pub use theorem::{check_theorem1, BindingLine, Check, Theorem1Report};

use crate::network::NetworkModel;
use crate::simulator::ClosedLoopState;

/// Primal-dual point of the load-control problem. `phi_star` is gauge-fixed
/// to `phi_star[0] = 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimalSolution {
    pub p_l_star: Vec<f64>,
    pub phi_star: Vec<f64>,
    pub mu_star: Vec<f64>,
    pub eta_plus_star: Vec<f64>,
    pub eta_minus_star: Vec<f64>,
    pub objective: f64,
}

impl OptimalSolution {
    /// Candidate read off a closed-loop state (loads and line multipliers
    /// through their projections).
    pub fn from_state(model: &NetworkModel, state: &ClosedLoopState) -> Self {
        let c = &state.ctrl;
        let p_l: Vec<f64> = model
            .buses()
            .iter()
            .zip(&c.d)
            .map(|(b, &d)| d.max(b.load_lower).min(b.load_upper))
            .collect();
        let objective = model
            .buses()
            .iter()
            .zip(&p_l)
            .map(|(b, &x)| b.cost.eval(x))
            .sum();
        let phi0 = c.phi[0];
        Self {
            p_l_star: p_l,
            phi_star: c.phi.iter().map(|p| p - phi0).collect(),
            mu_star: c.mu.clone(),
            eta_plus_star: c.varphi_plus.iter().map(|v| v.max(0.0)).collect(),
            eta_minus_star: c.varphi_minus.iter().map(|v| v.max(0.0)).collect(),
            objective,
        }
    }
}

pub(crate) fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |a, x| a.max(x.abs()))
}
