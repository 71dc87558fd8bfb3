//! Lyapunov function of the closed loop around an optimal equilibrium.

use super::OptimalSolution;
use crate::error::{check_len, Result};
use crate::network::NetworkModel;
use crate::simulator::ClosedLoopState;

/// Closed-loop equilibrium built from an optimal solution. Frequencies are
/// zero and edge angles equal `Cᵀφ*`.
#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    pub theta_e: Vec<f64>,
    pub p_l: Vec<f64>,
    pub mu: Vec<f64>,
    pub phi: Vec<f64>,
    pub eta_plus: Vec<f64>,
    pub eta_minus: Vec<f64>,
}

impl Equilibrium {
    /// `1ᵀφ` is invariant along closed-loop trajectories, so the virtual
    /// angles are shifted to have mean `phi_mean` (the mean of `φ(0)`).
    pub fn from_solution(
        model: &NetworkModel,
        sol: &OptimalSolution,
        phi_mean: f64,
    ) -> Result<Self> {
        let n = model.n();
        check_len("phi_star", &sol.phi_star, n)?;
        check_len("p_l_star", &sol.p_l_star, n)?;
        check_len("mu_star", &sol.mu_star, n)?;
        check_len("eta_plus_star", &sol.eta_plus_star, model.m())?;
        check_len("eta_minus_star", &sol.eta_minus_star, model.m())?;
        let shift = phi_mean - sol.phi_star.iter().sum::<f64>() / n as f64;
        let phi: Vec<f64> = sol.phi_star.iter().map(|p| p + shift).collect();
        Ok(Self {
            theta_e: model.incidence_t_mul(&phi),
            p_l: sol.p_l_star.clone(),
            mu: sol.mu_star.clone(),
            phi,
            eta_plus: sol.eta_plus_star.clone(),
            eta_minus: sol.eta_minus_star.clone(),
        })
    }

    /// Anchor matched to the gauge of `state`.
    pub fn for_state(
        model: &NetworkModel,
        sol: &OptimalSolution,
        state: &ClosedLoopState,
    ) -> Result<Self> {
        let mean = state.ctrl.phi.iter().sum::<f64>() / model.n() as f64;
        Self::from_solution(model, sol, mean)
    }
}

fn half_sq_dist(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()
}

fn rect(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| x.max(0.0)).collect()
}

/// `V = V₁ + V₂` where `V₁` is the weighted squared distance of the loads,
/// multipliers, virtual angles, edge angles and generator frequencies from
/// the equilibrium, and
///
/// ```text
/// V₂ = -(d - P)ᵀ(P* - P) - (φ⁺ - η⁺)ᵀ(η⁺* - η⁺) - (φ⁻ - η⁻)ᵀ(η⁻* - η⁻)
/// ```
///
/// with `P = proj(d)`, `η± = max(φ±, 0)`. Both parts are nonnegative.
pub fn lyapunov(model: &NetworkModel, state: &ClosedLoopState, eq: &Equilibrium) -> Result<f64> {
    lyapunov_scaled(model, state, eq, 1.0)
}

/// Lyapunov function for a controller sped up by `epsilon`: the controller
/// terms are weighted by `1/epsilon`, which keeps `V̇ ≤ 0`.
pub fn lyapunov_scaled(
    model: &NetworkModel,
    state: &ClosedLoopState,
    eq: &Equilibrium,
    epsilon: f64,
) -> Result<f64> {
    state.plant.check(model)?;
    state.ctrl.check(model)?;
    let c = &state.ctrl;
    let p: Vec<f64> = model
        .buses()
        .iter()
        .zip(&c.d)
        .map(|(b, &d)| d.max(b.load_lower).min(b.load_upper))
        .collect();
    let eta_p = rect(&c.varphi_plus);
    let eta_m = rect(&c.varphi_minus);

    let ctrl1 = half_sq_dist(&p, &eq.p_l)
        + half_sq_dist(&c.mu, &eq.mu)
        + half_sq_dist(&c.phi, &eq.phi)
        + half_sq_dist(&eta_p, &eq.eta_plus)
        + half_sq_dist(&eta_m, &eq.eta_minus);
    let mut plant = 0.0;
    for ((line, th), th_star) in model
        .lines()
        .iter()
        .zip(&state.plant.theta_e)
        .zip(&eq.theta_e)
    {
        plant += 0.5 * line.susceptance * (th - th_star) * (th - th_star);
    }
    for (&j, w) in model.generators().iter().zip(&state.plant.omega_g) {
        plant += 0.5 * model.buses()[j].inertia.unwrap_or(0.0) * w * w;
    }

    let mut v2 = 0.0;
    for j in 0..p.len() {
        v2 -= (c.d[j] - p[j]) * (eq.p_l[j] - p[j]);
    }
    for e in 0..eta_p.len() {
        v2 -= (c.varphi_plus[e] - eta_p[e]) * (eq.eta_plus[e] - eta_p[e]);
        v2 -= (c.varphi_minus[e] - eta_m[e]) * (eq.eta_minus[e] - eta_m[e]);
    }
    Ok(plant + (ctrl1 + v2) / epsilon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_support::three_bus;

    fn solution(model: &NetworkModel) -> OptimalSolution {
        OptimalSolution {
            p_l_star: vec![0.1; model.n()],
            phi_star: vec![0.0, 0.05, -0.02],
            mu_star: vec![-0.1; model.n()],
            eta_plus_star: vec![0.0; model.m()],
            eta_minus_star: vec![0.0; model.m()],
            objective: 0.0,
        }
    }

    fn at_equilibrium(model: &NetworkModel, eq: &Equilibrium) -> ClosedLoopState {
        let mut s = ClosedLoopState::zeros(model);
        s.plant.theta_e = eq.theta_e.clone();
        s.ctrl.d = eq.p_l.clone();
        s.ctrl.mu = eq.mu.clone();
        s.ctrl.phi = eq.phi.clone();
        s.ctrl.varphi_plus = eq.eta_plus.clone();
        s.ctrl.varphi_minus = eq.eta_minus.clone();
        s
    }

    #[test]
    fn vanishes_at_the_anchor() {
        let net = three_bus();
        let eq = Equilibrium::from_solution(&net, &solution(&net), 0.3).unwrap();
        let mean: f64 = eq.phi.iter().sum::<f64>() / 3.0;
        assert!((mean - 0.3).abs() < 1e-15);
        let s = at_equilibrium(&net, &eq);
        assert!(lyapunov(&net, &s, &eq).unwrap().abs() < 1e-15);
    }

    #[test]
    fn saturated_filter_contributes_through_the_cross_term() {
        let net = three_bus();
        let eq = Equilibrium::from_solution(&net, &solution(&net), 0.0).unwrap();
        let mut s = at_equilibrium(&net, &eq);
        // d pushed beyond the box: P stays at the bound, V₂ picks up the gap
        s.ctrl.d[0] = 1.5;
        let v = lyapunov(&net, &s, &eq).unwrap();
        let expected = 0.5 * 0.9 * 0.9 - (1.5 - 1.0) * (0.1 - 1.0);
        assert!((v - expected).abs() < 1e-12, "{v} vs {expected}");
    }

    #[test]
    fn frequency_is_weighted_by_inertia() {
        let net = three_bus();
        let eq = Equilibrium::from_solution(&net, &solution(&net), 0.0).unwrap();
        let mut s = at_equilibrium(&net, &eq);
        s.plant.omega_g = vec![1.0, 1.0];
        let v = lyapunov(&net, &s, &eq).unwrap();
        assert!((v - 0.5 * (1.0 + 2.0)).abs() < 1e-12);
    }
}
