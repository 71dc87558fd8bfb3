//! Residuals of the optimality conditions of the load-control problem.
//!
//! With `g_j ∈ ∂f_j(P_j)` chosen freely inside the Clarke interval:
//!
//! ```text
//! P  = proj_[P_min, P_max](P - g - μ)
//! 0  = L μ + C (η⁺ - η⁻)
//! η⁺ = max(η⁺ + Cᵀφ - θ_max, 0)
//! η⁻ = max(η⁻ + θ_min - Cᵀφ, 0)
//! 0  = P - P^m + L φ
//! ```

use serde::Serialize;

use super::{max_abs, OptimalSolution};
use crate::error::{check_len, Result};
use crate::network::NetworkModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KktReport {
    /// Load stationarity, minimized over the Clarke interval at each bus.
    pub stationarity: f64,
    /// `‖Lμ + C(η⁺ - η⁻)‖∞`.
    pub multiplier_balance: f64,
    /// Projection residuals of `η±` (sign, feasibility and complementarity).
    pub line_complementarity: f64,
    /// `‖P - P^m + Lφ‖∞`.
    pub power_balance: f64,
    /// Distance of `P` outside its box.
    pub load_feasibility: f64,
}

impl KktReport {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.multiplier_balance)
            .max(self.line_complementarity)
            .max(self.power_balance)
            .max(self.load_feasibility)
    }
}

fn clamp(x: f64, lo: f64, hi: f64) -> f64 {
    x.max(lo).min(hi)
}

/// `min_{g ∈ [g_lo, g_hi]} |P - proj(P - g - μ)|`. The map is nondecreasing
/// in `g`, so the minimum sits at an end of the interval or is zero.
fn load_residual(p: f64, mu: f64, g_lo: f64, g_hi: f64, lo: f64, hi: f64) -> f64 {
    let h = |g: f64| p - clamp(p - g - mu, lo, hi);
    let (a, b) = (h(g_lo), h(g_hi));
    if a >= 0.0 {
        a
    } else if b <= 0.0 {
        -b
    } else {
        0.0
    }
}

pub fn kkt_residuals(
    model: &NetworkModel,
    p_m: &[f64],
    sol: &OptimalSolution,
) -> Result<KktReport> {
    kkt_residuals_within(model, p_m, sol, 0.0)
}

/// Like [`kkt_residuals`], but the subgradient may be taken anywhere in
/// `∂f` over `[P - radius, P + radius]` (the Goldstein enlargement). A
/// numerically settled point a few ulps or a step size away from a kink
/// then still certifies the kink.
pub fn kkt_residuals_within(
    model: &NetworkModel,
    p_m: &[f64],
    sol: &OptimalSolution,
    radius: f64,
) -> Result<KktReport> {
    let (n, m) = (model.n(), model.m());
    check_len("p_m", p_m, n)?;
    check_len("p_l_star", &sol.p_l_star, n)?;
    check_len("phi_star", &sol.phi_star, n)?;
    check_len("mu_star", &sol.mu_star, n)?;
    check_len("eta_plus_star", &sol.eta_plus_star, m)?;
    check_len("eta_minus_star", &sol.eta_minus_star, m)?;

    let lap = model.laplacian_weighted();
    let inc = model.incidence().to_dmatrix();
    let col = |v: &[f64]| nalgebra::DVector::from_column_slice(v);
    let (p, mu, phi) = (col(&sol.p_l_star), col(&sol.mu_star), col(&sol.phi_star));
    let eta = col(&sol.eta_plus_star) - col(&sol.eta_minus_star);

    let stationarity = max_abs(model.buses().iter().enumerate().map(|(j, b)| {
        let (lo, hi) = (
            b.cost.clarke(p[j] - radius).lo,
            b.cost.clarke(p[j] + radius).hi,
        );
        load_residual(p[j], mu[j], lo, hi, b.load_lower, b.load_upper)
    }));
    let multiplier_balance = max_abs((&lap * &mu + &inc * &eta).iter().copied());
    let ct_phi = inc.transpose() * &phi;
    let line_complementarity = max_abs(model.lines().iter().enumerate().flat_map(|(e, l)| {
        let (ep, em) = (sol.eta_plus_star[e], sol.eta_minus_star[e]);
        [
            ep - (ep + ct_phi[e] - l.angle_upper).max(0.0),
            em - (em + l.angle_lower - ct_phi[e]).max(0.0),
        ]
    }));
    let power_balance = max_abs((&p - col(p_m) + &lap * &phi).iter().copied());
    let load_feasibility = model
        .buses()
        .iter()
        .zip(&sol.p_l_star)
        .map(|(b, &x)| (b.load_lower - x).max(x - b.load_upper).max(0.0))
        .fold(0.0, f64::max);
    Ok(KktReport {
        stationarity,
        multiplier_balance,
        line_complementarity,
        power_balance,
        load_feasibility,
    })
}
