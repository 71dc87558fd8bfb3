//! End-to-end equilibrium checks of a settled closed loop against the
//! oracle: frequency restoration, optimality, angle consistency and
//! uniqueness of the load profile.

use std::fmt::Write as _;

use serde::Serialize;

use super::{kkt_residuals_within, max_abs, KktReport, OptimalSolution};
use crate::dynamics::{plant_rhs, Injection};
use crate::error::{check_len, Result};
use crate::network::NetworkModel;
use crate::simulator::ClosedLoopState;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub tol: f64,
    pub pass: bool,
}

/// A line whose angle sits at one of its limits at the settled point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BindingLine {
    pub line: usize,
    pub from: usize,
    pub to: usize,
    pub theta: f64,
    pub limit: f64,
    pub flow: f64,
    /// `"upper"` or `"lower"`.
    pub side: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Theorem1Report {
    pub tol: f64,
    pub checks: Vec<Check>,
    pub kkt: KktReport,
    pub omega_inf: f64,
    /// `‖θ_e - Cᵀφ‖∞`.
    pub angle_gap: f64,
    /// Largest excursion of `θ_e` beyond its limits.
    pub angle_violation: f64,
    pub load_gap: f64,
    pub objective: f64,
    pub oracle_objective: f64,
    pub mu_spread: f64,
    pub binding_lines: Vec<BindingLine>,
    /// Settled loads, virtual angles (`φ₀ = 0`) and multipliers.
    pub settled: OptimalSolution,
    pub passed: bool,
}

impl Theorem1Report {
    pub fn summary_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<26} {:>12} {:>10}  result", "check", "value", "tol");
        for c in &self.checks {
            let verdict = if c.pass { "pass" } else { "FAIL" };
            let _ = writeln!(
                s,
                "{:<26} {:>12.3e} {:>10.1e}  {verdict}",
                c.name, c.value, c.tol
            );
        }
        let _ = writeln!(
            s,
            "objective {:.9} (oracle {:.9}), mu spread {:.3e}",
            self.objective, self.oracle_objective, self.mu_spread
        );
        if self.binding_lines.is_empty() {
            let _ = writeln!(s, "no binding lines");
        }
        for b in &self.binding_lines {
            let _ = writeln!(
                s,
                "line {} ({} -> {}) binding at {} limit: theta {:.6} limit {:.6} flow {:.6}",
                b.line, b.from, b.to, b.side, b.theta, b.limit, b.flow
            );
        }
        let _ = writeln!(s, "overall: {}", if self.passed { "pass" } else { "FAIL" });
        s
    }
}

/// Checks the four equilibrium claims on `settled` with injection `p_m`:
/// zero frequency, KKT conditions of the settled point, `θ = Cᵀφ` within
/// the angle limits, and agreement of the loads with the oracle. The KKT
/// subgradients are drawn from a `tol`-neighbourhood of the settled loads.
pub fn check_theorem1(
    model: &NetworkModel,
    settled: &ClosedLoopState,
    p_m: &[f64],
    oracle: &OptimalSolution,
    tol: f64,
) -> Result<Theorem1Report> {
    check_len("p_m", p_m, model.n())?;
    check_len("p_l_star", &oracle.p_l_star, model.n())?;
    let candidate = OptimalSolution::from_state(model, settled);
    let plant = plant_rhs(
        model,
        &settled.plant,
        &Injection {
            p_m: p_m.to_vec(),
            p_l: candidate.p_l_star.clone(),
        },
    )?;
    let omega_inf = max_abs(plant.omega.iter().copied());
    let kkt = kkt_residuals_within(model, p_m, &candidate, tol)?;

    let theta = &settled.plant.theta_e;
    let phi_e = model.incidence_t_mul(&settled.ctrl.phi);
    let angle_gap = max_abs(theta.iter().zip(&phi_e).map(|(a, b)| a - b));
    let mut angle_violation: f64 = 0.0;
    let mut binding_lines = Vec::new();
    for (e, l) in model.lines().iter().enumerate() {
        angle_violation = angle_violation
            .max(l.angle_lower - theta[e])
            .max(theta[e] - l.angle_upper);
        let side = if (theta[e] - l.angle_upper).abs() <= tol {
            Some(("upper", l.angle_upper))
        } else if (theta[e] - l.angle_lower).abs() <= tol {
            Some(("lower", l.angle_lower))
        } else {
            None
        };
        if let Some((side, limit)) = side {
            binding_lines.push(BindingLine {
                line: e,
                from: l.from,
                to: l.to,
                theta: theta[e],
                limit,
                flow: l.susceptance * theta[e],
                side,
            });
        }
    }
    let load_gap = max_abs(
        candidate
            .p_l_star
            .iter()
            .zip(&oracle.p_l_star)
            .map(|(a, b)| a - b),
    );
    let (lo, hi) = candidate
        .mu_star
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });

    let check = |name, value: f64| Check {
        name,
        value,
        tol,
        pass: value < tol,
    };
    let checks = vec![
        check("frequency restored", omega_inf),
        check("kkt residual", kkt.max()),
        check("angle consistency", angle_gap),
        check("angle limits", angle_violation.max(0.0)),
        check("oracle load agreement", load_gap),
    ];
    let passed = checks.iter().all(|c| c.pass);
    Ok(Theorem1Report {
        tol,
        kkt,
        omega_inf,
        angle_gap,
        angle_violation: angle_violation.max(0.0),
        load_gap,
        objective: candidate.objective,
        oracle_objective: oracle.objective,
        mu_spread: hi - lo,
        binding_lines,
        settled: candidate,
        checks,
        passed,
    })
}
