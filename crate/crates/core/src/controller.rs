//! Distributed optimal load-frequency controller.
//!
//! Every bus integrates a load command `d_j`, a balance multiplier `μ_j` and
//! a virtual phase angle `φ_j`; every line integrates two filter states
//! `φ±_ij` for its angle limits. The load actually applied is the projection
//! of `d_j` onto the capacity box, and the line multipliers `η±` are the
//! nonnegative parts of the filter states. All gains are unity.
//!
//! The balance multiplier is driven by the local imbalance
//! `z_j = (P^l_j - P^m_j) + (C B Cᵀ φ)_j`. The first term is either taken
//! from the model or reconstructed from frequency and line-flow measurements
//! (see [`estimate_mismatch`]).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::costs::{project_box, project_nonneg, SelectionRule};
use crate::error::{check_len, Error, Result};
use crate::network::NetworkModel;

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    pub d: Vec<f64>,
    pub mu: Vec<f64>,
    pub phi: Vec<f64>,
    pub varphi_plus: Vec<f64>,
    pub varphi_minus: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerOutputs {
    pub p_l: Vec<f64>,
    pub eta_plus: Vec<f64>,
    pub eta_minus: Vec<f64>,
    pub z: Vec<f64>,
}

/// Where the controller gets `P^l - P^m` from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MismatchSource {
    /// Known loads and injections.
    #[default]
    Model,
    /// Reconstructed from `ω`, `ω̇` and line flows.
    Estimate,
}

impl std::str::FromStr for MismatchSource {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "model" => Ok(MismatchSource::Model),
            "estimate" => Ok(MismatchSource::Estimate),
            _ => Err(format!(
                "unknown mismatch source '{s}' (expected model|estimate)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    #[serde(default)]
    pub selection: SelectionRule,
    #[serde(default)]
    pub mismatch: MismatchSource,
    /// Time-scale factor applied to every controller derivative.
    #[serde(default = "unit")]
    pub epsilon: f64,
}

fn unit() -> f64 {
    1.0
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            selection: SelectionRule::default(),
            mismatch: MismatchSource::default(),
            epsilon: 1.0,
        }
    }
}

impl ControllerState {
    pub fn zeros(model: &NetworkModel) -> Self {
        let (n, m) = (model.n(), model.m());
        Self {
            d: vec![0.0; n],
            mu: vec![0.0; n],
            phi: vec![0.0; n],
            varphi_plus: vec![0.0; m],
            varphi_minus: vec![0.0; m],
        }
    }

    pub fn check(&self, model: &NetworkModel) -> Result<()> {
        let (n, m) = (model.n(), model.m());
        check_len("d", &self.d, n)?;
        check_len("mu", &self.mu, n)?;
        check_len("phi", &self.phi, n)?;
        check_len("varphi_plus", &self.varphi_plus, m)?;
        check_len("varphi_minus", &self.varphi_minus, m)?;
        let finite = [
            &self.d,
            &self.mu,
            &self.phi,
            &self.varphi_plus,
            &self.varphi_minus,
        ]
        .iter()
        .all(|v| v.iter().all(|x| x.is_finite()));
        if finite {
            Ok(())
        } else {
            Err(Error::Validation(
                "controller state has non-finite entries".into(),
            ))
        }
    }

    /// Flat layout `d | mu | phi | varphi+ | varphi-`.
    pub fn to_flat(&self) -> Vec<f64> {
        [
            &self.d,
            &self.mu,
            &self.phi,
            &self.varphi_plus,
            &self.varphi_minus,
        ]
        .into_iter()
        .flatten()
        .copied()
        .collect()
    }

    pub fn from_flat(model: &NetworkModel, v: &[f64]) -> Result<Self> {
        let (n, m) = (model.n(), model.m());
        check_len("controller state vector", v, 3 * n + 2 * m)?;
        let state = Self {
            d: v[..n].to_vec(),
            mu: v[n..2 * n].to_vec(),
            phi: v[2 * n..3 * n].to_vec(),
            varphi_plus: v[3 * n..3 * n + m].to_vec(),
            varphi_minus: v[3 * n + m..].to_vec(),
        };
        state.check(model)?;
        Ok(state)
    }

    /// Reads a warm-start file in the flat layout of [`Self::to_flat`].
    pub fn load_warm_start(model: &NetworkModel, path: impl AsRef<Path>) -> Result<Self> {
        let v = read_vector(path)?;
        Self::from_flat(model, &v)
    }
}

/// Reads whitespace- or comma-separated numbers; `#` starts a comment.
pub fn read_vector(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_vector(&text, &path.display().to_string())
}

pub fn parse_vector(text: &str, origin: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let body = line.split('#').next().unwrap_or("");
        for tok in body
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
        {
            let x = tok.parse::<f64>().map_err(|_| Error::Parse {
                origin: origin.to_string(),
                context: format!("line {}: '{tok}' is not a number", lineno + 1),
            })?;
            out.push(x);
        }
    }
    Ok(out)
}

pub fn init_controller(model: &NetworkModel) -> ControllerState {
    ControllerState::zeros(model)
}

/// Outputs with the literal mismatch `P^l - P^m`.
pub fn outputs(
    model: &NetworkModel,
    cstate: &ControllerState,
    p_m: &[f64],
) -> Result<ControllerOutputs> {
    check_len("p_m", p_m, model.n())?;
    let p_l = project_box(&cstate.d, &model.load_box())?;
    let mismatch: Vec<f64> = p_l.iter().zip(p_m).map(|(l, m)| l - m).collect();
    outputs_with_mismatch(model, cstate, &mismatch)
}

/// Outputs with an externally supplied `P^l - P^m` (e.g. from
/// [`estimate_mismatch`]).
pub fn outputs_with_mismatch(
    model: &NetworkModel,
    cstate: &ControllerState,
    mismatch: &[f64],
) -> Result<ControllerOutputs> {
    cstate.check(model)?;
    check_len("mismatch", mismatch, model.n())?;
    let p_l = project_box(&cstate.d, &model.load_box())?;
    let lphi = model.laplacian_mul(&cstate.phi);
    let z = mismatch.iter().zip(&lphi).map(|(a, b)| a + b).collect();
    Ok(ControllerOutputs {
        p_l,
        eta_plus: project_nonneg(&cstate.varphi_plus),
        eta_minus: project_nonneg(&cstate.varphi_minus),
        z,
    })
}

/// Subgradient of every bus cost at `p_l`, picked from the Clarke interval by `rule`.
pub fn select_subgradients(model: &NetworkModel, p_l: &[f64], rule: SelectionRule) -> Vec<f64> {
    model
        .buses()
        .iter()
        .zip(p_l)
        .map(|(bus, &x)| rule.select(bus.cost.clarke(x)))
        .collect()
}

/// Time derivative of the controller state for the given outputs,
/// frequencies `omega` (all buses) and cost subgradients `g` at `out.p_l`.
pub fn controller_rhs(
    model: &NetworkModel,
    cstate: &ControllerState,
    out: &ControllerOutputs,
    omega: &[f64],
    g: &[f64],
) -> Result<ControllerState> {
    let (n, m) = (model.n(), model.m());
    cstate.check(model)?;
    check_len("p_l", &out.p_l, n)?;
    check_len("z", &out.z, n)?;
    check_len("eta_plus", &out.eta_plus, m)?;
    check_len("eta_minus", &out.eta_minus, m)?;
    check_len("omega", omega, n)?;
    check_len("subgradients", g, n)?;

    let d = (0..n)
        .map(|j| -cstate.d[j] + out.p_l[j] + omega[j] - g[j] - out.z[j] - cstate.mu[j])
        .collect();
    let mu = out.z.clone();

    let mu_plus_z: Vec<f64> = cstate.mu.iter().zip(&out.z).map(|(a, b)| a + b).collect();
    let diffusion = model.laplacian_mul(&mu_plus_z);
    let eta_net: Vec<f64> = out
        .eta_minus
        .iter()
        .zip(&out.eta_plus)
        .map(|(lo, hi)| lo - hi)
        .collect();
    let limits = model.incidence_mul(&eta_net);
    let phi = diffusion.iter().zip(&limits).map(|(a, b)| -a + b).collect();

    let phi_e = model.incidence_t_mul(&cstate.phi);
    let varphi_plus = model
        .lines()
        .iter()
        .enumerate()
        .map(|(e, l)| -cstate.varphi_plus[e] + out.eta_plus[e] + phi_e[e] - l.angle_upper)
        .collect();
    let varphi_minus = model
        .lines()
        .iter()
        .enumerate()
        .map(|(e, l)| -cstate.varphi_minus[e] + out.eta_minus[e] + l.angle_lower - phi_e[e])
        .collect();

    let deriv = ControllerState {
        d,
        mu,
        phi,
        varphi_plus,
        varphi_minus,
    };
    debug_assert_eq!(deriv.mu, out.z);
    Ok(deriv)
}

/// Measurement-based `P^l - P^m`: `-M_j ω̇_j - D_j ω_j + inflow - outflow`
/// at generator buses and `-D_j ω_j + inflow - outflow` at load buses.
/// `domega_g` is ordered like [`NetworkModel::generators`], `line_flows`
/// like the lines.
pub fn estimate_mismatch(
    model: &NetworkModel,
    omega: &[f64],
    domega_g: &[f64],
    line_flows: &[f64],
) -> Result<Vec<f64>> {
    check_len("omega", omega, model.n())?;
    check_len("domega_g", domega_g, model.generators().len())?;
    check_len("line flows", line_flows, model.m())?;
    let outflow = model.incidence_mul(line_flows);
    Ok(model
        .buses()
        .iter()
        .map(|bus| {
            let j = bus.id;
            let inertial = match (model.gen_slot(j), bus.inertia) {
                (Some(k), Some(m)) => m * domega_g[k],
                _ => 0.0,
            };
            -inertial - bus.damping * omega[j] - outflow[j]
        })
        .collect())
}
