//! Fixed-step RK4 integration of the closed loop (plant + controller).
//!
//! Output projections and subgradient selection are re-evaluated at every
//! RK4 stage. Disturbance events change `P^m` only; they are applied at the
//! grid point nearest to their time stamp.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::lyapunov::{lyapunov_scaled, Equilibrium};
use crate::analysis::pipeline::AnchorSchedule;
use crate::controller::{
    controller_rhs, estimate_mismatch, outputs_with_mismatch, select_subgradients,
    ControllerConfig, ControllerOutputs, ControllerState, MismatchSource,
};
use crate::dynamics::{plant_rhs, Injection, PlantDerivative, PlantState};
use crate::error::{check_len, Error, Result};
use crate::network::NetworkModel;

/// Complete closed-loop state.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopState {
    pub plant: PlantState,
    pub ctrl: ControllerState,
}

impl ClosedLoopState {
    /// All-zero plant and controller.
    pub fn zeros(model: &NetworkModel) -> Self {
        Self {
            plant: PlantState::zeros(model),
            ctrl: ControllerState::zeros(model),
        }
    }

    /// Undisturbed rest point: zero everywhere except the line filters,
    /// which sit at their inactive equilibria `φ⁺ = -θ̄`, `φ⁻ = θ̲`.
    pub fn rest(model: &NetworkModel) -> Self {
        let mut s = Self::zeros(model);
        s.ctrl.varphi_plus = model.angle_upper().iter().map(|t| -t).collect();
        s.ctrl.varphi_minus = model.angle_lower();
        s
    }

    /// Layout `θ_e | ω_g | d | μ | φ | φ⁺ | φ⁻`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(
            self.plant.theta_e.len() + self.plant.omega_g.len() + 5 * self.ctrl.d.len(),
        );
        v.extend(&self.plant.theta_e);
        v.extend(&self.plant.omega_g);
        v.extend(self.ctrl.to_flat());
        v
    }

    pub fn from_flat(model: &NetworkModel, v: &[f64]) -> Result<Self> {
        let (m, ng) = (model.m(), model.generators().len());
        check_len("closed-loop state", v, m + ng + 3 * model.n() + 2 * m)?;
        Ok(Self {
            plant: PlantState {
                theta_e: v[..m].to_vec(),
                omega_g: v[m..m + ng].to_vec(),
            },
            ctrl: ControllerState::from_flat(model, &v[m + ng..])?,
        })
    }
}

/// Everything computed in one right-hand-side evaluation.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub plant: PlantDerivative,
    pub ctrl: ControllerState,
    pub outputs: ControllerOutputs,
}

impl Evaluation {
    pub fn derivative_flat(&self) -> Vec<f64> {
        let mut v = self.plant.dtheta_e.clone();
        v.extend(&self.plant.domega_g);
        v.extend(self.ctrl.to_flat());
        v
    }

    pub fn derivative_norm(&self) -> f64 {
        self.derivative_flat()
            .iter()
            .fold(0.0, |a, x| a.max(x.abs()))
    }
}

/// Closed-loop vector field for a fixed injection `p_m`.
pub fn evaluate(
    model: &NetworkModel,
    state: &ClosedLoopState,
    p_m: &[f64],
    config: &ControllerConfig,
) -> Result<Evaluation> {
    check_len("p_m", p_m, model.n())?;
    let p_l = crate::costs::project_box(&state.ctrl.d, &model.load_box())?;
    let inj = Injection {
        p_m: p_m.to_vec(),
        p_l,
    };
    let plant = plant_rhs(model, &state.plant, &inj)?;
    let mismatch = match config.mismatch {
        MismatchSource::Model => inj.p_l.iter().zip(p_m).map(|(l, m)| l - m).collect(),
        MismatchSource::Estimate => {
            let flows = model.line_flows(&state.plant.theta_e)?;
            estimate_mismatch(model, &plant.omega, &plant.domega_g, &flows)?
        }
    };
    let outputs = outputs_with_mismatch(model, &state.ctrl, &mismatch)?;
    let g = select_subgradients(model, &outputs.p_l, config.selection);
    let mut ctrl = controller_rhs(model, &state.ctrl, &outputs, &plant.omega, &g)?;
    if config.epsilon != 1.0 {
        for v in [
            &mut ctrl.d,
            &mut ctrl.mu,
            &mut ctrl.phi,
            &mut ctrl.varphi_plus,
            &mut ctrl.varphi_minus,
        ] {
            v.iter_mut().for_each(|x| *x *= config.epsilon);
        }
    }
    Ok(Evaluation {
        plant,
        ctrl,
        outputs,
    })
}

fn axpy(x: &[f64], a: f64, k: &[f64]) -> Vec<f64> {
    x.iter().zip(k).map(|(x, k)| x + a * k).collect()
}

fn check_finite(v: &[f64], time: f64) -> Result<()> {
    match v.iter().position(|x| !x.is_finite()) {
        None => Ok(()),
        Some(i) => Err(Error::NonFinite {
            time,
            detail: format!("state component {i} is {}", v[i]),
        }),
    }
}

/// One classical RK4 step.
pub fn step(
    model: &NetworkModel,
    state: &ClosedLoopState,
    p_m: &[f64],
    dt: f64,
    config: &ControllerConfig,
) -> Result<ClosedLoopState> {
    let k1 = evaluate(model, state, p_m, config)?.derivative_flat();
    step_with_first_stage(model, state, &k1, p_m, dt, config, f64::NAN)
}

fn step_with_first_stage(
    model: &NetworkModel,
    state: &ClosedLoopState,
    k1: &[f64],
    p_m: &[f64],
    dt: f64,
    config: &ControllerConfig,
    time: f64,
) -> Result<ClosedLoopState> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Validation(format!(
            "time step must be positive, got {dt}"
        )));
    }
    let x = state.to_flat();
    let stage = |v: Vec<f64>| -> Result<Vec<f64>> {
        check_finite(&v, time)?;
        let s = ClosedLoopState::from_flat(model, &v)?;
        Ok(evaluate(model, &s, p_m, config)?.derivative_flat())
    };
    let k2 = stage(axpy(&x, 0.5 * dt, k1))?;
    let k3 = stage(axpy(&x, 0.5 * dt, &k2))?;
    let k4 = stage(axpy(&x, dt, &k3))?;
    let next: Vec<f64> = (0..x.len())
        .map(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect();
    check_finite(&next, time)?;
    ClosedLoopState::from_flat(model, &next)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Event {
    pub time: f64,
    pub bus: usize,
    pub delta_p_m: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConditions {
    /// Warm-start controller state (`d | mu | phi | varphi+ | varphi-`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controller: Option<PathBuf>,
    /// Warm-start plant state (`theta_e | omega_g`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plant: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SettleConfig {
    #[serde(default = "default_settle_tol")]
    pub tol: f64,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
}

fn default_settle_tol() -> f64 {
    1e-9
}

fn default_t_max() -> f64 {
    600.0
}

impl Default for SettleConfig {
    fn default() -> Self {
        Self {
            tol: default_settle_tol(),
            t_max: default_t_max(),
        }
    }
}

fn default_dt() -> f64 {
    1e-3
}

fn default_decimation() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    /// Network file; relative paths are resolved against the scenario file.
    pub network: PathBuf,
    pub t_end: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_decimation")]
    pub log_decimation: usize,
    #[serde(default)]
    pub controller: ControllerConfig,
    #[serde(default)]
    pub settle: SettleConfig,
    #[serde(default)]
    pub initial: InitialConditions,
    #[serde(default)]
    pub events: Vec<Event>,
}

impl Scenario {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut sc = Self::from_toml_str(&text, &path.display().to_string())?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut sc.network);
        if let Some(p) = sc.initial.controller.as_mut() {
            resolve(p);
        }
        if let Some(p) = sc.initial.plant.as_mut() {
            resolve(p);
        }
        Ok(sc)
    }

    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            origin: origin.to_string(),
            context: e.to_string(),
        })
    }

    pub fn load_network(&self) -> Result<NetworkModel> {
        NetworkModel::load(&self.network)
    }

    pub fn validate(&self, model: &NetworkModel) -> Result<()> {
        let invalid = |msg: String| Err(Error::Validation(format!("scenario: {msg}")));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return invalid(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return invalid(format!("t_end must be nonnegative, got {}", self.t_end));
        }
        if self.log_decimation == 0 {
            return invalid("log_decimation must be at least 1".into());
        }
        if !(self.controller.epsilon > 0.0 && self.controller.epsilon.is_finite()) {
            return invalid("controller epsilon must be positive".into());
        }
        if !(self.settle.tol > 0.0 && self.settle.t_max > 0.0) {
            return invalid("settle tol and t_max must be positive".into());
        }
        for (k, ev) in self.events.iter().enumerate() {
            if !(0.0..=self.t_end).contains(&ev.time) {
                return invalid(format!(
                    "event {k} at t = {} lies outside [0, t_end]",
                    ev.time
                ));
            }
            if ev.bus >= model.n() {
                return invalid(format!("event {k} references unknown bus {}", ev.bus));
            }
            if !ev.delta_p_m.is_finite() {
                return invalid(format!("event {k} has a non-finite power step"));
            }
        }
        Ok(())
    }

    pub fn initial_state(&self, model: &NetworkModel) -> Result<ClosedLoopState> {
        let mut s = ClosedLoopState::zeros(model);
        if let Some(path) = &self.initial.controller {
            s.ctrl = ControllerState::load_warm_start(model, path)?;
        }
        if let Some(path) = &self.initial.plant {
            let v = crate::controller::read_vector(path)?;
            let m = model.m();
            check_len("plant warm start", &v, m + model.generators().len())?;
            s.plant = PlantState {
                theta_e: v[..m].to_vec(),
                omega_g: v[m..].to_vec(),
            };
        }
        Ok(s)
    }

    pub fn step_count(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    /// Grid index at which each event fires.
    pub fn event_steps(&self) -> Vec<usize> {
        self.events
            .iter()
            .map(|e| (e.time / self.dt).round() as usize)
            .collect()
    }

    /// Injection after every event has fired.
    pub fn final_injection(&self, model: &NetworkModel) -> Vec<f64> {
        let mut p_m = vec![0.0; model.n()];
        for e in &self.events {
            p_m[e.bus] += e.delta_p_m;
        }
        p_m
    }
}

/// Stateful stepper over the time grid `t_k = k·dt`.
pub struct Simulator<'a> {
    model: &'a NetworkModel,
    config: ControllerConfig,
    dt: f64,
    state: ClosedLoopState,
    p_m: Vec<f64>,
    steps: usize,
}

impl<'a> Simulator<'a> {
    pub fn new(
        model: &'a NetworkModel,
        config: ControllerConfig,
        dt: f64,
        state: ClosedLoopState,
        p_m: Vec<f64>,
    ) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Validation(format!(
                "time step must be positive, got {dt}"
            )));
        }
        check_len("p_m", &p_m, model.n())?;
        state.plant.check(model)?;
        state.ctrl.check(model)?;
        Ok(Self {
            model,
            config,
            dt,
            state,
            p_m,
            steps: 0,
        })
    }

    pub fn time(&self) -> f64 {
        self.steps as f64 * self.dt
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn state(&self) -> &ClosedLoopState {
        &self.state
    }

    pub fn into_state(self) -> ClosedLoopState {
        self.state
    }

    pub fn p_m(&self) -> &[f64] {
        &self.p_m
    }

    pub fn apply_event(&mut self, bus: usize, delta_p_m: f64) {
        self.p_m[bus] += delta_p_m;
    }

    pub fn evaluate(&self) -> Result<Evaluation> {
        evaluate(self.model, &self.state, &self.p_m, &self.config)
    }

    /// Advances one step and returns the evaluation at the state before the step.
    pub fn step(&mut self) -> Result<Evaluation> {
        let ev = self.evaluate()?;
        self.step_from(&ev)?;
        Ok(ev)
    }

    /// Advances one step, reusing an evaluation of the current state as the first stage.
    pub fn step_from(&mut self, current: &Evaluation) -> Result<()> {
        let t = self.time();
        self.state = step_with_first_stage(
            self.model,
            &self.state,
            &current.derivative_flat(),
            &self.p_m,
            self.dt,
            &self.config,
            t,
        )?;
        self.steps += 1;
        Ok(())
    }
}

/// One logged sample.
#[derive(Debug, Clone)]
pub struct Record {
    pub t: f64,
    pub state: ClosedLoopState,
    pub omega: Vec<f64>,
    pub outputs: ControllerOutputs,
    pub flows: Vec<f64>,
    pub lyapunov: Option<f64>,
    pub cost: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TrajectoryLog {
    pub records: Vec<Record>,
}

impl TrajectoryLog {
    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    pub fn last(&self) -> Option<&Record> {
        self.records.last()
    }

    /// Column names; depend only on the network dimensions.
    pub fn header(model: &NetworkModel) -> Vec<String> {
        let (n, m) = (model.n(), model.m());
        let mut cols = vec!["t".to_string()];
        let mut push = |name: &str, k: usize| cols.extend((0..k).map(|i| format!("{name}[{i}]")));
        push("theta_e", m);
        push("omega", n);
        push("d", n);
        push("mu", n);
        push("phi", n);
        push("varphi_plus", m);
        push("varphi_minus", m);
        push("p_l", n);
        push("eta_plus", m);
        push("eta_minus", m);
        push("flow", m);
        cols.push("V".into());
        cols.push("cost".into());
        cols
    }

    pub fn write_csv(&self, model: &NetworkModel, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "{}", Self::header(model).join(","))?;
        for r in &self.records {
            let c = &r.state.ctrl;
            let mut row: Vec<String> = vec![r.t.to_string()];
            for v in [
                &r.state.plant.theta_e,
                &r.omega,
                &c.d,
                &c.mu,
                &c.phi,
                &c.varphi_plus,
                &c.varphi_minus,
                &r.outputs.p_l,
                &r.outputs.eta_plus,
                &r.outputs.eta_minus,
                &r.flows,
            ] {
                row.extend(v.iter().map(|x| x.to_string()));
            }
            row.push(
                r.lyapunov
                    .map_or_else(|| "NaN".to_string(), |v| v.to_string()),
            );
            row.push(r.cost.to_string());
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

pub fn total_cost(model: &NetworkModel, p_l: &[f64]) -> f64 {
    model
        .buses()
        .iter()
        .zip(p_l)
        .map(|(b, &x)| b.cost.eval(x))
        .sum()
}

fn record(
    model: &NetworkModel,
    t: f64,
    state: &ClosedLoopState,
    ev: &Evaluation,
    anchor: Option<&Equilibrium>,
    epsilon: f64,
) -> Result<Record> {
    Ok(Record {
        t,
        state: state.clone(),
        omega: ev.plant.omega.clone(),
        flows: model.line_flows(&state.plant.theta_e)?,
        lyapunov: anchor
            .map(|a| lyapunov_scaled(model, state, a, epsilon))
            .transpose()?,
        cost: total_cost(model, &ev.outputs.p_l),
        outputs: ev.outputs.clone(),
    })
}

/// Integrates a scenario from its initial state to `t_end`, calling `visit`
/// at every grid point `k = 0..=steps` after that step's events fired.
/// Returns the final state.
pub fn drive(
    model: &NetworkModel,
    scenario: &Scenario,
    mut visit: impl FnMut(usize, &Simulator<'_>, &Evaluation) -> Result<()>,
) -> Result<ClosedLoopState> {
    scenario.validate(model)?;
    let init = scenario.initial_state(model)?;
    let mut sim = Simulator::new(
        model,
        scenario.controller,
        scenario.dt,
        init,
        vec![0.0; model.n()],
    )?;
    let total = scenario.step_count();
    let fire = scenario.event_steps();
    for k in 0..=total {
        for (ev, &at) in scenario.events.iter().zip(&fire) {
            if at == k {
                sim.apply_event(ev.bus, ev.delta_p_m);
            }
        }
        let ev = sim.evaluate()?;
        visit(k, &sim, &ev)?;
        if k < total {
            sim.step_from(&ev)?;
        }
    }
    Ok(sim.into_state())
}

/// Runs a scenario and logs every `log_decimation`-th sample plus the last.
/// With `anchors`, the Lyapunov function is logged against the oracle
/// equilibrium of the injection in force; without, the `V` column is empty.
pub fn run(
    model: &NetworkModel,
    scenario: &Scenario,
    anchors: Option<&AnchorSchedule>,
) -> Result<TrajectoryLog> {
    let total = scenario.step_count();
    let mut log = TrajectoryLog::default();
    drive(model, scenario, |k, sim, ev| {
        if k % scenario.log_decimation == 0 || k == total {
            let eq = anchors.map(|a| a.at(k));
            log.records.push(record(
                model,
                sim.time(),
                sim.state(),
                ev,
                eq,
                scenario.controller.epsilon,
            )?);
        }
        Ok(())
    })?;
    Ok(log)
}

#[derive(Debug, Clone)]
pub struct Settled {
    pub state: ClosedLoopState,
    /// Integration time spent settling.
    pub elapsed: f64,
    /// Final `‖ẋ‖∞`.
    pub residual: f64,
}

/// Integrates from `init` with constant `p_m` until the state stops moving:
/// `‖x_{k+1} - x_k‖∞ / dt < tol`.
///
/// The increment is used instead of `‖ẋ(x_k)‖` because at a cost kink the
/// vector field is discontinuous and RK4 comes to rest with its stages on
/// both sides of the kink, where the pointwise derivative stays finite.
pub fn settle_from(
    model: &NetworkModel,
    init: ClosedLoopState,
    p_m: &[f64],
    config: &ControllerConfig,
    dt: f64,
    tol: f64,
    t_max: f64,
) -> Result<Settled> {
    settle_with(model, init, p_m, config, (dt, tol, t_max), |_| Ok(()))
}

/// [`settle_from`] with a callback on every visited state, including the
/// settled one. `grid` is `(dt, tol, t_max)`.
pub fn settle_with(
    model: &NetworkModel,
    init: ClosedLoopState,
    p_m: &[f64],
    config: &ControllerConfig,
    grid: (f64, f64, f64),
    mut visit: impl FnMut(&ClosedLoopState) -> Result<()>,
) -> Result<Settled> {
    let (dt, tol, t_max) = grid;
    if !(tol > 0.0) {
        return Err(Error::Validation(format!(
            "settle tolerance must be positive, got {tol}"
        )));
    }
    let mut sim = Simulator::new(model, *config, dt, init, p_m.to_vec())?;
    let max_steps = (t_max / dt).ceil() as usize;
    let mut residual = f64::INFINITY;
    loop {
        visit(sim.state())?;
        let current = sim.state().clone();
        let before = current.to_flat();
        let elapsed = sim.time();
        if sim.steps() >= max_steps {
            return Err(Error::SettleTimeout { t_max, residual });
        }
        sim.step()?;
        let after = sim.state().to_flat();
        residual = before
            .iter()
            .zip(&after)
            .fold(0.0, |m: f64, (a, b)| m.max((a - b).abs()))
            / dt;
        if residual < tol {
            return Ok(Settled {
                elapsed,
                residual,
                state: current,
            });
        }
    }
}

/// Settles from the undisturbed rest point.
pub fn settle(
    model: &NetworkModel,
    p_m: &[f64],
    config: &ControllerConfig,
    dt: f64,
    tol: f64,
    t_max: f64,
) -> Result<Settled> {
    settle_from(
        model,
        ClosedLoopState::rest(model),
        p_m,
        config,
        dt,
        tol,
        t_max,
    )
}
