//! Scenario-level equilibrium check: integrate the scenario, settle under
//! the final injection, solve the oracle and compare.
//!
//! The Lyapunov function is tracked at every grid point. Its anchor is the
//! oracle equilibrium for the injection in force, so it changes when an
//! event fires; increments are only compared within one constant-injection
//! segment.

use serde::Serialize;

use super::lyapunov::{lyapunov_scaled, Equilibrium};
use super::{check_theorem1, solve_olc, OptimalSolution, OracleOptions, Theorem1Report};
use crate::error::Result;
use crate::network::NetworkModel;
use crate::simulator::{drive, settle_with, ClosedLoopState, Scenario};

/// Oracle equilibria for every distinct injection of a scenario, keyed by
/// the grid index where each one takes effect.
#[derive(Debug, Clone)]
pub struct AnchorSchedule {
    segments: Vec<(usize, Vec<f64>, OptimalSolution, Equilibrium)>,
}

impl AnchorSchedule {
    pub fn build(model: &NetworkModel, scenario: &Scenario, opts: &OracleOptions) -> Result<Self> {
        let init = scenario.initial_state(model)?;
        let mut order: Vec<(usize, usize)> = scenario
            .event_steps()
            .into_iter()
            .enumerate()
            .map(|(i, k)| (k, i))
            .collect();
        order.sort();
        let mut p_m = vec![0.0; model.n()];
        let mut starts = vec![(0usize, p_m.clone())];
        for (k, i) in order {
            let ev = &scenario.events[i];
            p_m[ev.bus] += ev.delta_p_m;
            match starts.last_mut() {
                Some(last) if last.0 == k => last.1 = p_m.clone(),
                _ => starts.push((k, p_m.clone())),
            }
        }
        let mut segments: Vec<(usize, Vec<f64>, OptimalSolution, Equilibrium)> = Vec::new();
        for (k, p) in starts {
            let sol = match segments.iter().find(|s| s.1 == p) {
                Some(s) => s.2.clone(),
                None => solve_olc(model, &p, opts)?,
            };
            let eq = Equilibrium::for_state(model, &sol, &init)?;
            segments.push((k, p, sol, eq));
        }
        Ok(Self { segments })
    }

    /// Segment index in force at grid index `k`.
    pub fn segment(&self, k: usize) -> usize {
        self.segments.iter().rposition(|s| s.0 <= k).unwrap_or(0)
    }

    pub fn at(&self, k: usize) -> &Equilibrium {
        &self.segments[self.segment(k)].3
    }

    pub fn final_solution(&self) -> &OptimalSolution {
        &self.segments[self.segments.len() - 1].2
    }

    pub fn final_equilibrium(&self) -> &Equilibrium {
        &self.segments[self.segments.len() - 1].3
    }
}

/// Per-step behaviour of `V` along a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LyapunovTrace {
    pub samples: usize,
    pub initial: f64,
    /// `V` at the settled state relative to the final equilibrium.
    pub settled: f64,
    /// Largest `V(t_{k+1}) - V(t_k)` within a constant-injection segment.
    pub max_increase: f64,
    /// `max_increase / dt²`, the smallest slack constant the trace satisfies.
    pub slack_constant: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CheckOptions {
    /// Tolerance of the equilibrium checks.
    pub tol: f64,
    pub settle_tol: f64,
    pub t_max: f64,
    pub oracle: OracleOptions,
}

impl CheckOptions {
    pub fn for_scenario(scenario: &Scenario, tol: f64) -> Self {
        Self {
            tol,
            settle_tol: scenario.settle.tol,
            t_max: scenario.settle.t_max,
            oracle: OracleOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub report: Theorem1Report,
    pub oracle: OptimalSolution,
    pub lyapunov: LyapunovTrace,
    pub p_m: Vec<f64>,
    /// Simulated time spent settling after `t_end`.
    pub settle_time: f64,
    pub settle_residual: f64,
    #[serde(skip)]
    pub settled: ClosedLoopState,
}

struct Tracker {
    segment: usize,
    last: Option<f64>,
    max_increase: f64,
    samples: usize,
    first: Option<f64>,
}

impl Tracker {
    fn push(&mut self, segment: usize, v: f64) {
        if let (Some(prev), true) = (self.last, segment == self.segment) {
            self.max_increase = self.max_increase.max(v - prev);
        }
        self.first.get_or_insert(v);
        self.segment = segment;
        self.last = Some(v);
        self.samples += 1;
    }
}

/// Full pipeline on one scenario.
pub fn check_scenario(
    model: &NetworkModel,
    scenario: &Scenario,
    opts: &CheckOptions,
) -> Result<CheckOutcome> {
    let anchors = AnchorSchedule::build(model, scenario, &opts.oracle)?;
    let eps = scenario.controller.epsilon;
    let mut tr = Tracker {
        segment: 0,
        last: None,
        max_increase: f64::NEG_INFINITY,
        samples: 0,
        first: None,
    };
    let end = drive(model, scenario, |k, sim, _| {
        let seg = anchors.segment(k);
        tr.push(
            seg,
            lyapunov_scaled(model, sim.state(), anchors.at(k), eps)?,
        );
        Ok(())
    })?;
    let p_m = scenario.final_injection(model);
    let last_seg = anchors.segment(scenario.step_count());
    let eq = anchors.final_equilibrium().clone();
    let mut first_settle = true;
    let settled = settle_with(
        model,
        end,
        &p_m,
        &scenario.controller,
        (scenario.dt, opts.settle_tol, opts.t_max),
        |s| {
            // the end of the scenario and the start of settling are the same state
            if first_settle {
                first_settle = false;
                return Ok(());
            }
            tr.push(last_seg, lyapunov_scaled(model, s, &eq, eps)?);
            Ok(())
        },
    )?;
    let v_settled = lyapunov_scaled(model, &settled.state, &eq, eps)?;
    let oracle = anchors.final_solution().clone();
    let report = check_theorem1(model, &settled.state, &p_m, &oracle, opts.tol)?;
    let max_increase = tr.max_increase.max(0.0);
    Ok(CheckOutcome {
        report,
        oracle,
        lyapunov: LyapunovTrace {
            samples: tr.samples,
            initial: tr.first.unwrap_or(v_settled),
            settled: v_settled,
            max_increase,
            slack_constant: max_increase / (scenario.dt * scenario.dt),
        },
        p_m,
        settle_time: settled.elapsed,
        settle_residual: settled.residual,
        settled: settled.state,
    })
}
