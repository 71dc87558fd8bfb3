mod common;

use common::{network, scenario};
use olc_core::analysis::{lyapunov, solve_olc, Equilibrium, OptimalSolution, OracleOptions};
use olc_core::simulator::{evaluate, settle_from, ClosedLoopState, Simulator};
use olc_core::{ControllerConfig, MismatchSource, NetworkModel};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Closed-loop state at the oracle point, with `d` and the filters at the
/// values that make their own derivatives vanish.
fn equilibrium_state(model: &NetworkModel, sol: &OptimalSolution) -> ClosedLoopState {
    let mut s = ClosedLoopState::zeros(model);
    s.ctrl.phi = sol.phi_star.clone();
    s.plant.theta_e = model.incidence_t_mul(&sol.phi_star);
    s.ctrl.mu = sol.mu_star.clone();
    // interior loads: d = P
    s.ctrl.d = sol.p_l_star.clone();
    let phi_e = model.incidence_t_mul(&sol.phi_star);
    for (e, l) in model.lines().iter().enumerate() {
        s.ctrl.varphi_plus[e] = sol.eta_plus_star[e] + phi_e[e] - l.angle_upper;
        s.ctrl.varphi_minus[e] = sol.eta_minus_star[e] + l.angle_lower - phi_e[e];
    }
    s
}

#[test]
fn oracle_point_is_a_closed_loop_equilibrium() {
    for (name, p_m) in [
        ("three_bus", vec![0.0, -0.3, 0.0]),
        ("three_bus_congested", vec![0.0, 0.0, -0.9]),
        (
            "nine_bus",
            vec![0.0, 0.0, 0.0, 0.0, -0.5, 0.0, 0.0, 0.0, -0.2],
        ),
    ] {
        let model = network(name);
        let sol = solve_olc(&model, &p_m, &OracleOptions::default()).unwrap();
        let s = equilibrium_state(&model, &sol);
        let ev = evaluate(&model, &s, &p_m, &ControllerConfig::default()).unwrap();
        assert!(
            ev.derivative_norm() < 1e-7,
            "{name}: {}",
            ev.derivative_norm()
        );
    }
}

fn run_fixed(
    model: &NetworkModel,
    init: &ClosedLoopState,
    p_m: &[f64],
    dt: f64,
    t: f64,
    config: ControllerConfig,
) -> Vec<f64> {
    let mut sim = Simulator::new(model, config, dt, init.clone(), p_m.to_vec()).unwrap();
    let steps = (t / dt).round() as usize;
    for _ in 0..steps {
        sim.step().unwrap();
    }
    sim.state().to_flat()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

#[test]
fn rk4_converges_at_fourth_order_on_a_smooth_trajectory() {
    // a small step keeps every load inside the middle cost piece and every
    // line filter negative, so the vector field is linear along the way
    let model = network("two_bus");
    let init = ClosedLoopState::rest(&model);
    let p_m = [0.0, -0.1];
    let cfg = ControllerConfig::default();
    let reference = run_fixed(&model, &init, &p_m, 0.0025, 2.0, cfg);
    let errs: Vec<f64> = [0.04, 0.02, 0.01]
        .iter()
        .map(|&dt| dist(&run_fixed(&model, &init, &p_m, dt, 2.0, cfg), &reference))
        .collect();
    for w in errs.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(
            order > 3.7 && order < 4.3,
            "observed order {order} from {errs:?}"
        );
    }
}

#[test]
fn measured_mismatch_reproduces_the_model_trajectory() {
    let (sc, model) = scenario("three_bus_congested");
    let p_m = sc.final_injection(&model);
    let init = ClosedLoopState::zeros(&model);
    let model_cfg = ControllerConfig::default();
    let est_cfg = ControllerConfig {
        mismatch: MismatchSource::Estimate,
        ..model_cfg
    };
    let a = run_fixed(&model, &init, &p_m, 1e-3, 5.0, model_cfg);
    let b = run_fixed(&model, &init, &p_m, 1e-3, 5.0, est_cfg);
    assert!(dist(&a, &b) < 1e-9, "{}", dist(&a, &b));
}

#[test]
fn random_initial_controller_states_reach_the_optimum() {
    let model = network("three_bus_congested");
    let p_m = [0.0, 0.0, -0.9];
    let sol = solve_olc(&model, &p_m, &OracleOptions::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..4 {
        let mut init = ClosedLoopState::zeros(&model);
        for v in [
            &mut init.ctrl.d,
            &mut init.ctrl.mu,
            &mut init.ctrl.phi,
            &mut init.ctrl.varphi_plus,
            &mut init.ctrl.varphi_minus,
        ] {
            v.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
        }
        init.plant.omega_g = vec![rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1)];
        let s = settle_from(
            &model,
            init,
            &p_m,
            &ControllerConfig::default(),
            1e-3,
            1e-9,
            1500.0,
        )
        .unwrap();
        let settled = OptimalSolution::from_state(&model, &s.state);
        assert!(
            dist(&settled.p_l_star, &sol.p_l_star) < 1e-4,
            "{:?} vs {:?}",
            settled.p_l_star,
            sol.p_l_star
        );
    }
}

#[test]
fn lyapunov_decreases_along_a_congested_transient() {
    let model = network("three_bus_congested");
    let p_m = [0.0, 0.0, -0.9];
    let sol = solve_olc(&model, &p_m, &OracleOptions::default()).unwrap();
    let init = ClosedLoopState::zeros(&model);
    let eq = Equilibrium::for_state(&model, &sol, &init).unwrap();
    let dt = 1e-3;
    let mut sim =
        Simulator::new(&model, ControllerConfig::default(), dt, init, p_m.to_vec()).unwrap();
    let mut prev = lyapunov(&model, sim.state(), &eq).unwrap();
    let v0 = prev;
    for _ in 0..20_000 {
        sim.step().unwrap();
        let v = lyapunov(&model, sim.state(), &eq).unwrap();
        assert!(
            v - prev <= 1e-6 * dt * dt,
            "V rose by {} at t = {}",
            v - prev,
            sim.time()
        );
        prev = v;
    }
    assert!(prev < v0, "{prev} vs {v0}");
}

fn congested_anchor() -> (NetworkModel, Equilibrium) {
    let model = network("three_bus_congested");
    let sol = solve_olc(&model, &[0.0, 0.0, -0.9], &OracleOptions::default()).unwrap();
    let eq = Equilibrium::from_solution(&model, &sol, 0.0).unwrap();
    (model, eq)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn lyapunov_is_nonnegative(values in prop::collection::vec(-3.0f64..3.0, 20)) {
        let (model, eq) = congested_anchor();
        // θ_e(3), ω_g(2), d, μ, φ, φ⁺, φ⁻ (3 each)
        let s = ClosedLoopState::from_flat(&model, &values).unwrap();
        let v = lyapunov(&model, &s, &eq).unwrap();
        prop_assert!(v >= -1e-12, "V = {}", v);
    }
}

#[test]
fn lyapunov_vanishes_only_at_the_anchor() {
    let (model, eq) = congested_anchor();
    let mut s = ClosedLoopState::zeros(&model);
    s.plant.theta_e = eq.theta_e.clone();
    s.ctrl.d = eq.p_l.clone();
    s.ctrl.mu = eq.mu.clone();
    s.ctrl.phi = eq.phi.clone();
    s.ctrl.varphi_plus = eq.eta_plus.clone();
    s.ctrl.varphi_minus = eq.eta_minus.clone();
    assert!(lyapunov(&model, &s, &eq).unwrap().abs() < 1e-15);
    s.ctrl.mu[1] += 1e-3;
    assert!(lyapunov(&model, &s, &eq).unwrap() > 1e-7);
}
