mod common;

use common::{lattice_optimum, network};
use olc_core::analysis::{kkt_residuals, solve_olc, OracleOptions};
use olc_core::Error;

fn assert_matches_lattice(name: &str, p_m: &[f64]) {
    let model = network(name);
    let sol = solve_olc(&model, p_m, &OracleOptions::default()).unwrap();
    let (grid, grid_cost) = lattice_optimum(&model, p_m, 1e-4).expect("feasible lattice point");
    for (a, b) in sol.p_l_star.iter().zip(&grid) {
        assert!(
            (a - b).abs() < 1e-3,
            "{name}: oracle {:?} vs lattice {:?}",
            sol.p_l_star,
            grid
        );
    }
    // the lattice can only do worse than the true optimum, and not by much
    assert!(
        grid_cost >= sol.objective - 1e-9,
        "{name}: {grid_cost} < {}",
        sol.objective
    );
    assert!(
        grid_cost - sol.objective < 1e-6,
        "{name}: {grid_cost} vs {}",
        sol.objective
    );
}

#[test]
fn past_the_kink_matches_lattice_search() {
    // 0.9 surplus shared on the outer pieces: 0.3 per bus
    assert_matches_lattice("three_bus", &[0.5, 0.0, 0.4]);
    let sol = solve_olc(
        &network("three_bus"),
        &[0.5, 0.0, 0.4],
        &OracleOptions::default(),
    )
    .unwrap();
    for p in &sol.p_l_star {
        assert!((p - 0.3).abs() < 1e-6);
    }
}

#[test]
fn congested_case_matches_lattice_search() {
    assert_matches_lattice("three_bus_congested", &[0.0, 0.0, -0.9]);
}

#[test]
fn two_bus_matches_lattice_search() {
    assert_matches_lattice("two_bus", &[0.0, -0.3]);
    assert_matches_lattice("two_bus", &[0.7, 0.3]);
}

#[test]
fn oracle_solution_satisfies_kkt() {
    for (name, p_m) in [
        ("three_bus", vec![0.0, -0.3, 0.0]),
        ("three_bus_kink", vec![0.0, 0.55, 0.0]),
        ("three_bus_capped", vec![0.9, 0.0, 0.0]),
        ("three_bus_congested", vec![0.0, 0.0, -0.9]),
        (
            "nine_bus",
            vec![0.0, 0.0, 0.0, 0.0, -0.5, 0.0, 0.0, 0.0, -0.2],
        ),
    ] {
        let model = network(name);
        let sol = solve_olc(&model, &p_m, &OracleOptions::default()).unwrap();
        let r = kkt_residuals(&model, &p_m, &sol).unwrap();
        assert!(r.max() < 1e-6, "{name}: {r:?}");
        assert_eq!(sol.phi_star[0], 0.0);
        assert!(sol
            .eta_plus_star
            .iter()
            .chain(&sol.eta_minus_star)
            .all(|&e| e >= 0.0));
    }
}

#[test]
fn perturbed_load_shows_up_in_balance_residual() {
    let model = network("three_bus");
    let p_m = [0.0, -0.3, 0.0];
    let mut sol = solve_olc(&model, &p_m, &OracleOptions::default()).unwrap();
    let before = kkt_residuals(&model, &p_m, &sol).unwrap().power_balance;
    sol.p_l_star[1] += 0.1;
    let after = kkt_residuals(&model, &p_m, &sol).unwrap().power_balance;
    assert!((after - 0.1).abs() < before + 1e-9, "{after}");
}

#[test]
fn congestion_splits_the_multipliers() {
    let model = network("three_bus_congested");
    let sol = solve_olc(&model, &[0.0, 0.0, -0.9], &OracleOptions::default()).unwrap();
    // line 1 (bus 1 -> bus 2) carries the limit
    assert!(sol.eta_plus_star[1] > 1e-3);
    let spread = sol
        .mu_star
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max)
        - sol.mu_star.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(spread > 1e-2);
}

#[test]
fn infeasible_injection_is_reported() {
    let model = network("three_bus");
    let err = solve_olc(&model, &[2.0, 1.5, 0.0], &OracleOptions::default()).unwrap_err();
    assert!(matches!(err, Error::Infeasible(_)), "{err}");
}

#[test]
fn wrong_length_is_a_dimension_error() {
    let model = network("three_bus");
    let err = solve_olc(&model, &[0.0, 0.0], &OracleOptions::default()).unwrap_err();
    assert!(matches!(err, Error::Dimension { .. }), "{err}");
}
