//! Linearized swing dynamics of the network.
//!
//! The load-bus balance is algebraic; since every `D_j > 0` it is solved
//! explicitly for the load-bus frequency, which reduces the DAE to an ODE in
//! the edge angle differences and the generator frequencies.

use crate::error::{check_len, Result};
use crate::network::NetworkModel;

/// Physical state: edge angle differences `θ_ij` and generator frequency
/// deviations.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    pub theta_e: Vec<f64>,
    pub omega_g: Vec<f64>,
}

impl PlantState {
    pub fn zeros(model: &NetworkModel) -> Self {
        Self {
            theta_e: vec![0.0; model.m()],
            omega_g: vec![0.0; model.generators().len()],
        }
    }

    pub fn check(&self, model: &NetworkModel) -> Result<()> {
        check_len("theta_e", &self.theta_e, model.m())?;
        check_len("omega_g", &self.omega_g, model.generators().len())
    }
}

/// Bus power injections and controllable loads.
#[derive(Debug, Clone, PartialEq)]
pub struct Injection {
    pub p_m: Vec<f64>,
    pub p_l: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantDerivative {
    pub dtheta_e: Vec<f64>,
    pub domega_g: Vec<f64>,
    /// Full frequency vector over all buses (generators from the state, load
    /// buses from the algebraic balance).
    pub omega: Vec<f64>,
}

fn check_inputs(model: &NetworkModel, state: &PlantState, inj: &Injection) -> Result<()> {
    state.check(model)?;
    check_len("p_m", &inj.p_m, model.n())?;
    check_len("p_l", &inj.p_l, model.n())
}

fn load_frequencies_from_inflow(model: &NetworkModel, inflow: &[f64], inj: &Injection) -> Vec<f64> {
    model
        .loads()
        .iter()
        .map(|&j| (inj.p_m[j] - inj.p_l[j] + inflow[j]) / model.buses()[j].damping)
        .collect()
}

/// Frequencies of the load buses, in the order of [`NetworkModel::loads`].
pub fn load_bus_frequencies(
    model: &NetworkModel,
    state: &PlantState,
    inj: &Injection,
) -> Result<Vec<f64>> {
    check_inputs(model, state, inj)?;
    let inflow = model.net_inflow(&state.theta_e);
    Ok(load_frequencies_from_inflow(model, &inflow, inj))
}

pub fn plant_rhs(
    model: &NetworkModel,
    state: &PlantState,
    inj: &Injection,
) -> Result<PlantDerivative> {
    check_inputs(model, state, inj)?;
    let inflow = model.net_inflow(&state.theta_e);
    let mut omega = vec![0.0; model.n()];
    for (&j, &w) in model.generators().iter().zip(&state.omega_g) {
        omega[j] = w;
    }
    for (&j, w) in model
        .loads()
        .iter()
        .zip(load_frequencies_from_inflow(model, &inflow, inj))
    {
        omega[j] = w;
    }
    let dtheta_e = model.incidence_t_mul(&omega);
    let domega_g = model
        .generators()
        .iter()
        .map(|&j| {
            let bus = &model.buses()[j];
            let m = bus.inertia.expect("generator bus has inertia");
            (inj.p_m[j] - inj.p_l[j] - bus.damping * omega[j] + inflow[j]) / m
        })
        .collect();
    Ok(PlantDerivative {
        dtheta_e,
        domega_g,
        omega,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_support::{random_network, three_bus, two_bus};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Residual of the algebraic load-bus equation at frequency `omega_j`.
    fn load_residual(
        model: &NetworkModel,
        state: &PlantState,
        inj: &Injection,
        j: usize,
        w: f64,
    ) -> f64 {
        let mut inflow = 0.0;
        for (l, &t) in model.lines().iter().zip(&state.theta_e) {
            if l.to == j {
                inflow += l.susceptance * t;
            }
            if l.from == j {
                inflow -= l.susceptance * t;
            }
        }
        inj.p_m[j] - inj.p_l[j] - model.buses()[j].damping * w + inflow
    }

    fn random_inputs(model: &NetworkModel, rng: &mut impl Rng) -> (PlantState, Injection) {
        let mut v = |k: usize| {
            (0..k)
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect::<Vec<f64>>()
        };
        let state = PlantState {
            theta_e: v(model.m()),
            omega_g: v(model.generators().len()),
        };
        let inj = Injection {
            p_m: v(model.n()),
            p_l: v(model.n()),
        };
        (state, inj)
    }

    #[test]
    fn rest_point_is_stationary() {
        let net = three_bus();
        let state = PlantState::zeros(&net);
        let inj = Injection {
            p_m: vec![0.3, -0.2, 0.1],
            p_l: vec![0.3, -0.2, 0.1],
        };
        let d = plant_rhs(&net, &state, &inj).unwrap();
        assert!(d
            .dtheta_e
            .iter()
            .chain(&d.domega_g)
            .chain(&d.omega)
            .all(|&x| x == 0.0));
        let zero = Injection {
            p_m: vec![0.0; 3],
            p_l: vec![0.0; 3],
        };
        assert!(load_bus_frequencies(&net, &state, &zero)
            .unwrap()
            .iter()
            .all(|&w| w == 0.0));
    }

    #[test]
    fn two_bus_load_frequency() {
        let net = two_bus(2.0);
        let state = PlantState::zeros(&net);
        let inj = Injection {
            p_m: vec![0.0, -1.0],
            p_l: vec![0.0, 0.0],
        };
        let w = load_bus_frequencies(&net, &state, &inj).unwrap();
        assert_eq!(w, vec![-0.5]);
        assert_eq!(load_residual(&net, &state, &inj, 1, w[0]), 0.0);
    }

    #[test]
    fn single_generator_swing() {
        let net = crate::test_support::single_generator(2.0);
        let state = PlantState::zeros(&net);
        let inj = Injection {
            p_m: vec![1.0],
            p_l: vec![0.0],
        };
        let d = plant_rhs(&net, &state, &inj).unwrap();
        assert_eq!(d.domega_g, vec![0.5]);
        assert!(d.dtheta_e.is_empty());
    }

    #[test]
    fn dimension_errors() {
        let net = three_bus();
        let inj = Injection {
            p_m: vec![0.0; 2],
            p_l: vec![0.0; 3],
        };
        assert!(plant_rhs(&net, &PlantState::zeros(&net), &inj).is_err());
    }

    proptest! {
        #[test]
        fn load_balance_residual_vanishes(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let net = random_network(&mut rng, 6);
            let (state, inj) = random_inputs(&net, &mut rng);
            let w = load_bus_frequencies(&net, &state, &inj).unwrap();
            for (&j, &wj) in net.loads().iter().zip(&w) {
                let r = load_residual(&net, &state, &inj, j, wj);
                prop_assert!(r.abs() < 1e-12, "residual {r}");
            }
        }

        #[test]
        fn aggregate_power_identity(seed in any::<u64>()) {
            // Line flows cancel in the sum over all buses.
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let net = random_network(&mut rng, 6);
            let (state, inj) = random_inputs(&net, &mut rng);
            let d = plant_rhs(&net, &state, &inj).unwrap();
            let inertial: f64 = net.generators().iter().zip(&d.domega_g)
                .map(|(&j, dw)| net.buses()[j].inertia.unwrap() * dw).sum();
            let expected: f64 = (0..net.n())
                .map(|j| inj.p_m[j] - inj.p_l[j] - net.buses()[j].damping * d.omega[j])
                .sum();
            prop_assert!((inertial - expected).abs() < 1e-10);
        }

        #[test]
        fn rhs_is_affine(seed in any::<u64>(), s in -2.0..2.0f64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let net = random_network(&mut rng, 5);
            let (x1, u1) = random_inputs(&net, &mut rng);
            let (x2, u2) = random_inputs(&net, &mut rng);
            let zero = plant_rhs(&net, &PlantState::zeros(&net), &Injection {
                p_m: vec![0.0; net.n()], p_l: vec![0.0; net.n()] }).unwrap();
            let comb = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x + s * y).collect::<Vec<_>>();
            let x = PlantState { theta_e: comb(&x1.theta_e, &x2.theta_e), omega_g: comb(&x1.omega_g, &x2.omega_g) };
            let u = Injection { p_m: comb(&u1.p_m, &u2.p_m), p_l: comb(&u1.p_l, &u2.p_l) };
            let (f1, f2, f) = (plant_rhs(&net, &x1, &u1).unwrap(), plant_rhs(&net, &x2, &u2).unwrap(), plant_rhs(&net, &x, &u).unwrap());
            // The map is linear (zero at the origin), so f(x1 + s x2) = f(x1) + s f(x2).
            prop_assert!(zero.domega_g.iter().all(|&v| v == 0.0));
            for (a, (b, c)) in f.domega_g.iter().zip(f1.domega_g.iter().zip(&f2.domega_g)) {
                prop_assert!((a - (b + s * c)).abs() < 1e-10);
            }
            for (a, (b, c)) in f.dtheta_e.iter().zip(f1.dtheta_e.iter().zip(&f2.dtheta_e)) {
                prop_assert!((a - (b + s * c)).abs() < 1e-10);
            }
        }
    }
}
