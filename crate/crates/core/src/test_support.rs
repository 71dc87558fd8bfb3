//! Small networks shared by the unit tests.

use rand::Rng;

use crate::costs::PiecewiseCost;
use crate::network::{Bus, BusKind, Line, NetworkModel};

fn bus(id: usize, inertia: Option<f64>, damping: f64, cost: PiecewiseCost, bound: f64) -> Bus {
    Bus {
        id,
        kind: if inertia.is_some() {
            BusKind::Generator
        } else {
            BusKind::Load
        },
        inertia,
        damping,
        load_lower: -bound,
        load_upper: bound,
        cost,
    }
}

fn line(from: usize, to: usize, susceptance: f64, limit: f64) -> Line {
    Line {
        from,
        to,
        susceptance,
        angle_lower: -limit,
        angle_upper: limit,
    }
}

pub fn single_generator(inertia: f64) -> NetworkModel {
    NetworkModel::new(
        None,
        vec![bus(0, Some(inertia), 1.0, PiecewiseCost::tiered(), 5.0)],
        vec![],
    )
    .unwrap()
}

/// Generator bus 0 (M = D = 1) feeding load bus 1 with damping `load_damping`.
pub fn two_bus(load_damping: f64) -> NetworkModel {
    NetworkModel::new(
        None,
        vec![
            bus(0, Some(1.0), 1.0, PiecewiseCost::tiered(), 1.0),
            bus(1, None, load_damping, PiecewiseCost::tiered(), 1.0),
        ],
        vec![line(0, 1, 1.0, 1.0)],
    )
    .unwrap()
}

/// Triangle with two generators and one load bus, tiered costs.
pub fn three_bus() -> NetworkModel {
    NetworkModel::new(
        None,
        vec![
            bus(0, Some(1.0), 1.0, PiecewiseCost::tiered(), 1.0),
            bus(1, None, 1.0, PiecewiseCost::tiered(), 1.0),
            bus(2, Some(2.0), 1.5, PiecewiseCost::tiered(), 1.0),
        ],
        vec![
            line(0, 1, 2.0, 1.0),
            line(1, 2, 1.5, 1.0),
            line(0, 2, 1.0, 1.0),
        ],
    )
    .unwrap()
}

/// Random connected network: a random spanning tree plus a few chords.
/// Bus 0 is always a generator.
pub fn random_network(rng: &mut impl Rng, n: usize) -> NetworkModel {
    let buses = (0..n)
        .map(|j| {
            let inertia = (j == 0 || rng.gen_bool(0.5)).then(|| rng.gen_range(0.5..3.0));
            let cost =
                PiecewiseCost::quadratic(rng.gen_range(0.5..2.0), rng.gen_range(-0.2..0.2), 0.0)
                    .unwrap();
            bus(
                j,
                inertia,
                rng.gen_range(0.5..2.0),
                cost,
                rng.gen_range(0.5..2.0),
            )
        })
        .collect();
    let mut lines = Vec::new();
    let mut pairs = std::collections::HashSet::new();
    for j in 1..n {
        let i = rng.gen_range(0..j);
        let (from, to) = if rng.gen_bool(0.5) { (i, j) } else { (j, i) };
        pairs.insert((i, j));
        lines.push(line(from, to, rng.gen_range(0.5..3.0), 1.0));
    }
    for _ in 0..n / 2 {
        let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
        let key = (a.min(b), a.max(b));
        if a != b && pairs.insert(key) {
            lines.push(line(a, b, rng.gen_range(0.5..3.0), 1.0));
        }
    }
    NetworkModel::new(None, buses, lines).unwrap()
}
