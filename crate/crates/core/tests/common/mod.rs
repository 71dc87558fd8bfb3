//! Fixture paths and a brute-force optimizer shared by the integration tests.

#![allow(dead_code)]

use std::path::PathBuf;

use nalgebra::DMatrix;
use olc_core::{NetworkModel, Scenario};

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn network(name: &str) -> NetworkModel {
    NetworkModel::load(fixtures().join("networks").join(format!("{name}.toml"))).unwrap()
}

pub fn scenario(name: &str) -> (Scenario, NetworkModel) {
    let sc = Scenario::load(fixtures().join("scenarios").join(format!("{name}.toml"))).unwrap();
    let model = sc.load_network().unwrap();
    (sc, model)
}

/// Exhaustive search on a lattice of spacing `h` for networks with at most
/// three buses. The last load is eliminated through `Σ P = Σ P^m` and the
/// angles through `θ = Cᵀ L⁺ (P^m - P)`. Angles are affine in the free
/// loads, so for each value of the outer coordinate the feasible range of
/// the inner one is an interval computed exactly; every lattice point in it
/// is evaluated.
pub fn lattice_optimum(model: &NetworkModel, p_m: &[f64], h: f64) -> Option<(Vec<f64>, f64)> {
    let n = model.n();
    assert!((1..=3).contains(&n), "lattice search is for n <= 3");
    let total: f64 = p_m.iter().sum();
    let buses = model.buses();
    let last = n - 1;
    let (lo_last, hi_last) = (buses[last].load_lower, buses[last].load_upper);
    if n == 1 {
        return (lo_last <= total && total <= hi_last)
            .then(|| (vec![total], buses[0].cost.eval(total)));
    }
    let inc = model.incidence().to_dmatrix();
    let lap_pinv = model.laplacian_weighted().pseudo_inverse(1e-12).unwrap();
    let a: DMatrix<f64> = inc.transpose() * lap_pinv;
    let (th_lo, th_hi) = (model.angle_lower(), model.angle_upper());
    // θ_e = base_e - Σ_{j<last} (a_ej - a_e,last) P_j  with P_last eliminated
    let base: Vec<f64> = (0..model.m())
        .map(|e| (0..n).map(|j| a[(e, j)] * p_m[j]).sum::<f64>() - a[(e, last)] * total)
        .collect();
    let coef = |e: usize, j: usize| a[(e, j)] - a[(e, last)];
    let tiny = 1e-12;

    let grid = |j: usize| {
        let (lo, hi) = (buses[j].load_lower, buses[j].load_upper);
        let steps = ((hi - lo) / h).round() as usize;
        (0..=steps).map(move |i| (lo + i as f64 * h).min(hi))
    };
    let cost_last = |x: f64| buses[last].cost.eval(x);

    let mut best: Option<(Vec<f64>, f64)> = None;
    if n == 2 {
        for x in grid(0) {
            let z = total - x;
            if z < lo_last - tiny || z > hi_last + tiny {
                continue;
            }
            let ok = (0..model.m()).all(|e| {
                let th = base[e] - coef(e, 0) * x;
                th >= th_lo[e] - tiny && th <= th_hi[e] + tiny
            });
            if ok {
                let c = buses[0].cost.eval(x) + cost_last(z);
                if best.as_ref().is_none_or(|b| c < b.1) {
                    best = Some((vec![x, z], c));
                }
            }
        }
        return best;
    }

    let (lo1, hi1) = (buses[1].load_lower, buses[1].load_upper);
    let steps1 = ((hi1 - lo1) / h).round() as i64;
    let f1: Vec<f64> = grid(1).map(|y| buses[1].cost.eval(y)).collect();
    for x in grid(0) {
        // interval of y allowed by the box of the eliminated load and by every line
        let (mut ylo, mut yhi) = (total - x - hi_last, total - x - lo_last);
        for e in 0..model.m() {
            // th_lo <= base - c0 x - c1 y <= th_hi
            let (c0, c1) = (coef(e, 0), coef(e, 1));
            let r = base[e] - c0 * x;
            if c1.abs() < 1e-14 {
                if r < th_lo[e] - tiny || r > th_hi[e] + tiny {
                    ylo = f64::INFINITY;
                }
                continue;
            }
            let (u, v) = ((r - th_hi[e]) / c1, (r - th_lo[e]) / c1);
            ylo = ylo.max(u.min(v));
            yhi = yhi.min(u.max(v));
        }
        let i_lo = (((ylo - lo1) / h) - 1e-6).ceil().max(0.0) as i64;
        let i_hi = (((yhi - lo1) / h) + 1e-6).floor().min(steps1 as f64) as i64;
        let fx = buses[0].cost.eval(x);
        for i in i_lo..=i_hi {
            let y = (lo1 + i as f64 * h).min(hi1);
            let c = fx + f1[i as usize] + cost_last(total - x - y);
            if best.as_ref().is_none_or(|b| c < b.1) {
                best = Some((vec![x, y, total - x - y], c));
            }
        }
    }
    best
}
