//! Browser bindings for the demo page in `www/`. Every export takes plain
//! numbers or strings and returns a JSON document.
//!
//! The `*_json` functions hold the logic and are usable natively; the
//! `#[wasm_bindgen]` wrappers only turn errors into JS exceptions.

use olc_core::analysis::{solve_olc, AnchorSchedule, OracleOptions};
use olc_core::simulator::{run, Event, Scenario};
use olc_core::{ControllerConfig, NetworkModel, PiecewiseCost, SelectionRule};
use serde::Serialize;
use serde_json::json;
use wasm_bindgen::prelude::*;

const NETWORKS: [(&str, &str); 4] = [
    (
        "two_bus",
        include_str!("../../../fixtures/networks/two_bus.toml"),
    ),
    (
        "three_bus",
        include_str!("../../../fixtures/networks/three_bus.toml"),
    ),
    (
        "three_bus_congested",
        include_str!("../../../fixtures/networks/three_bus_congested.toml"),
    ),
    (
        "nine_bus",
        include_str!("../../../fixtures/networks/nine_bus.toml"),
    ),
];

/// Points per plotted series.
const PLOT_POINTS: usize = 400;

fn network(name: &str) -> Result<NetworkModel, String> {
    let (_, text) = NETWORKS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| format!("unknown network '{name}'"))?;
    NetworkModel::from_toml_str(text, name).map_err(|e| e.to_string())
}

/// Names and bus counts of the built-in networks.
pub fn networks_json() -> String {
    let list: Vec<_> = NETWORKS
        .iter()
        .map(|(name, _)| {
            let m = network(name).expect("bundled network parses");
            json!({ "name": name, "buses": m.n(), "lines": m.m(), "generators": m.generators() })
        })
        .collect();
    serde_json::Value::from(list).to_string()
}

#[derive(Serialize)]
struct Series {
    t: Vec<f64>,
    omega: Vec<Vec<f64>>,
    p_l: Vec<Vec<f64>>,
    mu: Vec<Vec<f64>>,
    flow: Vec<Vec<f64>>,
    lyapunov: Vec<f64>,
    optimum: Vec<f64>,
    limits: Vec<f64>,
}

/// Step of `delta` p.u. at `bus` half a second in, simulated to `t_end`.
pub fn simulate_json(
    name: &str,
    bus: usize,
    delta: f64,
    t_end: f64,
    selection: &str,
) -> Result<String, String> {
    let model = network(name)?;
    let selection: SelectionRule = selection.parse()?;
    // the 9-bus Laplacian is stiff enough to need a slower controller at 1 ms
    let epsilon = if model.n() > 3 { 0.5 } else { 1.0 };
    let dt = 1e-3;
    let steps = (t_end / dt).round().max(1.0) as usize;
    let scenario = Scenario {
        network: name.into(),
        t_end,
        dt,
        log_decimation: steps.div_ceil(PLOT_POINTS).max(1),
        controller: ControllerConfig {
            selection,
            epsilon,
            ..ControllerConfig::default()
        },
        settle: Default::default(),
        initial: Default::default(),
        events: vec![Event {
            time: 0.5f64.min(t_end),
            bus,
            delta_p_m: delta,
        }],
    };
    scenario.validate(&model).map_err(|e| e.to_string())?;
    let anchors = AnchorSchedule::build(&model, &scenario, &OracleOptions::default())
        .map_err(|e| e.to_string())?;
    let log = run(&model, &scenario, Some(&anchors)).map_err(|e| e.to_string())?;
    let series = Series {
        t: log.times(),
        omega: log.records.iter().map(|r| r.omega.clone()).collect(),
        p_l: log.records.iter().map(|r| r.outputs.p_l.clone()).collect(),
        mu: log
            .records
            .iter()
            .map(|r| r.state.ctrl.mu.clone())
            .collect(),
        flow: log.records.iter().map(|r| r.flows.clone()).collect(),
        lyapunov: log
            .records
            .iter()
            .map(|r| r.lyapunov.unwrap_or(f64::NAN))
            .collect(),
        optimum: anchors.final_solution().p_l_star.clone(),
        limits: model
            .lines()
            .iter()
            .map(|l| l.susceptance * l.angle_upper)
            .collect(),
    };
    serde_json::to_string(&series).map_err(|e| e.to_string())
}

/// The tiered disutility on `[lo, hi]` with its Clarke interval at every
/// sample and at the breakpoints.
pub fn cost_curve_json(lo: f64, hi: f64, samples: usize) -> Result<String, String> {
    if !(lo < hi) || samples < 2 {
        return Err("need lo < hi and at least two samples".into());
    }
    let cost = PiecewiseCost::tiered();
    let pts: Vec<_> = (0..samples)
        .map(|i| {
            let x = lo + (hi - lo) * i as f64 / (samples - 1) as f64;
            let g = cost.clarke(x);
            json!({ "x": x, "f": cost.eval(x), "g_lo": g.lo, "g_hi": g.hi })
        })
        .collect();
    let kinks: Vec<_> = cost
        .breakpoints()
        .map(|x| {
            let g = cost.clarke(x);
            json!({ "x": x, "f": cost.eval(x), "g_lo": g.lo, "g_hi": g.hi })
        })
        .collect();
    Ok(json!({ "points": pts, "kinks": kinks }).to_string())
}

/// Oracle optimum for injections given as a comma-separated list.
pub fn solve_json(name: &str, p_m: &str) -> Result<String, String> {
    let model = network(name)?;
    let p_m = olc_core::controller::parse_vector(p_m, "p_m").map_err(|e| e.to_string())?;
    let sol = solve_olc(&model, &p_m, &OracleOptions::default()).map_err(|e| e.to_string())?;
    let theta = model.incidence_t_mul(&sol.phi_star);
    let lines: Vec<_> = model
        .lines()
        .iter()
        .zip(&theta)
        .map(|(l, &th)| {
            json!({
                "from": l.from,
                "to": l.to,
                "flow": l.susceptance * th,
                "limit": l.susceptance * l.angle_upper,
                "binding": (th - l.angle_upper).abs() < 1e-6 || (th - l.angle_lower).abs() < 1e-6,
            })
        })
        .collect();
    Ok(json!({ "solution": sol, "lines": lines }).to_string())
}

fn js(r: Result<String, String>) -> Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn networks() -> String {
    networks_json()
}

#[wasm_bindgen]
pub fn simulate(
    name: &str,
    bus: usize,
    delta: f64,
    t_end: f64,
    selection: &str,
) -> Result<String, JsValue> {
    js(simulate_json(name, bus, delta, t_end, selection))
}

#[wasm_bindgen]
pub fn cost_curve(lo: f64, hi: f64, samples: usize) -> Result<String, JsValue> {
    js(cost_curve_json(lo, hi, samples))
}

#[wasm_bindgen]
pub fn solve(name: &str, p_m: &str) -> Result<String, JsValue> {
    js(solve_json(name, p_m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    #[test]
    fn bundled_networks_parse() {
        let v: Value = serde_json::from_str(&networks_json()).unwrap();
        assert_eq!(v.as_array().unwrap().len(), 4);
    }

    #[test]
    fn step_restores_frequency_and_reaches_the_optimum() {
        let v: Value =
            serde_json::from_str(&simulate_json("three_bus", 1, -0.3, 30.0, "minnorm").unwrap())
                .unwrap();
        let t = v["t"].as_array().unwrap();
        assert!(t.len() <= PLOT_POINTS + 2);
        let last = &v["omega"][t.len() - 1];
        assert!(last
            .as_array()
            .unwrap()
            .iter()
            .all(|w| w.as_f64().unwrap().abs() < 1e-4));
        for (p, o) in v["p_l"][t.len() - 1]
            .as_array()
            .unwrap()
            .iter()
            .zip(v["optimum"].as_array().unwrap())
        {
            assert!((p.as_f64().unwrap() - o.as_f64().unwrap()).abs() < 1e-3);
        }
    }

    #[test]
    fn cost_curve_reports_kink_intervals() {
        let v: Value = serde_json::from_str(&cost_curve_json(-1.0, 1.0, 21).unwrap()).unwrap();
        assert_eq!(v["points"].as_array().unwrap().len(), 21);
        let kinks = v["kinks"].as_array().unwrap();
        assert!(kinks
            .iter()
            .all(|k| k["g_lo"].as_f64().unwrap() < k["g_hi"].as_f64().unwrap()));
    }

    #[test]
    fn solve_marks_the_congested_line() {
        let v: Value =
            serde_json::from_str(&solve_json("three_bus_congested", "0, 0, -0.9").unwrap())
                .unwrap();
        let binding: Vec<_> = v["lines"]
            .as_array()
            .unwrap()
            .iter()
            .filter(|l| l["binding"] == true)
            .collect();
        assert_eq!(binding.len(), 1);
    }

    #[test]
    fn bad_input_is_an_error() {
        assert!(simulate_json("nowhere", 0, 0.1, 1.0, "minnorm").is_err());
        assert!(simulate_json("two_bus", 5, 0.1, 1.0, "minnorm").is_err());
        assert!(simulate_json("two_bus", 1, 0.1, 1.0, "widest").is_err());
        assert!(cost_curve_json(1.0, 0.0, 10).is_err());
    }
}
