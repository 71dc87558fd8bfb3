//! Power network graph, parameters and matrix representations.
//!
//! Buses are numbered `0..n` in file order and lines keep the orientation
//! given in the file. Angles are in radians, powers in per-unit.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::costs::{LoadBox, PiecewiseCost};
use crate::error::{check_len, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Generator,
    Load,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: usize,
    pub kind: BusKind,
    /// `M_j`; only generator buses carry inertia.
    pub inertia: Option<f64>,
    pub damping: f64,
    pub load_lower: f64,
    pub load_upper: f64,
    pub cost: PiecewiseCost,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    pub susceptance: f64,
    pub angle_lower: f64,
    pub angle_upper: f64,
}

/// Validated network. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    name: Option<String>,
    buses: Vec<Bus>,
    lines: Vec<Line>,
    generators: Vec<usize>,
    loads: Vec<usize>,
    gen_slot: Vec<Option<usize>>,
}

// On-disk schema.

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    buses: Vec<BusRecord>,
    #[serde(default)]
    lines: Vec<LineRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BusRecord {
    id: usize,
    kind: BusKind,
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    inertia: Option<f64>,
    #[serde(rename = "D")]
    damping: f64,
    p_l_min: f64,
    p_l_max: f64,
    cost: PiecewiseCost,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LineRecord {
    from: usize,
    to: usize,
    #[serde(rename = "B")]
    susceptance: f64,
    theta_min: f64,
    theta_max: f64,
}

impl NetworkModel {
    pub fn new(name: Option<String>, buses: Vec<Bus>, lines: Vec<Line>) -> Result<Self> {
        let invalid = |msg: String| Err(Error::Validation(msg));
        if buses.is_empty() {
            return invalid("network has no buses".into());
        }
        let n = buses.len();
        for (j, bus) in buses.iter().enumerate() {
            if bus.id != j {
                return invalid(format!(
                    "bus ids must be contiguous from 0 in file order: position {j} has id {}",
                    bus.id
                ));
            }
            if !(bus.damping.is_finite() && bus.damping > 0.0) {
                return invalid(format!("bus {j}: damping must be positive"));
            }
            match (bus.kind, bus.inertia) {
                (BusKind::Generator, Some(m)) if m.is_finite() && m > 0.0 => {}
                (BusKind::Generator, Some(_)) => {
                    return invalid(format!("bus {j}: inertia must be positive"))
                }
                (BusKind::Generator, None) => {
                    return invalid(format!("bus {j}: generator bus requires inertia M"))
                }
                (BusKind::Load, Some(_)) => {
                    return invalid(format!("bus {j}: load bus must not carry inertia M"))
                }
                (BusKind::Load, None) => {}
            }
            if !(bus.load_lower.is_finite() && bus.load_upper.is_finite()) {
                return invalid(format!("bus {j}: load bounds must be finite"));
            }
            if bus.load_lower > bus.load_upper {
                return invalid(format!(
                    "bus {j}: load lower bound {} exceeds upper bound {}",
                    bus.load_lower, bus.load_upper
                ));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for (e, line) in lines.iter().enumerate() {
            if line.from >= n || line.to >= n {
                return invalid(format!(
                    "line {e} references unknown bus ({} -> {})",
                    line.from, line.to
                ));
            }
            if line.from == line.to {
                return invalid(format!("line {e} is a self-loop at bus {}", line.from));
            }
            if !(line.susceptance.is_finite() && line.susceptance > 0.0) {
                return invalid(format!("line {e}: susceptance must be positive"));
            }
            if !(line.angle_lower.is_finite() && line.angle_upper.is_finite()) {
                return invalid(format!("line {e}: angle limits must be finite"));
            }
            if line.angle_lower > line.angle_upper {
                return invalid(format!(
                    "line {e}: angle lower limit {} exceeds upper limit {}",
                    line.angle_lower, line.angle_upper
                ));
            }
            let key = (line.from.min(line.to), line.from.max(line.to));
            if !seen.insert(key) {
                return invalid(format!(
                    "line {e}: duplicate edge between buses {} and {}",
                    key.0, key.1
                ));
            }
        }
        if !is_connected(n, &lines) {
            return invalid("graph not connected".into());
        }

        let mut generators = Vec::new();
        let mut loads = Vec::new();
        let mut gen_slot = vec![None; n];
        for bus in &buses {
            match bus.kind {
                BusKind::Generator => {
                    gen_slot[bus.id] = Some(generators.len());
                    generators.push(bus.id);
                }
                BusKind::Load => loads.push(bus.id),
            }
        }
        Ok(Self {
            name,
            buses,
            lines,
            generators,
            loads,
            gen_slot,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    /// Parses a network document. `origin` names the source in error messages.
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self> {
        let file: NetworkFile = toml::from_str(text).map_err(|e| Error::Parse {
            origin: origin.to_string(),
            context: e.to_string(),
        })?;
        let buses = file
            .buses
            .into_iter()
            .map(|b| Bus {
                id: b.id,
                kind: b.kind,
                inertia: b.inertia,
                damping: b.damping,
                load_lower: b.p_l_min,
                load_upper: b.p_l_max,
                cost: b.cost,
            })
            .collect();
        let lines = file
            .lines
            .into_iter()
            .map(|l| Line {
                from: l.from,
                to: l.to,
                susceptance: l.susceptance,
                angle_lower: l.theta_min,
                angle_upper: l.theta_max,
            })
            .collect();
        Self::new(file.name, buses, lines)
    }

    pub fn to_toml_string(&self) -> String {
        let file = NetworkFile {
            name: self.name.clone(),
            buses: self
                .buses
                .iter()
                .map(|b| BusRecord {
                    id: b.id,
                    kind: b.kind,
                    inertia: b.inertia,
                    damping: b.damping,
                    p_l_min: b.load_lower,
                    p_l_max: b.load_upper,
                    cost: b.cost.clone(),
                })
                .collect(),
            lines: self
                .lines
                .iter()
                .map(|l| LineRecord {
                    from: l.from,
                    to: l.to,
                    susceptance: l.susceptance,
                    theta_min: l.angle_lower,
                    theta_max: l.angle_upper,
                })
                .collect(),
        };
        toml::to_string(&file).expect("network serializes to TOML")
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    pub fn n(&self) -> usize {
        self.buses.len()
    }

    pub fn m(&self) -> usize {
        self.lines.len()
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    /// Generator bus ids in increasing order.
    pub fn generators(&self) -> &[usize] {
        &self.generators
    }

    pub fn loads(&self) -> &[usize] {
        &self.loads
    }

    /// Position of bus `j` within [`Self::generators`], if it is a generator.
    pub fn gen_slot(&self, j: usize) -> Option<usize> {
        self.gen_slot[j]
    }

    pub fn load_box(&self) -> LoadBox {
        LoadBox {
            lower: self.buses.iter().map(|b| b.load_lower).collect(),
            upper: self.buses.iter().map(|b| b.load_upper).collect(),
        }
    }

    pub fn angle_lower(&self) -> Vec<f64> {
        self.lines.iter().map(|l| l.angle_lower).collect()
    }

    pub fn angle_upper(&self) -> Vec<f64> {
        self.lines.iter().map(|l| l.angle_upper).collect()
    }

    pub fn susceptances(&self) -> Vec<f64> {
        self.lines.iter().map(|l| l.susceptance).collect()
    }

    pub fn incidence(&self) -> IncidenceMatrix {
        let (n, m) = (self.n(), self.m());
        let mut entries = vec![0i8; n * m];
        for (e, l) in self.lines.iter().enumerate() {
            entries[l.from * m + e] = 1;
            entries[l.to * m + e] = -1;
        }
        IncidenceMatrix { n, m, entries }
    }

    /// `C·diag(B)·Cᵀ`.
    pub fn laplacian_weighted(&self) -> DMatrix<f64> {
        let mut lap = DMatrix::zeros(self.n(), self.n());
        for l in &self.lines {
            let (i, j, b) = (l.from, l.to, l.susceptance);
            lap[(i, i)] += b;
            lap[(j, j)] += b;
            lap[(i, j)] -= b;
            lap[(j, i)] -= b;
        }
        lap
    }

    // Sparse products used on the simulation hot path.

    /// `C·v` for an edge vector `v`.
    pub fn incidence_mul(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.m());
        let mut out = vec![0.0; self.n()];
        for (l, &x) in self.lines.iter().zip(v) {
            out[l.from] += x;
            out[l.to] -= x;
        }
        out
    }

    /// `Cᵀ·x` for a bus vector `x`: per-line differences `x_i - x_j`.
    pub fn incidence_t_mul(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.n());
        self.lines.iter().map(|l| x[l.from] - x[l.to]).collect()
    }

    /// `C·diag(B)·Cᵀ·x`.
    pub fn laplacian_mul(&self, x: &[f64]) -> Vec<f64> {
        let flows: Vec<f64> = self
            .lines
            .iter()
            .map(|l| l.susceptance * (x[l.from] - x[l.to]))
            .collect();
        self.incidence_mul(&flows)
    }

    /// DC line flows `B_ij θ_ij`.
    pub fn line_flows(&self, theta_e: &[f64]) -> Result<Vec<f64>> {
        check_len("edge angles", theta_e, self.m())?;
        Ok(self
            .lines
            .iter()
            .zip(theta_e)
            .map(|(l, &t)| l.susceptance * t)
            .collect())
    }

    /// Net power flowing into each bus over the lines:
    /// `Σ_{i→j} B_ij θ_ij - Σ_{j→k} B_jk θ_jk`, i.e. `-C·B·θ_e`.
    pub fn net_inflow(&self, theta_e: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n()];
        for (l, &t) in self.lines.iter().zip(theta_e) {
            let flow = l.susceptance * t;
            out[l.to] += flow;
            out[l.from] -= flow;
        }
        out
    }
}

fn is_connected(n: usize, lines: &[Line]) -> bool {
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut parent: Vec<usize> = (0..n).collect();
    let mut components = n;
    for l in lines {
        let (a, b) = (find(&mut parent, l.from), find(&mut parent, l.to));
        if a != b {
            parent[a] = b;
            components -= 1;
        }
    }
    components == 1
}

/// Node-edge incidence matrix with `+1` at the sending bus and `-1` at the
/// receiving bus of every line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IncidenceMatrix {
    n: usize,
    m: usize,
    entries: Vec<i8>,
}

impl IncidenceMatrix {
    pub fn get(&self, bus: usize, line: usize) -> i8 {
        self.entries[bus * self.m + line]
    }

    pub fn rows(&self) -> usize {
        self.n
    }

    pub fn cols(&self) -> usize {
        self.m
    }

    pub fn column_sums(&self) -> Vec<i64> {
        (0..self.m)
            .map(|e| (0..self.n).map(|i| i64::from(self.get(i, e))).sum())
            .collect()
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.m, |i, e| f64::from(self.get(i, e)))
    }
}
