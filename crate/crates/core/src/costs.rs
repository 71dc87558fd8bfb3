//! Per-bus regulation costs and the projections used by the controller.
//!
//! A [`PiecewiseCost`] is a continuous, strictly convex function of one
//! variable built from quadratic pieces. It may have kinks at the piece
//! boundaries, where its Clarke generalized gradient is the closed interval
//! between the one-sided derivatives.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// `a·x² + b·x + c` on `[x_min, x_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadPiece {
    pub x_min: f64,
    pub x_max: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl QuadPiece {
    fn value(&self, x: f64) -> f64 {
        (self.a * x + self.b) * x + self.c
    }

    fn slope(&self, x: f64) -> f64 {
        2.0 * self.a * x + self.b
    }
}

/// Relative tolerance for the continuity check at breakpoints. Piece
/// coefficients are usually written in decimal, so exact equality of the
/// two one-sided values is too strict.
const CONTINUITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<QuadPiece>", into = "Vec<QuadPiece>")]
pub struct PiecewiseCost {
    pieces: Vec<QuadPiece>,
}

impl TryFrom<Vec<QuadPiece>> for PiecewiseCost {
    type Error = Error;

    fn try_from(pieces: Vec<QuadPiece>) -> Result<Self> {
        PiecewiseCost::new(pieces)
    }
}

impl From<PiecewiseCost> for Vec<QuadPiece> {
    fn from(cost: PiecewiseCost) -> Self {
        cost.pieces
    }
}

impl PiecewiseCost {
    /// Validates continuity, convexity and strict convexity of the pieces.
    /// The pieces must tile the real line in increasing order.
    pub fn new(pieces: Vec<QuadPiece>) -> Result<Self> {
        let invalid = |msg: String| Err(Error::Validation(format!("cost: {msg}")));
        let (Some(first), Some(last)) = (pieces.first(), pieces.last()) else {
            return invalid("at least one piece is required".into());
        };
        if first.x_min != f64::NEG_INFINITY || last.x_max != f64::INFINITY {
            return invalid("pieces must cover the whole real line (-inf .. inf)".into());
        }
        for (k, p) in pieces.iter().enumerate() {
            if !(p.a.is_finite() && p.b.is_finite() && p.c.is_finite()) {
                return invalid(format!("piece {k} has non-finite coefficients"));
            }
            if p.a <= 0.0 {
                return invalid(format!(
                    "piece {k} must be strictly convex (a > 0), got a = {}",
                    p.a
                ));
            }
            if p.x_min.is_nan() || p.x_max.is_nan() || p.x_min >= p.x_max {
                return invalid(format!("piece {k} has an empty interval"));
            }
        }
        for (k, w) in pieces.windows(2).enumerate() {
            let (l, r) = (&w[0], &w[1]);
            if l.x_max != r.x_min {
                return invalid(format!(
                    "pieces {k} and {} are not contiguous ({} != {})",
                    k + 1,
                    l.x_max,
                    r.x_min
                ));
            }
            let x = l.x_max;
            let (vl, vr) = (l.value(x), r.value(x));
            if (vl - vr).abs() > CONTINUITY_TOL * vl.abs().max(vr.abs()).max(1.0) {
                return invalid(format!("discontinuous at x = {x} ({vl} vs {vr})"));
            }
            let (dl, dr) = (l.slope(x), r.slope(x));
            if dl > dr + CONTINUITY_TOL * dl.abs().max(1.0) {
                return invalid(format!(
                    "not convex at x = {x}: left derivative {dl} exceeds right derivative {dr}"
                ));
            }
        }
        Ok(Self { pieces })
    }

    /// A single convex quadratic on the whole line.
    pub fn quadratic(a: f64, b: f64, c: f64) -> Result<Self> {
        Self::new(vec![QuadPiece {
            x_min: f64::NEG_INFINITY,
            x_max: f64::INFINITY,
            a,
            b,
            c,
        }])
    }

    /// Tiered-price cost: `x² - 0.02` for `|x| > 0.2`, `x²/2` in between.
    /// Kinks at `±0.2`.
    pub fn tiered() -> Self {
        Self::new(vec![
            QuadPiece {
                x_min: f64::NEG_INFINITY,
                x_max: -0.2,
                a: 1.0,
                b: 0.0,
                c: -0.02,
            },
            QuadPiece {
                x_min: -0.2,
                x_max: 0.2,
                a: 0.5,
                b: 0.0,
                c: 0.0,
            },
            QuadPiece {
                x_min: 0.2,
                x_max: f64::INFINITY,
                a: 1.0,
                b: 0.0,
                c: -0.02,
            },
        ])
        .expect("tiered cost is valid")
    }

    pub fn pieces(&self) -> &[QuadPiece] {
        &self.pieces
    }

    /// Interior piece boundaries, in increasing order.
    pub fn breakpoints(&self) -> impl Iterator<Item = f64> + '_ {
        self.pieces[..self.pieces.len() - 1].iter().map(|p| p.x_max)
    }

    /// Index of the piece owning `x`; a breakpoint belongs to the piece on its left.
    fn piece_index(&self, x: f64) -> usize {
        self.pieces
            .iter()
            .position(|p| x <= p.x_max)
            .unwrap_or(self.pieces.len() - 1)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.pieces[self.piece_index(x)].value(x)
    }

    /// Clarke generalized gradient `[f'(x-), f'(x+)]`.
    pub fn clarke(&self, x: f64) -> SubgradientInterval {
        let k = self.piece_index(x);
        let left = &self.pieces[k];
        let lo = left.slope(x);
        let hi = match self.pieces.get(k + 1) {
            Some(right) if x == left.x_max => right.slope(x),
            _ => lo,
        };
        SubgradientInterval { lo, hi }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubgradientInterval {
    pub lo: f64,
    pub hi: f64,
}

impl SubgradientInterval {
    pub fn contains(&self, g: f64) -> bool {
        self.lo <= g && g <= self.hi
    }

    pub fn is_singleton(&self) -> bool {
        self.lo == self.hi
    }
}

/// How an element of the Clarke interval is picked when integrating the
/// differential inclusion as an ODE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionRule {
    /// Element of smallest magnitude.
    #[default]
    MinNorm,
    Left,
    Right,
    Mid,
}

impl SelectionRule {
    pub const ALL: [SelectionRule; 4] = [
        SelectionRule::MinNorm,
        SelectionRule::Left,
        SelectionRule::Right,
        SelectionRule::Mid,
    ];

    pub fn select(self, iv: SubgradientInterval) -> f64 {
        match self {
            SelectionRule::MinNorm => select_subgradient(iv),
            SelectionRule::Left => iv.lo,
            SelectionRule::Right => iv.hi,
            SelectionRule::Mid => 0.5 * (iv.lo + iv.hi),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SelectionRule::MinNorm => "minnorm",
            SelectionRule::Left => "left",
            SelectionRule::Right => "right",
            SelectionRule::Mid => "mid",
        }
    }
}

impl std::str::FromStr for SelectionRule {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        SelectionRule::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| {
                format!("unknown selection rule '{s}' (expected minnorm|left|right|mid)")
            })
    }
}

/// Minimal-norm element of the interval.
pub fn select_subgradient(iv: SubgradientInterval) -> f64 {
    if iv.lo > 0.0 {
        iv.lo
    } else if iv.hi < 0.0 {
        iv.hi
    } else {
        0.0
    }
}

/// Capacity box of the controllable loads.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LoadBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_len("box upper bounds", &upper, lower.len())?;
        if let Some(j) = (0..lower.len()).find(|&j| !(lower[j] <= upper[j])) {
            return Err(Error::Validation(format!(
                "box component {j}: lower bound {} exceeds upper bound {}",
                lower[j], upper[j]
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.len()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&v, (&lo, &hi))| lo <= v && v <= hi)
    }
}

pub fn project_box(x: &[f64], bounds: &LoadBox) -> Result<Vec<f64>> {
    check_len("projection input", x, bounds.len())?;
    Ok(x.iter()
        .zip(bounds.lower.iter().zip(&bounds.upper))
        .map(|(&v, (&lo, &hi))| v.clamp(lo, hi))
        .collect())
}

pub fn project_nonneg(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| v.max(0.0)).collect()
}
