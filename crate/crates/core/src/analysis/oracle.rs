//! Independent solver for the load-control problem
//!
//! ```text
//! minimize    Σ_j f_j(P_j)
//! subject to  P - P^m + C B Cᵀ φ = 0
//!             P_min ≤ P ≤ P_max
//!             θ_min ≤ Cᵀ φ ≤ θ_max
//! ```
//!
//! Two unrelated first-order methods solve it and must agree:
//!
//! * ADMM on the splitting `p = P^m - Lφ`, `u = Cᵀφ`, with an exact
//!   prox of each piecewise-quadratic cost on its capacity interval and an
//!   exact (factorized) solve for `φ`;
//! * a primal-dual hybrid gradient (Chambolle–Pock) iteration in which
//!   every constraint carries its own multiplier, updated by a projected
//!   ascent step, while the per-bus primal updates are decoupled.
//!
//! Both return primal and dual variables. The ADMM point is reported; the
//! hybrid-gradient objective is the cross-check.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::Serialize;

use super::{max_abs, OptimalSolution};
use crate::costs::QuadPiece;
use crate::error::{check_len, Error, Result};
use crate::network::NetworkModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleOptions {
    /// Required agreement of the two objective values (each route must
    /// land within `tol` of the other, so the check is `2·tol`).
    pub tol: f64,
    /// Stopping threshold on primal and dual residuals (∞-norm).
    pub residual_tol: f64,
    pub max_iter: usize,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            residual_tol: 1e-10,
            max_iter: 2_000_000,
        }
    }
}

/// Dense problem data, built from the network without the controller's
/// sparse helpers.
struct Problem {
    n: usize,
    m: usize,
    lap: DMatrix<f64>,
    inc: DMatrix<f64>,
    p_m: DVector<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    th_lo: Vec<f64>,
    th_hi: Vec<f64>,
    costs: Vec<Vec<QuadPiece>>,
}

impl Problem {
    fn new(model: &NetworkModel, p_m: &[f64]) -> Self {
        let inc = model.incidence().to_dmatrix();
        let b = DMatrix::from_diagonal(&DVector::from_vec(model.susceptances()));
        let lap = &inc * b * inc.transpose();
        Self {
            n: model.n(),
            m: model.m(),
            lap,
            inc,
            p_m: DVector::from_column_slice(p_m),
            lo: model.buses().iter().map(|b| b.load_lower).collect(),
            hi: model.buses().iter().map(|b| b.load_upper).collect(),
            th_lo: model.angle_lower(),
            th_hi: model.angle_upper(),
            costs: model
                .buses()
                .iter()
                .map(|b| b.cost.pieces().to_vec())
                .collect(),
        }
    }

    fn objective(&self, p: &DVector<f64>) -> f64 {
        p.iter()
            .zip(&self.costs)
            .map(|(&x, f)| cost_value(f, x))
            .sum()
    }
}

fn piece_value(q: &QuadPiece, x: f64) -> f64 {
    q.a * x * x + q.b * x + q.c
}

fn cost_value(pieces: &[QuadPiece], x: f64) -> f64 {
    let q = pieces
        .iter()
        .find(|q| q.x_min <= x && x <= q.x_max)
        .unwrap_or(&pieces[pieces.len() - 1]);
    piece_value(q, x)
}

/// `argmin_{x ∈ [lo, hi]} f(x) + (rho/2)(x - v)²`, exact: the minimizer on
/// every piece is a clamped stationary point; the best of them is global.
fn prox_cost(pieces: &[QuadPiece], lo: f64, hi: f64, rho: f64, v: f64) -> f64 {
    let mut best = (f64::INFINITY, lo);
    for q in pieces {
        let (a, b) = (q.x_min.max(lo), q.x_max.min(hi));
        if a > b {
            continue;
        }
        let x = ((rho * v - q.b) / (2.0 * q.a + rho)).max(a).min(b);
        let val = piece_value(q, x) + 0.5 * rho * (x - v) * (x - v);
        if val < best.0 {
            best = (val, x);
        }
    }
    best.1
}

fn clamp_vec(v: &DVector<f64>, lo: &[f64], hi: &[f64]) -> DVector<f64> {
    DVector::from_iterator(
        v.len(),
        v.iter().enumerate().map(|(i, &x)| x.max(lo[i]).min(hi[i])),
    )
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    max_abs(v.iter().copied())
}

fn all_finite(vs: &[&DVector<f64>]) -> bool {
    vs.iter().all(|v| v.iter().all(|x| x.is_finite()))
}

struct RawSolution {
    p: DVector<f64>,
    phi: DVector<f64>,
    mu: DVector<f64>,
    /// Net line multiplier `η⁺ - η⁻`.
    eta: DVector<f64>,
    iterations: usize,
    residual: f64,
}

/// `(L² + C Cᵀ + 11ᵀ)` is nonsingular for a connected graph; on right-hand
/// sides orthogonal to `1` it returns the zero-mean solution.
fn phi_system(pb: &Problem) -> Result<Cholesky<f64, Dyn>> {
    let ones = DMatrix::from_element(pb.n, pb.n, 1.0);
    let h = &pb.lap * &pb.lap + &pb.inc * pb.inc.transpose() + ones;
    Cholesky::new(h).ok_or_else(|| Error::NotConverged("singular angle system".into()))
}

fn admm(pb: &Problem, with_cost: bool, rho: f64, opts: &OracleOptions) -> Result<RawSolution> {
    let (n, m) = (pb.n, pb.m);
    let chol = phi_system(pb)?;
    let lt = pb.inc.transpose();
    let mut p = clamp_vec(&pb.p_m, &pb.lo, &pb.hi);
    let mut u = DVector::zeros(m);
    let mut y = DVector::zeros(n);
    let mut w = DVector::zeros(m);
    let mut residual = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let rhs = &pb.lap * (&pb.p_m - &p - &y / rho) + &pb.inc * (&u + &w / rho);
        let phi = chol.solve(&rhs);
        let lphi = &pb.lap * &phi;
        let ct_phi = &lt * &phi;
        let v = &pb.p_m - &lphi - &y / rho;
        let p_new = if with_cost {
            DVector::from_iterator(
                n,
                (0..n).map(|j| prox_cost(&pb.costs[j], pb.lo[j], pb.hi[j], rho, v[j])),
            )
        } else {
            clamp_vec(&v, &pb.lo, &pb.hi)
        };
        let u_new = clamp_vec(&(&ct_phi - &w / rho), &pb.th_lo, &pb.th_hi);
        let r_bal = &p_new + &lphi - &pb.p_m;
        let r_ang = &u_new - &ct_phi;
        y += &r_bal * rho;
        w += &r_ang * rho;
        let dual = rho * inf_norm(&(&p_new - &p)).max(inf_norm(&(&u_new - &u)));
        p = p_new;
        u = u_new;
        residual = inf_norm(&r_bal).max(inf_norm(&r_ang)).max(dual);
        if !all_finite(&[&p, &u, &y, &w]) {
            break;
        }
        if residual < opts.residual_tol {
            return Ok(RawSolution {
                p,
                phi,
                mu: y,
                eta: -w,
                iterations: it,
                residual,
            });
        }
    }
    Err(Error::NotConverged(format!(
        "ADMM stopped before {} iterations with residual {residual:.3e}",
        opts.max_iter
    )))
}

/// Largest singular value of `K = [[I, L], [0, Cᵀ]]` by power iteration.
fn operator_norm(pb: &Problem) -> f64 {
    let (n, m) = (pb.n, pb.m);
    let mut k = DMatrix::zeros(n + m, 2 * n);
    k.view_mut((0, 0), (n, n)).fill_with_identity();
    k.view_mut((0, n), (n, n)).copy_from(&pb.lap);
    k.view_mut((n, n), (m, n)).copy_from(&pb.inc.transpose());
    let ktk = k.transpose() * &k;
    // start off every invariant subspace (the all-ones vector is an eigenvector)
    let mut v = DVector::from_fn(2 * n, |i, _| 1.0 + ((i * 7919) % 13) as f64 / 13.0);
    let mut lambda = 0.0;
    for _ in 0..500 {
        let next = &ktk * &v;
        let norm = next.norm();
        if norm == 0.0 {
            break;
        }
        lambda = norm / v.norm();
        v = next / norm;
    }
    lambda.sqrt()
}

fn hybrid_gradient(pb: &Problem, opts: &OracleOptions) -> Result<RawSolution> {
    let (n, m) = (pb.n, pb.m);
    let lt = pb.inc.transpose();
    let norm = operator_norm(pb).max(1e-12);
    let tau = 0.9 / norm;
    let sigma = 0.9 / norm;
    let mut p = DVector::zeros(n);
    let mut phi = DVector::zeros(n);
    let mut y = DVector::zeros(n);
    let mut w = DVector::zeros(m);
    let mut residual = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let v = &p - &y * tau;
        let p_new = DVector::from_iterator(
            n,
            (0..n).map(|j| prox_cost(&pb.costs[j], pb.lo[j], pb.hi[j], 1.0 / tau, v[j])),
        );
        let phi_new = &phi - (&pb.lap * &y + &pb.inc * &w) * tau;
        let p_bar = &p_new * 2.0 - &p;
        let phi_bar = &phi_new * 2.0 - &phi;
        let y_new = &y + (&p_bar + &pb.lap * &phi_bar - &pb.p_m) * sigma;
        let w_tmp = &w + (&lt * &phi_bar) * sigma;
        let w_new = &w_tmp - clamp_vec(&(&w_tmp / sigma), &pb.th_lo, &pb.th_hi) * sigma;
        let step = (inf_norm(&(&p_new - &p)).max(inf_norm(&(&phi_new - &phi))) / tau)
            .max(inf_norm(&(&y_new - &y)).max(inf_norm(&(&w_new - &w))) / sigma);
        p = p_new;
        phi = phi_new;
        y = y_new;
        w = w_new;
        if it % 16 == 0 || step < opts.residual_tol {
            let bal = inf_norm(&(&p + &pb.lap * &phi - &pb.p_m));
            let ct = &lt * &phi;
            let ang = (0..m)
                .map(|e| (pb.th_lo[e] - ct[e]).max(ct[e] - pb.th_hi[e]).max(0.0))
                .fold(0.0, f64::max);
            residual = step.max(bal).max(ang);
            if !all_finite(&[&p, &phi, &y, &w]) {
                break;
            }
            if residual < opts.residual_tol {
                return Ok(RawSolution {
                    p,
                    phi,
                    mu: y,
                    eta: w,
                    iterations: it,
                    residual,
                });
            }
        }
    }
    Err(Error::NotConverged(format!(
        "hybrid gradient stopped before {} iterations with residual {residual:.3e}",
        opts.max_iter
    )))
}

/// Linear feasibility of the constraint set (objective dropped).
fn phase_one(pb: &Problem) -> Result<()> {
    let total: f64 = pb.p_m.iter().sum();
    let (lo, hi): (f64, f64) = (pb.lo.iter().sum(), pb.hi.iter().sum());
    let slack = 1e-9 * (1.0 + total.abs());
    if total < lo - slack || total > hi + slack {
        return Err(Error::Infeasible(format!(
            "total injection {total} outside aggregate load capacity [{lo}, {hi}]"
        )));
    }
    let opts = OracleOptions {
        residual_tol: 1e-9,
        max_iter: 20_000,
        ..OracleOptions::default()
    };
    match admm(pb, false, 1.0, &opts) {
        Ok(_) => Ok(()),
        Err(_) => Err(Error::Infeasible(
            "no angle profile satisfies the balance, capacity and line limits".into(),
        )),
    }
}

/// Solves the load-control problem for injection `p_m`.
pub fn solve_olc(
    model: &NetworkModel,
    p_m: &[f64],
    opts: &OracleOptions,
) -> Result<OptimalSolution> {
    check_len("p_m", p_m, model.n())?;
    let pb = Problem::new(model, p_m);
    phase_one(&pb)?;
    let a = admm(&pb, true, 1.0, opts)?;
    let b = hybrid_gradient(&pb, opts)?;
    let (obj_a, obj_b) = (pb.objective(&a.p), pb.objective(&b.p));
    if (obj_a - obj_b).abs() > 2.0 * opts.tol {
        return Err(Error::NotConverged(format!(
            "oracle routes disagree: ADMM objective {obj_a} vs hybrid-gradient objective {obj_b}"
        )));
    }
    let _ = (a.iterations, a.residual, b.iterations, b.residual);
    let phi0 = a.phi[0];
    Ok(OptimalSolution {
        p_l_star: a.p.iter().copied().collect(),
        phi_star: a.phi.iter().map(|x| x - phi0).collect(),
        mu_star: a.mu.iter().copied().collect(),
        eta_plus_star: a.eta.iter().map(|&e| e.max(0.0)).collect(),
        eta_minus_star: a.eta.iter().map(|&e| (-e).max(0.0)).collect(),
        objective: obj_a,
    })
}
