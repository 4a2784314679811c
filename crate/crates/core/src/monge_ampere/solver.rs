use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use super::scheme::{self, stencil_nodes};
use super::{node_weights, MaProblem, MaSolution};
use crate::error::{Error, Result};

/// Residual, Jacobian triplets, `dM/df` per node and the deferred-node count.
struct Assembly {
    residual: Vec<f64>,
    triplets: Vec<Triplet<usize, usize, f64>>,
    d_f: Vec<f64>,
    deferred: usize,
}

fn assemble(p: &MaProblem, u: &[f64], with_jacobian: bool) -> Assembly {
    let n = p.n;
    let np = n + 1;
    let nn = p.n_nodes();
    let u0 = u[p.fixed_point];
    let mut residual = vec![0.0; nn];
    let mut d_f = vec![0.0; nn];
    let mut triplets = Vec::with_capacity(if with_jacobian { 11 * nn } else { 0 });
    let mut deferred = 0;
    for i in 0..np {
        for j in 0..np {
            let k = i * np + j;
            if p.is_boundary(i, j) {
                let (r, cols) = scheme::eval_boundary(p, u, i, j);
                residual[k] = r;
                if with_jacobian {
                    triplets.extend(cols.into_iter().map(|(c, v)| Triplet::new(k, c, v)));
                }
            } else {
                let e = scheme::eval_interior(p, u, i, j, u0);
                residual[k] = e.mf;
                d_f[k] = e.d_f;
                deferred += usize::from(e.deferred);
                if with_jacobian {
                    for (s, &c) in stencil_nodes(np, i, j).iter().enumerate() {
                        triplets.push(Triplet::new(k, c, e.jac[s]));
                    }
                    triplets.push(Triplet::new(k, p.fixed_point, e.d_u0));
                }
            }
        }
    }
    Assembly {
        residual,
        triplets,
        d_f,
        deferred,
    }
}

/// Sums duplicate entries and drops exact zeros.
fn merge(mut t: Vec<Triplet<usize, usize, f64>>) -> Vec<Triplet<usize, usize, f64>> {
    t.sort_unstable_by_key(|e| (e.col, e.row));
    let mut out: Vec<Triplet<usize, usize, f64>> = Vec::with_capacity(t.len());
    for e in t {
        match out.last_mut() {
            Some(l) if l.row == e.row && l.col == e.col => l.val += e.val,
            _ => out.push(e),
        }
    }
    out.retain(|e| e.val != 0.0);
    out
}

fn sparse(nn: usize, t: Vec<Triplet<usize, usize, f64>>) -> Result<SparseColMat<usize, f64>> {
    SparseColMat::try_new_from_triplets(nn, nn, &merge(t))
        .map_err(|e| Error::Singular(format!("cannot assemble the scheme Jacobian: {e:?}")))
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

fn solve(mat: &SparseColMat<usize, f64>, rhs: &[f64], transpose: bool) -> Result<Vec<f64>> {
    let lu = mat
        .sp_lu()
        .map_err(|e| Error::Singular(format!("sparse LU failed: {e:?}")))?;
    let mut b = Mat::from_fn(rhs.len(), 1, |i, _| rhs[i]);
    if transpose {
        lu.solve_transpose_in_place(&mut b);
    } else {
        lu.solve_in_place(&mut b);
    }
    let x: Vec<f64> = (0..rhs.len()).map(|i| b[(i, 0)]).collect();
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular(
            "scheme Jacobian is numerically singular".into(),
        ));
    }
    Ok(x)
}

/// Exact Jacobian of the filtered scheme (row = equation, column = node).
#[cfg(test)]
pub(crate) fn jacobian(p: &MaProblem, u: &[f64]) -> Result<SparseColMat<usize, f64>> {
    sparse(p.n_nodes(), assemble(p, u, true).triplets)
}

/// Damped Newton iteration on the filtered scheme from the identity-map potential.
///
/// When Newton stalls from the identity (densities with a large dynamic
/// range), the solve is retried by continuation on the monotone scheme: both
/// densities are blended with the uniform one, `eta + (1 - eta) f`, and `eta`
/// is driven geometrically below the smallest density before a last filtered
/// solve from that potential. `newton_iters` then counts every stage.
pub fn ma_solve(prob: &MaProblem) -> Result<MaSolution> {
    match solve_from(prob, prob.identity_potential()) {
        Err(Error::NonConvergence { iters, history }) => {
            log::debug!("Monge-Ampere Newton stalled after {iters} iterations; continuing from uniform densities");
            continuation(prob, iters, history)
        }
        other => other,
    }
}

/// Monotone-only stand-in for the filter width.
const MONOTONE_EPSILON: f64 = 1e-14;

fn continuation(p: &MaProblem, spent: usize, mut history: Vec<f64>) -> Result<MaSolution> {
    let stage_cfg = super::MaConfig {
        max_iters: 30,
        ..p.config
    };
    let floor =
        p.f.iter()
            .chain(&p.g)
            .copied()
            .fold(f64::INFINITY, f64::min);
    let blend = |eta: f64| MaProblem {
        f: p.f.iter().map(|v| eta + (1.0 - eta) * v).collect(),
        g: p.g.iter().map(|v| eta + (1.0 - eta) * v).collect(),
        epsilon: MONOTONE_EPSILON,
        config: stage_cfg,
        ..p.clone()
    };
    let mut total = spent;
    let mut u = p.identity_potential();
    let mut eta = 1.0;
    let mut ratio: f64 = 0.25;
    loop {
        let next = if eta * ratio < 1e-3 * floor {
            0.0
        } else {
            eta * ratio
        };
        match solve_from(&blend(next), u.clone()) {
            Ok(mut sol) => {
                total += sol.newton_iters;
                history.append(&mut sol.history);
                u = sol.u;
                eta = next;
                if eta == 0.0 {
                    break;
                }
                ratio = (ratio * ratio).max(1e-2);
            }
            Err(Error::NonConvergence {
                iters,
                history: mut h,
            }) => {
                total += iters;
                history.append(&mut h);
                ratio = ratio.sqrt();
                if ratio > 0.95 {
                    return Err(Error::NonConvergence {
                        iters: total,
                        history,
                    });
                }
            }
            Err(e) => return Err(e),
        }
    }
    match solve_from(p, u) {
        Ok(mut sol) => {
            history.append(&mut sol.history);
            sol.newton_iters += total;
            sol.history = history;
            Ok(sol)
        }
        Err(Error::NonConvergence {
            iters,
            history: mut h,
        }) => {
            history.append(&mut h);
            Err(Error::NonConvergence {
                iters: total + iters,
                history,
            })
        }
        Err(e) => Err(e),
    }
}

pub(crate) fn solve_from(p: &MaProblem, mut u: Vec<f64>) -> Result<MaSolution> {
    p.check_u(&u)?;
    let cfg = p.config;
    let mut a = assemble(p, &u, true);
    let mut norm = max_norm(&a.residual);
    let mut history = vec![norm];
    let mut iters = 0;
    while norm >= cfg.tol {
        if iters == cfg.max_iters {
            return Err(Error::NonConvergence { iters, history });
        }
        let mat = sparse(p.n_nodes(), std::mem::take(&mut a.triplets))?;
        let step = solve(&mat, &a.residual, false)?;
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=cfg.max_halvings {
            let trial: Vec<f64> = u.iter().zip(&step).map(|(x, d)| x - alpha * d).collect();
            let r = assemble(p, &trial, false);
            let tn = max_norm(&r.residual);
            if tn.is_finite() && tn < (1.0 - 1e-4 * alpha) * norm {
                accepted = Some((trial, tn));
                break;
            }
            alpha *= 0.5;
        }
        iters += 1;
        let Some((trial, tn)) = accepted else {
            history.push(norm);
            return Err(Error::NonConvergence { iters, history });
        };
        log::debug!("Monge-Ampere Newton {iters}: residual {tn:.3e}, step {alpha}");
        u = trial;
        norm = tn;
        history.push(norm);
        a = assemble(p, &u, true);
    }
    let interior = (p.n - 1) * (p.n - 1);
    Ok(MaSolution {
        n: p.n,
        map: p.map_of(&u),
        residual: a.residual,
        residual_norm: norm,
        newton_iters: iters,
        filter_fraction: a.deferred as f64 / interior as f64,
        history,
        u,
    })
}

/// `sum_k w_k f_k |x_k - grad u_k|^2` with trapezoid node weights.
pub fn w2_squared_2d(sol: &MaSolution, prob: &MaProblem) -> f64 {
    let w = node_weights(prob.n);
    (0..prob.n_nodes())
        .map(|k| {
            let x = prob.x(k);
            let m = sol.map[k];
            let d = (x.0 - m.0, x.1 - m.1);
            w[k] * prob.f[k] * (d.0 * d.0 + d.1 * d.1)
        })
        .sum()
}

/// Gradient of [`w2_squared_2d`] with respect to the nodal values of `f`,
/// differentiating through the discrete Monge-Ampère solution:
/// `w |x - Du|^2 - (dM/df) . (J^-T q)` with `q = dW/du = -2 D^T diag(w f) (x - Du)`.
pub fn w2_frechet_2d(sol: &MaSolution, prob: &MaProblem) -> Result<Vec<f64>> {
    prob.check_u(&sol.u)?;
    let n = prob.n;
    let np = n + 1;
    let h = prob.h();
    let nn = prob.n_nodes();
    let w = node_weights(n);
    let mut q = vec![0.0; nn];
    let mut grad = vec![0.0; nn];
    for k in 0..nn {
        let (i, j) = (k / np, k % np);
        let x = prob.x(k);
        let m = sol.map[k];
        let d = (x.0 - m.0, x.1 - m.1);
        grad[k] = w[k] * (d.0 * d.0 + d.1 * d.1);
        let s = -2.0 * w[k] * prob.f[k];
        for (c, v) in scheme::diff_stencil(i, n, k, np, h) {
            q[c] += s * d.0 * v;
        }
        for (c, v) in scheme::diff_stencil(j, n, k, 1, h) {
            q[c] += s * d.1 * v;
        }
    }
    let a = assemble(prob, &sol.u, true);
    let mat = sparse(nn, a.triplets)?;
    let lambda = solve(&mat, &q, true)?;
    for k in 0..nn {
        grad[k] -= a.d_f[k] * lambda[k];
    }
    Ok(grad)
}
