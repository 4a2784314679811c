//! Quadratic Wasserstein distance in 2D through the Monge-Ampère equation.
//!
//! Densities live on the `(n+1) x (n+1)` nodes `x = (i h, j h)` of the unit
//! square, `h = 1/n`, with node `(i, j)` stored at `i (n+1) + j`. The optimal
//! map is `grad u` for the convex potential solving
//! `det D^2 u = f / g(grad u)` with `grad u . n = x . n` on the boundary.

mod j2;
mod scheme;
mod solver;

pub use j2::{misfit_j2, resample_to_square, J2Config};
pub use scheme::filter_s;
pub use solver::{ma_solve, w2_frechet_2d, w2_squared_2d};

use crate::error::{Error, Result};

/// Solver controls; `None` fields take the defaults derived from the densities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaConfig {
    /// Max-norm residual tolerance.
    pub tol: f64,
    pub max_iters: usize,
    /// Maximum number of step halvings per Newton iteration.
    pub max_halvings: usize,
    pub delta: Option<f64>,
    pub epsilon: Option<f64>,
    /// Densities are clamped below at `floor * max` before solving.
    pub density_floor: f64,
}

impl Default for MaConfig {
    fn default() -> Self {
        MaConfig {
            tol: 1e-8,
            max_iters: 100,
            max_halvings: 20,
            delta: None,
            epsilon: None,
            density_floor: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaProblem {
    /// Intervals per side.
    pub n: usize,
    /// Source density per node (floored, unit trapezoid mass).
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub delta: f64,
    pub epsilon: f64,
    /// Estimate of the Lipschitz constant of `f(x)/g(y)` in `y`.
    pub g_lipschitz: f64,
    /// Node where the potential enters the scheme as `u0`.
    pub fixed_point: usize,
    pub config: MaConfig,
}

/// Trapezoid weight of node `i` in `0..=n` on a unit interval.
#[inline]
pub(crate) fn trap_weight(i: usize, n: usize) -> f64 {
    let h = 1.0 / n as f64;
    if i == 0 || i == n {
        0.5 * h
    } else {
        h
    }
}

/// Trapezoid weights of every node of the unit-square grid.
pub fn node_weights(n: usize) -> Vec<f64> {
    (0..=n)
        .flat_map(|i| (0..=n).map(move |j| trap_weight(i, n) * trap_weight(j, n)))
        .collect()
}

fn floor_and_normalize(v: &[f64], floor: f64, w: &[f64], name: &str) -> Result<Vec<f64>> {
    if let Some(bad) = v.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
        return Err(Error::Domain(format!(
            "density {name} has a negative or non-finite value {bad}"
        )));
    }
    let peak = v.iter().copied().fold(0.0, f64::max);
    if peak <= 0.0 {
        return Err(Error::Degenerate(format!(
            "density {name} is identically zero"
        )));
    }
    let lo = floor * peak;
    let clamped: Vec<f64> = v.iter().map(|&x| x.max(lo)).collect();
    let mass: f64 = clamped.iter().zip(w).map(|(a, b)| a * b).sum();
    Ok(clamped.iter().map(|x| x / mass).collect())
}

impl MaProblem {
    pub fn new(n: usize, f: &[f64], g: &[f64], config: MaConfig) -> Result<Self> {
        if n < 2 {
            return Err(Error::config("Monge-Ampere grid needs at least 3x3 nodes"));
        }
        let nn = (n + 1) * (n + 1);
        if f.len() != nn || g.len() != nn {
            return Err(Error::GridMismatch(format!(
                "densities have {} and {} values for a {}x{} grid",
                f.len(),
                g.len(),
                n + 1,
                n + 1
            )));
        }
        if !(config.tol > 0.0) || config.max_iters == 0 {
            return Err(Error::config(
                "Monge-Ampere tolerance and iteration cap must be positive",
            ));
        }
        let w = node_weights(n);
        let f = floor_and_normalize(f, config.density_floor, &w, "f")?;
        let g = floor_and_normalize(g, config.density_floor, &w, "g")?;
        let h = 1.0 / n as f64;
        let k = lipschitz_estimate(n, &f, &g);
        let delta = config
            .delta
            .unwrap_or_else(|| (0.5 * k * h).max(1e-6).min(h));
        let epsilon = config.epsilon.unwrap_or_else(|| h.sqrt());
        if !(delta > 0.0 && epsilon > 0.0) {
            return Err(Error::config("delta and epsilon must be positive"));
        }
        let c = n / 2;
        Ok(MaProblem {
            n,
            f,
            g,
            delta,
            epsilon,
            g_lipschitz: k,
            fixed_point: c * (n + 1) + c,
            config,
        })
    }

    /// Builds a problem from closures on the unit square.
    pub fn from_fn(
        n: usize,
        f: impl Fn(f64, f64) -> f64,
        g: impl Fn(f64, f64) -> f64,
        config: MaConfig,
    ) -> Result<Self> {
        let h = 1.0 / n as f64;
        let sample = |d: &dyn Fn(f64, f64) -> f64| -> Vec<f64> {
            (0..=n)
                .flat_map(|i| (0..=n).map(move |j| (i, j)))
                .map(|(i, j)| d(i as f64 * h, j as f64 * h))
                .collect()
        };
        Self::new(n, &sample(&f), &sample(&g), config)
    }

    #[inline]
    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    #[inline]
    pub fn n_nodes(&self) -> usize {
        (self.n + 1) * (self.n + 1)
    }

    #[inline]
    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i == self.n || j == self.n
    }

    /// Node coordinates.
    #[inline]
    pub fn x(&self, k: usize) -> (f64, f64) {
        let np = self.n + 1;
        let h = self.h();
        ((k / np) as f64 * h, (k % np) as f64 * h)
    }

    /// `|x|^2 / 2` shifted to vanish at the fixed point: the identity-map potential.
    pub fn identity_potential(&self) -> Vec<f64> {
        let xc = self.x(self.fixed_point);
        let c = 0.5 * (xc.0 * xc.0 + xc.1 * xc.1);
        (0..self.n_nodes())
            .map(|k| {
                let x = self.x(k);
                0.5 * (x.0 * x.0 + x.1 * x.1) - c
            })
            .collect()
    }

    fn check_u(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.n_nodes() {
            return Err(Error::GridMismatch(format!(
                "potential has {} values, grid has {}",
                u.len(),
                self.n_nodes()
            )));
        }
        Ok(())
    }

    fn residuals(&self, u: &[f64], pick: impl Fn(&scheme::NodeEval) -> f64) -> Result<Vec<f64>> {
        self.check_u(u)?;
        let np = self.n + 1;
        let u0 = u[self.fixed_point];
        let mut out = vec![0.0; self.n_nodes()];
        for i in 0..np {
            for j in 0..np {
                out[i * np + j] = if self.is_boundary(i, j) {
                    scheme::eval_boundary(self, u, i, j).0
                } else {
                    pick(&scheme::eval_interior(self, u, i, j, u0))
                };
            }
        }
        Ok(out)
    }

    /// Monotone residual `M_M = -min(MA_1, MA_2)` at interior nodes, Neumann residual on the boundary.
    pub fn monotone_residual(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.residuals(u, |e| e.mm)
    }

    /// Centred residual `M_N` at interior nodes, Neumann residual on the boundary.
    pub fn standard_residual(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.residuals(u, |e| e.mn)
    }

    /// Filtered residual `M_F` at interior nodes, Neumann residual on the boundary.
    pub fn filtered_residual(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.residuals(u, |e| e.mf)
    }

    /// `(MA_1, MA_2)` at interior nodes (zero on the boundary).
    pub fn frame_values(&self, u: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let a = self.residuals(u, |e| e.ma1)?;
        let b = self.residuals(u, |e| e.ma2)?;
        let np = self.n + 1;
        let strip = |mut v: Vec<f64>| {
            for k in 0..v.len() {
                if self.is_boundary(k / np, k % np) {
                    v[k] = 0.0;
                }
            }
            v
        };
        Ok((strip(a), strip(b)))
    }

    /// Discrete map `(D1 u, D2 u)` at every node.
    pub fn map_of(&self, u: &[f64]) -> Vec<(f64, f64)> {
        let np = self.n + 1;
        (0..self.n_nodes())
            .map(|k| scheme::gradient_at(self.n, self.h(), u, k / np, k % np))
            .collect()
    }
}

pub fn ma_monotone_residual(u: &[f64], prob: &MaProblem) -> Result<Vec<f64>> {
    prob.monotone_residual(u)
}

pub fn ma_standard_residual(u: &[f64], prob: &MaProblem) -> Result<Vec<f64>> {
    prob.standard_residual(u)
}

pub fn ma_filtered_residual(u: &[f64], prob: &MaProblem) -> Result<Vec<f64>> {
    prob.filtered_residual(u)
}

/// `K ~ max f * Lip(1/g)` from nodal differences.
fn lipschitz_estimate(n: usize, f: &[f64], g: &[f64]) -> f64 {
    let np = n + 1;
    let h = 1.0 / n as f64;
    let fmax = f.iter().copied().fold(0.0, f64::max);
    let mut lip: f64 = 0.0;
    for i in 0..np {
        for j in 0..np {
            let k = i * np + j;
            if i + 1 < np {
                lip = lip.max((1.0 / g[k + np] - 1.0 / g[k]).abs() / h);
            }
            if j + 1 < np {
                lip = lip.max((1.0 / g[k + 1] - 1.0 / g[k]).abs() / h);
            }
        }
    }
    fmax * lip
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaSolution {
    pub n: usize,
    pub u: Vec<f64>,
    /// `grad u` per node.
    pub map: Vec<(f64, f64)>,
    /// Final filtered residual per node.
    pub residual: Vec<f64>,
    pub residual_norm: f64,
    pub newton_iters: usize,
    /// Share of interior nodes where the filter moved towards the monotone scheme.
    pub filter_fraction: f64,
    /// Max-norm residual before each Newton step and at the end.
    pub history: Vec<f64>,
}
