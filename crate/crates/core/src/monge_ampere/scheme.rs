//! Filtered finite-difference discretization of
//! `det D^2 u = f / g(grad u)` with `grad u . n = x . n` on the boundary.
//!
//! Interior rows hold `M_F[u] = M_M + eps S((M_N - M_M) / eps)` where
//!
//! * `M_M = -min(MA_1, MA_2)`, the monotone scheme on the grid-aligned and
//!   diagonal 5-point frames,
//! * `M_N = -(D11 D22 - D12^2) + f/g(D1 u, D2 u) + u0`, centred differences,
//!
//! and `u0` is the value of `u` at the pinned node. Boundary rows hold the
//! one-sided second order Neumann condition.

use super::MaProblem;

/// Stencil slots: centre, i+1, i-1, j+1, j-1, (i+1,j+1), (i-1,j-1), (i+1,j-1), (i-1,j+1).
pub(crate) type Coeffs = [f64; 9];

const C: usize = 0;
const E: usize = 1;
const W: usize = 2;
const N: usize = 3;
const S: usize = 4;
const PP: usize = 5;
const MM: usize = 6;
const PM: usize = 7;
const MP: usize = 8;

/// Filter blending the monotone and the centred scheme.
#[inline]
pub fn filter_s(x: f64) -> f64 {
    let ax = x.abs();
    if ax <= 1.0 {
        x
    } else if ax >= 2.0 {
        0.0
    } else if x > 0.0 {
        2.0 - x
    } else {
        -2.0 - x
    }
}

#[inline]
fn filter_ds(x: f64) -> f64 {
    let ax = x.abs();
    if ax <= 1.0 {
        1.0
    } else if ax >= 2.0 {
        0.0
    } else {
        -1.0
    }
}

/// Per-node scheme values and derivatives.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct NodeEval {
    pub ma1: f64,
    pub ma2: f64,
    pub mm: f64,
    pub mn: f64,
    pub mf: f64,
    /// dM_F / du over the stencil slots.
    pub jac: Coeffs,
    /// dM_F / du0.
    pub d_u0: f64,
    /// dM_F / df at this node.
    pub d_f: f64,
    /// |M_N - M_M| / eps > 1, i.e. the filter moved towards the monotone value.
    pub deferred: bool,
}

/// Bilinear interpolant of a nodal density on the unit square, clamped to the box.
pub(crate) struct Interp<'a> {
    pub n: usize,
    pub h: f64,
    pub v: &'a [f64],
}

impl Interp<'_> {
    /// Value and gradient at `y`; a clamped component has zero derivative.
    pub fn eval(&self, y: (f64, f64)) -> (f64, f64, f64) {
        let n = self.n;
        let np = n + 1;
        let (a, ina) = clamp01(y.0);
        let (b, inb) = clamp01(y.1);
        let ia = ((a / self.h).floor() as usize).min(n - 1);
        let ib = ((b / self.h).floor() as usize).min(n - 1);
        let t = a / self.h - ia as f64;
        let s = b / self.h - ib as f64;
        let g00 = self.v[ia * np + ib];
        let g10 = self.v[(ia + 1) * np + ib];
        let g01 = self.v[ia * np + ib + 1];
        let g11 = self.v[(ia + 1) * np + ib + 1];
        let val =
            (1.0 - t) * (1.0 - s) * g00 + t * (1.0 - s) * g10 + (1.0 - t) * s * g01 + t * s * g11;
        let da = if ina {
            ((1.0 - s) * (g10 - g00) + s * (g11 - g01)) / self.h
        } else {
            0.0
        };
        let db = if inb {
            ((1.0 - t) * (g01 - g00) + t * (g11 - g10)) / self.h
        } else {
            0.0
        };
        (val, da, db)
    }
}

#[inline]
fn clamp01(x: f64) -> (f64, bool) {
    if x < 0.0 {
        (0.0, false)
    } else if x > 1.0 {
        (1.0, false)
    } else {
        (x, true)
    }
}

#[inline]
fn axpy(out: &mut Coeffs, a: f64, x: &Coeffs) {
    for k in 0..9 {
        out[k] += a * x[k];
    }
}

/// Neighbour node indices in slot order for interior node (i, j).
#[inline]
pub(crate) fn stencil_nodes(np: usize, i: usize, j: usize) -> [usize; 9] {
    let k = i * np + j;
    [
        k,
        k + np,
        k - np,
        k + 1,
        k - 1,
        k + np + 1,
        k - np - 1,
        k + np - 1,
        k - np + 1,
    ]
}

/// `(f / g, d/dy1, d/dy2)` at map point `y`.
#[inline]
fn ratio(fk: f64, g: &Interp, y: (f64, f64)) -> (f64, f64, f64) {
    let (gv, ga, gb) = g.eval(y);
    let r = fk / gv;
    (r, -r / gv * ga, -r / gv * gb)
}

/// Monotone frame term `max(a,d) max(b,d) + min(a,d) + min(b,d)` with its
/// partial derivatives.
#[inline]
fn frame(a: f64, b: f64, delta: f64) -> (f64, f64, f64) {
    let mx = |v: f64| v.max(delta);
    let val = mx(a) * mx(b) + a.min(delta) + b.min(delta);
    let pa = if a > delta { mx(b) } else { 1.0 };
    let pb = if b > delta { mx(a) } else { 1.0 };
    (val, pa, pb)
}

pub(crate) fn eval_interior(p: &MaProblem, u: &[f64], i: usize, j: usize, u0: f64) -> NodeEval {
    let np = p.n + 1;
    let h = p.h();
    let h2 = h * h;
    let nb = stencil_nodes(np, i, j);
    let v = |s: usize| u[nb[s]];
    let g = Interp { n: p.n, h, v: &p.g };
    let fk = p.f[nb[C]];

    let mut da1 = [0.0; 9];
    da1[C] = -2.0 / h2;
    da1[E] = 1.0 / h2;
    da1[W] = 1.0 / h2;
    let mut db1 = [0.0; 9];
    db1[C] = -2.0 / h2;
    db1[N] = 1.0 / h2;
    db1[S] = 1.0 / h2;
    let mut dy11 = [0.0; 9];
    dy11[E] = 0.5 / h;
    dy11[W] = -0.5 / h;
    let mut dy12 = [0.0; 9];
    dy12[N] = 0.5 / h;
    dy12[S] = -0.5 / h;

    let mut da2 = [0.0; 9];
    da2[C] = -1.0 / h2;
    da2[PP] = 0.5 / h2;
    da2[MM] = 0.5 / h2;
    let mut db2 = [0.0; 9];
    db2[C] = -1.0 / h2;
    db2[PM] = 0.5 / h2;
    db2[MP] = 0.5 / h2;
    let q = 0.25 / h;
    let mut dy21 = [0.0; 9];
    dy21[PP] = q;
    dy21[MM] = -q;
    dy21[PM] = q;
    dy21[MP] = -q;
    let mut dy22 = [0.0; 9];
    dy22[PP] = q;
    dy22[MM] = -q;
    dy22[PM] = -q;
    dy22[MP] = q;
    let mut dcr = [0.0; 9];
    dcr[PP] = 0.25 / h2;
    dcr[MM] = 0.25 / h2;
    dcr[PM] = -0.25 / h2;
    dcr[MP] = -0.25 / h2;

    let dot = |c: &Coeffs| (0..9).map(|s| c[s] * v(s)).sum::<f64>();
    let (a1, b1) = (dot(&da1), dot(&db1));
    let y1 = (dot(&dy11), dot(&dy12));
    let (a2, b2) = (dot(&da2), dot(&db2));
    let y2 = (dot(&dy21), dot(&dy22));
    let cr = dot(&dcr);

    let (r1, r1a, r1b) = ratio(fk, &g, y1);
    let (r2, r2a, r2b) = ratio(fk, &g, y2);
    let delta = p.delta;
    let (fr1, pa1, pb1) = frame(a1, b1, delta);
    let (fr2, pa2, pb2) = frame(a2, b2, delta);
    let ma1 = fr1 - r1 - u0;
    let ma2 = fr2 - r2 - u0;

    // dMA_k / du (u0 handled separately)
    let mut dma1 = [0.0; 9];
    axpy(&mut dma1, pa1, &da1);
    axpy(&mut dma1, pb1, &db1);
    axpy(&mut dma1, -r1a, &dy11);
    axpy(&mut dma1, -r1b, &dy12);
    let mut dma2 = [0.0; 9];
    axpy(&mut dma2, pa2, &da2);
    axpy(&mut dma2, pb2, &db2);
    axpy(&mut dma2, -r2a, &dy21);
    axpy(&mut dma2, -r2b, &dy22);

    let first = ma1 <= ma2;
    let (mm, dmm_src, inv_g_sel) = if first {
        (-ma1, dma1, r1 / fk)
    } else {
        (-ma2, dma2, r2 / fk)
    };
    let mut dmm = [0.0; 9];
    axpy(&mut dmm, -1.0, &dmm_src);

    let mn = -(a1 * b1 - cr * cr) + r1 + u0;
    let mut dmn = [0.0; 9];
    axpy(&mut dmn, -b1, &da1);
    axpy(&mut dmn, -a1, &db1);
    axpy(&mut dmn, 2.0 * cr, &dcr);
    axpy(&mut dmn, r1a, &dy11);
    axpy(&mut dmn, r1b, &dy12);

    let eps = p.epsilon;
    let x = (mn - mm) / eps;
    let sp = filter_ds(x);
    let mf = mm + eps * filter_s(x);
    let mut jac = dmm;
    for s in 0..9 {
        jac[s] += sp * (dmn[s] - dmm[s]);
    }
    let inv_g1 = r1 / fk;
    NodeEval {
        ma1,
        ma2,
        mm,
        mn,
        mf,
        jac,
        d_u0: 1.0,
        d_f: (1.0 - sp) * inv_g_sel + sp * inv_g1,
        deferred: x.abs() > 1.0,
    }
}

/// Second order one-sided / centred first differences along one axis:
/// returns `[(offset index, coefficient); 3]` for the derivative at position
/// `i` of `0..=n` with node stride `stride`.
#[inline]
pub(crate) fn diff_stencil(
    i: usize,
    n: usize,
    k: usize,
    stride: usize,
    h: f64,
) -> [(usize, f64); 3] {
    let c = 0.5 / h;
    if i == 0 {
        [(k, -3.0 * c), (k + stride, 4.0 * c), (k + 2 * stride, -c)]
    } else if i == n {
        [(k, 3.0 * c), (k - stride, -4.0 * c), (k - 2 * stride, c)]
    } else {
        [(k + stride, c), (k - stride, -c), (k, 0.0)]
    }
}

/// First differences `(D1 u, D2 u)` at node (i, j).
pub(crate) fn gradient_at(n: usize, h: f64, u: &[f64], i: usize, j: usize) -> (f64, f64) {
    let np = n + 1;
    let k = i * np + j;
    let d1 = diff_stencil(i, n, k, np, h)
        .iter()
        .map(|&(m, c)| c * u[m])
        .sum();
    let d2 = diff_stencil(j, n, k, 1, h)
        .iter()
        .map(|&(m, c)| c * u[m])
        .sum();
    (d1, d2)
}

/// Boundary row for node (i, j): the residual and its sparse derivative.
pub(crate) fn eval_boundary(
    p: &MaProblem,
    u: &[f64],
    i: usize,
    j: usize,
) -> (f64, Vec<(usize, f64)>) {
    let n = p.n;
    let np = n + 1;
    let h = p.h();
    let k = i * np + j;
    let (x1, x2) = (i as f64 * h, j as f64 * h);
    let side = |t: usize| {
        if t == 0 {
            -1.0
        } else if t == n {
            1.0
        } else {
            0.0
        }
    };
    let (s1, s2) = (side(i), side(j));
    let mut res = 0.0;
    let mut cols = Vec::with_capacity(6);
    if s1 != 0.0 {
        for (m, c) in diff_stencil(i, n, k, np, h) {
            res += s1 * c * u[m];
            cols.push((m, s1 * c));
        }
        res -= s1 * x1;
    }
    if s2 != 0.0 {
        for (m, c) in diff_stencil(j, n, k, 1, h) {
            res += s2 * c * u[m];
            cols.push((m, s2 * c));
        }
        res -= s2 * x2;
    }
    (res, cols)
}
