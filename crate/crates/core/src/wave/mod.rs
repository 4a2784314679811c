//! 2D acoustic wave simulation: model and acquisition types, source wavelets,
//! and the leapfrog propagator with its exact discrete adjoint.

mod propagator;
mod signal;

pub use propagator::{
    adjoint_solve, forward, imaging_condition, max_stable_dt, model_sensitivity, source_adjoint,
    Boundaries, BoundaryKind, Propagator, SimConfig,
};
pub use signal::{bandpass, ricker};

use crate::error::{Error, Result};
use crate::real::Real;

/// Regular 2D grid of nodes; depth (z) is the slow index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2D<T = f64> {
    pub nz: usize,
    pub nx: usize,
    /// Spacing in meters.
    pub dz: T,
    pub dx: T,
    /// (z0, x0) in meters.
    pub origin: (T, T),
}

impl<T: Real> Grid2D<T> {
    pub fn new(nz: usize, nx: usize, dz: T, dx: T) -> Result<Self> {
        let g = Grid2D {
            nz,
            nx,
            dz,
            dx,
            origin: (T::zero(), T::zero()),
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nz < 3 || self.nx < 3 {
            return Err(Error::config(format!(
                "grid must be at least 3x3, got {}x{}",
                self.nz, self.nx
            )));
        }
        if !(self.dz > T::zero() && self.dx > T::zero()) {
            return Err(Error::config("grid spacing must be positive"));
        }
        Ok(())
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nz * self.nx
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn idx(&self, iz: usize, ix: usize) -> usize {
        iz * self.nx + ix
    }

    /// Depth of row `iz` in meters.
    pub fn z(&self, iz: usize) -> T {
        self.origin.0 + self.dz * T::from_usize_lossy(iz)
    }

    pub fn x(&self, ix: usize) -> T {
        self.origin.1 + self.dx * T::from_usize_lossy(ix)
    }

    pub fn depth_extent(&self) -> T {
        self.dz * T::from_usize_lossy(self.nz - 1)
    }

    pub fn width_extent(&self) -> T {
        self.dx * T::from_usize_lossy(self.nx - 1)
    }

    /// Nearest node to a (z, x) position in meters, or `None` outside the grid.
    pub fn snap(&self, pos: (T, T)) -> Option<(usize, usize)> {
        let half = T::lit(0.5);
        let fz = (pos.0 - self.origin.0) / self.dz;
        let fx = (pos.1 - self.origin.1) / self.dx;
        if !(fz > -half && fx > -half) {
            return None;
        }
        let iz = (fz + half).floor().to_usize()?;
        let ix = (fx + half).floor().to_usize()?;
        (iz < self.nz && ix < self.nx).then_some((iz, ix))
    }

    pub fn same_shape(&self, other: &Grid2D<T>) -> bool {
        self.nz == other.nz && self.nx == other.nx
    }
}

/// Wave speed per grid node in km/s.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityModel<T = f64> {
    pub grid: Grid2D<T>,
    pub c: Vec<T>,
}

impl<T: Real> VelocityModel<T> {
    pub fn new(grid: Grid2D<T>, c: Vec<T>) -> Result<Self> {
        grid.validate()?;
        if c.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "velocity has {} values for a {}x{} grid",
                c.len(),
                grid.nz,
                grid.nx
            )));
        }
        if let Some(bad) = c.iter().find(|v| !(v.is_finite() && **v > T::zero())) {
            return Err(Error::config(format!(
                "velocity must be positive and finite, found {bad}"
            )));
        }
        Ok(VelocityModel { grid, c })
    }

    pub fn homogeneous(grid: Grid2D<T>, c: T) -> Result<Self> {
        Self::new(grid, vec![c; grid.len()])
    }

    /// Squared slowness 1/c^2 in s^2/km^2.
    pub fn slowness_squared(&self) -> Vec<T> {
        self.c.iter().map(|&c| T::one() / (c * c)).collect()
    }

    pub fn from_slowness_squared(grid: Grid2D<T>, m: &[T]) -> Result<Self> {
        Self::new(grid, m.iter().map(|&m| T::one() / m.sqrt()).collect())
    }

    pub fn c_max(&self) -> T {
        self.c.iter().copied().fold(T::zero(), T::max)
    }

    pub fn c_min(&self) -> T {
        self.c.iter().copied().fold(T::infinity(), T::min)
    }

    #[inline]
    pub fn at(&self, iz: usize, ix: usize) -> T {
        self.c[self.grid.idx(iz, ix)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeAxis<T = f64> {
    pub nt: usize,
    pub dt: T,
}

impl<T: Real> TimeAxis<T> {
    pub fn new(nt: usize, dt: T) -> Result<Self> {
        if nt < 2 {
            return Err(Error::config("time axis needs at least two samples"));
        }
        if !(dt > T::zero()) {
            return Err(Error::config("dt must be positive"));
        }
        Ok(TimeAxis { nt, dt })
    }

    #[inline]
    pub fn t(&self, i: usize) -> T {
        self.dt * T::from_usize_lossy(i)
    }

    /// Record length T0 = (nt - 1) dt.
    pub fn duration(&self) -> T {
        self.t(self.nt - 1)
    }

    /// Trapezoidal quadrature weight of sample `i`.
    #[inline]
    pub fn weight(&self, i: usize) -> T {
        if i == 0 || i + 1 == self.nt {
            self.dt * T::lit(0.5)
        } else {
            self.dt
        }
    }

    pub fn integrate(&self, values: &[T]) -> T {
        debug_assert_eq!(values.len(), self.nt);
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| v * self.weight(i))
            .sum()
    }

    pub fn nyquist(&self) -> T {
        T::lit(0.5) / self.dt
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace<T = f64> {
    pub values: Vec<T>,
    pub axis: TimeAxis<T>,
}

impl<T: Real> Trace<T> {
    pub fn new(values: Vec<T>, axis: TimeAxis<T>) -> Result<Self> {
        if values.len() != axis.nt {
            return Err(Error::GridMismatch(format!(
                "trace has {} samples, axis has {}",
                values.len(),
                axis.nt
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("trace contains non-finite values".into()));
        }
        Ok(Trace { values, axis })
    }

    pub fn zeros(axis: TimeAxis<T>) -> Self {
        Trace {
            values: vec![T::zero(); axis.nt],
            axis,
        }
    }

    pub fn from_fn(axis: TimeAxis<T>, f: impl Fn(T) -> T) -> Self {
        Trace {
            values: (0..axis.nt).map(|i| f(axis.t(i))).collect(),
            axis,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |a, v| a.max(v.abs()))
    }

    pub fn neg(&self) -> Self {
        Trace {
            values: self.values.iter().map(|&v| -v).collect(),
            axis: self.axis,
        }
    }
}

/// Receiver-by-time samples of one shot.
#[derive(Debug, Clone, PartialEq)]
pub struct ShotRecord<T = f64> {
    pub shot_id: usize,
    pub axis: TimeAxis<T>,
    /// One row of `axis.nt` samples per receiver.
    pub traces: Vec<Vec<T>>,
}

impl<T: Real> ShotRecord<T> {
    pub fn zeros(shot_id: usize, n_receivers: usize, axis: TimeAxis<T>) -> Self {
        ShotRecord {
            shot_id,
            axis,
            traces: vec![vec![T::zero(); axis.nt]; n_receivers],
        }
    }

    pub fn from_traces(shot_id: usize, traces: Vec<Trace<T>>) -> Result<Self> {
        let axis = traces
            .first()
            .map(|t| t.axis)
            .ok_or_else(|| Error::config("shot record needs at least one trace"))?;
        if traces.iter().any(|t| t.axis != axis) {
            return Err(Error::GridMismatch(
                "traces do not share one time axis".into(),
            ));
        }
        Ok(ShotRecord {
            shot_id,
            axis,
            traces: traces.into_iter().map(|t| t.values).collect(),
        })
    }

    pub fn n_receivers(&self) -> usize {
        self.traces.len()
    }

    pub fn trace(&self, r: usize) -> Trace<T> {
        Trace {
            values: self.traces[r].clone(),
            axis: self.axis,
        }
    }

    pub fn same_geometry(&self, other: &ShotRecord<T>) -> bool {
        self.axis.nt == other.axis.nt
            && (self.axis.dt - other.axis.dt).abs() <= T::epsilon() * self.axis.dt * T::lit(16.0)
            && self.traces.len() == other.traces.len()
    }

    pub fn check_geometry(&self, other: &ShotRecord<T>) -> Result<()> {
        if self.same_geometry(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "shot {}: records differ in geometry ({}x{} vs {}x{})",
                self.shot_id,
                self.traces.len(),
                self.axis.nt,
                other.traces.len(),
                other.axis.nt
            )))
        }
    }

    pub fn max_abs(&self) -> T {
        self.traces
            .iter()
            .flatten()
            .fold(T::zero(), |a, v| a.max(v.abs()))
    }

    pub fn sub(&self, other: &ShotRecord<T>) -> Result<ShotRecord<T>> {
        self.check_geometry(other)?;
        let traces = self
            .traces
            .iter()
            .zip(&other.traces)
            .map(|(a, b)| a.iter().zip(b).map(|(&x, &y)| x - y).collect())
            .collect();
        Ok(ShotRecord {
            shot_id: self.shot_id,
            axis: self.axis,
            traces,
        })
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> ShotRecord<T> {
        ShotRecord {
            shot_id: self.shot_id,
            axis: self.axis,
            traces: self
                .traces
                .iter()
                .map(|t| t.iter().map(|&v| f(v)).collect())
                .collect(),
        }
    }
}

/// Source and receiver layout plus the source time function.
#[derive(Debug, Clone, PartialEq)]
pub struct Acquisition<T = f64> {
    /// (z, x) in meters.
    pub sources: Vec<(T, T)>,
    pub receivers: Vec<(T, T)>,
    pub wavelet: Trace<T>,
}

impl<T: Real> Acquisition<T> {
    pub fn validate(&self, grid: &Grid2D<T>) -> Result<()> {
        if self.sources.is_empty() || self.receivers.is_empty() {
            return Err(Error::config(
                "acquisition needs at least one source and one receiver",
            ));
        }
        for (i, &p) in self.sources.iter().enumerate() {
            let (iz, ix) = grid.snap(p).ok_or_else(|| {
                Error::config(format!(
                    "source {i} at ({}, {}) m lies outside the grid",
                    p.0, p.1
                ))
            })?;
            if iz == 0 || ix == 0 || iz + 1 == grid.nz || ix + 1 == grid.nx {
                return Err(Error::config(format!(
                    "source {i} snaps to a boundary node"
                )));
            }
        }
        for (i, &p) in self.receivers.iter().enumerate() {
            grid.snap(p).ok_or_else(|| {
                Error::config(format!(
                    "receiver {i} at ({}, {}) m lies outside the grid",
                    p.0, p.1
                ))
            })?;
        }
        Ok(())
    }

    pub fn axis(&self) -> TimeAxis<T> {
        self.wavelet.axis
    }
}

/// Snapshots of a field on the model grid. With `stride > 1` only every
/// `stride`-th time step is kept.
#[derive(Debug, Clone, PartialEq)]
pub struct Wavefield<T = f64> {
    pub grid: Grid2D<T>,
    pub axis: TimeAxis<T>,
    pub stride: usize,
    /// Concatenated snapshots, `grid.len()` values each.
    pub data: Vec<T>,
}

impl<T: Real> Wavefield<T> {
    pub fn zeros(grid: Grid2D<T>, axis: TimeAxis<T>, stride: usize) -> Self {
        let n = axis.nt.div_ceil(stride);
        Wavefield {
            grid,
            axis,
            stride,
            data: vec![T::zero(); n * grid.len()],
        }
    }

    pub fn n_snapshots(&self) -> usize {
        self.data.len() / self.grid.len()
    }

    /// Snapshot `k`, holding time step `k * stride`.
    pub fn snapshot(&self, k: usize) -> &[T] {
        let n = self.grid.len();
        &self.data[k * n..(k + 1) * n]
    }

    pub fn snapshot_mut(&mut self, k: usize) -> &mut [T] {
        let n = self.grid.len();
        &mut self.data[k * n..(k + 1) * n]
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|v| *v == T::zero())
    }
}
