//! Model builders and the canonical experiment definitions: the three-layer
//! sub-reflection study, a salt-inclusion model and a file-backed model.
//! Every preset has a desk-scale default and a full-scale variant.

mod file;

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::io::read_model;
use crate::optimize::{InversionConfig, MisfitConfig, MisfitKind};
use crate::wave::{bandpass, max_stable_dt, ricker, Acquisition, Grid2D, TimeAxis, VelocityModel};

pub use file::{parse_scenario, read_scenario, serialize_scenario};

/// Piecewise-constant-in-depth model. `depths` are interface depths in
/// meters below the grid origin, `velocities` one per layer (km/s). Each
/// interface snaps to the nearest node; that node is the first one of the
/// deeper layer.
pub fn build_layered(
    depths: &[f64],
    velocities: &[f64],
    grid: Grid2D<f64>,
) -> Result<VelocityModel<f64>> {
    if velocities.len() != depths.len() + 1 {
        return Err(Error::config(format!(
            "{} interfaces need {} velocities, got {}",
            depths.len(),
            depths.len() + 1,
            velocities.len()
        )));
    }
    let rows = snap_interfaces(depths, &grid)?;
    let mut c = Vec::with_capacity(grid.len());
    for iz in 0..grid.nz {
        let layer = rows.iter().filter(|&&r| iz >= r).count();
        c.extend(std::iter::repeat_n(velocities[layer], grid.nx));
    }
    VelocityModel::new(grid, c)
}

/// Node rows of the snapped interfaces.
pub fn snap_interfaces(depths: &[f64], grid: &Grid2D<f64>) -> Result<Vec<usize>> {
    if depths.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::config(
            "interface depths must be strictly increasing",
        ));
    }
    depths
        .iter()
        .map(|&d| {
            let r = ((d - grid.origin.0) / grid.dz).round();
            if !(r >= 1.0 && r < grid.nz as f64) {
                return Err(Error::config(format!(
                    "interface at {d} m lies outside the grid (depth extent {} m)",
                    grid.depth_extent()
                )));
            }
            Ok(r as usize)
        })
        .collect()
}

fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - i - 1;
        } else {
            return i as usize;
        }
    }
}

fn gaussian_kernel(sigma_cells: f64) -> Vec<f64> {
    let r = (4.0 * sigma_cells).ceil() as isize;
    let w: Vec<f64> = (-r..=r)
        .map(|k| (-0.5 * (k as f64 / sigma_cells).powi(2)).exp())
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Separable Gaussian blur with `sigma` in meters and reflective edges.
pub fn smooth_model(model: &VelocityModel<f64>, sigma: f64) -> Result<VelocityModel<f64>> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::config(format!(
            "smoothing sigma must be nonnegative, got {sigma}"
        )));
    }
    if sigma == 0.0 {
        return Ok(model.clone());
    }
    let g = model.grid;
    let kz = gaussian_kernel(sigma / g.dz);
    let kx = gaussian_kernel(sigma / g.dx);
    let (rz, rx) = ((kz.len() / 2) as isize, (kx.len() / 2) as isize);
    let mut tmp = vec![0.0; g.len()];
    for iz in 0..g.nz {
        for ix in 0..g.nx {
            tmp[g.idx(iz, ix)] = kx
                .iter()
                .enumerate()
                .map(|(k, w)| w * model.at(iz, reflect(ix as isize + k as isize - rx, g.nx)))
                .sum();
        }
    }
    let mut out = vec![0.0; g.len()];
    for iz in 0..g.nz {
        for ix in 0..g.nx {
            out[g.idx(iz, ix)] = kz
                .iter()
                .enumerate()
                .map(|(k, w)| w * tmp[g.idx(reflect(iz as isize + k as isize - rz, g.nz), ix)])
                .sum();
        }
    }
    VelocityModel::new(g, out)
}

/// Keeps every `factor`-th node in both directions.
pub fn decimate_model(model: &VelocityModel<f64>, factor: usize) -> Result<VelocityModel<f64>> {
    if factor == 0 {
        return Err(Error::config("decimation factor must be at least 1"));
    }
    let g = model.grid;
    let (nz, nx) = ((g.nz - 1) / factor + 1, (g.nx - 1) / factor + 1);
    let mut grid = Grid2D::new(nz, nx, g.dz * factor as f64, g.dx * factor as f64)?;
    grid.origin = g.origin;
    let mut c = Vec::with_capacity(nz * nx);
    for iz in 0..nz {
        for ix in 0..nx {
            c.push(model.at(iz * factor, ix * factor));
        }
    }
    VelocityModel::new(grid, c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ModelKind {
    /// Laterally invariant layers for truth and initial model.
    #[default]
    Layered,
    /// Linear-gradient background with an elliptic high-velocity body.
    Inclusion,
    /// Velocity grid read from disk; initial model is its smoothed copy.
    File,
}

impl ModelKind {
    pub fn tag(self) -> &'static str {
        match self {
            ModelKind::Layered => "layered",
            ModelKind::Inclusion => "inclusion",
            ModelKind::File => "file",
        }
    }
}

/// `[model]` section.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub name: String,
    pub kind: ModelKind,
    pub nz: usize,
    pub nx: usize,
    /// Node spacing in meters.
    pub dz: f64,
    pub dx: f64,
    /// Layered: interface depths (m) and layer velocities (km/s).
    pub interfaces: Vec<f64>,
    pub velocities: Vec<f64>,
    pub initial_interfaces: Vec<f64>,
    pub initial_velocities: Vec<f64>,
    /// Inclusion: background `v(z) = background_velocity + background_gradient * z_km`.
    pub background_velocity: f64,
    pub background_gradient: f64,
    pub inclusion_velocity: f64,
    /// (z, x) in meters.
    pub inclusion_center: (f64, f64),
    pub inclusion_radii: (f64, f64),
    /// Gaussian sigma (m) applied to the initial model of inclusion and file kinds.
    pub initial_smoothing: f64,
    /// File: path of the true model grid (with its sidecar).
    pub true_model: Option<PathBuf>,
    pub decimate: usize,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            name: "unnamed".into(),
            kind: ModelKind::Layered,
            nz: 31,
            nx: 151,
            dz: 100.0,
            dx: 100.0,
            interfaces: vec![],
            velocities: vec![2.0],
            initial_interfaces: vec![],
            initial_velocities: vec![2.0],
            background_velocity: 1.5,
            background_gradient: 0.5,
            inclusion_velocity: 4.5,
            inclusion_center: (2500.0, 8000.0),
            inclusion_radii: (1000.0, 2500.0),
            initial_smoothing: 0.0,
            true_model: None,
            decimate: 1,
        }
    }
}

/// `[acquisition]` section. Sources and receivers sit on horizontal lines.
#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionSpec {
    pub n_sources: usize,
    pub source_depth: f64,
    /// x of the first and last source (m); sources are equally spaced.
    pub source_x_first: f64,
    pub source_x_last: f64,
    pub n_receivers: usize,
    pub receiver_depth: f64,
    pub receiver_x_first: f64,
    pub receiver_spacing: f64,
    /// Ricker peak frequency (Hz) and delay (s).
    pub peak_frequency: f64,
    pub wavelet_delay: f64,
    /// Band-pass edges in Hz; a missing upper edge keeps everything up to
    /// 1 Hz below Nyquist.
    pub band_low: Option<f64>,
    pub band_high: Option<f64>,
    /// Seconds.
    pub record_length: f64,
    /// `None` takes the stable step for the inversion's upper velocity bound.
    pub dt: Option<f64>,
}

impl Default for AcquisitionSpec {
    fn default() -> Self {
        AcquisitionSpec {
            n_sources: 1,
            source_depth: 100.0,
            source_x_first: 1000.0,
            source_x_last: 1000.0,
            n_receivers: 1,
            receiver_depth: 100.0,
            receiver_x_first: 0.0,
            receiver_spacing: 100.0,
            peak_frequency: 5.0,
            wavelet_delay: 0.24,
            band_low: None,
            band_high: None,
            record_length: 1.0,
            dt: None,
        }
    }
}

/// `[inversion]` section.
#[derive(Debug, Clone, PartialEq)]
pub struct InversionSpec {
    pub misfit: MisfitKind,
    pub max_iters: usize,
    pub lbfgs_memory: usize,
    /// Velocity bounds, km/s.
    pub c_min: f64,
    pub c_max: f64,
    /// Nodes shallower than this depth (m) are never updated.
    pub frozen_depth: f64,
    pub source_mask_radius: usize,
    pub first_step_dc: f64,
}

impl Default for InversionSpec {
    fn default() -> Self {
        let d = InversionConfig::default();
        InversionSpec {
            misfit: MisfitKind::L2,
            max_iters: d.max_iters,
            lbfgs_memory: d.lbfgs_memory,
            c_min: d.c_min,
            c_max: d.c_max,
            frozen_depth: 0.0,
            source_mask_radius: d.source_mask_radius,
            first_step_dc: d.first_step_dc,
        }
    }
}

/// `[output]` section.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputSpec {
    pub dir: PathBuf,
    /// Write a model snapshot every K iterations; 0 disables snapshots.
    pub snapshot_every: usize,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            dir: PathBuf::from("out"),
            snapshot_every: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scenario {
    pub model: ModelSpec,
    pub acquisition: AcquisitionSpec,
    pub inversion: InversionSpec,
    pub output: OutputSpec,
}

/// Everything needed to simulate and invert.
#[derive(Debug, Clone, PartialEq)]
pub struct BuiltScenario {
    pub truth: VelocityModel<f64>,
    pub initial: VelocityModel<f64>,
    pub acquisition: Acquisition<f64>,
    pub inversion: InversionConfig,
}

fn spaced(n: usize, first: f64, last: f64) -> Vec<f64> {
    if n == 1 {
        return vec![first];
    }
    (0..n)
        .map(|i| first + (last - first) * i as f64 / (n - 1) as f64)
        .collect()
}

impl Scenario {
    pub fn name(&self) -> &str {
        &self.model.name
    }

    fn grid(&self) -> Result<Grid2D<f64>> {
        let m = &self.model;
        Grid2D::new(m.nz, m.nx, m.dz, m.dx)
    }

    /// True and initial velocity models.
    pub fn build_models(&self) -> Result<(VelocityModel<f64>, VelocityModel<f64>)> {
        let m = &self.model;
        match m.kind {
            ModelKind::Layered => {
                let g = self.grid()?;
                Ok((
                    build_layered(&m.interfaces, &m.velocities, g)?,
                    build_layered(&m.initial_interfaces, &m.initial_velocities, g)?,
                ))
            }
            ModelKind::Inclusion => {
                let g = self.grid()?;
                let bg: Vec<f64> = (0..g.len())
                    .map(|k| m.background_velocity + m.background_gradient * g.z(k / g.nx) / 1000.0)
                    .collect();
                let (cz, cx) = m.inclusion_center;
                let (az, ax) = m.inclusion_radii;
                if !(az > 0.0 && ax > 0.0) {
                    return Err(Error::config("inclusion_radii must be positive"));
                }
                let truth: Vec<f64> = bg
                    .iter()
                    .enumerate()
                    .map(|(k, &v)| {
                        let (z, x) = (g.z(k / g.nx), g.x(k % g.nx));
                        if ((z - cz) / az).powi(2) + ((x - cx) / ax).powi(2) <= 1.0 {
                            m.inclusion_velocity
                        } else {
                            v
                        }
                    })
                    .collect();
                let bg = VelocityModel::new(g, bg)?;
                Ok((
                    VelocityModel::new(g, truth)?,
                    smooth_model(&bg, m.initial_smoothing)?,
                ))
            }
            ModelKind::File => {
                let path = m.true_model.as_deref().ok_or_else(|| {
                    Error::config("model kind `file` needs `true_model = <path>` (OTF1 grid of km/s with a `<path>.txt` sidecar giving dz, dx, units)")
                })?;
                let truth = decimate_model(&read_model(path)?, m.decimate)?;
                let initial = smooth_model(&truth, m.initial_smoothing)?;
                Ok((truth, initial))
            }
        }
    }

    /// Time axis for the given models: the stable step of the fastest of
    /// the models and the inversion's upper velocity bound, unless fixed.
    pub fn time_axis(&self, truth: &VelocityModel<f64>) -> Result<TimeAxis<f64>> {
        let a = &self.acquisition;
        let dt = match a.dt {
            Some(dt) => dt,
            None => {
                let fastest = VelocityModel::homogeneous(
                    truth.grid,
                    truth.c_max().max(self.inversion.c_max),
                )?;
                max_stable_dt(&fastest)
            }
        };
        if !(dt > 0.0 && a.record_length > 0.0) {
            return Err(Error::config("dt and record_length must be positive"));
        }
        TimeAxis::new((a.record_length / dt).round() as usize + 1, dt)
    }

    pub fn build_acquisition(&self, truth: &VelocityModel<f64>) -> Result<Acquisition<f64>> {
        let a = &self.acquisition;
        if a.n_sources == 0 || a.n_receivers == 0 {
            return Err(Error::config("n_sources and n_receivers must be positive"));
        }
        let axis = self.time_axis(truth)?;
        let mut wavelet = ricker(a.peak_frequency, a.wavelet_delay, axis)?;
        if a.band_low.is_some() || a.band_high.is_some() {
            let hi = a.band_high.unwrap_or(axis.nyquist() - 1.0 - 1e-9);
            wavelet = bandpass(&wavelet, a.band_low.unwrap_or(0.0), hi)?;
        }
        let sources = spaced(a.n_sources, a.source_x_first, a.source_x_last)
            .into_iter()
            .map(|x| (a.source_depth, x))
            .collect();
        let receivers = (0..a.n_receivers)
            .map(|i| {
                (
                    a.receiver_depth,
                    a.receiver_x_first + i as f64 * a.receiver_spacing,
                )
            })
            .collect();
        Ok(Acquisition {
            sources,
            receivers,
            wavelet,
        })
    }

    pub fn inversion_config(&self, grid: &Grid2D<f64>) -> Result<InversionConfig> {
        let s = &self.inversion;
        let mask = if s.frozen_depth > 0.0 {
            if s.frozen_depth >= grid.origin.0 + grid.depth_extent() {
                return Err(Error::config(format!(
                    "frozen_depth {} m freezes the whole model",
                    s.frozen_depth
                )));
            }
            Some(
                (0..grid.len())
                    .map(|k| grid.z(k / grid.nx) >= s.frozen_depth - 1e-9 * grid.dz)
                    .collect(),
            )
        } else {
            None
        };
        let cfg = InversionConfig {
            misfit: MisfitConfig::new(s.misfit),
            max_iters: s.max_iters,
            lbfgs_memory: s.lbfgs_memory,
            update_mask: mask,
            c_min: s.c_min,
            c_max: s.c_max,
            source_mask_radius: s.source_mask_radius,
            first_step_dc: s.first_step_dc,
            ..Default::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Builds and validates: CFL for every velocity the inversion may reach,
    /// geometry inside the grid, record length past the deepest reflection,
    /// mask consistent with the grid.
    pub fn build(&self) -> Result<BuiltScenario> {
        let (truth, initial) = self.build_models()?;
        if !truth.grid.same_shape(&initial.grid) {
            return Err(Error::GridMismatch(
                "true and initial models differ in shape".into(),
            ));
        }
        let acquisition = self.build_acquisition(&truth)?;
        acquisition.validate(&truth.grid)?;
        let inversion = self.inversion_config(&truth.grid)?;
        let axis = acquisition.axis();
        let fastest = truth.c_max().max(initial.c_max()).max(inversion.c_max);
        let max_dt = max_stable_dt(&VelocityModel::homogeneous(truth.grid, fastest)?);
        if axis.dt > max_dt * (1.0 + 1e-12) {
            return Err(Error::Cfl {
                dt: axis.dt,
                max_dt,
            });
        }
        if self.model.kind == ModelKind::Layered {
            let t = self.two_way_time()?;
            if self.acquisition.record_length < t {
                return Err(Error::config(format!(
                    "record_length {} s is shorter than the two-way time {t:.3} s to the deepest interface",
                    self.acquisition.record_length
                )));
            }
        }
        Ok(BuiltScenario {
            truth,
            initial,
            acquisition,
            inversion,
        })
    }

    /// Vertical two-way time from the surface to the deepest true interface.
    pub fn two_way_time(&self) -> Result<f64> {
        let m = &self.model;
        let mut t = 0.0;
        let mut top = 0.0;
        for (d, v) in m.interfaces.iter().zip(&m.velocities) {
            t += 2.0 * (d - top) / 1000.0 / v;
            top = *d;
        }
        Ok(t)
    }
}

/// Three-layer sub-reflection study: 2 / 4 / 2 km/s with interfaces at 1 and
/// 2 km in a 3 km x 15 km section. The initial model lacks the third layer
/// and the first layer is frozen. Desk scale halves the resolution in each
/// direction and keeps a quarter of the shots.
pub fn scenario_three_layer(full_scale: bool) -> Scenario {
    let (h, n_src, n_rec) = if full_scale {
        (50.0, 52, 301)
    } else {
        (100.0, 13, 151)
    };
    let width = 15_000.0;
    Scenario {
        model: ModelSpec {
            name: "three_layer".into(),
            kind: ModelKind::Layered,
            nz: (3000.0 / h) as usize + 1,
            nx: (width / h) as usize + 1,
            dz: h,
            dx: h,
            interfaces: vec![1000.0, 2000.0],
            velocities: vec![2.0, 4.0, 2.0],
            initial_interfaces: vec![1000.0],
            initial_velocities: vec![2.0, 4.0],
            ..Default::default()
        },
        acquisition: AcquisitionSpec {
            n_sources: n_src,
            source_depth: 100.0,
            source_x_first: 0.02 * width,
            source_x_last: 0.98 * width,
            n_receivers: n_rec,
            receiver_depth: 100.0,
            receiver_x_first: 0.0,
            receiver_spacing: width / (n_rec - 1) as f64,
            peak_frequency: 5.0,
            wavelet_delay: 0.24,
            record_length: 3.8,
            ..Default::default()
        },
        inversion: InversionSpec {
            misfit: MisfitKind::J3,
            max_iters: 150,
            c_min: 1.5,
            c_max: 5.0,
            frozen_depth: 1000.0,
            ..Default::default()
        },
        output: OutputSpec {
            dir: PathBuf::from("out/three_layer"),
            snapshot_every: 0,
        },
    }
}

/// The three-layer geometry in a 5 km deep section, so that third layers up
/// to 3 km thick fit below the second interface.
pub fn scenario_thickness(full_scale: bool) -> Scenario {
    let mut s = scenario_three_layer(full_scale);
    s.model.name = "thickness".into();
    s.model.nz = (5000.0 / s.model.dz) as usize + 1;
    s.output.dir = PathBuf::from("out/thickness");
    s
}

/// Salt-style inclusion in a 6 km x 16 km section: 11 sources at 250 m
/// depth, receivers every grid node along the same line, 5 Hz Ricker kept in
/// 3 to 9 Hz, 10 s records. Full scale uses 50 m nodes and 5 ms steps; desk
/// scale uses 100 m nodes and the stable step.
pub fn scenario_bp_like(full_scale: bool) -> Scenario {
    let (h, dt) = if full_scale {
        (50.0, Some(0.005))
    } else {
        (100.0, None)
    };
    let (depth, width) = (6000.0, 16_000.0);
    let nx = (width / h) as usize + 1;
    Scenario {
        model: ModelSpec {
            name: "bp_like".into(),
            kind: ModelKind::Inclusion,
            nz: (depth / h) as usize + 1,
            nx,
            dz: h,
            dx: h,
            background_velocity: 1.5,
            background_gradient: 0.5,
            inclusion_velocity: 4.5,
            inclusion_center: (2500.0, 8000.0),
            inclusion_radii: (1000.0, 2500.0),
            initial_smoothing: 500.0,
            ..Default::default()
        },
        acquisition: AcquisitionSpec {
            n_sources: 11,
            source_depth: 250.0,
            source_x_first: 0.05 * width,
            source_x_last: 0.95 * width,
            n_receivers: nx,
            receiver_depth: 250.0,
            receiver_x_first: 0.0,
            receiver_spacing: h,
            peak_frequency: 5.0,
            wavelet_delay: 0.24,
            band_low: Some(3.0),
            band_high: Some(9.0),
            record_length: 10.0,
            dt,
        },
        inversion: InversionSpec {
            misfit: MisfitKind::W1d,
            c_min: 1.4,
            c_max: 5.0,
            ..Default::default()
        },
        output: OutputSpec {
            dir: PathBuf::from("out/bp_like"),
            snapshot_every: 0,
        },
    }
}

/// Scaled Marmousi-style run on an external model: 11 sources at 50 m depth,
/// 307 receivers every 10 m, 15 Hz Ricker with 0 to 2 Hz removed, 1 ms
/// steps at full scale. The model file must use 10 m nodes; desk scale
/// keeps every second node and every second receiver.
pub fn scenario_marmousi_like(model_path: &Path, full_scale: bool) -> Scenario {
    let (factor, n_rec, dt) = if full_scale {
        (1, 307, Some(0.001))
    } else {
        (2, 154, None)
    };
    let h = 10.0 * factor as f64;
    let width = 3060.0;
    Scenario {
        model: ModelSpec {
            name: "marmousi_like".into(),
            kind: ModelKind::File,
            nz: 101,
            nx: 307,
            dz: 10.0,
            dx: 10.0,
            initial_smoothing: 200.0,
            true_model: Some(model_path.to_path_buf()),
            decimate: factor,
            ..Default::default()
        },
        acquisition: AcquisitionSpec {
            n_sources: 11,
            source_depth: 50.0,
            source_x_first: 0.05 * width,
            source_x_last: 0.95 * width,
            n_receivers: n_rec,
            receiver_depth: 50.0,
            receiver_x_first: 0.0,
            receiver_spacing: h,
            peak_frequency: 15.0,
            wavelet_delay: 0.08,
            band_low: Some(2.0),
            band_high: None,
            record_length: 2.0,
            dt,
        },
        inversion: InversionSpec {
            misfit: MisfitKind::W2d,
            c_min: 1.4,
            c_max: 5.0,
            ..Default::default()
        },
        output: OutputSpec {
            dir: PathBuf::from("out/marmousi_like"),
            snapshot_every: 0,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::write_model;
    use proptest::prelude::*;

    fn grid(nz: usize, nx: usize) -> Grid2D<f64> {
        Grid2D::new(nz, nx, 10.0, 10.0).unwrap()
    }

    #[test]
    fn one_layer_is_homogeneous() {
        let m = build_layered(&[], &[3.0], grid(5, 6)).unwrap();
        assert!(m.c.iter().all(|&v| v == 3.0));
    }

    #[test]
    fn three_layer_profile_in_every_column() {
        let g = grid(31, 7);
        let m = build_layered(&[100.0, 200.0], &[2.0, 4.0, 2.0], g).unwrap();
        for ix in 0..7 {
            for iz in 0..31 {
                let want = if iz < 10 {
                    2.0
                } else if iz < 20 {
                    4.0
                } else {
                    2.0
                };
                assert_eq!(m.at(iz, ix), want);
            }
        }
    }

    #[test]
    fn interfaces_snap_within_half_a_cell() {
        let g = grid(50, 3);
        for d in [12.0, 14.9, 15.1, 203.0, 488.0] {
            let r = snap_interfaces(&[d], &g).unwrap()[0];
            assert!((g.z(r) - d).abs() <= 0.5 * g.dz + 1e-12);
        }
        assert!(build_layered(&[600.0], &[1.0, 2.0], g).is_err());
        assert!(build_layered(&[200.0, 100.0], &[1.0, 2.0, 3.0], g).is_err());
        assert!(build_layered(&[100.0], &[1.0], g).is_err());
    }

    #[test]
    fn smoothing_edge_cases() {
        let g = grid(20, 30);
        let h = VelocityModel::homogeneous(g, 2.5).unwrap();
        let s = smooth_model(&h, 80.0).unwrap();
        assert!(s.c.iter().all(|v| (v - 2.5).abs() < 1e-12));
        let m = build_layered(&[100.0], &[2.0, 4.0], g).unwrap();
        assert_eq!(smooth_model(&m, 0.0).unwrap(), m);
        assert!(smooth_model(&m, -1.0).is_err());
    }

    #[test]
    fn smoothing_preserves_mean() {
        let g = grid(40, 60);
        let m = build_layered(&[150.0, 260.0], &[2.0, 4.0, 2.5], g).unwrap();
        let s = smooth_model(&m, 30.0).unwrap();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!((mean(&s.c) - mean(&m.c)).abs() <= 1e-3 * mean(&m.c));
    }

    #[test]
    fn three_layer_desk_scenario_validates() {
        let s = scenario_three_layer(false);
        let b = s.build().unwrap();
        assert!(s.acquisition.record_length >= s.two_way_time().unwrap());
        assert_eq!(b.acquisition.sources.len(), 13);
        // truth and initial differ only below the second interface
        let g = b.truth.grid;
        for k in 0..g.len() {
            if g.z(k / g.nx) < 2000.0 {
                assert_eq!(b.truth.c[k], b.initial.c[k]);
            } else {
                assert_eq!((b.truth.c[k], b.initial.c[k]), (2.0, 4.0));
            }
        }
        let mask = b.inversion.update_mask.unwrap();
        assert!((0..g.len()).all(|k| mask[k] == (g.z(k / g.nx) >= 1000.0)));
    }

    #[test]
    fn three_layer_full_scale_counts() {
        let s = scenario_three_layer(true);
        let b = s.build().unwrap();
        assert_eq!(b.acquisition.sources.len(), 52);
        assert_eq!(b.acquisition.receivers.len(), 301);
        assert!((b.acquisition.axis().duration() - 3.8).abs() <= b.acquisition.axis().dt);
        assert_eq!(
            (b.truth.grid.depth_extent(), b.truth.grid.width_extent()),
            (3000.0, 15_000.0)
        );
    }

    #[test]
    fn bp_like_geometry() {
        let full = scenario_bp_like(true);
        assert_eq!((full.model.nz - 1) as f64 * full.model.dz, 6000.0);
        assert_eq!((full.model.nx - 1) as f64 * full.model.dx, 16_000.0);
        assert_eq!(full.acquisition.n_receivers, 321);
        assert_eq!(full.acquisition.dt, Some(0.005));
        let b = scenario_bp_like(false).build().unwrap();
        assert!(b.truth.c_max() == 4.5 && b.initial.c_max() < 4.5);
        assert_eq!(b.acquisition.sources.len(), 11);
        let f = full
            .build_acquisition(&full.build_models().unwrap().0)
            .unwrap();
        assert_eq!(f.axis().nt, 2001);
    }

    fn spans(s: &Scenario) -> (f64, f64) {
        let a = &s.acquisition;
        let w = (s.model.nx - 1) as f64 * s.model.dx;
        (
            (a.source_x_last - a.source_x_first) / w,
            (a.n_receivers - 1) as f64 * a.receiver_spacing / w,
        )
    }

    #[test]
    fn desk_scale_keeps_aspect_ratios() {
        for (d, f) in [
            (scenario_three_layer(false), scenario_three_layer(true)),
            (scenario_bp_like(false), scenario_bp_like(true)),
        ] {
            let (a, b) = (spans(&d), spans(&f));
            assert!((a.0 - b.0).abs() <= 0.05 * b.0 && (a.1 - b.1).abs() <= 0.05 * b.1);
        }
    }

    #[test]
    fn marmousi_like_reads_model_file() {
        let dir = std::env::temp_dir().join(format!("otfwi-marm-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("marm.bin");
        let missing = scenario_marmousi_like(&dir.join("nope.bin"), false);
        let err = missing.build().unwrap_err().to_string();
        assert!(err.contains("dz"), "{err}");

        let g = Grid2D::new(101, 307, 10.0, 10.0).unwrap();
        let truth = build_layered(&[300.0, 600.0], &[1.6, 2.5, 3.5], g).unwrap();
        write_model(&path, &truth).unwrap();
        let full = scenario_marmousi_like(&path, true);
        assert_eq!(full.acquisition.peak_frequency, 15.0);
        assert_eq!(full.acquisition.band_low, Some(2.0));
        let b = full.build().unwrap();
        assert_eq!(b.acquisition.receivers.len(), 307);
        assert_eq!(b.truth, truth);
        let desk = scenario_marmousi_like(&path, false).build().unwrap();
        assert_eq!((desk.truth.grid.nz, desk.truth.grid.nx), (51, 154));
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn validation_catches_bad_setups() {
        let mut s = scenario_three_layer(false);
        s.acquisition.record_length = 1.0;
        assert!(s.build().unwrap_err().to_string().contains("two-way"));
        let mut s = scenario_three_layer(false);
        s.acquisition.dt = Some(0.05);
        assert!(matches!(s.build(), Err(Error::Cfl { .. })));
        let mut s = scenario_three_layer(false);
        s.acquisition.source_x_last = 20_000.0;
        assert!(s.build().is_err());
        let mut s = scenario_three_layer(false);
        s.inversion.frozen_depth = 4000.0;
        assert!(s.build().is_err());
    }

    proptest! {
        #[test]
        fn decimation_keeps_corners(nz in 7usize..14, nx in 7usize..14, f in 1usize..4) {
            let g = grid(nz, nx);
            let c: Vec<f64> = (0..g.len()).map(|k| 1.0 + k as f64).collect();
            let m = VelocityModel::new(g, c).unwrap();
            let d = decimate_model(&m, f).unwrap();
            prop_assert_eq!(d.at(0, 0), m.at(0, 0));
            prop_assert_eq!(d.grid.dz, 10.0 * f as f64);
            prop_assert_eq!(d.at(d.grid.nz - 1, d.grid.nx - 1), m.at((d.grid.nz - 1) * f, (d.grid.nx - 1) * f));
        }
    }
}
