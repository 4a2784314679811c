//! Experiment harness: misfit landscapes, noise studies, residual spectra and
//! the layer-thickness study. Every study is deterministic given its inputs
//! and can be written out as a self-describing CSV.

mod landscape;
mod noise;
mod spectrum;
mod thickness;

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub use landscape::{
    gaussian_moments, gaussian_w2, hessian_eigenvalues, landscape_config, landscape_gaussian,
    landscape_hessians, landscape_shift, shift_trace, translation_dilation_eigenvalues,
    two_ricker_signal, w2_squared_offset, GAUSSIAN_SAMPLES, GAUSSIAN_TRUNCATION,
    LANDSCAPE_SIGN_SCALE,
};
pub use noise::{
    correlated_noise, correlated_noise_tuned, noise_scaling, piecewise_uniform_noise, snr_db,
    CorrelatedNoise, NoiseStudy,
};
pub use spectrum::{residual_spectrum, residual_spectrum_all, ResidualSpectrum};
pub use thickness::{thickness_model, thickness_study, ThicknessStudy};

/// Misfit values on a tensor grid of parameters. Values are stored with the
/// last axis varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct LandscapeSweep {
    pub tag: String,
    pub axes: Vec<(String, Vec<f64>)>,
    pub values: Vec<f64>,
}

impl LandscapeSweep {
    pub fn new(
        tag: impl Into<String>,
        axes: Vec<(String, Vec<f64>)>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let s = LandscapeSweep {
            tag: tag.into(),
            axes,
            values,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.axes.is_empty() {
            return Err(Error::config("sweep needs at least one axis"));
        }
        for (name, ax) in &self.axes {
            check_increasing(name, ax)?;
        }
        let n: usize = self.axes.iter().map(|(_, a)| a.len()).product();
        if n != self.values.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {n} points",
                self.values.len()
            )));
        }
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "{} value at point {i} is not finite",
                self.tag
            )));
        }
        Ok(())
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|(_, a)| a.len()).collect()
    }

    /// Value at a 2D grid point `(i, j)`.
    pub fn at2(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.axes[1].1.len() + j]
    }

    pub fn to_csv(&self) -> String {
        sweeps_csv(std::slice::from_ref(self))
            .expect("a single validated sweep is always consistent")
    }
}

pub(crate) fn check_increasing(name: &str, ax: &[f64]) -> Result<()> {
    if ax.is_empty() {
        return Err(Error::config(format!("axis `{name}` is empty")));
    }
    if ax.iter().any(|v| !v.is_finite()) {
        return Err(Error::config(format!(
            "axis `{name}` has non-finite entries"
        )));
    }
    if ax.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::config(format!(
            "axis `{name}` must be strictly increasing"
        )));
    }
    Ok(())
}

/// One CSV with the parameter columns followed by one value column per sweep
/// (headed by its misfit tag). All sweeps must share the same axes.
pub fn sweeps_csv(sweeps: &[LandscapeSweep]) -> Result<String> {
    let first = sweeps
        .first()
        .ok_or_else(|| Error::config("no sweeps to write"))?;
    if sweeps.iter().any(|s| s.axes != first.axes) {
        return Err(Error::GridMismatch(
            "sweeps in one table must share their parameter axes".into(),
        ));
    }
    let mut out = String::new();
    let names: Vec<&str> = first
        .axes
        .iter()
        .map(|(n, _)| n.as_str())
        .chain(sweeps.iter().map(|s| s.tag.as_str()))
        .collect();
    out.push_str(&names.join(","));
    out.push('\n');
    let shape = first.shape();
    for k in 0..first.values.len() {
        let mut rem = k;
        let mut idx = vec![0; shape.len()];
        for d in (0..shape.len()).rev() {
            idx[d] = rem % shape[d];
            rem /= shape[d];
        }
        let mut cells: Vec<String> = idx
            .iter()
            .zip(&first.axes)
            .map(|(&i, (_, a))| format!("{}", a[i]))
            .collect();
        cells.extend(sweeps.iter().map(|s| format!("{:e}", s.values[k])));
        let _ = writeln!(out, "{}", cells.join(","));
    }
    Ok(out)
}

pub fn write_csv(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, contents)?;
    Ok(())
}

/// Indices of discrete local minima of a 1D table: points strictly below each
/// existing neighbour.
pub fn local_minima(values: &[f64]) -> Vec<usize> {
    let n = values.len();
    (0..n)
        .filter(|&i| {
            let left = i == 0 || values[i] < values[i - 1];
            let right = i + 1 == n || values[i] < values[i + 1];
            n > 1 && left && right
        })
        .collect()
}

/// Interior local minima only.
pub fn strict_interior_minima(values: &[f64]) -> Vec<usize> {
    (1..values.len().saturating_sub(1))
        .filter(|&i| values[i] < values[i - 1] && values[i] < values[i + 1])
        .collect()
}

/// `v[i-1] - 2 v[i] + v[i+1]` at interior points.
pub fn second_differences(values: &[f64]) -> Vec<f64> {
    values
        .windows(3)
        .map(|w| w[0] - 2.0 * w[1] + w[2])
        .collect()
}

/// Least-squares slope of `log y` against `log x`. `None` when fewer than two
/// points or any value is not strictly positive.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 || x.iter().chain(y).any(|v| !(*v > 0.0) || !v.is_finite())
    {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}
