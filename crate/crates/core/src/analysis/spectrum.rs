use std::fmt::Write as _;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::wave::ShotRecord;

/// One-sided spectrum of the residual `f - g`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualSpectrum {
    pub frequencies: Vec<f64>,
    /// `|DFT|` averaged over all traces.
    pub mean_amplitude: Vec<f64>,
    /// Energy per bin summed over traces; sums to `time_energy`.
    pub power: Vec<f64>,
    /// `dt * sum r^2` over all samples.
    pub time_energy: f64,
}

impl ResidualSpectrum {
    pub fn spectral_energy(&self) -> f64 {
        self.power.iter().sum()
    }

    /// Fraction of the residual energy in `lo <= f < hi` (0 for a zero residual).
    pub fn band_fraction(&self, lo: f64, hi: f64) -> f64 {
        let total = self.spectral_energy();
        if total <= 0.0 {
            return 0.0;
        }
        let band: f64 = self
            .frequencies
            .iter()
            .zip(&self.power)
            .filter(|(f, _)| **f >= lo && **f < hi)
            .map(|(_, p)| p)
            .sum();
        band / total
    }

    pub fn peak_frequency(&self) -> f64 {
        let k = self
            .mean_amplitude
            .iter()
            .enumerate()
            .fold(0, |best, (i, a)| {
                if *a > self.mean_amplitude[best] {
                    i
                } else {
                    best
                }
            });
        self.frequencies[k]
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "# time_energy={:e}\nfrequency_hz,mean_amplitude,power\n",
            self.time_energy
        );
        for ((f, a), p) in self
            .frequencies
            .iter()
            .zip(&self.mean_amplitude)
            .zip(&self.power)
        {
            let _ = writeln!(out, "{f},{a:e},{p:e}");
        }
        out
    }
}

pub fn residual_spectrum(f: &ShotRecord<f64>, g: &ShotRecord<f64>) -> Result<ResidualSpectrum> {
    residual_spectrum_all(std::slice::from_ref(f), std::slice::from_ref(g))
}

/// Spectrum of the residual over every trace of every shot.
pub fn residual_spectrum_all(
    f: &[ShotRecord<f64>],
    g: &[ShotRecord<f64>],
) -> Result<ResidualSpectrum> {
    if f.len() != g.len() || f.is_empty() {
        return Err(Error::GridMismatch(format!(
            "{} synthetic vs {} observed records",
            f.len(),
            g.len()
        )));
    }
    let axis = f[0].axis;
    let n = axis.nt;
    let dt = axis.dt;
    let bins = n / 2 + 1;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let mut amp = vec![0.0; bins];
    let mut power = vec![0.0; bins];
    let mut time_energy = 0.0;
    let mut traces = 0usize;
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    for (fs, gs) in f.iter().zip(g) {
        fs.check_geometry(gs)?;
        if fs.axis != axis {
            return Err(Error::GridMismatch(
                "records do not share one time axis".into(),
            ));
        }
        for (ft, gt) in fs.traces.iter().zip(&gs.traces) {
            for (b, (a, c)) in buf.iter_mut().zip(ft.iter().zip(gt)) {
                *b = Complex::new(a - c, 0.0);
                time_energy += dt * (a - c) * (a - c);
            }
            fft.process(&mut buf);
            for k in 0..bins {
                let mirrored = k != 0 && !(n % 2 == 0 && k == n / 2);
                let weight = if mirrored { 2.0 } else { 1.0 };
                amp[k] += buf[k].norm();
                power[k] += weight * dt / n as f64 * buf[k].norm_sqr();
            }
            traces += 1;
        }
    }
    for a in amp.iter_mut() {
        *a /= traces as f64;
    }
    let df = 1.0 / (n as f64 * dt);
    Ok(ResidualSpectrum {
        frequencies: (0..bins).map(|k| k as f64 * df).collect(),
        mean_amplitude: amp,
        power,
        time_energy,
    })
}
