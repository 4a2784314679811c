use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{TimeAxis, Trace};
use crate::error::{Error, Result};
use crate::real::Real;

/// Ricker wavelet `(1 - 2 pi^2 f^2 tau^2) exp(-pi^2 f^2 tau^2)`, `tau = t - delay`.
pub fn ricker<T: Real>(peak_freq: T, delay: T, axis: TimeAxis<T>) -> Result<Trace<T>> {
    if !(peak_freq > T::zero()) {
        return Err(Error::config("Ricker peak frequency must be positive"));
    }
    Ok(Trace::from_fn(axis, |t| ricker_value(peak_freq, t - delay)))
}

#[inline]
pub(crate) fn ricker_value<T: Real>(peak_freq: T, tau: T) -> T {
    let a = T::PI() * T::PI() * peak_freq * peak_freq * tau * tau;
    (T::one() - a - a) * (-a).exp()
}

/// Zero-phase band-pass: the spectrum is multiplied by a real mask equal to 1
/// on `[f_lo, f_hi]` with 1 Hz raised-cosine ramps outside the band.
/// `f_lo = 0` keeps the zero frequency.
pub fn bandpass<T: Real>(trace: &Trace<T>, f_lo: T, f_hi: T) -> Result<Trace<T>> {
    let nyq = trace.axis.nyquist();
    if !(f_lo >= T::zero() && f_lo < f_hi) {
        return Err(Error::config(format!(
            "bandpass needs 0 <= f_lo < f_hi, got [{f_lo}, {f_hi}]"
        )));
    }
    if f_hi >= nyq {
        return Err(Error::config(format!(
            "bandpass upper edge {f_hi} Hz reaches Nyquist {nyq} Hz"
        )));
    }
    let n = trace.len();
    let mut buf: Vec<Complex<T>> = trace
        .values
        .iter()
        .map(|&v| Complex::new(v, T::zero()))
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    let df = T::one() / (T::from_usize_lossy(n) * trace.axis.dt);
    for (k, z) in buf.iter_mut().enumerate() {
        let kk = if k <= n / 2 { k } else { n - k };
        let f = T::from_usize_lossy(kk) * df;
        *z = *z * band_mask(f, f_lo, f_hi);
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let scale = T::one() / T::from_usize_lossy(n);
    let values = buf.iter().map(|z| z.re * scale).collect();
    Ok(Trace {
        values,
        axis: trace.axis,
    })
}

fn band_mask<T: Real>(f: T, f_lo: T, f_hi: T) -> T {
    let taper = T::one();
    let half = T::lit(0.5);
    let ramp = |d: T| half * (T::one() + (T::PI() * d / taper).cos());
    if f >= f_lo && f <= f_hi {
        T::one()
    } else if f < f_lo {
        let d = f_lo - f;
        if f_lo == T::zero() || d >= taper {
            T::zero()
        } else {
            ramp(d)
        }
    } else {
        let d = f - f_hi;
        if d >= taper {
            T::zero()
        } else {
            ramp(d)
        }
    }
}
