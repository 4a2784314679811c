//! Maps from signed traces to nonnegative unit-mass densities, with the
//! transposed Jacobian needed to chain adjoint sources through them.
//!
//! Every method has the form `f~ = p(f) / b`, `b = <p(f)>` (trapezoidal mass),
//! for a pointwise map `p`:
//!
//! * linear: `p(f) = f + c` with the shift `c` shared by a trace pair,
//! * sign-sensitive: `p(f) = f + 1/c` for `f >= 0`, `exp(c f)/c` for `f < 0`,
//! * exponential: `p(f) = exp(c f)`.

use crate::error::{Error, Result};
use crate::real::Real;
use crate::wave::{TimeAxis, Trace};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormMethod {
    Linear,
    SignSensitive,
    Exponential,
}

/// Captured intermediates for `v -> (d f~ / d f)^T v`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationJacobian<T = f64> {
    pub method: NormMethod,
    axis: TimeAxis<T>,
    /// p'(f) per sample.
    deriv: Vec<T>,
    density: Vec<T>,
    b: T,
    /// When false the mass `b` is held fixed (normalization frozen per iteration).
    through_mass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedSignal<T = f64> {
    pub density: Vec<T>,
    pub axis: TimeAxis<T>,
    /// Normalizing denominator b.
    pub mass_scale: T,
    pub method: NormMethod,
    /// Method parameter (the shift for the linear method).
    pub c: T,
    pub jacobian: NormalizationJacobian<T>,
}

impl<T: Real> NormalizedSignal<T> {
    fn build(
        p: Vec<T>,
        deriv: Vec<T>,
        axis: TimeAxis<T>,
        method: NormMethod,
        c: T,
    ) -> Result<Self> {
        let b = axis.integrate(&p);
        if !(b > T::zero()) || !b.is_finite() {
            return Err(Error::Degenerate(format!(
                "normalization mass is {b}, cannot form a density"
            )));
        }
        let density: Vec<T> = p.iter().map(|&v| v / b).collect();
        Ok(NormalizedSignal {
            density: density.clone(),
            axis,
            mass_scale: b,
            method,
            c,
            jacobian: NormalizationJacobian {
                method,
                axis,
                deriv,
                density,
                b,
                through_mass: true,
            },
        })
    }

    /// Wraps an already nonnegative density (rescaled to unit mass). The
    /// Jacobian is that of `f / <f>`.
    pub fn from_density(values: Vec<T>, axis: TimeAxis<T>) -> Result<Self> {
        if values.len() != axis.nt {
            return Err(Error::GridMismatch(format!(
                "{} samples for an axis of {}",
                values.len(),
                axis.nt
            )));
        }
        if values.iter().any(|v| !(*v >= T::zero()) || !v.is_finite()) {
            return Err(Error::Domain(
                "density must be finite and nonnegative".into(),
            ));
        }
        let ones = vec![T::one(); values.len()];
        Self::build(values, ones, axis, NormMethod::Linear, T::zero())
    }

    /// Holds the mass fixed in the Jacobian, i.e. `J^T v = p'(f) v / b`.
    pub fn frozen(mut self) -> Self {
        self.jacobian.through_mass = false;
        self
    }

    pub fn len(&self) -> usize {
        self.density.len()
    }

    pub fn is_empty(&self) -> bool {
        self.density.is_empty()
    }

    pub fn mass(&self) -> T {
        self.axis.integrate(&self.density)
    }
}

impl<T: Real> NormalizationJacobian<T> {
    /// `(J^T v)_j = p'_j (v_j - w_j sum_i f~_i v_i) / b`.
    pub fn apply_transpose(&self, v: &[T]) -> Result<Vec<T>> {
        self.check_len(v)?;
        let s = if self.through_mass {
            self.density.iter().zip(v).map(|(&d, &x)| d * x).sum()
        } else {
            T::zero()
        };
        Ok((0..v.len())
            .map(|j| self.deriv[j] * (v[j] - self.axis.weight(j) * s) / self.b)
            .collect())
    }

    /// Forward action `J w`, used for adjoint consistency checks.
    pub fn apply(&self, w: &[T]) -> Result<Vec<T>> {
        self.check_len(w)?;
        let s = if self.through_mass {
            (0..w.len())
                .map(|j| self.axis.weight(j) * self.deriv[j] * w[j])
                .sum()
        } else {
            T::zero()
        };
        Ok((0..w.len())
            .map(|i| (self.deriv[i] * w[i] - self.density[i] * s) / self.b)
            .collect())
    }

    fn check_len(&self, v: &[T]) -> Result<()> {
        if v.len() != self.deriv.len() {
            return Err(Error::GridMismatch(format!(
                "vector of length {} for a {:?} normalization of length {}",
                v.len(),
                self.method,
                self.deriv.len()
            )));
        }
        Ok(())
    }
}

pub fn apply_normalization_jacobian_transpose<T: Real>(
    jac: &NormalizationJacobian<T>,
    v: &[T],
) -> Result<Vec<T>> {
    jac.apply_transpose(v)
}

fn check_pair<T: Real>(f: &Trace<T>, g: &Trace<T>) -> Result<()> {
    if f.axis != g.axis || f.len() != g.len() {
        return Err(Error::GridMismatch(
            "traces do not share a time axis".into(),
        ));
    }
    Ok(())
}

/// Shift both traces by `c = max(0, -min(f, g))` and rescale each to unit mass.
pub fn normalize_linear<T: Real>(
    f: &Trace<T>,
    g: &Trace<T>,
) -> Result<(NormalizedSignal<T>, NormalizedSignal<T>)> {
    check_pair(f, g)?;
    let lo = f
        .values
        .iter()
        .chain(&g.values)
        .copied()
        .fold(T::infinity(), T::min);
    let c = (-lo).max(T::zero());
    Ok((normalize_shifted(f, c)?, normalize_shifted(g, c)?))
}

/// `(f + c) / <f + c>` for a given shift, requiring `f + c >= 0`.
pub fn normalize_shifted<T: Real>(f: &Trace<T>, c: T) -> Result<NormalizedSignal<T>> {
    let p: Vec<T> = f.values.iter().map(|&v| v + c).collect();
    if let Some(bad) = p.iter().find(|v| **v < T::zero()) {
        return Err(Error::Domain(format!(
            "shift {c} leaves a negative value {bad}"
        )));
    }
    NormalizedSignal::build(p, vec![T::one(); f.len()], f.axis, NormMethod::Linear, c)
}

#[inline]
fn sign_sensitive_map<T: Real>(f: T, c: T) -> (T, T) {
    if f >= T::zero() {
        (f + T::one() / c, T::one())
    } else {
        let e = (c * f).exp();
        (e / c, e)
    }
}

pub fn normalize_signsensitive<T: Real>(f: &Trace<T>, c: T) -> Result<NormalizedSignal<T>> {
    if !(c > T::zero()) || !c.is_finite() {
        return Err(Error::config(format!(
            "sign-sensitive scale must be positive, got {c}"
        )));
    }
    let (p, d) = f.values.iter().map(|&v| sign_sensitive_map(v, c)).unzip();
    NormalizedSignal::build(p, d, f.axis, NormMethod::SignSensitive, c)
}

pub fn normalize_exponential<T: Real>(f: &Trace<T>, c: T) -> Result<NormalizedSignal<T>> {
    if !(c > T::zero()) || !c.is_finite() {
        return Err(Error::config(format!(
            "exponential scale must be positive, got {c}"
        )));
    }
    let guard = c * f.max_abs();
    if guard > T::lit(700.0) {
        return Err(Error::config(format!(
            "exponential normalization overflows: c max|f| = {guard} > 700"
        )));
    }
    let p: Vec<T> = f.values.iter().map(|&v| (c * v).exp()).collect();
    let d = p.iter().map(|&e| c * e).collect();
    NormalizedSignal::build(p, d, f.axis, NormMethod::Exponential, c)
}

/// Default sign-sensitive scale `10 / max|f, g|` (1 for an all-zero pair).
pub fn default_sign_scale<T: Real>(max_abs: T) -> T {
    if max_abs > T::zero() {
        T::lit(10.0) / max_abs
    } else {
        T::one()
    }
}

/// Normalization applied to each trace pair by the trace-wise misfits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormConfig<T = f64> {
    Linear,
    /// `None` selects `10 / max|f, g|` over the whole shot.
    SignSensitive(Option<T>),
    Exponential(T),
}

impl<T: Real> Default for NormConfig<T> {
    fn default() -> Self {
        NormConfig::SignSensitive(None)
    }
}

/// How the adjoint source is chained through the normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormDerivative {
    /// Full quotient rule through the mass b.
    #[default]
    Differentiate,
    /// b held fixed.
    Frozen,
}
