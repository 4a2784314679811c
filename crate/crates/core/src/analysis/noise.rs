use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::loglog_slope;
use crate::error::{Error, Result};
use crate::misfit1d::{misfit_j1, misfit_l2};
use crate::normalize::{NormConfig, NormDerivative};
use crate::wave::{ShotRecord, Trace};

/// Mean `W2^2(f, f + noise)` and `L2(f, f + noise)` per piece count.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseStudy {
    pub pieces: Vec<usize>,
    pub w2: Vec<f64>,
    pub l2: Vec<f64>,
    pub w2_slope: Option<f64>,
    pub l2_slope: Option<f64>,
    pub trials: usize,
    pub amplitude: f64,
    pub seed: u64,
    /// Trials skipped because a normalized signal had no mass.
    pub degenerate: usize,
}

impl NoiseStudy {
    pub fn to_csv(&self) -> String {
        let slope = |s: Option<f64>| s.map_or("nan".to_string(), |v| format!("{v:.6}"));
        let mut out = format!(
            "# trials={} amplitude={:e} seed={} degenerate={} w2_slope={} l2_slope={}\npieces,w2_squared,l2\n",
            self.trials,
            self.amplitude,
            self.seed,
            self.degenerate,
            slope(self.w2_slope),
            slope(self.l2_slope)
        );
        for ((n, w), l) in self.pieces.iter().zip(&self.w2).zip(&self.l2) {
            let _ = writeln!(out, "{n},{w:e},{l:e}");
        }
        out
    }
}

/// Piecewise-constant noise: `pieces` blocks of (nearly) equal length, each
/// holding one draw from `U(-amplitude, amplitude)`. Sample `i` belongs to
/// block `i * pieces / nt`.
pub fn piecewise_uniform_noise(
    nt: usize,
    pieces: usize,
    amplitude: f64,
    rng: &mut impl Rng,
) -> Vec<f64> {
    let draws: Vec<f64> = (0..pieces)
        .map(|_| {
            if amplitude > 0.0 {
                rng.gen_range(-amplitude..amplitude)
            } else {
                0.0
            }
        })
        .collect();
    (0..nt)
        .map(|i| draws[(i * pieces / nt).min(pieces - 1)])
        .collect()
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Averages over `trials` realizations of piecewise-constant uniform noise
/// for every piece count, then fits log-log slopes against `N`.
pub fn noise_scaling(
    f: &Trace<f64>,
    pieces: &[usize],
    trials: usize,
    amplitude: f64,
    norm: NormConfig<f64>,
    seed: u64,
) -> Result<NoiseStudy> {
    if pieces.is_empty() || pieces.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::config(
            "piece counts must be a nonempty strictly increasing list",
        ));
    }
    if pieces[0] == 0 || *pieces.last().unwrap() > f.len() {
        return Err(Error::config(format!(
            "piece counts must lie in 1..={}",
            f.len()
        )));
    }
    if trials == 0 {
        return Err(Error::config("noise study needs at least one trial"));
    }
    if !(amplitude >= 0.0) || !amplitude.is_finite() {
        return Err(Error::config(
            "noise amplitude must be finite and nonnegative",
        ));
    }
    let clean = ShotRecord::from_traces(0, vec![f.clone()])?;
    let rows = pieces
        .par_iter()
        .enumerate()
        .map(|(k, &n)| {
            let mut rng = rng_for(seed, k as u64);
            let (mut w2, mut l2, mut used, mut degenerate) = (0.0, 0.0, 0usize, 0usize);
            for _ in 0..trials {
                let noise = piecewise_uniform_noise(f.len(), n, amplitude, &mut rng);
                if noise.iter().all(|e| *e == 0.0) {
                    used += 1;
                    continue;
                }
                let mut noisy = clean.clone();
                for (v, e) in noisy.traces[0].iter_mut().zip(&noise) {
                    *v += e;
                }
                let w = misfit_j1(&clean, &noisy, &norm, NormDerivative::Frozen)?;
                if w.diagnostics.degenerate_traces > 0 {
                    degenerate += 1;
                    continue;
                }
                w2 += w.value;
                l2 += misfit_l2(&clean, &noisy)?.value;
                used += 1;
            }
            if used == 0 {
                return Err(Error::Degenerate(format!(
                    "all {trials} trials with {n} pieces produced a massless normalized signal"
                )));
            }
            Ok((w2 / used as f64, l2 / used as f64, degenerate))
        })
        .collect::<Result<Vec<_>>>()?;
    let x: Vec<f64> = pieces.iter().map(|&n| n as f64).collect();
    let w2: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let l2: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let degenerate = rows.iter().map(|r| r.2).sum();
    if degenerate > 0 {
        log::warn!("noise study: {degenerate} degenerate trials skipped");
    }
    Ok(NoiseStudy {
        pieces: pieces.to_vec(),
        w2_slope: loglog_slope(&x, &w2),
        l2_slope: loglog_slope(&x, &l2),
        w2,
        l2,
        trials,
        amplitude,
        seed,
        degenerate,
    })
}

/// Noisy gathers with the realized signal-to-noise ratio.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelatedNoise {
    pub records: Vec<ShotRecord<f64>>,
    pub amplitude: f64,
    /// `+inf` when no noise was added.
    pub snr_db: f64,
}

/// `10 log10(sum g^2 / sum (noisy - g)^2)` over all samples.
pub fn snr_db(clean: &[ShotRecord<f64>], noisy: &[ShotRecord<f64>]) -> Result<f64> {
    if clean.len() != noisy.len() {
        return Err(Error::GridMismatch(format!(
            "{} clean vs {} noisy records",
            clean.len(),
            noisy.len()
        )));
    }
    let (mut s, mut n) = (0.0, 0.0);
    for (g, h) in clean.iter().zip(noisy) {
        g.check_geometry(h)?;
        for (gt, ht) in g.traces.iter().zip(&h.traces) {
            for (a, b) in gt.iter().zip(ht) {
                s += a * a;
                n += (b - a) * (b - a);
            }
        }
    }
    Ok(if n == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (s / n).log10()
    })
}

/// Adds `(r[j-1] + 2 r[j] + r[j+1]) / 4 * (1 + g[j] / |g|_inf)` to every trace,
/// with `r` iid `U(-amplitude, amplitude)` (zero outside the record) and the
/// sup norm taken per trace. Shot `k` draws from stream `k` of `seed`.
pub fn correlated_noise(
    records: &[ShotRecord<f64>],
    amplitude: f64,
    seed: u64,
) -> Result<CorrelatedNoise> {
    if !(amplitude >= 0.0) || !amplitude.is_finite() {
        return Err(Error::config(
            "noise amplitude must be finite and nonnegative",
        ));
    }
    let noisy: Vec<ShotRecord<f64>> = records
        .iter()
        .enumerate()
        .map(|(k, g)| {
            let mut rng = rng_for(seed, k as u64);
            let mut out = g.clone();
            for tr in out.traces.iter_mut() {
                let n = tr.len();
                let r: Vec<f64> = (0..n)
                    .map(|_| {
                        if amplitude > 0.0 {
                            rng.gen_range(-amplitude..amplitude)
                        } else {
                            0.0
                        }
                    })
                    .collect();
                let sup = tr
                    .iter()
                    .fold(0.0f64, |m, v| m.max(v.abs()))
                    .max(f64::MIN_POSITIVE);
                for j in 0..n {
                    let left = if j > 0 { r[j - 1] } else { 0.0 };
                    let right = if j + 1 < n { r[j + 1] } else { 0.0 };
                    tr[j] += 0.25 * (left + 2.0 * r[j] + right) * (1.0 + tr[j] / sup);
                }
            }
            out
        })
        .collect();
    let snr = snr_db(records, &noisy)?;
    Ok(CorrelatedNoise {
        records: noisy,
        amplitude,
        snr_db: snr,
    })
}

/// Correlated noise with the amplitude chosen so the realized SNR hits
/// `target_db`. The noise is linear in the amplitude for a fixed seed, so the
/// correction is exact up to rounding; a few refinement passes absorb that.
pub fn correlated_noise_tuned(
    records: &[ShotRecord<f64>],
    target_db: f64,
    seed: u64,
) -> Result<CorrelatedNoise> {
    if !target_db.is_finite() {
        return Err(Error::config("target SNR must be finite"));
    }
    let mut amplitude = 1.0;
    let mut out = correlated_noise(records, amplitude, seed)?;
    for _ in 0..5 {
        if !out.snr_db.is_finite() {
            return Err(Error::Degenerate(
                "cannot tune noise against an all-zero gather".into(),
            ));
        }
        if (out.snr_db - target_db).abs() < 1e-9 {
            break;
        }
        amplitude *= 10f64.powf((out.snr_db - target_db) / 20.0);
        out = correlated_noise(records, amplitude, seed)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wave::TimeAxis;
    use proptest::prelude::*;
    use rand::Rng;

    fn bump() -> Trace<f64> {
        let ax = TimeAxis::new(1600, 1.0 / 1599.0).unwrap();
        Trace::from_fn(ax, |t| (-(t - 0.5) * (t - 0.5) / (2.0 * 0.1 * 0.1)).exp())
    }

    fn gather() -> Vec<ShotRecord<f64>> {
        let ax = TimeAxis::new(200, 0.01).unwrap();
        (0..2)
            .map(|s| {
                let tr: Vec<Trace<f64>> = (0..5)
                    .map(|r| {
                        Trace::from_fn(ax, |t| {
                            (std::f64::consts::TAU * (3.0 + r as f64) * t + s as f64).sin()
                        })
                    })
                    .collect();
                ShotRecord::from_traces(s, tr).unwrap()
            })
            .collect()
    }

    #[test]
    fn piecewise_noise_blocks() {
        let mut rng = rng_for(1, 0);
        let v = piecewise_uniform_noise(10, 3, 1.0, &mut rng);
        assert!(v[0] == v[3] && v[4] == v[6] && v[7] == v[9]);
        assert!(v[3] != v[4] && v.iter().all(|x| x.abs() < 1.0));
        assert!(piecewise_uniform_noise(5, 2, 0.0, &mut rng)
            .iter()
            .all(|x| *x == 0.0));
    }

    #[test]
    fn zero_amplitude_gives_zero_misfits() {
        let s = noise_scaling(&bump(), &[10, 20, 40], 3, 0.0, NormConfig::Linear, 7).unwrap();
        assert!(s.w2.iter().chain(&s.l2).all(|v| *v == 0.0));
        assert_eq!(s.w2_slope, None);
    }

    #[test]
    fn rates_under_linear_normalization() {
        let s = noise_scaling(
            &bump(),
            &[10, 20, 40, 80, 160],
            20,
            0.1,
            NormConfig::Linear,
            11,
        )
        .unwrap();
        let w = s.w2_slope.unwrap();
        let l = s.l2_slope.unwrap();
        assert!((-1.3..=-0.7).contains(&w), "w2 slope {w}");
        assert!((-0.2..=0.2).contains(&l), "l2 slope {l}");
        assert!(s.to_csv().lines().nth(1) == Some("pieces,w2_squared,l2"));
    }

    #[test]
    fn study_is_reproducible_and_seed_dependent() {
        let f = bump();
        let a = noise_scaling(&f, &[10, 40], 4, 0.1, NormConfig::Linear, 3).unwrap();
        let b = noise_scaling(&f, &[10, 40], 4, 0.1, NormConfig::Linear, 3).unwrap();
        let c = noise_scaling(&f, &[10, 40], 4, 0.1, NormConfig::Linear, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.w2, c.w2);
    }

    #[test]
    fn invalid_piece_lists() {
        let f = bump();
        assert!(noise_scaling(&f, &[], 1, 0.1, NormConfig::Linear, 0).is_err());
        assert!(noise_scaling(&f, &[20, 10], 1, 0.1, NormConfig::Linear, 0).is_err());
        assert!(noise_scaling(&f, &[0, 10], 1, 0.1, NormConfig::Linear, 0).is_err());
        assert!(noise_scaling(&f, &[10], 0, 0.1, NormConfig::Linear, 0).is_err());
        assert!(noise_scaling(&f, &[10], 1, -1.0, NormConfig::Linear, 0).is_err());
    }

    #[test]
    fn constant_noisy_pair_is_degenerate() {
        let ax = TimeAxis::new(100, 0.01).unwrap();
        let zero = Trace::zeros(ax);
        let err = noise_scaling(&zero, &[1], 2, 0.5, NormConfig::Linear, 0).unwrap_err();
        assert!(matches!(err, Error::Degenerate(_)), "{err}");
    }

    #[test]
    fn correlated_noise_trivial_cases() {
        let g = gather();
        let out = correlated_noise(&g, 0.0, 5).unwrap();
        assert_eq!(out.records, g);
        assert_eq!(out.snr_db, f64::INFINITY);

        let ax = TimeAxis::new(50, 0.01).unwrap();
        let zero = vec![ShotRecord::zeros(0, 2, ax)];
        let out = correlated_noise(&zero, 1.0, 5).unwrap();
        let mut rng = rng_for(5, 0);
        let r: Vec<f64> = (0..50).map(|_| rng.gen_range(-1.0..1.0)).collect();
        assert!((out.records[0].traces[0][0] - 0.25 * (2.0 * r[0] + r[1])).abs() < 1e-15);
        assert!((out.records[0].traces[0][10] - 0.25 * (r[9] + 2.0 * r[10] + r[11])).abs() < 1e-15);
        assert_eq!(out.snr_db, f64::NEG_INFINITY);
    }

    #[test]
    fn modulation_follows_the_trace() {
        let g = gather();
        let out = correlated_noise(&g, 0.5, 9).unwrap();
        let mut rng = rng_for(9, 1);
        let tr = &g[1].traces[0];
        let r: Vec<f64> = (0..tr.len()).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let sup = tr.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let j = 17;
        let expected = tr[j] + 0.25 * (r[j - 1] + 2.0 * r[j] + r[j + 1]) * (1.0 + tr[j] / sup);
        assert!((out.records[1].traces[0][j] - expected).abs() < 1e-14);
    }

    #[test]
    fn tuning_hits_target_snr() {
        let g = gather();
        let out = correlated_noise_tuned(&g, 5.98, 21).unwrap();
        assert!((out.snr_db - 5.98).abs() < 0.3, "{}", out.snr_db);
        assert!((out.snr_db - 5.98).abs() < 1e-6);
        let again = correlated_noise(&g, out.amplitude, 21).unwrap();
        assert_eq!(again.records, out.records);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn snr_decreases_with_amplitude(a in 0.01f64..1.0, seed in 0u64..1000) {
            let g = gather();
            let lo = correlated_noise(&g, a, seed).unwrap().snr_db;
            let hi = correlated_noise(&g, 2.0 * a, seed).unwrap().snr_db;
            prop_assert!((lo - hi - 20.0 * 2f64.log10()).abs() < 1e-9);
        }
    }
}
