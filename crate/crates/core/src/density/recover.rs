//! Peeling the length spectrum off a pair correlation density.
//!
//! Each distance `t` contributes a term to `g₂` that is not `C¹` at
//! `ξk = 2 sinh(t/2)` and `ξk = sinh t`. The smallest such point belongs to
//! the smallest `t`; once it is located, the corresponding term is
//! subtracted and the search repeats.

use super::{big_f, DensityContext, DistanceSpectrum, SpectrumEntry};
use crate::error::{Error, Result};
use crate::quad::QuadSettings;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoverSettings {
    pub xi_min: f64,
    pub xi_max: f64,
    /// Points of the geometric detection grid.
    pub grid_points: usize,
    /// A spike must exceed this multiple of the local median.
    pub spike_factor: f64,
    /// Half-width of the median window, in grid points.
    pub window: usize,
    /// Largest allowed distance of a multiplicity ratio from an integer.
    pub mult_tolerance: f64,
}

impl Default for RecoverSettings {
    fn default() -> Self {
        RecoverSettings {
            xi_min: 0.05,
            xi_max: 20.0,
            grid_points: 2000,
            spike_factor: 10.0,
            window: 20,
            mult_tolerance: 0.1,
        }
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

/// Indices `i` where the scaled second difference spikes.
fn detect(xs: &[f64], r: &[f64], floor: f64, s: &RecoverSettings) -> Vec<usize> {
    let n = xs.len();
    let mut sd = vec![0.0; n];
    for i in 1..n - 1 {
        let h1 = xs[i] - xs[i - 1];
        let h2 = xs[i + 1] - xs[i];
        let d2 = 2.0 * ((r[i + 1] - r[i]) / h2 - (r[i] - r[i - 1]) / h1) / (h1 + h2);
        let h = 0.5 * (h1 + h2);
        sd[i] = d2.abs() * h * h;
    }
    let mut out = Vec::new();
    for i in 2..n - 2 {
        if sd[i] <= floor {
            continue;
        }
        let lo = i.saturating_sub(2).max(1);
        let hi = (i + 2).min(n - 2);
        if (lo..=hi).any(|j| sd[j] > sd[i] || (sd[j] == sd[i] && j < i)) {
            continue;
        }
        let wl = i.saturating_sub(s.window).max(1);
        let wh = (i + s.window).min(n - 2);
        let bg: Vec<f64> = (wl..=wh).filter(|&j| j + 3 < i || j > i + 3).map(|j| sd[j]).collect();
        if sd[i] > s.spike_factor * median(bg) {
            out.push(i);
        }
    }
    out
}

/// Zooms in on the kink near `center` until the grid step is below 1e−9.
fn refine<R: Fn(f64) -> f64>(r: &R, mut center: f64, mut h: f64) -> f64 {
    while h > 1e-9 * center.max(1.0) {
        let xs: Vec<f64> = (-10..=10).map(|j| center + j as f64 * h).collect();
        let vs: Vec<f64> = xs.iter().map(|&x| r(x)).collect();
        let mut best = 10;
        let mut best_v = -1.0;
        for j in 1..20 {
            let d = (vs[j + 1] - 2.0 * vs[j] + vs[j - 1]).abs();
            if d > best_v {
                best_v = d;
                best = j;
            }
        }
        center = xs[best];
        h /= 5.0;
    }
    center
}

/// Jump of the one-sided difference quotients of `r` at `x`.
fn slope_jump<R: Fn(f64) -> f64>(r: &R, x: f64) -> f64 {
    let d = 1e-6 * x.max(1.0);
    (r(x + 2.0 * d) - r(x + d)) / d - (r(x - d) - r(x - 2.0 * d)) / d
}

/// Recovers up to `depth` distances (with multiplicities) from samples of
/// `g₂`. Each step locates the smallest remaining kink, decides whether it
/// is the `2 sinh(t/2)` or the `sinh t` kink of its term by looking for the
/// partner kink, reads the multiplicity off the ratio of slope jumps against
/// a single term, and subtracts the term.
pub fn recover_length_spectrum<G: Fn(f64) -> f64 + Sync>(
    g2: &G,
    v_eff: f64,
    n: usize,
    depth: usize,
    settings: &RecoverSettings,
) -> Result<DistanceSpectrum> {
    if depth == 0 {
        return Err(Error::Usage("depth must be at least 1".into()));
    }
    if !(settings.xi_min > 0.0 && settings.xi_max > settings.xi_min) || settings.grid_points < 10 {
        return Err(Error::Usage("bad recovery grid".into()));
    }
    let ctx = DensityContext::new(n, v_eff, QuadSettings::default())?;
    let k = ctx.k();
    let np = settings.grid_points;
    let ratio = (settings.xi_max / settings.xi_min).ln() / (np - 1) as f64;
    let xs: Vec<f64> = (0..np).map(|i| settings.xi_min * (ratio * i as f64).exp()).collect();
    let mut vals: Vec<f64> = xs.iter().map(|&x| g2(x)).collect();
    let scale = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if !scale.is_finite() {
        return Err(Error::Numerical {
            msg: "g₂ samples are not finite".into(),
            achieved: f64::NAN,
        });
    }
    let floor = 1e-9 * scale;
    let mut found: Vec<SpectrumEntry> = Vec::new();
    let term = |x: f64, t: f64| big_f(x, t, &ctx).unwrap_or(f64::NAN);
    for _ in 0..depth {
        let residual = |x: f64| g2(x) - found.iter().map(|e| e.mult as f64 * term(x, e.t)).sum::<f64>();
        let spikes = detect(&xs, &vals, floor, settings);
        let Some(&i0) = spikes.first() else {
            if found.is_empty() {
                return Err(Error::Exhausted(format!(
                    "no kink on the grid [{}, {}]",
                    settings.xi_min, settings.xi_max
                )));
            }
            log::warn!("only {} of {depth} distances recovered", found.len());
            break;
        };
        let h = xs[i0 + 1] - xs[i0];
        let x0 = refine(&residual, xs[i0], h);
        let t_c = 2.0 * (0.5 * k * x0).asinh();
        let t_b = (k * x0).asinh();
        let partner = t_c.sinh() / k;
        let t = if partner > settings.xi_max {
            log::warn!("partner kink of t={t_c} lies beyond the grid; assuming the 2 sinh(t/2) kink");
            t_c
        } else if spikes.iter().any(|&j| {
            let hj = xs[(j + 1).min(np - 1)] - xs[j - 1];
            (xs[j] - partner).abs() <= 2.0 * hj
        }) {
            t_c
        } else if 2.0 * (0.5 * t_b).sinh() / k < settings.xi_min {
            t_b
        } else {
            return Err(Error::Ambiguous(format!(
                "kink at ξ={x0} has no partner at ξ={partner}"
            )));
        };
        let jr = slope_jump(&residual, x0);
        let ju = slope_jump(&|x| term(x, t), x0);
        let ratio = jr / ju;
        let mult = ratio.round();
        if !(mult >= 1.0) || (ratio - mult).abs() > settings.mult_tolerance {
            return Err(Error::Ambiguous(format!(
                "kink at ξ={x0} (t={t}) gives non-integer multiplicity ratio {ratio}"
            )));
        }
        let mult = mult as u64;
        for (v, &x) in vals.iter_mut().zip(&xs) {
            *v -= mult as f64 * term(x, t);
        }
        found.push(SpectrumEntry { t, mult });
    }
    DistanceSpectrum::from_unsorted(found, 1e-9, "recovered")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::g2_theoretical;

    fn synthetic(entries: &[(f64, u64)]) -> impl Fn(f64) -> f64 + Sync {
        let ctx = DensityContext::with_k(2, 1.0, QuadSettings::default()).unwrap();
        let spec = DistanceSpectrum::new(
            entries.iter().map(|&(t, mult)| SpectrumEntry { t, mult }).collect(),
            "synthetic",
        )
        .unwrap();
        move |x| g2_theoretical(x, &spec, &ctx, None).unwrap().value
    }

    #[test]
    fn single_distance() {
        let g = synthetic(&[(1.5, 1)]);
        let s = recover_length_spectrum(&g, 2.0, 2, 1, &RecoverSettings::default()).unwrap();
        assert_eq!(s.len(), 1);
        assert!((s.entries()[0].t - 1.5).abs() < 1e-3);
        assert_eq!(s.entries()[0].mult, 1);
    }

    #[test]
    fn three_distances_in_order() {
        let g = synthetic(&[(1.2, 1), (1.9, 2), (2.3, 3)]);
        let s = recover_length_spectrum(&g, 2.0, 2, 3, &RecoverSettings::default()).unwrap();
        let got: Vec<(f64, u64)> = s.entries().iter().map(|e| (e.t, e.mult)).collect();
        assert_eq!(got.len(), 3);
        for (g, w) in got.iter().zip([(1.2, 1), (1.9, 2), (2.3, 3)]) {
            assert!((g.0 - w.0).abs() < 1e-3, "{got:?}");
            assert_eq!(g.1, w.1);
        }
    }

    #[test]
    fn zero_function_is_exhausted() {
        let r = recover_length_spectrum(&|_x: f64| 0.0, 2.0, 2, 1, &RecoverSettings::default());
        assert!(matches!(r, Err(Error::Exhausted(_))));
    }
}
