//! Theory side: the kernel `f_ξ(l)`, the limiting pair correlation density
//! `g₂(ξ)` and its antiderivative `R₂(ξ)`, volume formulas, asymptotic
//! references and length-spectrum recovery.

mod kernel;
mod recover;
mod volume;

pub use kernel::{
    abc_of, alpha_lambda, branch, f_cumulative_n, f_xi_closed_n2, f_xi_closed_n3, f_xi_n,
    f_xi_quadrature, interval_set, kink_locations, Branch, Interval, IntervalUnion,
};
pub use recover::{recover_length_spectrum, RecoverSettings};
pub use volume::{vol_ball, vol_rm_main, vol_rm_numeric, VolumeMain};

use crate::error::{Error, Result};
use crate::quad::{integrate_breaks, QuadSettings};
use crate::util::par_sum_by;

/// `Γ(j/2)` for a positive integer `j`.
fn gamma_half(j: usize) -> f64 {
    if j % 2 == 0 {
        (1..j / 2).map(|i| i as f64).product()
    } else {
        let m = (j - 1) / 2;
        std::f64::consts::PI.sqrt() * (1..=m).map(|i| i as f64 - 0.5).product::<f64>()
    }
}

/// `ω_j = 2π^{j/2}/Γ(j/2)`, the area of the unit sphere in `R^j`.
pub fn sphere_volume(j: usize) -> f64 {
    assert!(j >= 1, "sphere_volume needs j >= 1");
    2.0 * std::f64::consts::PI.powf(j as f64 / 2.0) / gamma_half(j)
}

/// `V_j = ω_j / j`, the volume of the unit ball in `R^j`.
pub fn ball_volume(j: usize) -> f64 {
    sphere_volume(j) / j as f64
}

// Frozen constants bounding f for n = 2..=10, fitted on a coarse (ξ, l)
// grid with a 10% margin:
//   f_ξ(l) ≤ KAPPA1 ξ^{−n} (1 + l)               for ξ ≥ 0.1,
//   f_ξ(l) ≤ KAPPA2 ξ^{n−2} sinh(l)^{−2(n−1)}    for ξ ≤ 2 sinh(l/2).
pub const KAPPA1: [f64; 9] = [1.84, 2.96, 5.19, 9.42, 17.4, 32.5, 62.5, 121.4, 236.3];
pub const KAPPA2: [f64; 9] = [0.70, 0.20, 0.075, 0.031, 0.0137, 0.0063, 0.0030, 0.0014, 0.00068];

fn kappas(n: usize) -> Option<(f64, f64)> {
    (2..=10).contains(&n).then(|| (KAPPA1[n - 2], KAPPA2[n - 2]))
}

/// Everything needed to evaluate `f`, `F`, `g₂` and `R₂` for one lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityContext {
    n: usize,
    v_eff: f64,
    k: f64,
    quad: QuadSettings,
}

impl DensityContext {
    /// `k = ((n−1) V_eff / V_{n−1})^{1/(n−1)}`.
    pub fn new(n: usize, v_eff: f64, quad: QuadSettings) -> Result<Self> {
        if n < 2 {
            return Err(Error::Usage(format!("n must be at least 2, got {n}")));
        }
        if !(v_eff > 0.0) || !v_eff.is_finite() {
            return Err(Error::Usage(format!("effective covolume must be positive, got {v_eff}")));
        }
        let k = ((n as f64 - 1.0) * v_eff / ball_volume(n - 1)).powf(1.0 / (n as f64 - 1.0));
        Ok(DensityContext { n, v_eff, k, quad })
    }

    /// The context whose normalization constant is `k`.
    pub fn with_k(n: usize, k: f64, quad: QuadSettings) -> Result<Self> {
        if n < 2 || !(k > 0.0) {
            return Err(Error::Usage(format!("need n >= 2 and k > 0, got n={n}, k={k}")));
        }
        let v_eff = k.powi(n as i32 - 1) * ball_volume(n - 1) / (n as f64 - 1.0);
        Self::new(n, v_eff, quad)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn v_eff(&self) -> f64 {
        self.v_eff
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn quad(&self) -> &QuadSettings {
        &self.quad
    }

    /// `(n−1) ω_{n−1} / ω_n`
    pub fn prefactor(&self) -> f64 {
        (self.n as f64 - 1.0) * sphere_volume(self.n - 1) / sphere_volume(self.n)
    }

    /// Density of orbit points per unit `t`: `(ω_n / V_eff) sinh^{n−1} t`.
    pub fn count_rate(&self, t: f64) -> f64 {
        sphere_volume(self.n) / self.v_eff * t.sinh().powi(self.n as i32 - 1)
    }
}

pub fn f_xi(xi: f64, l: f64, ctx: &DensityContext) -> Result<f64> {
    f_xi_n(ctx.n, xi, l, &ctx.quad)
}

pub fn f_cumulative(xi: f64, l: f64, ctx: &DensityContext) -> Result<f64> {
    f_cumulative_n(ctx.n, xi, l, &ctx.quad)
}

/// `F_ξ(t) = ((n−1) ω_{n−1} k / ω_n) f_{ξk}(t)`.
pub fn big_f(xi: f64, t: f64, ctx: &DensityContext) -> Result<f64> {
    Ok(ctx.prefactor() * ctx.k * f_xi(xi * ctx.k, t, ctx)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumEntry {
    pub t: f64,
    pub mult: u64,
}

/// Sorted distinct distances `t(M) > 0` of orbit points from the base
/// point, with multiplicities.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceSpectrum {
    entries: Vec<SpectrumEntry>,
    pub source: String,
}

impl DistanceSpectrum {
    pub fn new(entries: Vec<SpectrumEntry>, source: impl Into<String>) -> Result<Self> {
        for w in entries.windows(2) {
            if !(w[1].t > w[0].t) {
                return Err(Error::InvariantViolation(format!(
                    "spectrum not strictly increasing at t={}",
                    w[1].t
                )));
            }
        }
        if let Some(e) = entries.iter().find(|e| !(e.t > 1e-9) || e.mult == 0) {
            return Err(Error::InvariantViolation(format!(
                "spectrum entry t={} mult={} not allowed",
                e.t, e.mult
            )));
        }
        Ok(DistanceSpectrum {
            entries,
            source: source.into(),
        })
    }

    /// Sorts and merges entries whose `t` agree within `tol`.
    pub fn from_unsorted(mut raw: Vec<SpectrumEntry>, tol: f64, source: impl Into<String>) -> Result<Self> {
        raw.sort_by(|a, b| a.t.total_cmp(&b.t));
        let mut out: Vec<SpectrumEntry> = Vec::with_capacity(raw.len());
        for e in raw {
            match out.last_mut() {
                Some(last) if (e.t - last.t).abs() <= tol => last.mult += e.mult,
                _ => out.push(e),
            }
        }
        Self::new(out, source)
    }

    pub fn entries(&self) -> &[SpectrumEntry] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// Largest `‖M‖ = √(2 cosh t)` in the spectrum.
    pub fn max_norm(&self) -> Option<f64> {
        self.entries.last().map(|e| norm_of(e.t))
    }
}

/// `‖M‖ = √(2 cosh t(M))`.
pub fn norm_of(t: f64) -> f64 {
    (2.0 * t.cosh()).sqrt()
}

/// A truncated lattice sum together with an estimate of what was cut off.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryValue {
    pub value: f64,
    pub tail_estimate: f64,
    /// Entries included in the sum.
    pub terms: usize,
}

fn truncate<'a>(spec: &'a DistanceSpectrum, truncation: Option<f64>) -> Result<(&'a [SpectrumEntry], f64)> {
    let entries = spec.entries();
    let Some(first) = entries.first() else {
        return Ok((entries, 0.0));
    };
    let t_cap = match truncation {
        None => entries.last().map(|e| e.t).unwrap_or(0.0),
        Some(norm) => {
            if !(norm >= norm_of(first.t)) {
                return Err(Error::Precondition(format!(
                    "truncation ‖M‖ ≤ {norm} excludes the whole spectrum (smallest norm {})",
                    norm_of(first.t)
                )));
            }
            (norm * norm / 2.0).acosh()
        }
    };
    let end = entries.partition_point(|e| e.t <= t_cap);
    Ok((&entries[..end], t_cap))
}

/// Upper bound for `f_x(l)` from the frozen constants.
fn f_bound(n: usize, x: f64, l: f64) -> Option<f64> {
    let (k1, k2) = kappas(n)?;
    let c = 2.0 * (0.5 * l).sinh();
    let m = n as i32 - 1;
    Some(if x <= c {
        k2 * x.powi(n as i32 - 2) * l.sinh().powi(-2 * m)
    } else {
        k1 * x.powi(-(n as i32)) * (1.0 + l)
    })
}

/// Upper bound for `F(x, l)` obtained by integrating [`f_bound`] in `x`.
fn big_cumulative_bound(n: usize, x: f64, l: f64) -> Option<f64> {
    let (k1, k2) = kappas(n)?;
    let c = 2.0 * (0.5 * l).sinh();
    let m = n as i32 - 1;
    let nm = n as f64 - 1.0;
    let bpow = l.sinh().powi(-2 * m);
    Some(if x <= c {
        k2 * x.powi(m) * bpow / nm
    } else {
        k2 * c.powi(m) * bpow / nm + k1 * (1.0 + l) * (c.powi(-m) - x.powi(-m)) / nm
    })
}

/// `∫_{t_cut}^∞ rate(t)·bound(t) dt` by quadrature over a range where the
/// integrand decays like `e^{−(n−1)t}`.
fn tail_integral<B: Fn(f64) -> Option<f64>>(ctx: &DensityContext, t_cut: f64, knee: f64, bound: B) -> f64 {
    if bound(t_cut + 1.0).is_none() {
        return f64::NAN;
    }
    let end = t_cut.max(knee) + 60.0 / (ctx.n as f64 - 1.0);
    let mut pts = vec![t_cut];
    if knee > t_cut {
        pts.push(knee);
    }
    pts.push(end);
    let settings = QuadSettings::new(0.0, 1e-6, 400).expect("valid settings");
    let n = ctx.n;
    let integrand = |t: f64| {
        // sinh^{n−1} t times the bound, with the large powers combined.
        let rate = sphere_volume(n) / ctx.v_eff;
        match bound(t) {
            Some(b) if b > 0.0 => rate * (b.ln() + (n as f64 - 1.0) * t.sinh().ln()).exp(),
            _ => 0.0,
        }
    };
    integrate_breaks(integrand, &pts, &settings)
        .map(|q| q.value)
        .unwrap_or(f64::NAN)
}

/// `g₂(ξ) = ((n−1) ω_{n−1} k / ω_n) Σ mult · f_{ξk}(t(M))` over entries with
/// `‖M‖ ≤ truncation` (default: the whole spectrum).
pub fn g2_theoretical(
    xi: f64,
    spec: &DistanceSpectrum,
    ctx: &DensityContext,
    truncation: Option<f64>,
) -> Result<TheoryValue> {
    if !(xi > 0.0) {
        return Err(Error::Usage(format!("ξ must be positive, got {xi}")));
    }
    if spec.is_empty() {
        return Ok(TheoryValue {
            value: 0.0,
            tail_estimate: 0.0,
            terms: 0,
        });
    }
    let (entries, t_cut) = truncate(spec, truncation)?;
    let x = xi * ctx.k;
    let errs = std::sync::Mutex::new(None);
    let sum = par_sum_by(entries, |e| match f_xi(x, e.t, ctx) {
        Ok(v) => e.mult as f64 * v,
        Err(err) => {
            errs.lock().unwrap().get_or_insert(err);
            f64::NAN
        }
    });
    if let Some(err) = errs.into_inner().unwrap() {
        return Err(err);
    }
    let pre = ctx.prefactor() * ctx.k;
    let knee = 2.0 * (0.5 * x).asinh();
    let tail = pre * tail_integral(ctx, t_cut, knee, |t| f_bound(ctx.n, x, t));
    Ok(TheoryValue {
        value: pre * sum,
        tail_estimate: tail,
        terms: entries.len(),
    })
}

/// `R₂(ξ) = ((n−1) ω_{n−1} / ω_n) Σ mult · F(ξk, t(M))`.
pub fn r2_theoretical(
    xi: f64,
    spec: &DistanceSpectrum,
    ctx: &DensityContext,
    truncation: Option<f64>,
) -> Result<TheoryValue> {
    if !(xi >= 0.0) {
        return Err(Error::Usage(format!("ξ must be nonnegative, got {xi}")));
    }
    if spec.is_empty() || xi == 0.0 {
        truncate(spec, truncation)?;
        return Ok(TheoryValue {
            value: 0.0,
            tail_estimate: 0.0,
            terms: 0,
        });
    }
    let (entries, t_cut) = truncate(spec, truncation)?;
    let x = xi * ctx.k;
    let errs = std::sync::Mutex::new(None);
    let sum = par_sum_by(entries, |e| match f_cumulative(x, e.t, ctx) {
        Ok(v) => e.mult as f64 * v,
        Err(err) => {
            errs.lock().unwrap().get_or_insert(err);
            f64::NAN
        }
    });
    if let Some(err) = errs.into_inner().unwrap() {
        return Err(err);
    }
    let pre = ctx.prefactor();
    let knee = 2.0 * (0.5 * x).asinh();
    let tail = pre * tail_integral(ctx, t_cut, knee, |t| big_cumulative_bound(ctx.n, x, t));
    Ok(TheoryValue {
        value: pre * sum,
        tail_estimate: tail,
        terms: entries.len(),
    })
}

/// `g₂(0) = (V/π) Σ mult/(e^{2t} − 1)` for `n = 2`. The tail bound beyond
/// the largest entry is `e^{−t_max}`, the same sum against the continuous
/// count rate.
pub fn g2_zero_limit_n2(spec: &DistanceSpectrum, v_eff: f64, n: usize) -> Result<TheoryValue> {
    if n != 2 {
        return Err(Error::Usage(format!("the ξ → 0 limit formula is for n = 2, got n = {n}")));
    }
    if spec.is_empty() {
        return Ok(TheoryValue {
            value: 0.0,
            tail_estimate: 0.0,
            terms: 0,
        });
    }
    let sum = par_sum_by(spec.entries(), |e| e.mult as f64 / (2.0 * e.t).exp_m1());
    let t_max = spec.entries().last().map(|e| e.t).unwrap_or(0.0);
    Ok(TheoryValue {
        value: v_eff / std::f64::consts::PI * sum,
        tail_estimate: (-t_max).exp(),
        terms: spec.len(),
    })
}

/// Result of [`integral_f_over_g`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupIntegral {
    pub value: f64,
    pub tail_estimate: f64,
    pub cutoff: f64,
}

/// `∫_G f_ξ(t(g)) dg = ω_n ∫₀^∞ f_ξ(l) sinh^{n−1}(l) dl`, truncated at an
/// `L` beyond which the decay bound is negligible.
pub fn integral_f_over_g(xi: f64, ctx: &DensityContext) -> Result<GroupIntegral> {
    if !(xi > 0.0) {
        return Err(Error::Usage(format!("ξ must be positive, got {xi}")));
    }
    let n = ctx.n;
    let m = n as f64 - 1.0;
    let omega = sphere_volume(n);
    let (_, k2) = kappas(n).unwrap_or((0.0, 1.0));
    let l_small = 2.0 * (0.5 * xi).asinh();
    let reference = omega * xi.powi(n as i32 - 2) / (m * m);
    // ω_n κ₂ ξ^{n−2} ∫_L^∞ sinh^{−(n−1)} ≤ ω_n κ₂ ξ^{n−2} 2^{n−1} e^{−(n−1)L} / ((n−1)(1−e^{−2L})^{n−1})
    let tail_at = |l: f64| {
        omega * k2 * xi.powi(n as i32 - 2) * 2f64.powf(m) * (-m * l).exp()
            / (m * (1.0 - (-2.0 * l).exp()).powf(m))
    };
    let mut cutoff = l_small.max(1.0);
    while tail_at(cutoff) > 1e-12 * reference {
        cutoff += 0.5;
    }
    let mut pts = vec![0.0, xi.asinh(), l_small];
    pts.push(cutoff);
    let err = std::cell::RefCell::new(None);
    let integrand = |l: f64| {
        if l <= 0.0 {
            return 0.0;
        }
        match f_xi(xi, l, ctx) {
            Ok(v) => v * l.sinh().powi(n as i32 - 1),
            Err(e) => {
                err.borrow_mut().get_or_insert(e);
                0.0
            }
        }
    };
    let settings = ctx.quad.with_max_subdiv(ctx.quad.max_subdiv.max(1000));
    let q = integrate_breaks(integrand, &pts, &settings);
    if let Some(e) = err.into_inner() {
        return Err(e);
    }
    let q = q?;
    Ok(GroupIntegral {
        value: omega * q.value,
        tail_estimate: tail_at(cutoff),
        cutoff,
    })
}
