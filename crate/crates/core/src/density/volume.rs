//! Haar volumes: the norm ball `B_Q` and the pair region `R_M(Q, ξ)`.

use super::{f_cumulative, sphere_volume, DensityContext};
use crate::error::{Error, Result};
use crate::quad::{integrate, integrate_breaks, Quadrature, QuadSettings};

/// `vol(B_Q) = ω_n ∫₀^{arccosh(Q²/2)} sinh^{n−1} t dt`.
pub fn vol_ball(q: f64, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::Usage(format!("n must be at least 2, got {n}")));
    }
    let half = q * q / 2.0;
    if !(half >= 1.0) {
        return Err(Error::Usage(format!("need Q² >= 2, got Q = {q}")));
    }
    let big_t = half.acosh();
    let m = n - 1;
    let integral = if big_t < 1.0 {
        integrate(|t: f64| t.sinh().powi(m as i32), 0.0, big_t, &QuadSettings::default())?.value
    } else {
        let (s, c) = (big_t.sinh(), half);
        // I_j = sinh^{j−1}T cosh T / j − (j−1)/j I_{j−2}
        let mut even = big_t;
        let mut odd = half - 1.0;
        let mut j = 2;
        while j <= m {
            let jf = j as f64;
            let next = s.powi(j as i32 - 1) * c / jf - (jf - 1.0) / jf * if j % 2 == 0 { even } else { odd };
            if j % 2 == 0 {
                even = next;
            } else {
                odd = next;
            }
            j += 1;
        }
        if m % 2 == 0 {
            even
        } else {
            odd
        }
    };
    Ok(sphere_volume(n) * integral)
}

/// Main term of `vol(R_M(Q, ξ))` together with the size of the error term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolumeMain {
    pub value: f64,
    /// `(ξ^{n−1} + ξ^{−(n−1)}) ‖M‖^{2(n−1)} Q^{2(n−1)²/(n+1)}`, unit constant.
    pub error_scale: f64,
}

fn check_region(q: f64, xi: f64, t_m: f64) -> Result<()> {
    if !(q * q >= 2.0) {
        return Err(Error::Usage(format!("need Q² >= 2, got Q = {q}")));
    }
    if !(xi > 0.0) || !(t_m > 0.0) {
        return Err(Error::Usage(format!("need ξ > 0 and t(M) > 0, got {xi}, {t_m}")));
    }
    if !(xi / (q * q) < 0.01) {
        return Err(Error::Precondition(format!(
            "ξ/Q² = {} is not small (limit 0.01)",
            xi / (q * q)
        )));
    }
    Ok(())
}

/// `ω_{n−1} Q^{2(n−1)} / 2^{n−1} · F(ξ, t(M))`.
pub fn vol_rm_main(q: f64, xi: f64, t_m: f64, ctx: &DensityContext) -> Result<VolumeMain> {
    check_region(q, xi, t_m)?;
    let n = ctx.n();
    let m = n as i32 - 1;
    let value = sphere_volume(n - 1) * q.powi(2 * m) / 2f64.powi(m) * f_cumulative(xi, t_m, ctx)?;
    let norm_sq = 2.0 * t_m.cosh();
    let error_scale = (xi.powi(m) + xi.powi(-m))
        * norm_sq.powi(m)
        * q.powf(2.0 * (m * m) as f64 / (n as f64 + 1.0));
    Ok(VolumeMain { value, error_scale })
}

/// `∫ sin^m v dv` over `[a, b] ⊂ [0, π]`.
fn sin_power_integral(m: usize, a: f64, b: f64) -> f64 {
    if !(b > a) {
        return 0.0;
    }
    match m {
        0 => b - a,
        1 => 2.0 * (0.5 * (a + b)).sin() * (0.5 * (b - a)).sin(),
        _ => {
            let s = QuadSettings::new(1e-15, 1e-12, 200).expect("valid settings");
            integrate(|v: f64| v.sin().powi(m as i32), a, b, &s)
                .map(|q| q.value)
                .unwrap_or(f64::NAN)
        }
    }
}

/// The pair region in `(t, v)` coordinates: `2 cosh t ≤ Q²`,
/// `2(A_M cosh t + B_M cos v sinh t) ≤ Q²` and the angle condition
/// `B_M sin v < tan(2ξ/Q²)(A_M sinh t + B_M cos v cosh t)`.
struct Region {
    half_q2: f64,
    a_m: f64,
    b_m: f64,
    tau: f64,
    n: usize,
}

struct Slice {
    /// Lower limit from the norm condition on `gM`; `None` when empty.
    v0: Option<f64>,
    /// `(a, b)` with the angle condition `v < a or v > b`; `None` when it
    /// holds for every `v`.
    cut: Option<(f64, f64)>,
    /// Auxiliary quantities whose sign changes mark kinks in `t`.
    kappa: f64,
    c: f64,
}

impl Region {
    fn slice(&self, t: f64) -> Slice {
        let (ch, sh) = (t.cosh(), t.sinh());
        let kappa = (self.half_q2 - self.a_m * ch) / (self.b_m * sh);
        let v0 = if kappa >= 1.0 {
            Some(0.0)
        } else if kappa < -1.0 {
            None
        } else {
            Some(kappa.acos())
        };
        let tc = self.tau * ch;
        let phi = tc.atan();
        let c = self.tau * self.a_m * sh / (self.b_m * (1.0 + tc * tc).sqrt());
        let cut = if c >= 1.0 {
            None
        } else {
            let s = c.asin();
            Some((phi + s, phi + std::f64::consts::PI - s))
        };
        Slice { v0, cut, kappa, c }
    }

    fn inner(&self, t: f64) -> f64 {
        let pi = std::f64::consts::PI;
        let sl = self.slice(t);
        let Some(v0) = sl.v0 else {
            return 0.0;
        };
        let m = self.n - 2;
        match sl.cut {
            None => sin_power_integral(m, v0, pi),
            Some((a, b)) => {
                sin_power_integral(m, v0, a.min(pi)) + sin_power_integral(m, b.max(v0), pi)
            }
        }
    }

    /// Functions of `t` whose zeros are kinks of the inner integral.
    fn markers(&self, t: f64) -> [f64; 6] {
        let sl = self.slice(t);
        let v0 = sl.kappa.clamp(-1.0, 1.0).acos();
        let tc = self.tau * t.cosh();
        let phi = tc.atan();
        let s = sl.c.min(1.0).asin();
        [
            sl.kappa - 1.0,
            sl.kappa + 1.0,
            sl.c - 1.0,
            phi + s - v0,
            phi - s,
            phi + std::f64::consts::PI - s - v0,
        ]
    }
}

fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> f64 {
    let flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if (f(mid) > 0.0) == (flo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `vol(R_M(Q, ξ))` by direct two-dimensional integration of the region
/// `ω_{n−1} ∫∫ χ (sin v)^{n−2} (sinh t)^{n−1} dv dt`, without truncation.
/// The `v`-integral is done exactly per slice; the `t`-integral adaptively
/// with break points at every kink of the slice measure.
pub fn vol_rm_numeric(q: f64, xi: f64, t_m: f64, ctx: &DensityContext) -> Result<Quadrature> {
    check_region(q, xi, t_m)?;
    let n = ctx.n();
    let region = Region {
        half_q2: q * q / 2.0,
        a_m: t_m.cosh(),
        b_m: t_m.sinh(),
        tau: (2.0 * xi / (q * q)).tan(),
        n,
    };
    let t_q = region.half_q2.acosh();
    let mut pts = vec![0.0, t_q];
    let grid = 4000;
    let ts: Vec<f64> = (1..=grid).map(|i| t_q * i as f64 / grid as f64).collect();
    let marks: Vec<[f64; 6]> = ts.iter().map(|&t| region.markers(t)).collect();
    for j in 0..6 {
        for i in 1..grid {
            let (u, w) = (marks[i - 1][j], marks[i][j]);
            if u.is_finite() && w.is_finite() && (u > 0.0) != (w > 0.0) {
                pts.push(bisect(|t| region.markers(t)[j], ts[i - 1], ts[i]));
            }
        }
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let settings = ctx.quad().with_max_subdiv(ctx.quad().max_subdiv.max(4000));
    let settings = QuadSettings {
        rel_tol: settings.rel_tol.max(1e-9),
        // Relative to the whole ball, so near-empty regions still converge.
        abs_tol: 1e-13 * vol_ball(q, n)?.max(f64::MIN_POSITIVE) / sphere_volume(n - 1),
        ..settings
    };
    let mut qres = integrate_breaks(
        |t: f64| region.inner(t) * t.sinh().powi(n as i32 - 1),
        &pts,
        &settings,
    )?;
    let w = sphere_volume(n - 1);
    qres.value *= w;
    qres.error *= w;
    Ok(qres)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::f_cumulative;
    use std::f64::consts::PI;

    fn ctx(n: usize) -> DensityContext {
        DensityContext::with_k(n, 1.0, QuadSettings::default()).unwrap()
    }

    #[test]
    fn ball_volumes() {
        assert!(vol_ball(2f64.sqrt(), 3).unwrap().abs() < 1e-20);
        assert!((vol_ball(2.0, 2).unwrap() - 2.0 * PI).abs() < 1e-12);
        let v = vol_ball(100.0, 2).unwrap();
        assert!((v / (PI * 1e4) - (1.0 - 2.0 / 1e4)).abs() < 1e-12);
        assert!(vol_ball(1.0, 2).is_err());
        // Recursion against quadrature for several n.
        for n in 2..8 {
            for &q in &[1.6, 3.0, 20.0] {
                let t = (q * q / 2.0f64).acosh();
                let quad = integrate(|s: f64| s.sinh().powi(n as i32 - 1), 0.0, t, &QuadSettings::default())
                    .unwrap()
                    .value
                    * sphere_volume(n);
                let v = vol_ball(q, n).unwrap();
                assert!((v - quad).abs() <= 1e-10 * quad, "n={n} Q={q}: {v} {quad}");
            }
        }
        // Leading asymptotics.
        let n = 3;
        let q: f64 = 1e3;
        let lead = sphere_volume(n) / (4.0 * 2.0) * q.powi(4);
        assert!((vol_ball(q, n).unwrap() / lead - 1.0).abs() < 1e-4);
    }

    #[test]
    fn main_term_composes() {
        let c = ctx(2);
        let v = vol_rm_main(100.0, 1.0, 2.0, &c).unwrap();
        let want = 1e4 * f_cumulative(1.0, 2.0, &c).unwrap();
        assert!((v.value - want).abs() < 1e-9 * want);
        assert!(v.error_scale > 0.0);
        assert!(vol_rm_main(100.0, 1e-12, 2.0, &c).unwrap().value < 1e-6);
        assert!(matches!(vol_rm_main(10.0, 1.0, 2.0, &c), Err(Error::Precondition(_))));
    }

    #[test]
    fn numeric_degenerate_limits() {
        let c = ctx(3);
        let v = vol_rm_numeric(10.0, 1e-9, 1.0, &c).unwrap().value;
        assert!(v < 1e-3, "{v}");
        let ball = vol_ball(10.0, 3).unwrap();
        let v = vol_rm_numeric(10.0, 0.5, 1e-9, &c).unwrap().value;
        assert!((v / ball - 1.0).abs() < 1e-6, "{v} {ball}");
    }

    #[test]
    fn numeric_matches_main_term_n2() {
        let c = ctx(2);
        let main = vol_rm_main(100.0, 1.0, 2.0, &c).unwrap().value;
        let num = vol_rm_numeric(100.0, 1.0, 2.0, &c).unwrap().value;
        assert!((main / num - 1.0).abs() < 0.01, "{main} {num}");
    }
}
