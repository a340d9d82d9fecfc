//! The kernel `f_ξ(l)`, its interval sets and the cumulative `F(ξ, l)`.
//!
//! Points of `[−1, 1]` are carried as `(1+y, 1−y)` pairs so that endpoints
//! crowding against `±1` (which happens for small `ξ` and large `l`) keep
//! full relative precision.

use crate::error::{Error, Result};
use crate::quad::{integrate_breaks, QuadSettings};

/// `(A, B, C) = (cosh l, sinh l, 2 sinh(l/2))`.
pub fn abc_of(l: f64) -> Result<(f64, f64, f64)> {
    if !(l > 0.0) || !l.is_finite() {
        return Err(Error::Usage(format!("l must be positive and finite, got {l}")));
    }
    Ok((l.cosh(), l.sinh(), 2.0 * (0.5 * l).sinh()))
}

/// The two values of `ξ` where `ξ ↦ f_ξ(l)` fails to be `C¹`, ascending.
pub fn kink_locations(l: f64) -> Result<(f64, f64)> {
    let (_, b, c) = abc_of(l)?;
    Ok(if c <= b { (c, b) } else { (b, c) })
}

/// Which of the three cases of the interval set applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// `ξ ≤ C`
    Small,
    /// `C < ξ ≤ B`
    Middle,
    /// `ξ > B`
    Large,
}

pub fn branch(xi: f64, l: f64) -> Result<Branch> {
    let (_, b, c) = abc_of(l)?;
    Ok(if xi <= c {
        Branch::Small
    } else if xi <= b {
        Branch::Middle
    } else {
        Branch::Large
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub lo_closed: bool,
    pub hi_closed: bool,
}

impl Interval {
    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn is_empty(&self) -> bool {
        self.hi < self.lo || (self.hi == self.lo && !(self.lo_closed && self.hi_closed))
    }

    pub fn contains(&self, y: f64) -> bool {
        let above = if self.lo_closed { y >= self.lo } else { y > self.lo };
        let below = if self.hi_closed { y <= self.hi } else { y < self.hi };
        above && below
    }
}

/// Sorted, pairwise disjoint intervals in `[−1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalUnion {
    pub intervals: Vec<Interval>,
}

impl IntervalUnion {
    pub fn total_length(&self) -> f64 {
        self.intervals.iter().map(|i| i.len().max(0.0)).sum()
    }

    pub fn contains(&self, y: f64) -> bool {
        self.intervals.iter().any(|i| i.contains(y))
    }
}

/// A point `y ∈ [−1, 1]` stored as `p = 1 + y` and `m = 1 − y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Pt {
    pub p: f64,
    pub m: f64,
}

impl Pt {
    pub const NEG_ONE: Pt = Pt { p: 0.0, m: 2.0 };
    pub const ZERO: Pt = Pt { p: 1.0, m: 1.0 };
    pub const POS_ONE: Pt = Pt { p: 2.0, m: 0.0 };

    pub fn from_p(p: f64) -> Pt {
        Pt { p, m: 2.0 - p }
    }

    pub fn from_m(m: f64) -> Pt {
        Pt { p: 2.0 - m, m }
    }

    pub fn y(self) -> f64 {
        if self.p <= 1.0 {
            self.p - 1.0
        } else {
            1.0 - self.m
        }
    }

    fn from_y(y: f64) -> Pt {
        Pt { p: 1.0 + y, m: 1.0 - y }
    }
}

/// Quantities depending on `l` only.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Kernel {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// `e^{−l}`
    pub em: f64,
    /// `e^{l}`
    pub ep: f64,
    /// `coth l − 1`
    pub cm1: f64,
}

impl Kernel {
    pub fn new(l: f64) -> Result<Kernel> {
        let (a, b, c) = abc_of(l)?;
        Ok(Kernel {
            a,
            b,
            c,
            em: (-l).exp(),
            ep: l.exp(),
            cm1: 2.0 / (2.0 * l).exp_m1(),
        })
    }

    /// `y + coth l`
    pub fn y_coth(&self, q: Pt) -> f64 {
        if q.p <= 1.0 {
            q.p + self.cm1
        } else {
            (2.0 - q.m) + self.cm1
        }
    }

    /// `A + B y`
    pub fn a_by(&self, q: Pt) -> f64 {
        if q.p <= 1.0 {
            self.em + self.b * q.p
        } else {
            self.ep - self.b * q.m
        }
    }
}

/// Endpoints of the interval sets for one `(ξ, l)`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Ends {
    pub branch: Branch,
    pub lam_m: Pt,
    pub lam_p: Pt,
    pub alpha: Pt,
    pub neg_alpha: Pt,
    /// `(1 − A)/B = −tanh(l/2)`
    pub mid: Pt,
}

impl Ends {
    pub fn new(xi: f64, k: &Kernel) -> Ends {
        let branch = if xi <= k.c {
            Branch::Small
        } else if xi <= k.b {
            Branch::Middle
        } else {
            Branch::Large
        };
        let mid = Pt::from_p(2.0 * k.em / (1.0 + k.em));
        if branch == Branch::Large {
            return Ends {
                branch,
                lam_m: mid,
                lam_p: mid,
                alpha: mid,
                neg_alpha: mid,
                mid,
            };
        }
        let xi2 = xi * xi;
        let s = ((k.b - xi) * (k.b + xi)).max(0.0).sqrt();
        let d = k.b - xi2 * k.em + s;
        let one_minus_alpha = xi2 / (k.b * (k.b + s));
        Ends {
            branch,
            lam_m: Pt::from_p(xi2 * k.em * k.em / (k.b * d)),
            lam_p: Pt::from_p(d / (k.b * (1.0 + xi2))),
            alpha: Pt::from_m(one_minus_alpha),
            neg_alpha: Pt::from_p(one_minus_alpha),
            mid,
        }
    }

    /// The intervals making up `I(ξ, l)`.
    fn f_pieces(&self) -> Vec<(Pt, Pt)> {
        match self.branch {
            Branch::Small => vec![(Pt::NEG_ONE, self.lam_m), (self.alpha, Pt::POS_ONE)],
            Branch::Middle => vec![
                (Pt::NEG_ONE, self.lam_m),
                (self.lam_p, self.neg_alpha),
                (self.alpha, Pt::POS_ONE),
            ],
            Branch::Large => vec![(Pt::NEG_ONE, Pt::ZERO), (Pt::ZERO, Pt::POS_ONE)],
        }
    }

    /// `(I₁, I₂)` for the cumulative function.
    fn cumulative_pieces(&self) -> (Vec<(Pt, Pt)>, Vec<(Pt, Pt)>) {
        match self.branch {
            Branch::Small => (
                vec![(Pt::NEG_ONE, self.lam_m)],
                vec![(self.alpha, Pt::POS_ONE)],
            ),
            Branch::Middle => (
                vec![(Pt::NEG_ONE, self.lam_m), (self.lam_p, self.mid)],
                vec![(self.mid, self.neg_alpha), (self.alpha, Pt::POS_ONE)],
            ),
            Branch::Large => (vec![(Pt::NEG_ONE, self.mid)], vec![(self.mid, Pt::POS_ONE)]),
        }
    }
}

/// `I(ξ, l)`: `[−1, λ₋) ∪ (α, 1]` for `ξ ≤ C`, `[−1, λ₋) ∪ (λ₊, −α) ∪ (α, 1]`
/// for `C < ξ ≤ B`, and `[−1, 1]` for `ξ > B`.
pub fn interval_set(xi: f64, l: f64) -> Result<IntervalUnion> {
    if !(xi > 0.0) {
        return Err(Error::Usage(format!("ξ must be positive, got {xi}")));
    }
    let k = Kernel::new(l)?;
    let e = Ends::new(xi, &k);
    let iv = |lo: Pt, hi: Pt, lc: bool, hc: bool| Interval {
        lo: lo.y(),
        hi: hi.y(),
        lo_closed: lc,
        hi_closed: hc,
    };
    let intervals = match e.branch {
        Branch::Large => vec![iv(Pt::NEG_ONE, Pt::POS_ONE, true, true)],
        Branch::Small => vec![
            iv(Pt::NEG_ONE, e.lam_m, true, false),
            iv(e.alpha, Pt::POS_ONE, false, true),
        ],
        Branch::Middle => {
            let (a, b, c, d) = (e.lam_m.y(), e.lam_p.y(), e.neg_alpha.y(), e.alpha.y());
            if !(a <= b && b <= c && c <= d) {
                return Err(Error::InvariantViolation(format!(
                    "interval endpoints out of order at ξ={xi}, l={l}: {a} {b} {c} {d}"
                )));
            }
            vec![
                iv(Pt::NEG_ONE, e.lam_m, true, false),
                iv(e.lam_p, e.neg_alpha, false, false),
                iv(e.alpha, Pt::POS_ONE, false, true),
            ]
        }
    };
    Ok(IntervalUnion { intervals })
}

/// `α = √(1 − ξ²/B²)` and `λ± = (−ξ²A/B ± α)/(ξ²+1)`, for `ξ ≤ B`.
pub fn alpha_lambda(xi: f64, l: f64) -> Result<(f64, f64, f64)> {
    let k = Kernel::new(l)?;
    if !(xi > 0.0) || xi > k.b {
        return Err(Error::Usage(format!("need 0 < ξ ≤ sinh l, got ξ={xi}, l={l}")));
    }
    let e = Ends::new(xi, &k);
    Ok((e.alpha.y(), e.lam_m.y(), e.lam_p.y()))
}

/// Integrates `g` over the `y`-interval `[lo, hi]`, choosing a variable that
/// resolves endpoint behaviour at `±1` and the near-singularity of
/// `(y + coth l)^{−1}` close to `−1` for large `l`.
pub(crate) fn integrate_y<G: Fn(Pt) -> f64>(
    g: G,
    lo: Pt,
    hi: Pt,
    cm1: f64,
    settings: &QuadSettings,
) -> Result<f64> {
    if !(hi.p > lo.p || hi.m < lo.m) {
        return Ok(0.0);
    }
    let geometric = |lo_v: f64, hi_v: f64, scale: f64, root: bool| -> Vec<f64> {
        let mut pts = vec![lo_v];
        if cm1 < 1e-3 {
            for j in -8..40 {
                let mut v = scale * 10f64.powf(0.5 * j as f64);
                if root {
                    v = v.sqrt();
                }
                if v > lo_v && v < hi_v {
                    pts.push(v);
                }
            }
        }
        pts.push(hi_v);
        pts
    };
    let q = if lo.p == 0.0 {
        let top = hi.p.sqrt();
        let pts = geometric(0.0, top, cm1, true);
        integrate_breaks(|u: f64| 2.0 * u * g(Pt::from_p(u * u)), &pts, settings)?
    } else if hi.m == 0.0 {
        let top = lo.m.sqrt();
        integrate_breaks(|u: f64| 2.0 * u * g(Pt::from_m(u * u)), &[0.0, top], settings)?
    } else if lo.p < 0.5 {
        let pts = geometric(lo.p, hi.p, cm1, false);
        integrate_breaks(|p: f64| g(Pt::from_p(p)), &pts, settings)?
    } else if hi.m < 0.5 {
        integrate_breaks(|m: f64| g(Pt::from_m(m)), &[hi.m, lo.m], settings)?
    } else {
        integrate_breaks(|y: f64| g(Pt::from_y(y)), &[lo.y(), hi.y()], settings)?
    };
    Ok(q.value)
}

/// Tolerances for an integral that is divided by `scale` afterwards.
fn scaled(settings: &QuadSettings, scale: f64) -> QuadSettings {
    QuadSettings {
        abs_tol: settings.abs_tol * scale,
        ..*settings
    }
}

/// `f_ξ(l)` by quadrature of its defining integral, for any `n ≥ 2`.
pub fn f_xi_quadrature(n: usize, xi: f64, l: f64, settings: &QuadSettings) -> Result<f64> {
    check_args(n, xi)?;
    let k = Kernel::new(l)?;
    let e = Ends::new(xi, &k);
    let scale = xi.powi(n as i32);
    let qs = scaled(settings, scale);
    let g = |q: Pt| (q.p * q.m).powi(n as i32 - 2) * k.y_coth(q).powi(-(n as i32 - 1));
    let mut total = 0.0;
    for (lo, hi) in e.f_pieces() {
        total += integrate_y(g, lo, hi, k.cm1, &qs)?;
    }
    Ok(total / scale)
}

fn check_args(n: usize, xi: f64) -> Result<()> {
    if n < 2 {
        return Err(Error::Usage(format!("n must be at least 2, got {n}")));
    }
    if !(xi > 0.0) || !xi.is_finite() {
        return Err(Error::Usage(format!("ξ must be positive and finite, got {xi}")));
    }
    Ok(())
}

/// `l coth l − 1`, accurate for small `l`.
fn l_coth_minus_one(l: f64) -> f64 {
    if l < 0.1 {
        let l2 = l * l;
        l2 * (1.0 / 3.0 - l2 * (1.0 / 45.0 - l2 * (2.0 / 945.0 - l2 / 4725.0)))
    } else {
        l / l.tanh() - 1.0
    }
}

/// Closed form of `f_ξ(l)` for `n = 2`.
pub fn f_xi_closed_n2(xi: f64, l: f64) -> Result<f64> {
    check_args(2, xi)?;
    let k = Kernel::new(l)?;
    let xi2 = xi * xi;
    let bracket = if xi > k.b {
        l
    } else {
        let s = ((k.b - xi) * (k.b + xi)).sqrt();
        let delta = xi2 / (k.b + s);
        // log(A + s) = l + log1p(−δ e^{−l}) with δ = B − s
        let log_as_minus_l = (-delta * k.em).ln_1p();
        if xi <= k.c {
            -log_as_minus_l
        } else {
            xi2.ln_1p() - l - 2.0 * log_as_minus_l
        }
    };
    Ok(2.0 / xi2 * bracket)
}

/// Closed form of `f_ξ(l)` for `n = 3`. Inside the small branch with
/// `ξ/B < 1e−3` the expression cancels badly and quadrature is used.
pub fn f_xi_closed_n3(xi: f64, l: f64, settings: &QuadSettings) -> Result<f64> {
    check_args(3, xi)?;
    let k = Kernel::new(l)?;
    let xi2 = xi * xi;
    let pre = 4.0 / (xi2 * xi);
    if xi > k.b {
        return Ok(pre * l_coth_minus_one(l));
    }
    if xi <= k.c && xi < 1e-3 * k.b {
        return f_xi_quadrature(3, xi, l, settings);
    }
    let s = ((k.b - xi) * (k.b + xi)).sqrt();
    let delta = xi2 / (k.b + s);
    let bracket = if xi <= k.c {
        let log_term = (delta / (k.a + s)).ln_1p();
        let rest = (xi2 * k.em - (xi2 + 2.0) * delta) / (2.0 * k.b * (xi2 + 1.0));
        k.a / k.b * log_term + rest
    } else {
        let log_term = ((k.a + k.b) * (xi2 + 1.0) / ((k.a + s) * (k.a + s))).ln();
        k.a / k.b * log_term + (xi2 + 2.0) * s / (k.b * (xi2 + 1.0)) - 1.0
    };
    Ok((pre * bracket).max(0.0))
}

/// `f_ξ(l)`: closed forms for `n = 2, 3`, quadrature otherwise.
pub fn f_xi_n(n: usize, xi: f64, l: f64, settings: &QuadSettings) -> Result<f64> {
    match n {
        2 => f_xi_closed_n2(xi, l),
        3 => f_xi_closed_n3(xi, l, settings),
        _ => f_xi_quadrature(n, xi, l, settings),
    }
}

/// `F(ξ, l) = ∫₀^ξ f_ζ(l) dζ` from the two-integral representation over
/// `I₁(ξ)` and `I₂(ξ)`.
pub fn f_cumulative_n(n: usize, xi: f64, l: f64, settings: &QuadSettings) -> Result<f64> {
    if xi == 0.0 {
        Kernel::new(l)?;
        return Ok(0.0);
    }
    check_args(n, xi)?;
    let k = Kernel::new(l)?;
    let e = Ends::new(xi, &k);
    let (i1, i2) = e.cumulative_pieces();
    let np = n as i32 - 1;
    let half = (n as f64 - 3.0) / 2.0;
    let weight = |q: Pt| {
        let w = q.p * q.m;
        match n {
            3 => 1.0,
            _ if n % 2 == 1 => w.powi((n as i32 - 3) / 2),
            _ => w.powf(half),
        }
    };
    let ell = |q: Pt| k.b * (q.p * q.m).sqrt() / (xi * k.a_by(q));
    let g1 = |q: Pt| weight(q) * (1.0 - ell(q).powi(np));
    let g2 = |q: Pt| weight(q) * ((1.0 / k.a_by(q)).powi(np) - ell(q).powi(np));
    // Scale the absolute tolerance with the size the result will have.
    let guess = match e.branch {
        Branch::Large => 1.0,
        _ => (xi * xi / (k.b * k.b)).powi(np).min(1.0),
    };
    let qs = scaled(settings, guess.max(1e-300));
    let mut total = 0.0;
    for (lo, hi) in i1 {
        total += integrate_y(g1, lo, hi, k.cm1, &qs)?;
    }
    for (lo, hi) in i2 {
        total += integrate_y(g2, lo, hi, k.cm1, &qs)?;
    }
    Ok((total / (n as f64 - 1.0)).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qs() -> QuadSettings {
        QuadSettings::default()
    }

    #[test]
    fn abc_values() {
        let (a, b, c) = abc_of(2.0).unwrap();
        assert!((a - 3.762_195_691_083_631).abs() < 1e-14);
        assert!((b - 3.626_860_407_847_019).abs() < 1e-14);
        assert!((c - 2.350_402_387_287_603).abs() < 1e-14);
        let (a, _, c) = abc_of(5.0).unwrap();
        assert!((c * c - 2.0 * (a - 1.0)).abs() < 1e-12 * c * c);
        let (a, b, c) = abc_of(1e-9).unwrap();
        assert!((a - 1.0).abs() < 1e-15 && b < 1e-8 && c < 1e-8);
        assert!(abc_of(0.0).is_err());
        assert!(abc_of(-1.0).is_err());
    }

    #[test]
    fn interval_examples() {
        let u = interval_set(10.0, 1.0).unwrap();
        assert_eq!(u.intervals.len(), 1);
        assert_eq!((u.intervals[0].lo, u.intervals[0].hi), (-1.0, 1.0));
        // ξ = 1, l = 2 lies in the small branch.
        let (alpha, lam_m, _) = alpha_lambda(1.0, 2.0).unwrap();
        assert!((alpha - 0.961_237_832_256_892_0).abs() < 1e-14);
        assert!((lam_m + 0.999_276_276_492_220_1).abs() < 1e-14);
        let u = interval_set(1.0, 2.0).unwrap();
        assert_eq!(u.intervals.len(), 2);
        assert!(u.contains(-1.0) && u.contains(1.0) && !u.contains(0.0));
        // Both pieces shrink like ξ².
        let l1 = interval_set(1e-2, 2.0).unwrap().total_length();
        let l2 = interval_set(1e-3, 2.0).unwrap().total_length();
        assert!((l1 / l2 - 100.0).abs() < 0.1);
    }

    #[test]
    fn middle_branch_ordering() {
        for &l in &[0.3, 1.0, 2.0, 5.0, 12.0] {
            let (_, b, c) = abc_of(l).unwrap();
            for j in 1..50 {
                let xi = c + (b - c) * j as f64 / 50.0;
                let u = interval_set(xi, l).unwrap();
                assert_eq!(u.intervals.len(), 3);
                let e = Ends::new(xi, &Kernel::new(l).unwrap());
                assert!(e.lam_p.y() <= e.mid.y() && e.mid.y() <= e.neg_alpha.y());
            }
        }
    }

    #[test]
    fn kinks_sorted() {
        let (a, b) = kink_locations(2.0).unwrap();
        assert!((a - 2.350_402_387_287_603).abs() < 1e-14);
        assert!((b - 3.626_860_407_847_019).abs() < 1e-14);
        let (a, b) = kink_locations(1e-8).unwrap();
        assert!(a < 1e-7 && b < 1e-7 && a <= b);
    }

    // Reference values from an independent 30-digit evaluation.
    #[test]
    fn f_reference_values() {
        let cases = [
            (2, 1.0, 2.0, 0.038_418_864_695_898_49),
            (2, 3.0, 2.0, 0.174_832_199_587_249_4),
            (2, 10.0, 1.0, 0.02),
            (3, 1.0, 2.0, 0.000_733_125_303_614_985_8),
            (3, 3.0, 2.0, 0.064_335_179_049_822_22),
            (3, 5.0, 2.0, 0.034_388_142_126_563_08),
            (3, 1.7, 2.0, 0.001_386_892_726_611_996),
            (4, 1.7, 2.0, 0.000_062_532_652_951_060_02),
            (5, 3.0, 2.0, 0.015_048_792_805_336_22),
        ];
        for &(n, xi, l, want) in &cases {
            let got = f_xi_n(n, xi, l, &qs()).unwrap();
            assert!((got - want).abs() <= 1e-12 * want, "n={n} ξ={xi} l={l}: {got} vs {want}");
            let quad = f_xi_quadrature(n, xi, l, &qs()).unwrap();
            assert!((quad - want).abs() <= 1e-10 * want, "quad n={n}: {quad} vs {want}");
        }
    }

    #[test]
    fn cumulative_reference_values() {
        let cases = [
            (2, 1.0, 2.0, 0.037_676_381_966_897_90),
            (2, 3.0, 2.0, 0.170_927_021_983_773_8),
            (2, 10.0, 1.0, 1.980_830_495_322_334),
            (3, 1.7, 2.0, 0.001_087_540_480_570_021),
            (3, 3.0, 2.0, 0.029_510_276_508_472_24),
            (3, 5.0, 2.0, 0.152_435_488_727_827_4),
            (4, 3.0, 2.0, 0.014_180_140_784_465_44),
            (5, 1.0, 1.0, 0.001_246_414_961_491_445),
        ];
        for &(n, xi, l, want) in &cases {
            let got = f_cumulative_n(n, xi, l, &qs()).unwrap();
            assert!((got - want).abs() <= 1e-9 * want, "n={n} ξ={xi} l={l}: {got} vs {want}");
        }
    }

    #[test]
    fn cumulative_piecewise_antiderivative_n2() {
        // For ξ > B the n = 2 kernel is 2l/ξ².
        let l: f64 = 1.0;
        let b = l.sinh();
        let fb = f_cumulative_n(2, b, l, &qs()).unwrap();
        let f10 = f_cumulative_n(2, 10.0, l, &qs()).unwrap();
        let tail = 2.0 * l * (1.0 / b - 1.0 / 10.0);
        assert!((f10 - fb - tail).abs() < 1e-10);
    }

    #[test]
    fn small_arguments() {
        assert_eq!(f_cumulative_n(3, 0.0, 1.0, &qs()).unwrap(), 0.0);
        let tiny = f_cumulative_n(3, 1e-6, 1.0, &qs()).unwrap();
        assert!(tiny < 1e-10);
        for n in 2..6 {
            let v = f_xi_n(n, 1.0, 1e-6, &qs()).unwrap();
            assert!(v.abs() < 1e-5, "n={n}: {v}");
        }
    }

    #[test]
    fn large_l_stays_accurate() {
        for n in 2..5 {
            let closed = f_xi_n(n, 0.7, 25.0, &qs()).unwrap();
            let quad = f_xi_quadrature(n, 0.7, 25.0, &qs()).unwrap();
            assert!(closed > 0.0);
            assert!((closed - quad).abs() <= 1e-8 * quad, "n={n}: {closed} {quad}");
        }
    }
}
