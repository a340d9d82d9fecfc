//! Globally adaptive Gauss–Kronrod (10/21 point) quadrature.
//!
//! The error estimate follows the QUADPACK `qk21` heuristic. Intervals are
//! bisected in order of decreasing error estimate until the total estimate
//! falls below `max(abs_tol, rel_tol·|I|)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

// Kronrod abscissae on [0, 1]; odd entries are the 10-point Gauss nodes.
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_600_335_680_710,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

// Gauss weights for XGK[1], XGK[3], ..., XGK[9].
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

/// Tolerances for adaptive integration. Serialized under `[quad]` in the
/// CLI configuration file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadSettings {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdiv: usize,
}

impl Default for QuadSettings {
    fn default() -> Self {
        QuadSettings {
            abs_tol: 1e-12,
            rel_tol: 1e-10,
            max_subdiv: 200,
        }
    }
}

impl QuadSettings {
    pub fn new(abs_tol: f64, rel_tol: f64, max_subdiv: usize) -> Result<Self> {
        if !(abs_tol >= 0.0) || !(rel_tol >= 0.0) || (abs_tol == 0.0 && rel_tol == 0.0) {
            return Err(Error::Usage(format!(
                "quadrature tolerances must be nonnegative and not both zero (abs {abs_tol}, rel {rel_tol})"
            )));
        }
        if max_subdiv == 0 {
            return Err(Error::Usage("quadrature max_subdiv must be positive".into()));
        }
        Ok(QuadSettings {
            abs_tol,
            rel_tol,
            max_subdiv,
        })
    }

    /// Same settings with a different subdivision budget.
    pub fn with_max_subdiv(self, max_subdiv: usize) -> Self {
        QuadSettings { max_subdiv, ..self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
    pub intervals: usize,
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    splittable: bool,
}

fn rescale_error(err: f64, resabs: f64, resasc: f64) -> f64 {
    let mut err = err.abs();
    if resasc != 0.0 && err != 0.0 {
        let scale = (200.0 * err / resasc).powf(1.5);
        err = if scale < 1.0 { resasc * scale } else { resasc };
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        let min_err = 50.0 * f64::EPSILON * resabs;
        if min_err > err {
            err = min_err;
        }
    }
    err
}

/// One 21-point Kronrod rule on `[a, b]`, returning `(value, error)`.
pub fn gk21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut res_g = 0.0;
    let mut res_k = fc * WGK[10];
    let mut resabs = res_k.abs();
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        resabs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * res_k;
    let mut resasc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        resasc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = res_k * half;
    let err = rescale_error((res_k - res_g) * half, resabs * half.abs(), resasc * half.abs());
    (value, err)
}

fn segment<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Segment {
    let (value, error) = gk21(f, a, b);
    let scale = a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
    let splittable = (b - a).abs() > 1e3 * f64::EPSILON * scale;
    Segment {
        a,
        b,
        value,
        error,
        splittable,
    }
}

/// Integrates `f` over `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, settings: &QuadSettings) -> Result<Quadrature> {
    integrate_breaks(f, &[a, b], settings)
}

/// Integrates `f` over `[points[0], points[last]]`, starting from the
/// partition given by `points` (which must be nondecreasing). Known kinks
/// and near-singular spots belong in `points`.
pub fn integrate_breaks<F: Fn(f64) -> f64>(
    f: F,
    points: &[f64],
    settings: &QuadSettings,
) -> Result<Quadrature> {
    if points.len() < 2 {
        return Err(Error::Usage("integration needs at least two break points".into()));
    }
    if points.iter().any(|p| !p.is_finite()) {
        return Err(Error::Usage(format!("non-finite integration limits {points:?}")));
    }
    if points.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Usage(format!("integration break points not sorted: {points:?}")));
    }
    let mut segs: Vec<Segment> = points
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| segment(&f, w[0], w[1]))
        .collect();
    if segs.is_empty() {
        return Ok(Quadrature {
            value: 0.0,
            error: 0.0,
            evaluations: 0,
            intervals: 0,
        });
    }
    let mut evaluations = 21 * segs.len();
    let mut subdivisions = 0usize;
    loop {
        let total: f64 = segs.iter().map(|s| s.value).sum();
        let err: f64 = segs.iter().map(|s| s.error).sum();
        if !total.is_finite() || !err.is_finite() {
            return Err(Error::Numerical {
                msg: "integrand produced a non-finite value".into(),
                achieved: f64::INFINITY,
            });
        }
        let tol = settings.abs_tol.max(settings.rel_tol * total.abs());
        if err <= tol {
            return Ok(Quadrature {
                value: total,
                error: err,
                evaluations,
                intervals: segs.len(),
            });
        }
        let worst = segs
            .iter()
            .enumerate()
            .filter(|(_, s)| s.splittable)
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .map(|(i, _)| i);
        let Some(worst) = worst else {
            // Nothing left to bisect: accept if the remaining error is at
            // rounding level relative to the integral.
            if err <= tol.max(1e3 * f64::EPSILON * segs.iter().map(|s| s.value.abs()).sum::<f64>()) {
                return Ok(Quadrature {
                    value: total,
                    error: err,
                    evaluations,
                    intervals: segs.len(),
                });
            }
            return Err(Error::Numerical {
                msg: "quadrature limited by round-off".into(),
                achieved: err,
            });
        };
        if subdivisions >= settings.max_subdiv {
            return Err(Error::Numerical {
                msg: format!(
                    "quadrature did not converge in {} subdivisions (requested {:e})",
                    settings.max_subdiv, tol
                ),
                achieved: err,
            });
        }
        let s = segs.swap_remove(worst);
        let mid = 0.5 * (s.a + s.b);
        segs.push(segment(&f, s.a, mid));
        segs.push(segment(&f, mid, s.b));
        evaluations += 42;
        subdivisions += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kronrod_weights_integrate_constants() {
        let sum = WGK[10] + 2.0 * WGK[..10].iter().sum::<f64>();
        assert!((sum - 2.0).abs() < 1e-14);
        let gsum = 2.0 * WG.iter().sum::<f64>();
        assert!((gsum - 2.0).abs() < 1e-14);
    }

    #[test]
    fn rules_are_exact_for_polynomials() {
        // Kronrod-21 is exact through degree 31, Gauss-10 through 19.
        for deg in 0..=31 {
            let f = |x: f64| x.powi(deg);
            let (k, _) = gk21(&f, 0.0, 1.0);
            let exact = 1.0 / (deg as f64 + 1.0);
            assert!((k - exact).abs() < 1e-14, "degree {deg}: {k} vs {exact}");
        }
    }

    #[test]
    fn adaptive_handles_endpoint_singularity() {
        let s = QuadSettings::default();
        let q = integrate(|x: f64| 1.0 / x.sqrt(), 0.0, 1.0, &s.with_max_subdiv(500)).unwrap();
        assert!((q.value - 2.0).abs() < 1e-9, "{q:?}");
        let q = integrate(|x: f64| x.ln(), 0.0, 1.0, &s.with_max_subdiv(500)).unwrap();
        assert!((q.value + 1.0).abs() < 1e-9);
    }

    #[test]
    fn break_points_and_jumps() {
        let s = QuadSettings::default();
        let step = |x: f64| if x < 0.3 { 1.0 } else { 2.0 };
        let q = integrate_breaks(step, &[0.0, 0.3, 1.0], &s).unwrap();
        assert!((q.value - (0.3 + 1.4)).abs() < 1e-13);
        let q = integrate(step, 0.0, 1.0, &QuadSettings::new(1e-10, 1e-10, 200).unwrap()).unwrap();
        assert!((q.value - 1.7).abs() < 1e-9);
    }

    #[test]
    fn oscillatory_integrand() {
        let s = QuadSettings::default();
        let q = integrate(|x: f64| (50.0 * x).sin(), 0.0, std::f64::consts::PI, &s).unwrap();
        assert!(q.value.abs() < 1e-10);
    }

    #[test]
    fn budget_exhaustion_reports_estimate() {
        let s = QuadSettings::new(1e-15, 0.0, 2).unwrap();
        let err = integrate(|x: f64| 1.0 / x.sqrt(), 0.0, 1.0, &s).unwrap_err();
        match err {
            Error::Numerical { achieved, .. } => assert!(achieved > 0.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_settings_rejected() {
        assert!(QuadSettings::new(0.0, 0.0, 10).is_err());
        assert!(QuadSettings::new(1e-3, 1e-3, 0).is_err());
        assert!(integrate(|x| x, 0.0, f64::INFINITY, &QuadSettings::default()).is_err());
    }
}
