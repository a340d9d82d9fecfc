//! Hyperboloid-model primitives.
//!
//! Points of `H^n` live on the upper sheet `⟨x,x⟩ = −1, x_{n+1} > 0` in
//! `R^{n+1}` with the form `J = diag(I_n, −1)`. Group elements are matrices
//! of `SO₀(n,1)` and carry their Cartan parameter `t(g) = arccosh g_{n+1,n+1}`.

use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Clamping of `arccos`/`arccosh` arguments beyond this is a hard error.
pub const CLAMP_HARD: f64 = 1e-6;
/// Clamps larger than this (but below [`CLAMP_HARD`]) are counted.
pub const CLAMP_WARN: f64 = 1e-7;

static LARGE_CLAMPS: AtomicUsize = AtomicUsize::new(0);

/// Number of domain clamps so far that exceeded [`CLAMP_WARN`].
pub fn large_clamp_count() -> usize {
    LARGE_CLAMPS.load(Ordering::Relaxed)
}

fn note_clamp(excess: f64) {
    if excess > CLAMP_WARN {
        LARGE_CLAMPS.fetch_add(1, Ordering::Relaxed);
        log::warn!("domain clamp of {excess:e}");
    }
}

/// `arccosh` with arguments in `[1 − 1e−6, 1)` clamped to 1.
pub fn acosh_clamped(c: f64) -> Result<f64> {
    if c.is_nan() || c < 1.0 - CLAMP_HARD {
        return Err(Error::InvariantViolation(format!(
            "arccosh argument {c} below 1 (points not on the hyperboloid?)"
        )));
    }
    if c < 1.0 {
        note_clamp(1.0 - c);
        return Ok(0.0);
    }
    Ok(c.acosh())
}

/// `arccos` with arguments within 1e−6 outside `[−1, 1]` clamped.
pub fn acos_clamped(c: f64) -> Result<f64> {
    if c.is_nan() || c.abs() > 1.0 + CLAMP_HARD {
        return Err(Error::InvariantViolation(format!("arccos argument {c} outside [-1, 1]")));
    }
    if c.abs() > 1.0 {
        note_clamp(c.abs() - 1.0);
    }
    Ok(c.clamp(-1.0, 1.0).acos())
}

/// A vector of `R^{n+1}` with the Minkowski form.
#[derive(Debug, Clone, PartialEq)]
pub struct LorentzVector {
    coords: DVector<f64>,
}

impl LorentzVector {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.len() < 3 {
            return Err(Error::Usage(format!(
                "a Lorentz vector needs n+1 >= 3 coordinates, got {}",
                coords.len()
            )));
        }
        Ok(LorentzVector {
            coords: DVector::from_vec(coords),
        })
    }

    pub fn from_dvector(coords: DVector<f64>) -> Result<Self> {
        Self::new(coords.as_slice().to_vec())
    }

    /// The basis vector `e_i` (1-based, as in `e_{n+1}`).
    pub fn basis(i: usize, n: usize) -> Result<Self> {
        if i == 0 || i > n + 1 {
            return Err(Error::Usage(format!("basis index {i} out of range for n={n}")));
        }
        let mut v = vec![0.0; n + 1];
        v[i - 1] = 1.0;
        Self::new(v)
    }

    pub fn n(&self) -> usize {
        self.coords.len() - 1
    }

    pub fn coords(&self) -> &[f64] {
        self.coords.as_slice()
    }

    pub fn as_dvector(&self) -> &DVector<f64> {
        &self.coords
    }

    /// The first `n` coordinates.
    pub fn spatial(&self) -> &[f64] {
        &self.coords.as_slice()[..self.n()]
    }

    pub fn last(&self) -> f64 {
        self.coords[self.n()]
    }
}

pub fn minkowski_inner(x: &LorentzVector, y: &LorentzVector) -> Result<f64> {
    if x.n() != y.n() {
        return Err(Error::Usage(format!(
            "dimension mismatch in Minkowski form: n={} vs n={}",
            x.n(),
            y.n()
        )));
    }
    let n = x.n();
    let spatial: f64 = x.coords.rows(0, n).dot(&y.coords.rows(0, n));
    Ok(spatial - x.coords[n] * y.coords[n])
}

/// A point on the upper sheet of the hyperboloid.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperboloidPoint(LorentzVector);

impl HyperboloidPoint {
    /// Checks `⟨x,x⟩ = −1` to 1e−9, relative to `x_{n+1}²` once that exceeds 1.
    pub fn new(v: LorentzVector) -> Result<Self> {
        let q = minkowski_inner(&v, &v)?;
        let last = v.last();
        let scale = last.abs().max(1.0).powi(2);
        if !(last > 0.0) {
            return Err(Error::InvariantViolation(format!(
                "x_{{n+1}} = {last} is not positive (lower sheet or not a point)"
            )));
        }
        if (q + 1.0).abs() > 1e-9 * scale {
            return Err(Error::InvariantViolation(format!(
                "⟨x,x⟩ = {q}, expected -1"
            )));
        }
        Ok(HyperboloidPoint(v))
    }

    pub fn from_coords(coords: Vec<f64>) -> Result<Self> {
        Self::new(LorentzVector::new(coords)?)
    }

    /// The base point `e_{n+1}`.
    pub fn base(n: usize) -> Result<Self> {
        Ok(HyperboloidPoint(LorentzVector::basis(n + 1, n)?))
    }

    /// The point at distance `t` from the base point in the unit direction `dir`.
    pub fn from_polar(t: f64, dir: &[f64]) -> Result<Self> {
        let norm: f64 = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(Error::DegenerateInput("zero direction".into()));
        }
        let mut c: Vec<f64> = dir.iter().map(|x| x / norm * t.sinh()).collect();
        c.push(t.cosh());
        Self::from_coords(c)
    }

    pub fn vector(&self) -> &LorentzVector {
        &self.0
    }

    pub fn n(&self) -> usize {
        self.0.n()
    }

    pub fn coords(&self) -> &[f64] {
        self.0.coords()
    }
}

/// The point `N = (1, 0, …, 0, √2)`, image of the base point under `g_N`.
pub fn n_point(n: usize) -> Result<HyperboloidPoint> {
    let mut c = vec![0.0; n + 1];
    c[0] = 1.0;
    c[n] = std::f64::consts::SQRT_2;
    HyperboloidPoint::from_coords(c)
}

pub fn hyperbolic_distance(x: &HyperboloidPoint, y: &HyperboloidPoint) -> Result<f64> {
    acosh_clamped(-minkowski_inner(x.vector(), y.vector())?)
}

/// An angle in `[0, π]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct AngleValue(f64);

impl AngleValue {
    pub fn new(radians: f64) -> Result<Self> {
        if !(0.0..=std::f64::consts::PI).contains(&radians) {
            return Err(Error::InvariantViolation(format!("angle {radians} outside [0, π]")));
        }
        Ok(AngleValue(radians))
    }

    pub fn radians(self) -> f64 {
        self.0
    }
}

/// Angle between two unit vectors as `2·atan2(|u−v|, |u+v|)`, which stays
/// accurate for tiny angles where `arccos(u·v)` does not.
pub fn unit_angle(u: &[f64], v: &[f64]) -> f64 {
    let mut d = 0.0;
    let mut s = 0.0;
    for (a, b) in u.iter().zip(v) {
        d += (a - b) * (a - b);
        s += (a + b) * (a + b);
    }
    2.0 * d.sqrt().atan2(s.sqrt())
}

/// Unit direction of the first `n` coordinates, or `None` at the base point.
pub fn direction(x: &[f64]) -> Option<Vec<f64>> {
    let norm = x.iter().map(|c| c * c).sum::<f64>().sqrt();
    if norm < 1e-12 {
        return None;
    }
    Some(x.iter().map(|c| c / norm).collect())
}

/// Angle at the base point between the geodesics to `x` and `y`.
pub fn angle_at_base(x: &HyperboloidPoint, y: &HyperboloidPoint) -> Result<AngleValue> {
    if x.n() != y.n() {
        return Err(Error::Usage("dimension mismatch in angle_at_base".into()));
    }
    let u = direction(x.vector().spatial())
        .ok_or_else(|| Error::DegenerateInput("first point is the base point".into()))?;
    let v = direction(y.vector().spatial())
        .ok_or_else(|| Error::DegenerateInput("second point is the base point".into()))?;
    AngleValue::new(unit_angle(&u, &v))
}

/// Total version of [`angle_at_base`]: a base-point argument is replaced by
/// `N = g_N·e_{n+1}`, whose direction is `e_1`. The choice of `g_N` is a
/// convention only; statistics never use this.
pub fn angle_at_base_total(x: &HyperboloidPoint, y: &HyperboloidPoint) -> Result<AngleValue> {
    let n = x.n();
    let sub = |p: &HyperboloidPoint| -> Result<HyperboloidPoint> {
        if direction(p.vector().spatial()).is_none() {
            n_point(n)
        } else {
            Ok(p.clone())
        }
    };
    angle_at_base(&sub(x)?, &sub(y)?)
}

/// An element of `SO₀(n,1)` with its Cartan parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupElement {
    matrix: DMatrix<f64>,
    t: f64,
}

fn form_j(n: usize) -> DMatrix<f64> {
    let mut j = DMatrix::identity(n + 1, n + 1);
    j[(n, n)] = -1.0;
    j
}

impl GroupElement {
    /// Validates `gᵀJg = J`, `det g = 1` and `g_{n+1,n+1} ≥ 1`. The form and
    /// determinant checks use 1e−9 scaled by `max(1, g_{n+1,n+1})²`, since
    /// the entries themselves grow like `e^t`.
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        let dim = matrix.nrows();
        if dim < 3 || matrix.ncols() != dim {
            return Err(Error::Usage(format!(
                "group element must be square of size n+1 >= 3, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let n = dim - 1;
        let corner = matrix[(n, n)];
        if !(corner >= 1.0 - 1e-12) {
            return Err(Error::InvariantViolation(format!(
                "corner entry {corner} < 1: not in the identity component"
            )));
        }
        let scale = corner.max(1.0).powi(2);
        let j = form_j(n);
        let dev = (matrix.transpose() * &j * &matrix - &j).amax();
        if dev > 1e-9 * scale {
            return Err(Error::InvariantViolation(format!("gᵀJg deviates from J by {dev:e}")));
        }
        let det = matrix.determinant();
        if (det - 1.0).abs() > 1e-9 * scale {
            return Err(Error::InvariantViolation(format!("determinant {det} != 1")));
        }
        let t = acosh_clamped(corner.max(1.0))?;
        Ok(GroupElement { matrix, t })
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::new(DMatrix::identity(n + 1, n + 1))
    }

    /// Embeds a rotation `k ∈ SO(n)` as the block `diag(k, 1)`.
    pub fn rotation(k: &DMatrix<f64>) -> Result<Self> {
        let n = k.nrows();
        let mut m = DMatrix::identity(n + 1, n + 1);
        m.view_mut((0, 0), (n, n)).copy_from(k);
        Self::new(m)
    }

    /// Rotation by `theta` in the `(i, j)` coordinate plane (0-based, `< n`).
    pub fn plane_rotation(n: usize, i: usize, j: usize, theta: f64) -> Result<Self> {
        Self::givens(n, &[(i, j, theta)])
    }

    /// Product of plane rotations `(i, j, θ)`, applied left to right.
    pub fn givens(n: usize, factors: &[(usize, usize, f64)]) -> Result<Self> {
        let mut k = DMatrix::<f64>::identity(n, n);
        for &(i, j, theta) in factors {
            if i >= n || j >= n || i == j {
                return Err(Error::Usage(format!("bad rotation plane ({i},{j}) for n={n}")));
            }
            let (s, c) = theta.sin_cos();
            let mut r = DMatrix::<f64>::identity(n, n);
            r[(i, i)] = c;
            r[(j, j)] = c;
            r[(i, j)] = -s;
            r[(j, i)] = s;
            k = r * k;
        }
        Self::rotation(&k)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows() - 1
    }

    /// Cached Cartan parameter.
    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn mul(&self, other: &GroupElement) -> Result<GroupElement> {
        if self.n() != other.n() {
            return Err(Error::Usage("dimension mismatch in group product".into()));
        }
        Self::new(&self.matrix * &other.matrix)
    }

    /// `g⁻¹ = J gᵀ J`.
    pub fn inverse(&self) -> GroupElement {
        let j = form_j(self.n());
        GroupElement {
            matrix: &j * self.matrix.transpose() * &j,
            t: self.t,
        }
    }

    /// The orbit point `g·e_{n+1}` (last column).
    pub fn orbit_point(&self) -> HyperboloidPoint {
        let n = self.n();
        let col: Vec<f64> = self.matrix.column(n).iter().copied().collect();
        HyperboloidPoint(LorentzVector {
            coords: DVector::from_vec(col),
        })
    }

    pub fn apply(&self, x: &HyperboloidPoint) -> Result<HyperboloidPoint> {
        if x.n() != self.n() {
            return Err(Error::Usage("dimension mismatch in group action".into()));
        }
        HyperboloidPoint::new(LorentzVector {
            coords: &self.matrix * x.vector().as_dvector(),
        })
    }
}

pub fn group_norm_sq(g: &GroupElement) -> f64 {
    let n = g.n();
    2.0 * g.matrix[(n, n)]
}

pub fn cartan_t(g: &GroupElement) -> Result<f64> {
    let n = g.n();
    let corner = g.matrix[(n, n)];
    if corner < 1.0 - 1e-9 {
        return Err(Error::InvariantViolation(format!("corner entry {corner} < 1")));
    }
    Ok(acosh_clamped(corner.max(1.0))?)
}

/// The translation `a_t` along the geodesic through `e_{n+1}` and `e_1`.
pub fn make_translation(t: f64, n: usize) -> Result<GroupElement> {
    if n < 2 {
        return Err(Error::Usage(format!("n must be at least 2, got {n}")));
    }
    if !t.is_finite() {
        return Err(Error::Usage(format!("translation length {t} is not finite")));
    }
    let mut m = DMatrix::identity(n + 1, n + 1);
    let (c, s) = (t.cosh(), t.sinh());
    m[(0, 0)] = c;
    m[(0, n)] = s;
    m[(n, 0)] = s;
    m[(n, n)] = c;
    Ok(GroupElement { matrix: m, t: t.abs() })
}

/// `g_N`, the translation taking `e_{n+1}` to `N`.
pub fn g_n(n: usize) -> Result<GroupElement> {
    make_translation(std::f64::consts::SQRT_2.acosh(), n)
}

/// `θ(g) = v(g, g_N) = arccos(g_{1,n+1}/sinh t(g))`.
pub fn theta_of(g: &GroupElement) -> Result<AngleValue> {
    let t = g.t();
    if t <= 1e-12 {
        return Err(Error::DegenerateInput("θ(g) undefined for g in K".into()));
    }
    let n = g.n();
    AngleValue::new(acos_clamped(g.matrix[(0, n)] / t.sinh())?)
}

/// `v(g, g′)` for group elements, via their orbit points.
pub fn group_angle(g: &GroupElement, h: &GroupElement) -> Result<AngleValue> {
    angle_at_base(&g.orbit_point(), &h.orbit_point())
}

/// `cos v` with `v = π − v(g⁻¹, M)`; zero when either angle is undefined
/// (the corresponding `sinh` factor vanishes then).
fn cos_v(g: &GroupElement, m: &GroupElement) -> Result<f64> {
    if g.t() <= 1e-12 || m.t() <= 1e-12 {
        return Ok(0.0);
    }
    let w = group_angle(&g.inverse(), m)?.radians();
    Ok(-w.cos())
}

/// `‖gM‖² = 2(cosh t(g) cosh t(M) + cos v sinh t(g) sinh t(M))`.
pub fn right_mult_norm_sq(g: &GroupElement, m: &GroupElement) -> Result<f64> {
    if g.n() != m.n() {
        return Err(Error::Usage("dimension mismatch".into()));
    }
    let cv = cos_v(g, m)?;
    let (tg, tm) = (g.t(), m.t());
    Ok(2.0 * (tg.cosh() * tm.cosh() + cv * tg.sinh() * tm.sinh()))
}

/// `v(gM, g)` from `tan v(gM,g) = sin v sinh t(M) / (cosh t(M) sinh t(g) + cos v cosh t(g) sinh t(M))`.
/// Requires `t(g) > t(M)`; the result then lies in `[0, π/2)`.
pub fn right_mult_angle(g: &GroupElement, m: &GroupElement) -> Result<AngleValue> {
    if g.n() != m.n() {
        return Err(Error::Usage("dimension mismatch".into()));
    }
    let (tg, tm) = (g.t(), m.t());
    if !(tg > tm) {
        return Err(Error::Precondition(format!("need t(g) > t(M), got {tg} <= {tm}")));
    }
    if tm <= 1e-12 {
        return AngleValue::new(0.0);
    }
    let w = group_angle(&g.inverse(), m)?.radians();
    let (sv, cv) = (w.sin(), -w.cos());
    let num = sv * tm.sinh();
    let den = tm.cosh() * tg.sinh() + cv * tg.cosh() * tm.sinh();
    AngleValue::new(num.atan2(den))
}
