//! Orbit datasets: integer points on the hyperboloid, the PSL(2,ℤ) orbit of
//! `i`, the text format, cone filtering, covolume calibration and the
//! length spectrum.
//!
//! Datasets always contain the base point when the backend produces it and
//! are sorted by the last coordinate, then lexicographically.

use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::density::{vol_ball, DistanceSpectrum, SpectrumEntry};
use crate::error::{Error, Result};
use crate::geometry::unit_angle;
use crate::util::fmt_sig17;

/// Default upper bound on the number of points a backend may materialize.
pub const DEFAULT_POINT_CAP: usize = 20_000_000;

/// Spectrum grouping tolerance in `t` for float datasets.
pub const T_GROUP_TOL: f64 = 1e-9;

/// A cone with vertex at the base point, given by an axis direction and an
/// opening angle.
#[derive(Debug, Clone, PartialEq)]
pub struct Cone {
    axis: Vec<f64>,
    theta: f64,
}

impl Cone {
    /// Normalizes `axis`; fails for a zero axis or `theta ∉ (0, π)`.
    pub fn new(axis: Vec<f64>, theta: f64) -> Result<Self> {
        let norm = axis.iter().map(|a| a * a).sum::<f64>().sqrt();
        if axis.is_empty() || !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::Usage("cone axis must be a nonzero vector".into()));
        }
        if !(theta > 0.0 && theta < std::f64::consts::PI) {
            return Err(Error::Usage(format!("cone angle must lie in (0, π), got {theta}")));
        }
        Ok(Cone {
            axis: axis.iter().map(|a| a / norm).collect(),
            theta,
        })
    }

    pub fn axis(&self) -> &[f64] {
        &self.axis
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn contains_dir(&self, dir: &[f64]) -> bool {
        unit_angle(dir, &self.axis) < self.theta
    }
}

/// One orbit point, materialized.
#[derive(Debug, Clone, PartialEq)]
pub struct OrbitPoint {
    pub coords: Vec<f64>,
    pub t: f64,
    /// `None` for the base point.
    pub dir: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
enum Store {
    /// Coordinates are `num / denom`.
    Exact { num: Vec<i64>, denom: i64 },
    Real,
}

/// A finite piece of an orbit `Γe_{n+1}` inside the ball `2x_{n+1} ≤ Q²`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrbitDataset {
    n: usize,
    q: f64,
    store: Store,
    coords: Vec<f64>,
    t: Vec<f64>,
    dirs: Vec<f64>,
    base_index: Option<usize>,
    v_eff: Option<f64>,
    w: u64,
    source: String,
    cone: Option<Cone>,
}

fn quadric_tol(last: f64, tol: f64) -> f64 {
    tol * last.abs().max(1.0).powi(2)
}

impl OrbitDataset {
    /// A dataset with exact coordinates `num / denom`, `n + 1` per point.
    pub fn from_exact(n: usize, q: f64, num: Vec<i64>, denom: i64, w: u64, source: &str) -> Result<Self> {
        check_n_q(n, q)?;
        if denom <= 0 {
            return Err(Error::Usage(format!("denominator must be positive, got {denom}")));
        }
        let d = n + 1;
        if num.len() % d != 0 {
            return Err(Error::Usage(format!("coordinate count {} is not a multiple of {d}", num.len())));
        }
        let rows = num.len() / d;
        let limit = q * q * denom as f64 * (1.0 + 1e-12);
        for (i, row) in num.chunks_exact(d).enumerate() {
            let last = row[n];
            let s: i128 = row[..n].iter().map(|&x| x as i128 * x as i128).sum();
            if s - last as i128 * last as i128 != -(denom as i128 * denom as i128) || last <= 0 {
                return Err(Error::InvariantViolation(format!("row {i} is not on the hyperboloid: {row:?}")));
            }
            if 2.0 * last as f64 > limit {
                return Err(Error::InvariantViolation(format!("row {i} lies outside the norm ball Q = {q}")));
            }
        }
        let mut order: Vec<usize> = (0..rows).collect();
        order.sort_by(|&a, &b| {
            let (ra, rb) = (&num[a * d..(a + 1) * d], &num[b * d..(b + 1) * d]);
            ra[n].cmp(&rb[n]).then_with(|| ra[..n].cmp(&rb[..n]))
        });
        let mut sorted = Vec::with_capacity(num.len());
        for &i in &order {
            sorted.extend_from_slice(&num[i * d..(i + 1) * d]);
        }
        for i in 1..rows {
            if sorted[(i - 1) * d..i * d] == sorted[i * d..(i + 1) * d] {
                return Err(Error::InvariantViolation(format!(
                    "duplicate point {:?}",
                    &sorted[i * d..(i + 1) * d]
                )));
            }
        }
        let coords: Vec<f64> = sorted.iter().map(|&x| x as f64 / denom as f64).collect();
        Ok(Self::finish(n, q, Store::Exact { num: sorted, denom }, coords, w, source))
    }

    /// A dataset from real coordinates; each row must satisfy the quadric to
    /// `tol · max(1, x_{n+1})²`.
    pub fn from_real(n: usize, q: f64, coords: Vec<f64>, tol: f64, w: u64, source: &str) -> Result<Self> {
        check_n_q(n, q)?;
        let d = n + 1;
        if coords.len() % d != 0 {
            return Err(Error::Usage(format!("coordinate count {} is not a multiple of {d}", coords.len())));
        }
        let rows = coords.len() / d;
        for (i, row) in coords.chunks_exact(d).enumerate() {
            check_real_row(i, row, q, tol)?;
        }
        let mut order: Vec<usize> = (0..rows).collect();
        order.sort_by(|&a, &b| {
            let (ra, rb) = (&coords[a * d..(a + 1) * d], &coords[b * d..(b + 1) * d]);
            ra[n].total_cmp(&rb[n]).then_with(|| {
                ra[..n]
                    .iter()
                    .zip(&rb[..n])
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
        });
        let mut sorted = Vec::with_capacity(coords.len());
        for &i in &order {
            sorted.extend_from_slice(&coords[i * d..(i + 1) * d]);
        }
        // Near-duplicates have nearly equal last coordinates, so a forward
        // window over the sort order finds all of them.
        for i in 0..rows {
            let ri = &sorted[i * d..(i + 1) * d];
            for j in i + 1..rows {
                let rj = &sorted[j * d..(j + 1) * d];
                if rj[n] - ri[n] >= 1e-9 {
                    break;
                }
                let dist2: f64 = ri.iter().zip(rj).map(|(a, b)| (a - b) * (a - b)).sum();
                if dist2 < 1e-18 {
                    return Err(Error::InvariantViolation(format!("duplicate point {ri:?}")));
                }
            }
        }
        Ok(Self::finish(n, q, Store::Real, sorted, w, source))
    }

    fn finish(n: usize, q: f64, store: Store, coords: Vec<f64>, w: u64, source: &str) -> Self {
        let d = n + 1;
        let rows = coords.len() / d;
        let mut t = Vec::with_capacity(rows);
        let mut dirs = vec![0.0; rows * n];
        let mut base_index = None;
        for i in 0..rows {
            let row = &coords[i * d..(i + 1) * d];
            t.push(row[n].max(1.0).acosh());
            let norm = row[..n].iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                for (o, x) in dirs[i * n..(i + 1) * n].iter_mut().zip(&row[..n]) {
                    *o = x / norm;
                }
            } else {
                base_index = Some(i);
            }
        }
        OrbitDataset {
            n,
            q,
            store,
            coords,
            t,
            dirs,
            base_index,
            v_eff: None,
            w,
            source: source.to_string(),
            cone: None,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn v_eff(&self) -> Option<f64> {
        self.v_eff
    }

    pub fn set_v_eff(&mut self, v: f64) -> Result<()> {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Usage(format!("effective covolume must be positive, got {v}")));
        }
        self.v_eff = Some(v);
        Ok(())
    }

    pub fn w(&self) -> u64 {
        self.w
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn cone(&self) -> Option<&Cone> {
        self.cone.as_ref()
    }

    pub fn base_index(&self) -> Option<usize> {
        self.base_index
    }

    pub fn t(&self, i: usize) -> f64 {
        self.t[i]
    }

    pub fn ts(&self) -> &[f64] {
        &self.t
    }

    pub fn coords(&self, i: usize) -> &[f64] {
        let d = self.n + 1;
        &self.coords[i * d..(i + 1) * d]
    }

    /// Unit direction of the spatial part; `None` at the base point.
    pub fn dir(&self, i: usize) -> Option<&[f64]> {
        if Some(i) == self.base_index {
            None
        } else {
            Some(&self.dirs[i * self.n..(i + 1) * self.n])
        }
    }

    pub fn point(&self, i: usize) -> OrbitPoint {
        OrbitPoint {
            coords: self.coords(i).to_vec(),
            t: self.t[i],
            dir: self.dir(i).map(|d| d.to_vec()),
        }
    }

    /// Exact numerators and their common denominator, for integer backends.
    pub fn exact(&self) -> Option<(&[i64], i64)> {
        match &self.store {
            Store::Exact { num, denom } => Some((num, *denom)),
            Store::Real => None,
        }
    }

    /// Points per value of the last coordinate (exact backends only).
    pub fn level_counts(&self) -> Option<LevelCounts> {
        let (num, denom) = self.exact()?;
        let d = self.n + 1;
        let mut levels: Vec<(i64, u64)> = Vec::new();
        for row in num.chunks_exact(d) {
            match levels.last_mut() {
                Some((l, c)) if *l == row[self.n] => *c += 1,
                _ => levels.push((row[self.n], 1)),
            }
        }
        Some(LevelCounts {
            n: self.n,
            denom,
            levels,
        })
    }

    /// Number of points with `2x_{n+1} ≤ Q′²`.
    pub fn count_within(&self, q: f64) -> usize {
        let cap = q * q / 2.0 * (1.0 + 1e-12);
        let n = self.n;
        let d = n + 1;
        // Sorted by the last coordinate.
        let rows = self.len();
        let (mut lo, mut hi) = (0, rows);
        while lo < hi {
            let mid = (lo + hi) / 2;
            if self.coords[mid * d + n] <= cap {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        lo
    }

    fn subset(&self, keep: &[usize]) -> OrbitDataset {
        let d = self.n + 1;
        let mut coords = Vec::with_capacity(keep.len() * d);
        for &i in keep {
            coords.extend_from_slice(self.coords(i));
        }
        let store = match &self.store {
            Store::Exact { num, denom } => {
                let mut sub = Vec::with_capacity(keep.len() * d);
                for &i in keep {
                    sub.extend_from_slice(&num[i * d..(i + 1) * d]);
                }
                Store::Exact { num: sub, denom: *denom }
            }
            Store::Real => Store::Real,
        };
        let mut out = Self::finish(self.n, self.q, store, coords, self.w, &self.source);
        out.v_eff = self.v_eff;
        out.cone = self.cone.clone();
        out
    }
}

fn check_n_q(n: usize, q: f64) -> Result<()> {
    if n < 2 {
        return Err(Error::Usage(format!("n must be at least 2, got {n}")));
    }
    if !(q * q >= 2.0) || !q.is_finite() {
        return Err(Error::Usage(format!("need Q² ≥ 2, got Q = {q}")));
    }
    Ok(())
}

fn check_real_row(i: usize, row: &[f64], q: f64, tol: f64) -> Result<()> {
    let n = row.len() - 1;
    let last = row[n];
    if row.iter().any(|x| !x.is_finite()) || !(last > 0.0) {
        return Err(Error::InvariantViolation(format!("row {i} is not on the upper sheet: {row:?}")));
    }
    let s: f64 = row[..n].iter().map(|x| x * x).sum::<f64>() - last * last;
    if (s + 1.0).abs() > quadric_tol(last, tol) {
        return Err(Error::InvariantViolation(format!(
            "row {i} misses the hyperboloid by {:e}: {row:?}",
            (s + 1.0).abs()
        )));
    }
    if 2.0 * last > q * q * (1.0 + 1e-9) {
        return Err(Error::InvariantViolation(format!("row {i} lies outside the norm ball Q = {q}")));
    }
    Ok(())
}

/// Number of orbit points per value of the last coordinate `num / denom`,
/// including the base point level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelCounts {
    pub n: usize,
    pub denom: i64,
    /// `(numerator of x_{n+1}, count)`, ascending.
    pub levels: Vec<(i64, u64)>,
}

impl LevelCounts {
    pub fn total(&self) -> u64 {
        self.levels.iter().map(|l| l.1).sum()
    }

    /// Points with `2x_{n+1} ≤ Q²`.
    pub fn count_within(&self, q: f64) -> u64 {
        let cap = q * q / 2.0 * self.denom as f64 * (1.0 + 1e-12);
        self.levels
            .iter()
            .take_while(|l| l.0 as f64 <= cap)
            .map(|l| l.1)
            .sum()
    }

    /// Non-base levels with `t ≤ t_max` as a distance spectrum.
    pub fn spectrum(&self, t_max: f64, source: &str) -> Result<DistanceSpectrum> {
        let entries = self
            .levels
            .iter()
            .filter(|l| l.0 > self.denom)
            .map(|&(num, c)| SpectrumEntry {
                t: (num as f64 / self.denom as f64).acosh(),
                mult: c,
            })
            .take_while(|e| e.t <= t_max)
            .collect();
        DistanceSpectrum::new(entries, source)
    }
}

fn isqrt(m: u64) -> u64 {
    let mut r = (m as f64).sqrt() as u64;
    while r * r > m {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= m {
        r += 1;
    }
    r
}

/// Nonincreasing nonnegative `k`-tuples, entries at most `max`, whose squares
/// sum to `rem`, appended after `prefix`.
fn canonical_tuples(rem: u64, k: usize, max: u64, prefix: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
    if k == 1 {
        let r = isqrt(rem);
        if r * r == rem && r <= max {
            prefix.push(r);
            out.push(prefix.clone());
            prefix.pop();
        }
        return;
    }
    // The largest of k parts carries at least rem/k.
    let lo = {
        let l = isqrt(rem / k as u64);
        if l * l * (k as u64) < rem { l + 1 } else { l }
    };
    let hi = isqrt(rem).min(max);
    let mut a = hi;
    loop {
        if a < lo {
            break;
        }
        prefix.push(a);
        canonical_tuples(rem - a * a, k - 1, a, prefix, out);
        prefix.pop();
        if a == 0 {
            break;
        }
        a -= 1;
    }
}

fn factorial(k: usize) -> u64 {
    (1..=k as u64).product()
}

/// Number of signed permutations of a canonical tuple.
fn orbit_size(t: &[u64]) -> u64 {
    let mut mult = factorial(t.len());
    let mut i = 0;
    while i < t.len() {
        let j = t[i..].iter().take_while(|&&x| x == t[i]).count();
        mult /= factorial(j);
        i += j;
    }
    mult << t.iter().filter(|&&x| x != 0).count()
}

/// All signed permutations of a canonical tuple.
fn expand(t: &[u64], out: &mut Vec<Vec<i64>>) {
    let mut perm: Vec<i64> = t.iter().rev().map(|&x| x as i64).collect();
    loop {
        let nz: Vec<usize> = (0..perm.len()).filter(|&i| perm[i] != 0).collect();
        for mask in 0u32..(1 << nz.len()) {
            let mut v = perm.clone();
            for (b, &i) in nz.iter().enumerate() {
                if mask >> b & 1 == 1 {
                    v[i] = -v[i];
                }
            }
            out.push(v);
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
}

fn next_permutation(v: &mut [i64]) -> bool {
    let Some(i) = (1..v.len()).rev().find(|&i| v[i - 1] < v[i]) else {
        return false;
    };
    let j = (i..v.len()).rev().find(|&j| v[j] > v[i - 1]).expect("pivot exists");
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

fn level_cap(q: f64) -> u64 {
    (q * q / 2.0 * (1.0 + 1e-12)).floor() as u64
}

/// All integer solutions of `x₁² + … + x_n² = x_{n+1}² − 1` with
/// `1 ≤ x_{n+1} ≤ Q²/2`. The stabilizer order is `2ⁿ n!`.
pub fn enumerate_lorentz(n: usize, q: f64, cap: usize) -> Result<OrbitDataset> {
    check_n_q(n, q)?;
    let x_max = level_cap(q);
    let estimate = vol_ball(q, n)? / 2.0;
    if estimate > cap as f64 {
        return Err(Error::Resource(format!(
            "about {estimate:.3e} points expected for n={n}, Q={q}; cap is {cap}"
        )));
    }
    let levels: Vec<Vec<i64>> = (1..=x_max)
        .into_par_iter()
        .map(|x| {
            let mut tuples = Vec::new();
            canonical_tuples(x * x - 1, n, u64::MAX, &mut Vec::new(), &mut tuples);
            let mut rows = Vec::new();
            for t in &tuples {
                expand(t, &mut rows);
            }
            let mut flat = Vec::with_capacity(rows.len() * (n + 1));
            for r in rows {
                flat.extend(r);
                flat.push(x as i64);
            }
            flat
        })
        .collect();
    let total: usize = levels.iter().map(|l| l.len()).sum::<usize>() / (n + 1);
    if total > cap {
        return Err(Error::Resource(format!("{total} points exceed the cap {cap}")));
    }
    let num: Vec<i64> = levels.into_iter().flatten().collect();
    let w = (1u64 << n) * factorial(n);
    OrbitDataset::from_exact(n, q, num, 1, w, "lorentz")
}

/// Level counts of the integer backend up to `x_{n+1} ≤ Q²/2`, without
/// materializing points. For `n = 3` this uses a factorization sieve and
/// reaches `x₄` in the thousands quickly.
pub fn lorentz_level_counts(n: usize, q: f64) -> Result<LevelCounts> {
    check_n_q(n, q)?;
    let x_max = level_cap(q);
    let counts = if n == 3 {
        level_counts_n3(x_max)
    } else {
        level_counts_generic(n, x_max)
    };
    Ok(LevelCounts {
        n,
        denom: 1,
        levels: counts
            .into_iter()
            .enumerate()
            .filter(|&(x, c)| x >= 1 && c > 0)
            .map(|(x, c)| (x as i64, c))
            .collect(),
    })
}

/// Counts indexed by `x_{n+1}` (entry 0 unused).
fn level_counts_generic(n: usize, x_max: u64) -> Vec<u64> {
    let mut out = vec![0u64; x_max as usize + 1];
    let counts: Vec<u64> = (1..=x_max)
        .into_par_iter()
        .map(|x| {
            let mut tuples = Vec::new();
            canonical_tuples(x * x - 1, n, u64::MAX, &mut Vec::new(), &mut tuples);
            tuples.iter().map(|t| orbit_size(t)).sum()
        })
        .collect();
    out[1..].copy_from_slice(&counts);
    out
}

fn primes_upto(m: usize) -> Vec<u64> {
    let mut sieve = vec![true; m + 1];
    let mut out = Vec::new();
    for i in 2..=m {
        if sieve[i] {
            out.push(i as u64);
            let mut j = i * i;
            while j <= m {
                sieve[j] = false;
                j += i;
            }
        }
    }
    out
}

const MAX_FACTORS: usize = 12;

#[derive(Clone, Copy)]
struct Factored {
    rem: u64,
    len: u8,
    f: [(u64, u8); MAX_FACTORS],
}

/// `n = 3`: for each `(x₁, x₂)` with `x₁ ≥ x₂ ≥ 0` write
/// `N = 1 + x₁² + x₂² = (x₄ − x₃)(x₄ + x₃)` and read the solutions off the
/// divisors of `N`. Each row `x₁ = const` is factored with a quadratic sieve
/// over `x₂`, since `p | N` iff `x₂² ≡ −(1 + x₁²) (mod p)`.
fn level_counts_n3(x_max: u64) -> Vec<u64> {
    let x = x_max;
    let primes = primes_upto(x.max(2) as usize);
    // roots[i][a] = a square root of a modulo primes[i], or u32::MAX.
    let roots: Vec<Vec<u32>> = primes
        .iter()
        .map(|&p| {
            let mut t = vec![u32::MAX; p as usize];
            for r in 0..p {
                let a = (r * r % p) as usize;
                if t[a] == u32::MAX {
                    t[a] = r as u32;
                }
            }
            t
        })
        .collect();
    let xx = x * x;
    let rows: Vec<u64> = (0..x).filter(|&a| 1 + a * a <= xx).collect();
    rows.into_par_iter()
        .fold(
            || vec![0u64; x as usize + 1],
            |mut acc, x1| {
                let c = 1 + x1 * x1;
                let hi = x1.min(isqrt(xx - c));
                let len = hi as usize + 1;
                let mut fs: Vec<Factored> = (0..=hi)
                    .map(|x2| Factored {
                        rem: c + x2 * x2,
                        len: 0,
                        f: [(0, 0); MAX_FACTORS],
                    })
                    .collect();
                for (pi, &p) in primes.iter().enumerate() {
                    if p * p > c + hi * hi {
                        break;
                    }
                    let r = roots[pi][((p - c % p) % p) as usize];
                    if r == u32::MAX {
                        continue;
                    }
                    let r = r as u64;
                    let starts = if r == 0 || 2 * r == p { [r, u64::MAX] } else { [r, p - r] };
                    for s in starts {
                        let mut j = s;
                        while j <= hi {
                            let e = &mut fs[j as usize];
                            let mut k = 0u8;
                            while e.rem % p == 0 {
                                e.rem /= p;
                                k += 1;
                            }
                            debug_assert!(k > 0);
                            e.f[e.len as usize] = (p, k);
                            e.len += 1;
                            j += p;
                        }
                    }
                }
                let mut divs: Vec<u64> = Vec::with_capacity(256);
                for (x2, e) in fs.iter_mut().enumerate().take(len) {
                    let x2 = x2 as u64;
                    if e.rem > 1 {
                        e.f[e.len as usize] = (e.rem, 1);
                        e.len += 1;
                    }
                    let big_n = c + x2 * x2;
                    let quarter = match big_n % 4 {
                        2 => continue,
                        0 => true,
                        _ => false,
                    };
                    let target = if quarter { big_n / 4 } else { big_n };
                    divs.clear();
                    divs.push(1);
                    for &(p, k) in &e.f[..e.len as usize] {
                        let k = if quarter && p == 2 { k - 2 } else { k };
                        let m = divs.len();
                        let mut pk = 1;
                        for _ in 0..k {
                            pk *= p;
                            for i in 0..m {
                                divs.push(divs[i] * pk);
                            }
                        }
                    }
                    let pair_w: u64 = if x1 == 0 {
                        1
                    } else if x2 == 0 || x2 == x1 {
                        4
                    } else {
                        8
                    };
                    for &d in &divs {
                        if d * d > target {
                            continue;
                        }
                        let e2 = target / d;
                        let (x4, x3) = if quarter { (d + e2, e2 - d) } else { ((d + e2) / 2, (e2 - d) / 2) };
                        if x4 <= x {
                            acc[x4 as usize] += pair_w * if x3 == 0 { 1 } else { 2 };
                        }
                    }
                }
                acc
            },
        )
        .reduce(
            || vec![0u64; x as usize + 1],
            |mut a, b| {
                for (u, v) in a.iter_mut().zip(b) {
                    *u += v;
                }
                a
            },
        )
}

fn ext_gcd(a: i64, b: i64) -> (i64, i64, i64) {
    if b == 0 {
        (a, 1, 0)
    } else {
        let (g, x, y) = ext_gcd(b, a % b);
        (g, y, x - (a / b) * y)
    }
}

/// The orbit of `i` under PSL(2,ℤ), embedded in the hyperboloid by
/// `x + iy ↦ ((x²+y²−1)/2y, x/y, (x²+y²+1)/2y)`, inside `2x₃ ≤ Q²`.
///
/// For `γ = [[a, b], [c, d]]` the image of `γi` is
/// `(a²+b²−c²−d², 2(ac+bd), a²+b²+c²+d²)/2`, so points are stored exactly
/// with denominator 2. Elements are enumerated by their bottom row: for each
/// coprime `(c, d)` the top rows form one arithmetic progression, and only
/// the `k` with `a²+b²+c²+d² ≤ Q²` are visited. The stabilizer of `i` has
/// order 2, so every point is hit twice and deduplicated.
pub fn psl2z_orbit(q: f64, cap: usize) -> Result<OrbitDataset> {
    check_n_q(2, q)?;
    let estimate = 1.5 * q * q;
    if estimate > cap as f64 {
        return Err(Error::Resource(format!("about {estimate:.3e} orbit points expected; cap is {cap}")));
    }
    let q2 = (q * q * (1.0 + 1e-12)).floor() as i64;
    let cmax = isqrt(q2 as u64) as i64;
    let rows: Vec<i64> = (0..=cmax).collect();
    let chunks: Vec<Vec<[i64; 3]>> = rows
        .into_par_iter()
        .map(|c| {
            let mut pts = Vec::new();
            let dlim = isqrt((q2 - c * c).max(0) as u64) as i64;
            for d in -dlim..=dlim {
                // One representative of ±γ: c > 0, or c = 0 and d = 1.
                if c == 0 && d != 1 {
                    continue;
                }
                let (g, s, u) = ext_gcd(d, c);
                if g.abs() != 1 {
                    continue;
                }
                // a·d − b·c = 1 with a = s·g, b = −u·g.
                let (a0, b0) = (s * g, -u * g);
                let cd = c * c + d * d;
                let room = q2 - cd;
                if room < 1 {
                    continue;
                }
                let k0 = if c == 0 {
                    -b0 / d
                } else {
                    (-(a0 * c + b0 * d) as f64 / cd as f64).round() as i64
                };
                let mut push = |k: i64| -> bool {
                    let (a, b) = (a0 + k * c, b0 + k * d);
                    let ab = a * a + b * b;
                    if ab > room {
                        return false;
                    }
                    pts.push([ab - cd, 2 * (a * c + b * d), ab + cd]);
                    true
                };
                push(k0);
                let mut k = k0 + 1;
                while push(k) {
                    k += 1;
                }
                let mut k = k0 - 1;
                while push(k) {
                    k -= 1;
                }
            }
            pts
        })
        .collect();
    let mut pts: Vec<[i64; 3]> = chunks.into_iter().flatten().collect();
    pts.par_sort_unstable();
    pts.dedup();
    if pts.len() > cap {
        return Err(Error::Resource(format!("{} orbit points exceed the cap {cap}", pts.len())));
    }
    let num: Vec<i64> = pts.into_iter().flatten().collect();
    OrbitDataset::from_exact(2, q, num, 2, 2, "psl2z")
}

const HEADER_TAG: &str = "#hyperangle orbit v1";

/// Writes the v1 text format.
pub fn save_orbit(ds: &OrbitDataset, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut out = BufWriter::new(file);
    write_orbit(ds, &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn write_orbit<W: Write>(ds: &OrbitDataset, out: &mut W) -> Result<()> {
    write_orbit_annotated(ds, &[], out)
}

/// Like [`write_orbit`], with extra `#` comment lines after the header.
pub fn write_orbit_annotated<W: Write>(ds: &OrbitDataset, notes: &[String], out: &mut W) -> Result<()> {
    let veff = ds.v_eff.map(fmt_sig17).unwrap_or_else(|| "na".into());
    writeln!(
        out,
        "{HEADER_TAG} n={} q={} veff={} w={} source={}",
        ds.n,
        fmt_sig17(ds.q),
        veff,
        ds.w,
        ds.source
    )?;
    for note in notes {
        writeln!(out, "# {note}")?;
    }
    let d = ds.n + 1;
    let mut line = String::new();
    for i in 0..ds.len() {
        line.clear();
        match &ds.store {
            Store::Exact { num, denom } => {
                for (j, &x) in num[i * d..(i + 1) * d].iter().enumerate() {
                    if j > 0 {
                        line.push(',');
                    }
                    if *denom == 1 || x % denom == 0 {
                        line.push_str(&(x / denom).to_string());
                    } else {
                        // Shortest round-trip form; exact for halves.
                        line.push_str(&(x as f64 / *denom as f64).to_string());
                    }
                }
            }
            Store::Real => {
                for (j, &x) in ds.coords(i).iter().enumerate() {
                    if j > 0 {
                        line.push(',');
                    }
                    line.push_str(&fmt_sig17(x));
                }
            }
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

struct Header {
    n: usize,
    q: f64,
    v_eff: Option<f64>,
    w: u64,
    source: String,
}

fn parse_header(line: &str) -> Result<Header> {
    let perr = |msg: String| Error::Parse { line: 1, msg };
    let rest = line
        .strip_prefix(HEADER_TAG)
        .ok_or_else(|| perr(format!("expected header starting with '{HEADER_TAG}'")))?;
    let (mut n, mut q, mut v_eff, mut w, mut source) = (None, None, None, None, None);
    for field in rest.split_whitespace() {
        let (k, v) = field
            .split_once('=')
            .ok_or_else(|| perr(format!("malformed header field '{field}'")))?;
        let bad = |_| perr(format!("bad value in header field '{field}'"));
        match k {
            "n" => n = Some(v.parse::<usize>().map_err(|e| bad(e.to_string()))?),
            "q" => q = Some(v.parse::<f64>().map_err(|e| bad(e.to_string()))?),
            "veff" => {
                v_eff = Some(if v == "na" {
                    None
                } else {
                    Some(v.parse::<f64>().map_err(|e| bad(e.to_string()))?)
                })
            }
            "w" => w = Some(v.parse::<u64>().map_err(|e| bad(e.to_string()))?),
            "source" => source = Some(v.to_string()),
            _ => return Err(perr(format!("unknown header field '{k}'"))),
        }
    }
    let missing = |k: &str| perr(format!("header lacks '{k}='"));
    Ok(Header {
        n: n.ok_or_else(|| missing("n"))?,
        q: q.ok_or_else(|| missing("q"))?,
        v_eff: v_eff.ok_or_else(|| missing("veff"))?,
        w: w.ok_or_else(|| missing("w"))?,
        source: source.ok_or_else(|| missing("source"))?,
    })
}

/// Reads the v1 text format. Rows missing the hyperboloid by more than
/// `1e−6 · max(1, x_{n+1})²` are rejected. Data that is exactly integral
/// (or half-integral) and satisfies the quadric exactly is stored exactly.
pub fn load_orbit(path: &Path) -> Result<OrbitDataset> {
    let file = std::fs::File::open(path)?;
    read_orbit(std::io::BufReader::new(file))
}

pub fn read_orbit<R: BufRead>(reader: R) -> Result<OrbitDataset> {
    let mut lines = reader.lines();
    let first = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "empty file".into(),
    })??;
    let h = parse_header(first.trim_end())?;
    check_n_q(h.n, h.q).map_err(|e| Error::Parse {
        line: 1,
        msg: e.to_string(),
    })?;
    let d = h.n + 1;
    let mut coords = Vec::new();
    for (idx, line) in lines.enumerate() {
        let lineno = idx + 2;
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                line: lineno,
                msg: format!("{e}: '{line}'"),
            })?;
        if row.len() != d {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected {d} values for n={}, found {}", h.n, row.len()),
            });
        }
        check_real_row(coords.len() / d, &row, h.q, 1e-6).map_err(|e| {
            Error::InvariantViolation(format!("line {lineno}: {e}"))
        })?;
        coords.extend(row);
    }
    let exact = [1i64, 2].into_iter().find_map(|den| {
        let num: Option<Vec<i64>> = coords
            .iter()
            .map(|&x| {
                let y = x * den as f64;
                (y == y.round() && y.abs() < 9e15).then_some(y as i64)
            })
            .collect();
        let num = num?;
        let ok = num.chunks_exact(d).all(|r| {
            let s: i128 = r[..h.n].iter().map(|&x| x as i128 * x as i128).sum();
            s - r[h.n] as i128 * r[h.n] as i128 == -(den as i128 * den as i128)
        });
        ok.then_some((num, den))
    });
    let mut ds = match exact {
        Some((num, den)) => OrbitDataset::from_exact(h.n, h.q, num, den, h.w, &h.source)?,
        None => OrbitDataset::from_real(h.n, h.q, coords, 1e-6, h.w, &h.source)?,
    };
    if let Some(v) = h.v_eff {
        ds.set_v_eff(v).map_err(|e| Error::Parse {
            line: 1,
            msg: e.to_string(),
        })?;
    }
    Ok(ds)
}

/// Non-base points whose direction lies inside the cone.
pub fn cone_filter(ds: &OrbitDataset, cone: &Cone) -> Result<OrbitDataset> {
    if cone.axis.len() != ds.n {
        return Err(Error::Usage(format!(
            "cone axis has dimension {}, dataset has n = {}",
            cone.axis.len(),
            ds.n
        )));
    }
    let keep: Vec<usize> = (0..ds.len())
        .filter(|&i| ds.dir(i).is_some_and(|d| cone.contains_dir(d)))
        .collect();
    let mut out = ds.subset(&keep);
    out.cone = Some(cone.clone());
    Ok(out)
}

/// Outcome of fitting `count(Q′) ≈ vol(B_{Q′}) / V`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovolumeFit {
    pub v_eff: f64,
    /// Root mean square of `count·V/vol − 1` over the samples.
    pub rel_rms: f64,
    /// `(Q′, count, vol(B_{Q′}))`
    pub samples: Vec<(f64, u64, f64)>,
}

/// Least squares in relative terms: minimizing `Σ (count/vol − 1/V)²` over
/// an evenly spaced grid of `Q′ ∈ [q_lo, q_hi]`.
pub fn fit_covolume<C: Fn(f64) -> u64>(
    n: usize,
    count: C,
    q_lo: f64,
    q_hi: f64,
    samples: usize,
) -> Result<CovolumeFit> {
    if !(q_lo * q_lo > 2.0) || !(q_hi > q_lo) || samples < 2 {
        return Err(Error::Usage(format!(
            "need 2 < Q_lo² < Q_hi² and at least 2 samples, got [{q_lo}, {q_hi}] with {samples}"
        )));
    }
    let lo_count = count(q_lo);
    if lo_count < 100 {
        return Err(Error::Precondition(format!(
            "only {lo_count} points within Q = {q_lo}; at least 100 needed"
        )));
    }
    let mut rows = Vec::with_capacity(samples);
    for i in 0..samples {
        let qq = q_lo + (q_hi - q_lo) * i as f64 / (samples - 1) as f64;
        rows.push((qq, count(qq), vol_ball(qq, n)?));
    }
    let u = rows.iter().map(|r| r.1 as f64 / r.2).sum::<f64>() / samples as f64;
    let v = 1.0 / u;
    let rel_rms = (rows
        .iter()
        .map(|r| (r.1 as f64 * v / r.2 - 1.0).powi(2))
        .sum::<f64>()
        / samples as f64)
        .sqrt();
    Ok(CovolumeFit {
        v_eff: v,
        rel_rms,
        samples: rows,
    })
}

/// Calibrates `V_eff` from the dataset's own point counts and stores it.
pub fn effective_covolume(ds: &mut OrbitDataset, q_lo: f64, q_hi: f64, samples: usize) -> Result<CovolumeFit> {
    if ds.len() < 2 {
        return Err(Error::Precondition(format!("{} points are too few to calibrate", ds.len())));
    }
    if q_hi > ds.q * (1.0 + 1e-12) {
        return Err(Error::Precondition(format!("fit range ends at {q_hi} beyond the dataset's Q = {}", ds.q)));
    }
    let fit = fit_covolume(ds.n, |qq| ds.count_within(qq) as u64, q_lo, q_hi, samples)?;
    ds.v_eff = Some(fit.v_eff);
    Ok(fit)
}

/// Sorted distinct distances of non-base points up to `t_max`, with
/// multiplicities. Exact datasets group by the last coordinate; float
/// datasets within [`T_GROUP_TOL`].
pub fn distance_spectrum(ds: &OrbitDataset, t_max: f64) -> Result<DistanceSpectrum> {
    let t_q = (ds.q * ds.q / 2.0).acosh();
    if t_max > t_q * (1.0 + 1e-12) + 1e-12 {
        return Err(Error::Precondition(format!("t_max = {t_max} exceeds arccosh(Q²/2) = {t_q}")));
    }
    if let Some(levels) = ds.level_counts() {
        return levels.spectrum(t_max, ds.source());
    }
    let raw: Vec<SpectrumEntry> = (0..ds.len())
        .filter(|&i| Some(i) != ds.base_index && ds.t[i] <= t_max)
        .map(|i| SpectrumEntry { t: ds.t[i], mult: 1 })
        .collect();
    DistanceSpectrum::from_unsorted(raw, T_GROUP_TOL, ds.source())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{angle_at_base, direction, hyperbolic_distance, HyperboloidPoint};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;

    fn rows(ds: &OrbitDataset) -> Vec<Vec<i64>> {
        let (num, _) = ds.exact().unwrap();
        num.chunks_exact(ds.n() + 1).map(|r| r.to_vec()).collect()
    }

    #[test]
    fn lorentz_small_examples() {
        let ds = enumerate_lorentz(2, 6f64.sqrt(), DEFAULT_POINT_CAP).unwrap();
        let got = rows(&ds);
        assert_eq!(got.len(), 5);
        assert_eq!(got[0], vec![0, 0, 1]);
        for r in &got[1..] {
            assert_eq!((r[0].abs(), r[1].abs(), r[2]), (2, 2, 3));
        }
        assert_eq!(ds.base_index(), Some(0));
        assert_eq!(ds.w(), 8);

        let ds = enumerate_lorentz(3, 2.0, DEFAULT_POINT_CAP).unwrap();
        let got = rows(&ds);
        assert_eq!(got.len(), 9);
        for r in &got[1..] {
            assert_eq!(r.iter().map(|x| x.abs()).collect::<Vec<_>>(), vec![1, 1, 1, 2]);
        }
        assert_eq!(ds.w(), 48);
    }

    #[test]
    fn lorentz_matches_brute_force() {
        for (n, x_max) in [(2usize, 40i64), (3, 12), (4, 6)] {
            let q = (2.0 * x_max as f64).sqrt();
            let ds = enumerate_lorentz(n, q, DEFAULT_POINT_CAP).unwrap();
            let mut want = BTreeSet::new();
            let r = x_max;
            let mut v = vec![-r; n];
            'outer: loop {
                let s: i64 = v.iter().map(|x| x * x).sum();
                let x = ((s + 1) as f64).sqrt().round() as i64;
                if x * x == s + 1 && x <= x_max {
                    let mut row = v.clone();
                    row.push(x);
                    want.insert(row);
                }
                for i in 0..n {
                    if v[i] < r {
                        v[i] += 1;
                        continue 'outer;
                    }
                    v[i] = -r;
                }
                break;
            }
            let got: BTreeSet<Vec<i64>> = rows(&ds).into_iter().collect();
            assert_eq!(got, want, "n={n}");
        }
    }

    #[test]
    fn lorentz_symmetric_under_signed_permutations() {
        let ds = enumerate_lorentz(3, 10.0, DEFAULT_POINT_CAP).unwrap();
        let set: BTreeSet<Vec<i64>> = rows(&ds).into_iter().collect();
        for r in &set {
            let images = [
                vec![-r[0], r[1], r[2], r[3]],
                vec![r[1], r[0], r[2], r[3]],
                vec![r[2], r[1], -r[0], r[3]],
            ];
            for im in images {
                assert!(set.contains(&im));
            }
        }
    }

    #[test]
    fn level_count_paths_agree() {
        for n in [2usize, 3, 4] {
            let q = 14.0;
            let ds = enumerate_lorentz(n, q, DEFAULT_POINT_CAP).unwrap();
            let from_points = ds.level_counts().unwrap();
            let direct = lorentz_level_counts(n, q).unwrap();
            assert_eq!(from_points, direct, "n={n}");
        }
        let x = 700;
        let fast = level_counts_n3(x);
        let slow = level_counts_generic(3, x);
        assert_eq!(fast, slow);
    }

    #[test]
    fn resource_cap() {
        assert!(matches!(enumerate_lorentz(3, 100.0, 1000), Err(Error::Resource(_))));
        assert!(matches!(psl2z_orbit(100.0, 1000), Err(Error::Resource(_))));
        assert!(matches!(enumerate_lorentz(1, 10.0, 1000), Err(Error::Usage(_))));
        assert!(matches!(enumerate_lorentz(2, 1.0, 1000), Err(Error::Usage(_))));
    }

    fn psl2z_brute(q: f64) -> BTreeSet<Vec<i64>> {
        let r = q.floor() as i64;
        let mut out = BTreeSet::new();
        for a in -r..=r {
            for b in -r..=r {
                for c in -r..=r {
                    for d in -r..=r {
                        let nrm = a * a + b * b + c * c + d * d;
                        if a * d - b * c == 1 && nrm as f64 <= q * q {
                            out.insert(vec![a * a + b * b - c * c - d * d, 2 * (a * c + b * d), nrm]);
                        }
                    }
                }
            }
        }
        out
    }

    #[test]
    fn psl2z_matches_brute_force() {
        for q in [2.0, 5.5, 11.0] {
            let ds = psl2z_orbit(q, DEFAULT_POINT_CAP).unwrap();
            let got: BTreeSet<Vec<i64>> = rows(&ds).into_iter().collect();
            assert_eq!(got.len(), ds.len());
            assert_eq!(got, psl2z_brute(q), "Q={q}");
        }
    }

    #[test]
    fn psl2z_examples() {
        let ds = psl2z_orbit(3.0, DEFAULT_POINT_CAP).unwrap();
        assert_eq!(ds.coords(0), &[0.0, 0.0, 1.0]);
        assert_eq!(ds.base_index(), Some(0));
        assert_eq!(ds.w(), 2);
        assert!(ds.v_eff().is_none());
        // T·i = 1 + i.
        let found = (0..ds.len()).any(|i| ds.coords(i) == [0.5, 1.0, 1.5]);
        assert!(found);
        // No norm 2 element besides the identity; the next are √3 and √6.
        let (num, _) = ds.exact().unwrap();
        let norms: BTreeSet<i64> = num.chunks_exact(3).map(|r| r[2]).collect();
        assert_eq!(norms.iter().take(4).copied().collect::<Vec<_>>(), vec![2, 3, 6, 7]);
    }

    fn half_plane(ds: &OrbitDataset, i: usize) -> (f64, f64) {
        // Inverse of the embedding: y = 1/(X₃ − X₁), x = X₂·y.
        let c = ds.coords(i);
        let y = 1.0 / (c[2] - c[0]);
        (c[1] * y, y)
    }

    #[test]
    fn psl2z_embedding_is_isometric_and_conformal() {
        let ds = psl2z_orbit(40.0, DEFAULT_POINT_CAP).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = |i: usize| HyperboloidPoint::from_coords(ds.coords(i).to_vec()).unwrap();
        for _ in 0..100 {
            let i = rng.gen_range(1..ds.len());
            let j = rng.gen_range(1..ds.len());
            if i == j {
                continue;
            }
            let (zx, zy) = half_plane(&ds, i);
            let (wx, wy) = half_plane(&ds, j);
            let h = 1.0 + ((zx - wx).powi(2) + (zy - wy).powi(2)) / (2.0 * zy * wy);
            let d = hyperbolic_distance(&p(i), &p(j)).unwrap();
            assert!((h.acosh() - d).abs() < 1e-9);
            // Angle at i between geodesics: the initial tangent at i toward
            // z is the direction of the Möbius image (z − i)/(z + i) in the
            // disk model.
            let disk = |x: f64, y: f64| {
                let den = x * x + (y + 1.0).powi(2);
                [(x * x + y * y - 1.0) / den, -2.0 * x / den]
            };
            let (a, b) = (disk(zx, zy), disk(wx, wy));
            let want = unit_angle(&direction(&a).unwrap(), &direction(&b).unwrap());
            let got = angle_at_base(&p(i), &p(j)).unwrap().radians();
            assert!((want - got).abs() < 1e-8, "{want} {got}");
        }
    }

    #[test]
    fn round_trip_and_format_errors() {
        let dir = tempfile::tempdir().unwrap();
        for ds in [
            enumerate_lorentz(3, 8.0, DEFAULT_POINT_CAP).unwrap(),
            psl2z_orbit(20.0, DEFAULT_POINT_CAP).unwrap(),
        ] {
            let path = dir.path().join("o.csv");
            save_orbit(&ds, &path).unwrap();
            let back = load_orbit(&path).unwrap();
            assert_eq!(back, ds);
        }
        let mut ds = psl2z_orbit(5.0, DEFAULT_POINT_CAP).unwrap();
        ds.set_v_eff(2.0).unwrap();
        let mut buf = Vec::new();
        write_orbit(&ds, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("#hyperangle orbit v1 n=2 q=5.0000000000000000 veff=2.0000000000000000 w=2 source=psl2z\n"));
        assert_eq!(read_orbit(text.as_bytes()).unwrap().v_eff(), Some(2.0));

        let bad = "#hyperangle orbit v1 n=2 q=10 veff=na w=1 source=x\n0,0,1\n# note\n1,1,1.7\n";
        match read_orbit(bad.as_bytes()) {
            Err(Error::InvariantViolation(m)) => assert!(m.contains("line 4"), "{m}"),
            other => panic!("{other:?}"),
        }
        let wide = "#hyperangle orbit v1 n=3 q=10 veff=na w=1 source=x\n0,0,1\n";
        assert!(matches!(read_orbit(wide.as_bytes()), Err(Error::Parse { line: 2, .. })));
        let nohead = "0,0,1\n";
        assert!(matches!(read_orbit(nohead.as_bytes()), Err(Error::Parse { line: 1, .. })));
        let dup = "#hyperangle orbit v1 n=2 q=10 veff=na w=1 source=x\n2,2,3\n2,2,3\n";
        assert!(matches!(read_orbit(dup.as_bytes()), Err(Error::InvariantViolation(_))));
    }

    #[test]
    fn real_datasets_load_as_real() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut coords = vec![0.0, 0.0, 1.0];
        for _ in 0..50 {
            let t: f64 = rng.gen_range(0.1..3.0);
            let a: f64 = rng.gen_range(0.0..6.28);
            coords.extend([t.sinh() * a.cos(), t.sinh() * a.sin(), t.cosh()]);
        }
        let ds = OrbitDataset::from_real(2, 10.0, coords, 1e-9, 1, "synthetic").unwrap();
        let mut buf = Vec::new();
        write_orbit(&ds, &mut buf).unwrap();
        let back = read_orbit(buf.as_slice()).unwrap();
        assert!(back.exact().is_none());
        assert_eq!(back.len(), 51);
        for i in 0..51 {
            for (a, b) in back.coords(i).iter().zip(ds.coords(i)) {
                assert!((a - b).abs() <= 1e-15 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn cone_filter_examples() {
        let ds = enumerate_lorentz(2, 30.0, DEFAULT_POINT_CAP).unwrap();
        let all = cone_filter(&ds, &Cone::new(vec![1.0, 0.0], std::f64::consts::PI - 1e-12).unwrap()).unwrap();
        assert_eq!(all.len(), ds.len() - 1);
        assert!(all.base_index().is_none());
        let half = cone_filter(&ds, &Cone::new(vec![1.0, 0.0], std::f64::consts::FRAC_PI_2).unwrap()).unwrap();
        let want = (0..ds.len()).filter(|&i| ds.coords(i)[0] > 0.0).count();
        assert_eq!(half.len(), want);
        assert!((0..half.len()).all(|i| half.coords(i)[0] > 0.0));
        assert!(half.cone().is_some());
        // Directions of this dataset are at least ~1e-4 apart.
        let none = cone_filter(&ds, &Cone::new(vec![0.3, 0.7], 1e-9).unwrap()).unwrap();
        assert!(none.is_empty());
        assert!(Cone::new(vec![0.0, 0.0], 1.0).is_err());
        assert!(Cone::new(vec![1.0, 0.0], 3.5).is_err());
        let c = Cone::new(vec![3.0, 4.0], 1.0).unwrap();
        assert!((c.axis()[0] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn covolume_psl2z() {
        let mut ds = psl2z_orbit(200.0, DEFAULT_POINT_CAP).unwrap();
        let fit = effective_covolume(&mut ds, 50.0, 200.0, 16).unwrap();
        let want = 2.0 * std::f64::consts::PI / 3.0;
        assert!((fit.v_eff / want - 1.0).abs() < 0.02, "{}", fit.v_eff);
        assert_eq!(ds.v_eff(), Some(fit.v_eff));
        assert!(matches!(
            effective_covolume(&mut ds, 50.0, 300.0, 4),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(
            effective_covolume(&mut ds, 3.0, 100.0, 4),
            Err(Error::Precondition(_))
        ));
        let mut one = psl2z_orbit(1.5, DEFAULT_POINT_CAP).unwrap();
        assert_eq!(one.len(), 1);
        assert!(matches!(effective_covolume(&mut one, 1.45, 1.5, 4), Err(Error::Precondition(_))));
    }

    #[test]
    fn covolume_recovers_planted_value() {
        // Points placed so that count(Q) = vol(B_Q)/V up to rounding.
        let (n, v, q) = (2usize, 0.37, 60.0f64);
        let total = (vol_ball(q, n).unwrap() / v).floor() as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut coords = vec![0.0, 0.0, 1.0];
        for i in 1..total {
            // vol_ball for n = 2 is 2π(cosh t − 1).
            let cosh_t = 1.0 + (i as f64 + 0.5) * v / (2.0 * std::f64::consts::PI);
            let s = (cosh_t * cosh_t - 1.0).sqrt();
            let a: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            coords.extend([s * a.cos(), s * a.sin(), cosh_t]);
        }
        let mut ds = OrbitDataset::from_real(n, q, coords, 1e-9, 1, "planted").unwrap();
        let fit = effective_covolume(&mut ds, 20.0, 60.0, 20).unwrap();
        assert!((fit.v_eff / v - 1.0).abs() < 0.01, "{}", fit.v_eff);
        assert!(fit.rel_rms < 0.01);
    }

    #[test]
    fn spectrum_examples() {
        let ds = enumerate_lorentz(2, 6f64.sqrt(), DEFAULT_POINT_CAP).unwrap();
        let s = distance_spectrum(&ds, 3f64.acosh()).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.entries()[0].mult, 4);
        assert!((s.entries()[0].t - 3f64.acosh()).abs() < 1e-15);
        assert!(distance_spectrum(&ds, 2.0).is_err());

        let ds = psl2z_orbit(30.0, DEFAULT_POINT_CAP).unwrap();
        let t_q = (450f64).acosh();
        let s = distance_spectrum(&ds, t_q).unwrap();
        let sum: u64 = s.entries().iter().map(|e| e.mult).sum();
        assert_eq!(sum as usize, ds.len() - 1);
        assert!(s.entries()[0].t > 0.0);
        // Same answer from the float path.
        let mut buf = Vec::new();
        write_orbit(&ds, &mut buf).unwrap();
        let coords: Vec<f64> = (0..ds.len()).flat_map(|i| ds.coords(i).to_vec()).collect();
        let real = OrbitDataset::from_real(2, 30.0, coords, 1e-9, 2, "psl2z").unwrap();
        let s2 = distance_spectrum(&real, t_q).unwrap();
        assert_eq!(s2.len(), s.len());
        for (a, b) in s.entries().iter().zip(s2.entries()) {
            assert_eq!(a.mult, b.mult);
            assert!((a.t - b.t).abs() < 1e-12);
        }
    }
}
