//! Empirical pair correlation of base-point angles in an orbit dataset.
//!
//! Pairs are ordered and counted exactly with integer counters. Pairs
//! involving the base point are left out of `R_{2,Q}` and tallied
//! separately.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{hyperbolic_distance, unit_angle, HyperboloidPoint};
use crate::lattice::{Cone, OrbitDataset};
use crate::util::fmt_sig17;

/// Slack added to candidate windows so that rounding never drops a point
/// that passes the exact test.
const WINDOW_SLACK: f64 = 1e-9;
const LEAF_SIZE: usize = 16;

#[derive(Debug, Clone)]
enum Layout {
    /// `n = 2`: polar angles, sorted.
    Circle { phi: Vec<(f64, u32)> },
    /// `n = 3`: bands of colatitude, each sorted by longitude.
    Bands {
        height: f64,
        bands: Vec<Vec<(f64, u32)>>,
    },
    /// `n ≥ 4`: a tree of spherical caps.
    Caps { nodes: Vec<CapNode>, order: Vec<u32> },
}

#[derive(Debug, Clone)]
struct CapNode {
    center: Vec<f64>,
    radius: f64,
    start: usize,
    end: usize,
    children: Option<(usize, usize)>,
}

/// Exact fixed-radius angular search over unit directions in `R^n`.
#[derive(Debug, Clone)]
pub struct NeighborIndex {
    n: usize,
    max_radius: f64,
    dirs: Vec<f64>,
    ids: Vec<usize>,
    layout: Layout,
}

fn colatitude(d: &[f64]) -> f64 {
    (d[0] * d[0] + d[1] * d[1]).sqrt().atan2(d[2])
}

impl NeighborIndex {
    /// Indexes the non-base points of `ds`; ids are dataset indices.
    pub fn build(ds: &OrbitDataset, max_radius: f64) -> Result<Self> {
        let n = ds.n();
        let mut dirs = Vec::with_capacity(ds.len() * n);
        let mut ids = Vec::with_capacity(ds.len());
        for i in 0..ds.len() {
            if let Some(d) = ds.dir(i) {
                dirs.extend_from_slice(d);
                ids.push(i);
            }
        }
        Self::from_dirs(n, dirs, ids, max_radius)
    }

    /// `dirs` holds unit vectors back to back; `ids[j]` labels the `j`-th.
    pub fn from_dirs(n: usize, dirs: Vec<f64>, ids: Vec<usize>, max_radius: f64) -> Result<Self> {
        if n < 2 || dirs.len() != n * ids.len() {
            return Err(Error::Usage(format!(
                "{} coordinates do not describe {} directions in dimension {n}",
                dirs.len(),
                ids.len()
            )));
        }
        // Radii beyond π are allowed and simply cover the whole sphere.
        if !(max_radius >= 0.0) || !max_radius.is_finite() {
            return Err(Error::Usage(format!("index radius must be nonnegative, got {max_radius}")));
        }
        if ids.len() > u32::MAX as usize {
            return Err(Error::Resource("too many points for the neighbor index".into()));
        }
        let m = ids.len();
        let layout = match n {
            2 => {
                let mut phi: Vec<(f64, u32)> = (0..m)
                    .map(|j| (dirs[2 * j + 1].atan2(dirs[2 * j]), j as u32))
                    .collect();
                phi.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                Layout::Circle { phi }
            }
            3 => {
                // Roughly sqrt(m) bands, but never thinner than two radii.
                let target = std::f64::consts::PI / (m as f64).sqrt().max(1.0);
                let height = target.max(2.0 * max_radius).clamp(1e-6, std::f64::consts::PI);
                let count = (std::f64::consts::PI / height).ceil() as usize;
                let mut bands = vec![Vec::new(); count];
                for j in 0..m {
                    let d = &dirs[3 * j..3 * j + 3];
                    let b = ((colatitude(d) / height) as usize).min(count - 1);
                    bands[b].push((d[1].atan2(d[0]), j as u32));
                }
                for b in &mut bands {
                    b.sort_by(|a, c| a.0.total_cmp(&c.0).then(a.1.cmp(&c.1)));
                }
                Layout::Bands { height, bands }
            }
            _ => {
                let mut order: Vec<u32> = (0..m as u32).collect();
                let mut nodes = Vec::new();
                if m > 0 {
                    build_caps(&dirs, n, &mut order, 0, m, &mut nodes);
                }
                Layout::Caps { nodes, order }
            }
        };
        Ok(NeighborIndex {
            n,
            max_radius,
            dirs,
            ids,
            layout,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn max_radius(&self) -> f64 {
        self.max_radius
    }

    fn dir(&self, j: usize) -> &[f64] {
        &self.dirs[j * self.n..(j + 1) * self.n]
    }

    /// Calls `f(id, angle)` for every indexed point at angle `< radius` from
    /// `dir`.
    pub fn for_each_within<F: FnMut(usize, f64)>(&self, dir: &[f64], radius: f64, mut f: F) -> Result<()> {
        if dir.len() != self.n {
            return Err(Error::Usage("query direction has the wrong dimension".into()));
        }
        if radius > self.max_radius {
            return Err(Error::Precondition(format!(
                "query radius {radius} exceeds the index maximum {}",
                self.max_radius
            )));
        }
        let mut visit = |j: usize| {
            let a = unit_angle(dir, self.dir(j));
            if a < radius {
                f(self.ids[j], a);
            }
        };
        let pi = std::f64::consts::PI;
        match &self.layout {
            Layout::Circle { phi } => {
                let w = radius + WINDOW_SLACK;
                if w >= pi {
                    phi.iter().for_each(|e| visit(e.1 as usize));
                } else {
                    let c = dir[1].atan2(dir[0]);
                    scan_arc(phi, c - w, c + w, &mut visit);
                }
            }
            Layout::Bands { height, bands } => {
                let th = colatitude(dir);
                let lo = th - radius - WINDOW_SLACK;
                let hi = th + radius + WINDOW_SLACK;
                let b_lo = (lo.max(0.0) / height) as usize;
                let b_hi = ((hi.min(pi) / height) as usize).min(bands.len() - 1);
                let s = th.sin();
                // Largest longitude offset inside a cap that avoids the poles.
                let whole = lo <= 0.0 || hi >= pi || radius.sin() >= s;
                let c = dir[1].atan2(dir[0]);
                let w = if whole {
                    pi
                } else {
                    (radius.sin() / s).asin() + WINDOW_SLACK
                };
                for band in &bands[b_lo.min(bands.len() - 1)..=b_hi] {
                    if w >= pi {
                        band.iter().for_each(|e| visit(e.1 as usize));
                    } else {
                        scan_arc(band, c - w, c + w, &mut visit);
                    }
                }
            }
            Layout::Caps { nodes, order } => {
                if nodes.is_empty() {
                    return Ok(());
                }
                let mut stack = vec![0usize];
                while let Some(k) = stack.pop() {
                    let node = &nodes[k];
                    if unit_angle(dir, &node.center) - node.radius >= radius + WINDOW_SLACK {
                        continue;
                    }
                    match node.children {
                        Some((a, b)) => {
                            stack.push(b);
                            stack.push(a);
                        }
                        None => order[node.start..node.end].iter().for_each(|&j| visit(j as usize)),
                    }
                }
            }
        }
        Ok(())
    }

    /// Ids of all indexed points at angle `< radius` from `dir`, ascending.
    pub fn query(&self, dir: &[f64], radius: f64) -> Result<Vec<usize>> {
        let mut out = Vec::new();
        self.for_each_within(dir, radius, |id, _| out.push(id))?;
        out.sort_unstable();
        Ok(out)
    }
}

/// Visits entries of a longitude-sorted list with angle in `[lo, hi]`,
/// wrapping around `±π`. The arc is shorter than `2π`.
fn scan_arc<F: FnMut(usize)>(list: &[(f64, u32)], lo: f64, hi: f64, visit: &mut F) {
    let tau = std::f64::consts::TAU;
    let pi = std::f64::consts::PI;
    let mut range = |a: f64, b: f64| {
        let s = list.partition_point(|e| e.0 < a);
        for e in &list[s..] {
            if e.0 > b {
                break;
            }
            visit(e.1 as usize);
        }
    };
    if lo < -pi {
        range(lo + tau, pi);
        range(-pi, hi);
    } else if hi > pi {
        range(lo, pi);
        range(-pi, hi - tau);
    } else {
        range(lo, hi);
    }
}

fn build_caps(dirs: &[f64], n: usize, order: &mut [u32], start: usize, end: usize, nodes: &mut Vec<CapNode>) -> usize {
    let members = &order[start..end];
    let d = |j: u32| &dirs[j as usize * n..(j as usize + 1) * n];
    let mut mean = vec![0.0; n];
    for &j in members {
        for (m, x) in mean.iter_mut().zip(d(j)) {
            *m += x;
        }
    }
    let norm = mean.iter().map(|x| x * x).sum::<f64>().sqrt();
    let center: Vec<f64> = if norm > 1e-12 {
        mean.iter().map(|x| x / norm).collect()
    } else {
        d(members[0]).to_vec()
    };
    let radius = members
        .iter()
        .map(|&j| unit_angle(&center, d(j)))
        .fold(0.0, f64::max);
    let k = nodes.len();
    nodes.push(CapNode {
        center,
        radius,
        start,
        end,
        children: None,
    });
    if end - start > LEAF_SIZE {
        // Split at the median of the coordinate with the widest spread.
        let axis = (0..n)
            .max_by(|&a, &b| {
                let spread = |c: usize| {
                    let (lo, hi) = members.iter().fold((f64::MAX, f64::MIN), |(lo, hi), &j| {
                        let x = d(j)[c];
                        (lo.min(x), hi.max(x))
                    });
                    hi - lo
                };
                spread(a).total_cmp(&spread(b))
            })
            .unwrap_or(0);
        let slice = &mut order[start..end];
        slice.sort_by(|&a, &b| d(a)[axis].total_cmp(&d(b)[axis]).then(a.cmp(&b)));
        let mid = start + (end - start) / 2;
        let left = build_caps(dirs, n, order, start, mid, nodes);
        let right = build_caps(dirs, n, order, mid, end, nodes);
        nodes[k].children = Some((left, right));
    }
    k
}

/// Whether the curve was computed on the full dataset or inside a cone.
#[derive(Debug, Clone, PartialEq)]
pub enum CurveMode {
    Full,
    Cone(Cone),
}

/// `R_{2,Q}(ξ)` on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PairCorrCurve {
    pub xi_grid: Vec<f64>,
    pub r2q: Vec<f64>,
    /// Ordered qualifying pairs, base point excluded.
    pub pair_counts: Vec<u64>,
    /// Ordered pairs `(base, p)` and `(p, base)` that would qualify if the
    /// base point were given the direction `e₁`.
    pub base_pairs: Vec<u64>,
    pub q: f64,
    pub k: f64,
    pub point_count: usize,
    pub mode: CurveMode,
    /// Set when the dataset was too small to count anything.
    pub warning: Option<String>,
}

fn thresholds(xi_grid: &[f64], k: f64, q: f64) -> Result<Vec<f64>> {
    if !(k > 0.0) || !k.is_finite() {
        return Err(Error::Usage(format!("k must be positive, got {k}")));
    }
    if xi_grid.is_empty() || xi_grid.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
        return Err(Error::Usage("ξ grid must be nonempty and positive".into()));
    }
    if xi_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Usage("ξ grid must be increasing".into()));
    }
    Ok(xi_grid.iter().map(|x| 2.0 * k * x / (q * q)).collect())
}

/// Turns per-bucket counts into cumulative counts per grid point. Bucket `i`
/// holds pairs whose angle is below threshold `i` but not `i − 1`.
fn cumulate(buckets: &[u64]) -> Vec<u64> {
    buckets
        .iter()
        .scan(0u64, |s, &b| {
            *s += b;
            Some(*s)
        })
        .collect()
}

fn bucket_of(th: &[f64], a: f64) -> Option<usize> {
    let i = th.partition_point(|&t| t <= a);
    (i < th.len()).then_some(i)
}

fn sum_vecs(mut a: Vec<u64>, b: Vec<u64>) -> Vec<u64> {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
    a
}

fn base_pair_buckets(ds: &OrbitDataset, th: &[f64]) -> Vec<u64> {
    let mut e1 = vec![0.0; ds.n()];
    e1[0] = 1.0;
    let mut b = vec![0u64; th.len()];
    if ds.base_index().is_some() {
        for i in 0..ds.len() {
            if let Some(d) = ds.dir(i) {
                if let Some(j) = bucket_of(th, unit_angle(&e1, d)) {
                    b[j] += 2;
                }
            }
        }
    }
    cumulate(&b)
}

fn finish_curve(ds: &OrbitDataset, xi_grid: &[f64], k: f64, pairs: Vec<u64>, base: Vec<u64>, warning: Option<String>) -> PairCorrCurve {
    let denom = ds.len().max(1) as f64;
    PairCorrCurve {
        xi_grid: xi_grid.to_vec(),
        r2q: pairs.iter().map(|&c| c as f64 / denom).collect(),
        pair_counts: pairs,
        base_pairs: base,
        q: ds.q(),
        k,
        point_count: ds.len(),
        mode: match ds.cone() {
            Some(c) => CurveMode::Cone(c.clone()),
            None => CurveMode::Full,
        },
        warning,
    }
}

fn too_small(ds: &OrbitDataset, xi_grid: &[f64], k: f64) -> Option<PairCorrCurve> {
    let m = xi_grid.len();
    (ds.len() < 2).then(|| {
        log::warn!("dataset has {} points; pair correlation is identically zero", ds.len());
        finish_curve(ds, xi_grid, k, vec![0; m], vec![0; m], Some("fewer than 2 points".into()))
    })
}

/// `R_{2,Q}(ξ) = #{ordered (p, p′): p ≠ p′, v(p, p′) < 2kξ/Q²} / #points`
/// using the neighbor index. In a cone-filtered dataset the denominator is
/// the number of points in the cone.
pub fn pair_correlation(ds: &OrbitDataset, xi_grid: &[f64], k: f64) -> Result<PairCorrCurve> {
    let th = thresholds(xi_grid, k, ds.q())?;
    if let Some(c) = too_small(ds, xi_grid, k) {
        return Ok(c);
    }
    let r_max = *th.last().expect("nonempty grid");
    let index = NeighborIndex::build(ds, r_max)?;
    let m = th.len();
    let sources: Vec<usize> = (0..ds.len()).filter(|&i| ds.dir(i).is_some()).collect();
    let buckets = sources
        .par_iter()
        .try_fold(
            || vec![0u64; m],
            |mut acc, &i| -> Result<Vec<u64>> {
                let d = ds.dir(i).expect("non-base source");
                index.for_each_within(d, r_max, |j, a| {
                    if j != i {
                        if let Some(b) = bucket_of(&th, a) {
                            acc[b] += 1;
                        }
                    }
                })?;
                Ok(acc)
            },
        )
        .try_reduce(|| vec![0u64; m], |a, b| Ok(sum_vecs(a, b)))?;
    Ok(finish_curve(ds, xi_grid, k, cumulate(&buckets), base_pair_buckets(ds, &th), None))
}

/// The same count by comparing every pair directly.
pub fn pair_correlation_brute(ds: &OrbitDataset, xi_grid: &[f64], k: f64) -> Result<PairCorrCurve> {
    let th = thresholds(xi_grid, k, ds.q())?;
    if let Some(c) = too_small(ds, xi_grid, k) {
        return Ok(c);
    }
    let mut buckets = vec![0u64; th.len()];
    for i in 0..ds.len() {
        let Some(u) = ds.dir(i) else { continue };
        for j in 0..ds.len() {
            if i == j {
                continue;
            }
            let Some(v) = ds.dir(j) else { continue };
            if let Some(b) = bucket_of(&th, unit_angle(u, v)) {
                buckets[b] += 1;
            }
        }
    }
    Ok(finish_curve(ds, xi_grid, k, cumulate(&buckets), base_pair_buckets(ds, &th), None))
}

/// Empirical density on bins `[ξ_i, ξ_{i+1}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct G2Histogram {
    pub edges: Vec<f64>,
    pub values: Vec<f64>,
}

impl G2Histogram {
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Slopes of [`pair_correlation`] between consecutive edges.
pub fn empirical_g2(ds: &OrbitDataset, edges: &[f64], k: f64) -> Result<G2Histogram> {
    if ds.is_empty() {
        return Ok(G2Histogram {
            edges: Vec::new(),
            values: Vec::new(),
        });
    }
    let c = pair_correlation(ds, edges, k)?;
    Ok(G2Histogram {
        edges: edges.to_vec(),
        values: histogram_from_curve(&c),
    })
}

pub fn histogram_from_curve(c: &PairCorrCurve) -> Vec<f64> {
    c.xi_grid
        .windows(2)
        .zip(c.r2q.windows(2))
        .map(|(x, r)| (r[1] - r[0]) / (x[1] - x[0]))
        .collect()
}

/// Qualifying ordered pairs split by the distance between the two points.
#[derive(Debug, Clone, PartialEq)]
pub struct DistancePairCounts {
    /// `(t, pair count)` in the order of the requested list.
    pub entries: Vec<(f64, u64)>,
    /// Pairs whose distance matched no listed value.
    pub overflow: u64,
    pub q: f64,
    pub xi: f64,
    pub k: f64,
}

impl DistancePairCounts {
    pub fn total(&self) -> u64 {
        self.entries.iter().map(|e| e.1).sum::<u64>() + self.overflow
    }
}

/// Splits the qualifying ordered pairs at `ξ` by `d(p, p′)`. Exact datasets
/// compare `cosh d` as integers; float datasets match `t` within `1e−9`.
pub fn pairs_by_distance(ds: &OrbitDataset, xi: f64, k: f64, t_list: &[f64]) -> Result<DistancePairCounts> {
    let th = thresholds(&[xi], k, ds.q())?[0];
    let mut out = DistancePairCounts {
        entries: t_list.iter().map(|&t| (t, 0)).collect(),
        overflow: 0,
        q: ds.q(),
        xi,
        k,
    };
    if ds.len() < 2 {
        return Ok(out);
    }
    let n = ds.n();
    let d = n + 1;
    let index = NeighborIndex::build(ds, th)?;
    // Lookup keyed by the exact level (numerator of cosh t) or by t.
    let exact = ds.exact();
    let mut keys: Vec<(i128, usize)> = Vec::new();
    let mut tkeys: Vec<(f64, usize)> = t_list.iter().copied().zip(0..).collect();
    if let Some((_, den)) = exact {
        keys = t_list
            .iter()
            .enumerate()
            .map(|(i, &t)| ((t.cosh() * den as f64).round() as i128, i))
            .collect();
        keys.sort_unstable();
    }
    tkeys.sort_by(|a, b| a.0.total_cmp(&b.0));
    let m = t_list.len();
    let sources: Vec<usize> = (0..ds.len()).filter(|&i| ds.dir(i).is_some()).collect();
    let counts = sources
        .par_iter()
        .try_fold(
            || vec![0u64; m + 1],
            |mut acc, &i| -> Result<Vec<u64>> {
                let dir = ds.dir(i).expect("non-base source");
                let mut err = None;
                index.for_each_within(dir, th, |j, _| {
                    if j == i {
                        return;
                    }
                    let slot = match exact {
                        Some((num, den)) => {
                            let (a, b) = (&num[i * d..(i + 1) * d], &num[j * d..(j + 1) * d]);
                            let mut ip = a[n] as i128 * b[n] as i128;
                            for c in 0..n {
                                ip -= a[c] as i128 * b[c] as i128;
                            }
                            // ip = den² cosh d, and the level numerator is den·cosh d.
                            if ip % den as i128 != 0 {
                                None
                            } else {
                                let level = ip / den as i128;
                                keys.binary_search_by(|e| e.0.cmp(&level)).ok().map(|p| keys[p].1)
                            }
                        }
                        None => {
                            let p = HyperboloidPoint::from_coords(ds.coords(i).to_vec());
                            let q = HyperboloidPoint::from_coords(ds.coords(j).to_vec());
                            match (p, q) {
                                (Ok(p), Ok(q)) => match hyperbolic_distance(&p, &q) {
                                    Ok(t) => nearest(&tkeys, t),
                                    Err(e) => {
                                        err = Some(e);
                                        None
                                    }
                                },
                                (Err(e), _) | (_, Err(e)) => {
                                    err = Some(e);
                                    None
                                }
                            }
                        }
                    };
                    acc[slot.unwrap_or(m)] += 1;
                })?;
                match err {
                    Some(e) => Err(e),
                    None => Ok(acc),
                }
            },
        )
        .try_reduce(|| vec![0u64; m + 1], |a, b| Ok(sum_vecs(a, b)))?;
    for (e, &c) in out.entries.iter_mut().zip(&counts) {
        e.1 = c;
    }
    out.overflow = counts[m];
    if out.overflow > 0 {
        log::info!("{} pairs at distances outside the requested list", out.overflow);
    }
    Ok(out)
}

fn nearest(sorted: &[(f64, usize)], t: f64) -> Option<usize> {
    let p = sorted.partition_point(|e| e.0 < t);
    [p.checked_sub(1), Some(p)]
        .into_iter()
        .flatten()
        .filter(|&i| i < sorted.len() && (sorted[i].0 - t).abs() <= 1e-9)
        .map(|i| sorted[i].1)
        .next()
}

/// Writes `xi,r2q[,g2_emp]` with `#` metadata lines. The optional column is
/// the central difference of `r2q` (one-sided at the ends).
pub fn write_curve<W: Write>(c: &PairCorrCurve, with_g2: bool, out: &mut W) -> Result<()> {
    writeln!(out, "# Q={}", fmt_sig17(c.q))?;
    writeln!(out, "# k={}", fmt_sig17(c.k))?;
    writeln!(out, "# point_count={}", c.point_count)?;
    match &c.mode {
        CurveMode::Full => writeln!(out, "# mode=full")?,
        CurveMode::Cone(cone) => {
            let axis: Vec<String> = cone.axis().iter().map(|&a| fmt_sig17(a)).collect();
            writeln!(out, "# mode=cone axis={} theta={}", axis.join(","), fmt_sig17(cone.theta()))?
        }
    }
    if let Some(w) = &c.warning {
        writeln!(out, "# warning={w}")?;
    }
    writeln!(out, "{}", if with_g2 { "xi,r2q,g2_emp" } else { "xi,r2q" })?;
    let m = c.xi_grid.len();
    for i in 0..m {
        write!(out, "{},{}", fmt_sig17(c.xi_grid[i]), fmt_sig17(c.r2q[i]))?;
        if with_g2 {
            let g = if m < 2 {
                f64::NAN
            } else {
                let (a, b) = (i.saturating_sub(1), (i + 1).min(m - 1));
                (c.r2q[b] - c.r2q[a]) / (c.xi_grid[b] - c.xi_grid[a])
            };
            write!(out, ",{}", fmt_sig17(g))?;
        }
        writeln!(out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{cone_filter, distance_spectrum, enumerate_lorentz, psl2z_orbit, DEFAULT_POINT_CAP};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_dirs(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(n * m);
        for _ in 0..m {
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            out.extend(v.iter().map(|x| x / norm));
        }
        out
    }

    #[test]
    fn index_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in [2usize, 3, 4, 5] {
            let m = 2000;
            let dirs = random_dirs(&mut rng, n, m);
            for &max_r in &[0.05, 0.3, std::f64::consts::PI] {
                let idx = NeighborIndex::from_dirs(n, dirs.clone(), (0..m).collect(), max_r).unwrap();
                for _ in 0..100 {
                    let q = random_dirs(&mut rng, n, 1);
                    let r = rng.gen_range(0.0..max_r);
                    let want: Vec<usize> = (0..m)
                        .filter(|&j| unit_angle(&q, &dirs[j * n..(j + 1) * n]) < r)
                        .collect();
                    assert_eq!(idx.query(&q, r).unwrap(), want, "n={n} r={r}");
                }
            }
            let idx = NeighborIndex::from_dirs(n, dirs.clone(), (0..m).collect(), std::f64::consts::PI).unwrap();
            let q = &dirs[..n];
            // Every point except an exact antipode.
            assert_eq!(idx.query(q, std::f64::consts::PI).unwrap().len(), m);
            assert_eq!(idx.query(q, 0.0).unwrap().len(), 0);
            assert!(matches!(
                NeighborIndex::from_dirs(n, dirs.clone(), (0..m).collect(), 0.1).unwrap().query(q, 0.2),
                Err(Error::Precondition(_))
            ));
        }
    }

    #[test]
    fn index_handles_poles_and_wraparound() {
        let dirs = vec![0.0, 0.0, 1.0, 1e-7, 0.0, (1.0f64 - 1e-14).sqrt(), -1.0, 1e-9, 0.0, -1.0, -1e-9, 0.0];
        let idx = NeighborIndex::from_dirs(3, dirs, vec![0, 1, 2, 3], 0.1).unwrap();
        assert_eq!(idx.query(&[0.0, 0.0, 1.0], 1e-6).unwrap(), vec![0, 1]);
        assert_eq!(idx.query(&[-1.0, 0.0, 0.0], 1e-6).unwrap(), vec![2, 3]);
        let idx2 = NeighborIndex::from_dirs(2, vec![-1.0, 1e-9, -1.0, -1e-9], vec![0, 1], 0.1).unwrap();
        assert_eq!(idx2.query(&[-1.0, 0.0], 1e-6).unwrap(), vec![0, 1]);
    }

    fn two_point_dataset(angle: f64) -> OrbitDataset {
        let t: f64 = 1.0;
        let coords = vec![
            t.sinh(),
            0.0,
            t.cosh(),
            t.sinh() * angle.cos(),
            t.sinh() * angle.sin(),
            t.cosh(),
        ];
        OrbitDataset::from_real(2, 10.0, coords, 1e-9, 1, "test").unwrap()
    }

    #[test]
    fn tiny_examples() {
        let ds = two_point_dataset(1e-9);
        // Thresholds 2kξ/Q² are 2e-10 and 2e-2.
        let c = pair_correlation(&ds, &[1e-8, 1.0], 1.0).unwrap();
        assert_eq!(c.pair_counts, vec![0, 2]);
        assert_eq!(c.r2q, vec![0.0, 1.0]);
        let single = OrbitDataset::from_real(2, 10.0, vec![0.0, 0.0, 1.0], 1e-9, 1, "x").unwrap();
        let c = pair_correlation(&single, &[1.0, 2.0], 1.0).unwrap();
        assert_eq!(c.r2q, vec![0.0, 0.0]);
        assert!(c.warning.is_some());
        assert!(pair_correlation(&ds, &[2.0, 1.0], 1.0).is_err());
        assert!(pair_correlation(&ds, &[1.0], 0.0).is_err());
        assert!(empirical_g2(&single, &[1.0, 2.0], 1.0).unwrap().values == vec![0.0]);
    }

    #[test]
    fn indexed_counts_equal_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let sets = [
            psl2z_orbit(35.0, DEFAULT_POINT_CAP).unwrap(),
            enumerate_lorentz(2, 60.0, DEFAULT_POINT_CAP).unwrap(),
            enumerate_lorentz(3, 6.0, DEFAULT_POINT_CAP).unwrap(),
            enumerate_lorentz(4, 3.0, DEFAULT_POINT_CAP).unwrap(),
        ];
        for ds in &sets {
            assert!(ds.len() <= 2000, "{}", ds.len());
            for _ in 0..5 {
                let k = rng.gen_range(0.2..3.0);
                let grid = [rng.gen_range(0.05..1.0), rng.gen_range(1.0..3.0), rng.gen_range(3.0..30.0)];
                let a = pair_correlation(ds, &grid, k).unwrap();
                let b = pair_correlation_brute(ds, &grid, k).unwrap();
                assert_eq!(a.pair_counts, b.pair_counts, "n={} len={} k={k} grid={grid:?}", ds.n(), ds.len());
                assert_eq!(a.base_pairs, b.base_pairs);
            }
        }
    }

    #[test]
    fn monotone_and_permutation_invariant() {
        let ds = psl2z_orbit(60.0, DEFAULT_POINT_CAP).unwrap();
        let grid: Vec<f64> = (1..40).map(|i| 0.1 * i as f64).collect();
        let c = pair_correlation(&ds, &grid, 1.0).unwrap();
        assert!(c.r2q.windows(2).all(|w| w[0] <= w[1]));
        // Reversing the rows of the input gives the same dataset and counts.
        let coords: Vec<f64> = (0..ds.len()).rev().flat_map(|i| ds.coords(i).to_vec()).collect();
        let shuffled = OrbitDataset::from_real(2, 60.0, coords, 1e-9, 2, "psl2z").unwrap();
        assert_eq!(pair_correlation(&shuffled, &grid, 1.0).unwrap().pair_counts, c.pair_counts);
        let h = histogram_from_curve(&c);
        let tele: f64 = h.iter().zip(grid.windows(2)).map(|(g, w)| g * (w[1] - w[0])).sum();
        assert!((tele - (c.r2q[grid.len() - 1] - c.r2q[0])).abs() < 1e-12);
        assert!(h.iter().all(|&g| g >= 0.0));
    }

    #[test]
    fn cone_with_full_angle_drops_only_base_pairs() {
        let ds = psl2z_orbit(50.0, DEFAULT_POINT_CAP).unwrap();
        let grid = [0.5, 1.0, 2.0, 4.0];
        let full = pair_correlation(&ds, &grid, 1.2).unwrap();
        let cone = cone_filter(&ds, &Cone::new(vec![0.0, 1.0], std::f64::consts::PI - 1e-15).unwrap()).unwrap();
        let c = pair_correlation(&cone, &grid, 1.2).unwrap();
        assert_eq!(c.pair_counts, full.pair_counts);
        assert_eq!(c.point_count, ds.len() - 1);
        assert!(matches!(c.mode, CurveMode::Cone(_)));
    }

    #[test]
    fn per_distance_partition() {
        for ds in [
            psl2z_orbit(80.0, DEFAULT_POINT_CAP).unwrap(),
            enumerate_lorentz(3, 7.0, DEFAULT_POINT_CAP).unwrap(),
        ] {
            let t_max = (ds.q() * ds.q() / 2.0).acosh();
            let spec = distance_spectrum(&ds, t_max).unwrap();
            let ts: Vec<f64> = spec.entries().iter().take(5).map(|e| e.t).collect();
            for xi in [0.5, 2.0] {
                let split = pairs_by_distance(&ds, xi, 1.0, &ts).unwrap();
                let whole = pair_correlation(&ds, &[xi], 1.0).unwrap();
                assert_eq!(split.total(), whole.pair_counts[0]);
            }
            // Points on a common ray from the base point still pair at ξ → 0.
            let zero = pairs_by_distance(&ds, 1e-12, 1.0, &ts).unwrap();
            assert_eq!(zero.total(), pair_correlation(&ds, &[1e-12], 1.0).unwrap().pair_counts[0]);
        }
        // Float path agrees with the exact one.
        let ds = psl2z_orbit(60.0, DEFAULT_POINT_CAP).unwrap();
        let real = OrbitDataset::from_real(
            2,
            60.0,
            (0..ds.len()).flat_map(|i| ds.coords(i).to_vec()).collect(),
            1e-9,
            2,
            "psl2z",
        )
        .unwrap();
        let spec = distance_spectrum(&ds, 6.0).unwrap();
        let ts: Vec<f64> = spec.entries().iter().map(|e| e.t).collect();
        let a = pairs_by_distance(&ds, 3.0, 1.0, &ts).unwrap();
        let b = pairs_by_distance(&real, 3.0, 1.0, &ts).unwrap();
        assert_eq!(a.entries, b.entries);
        assert_eq!(a.overflow, b.overflow);
    }

    #[test]
    fn csv_layout() {
        let ds = two_point_dataset(1e-9);
        let c = pair_correlation(&ds, &[0.5, 1.0], 1.0).unwrap();
        let mut buf = Vec::new();
        write_curve(&c, true, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# Q=10.000000000000000");
        assert!(lines.contains(&"xi,r2q,g2_emp"));
        assert_eq!(*lines.last().unwrap(), "1.0000000000000000,1.0000000000000000,0");
    }
}
