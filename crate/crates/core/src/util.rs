//! Small numeric helpers shared across modules.

use rayon::prelude::*;

/// Pairwise (tree) summation. The reduction order depends only on the
/// length of the input, so results are reproducible bit for bit.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 8;
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Evaluates `f` on every item in parallel and reduces with [`pairwise_sum`].
pub fn par_sum_by<T, F>(items: &[T], f: F) -> f64
where
    T: Sync,
    F: Fn(&T) -> f64 + Sync + Send,
{
    let terms: Vec<f64> = items.par_iter().map(f).collect();
    pairwise_sum(&terms)
}

/// Formats a float with 17 significant digits in positional notation.
pub fn fmt_sig17(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    if !(-30..=30).contains(&exp) {
        return format!("{:.16e}", x);
    }
    let decimals = (16 - exp).max(0) as usize;
    format!("{:.*}", decimals, x)
}

/// Parses `lo:hi:count` into a geometric grid, or a comma list of values.
pub fn parse_grid(spec: &str) -> Option<Vec<f64>> {
    let spec = spec.trim();
    if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return None;
        }
        let lo: f64 = parts[0].trim().parse().ok()?;
        let hi: f64 = parts[1].trim().parse().ok()?;
        let count: usize = parts[2].trim().parse().ok()?;
        if count < 2 || !(lo > 0.0) || !(hi > lo) {
            return None;
        }
        let ratio = (hi / lo).ln() / (count - 1) as f64;
        Some((0..count).map(|i| lo * (ratio * i as f64).exp()).collect())
    } else {
        spec.split(',')
            .map(|s| s.trim().parse::<f64>().ok())
            .collect()
    }
}
