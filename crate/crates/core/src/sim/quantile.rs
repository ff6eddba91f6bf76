use crate::error::{Error, Result};

/// Quantile of sorted data with linear interpolation between order statistics
/// (position `(N − 1)·p`).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    if lo + 1 >= n {
        return sorted[n - 1];
    }
    let w = h - lo as f64;
    sorted[lo] + w * (sorted[lo + 1] - sorted[lo])
}

/// Nodewise quantiles of a path ensemble (`ensemble[path][node]`).
/// Returns one vector per requested probability.
pub fn quantile_bands(ensemble: &[Vec<f64>], probs: &[f64]) -> Result<Vec<Vec<f64>>> {
    if ensemble.len() < 2 {
        return Err(Error::InvalidInput(
            "quantile bands need at least two paths".into(),
        ));
    }
    let nodes = ensemble[0].len();
    if ensemble.iter().any(|p| p.len() != nodes) {
        return Err(Error::InvalidInput("paths have different lengths".into()));
    }
    let mut out = vec![Vec::with_capacity(nodes); probs.len()];
    let mut column = vec![0.0; ensemble.len()];
    for k in 0..nodes {
        for (c, path) in column.iter_mut().zip(ensemble) {
            *c = path[k];
        }
        column.sort_by(f64::total_cmp);
        for (band, &p) in out.iter_mut().zip(probs) {
            band.push(quantile_sorted(&column, p));
        }
    }
    Ok(out)
}
