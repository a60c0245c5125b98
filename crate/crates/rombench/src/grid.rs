//! Tensor-product parameter sampling with exact train-in-test nesting.

use romkit::{Error, Result};

/// Uniform tensor-product sampling of a parameter box, endpoints included.
///
/// Points are emitted in lexicographic order with the last axis varying
/// fastest. Axis values use the affine form `lo*(1-s) + hi*s` with
/// `s = i/(count-1)`, which hits both endpoints exactly and makes nested
/// grids (see [`nested_indices`]) agree bitwise.
pub fn uniform_grid(bounds: &[(f64, f64)], counts: &[usize]) -> Result<Vec<Vec<f64>>> {
    if bounds.len() != counts.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} parameter bounds but {} axis counts",
            bounds.len(),
            counts.len()
        )));
    }
    if bounds.is_empty() {
        return Err(Error::InvalidConfig("empty parameter box".into()));
    }
    for (axis, (&count, &(lo, hi))) in counts.iter().zip(bounds).enumerate() {
        if count < 2 {
            return Err(Error::InvalidConfig(format!(
                "axis {axis} needs at least 2 sample points, got {count}"
            )));
        }
        if !(lo < hi) {
            return Err(Error::InvalidConfig(format!(
                "axis {axis} bounds [{lo}, {hi}] are not increasing"
            )));
        }
    }
    let total: usize = counts.iter().product();
    let mut points = Vec::with_capacity(total);
    let mut idx = vec![0usize; counts.len()];
    loop {
        let point = idx
            .iter()
            .zip(bounds)
            .zip(counts)
            .map(|((&i, &(lo, hi)), &c)| {
                let s = i as f64 / (c - 1) as f64;
                lo * (1.0 - s) + hi * s
            })
            .collect();
        points.push(point);
        // Odometer increment, last axis fastest.
        let mut axis = counts.len();
        loop {
            if axis == 0 {
                return Ok(points);
            }
            axis -= 1;
            idx[axis] += 1;
            if idx[axis] < counts[axis] {
                break;
            }
            idx[axis] = 0;
        }
    }
}

/// Checks that a coarse axis-count vector nests inside a fine one: same
/// length and `(fine-1)` divisible by `(coarse-1)` per axis, so every
/// coarse sample coincides with a fine sample.
pub fn is_nested(coarse: &[usize], fine: &[usize]) -> bool {
    coarse.len() == fine.len()
        && coarse.iter().zip(fine).all(|(&c, &f)| {
            c >= 2 && f >= c && (f - 1) % (c - 1) == 0
        })
}

/// Flat indices of the coarse-grid points inside the fine grid (both in the
/// lexicographic order of [`uniform_grid`]).
pub fn nested_indices(coarse: &[usize], fine: &[usize]) -> Result<Vec<usize>> {
    if !is_nested(coarse, fine) {
        return Err(Error::InvalidConfig(format!(
            "grid {coarse:?} does not nest in {fine:?}"
        )));
    }
    let strides: Vec<usize> = coarse.iter().zip(fine).map(|(&c, &f)| (f - 1) / (c - 1)).collect();
    let total: usize = coarse.iter().product();
    let mut flat = Vec::with_capacity(total);
    let mut idx = vec![0usize; coarse.len()];
    loop {
        // Map the coarse multi-index onto the fine grid and flatten it with
        // the last axis fastest.
        let mut f = 0usize;
        for (axis, &i) in idx.iter().enumerate() {
            f = f * fine[axis] + i * strides[axis];
        }
        flat.push(f);
        let mut axis = coarse.len();
        loop {
            if axis == 0 {
                return Ok(flat);
            }
            axis -= 1;
            idx[axis] += 1;
            if idx[axis] < coarse[axis] {
                break;
            }
            idx[axis] = 0;
        }
    }
}
