use crate::error::{Error, Result};

/// Reflect index `i` into `0..n`, repeating the edge sample
/// (… 1 0 | 0 1 … n−1 | n−1 n−2 …).
#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let m = i.rem_euclid(period) as usize;
    if m >= n {
        2 * n - 1 - m
    } else {
        m
    }
}

/// Normalized 1-D Gaussian with σ = `radius`, half-width ⌈3σ⌉ (at least 1).
pub fn gaussian_kernel(radius: f64) -> Vec<f64> {
    let half = ((3.0 * radius).ceil() as usize).max(1);
    let mut k: Vec<f64> =
        (0..=2 * half).map(|i| i as f64 - half as f64).map(|d| (-d * d / (2.0 * radius * radius)).exp()).collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable Gaussian blur of a planar image. Radius 0 is the identity.
pub fn gaussian_blur(values: &[f64], channels: usize, width: usize, height: usize, radius: f64) -> Result<Vec<f64>> {
    if values.len() != channels * width * height {
        return Err(Error::shape(format!(
            "{} values for a {channels}x{height}x{width} image",
            values.len()
        )));
    }
    if !(radius >= 0.0 && radius.is_finite()) {
        return Err(Error::Range(format!("blur radius {radius} must be finite and non-negative")));
    }
    if radius == 0.0 || values.is_empty() {
        return Ok(values.to_vec());
    }
    let k = gaussian_kernel(radius);
    let half = (k.len() / 2) as isize;
    let plane = width * height;
    let mut tmp = vec![0.0; values.len()];
    let mut out = vec![0.0; values.len()];
    for c in 0..channels {
        let src = &values[c * plane..(c + 1) * plane];
        let mid = &mut tmp[c * plane..(c + 1) * plane];
        for y in 0..height {
            for x in 0..width {
                mid[y * width + x] = k
                    .iter()
                    .enumerate()
                    .map(|(t, w)| w * src[y * width + reflect(x as isize + t as isize - half, width)])
                    .sum();
            }
        }
        let dst = &mut out[c * plane..(c + 1) * plane];
        for y in 0..height {
            for x in 0..width {
                dst[y * width + x] = k
                    .iter()
                    .enumerate()
                    .map(|(t, w)| w * mid[reflect(y as isize + t as isize - half, height) * width + x])
                    .sum();
            }
        }
    }
    Ok(out)
}

/// Zero the ⌊fraction·N⌋ pixels with the smallest channel norm. Values are
/// planar and already mean-subtracted. Ties go to the lower pixel index.
/// Returns the zeroed pixel indices.
pub fn percentile_zero(centered: &mut [f64], channels: usize, fraction: f64) -> Result<Vec<usize>> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::Range(format!("percentile fraction {fraction} outside [0, 1)")));
    }
    if channels == 0 || centered.len() % channels != 0 {
        return Err(Error::shape("value count is not a multiple of the channel count"));
    }
    let plane = centered.len() / channels;
    let count = (fraction * plane as f64).floor() as usize;
    if count == 0 {
        return Ok(Vec::new());
    }
    let norms: Vec<f64> =
        (0..plane).map(|p| (0..channels).map(|c| centered[c * plane + p].powi(2)).sum::<f64>().sqrt()).collect();
    let mut order: Vec<usize> = (0..plane).collect();
    order.sort_by(|&a, &b| norms[a].total_cmp(&norms[b]).then(a.cmp(&b)));
    let mut zeroed = order[..count].to_vec();
    for &p in &zeroed {
        for c in 0..channels {
            centered[c * plane + p] = 0.0;
        }
    }
    zeroed.sort_unstable();
    Ok(zeroed)
}
