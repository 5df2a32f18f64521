//! Small descriptive statistics used across the crate.

/// Consistency constant that turns the MAD into a Gaussian standard deviation.
pub const MAD_SCALE: f64 = 1.4826;

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Median; averages the two middle order statistics for even lengths.
///
/// Panics on an empty slice.
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of empty slice");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    median_sorted(&v)
}

pub(crate) fn median_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Raw median absolute deviation about the median (no consistency factor).
pub fn mad(values: &[f64]) -> f64 {
    let m = median(values);
    let dev: Vec<f64> = values.iter().map(|y| (y - m).abs()).collect();
    median(&dev)
}

/// Scale used for step sizes and default floors: `1.4826 * MAD`, then the mean
/// absolute deviation about the median when more than half the sample ties.
/// Both are translation invariant. A constant sample has no spread, so it falls
/// back to `|median|` and then to 1.
pub fn robust_scale(values: &[f64]) -> f64 {
    let s = MAD_SCALE * mad(values);
    if s > 0.0 {
        return s;
    }
    let m = median(values);
    let mean_abs = values.iter().map(|y| (y - m).abs()).sum::<f64>() / values.len() as f64;
    if mean_abs > 0.0 {
        return mean_abs;
    }
    let m = m.abs();
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

/// Linear-interpolation quantile (the "type 7" definition) of sorted data.
pub fn quantile_sorted(sorted: &[f64], level: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * level.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Least-squares slope of `y` against `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let mx = mean(x);
    let my = mean(y);
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
    }
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_odd_even() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn mad_and_scale() {
        let v = [1.0, 2.0, 3.0, 4.0, 100.0];
        assert_eq!(mad(&v), 1.0);
        assert!((robust_scale(&v) - MAD_SCALE).abs() < 1e-15);
        assert_eq!(robust_scale(&[5.0, 5.0, 5.0]), 5.0);
        assert_eq!(robust_scale(&[0.0, 0.0]), 1.0);
        // MAD is zero but the sample is not constant
        assert_eq!(robust_scale(&[2.0, 2.0, 2.0, 6.0]), 1.0);
        assert_eq!(robust_scale(&[102.0, 102.0, 102.0, 106.0]), 1.0);
    }

    #[test]
    fn quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(quantile_sorted(&v, 1.0), 4.0);
        assert!((quantile_sorted(&v, 0.5) - 2.5).abs() < 1e-15);
        assert_eq!(quantile_sorted(&[7.0], 0.99), 7.0);
    }

    #[test]
    fn slope_of_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|t| 0.5 * t - 1.0).collect();
        assert!((ols_slope(&x, &y) - 0.5).abs() < 1e-14);
    }
}
