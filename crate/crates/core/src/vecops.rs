//! Small dense-vector helpers shared by the steppers.

/// `a * x + b * y`, elementwise.
pub(crate) fn lin2(a: f64, x: &[f64], b: f64, y: &[f64]) -> Vec<f64> {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(xi, yi)| a * xi + b * yi).collect()
}

/// `a * x + b * y + c * z`, elementwise.
pub(crate) fn lin3(a: f64, x: &[f64], b: f64, y: &[f64], c: f64, z: &[f64]) -> Vec<f64> {
    debug_assert!(x.len() == y.len() && y.len() == z.len());
    x.iter()
        .zip(y)
        .zip(z)
        .map(|((xi, yi), zi)| a * xi + b * yi + c * zi)
        .collect()
}

pub(crate) fn max_abs_diff(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

pub(crate) fn l2_per_dim(x: &[f64], y: &[f64]) -> f64 {
    let ss: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    (ss / x.len() as f64).sqrt()
}
