use super::LinalgError;
use crate::math;

/// Pearson product-moment correlation, clamped to `[-1, 1]` against
/// rounding. Constant input is rejected (the correlation is undefined)
/// with an error distinct from a length mismatch.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, LinalgError> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(LinalgError::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        let dx = xi - mx;
        let dy = yi - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == 0.0 {
        return Err(LinalgError::ConstantInput { side: "x" });
    }
    if syy == 0.0 {
        return Err(LinalgError::ConstantInput { side: "y" });
    }
    Ok((sxy / math::sqrt(sxx * syy)).clamp(-1.0, 1.0))
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
pub fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    math::sqrt(ss / (values.len() - 1) as f64)
}
