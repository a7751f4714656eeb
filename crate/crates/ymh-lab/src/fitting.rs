//! Least-squares fit of exponential decay profiles.

use crate::error::{Result, YmhError};
use serde::Serialize;

/// Result of fitting `log y = rate · x + log amplitude`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ExpFit {
    pub rate: f64,
    pub amplitude: f64,
    pub r_squared: f64,
    pub points_used: usize,
}

/// Fit `log y` against `x` over the samples with `y > floor`.
///
/// For decay profiles the abscissa is the folded coordinate `|t| − T`, so
/// a positive fitted `rate` means decay toward the middle of the
/// cylinder.
pub fn fit_log_linear(xs: &[f64], ys: &[f64], floor: f64) -> Result<ExpFit> {
    assert_eq!(xs.len(), ys.len());
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(_, &y)| y > floor)
        .map(|(&x, &y)| (x, y.ln()))
        .collect();
    if pts.len() < 4 {
        return Err(YmhError::InvalidArgument(format!(
            "only {} usable rows for the decay fit (need >= 4)",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mean_x = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (x, y) in &pts {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
        syy += (y - mean_y) * (y - mean_y);
    }
    if sxx == 0.0 {
        return Err(YmhError::InvalidArgument(
            "degenerate abscissa in decay fit".into(),
        ));
    }
    let rate = sxy / sxx;
    let intercept = mean_y - rate * mean_x;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(ExpFit {
        rate,
        amplitude: intercept.exp(),
        r_squared,
        points_used: pts.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_synthetic_rate() {
        let xs: Vec<f64> = (0..50).map(|i| -8.0 + 0.1 * i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.5 * (0.7 * x).exp()).collect();
        let fit = fit_log_linear(&xs, &ys, 1e-14).unwrap();
        assert!((fit.rate - 0.7).abs() < 1e-10);
        assert!((fit.amplitude - 2.5).abs() < 1e-9);
        assert!(fit.r_squared > 0.999999);
    }

    #[test]
    fn rejects_too_few_rows() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys = [0.0, 0.0, 1.0, 2.0];
        assert!(fit_log_linear(&xs, &ys, 1e-14).is_err());
    }
}
