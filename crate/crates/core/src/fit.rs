//! Least-squares line fits in log-log coordinates.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual in log space.
    pub residual: f64,
    pub samples: usize,
}

/// Fit log y = slope log x + intercept; points with non-positive or non-finite values are skipped.
pub fn fit_loglog(xs: &[f64], ys: &[f64]) -> Option<LineFit> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0 && x.is_finite() && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    let n = pts.len();
    if n < 2 {
        return None;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n as f64;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n as f64;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (pts.iter().map(|p| (p.1 - slope * p.0 - intercept).powi(2)).sum::<f64>() / n as f64).sqrt();
    Some(LineFit { slope, intercept, residual, samples: n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn too_few_points() {
        assert!(fit_loglog(&[1.0], &[2.0]).is_none());
        assert!(fit_loglog(&[1.0, 1.0], &[2.0, 3.0]).is_none());
        assert!(fit_loglog(&[1.0, 2.0, -1.0], &[1.0, 0.0, 1.0]).is_none());
    }

    proptest! {
        #[test]
        fn recovers_power_laws(p in -3.0f64..3.0, c in 0.1f64..10.0) {
            let xs: Vec<f64> = (1..20).map(|k| 1.3f64.powi(k)).collect();
            let ys: Vec<f64> = xs.iter().map(|x| c * x.powf(p)).collect();
            let f = fit_loglog(&xs, &ys).unwrap();
            prop_assert!((f.slope - p).abs() < 1e-10);
            prop_assert!((f.intercept - c.ln()).abs() < 1e-9);
            prop_assert!(f.residual < 1e-10);
        }
    }
}
