use serde::{Deserialize, Serialize};

use super::special::student_t_two_sided;
use super::{check_finite, mean, StatsError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub r: f64,
    /// Two-sided. With n = 2 there are no residual degrees of freedom and
    /// the p-value is reported as 1.
    pub p_value: f64,
    pub n: usize,
}

/// Sample Pearson correlation with a two-sided t-test p-value.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<CorrelationResult, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let n = x.len();
    if n < 2 {
        return Err(StatsError::TooFewObservations { needed: 2, got: n });
    }
    check_finite(x)?;
    check_finite(y)?;
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::UndefinedCorrelation);
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let p_value = if n == 2 {
        1.0
    } else if r.abs() == 1.0 {
        0.0
    } else {
        let df = (n - 2) as f64;
        let t = r * (df / (1.0 - r * r)).sqrt();
        student_t_two_sided(t, df)
    };
    Ok(CorrelationResult { r, p_value, n })
}

/// Arithmetic mean of r and of p over several runs (e.g. exemplar sets).
pub fn mean_correlation(results: &[CorrelationResult]) -> Option<CorrelationResult> {
    if results.is_empty() {
        return None;
    }
    let k = results.len() as f64;
    Some(CorrelationResult {
        r: results.iter().map(|c| c.r).sum::<f64>() / k,
        p_value: results.iter().map(|c| c.p_value).sum::<f64>() / k,
        n: results.iter().map(|c| c.n).min().unwrap_or(0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_linear() {
        assert_eq!(pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap().r, 1.0);
        assert_eq!(pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap().r, -1.0);
        assert_eq!(pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap().p_value, 0.0);
    }

    #[test]
    fn hand_derived_point_eight() {
        // deviations x: -1.5 -0.5 0.5 1.5, y: -1.5 0.5 -0.5 1.5
        // sum dx*dy = 2.25 - 0.25 - 0.25 + 2.25 = 4; sum dx^2 = sum dy^2 = 5
        // r = 4 / 5; t = 0.8 * sqrt(2 / 0.36); p = 0.2 (scipy.stats.pearsonr)
        let c = pearson(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert_eq!(c.r, 0.8);
        assert!((c.p_value - 0.2).abs() < 1e-12);
        assert_eq!(c.n, 4);
    }

    #[test]
    fn reference_value() {
        // scipy.stats.pearsonr
        let c = pearson(&[0.1, 0.5, 0.3, 0.9, 0.7], &[1.0, 2.0, 1.5, 2.5, 3.5]).unwrap();
        assert!((c.r - 0.821_994_936_526_786_2).abs() < 1e-12);
        assert!((c.p_value - 0.087_706_647_008_065_7).abs() < 1e-10);
    }

    #[test]
    fn errors() {
        assert_eq!(
            pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(StatsError::UndefinedCorrelation)
        );
        assert!(matches!(
            pearson(&[1.0, 2.0], &[1.0]),
            Err(StatsError::LengthMismatch { .. })
        ));
        assert!(matches!(pearson(&[1.0], &[1.0]), Err(StatsError::TooFewObservations { .. })));
        assert_eq!(pearson(&[1.0, f64::NAN], &[1.0, 2.0]), Err(StatsError::NonFinite));
    }

    #[test]
    fn two_points() {
        let c = pearson(&[1.0, 2.0], &[5.0, 3.0]).unwrap();
        assert_eq!(c.r, -1.0);
        assert_eq!(c.p_value, 1.0);
    }

    proptest! {
        #[test]
        fn symmetric_and_affine_invariant(
            pairs in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 3..30),
            scale in 0.01f64..50.0,
            shift in -100.0f64..100.0,
        ) {
            let x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let y: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let Ok(xy) = pearson(&x, &y) else { return Ok(()); };
            let yx = pearson(&y, &x).unwrap();
            prop_assert!((xy.r - yx.r).abs() < 1e-12);
            let x2: Vec<f64> = x.iter().map(|v| scale * v + shift).collect();
            let moved = pearson(&x2, &y).unwrap();
            prop_assert!((moved.r - xy.r).abs() < 1e-9);
            prop_assert!((0.0..=1.0).contains(&xy.p_value));
        }
    }
}
