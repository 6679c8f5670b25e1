//! Threshold calibration at the equal-error point.
//!
//! Candidate thresholds are the midpoints between consecutive distinct
//! scores (plus one below the lowest and one above the highest), so the
//! chosen threshold never coincides with an observed score and the `>=` and
//! `>` acceptance rules agree on every calibration trial.

use serde::Serialize;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum CalibrationError {
    #[error("calibration needs at least one genuine and one imposter score")]
    Empty,
    #[error("calibration scores must be finite")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Calibration {
    pub threshold: f64,
    /// Fraction of imposter scores at or above the threshold.
    pub far: f64,
    /// Fraction of genuine scores below the threshold.
    pub frr: f64,
    pub eer: f64,
    /// Distance from the threshold to the nearest observed score.
    pub margin: f64,
    pub genuine: usize,
    pub imposter: usize,
}

impl Calibration {
    /// Whether every calibration trial is classified correctly.
    pub fn separable(&self) -> bool {
        self.far == 0.0 && self.frr == 0.0
    }
}

/// Picks the threshold minimizing `|FAR - FRR|`, then `FAR + FRR`, then
/// preferring the widest gap between neighbouring scores.
pub fn equal_error_threshold(genuine: &[f64], imposter: &[f64]) -> Result<Calibration, CalibrationError> {
    if genuine.is_empty() || imposter.is_empty() {
        return Err(CalibrationError::Empty);
    }
    if genuine.iter().chain(imposter).any(|s| !s.is_finite()) {
        return Err(CalibrationError::NonFinite);
    }
    let mut all: Vec<f64> = genuine.iter().chain(imposter).copied().collect();
    all.sort_by(f64::total_cmp);
    all.dedup();

    let spread = (all[all.len() - 1] - all[0]).max(1.0);
    let mut candidates = Vec::with_capacity(all.len() + 1);
    candidates.push((all[0] - spread, spread));
    for w in all.windows(2) {
        candidates.push((0.5 * (w[0] + w[1]), 0.5 * (w[1] - w[0])));
    }
    candidates.push((all[all.len() - 1] + spread, spread));

    let rate = |t: f64| {
        let far = imposter.iter().filter(|&&s| s >= t).count() as f64 / imposter.len() as f64;
        let frr = genuine.iter().filter(|&&s| s < t).count() as f64 / genuine.len() as f64;
        (far, frr)
    };
    let mut best: Option<(Calibration, (f64, f64, f64))> = None;
    for (threshold, margin) in candidates {
        let (far, frr) = rate(threshold);
        let key = ((far - frr).abs(), far + frr, -margin);
        let better = match &best {
            None => true,
            Some((_, k)) => key.partial_cmp(k) == Some(std::cmp::Ordering::Less),
        };
        if better {
            let cal = Calibration {
                threshold,
                far,
                frr,
                eer: 0.5 * (far + frr),
                margin,
                genuine: genuine.len(),
                imposter: imposter.len(),
            };
            best = Some((cal, key));
        }
    }
    Ok(best.expect("at least two candidates").0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_scores_split_in_the_widest_gap() {
        let cal = equal_error_threshold(&[0.9, 0.95, 1.0], &[0.1, 0.2, 0.5]).unwrap();
        assert!(cal.separable());
        assert!((cal.threshold - 0.7).abs() < 1e-12);
        assert!((cal.margin - 0.2).abs() < 1e-12);
    }

    #[test]
    fn overlapping_scores_balance_error_rates() {
        let genuine = [0.4, 0.6, 0.8, 0.9];
        let imposter = [0.1, 0.3, 0.5, 0.7];
        let cal = equal_error_threshold(&genuine, &imposter).unwrap();
        assert_eq!(cal.far, cal.frr);
        assert_eq!(cal.eer, 0.25);
    }

    #[test]
    fn rejects_empty_and_nan() {
        assert_eq!(equal_error_threshold(&[], &[1.0]), Err(CalibrationError::Empty));
        assert_eq!(equal_error_threshold(&[f64::NAN], &[1.0]), Err(CalibrationError::NonFinite));
    }
}
