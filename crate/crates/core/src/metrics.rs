//! DET metrics: equal error rate and minimum normalized detection cost.
//!
//! A trial is accepted when `score >= threshold`. The sweep visits every distinct
//! score as a threshold plus `+∞` (reject all); the lowest score doubles as the
//! accept-all point. At threshold `t`:
//!
//! * `P_miss(t)` = fraction of target scores `< t`
//! * `P_fa(t)` = fraction of nontarget scores `>= t`

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetMetrics {
    pub eer: f64,
    pub eer_threshold: f64,
    pub min_dcf: f64,
    pub dcf_threshold: f64,
    pub targets: usize,
    pub nontargets: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcfParams {
    pub p_target: f64,
    pub c_miss: f64,
    pub c_fa: f64,
}

impl Default for DcfParams {
    fn default() -> Self {
        DcfParams {
            p_target: 0.01,
            c_miss: 1.0,
            c_fa: 1.0,
        }
    }
}

impl DcfParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_target > 0.0 && self.p_target < 1.0) {
            return Err(Error::Usage(format!(
                "p_target must be in (0, 1), got {}",
                self.p_target
            )));
        }
        if !(self.c_miss > 0.0 && self.c_fa > 0.0) {
            return Err(Error::Usage("detection costs must be > 0".into()));
        }
        Ok(())
    }

    /// Normalized cost `(c_miss·P_miss·p + c_fa·P_fa·(1−p)) / min(c_miss·p, c_fa·(1−p))`.
    pub fn normalized_cost(&self, p_miss: f64, p_fa: f64) -> f64 {
        let p = self.p_target;
        let norm = (self.c_miss * p).min(self.c_fa * (1.0 - p));
        (self.c_miss * p_miss * p + self.c_fa * p_fa * (1.0 - p)) / norm
    }
}

/// One point of the DET sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub threshold: f64,
    pub p_miss: f64,
    pub p_fa: f64,
}

fn class_counts(scores: &[(f64, bool)]) -> Result<(usize, usize)> {
    if let Some((s, _)) = scores.iter().find(|(s, _)| !s.is_finite()) {
        return Err(Error::Data(format!("non-finite score {s}")));
    }
    let targets = scores.iter().filter(|(_, t)| *t).count();
    let nontargets = scores.len() - targets;
    if targets == 0 || nontargets == 0 {
        return Err(Error::Data(format!(
            "metrics need both classes ({targets} targets, {nontargets} nontargets)"
        )));
    }
    Ok((targets, nontargets))
}

/// The full sweep, in increasing threshold order. `scores` holds `(score, is_target)`.
pub fn det_curve(scores: &[(f64, bool)]) -> Result<Vec<OperatingPoint>> {
    let (nt, nn) = class_counts(scores)?;
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut points = Vec::with_capacity(sorted.len() + 1);
    // Targets strictly below the current threshold, nontargets at or above it.
    let mut miss = 0usize;
    let mut fa = nn;
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i].0;
        points.push(OperatingPoint {
            threshold: t,
            p_miss: miss as f64 / nt as f64,
            p_fa: fa as f64 / nn as f64,
        });
        while i < sorted.len() && sorted[i].0 == t {
            if sorted[i].1 {
                miss += 1;
            } else {
                fa -= 1;
            }
            i += 1;
        }
    }
    points.push(OperatingPoint {
        threshold: f64::INFINITY,
        p_miss: 1.0,
        p_fa: 0.0,
    });
    Ok(points)
}

/// EER from a DET sweep: the first point where `P_miss − P_fa` turns
/// non-negative, linearly interpolated against its predecessor.
pub fn eer_from_curve(points: &[OperatingPoint]) -> (f64, f64) {
    let mut prev: Option<&OperatingPoint> = None;
    for p in points {
        let d = p.p_miss - p.p_fa;
        if d >= 0.0 {
            return match prev {
                _ if d == 0.0 => (p.p_miss, p.threshold),
                None => (p.p_miss, p.threshold),
                Some(q) => {
                    let dq = q.p_miss - q.p_fa;
                    let alpha = -dq / (d - dq);
                    let eer = q.p_miss + alpha * (p.p_miss - q.p_miss);
                    let threshold = if p.threshold.is_finite() {
                        q.threshold + alpha * (p.threshold - q.threshold)
                    } else {
                        q.threshold
                    };
                    (eer, threshold)
                }
            };
        }
        prev = Some(p);
    }
    // Unreachable: the sweep ends at P_miss = 1, P_fa = 0.
    (0.5, f64::NAN)
}

/// Returns `(eer, threshold)`.
pub fn compute_eer(scores: &[(f64, bool)]) -> Result<(f64, f64)> {
    Ok(eer_from_curve(&det_curve(scores)?))
}

/// Returns `(min_dcf, threshold)`; ties resolve to the lowest threshold.
pub fn min_dcf_from_curve(points: &[OperatingPoint], params: &DcfParams) -> (f64, f64) {
    let mut best = (f64::INFINITY, f64::NAN);
    for p in points {
        let c = params.normalized_cost(p.p_miss, p.p_fa);
        if c < best.0 {
            best = (c, p.threshold);
        }
    }
    best
}

pub fn compute_min_dcf(scores: &[(f64, bool)], params: &DcfParams) -> Result<(f64, f64)> {
    params.validate()?;
    Ok(min_dcf_from_curve(&det_curve(scores)?, params))
}

pub fn evaluate(scores: &[(f64, bool)], params: &DcfParams) -> Result<DetMetrics> {
    params.validate()?;
    let (targets, nontargets) = class_counts(scores)?;
    let curve = det_curve(scores)?;
    let (eer, eer_threshold) = eer_from_curve(&curve);
    let (min_dcf, dcf_threshold) = min_dcf_from_curve(&curve, params);
    Ok(DetMetrics {
        eer,
        eer_threshold,
        min_dcf,
        dcf_threshold,
        targets,
        nontargets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labeled(targets: &[f64], nontargets: &[f64]) -> Vec<(f64, bool)> {
        targets
            .iter()
            .map(|&s| (s, true))
            .chain(nontargets.iter().map(|&s| (s, false)))
            .collect()
    }

    #[test]
    fn eer_examples() {
        let (eer, thr) = compute_eer(&labeled(&[1.0, 4.0, 5.0], &[0.0, 2.0, 3.0])).unwrap();
        assert!((eer - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(thr, 3.0);
        assert_eq!(
            compute_eer(&labeled(&[2.0, 3.0], &[0.0, 1.0])).unwrap().0,
            0.0
        );
        assert_eq!(
            compute_eer(&labeled(&[1.0, 2.0], &[1.0, 2.0])).unwrap().0,
            0.5
        );
    }

    #[test]
    fn eer_interpolates_between_sweep_points() {
        // Sweep: (0,1) (0,0.5) (1,0.5) (1,0): crossing between the 2nd and 3rd point.
        let (eer, _) = compute_eer(&labeled(&[2.0], &[1.0, 3.0])).unwrap();
        assert!((eer - 0.5).abs() < 1e-15);
    }

    #[test]
    fn min_dcf_examples() {
        let p = DcfParams::default();
        assert_eq!(
            compute_min_dcf(&labeled(&[2.0, 3.0], &[0.0, 1.0]), &p)
                .unwrap()
                .0,
            0.0
        );
        // Scores in reverse order: the best operating point is reject-all.
        let (dcf, thr) = compute_min_dcf(&labeled(&[0.0], &[1.0]), &p).unwrap();
        assert!((dcf - 1.0).abs() < 1e-12);
        assert!(thr.is_infinite());
    }

    #[test]
    fn missing_class_and_bad_params() {
        assert!(compute_eer(&labeled(&[1.0], &[])).is_err());
        assert!(compute_eer(&labeled(&[], &[1.0])).is_err());
        let bad = DcfParams {
            p_target: 1.0,
            ..DcfParams::default()
        };
        assert!(compute_min_dcf(&labeled(&[1.0], &[0.0]), &bad).is_err());
        assert!(compute_eer(&labeled(&[f64::NAN], &[0.0])).is_err());
    }
}
