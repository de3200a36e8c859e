//! Verification scoring over trial lists: the two-covariance PLDA log-likelihood
//! ratio and cosine similarity.
//!
//! Trial list: `enroll_utt test_utt label` with label `target`, `nontarget` or `-`.
//! Score file: `enroll_utt test_utt score`.

use std::fmt::{self, Write as _};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::embeddings::{normalize_vector, Dataset};
use crate::error::{Error, Result};
use crate::linalg;
use crate::plda::PldaModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrialLabel {
    Target,
    Nontarget,
    Unknown,
}

impl TrialLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            TrialLabel::Target => "target",
            TrialLabel::Nontarget => "nontarget",
            TrialLabel::Unknown => "-",
        }
    }
}

impl fmt::Display for TrialLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trial {
    pub enroll: String,
    pub test: String,
    pub label: TrialLabel,
}

impl Trial {
    pub fn new(enroll: impl Into<String>, test: impl Into<String>, label: TrialLabel) -> Self {
        Trial {
            enroll: enroll.into(),
            test: test.into(),
            label,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredTrial {
    pub trial: Trial,
    /// Higher means more likely the same speaker.
    pub score: f64,
}

pub fn cosine_score(e: &DVector<f64>, t: &DVector<f64>) -> Result<f64> {
    let (ne, nt) = (e.norm(), t.norm());
    if ne == 0.0 || nt == 0.0 {
        return Err(Error::Data("cosine score of a zero vector".into()));
    }
    Ok(e.dot(t) / (ne * nt))
}

/// Same-speaker vs different-speaker LLR for one PLDA model.
///
/// With `T = B⁻¹ + W⁻¹` the pair `(e, t)` is Gaussian with mean `(μ, μ)` and
/// covariance `[[T, B⁻¹], [B⁻¹, T]]` under the same-speaker hypothesis and
/// `[[T, 0], [0, T]]` otherwise. Both 2D×2D covariances are factorized once; a
/// trial then costs three D×D quadratic forms.
#[derive(Debug, Clone)]
pub struct PldaScorer {
    mu: DVector<f64>,
    /// Blocks of `Σ_diff⁻¹ − Σ_same⁻¹`; both diagonal blocks are equal.
    k_diag: DMatrix<f64>,
    k_cross: DMatrix<f64>,
    /// `−½(log det Σ_same − log det Σ_diff)`
    offset: f64,
}

impl PldaScorer {
    pub fn new(model: &PldaModel) -> Result<Self> {
        model.validate()?;
        let d = model.dim();
        let between = model.between_cov()?;
        let total = &between + model.within_cov()?;

        let mut same = DMatrix::zeros(2 * d, 2 * d);
        same.view_mut((0, 0), (d, d)).copy_from(&total);
        same.view_mut((d, d), (d, d)).copy_from(&total);
        same.view_mut((0, d), (d, d)).copy_from(&between);
        same.view_mut((d, 0), (d, d)).copy_from(&between);
        let same_chol = linalg::cholesky(&same, "same-speaker joint covariance")?;
        let total_chol = linalg::cholesky(&total, "total covariance")?;

        let same_inv = same_chol.inverse();
        let total_inv = total_chol.inverse();
        let block = |r: usize, c: usize| same_inv.view((r, c), (d, d)).into_owned();
        // Averaging the mirrored blocks makes score(e, t) == score(t, e) exactly.
        let mut k_diag = &total_inv - (block(0, 0) + block(d, d)) * 0.5;
        let mut k_cross = -(block(0, d) + block(d, 0)) * 0.5;
        linalg::symmetrize(&mut k_diag);
        linalg::symmetrize(&mut k_cross);

        let offset = -0.5 * (linalg::log_det(&same_chol) - 2.0 * linalg::log_det(&total_chol));
        Ok(PldaScorer {
            mu: model.mu.clone(),
            k_diag,
            k_cross,
            offset,
        })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn score(&self, e: &DVector<f64>, t: &DVector<f64>) -> f64 {
        let de = e - &self.mu;
        let dt = t - &self.mu;
        let cross = 0.5 * (de.dot(&(&self.k_cross * &dt)) + dt.dot(&(&self.k_cross * &de)));
        0.5 * (linalg::quad_form(&self.k_diag, &de) + linalg::quad_form(&self.k_diag, &dt))
            + cross
            + self.offset
    }
}

/// One-off LLR. Prefer [`PldaScorer`] when scoring many trials.
pub fn plda_score(model: &PldaModel, e: &DVector<f64>, t: &DVector<f64>) -> Result<f64> {
    Ok(PldaScorer::new(model)?.score(e, t))
}

#[derive(Debug, Clone)]
pub enum Backend {
    Plda(PldaScorer),
    Cosine,
}

impl Backend {
    pub fn score(&self, e: &DVector<f64>, t: &DVector<f64>) -> Result<f64> {
        match self {
            Backend::Plda(s) => {
                if e.len() != s.dim() || t.len() != s.dim() {
                    return Err(Error::Data(format!(
                        "embedding dimension {} does not match model dimension {}",
                        e.len(),
                        s.dim()
                    )));
                }
                Ok(s.score(e, t))
            }
            Backend::Cosine => cosine_score(e, t),
        }
    }
}

/// Scores trials in input order. When `center` is given each vector is centered
/// and length-normalized first, matching training-time preprocessing.
pub fn score_trials(
    backend: &Backend,
    trials: &[Trial],
    enroll: &Dataset,
    test: &Dataset,
    center: Option<&DVector<f64>>,
) -> Result<Vec<ScoredTrial>> {
    let lookup = |ds: &Dataset, utt: &str, i: usize, side: &str| -> Result<DVector<f64>> {
        let e = ds.get(utt).ok_or_else(|| {
            Error::Data(format!(
                "trial {} ({} {}): unresolved {side} utterance {utt}",
                i + 1,
                trials[i].enroll,
                trials[i].test
            ))
        })?;
        match center {
            Some(c) => normalize_vector(&e.vec, c, &e.utt_id),
            None => Ok(e.vec.clone()),
        }
    };
    trials
        .par_iter()
        .enumerate()
        .map(|(i, trial)| {
            let e = lookup(enroll, &trial.enroll, i, "enroll")?;
            let t = lookup(test, &trial.test, i, "test")?;
            let score = backend.score(&e, &t)?;
            if !score.is_finite() {
                return Err(Error::Numerical(format!(
                    "trial {}: non-finite score",
                    i + 1
                )));
            }
            Ok(ScoredTrial {
                trial: trial.clone(),
                score,
            })
        })
        .collect()
}

pub fn parse_trials(text: &str, source: &str) -> Result<Vec<Trial>> {
    let mut trials = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::parse(
                source,
                lineno,
                "expected `enroll_utt test_utt label`",
            ));
        }
        let label = match fields[2] {
            "target" => TrialLabel::Target,
            "nontarget" => TrialLabel::Nontarget,
            "-" => TrialLabel::Unknown,
            other => {
                return Err(Error::parse(
                    source,
                    lineno,
                    format!("unknown trial label {other:?}"),
                ))
            }
        };
        trials.push(Trial::new(fields[0], fields[1], label));
    }
    Ok(trials)
}

pub fn load_trials(path: impl AsRef<Path>) -> Result<Vec<Trial>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_trials(&text, &path.display().to_string())
}

pub fn format_trials(trials: &[Trial]) -> String {
    let mut out = String::new();
    for t in trials {
        let _ = writeln!(out, "{} {} {}", t.enroll, t.test, t.label);
    }
    out
}

/// Score lines with 9 significant digits.
pub fn format_scores(scores: &[ScoredTrial]) -> String {
    let mut out = String::new();
    for s in scores {
        let _ = writeln!(out, "{} {} {:.8e}", s.trial.enroll, s.trial.test, s.score);
    }
    out
}

/// Returns `(enroll, test, score)` triples in file order.
pub fn parse_scores(text: &str, source: &str) -> Result<Vec<(String, String, f64)>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::parse(
                source,
                lineno,
                "expected `enroll_utt test_utt score`",
            ));
        }
        let score: f64 = fields[2]
            .parse()
            .ok()
            .filter(|s: &f64| s.is_finite())
            .ok_or_else(|| Error::parse(source, lineno, format!("bad score {:?}", fields[2])))?;
        out.push((fields[0].to_string(), fields[1].to_string(), score));
    }
    Ok(out)
}
