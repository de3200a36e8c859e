//! Experiment drivers shared by the CLI and the examples: preprocessing, training
//! and adaptation, trial generation, and a two-domain synthetic generator.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::embeddings::{
    gen_synthetic, global_mean, length_normalize, Dataset, SynthSpec, UttsPerSpeaker,
};
use crate::error::{Error, Result};
use crate::metrics::{self, DcfParams, DetMetrics};
use crate::plda::{self, PldaModel, TrainConfig, TrainOutcome};
use crate::scoring::{ScoredTrial, Trial, TrialLabel};

/// Center on `center` (or the dataset's own global mean) and length-normalize.
pub fn preprocess(ds: &Dataset, center: Option<&DVector<f64>>) -> Result<(Dataset, DVector<f64>)> {
    let center = match center {
        Some(c) => c.clone(),
        None => global_mean(ds)?,
    };
    Ok((length_normalize(ds, &center)?, center))
}

/// Preprocesses raw embeddings, trains, and records the centering mean in the model.
///
/// `init` warm-starts EM; `center` overrides the re-estimated global mean.
pub fn train_backend(
    raw: &Dataset,
    cfg: &TrainConfig,
    init: Option<&PldaModel>,
    center: Option<&DVector<f64>>,
) -> Result<TrainOutcome> {
    let (ds, center) = preprocess(raw, center)?;
    let mut outcome = match init {
        Some(m) => {
            let mut start = m.clone();
            start.center = None;
            plda::train_from(&ds, cfg, start)?
        }
        None => plda::train(&ds, cfg)?,
    };
    outcome.model.center = Some(center);
    Ok(outcome)
}

/// `k` speakers drawn without replacement, returned in sorted order.
pub fn sample_speakers(ds: &Dataset, k: usize, seed: u64) -> Result<Vec<String>> {
    let ids = ds.speaker_ids();
    if k == 0 {
        return Err(Error::Usage("number of speakers must be >= 1".into()));
    }
    if k > ids.len() {
        return Err(Error::Data(format!(
            "requested {k} speakers but only {} are available",
            ids.len()
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut picked: Vec<String> = sample(&mut rng, ids.len(), k)
        .into_iter()
        .map(|i| ids[i].to_string())
        .collect();
    picked.sort();
    Ok(picked)
}

#[derive(Debug, Clone, Default)]
pub struct AdaptOptions<'a> {
    /// Speaker subset size; `None` uses every speaker.
    pub num_speakers: Option<usize>,
    pub seed: u64,
    pub init: Option<&'a PldaModel>,
    /// Reuse the init model's centering mean instead of re-estimating it.
    pub keep_mean: bool,
}

pub fn adapt_backend(
    raw: &Dataset,
    cfg: &TrainConfig,
    opts: &AdaptOptions<'_>,
) -> Result<TrainOutcome> {
    let subset = match opts.num_speakers {
        Some(k) => {
            let ids = sample_speakers(raw, k, opts.seed)?;
            let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
            raw.subset_speakers(&refs)?
        }
        None => raw.clone(),
    };
    let center = if opts.keep_mean {
        let model = opts
            .init
            .ok_or_else(|| Error::Usage("keeping the mean requires an initial model".into()))?;
        Some(
            model
                .center
                .clone()
                .ok_or_else(|| Error::Data("initial model has no centering mean".into()))?,
        )
    } else {
        None
    };
    train_backend(&subset, cfg, opts.init, center.as_ref())
}

/// Labeled `(score, is_target)` pairs; trials with unknown labels are dropped
/// and counted.
pub fn labeled_scores(scored: &[ScoredTrial]) -> (Vec<(f64, bool)>, usize) {
    let mut out = Vec::with_capacity(scored.len());
    let mut unknown = 0;
    for s in scored {
        match s.trial.label {
            TrialLabel::Target => out.push((s.score, true)),
            TrialLabel::Nontarget => out.push((s.score, false)),
            TrialLabel::Unknown => unknown += 1,
        }
    }
    (out, unknown)
}

pub fn evaluate_scored(scored: &[ScoredTrial], params: &DcfParams) -> Result<DetMetrics> {
    let (labeled, _) = labeled_scores(scored);
    metrics::evaluate(&labeled, params)
}

/// Pairs score lines with trial labels. Both lists must name the same trials in
/// the same order.
pub fn attach_labels(
    scores: &[(String, String, f64)],
    trials: &[Trial],
) -> Result<Vec<ScoredTrial>> {
    if scores.len() != trials.len() {
        return Err(Error::Data(format!(
            "{} scores for {} trials",
            scores.len(),
            trials.len()
        )));
    }
    scores
        .iter()
        .zip(trials)
        .enumerate()
        .map(|(i, ((e, t, score), trial))| {
            if *e != trial.enroll || *t != trial.test {
                return Err(Error::Data(format!(
                    "score line {} ({e} {t}) does not match trial ({} {})",
                    i + 1,
                    trial.enroll,
                    trial.test
                )));
            }
            Ok(ScoredTrial {
                trial: trial.clone(),
                score: *score,
            })
        })
        .collect()
}

/// One target and one nontarget trial per utterance, enroll side in file order.
/// Never pairs an utterance with itself; speakers with a single utterance only
/// contribute nontargets.
pub fn make_trials(ds: &Dataset, seed: u64) -> Result<Vec<Trial>> {
    if ds.num_speakers() < 2 || !ds.is_fully_labeled() {
        return Err(Error::Data(
            "trial generation needs >= 2 labeled speakers".into(),
        ));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let speakers: Vec<(&str, &[usize])> = ds.speakers().collect();
    let spk_pos: std::collections::HashMap<&str, usize> = speakers
        .iter()
        .enumerate()
        .map(|(i, (s, _))| (*s, i))
        .collect();
    let all = ds.embeddings();
    let mut trials = Vec::new();
    for (i, e) in all.iter().enumerate() {
        let own = spk_pos[e.spk_id.as_deref().expect("labeled")];
        let same = speakers[own].1;
        if same.len() > 1 {
            let mut j = same[rng.random_range(0..same.len())];
            while j == i {
                j = same[rng.random_range(0..same.len())];
            }
            trials.push(Trial::new(&e.utt_id, &all[j].utt_id, TrialLabel::Target));
        }
        let mut other = rng.random_range(0..speakers.len() - 1);
        if other >= own {
            other += 1;
        }
        let idx = speakers[other].1;
        let j = idx[rng.random_range(0..idx.len())];
        trials.push(Trial::new(&e.utt_id, &all[j].utt_id, TrialLabel::Nontarget));
    }
    Ok(trials)
}

/// Two-domain synthetic corpus.
///
/// In the source domain the first half of the dimensions carries speaker
/// information with AR(1) correlation across neighbouring dimensions (a dense
/// covariance with a tridiagonal precision) and little session noise; the second
/// half carries mostly session noise. The target domain applies Givens rotations
/// by `rotation` radians between dimension `i` and `i + D/2`, and multiplies the
/// within-speaker covariance by `scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub dim: usize,
    pub train_speakers: usize,
    pub adapt_speakers: usize,
    pub eval_speakers: usize,
    pub utts_min: usize,
    pub utts_max: usize,
    pub rotation: f64,
    pub scale: f64,
    /// AR(1) coefficient of the speaker subspace.
    pub correlation: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            dim: 16,
            train_speakers: 500,
            adapt_speakers: 200,
            eval_speakers: 100,
            utts_min: 6,
            utts_max: 10,
            rotation: std::f64::consts::FRAC_PI_3,
            scale: 1.0,
            correlation: 0.6,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainCovariances {
    pub between: DMatrix<f64>,
    pub within: DMatrix<f64>,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 || !self.dim.is_multiple_of(2) {
            return Err(Error::Usage(
                "synthetic dimension must be even and >= 2".into(),
            ));
        }
        if self.utts_min < 2 || self.utts_min > self.utts_max {
            return Err(Error::Usage(
                "utterances per speaker need 2 <= min <= max".into(),
            ));
        }
        if self.train_speakers < 2 || self.adapt_speakers < 2 || self.eval_speakers < 2 {
            return Err(Error::Usage("each domain split needs >= 2 speakers".into()));
        }
        if !(self.scale > 0.0 && self.scale.is_finite() && self.rotation.is_finite()) {
            return Err(Error::Usage("scale must be > 0 and rotation finite".into()));
        }
        if !(self.correlation.abs() < 1.0) {
            return Err(Error::Usage("correlation must be in (-1, 1)".into()));
        }
        Ok(())
    }

    pub fn source(&self) -> DomainCovariances {
        let d = self.dim;
        let half = d / 2;
        let rho = self.correlation;
        let between = DMatrix::from_fn(d, d, |i, j| match (i < half, j < half) {
            (true, true) => rho.powi((i as i32 - j as i32).abs()),
            _ if i == j => 0.05,
            _ => 0.0,
        });
        let within = DMatrix::from_fn(d, d, |i, j| match (i == j, i < half) {
            (true, true) => 0.1,
            (true, false) => 0.5,
            _ => 0.0,
        });
        DomainCovariances { between, within }
    }

    pub fn target(&self) -> DomainCovariances {
        let src = self.source();
        let rot = self.rotation_matrix();
        let between = crate::linalg::symmetrized(&(&rot * &src.between * rot.transpose()));
        let within =
            crate::linalg::symmetrized(&(&rot * &src.within * rot.transpose() * self.scale));
        DomainCovariances { between, within }
    }

    fn rotation_matrix(&self) -> DMatrix<f64> {
        let d = self.dim;
        let half = d / 2;
        let (s, c) = self.rotation.sin_cos();
        let mut givens = DMatrix::identity(d, d);
        for i in 0..half {
            let j = i + half;
            givens[(i, i)] = c;
            givens[(j, j)] = c;
            givens[(i, j)] = -s;
            givens[(j, i)] = s;
        }
        givens
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    /// Source domain, labeled.
    pub train: Dataset,
    /// Target domain, labeled, for adaptation.
    pub adapt: Dataset,
    /// Target domain, disjoint speakers, for evaluation.
    pub eval: Dataset,
    pub trials: Vec<Trial>,
}

pub fn gen_synth_corpus(cfg: &SynthConfig) -> Result<SynthCorpus> {
    cfg.validate()?;
    let utts = UttsPerSpeaker::Range(cfg.utts_min, cfg.utts_max);
    let split = |cov: &DomainCovariances, n: usize, seed: u64, prefix: &str| -> Result<Dataset> {
        let mut spec = SynthSpec::new(cov.between.clone(), cov.within.clone(), n, utts, seed);
        spec.prefix = prefix.into();
        gen_synthetic(&spec)
    };
    let src = cfg.source();
    let tgt = cfg.target();
    let base = cfg.seed.wrapping_mul(1_000_003);
    let train = split(&src, cfg.train_speakers, base.wrapping_add(1), "src-")?;
    let adapt = split(&tgt, cfg.adapt_speakers, base.wrapping_add(2), "adapt-")?;
    let eval = split(&tgt, cfg.eval_speakers, base.wrapping_add(3), "eval-")?;
    let trials = make_trials(&eval, base.wrapping_add(4))?;
    Ok(SynthCorpus {
        train,
        adapt,
        eval,
        trials,
    })
}
