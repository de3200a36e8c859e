//! Two-covariance PLDA: `y_m ~ N(μ, B⁻¹)`, `x_mn | y_m ~ N(y_m, W⁻¹)`, trained by EM.
//!
//! The M-step statistic for the between-speaker covariance is
//! `G = (1/M) Σ_m E[y_m y_mᵀ] − μμᵀ` and for the within-speaker covariance
//! `G_W = (1/N) Σ_m Σ_n E[(y_m − x_mn)(y_m − x_mn)ᵀ]`. Regularizers from
//! [`crate::regularize`] act on these before they are turned into precisions.
//!
//! Every reduction over speakers runs in sorted speaker-id order and every
//! reduction over a speaker's utterances in sorted utt-id order, so results are
//! bit-identical under input permutation and any rayon thread count.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;

use crate::embeddings::Dataset;
use crate::error::{Error, Result};
use crate::linalg;
use crate::regularize::{self, RegInput, RegKind, RegularizerConfig};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

pub const MODEL_MAGIC: &str = "plda-model";
pub const MODEL_VERSION: &str = "v1";

#[derive(Debug, Clone, PartialEq)]
pub struct PldaModel {
    pub mu: DVector<f64>,
    /// Between-speaker precision.
    pub b: DMatrix<f64>,
    /// Within-speaker precision.
    pub w: DMatrix<f64>,
    /// Mean subtracted before length normalization, when the model was trained
    /// on preprocessed embeddings.
    pub center: Option<DVector<f64>>,
}

impl PldaModel {
    /// `B = W = I`, `μ = 0`.
    pub fn identity(dim: usize) -> Self {
        PldaModel {
            mu: DVector::zeros(dim),
            b: DMatrix::identity(dim, dim),
            w: DMatrix::identity(dim, dim),
            center: None,
        }
    }

    pub fn new(mu: DVector<f64>, b: DMatrix<f64>, w: DMatrix<f64>) -> Result<Self> {
        let model = PldaModel {
            mu,
            b,
            w,
            center: None,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if d == 0 {
            return Err(Error::Data("model dimension must be >= 1".into()));
        }
        for (name, m) in [("B", &self.b), ("W", &self.w)] {
            if m.shape() != (d, d) {
                return Err(Error::Data(format!("{name} must be {d}x{d}")));
            }
            let scale = m.amax().max(f64::MIN_POSITIVE);
            if linalg::asymmetry(m) > 1e-10 * scale {
                return Err(Error::Numerical(format!("{name} is not symmetric")));
            }
            linalg::cholesky(m, name)?;
        }
        if let Some(c) = &self.center {
            if c.len() != d {
                return Err(Error::Data("center dimension mismatch".into()));
            }
        }
        Ok(())
    }

    pub fn between_cov(&self) -> Result<DMatrix<f64>> {
        linalg::spd_inverse(&self.b, "between-speaker precision")
    }

    pub fn within_cov(&self) -> Result<DMatrix<f64>> {
        linalg::spd_inverse(&self.w, "within-speaker precision")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerPosterior {
    pub spk_id: String,
    pub count: usize,
    /// `E[y_m | X]`
    pub mean: DVector<f64>,
    /// `L_m⁻¹`
    pub cov: DMatrix<f64>,
    /// `E[y_m y_mᵀ | X] = L_m⁻¹ + E[y_m] E[y_m]ᵀ`
    pub second_moment: DMatrix<f64>,
}

/// E-step output, one entry per speaker in sorted speaker-id order.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorStats {
    pub speakers: Vec<SpeakerPosterior>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RegSchedule {
    /// Regularize inside every M-step.
    #[default]
    EveryStep,
    /// Train unregularized, then run one regularized M-step at the end.
    FinalStep,
}

impl std::str::FromStr for RegSchedule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "every_step" => Ok(RegSchedule::EveryStep),
            "final_step" => Ok(RegSchedule::FinalStep),
            _ => Err(Error::Usage(format!(
                "unknown regularization schedule {s:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub max_iters: usize,
    /// Stop when `|Δ log-likelihood| < min_gain_per_utt · N`.
    pub min_gain_per_utt: f64,
    pub reg: RegularizerConfig,
    pub schedule: RegSchedule,
    /// Relative ridge used when a statistic is near-singular.
    pub jitter: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_iters: 20,
            min_gain_per_utt: 1e-6,
            reg: RegularizerConfig::default(),
            schedule: RegSchedule::EveryStep,
            jitter: linalg::JITTER_RELATIVE,
        }
    }
}

impl TrainConfig {
    pub fn with_reg(reg: RegularizerConfig) -> Self {
        TrainConfig {
            reg,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::Usage("EM iterations must be >= 1".into()));
        }
        if !(self.min_gain_per_utt >= 0.0) {
            return Err(Error::Usage("convergence delta must be >= 0".into()));
        }
        if !(self.jitter > 0.0) {
            return Err(Error::Usage("jitter must be > 0".into()));
        }
        self.reg.validate()
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: PldaModel,
    /// Log-likelihood of the initial model followed by one entry per EM iteration.
    pub loglik_trace: Vec<f64>,
    pub iterations: usize,
}

fn check_labeled(ds: &Dataset, dim: usize) -> Result<()> {
    if ds.dim() != dim {
        return Err(Error::Data(format!(
            "model dimension {dim} does not match data dimension {}",
            ds.dim()
        )));
    }
    if !ds.is_fully_labeled() {
        return Err(Error::Data("training data must be fully labeled".into()));
    }
    Ok(())
}

/// Per-utterance-count factorizations of `L_n = B + n·W`, shared by all speakers with `n_m = n`.
fn precision_cache(model: &PldaModel, ds: &Dataset) -> Result<BTreeMap<usize, Cholesky<f64, Dyn>>> {
    let mut cache = BTreeMap::new();
    for (_, idx) in ds.speakers() {
        let n = idx.len();
        if let std::collections::btree_map::Entry::Vacant(slot) = cache.entry(n) {
            let l = &model.b + &model.w * n as f64;
            let chol = linalg::cholesky(&l, "speaker posterior precision L_m").map_err(|_| {
                Error::Numerical(format!("singular posterior precision for n_m = {n}"))
            })?;
            slot.insert(chol);
        }
    }
    Ok(cache)
}

fn utterance_sum(ds: &Dataset, idx: &[usize]) -> DVector<f64> {
    let mut s = DVector::zeros(ds.dim());
    for x in ds.vectors_of(idx) {
        s += x;
    }
    s
}

/// Infers `y_m | X ~ N(L_m⁻¹(Bμ + W Σ_n x_mn), L_m⁻¹)` with `L_m = B + n_m W`.
pub fn e_step(model: &PldaModel, ds: &Dataset) -> Result<PosteriorStats> {
    check_labeled(ds, model.dim())?;
    let cache = precision_cache(model, ds)?;
    let covs: BTreeMap<usize, DMatrix<f64>> = cache
        .iter()
        .map(|(&n, chol)| {
            let mut c = chol.inverse();
            linalg::symmetrize(&mut c);
            (n, c)
        })
        .collect();
    let b_mu = &model.b * &model.mu;
    let speakers: Vec<(&str, &[usize])> = ds.speakers().collect();
    let posteriors = speakers
        .par_iter()
        .map(|&(spk, idx)| {
            let n = idx.len();
            let rhs = &b_mu + &model.w * utterance_sum(ds, idx);
            let mean = cache[&n].solve(&rhs);
            let cov = covs[&n].clone();
            let mut second_moment = &cov + &mean * mean.transpose();
            linalg::symmetrize(&mut second_moment);
            SpeakerPosterior {
                spk_id: spk.to_string(),
                count: n,
                mean,
                cov,
                second_moment,
            }
        })
        .collect();
    Ok(PosteriorStats {
        speakers: posteriors,
    })
}

/// The two unregularized M-step statistics, plus the updated mean.
#[derive(Debug, Clone, PartialEq)]
pub struct MStepStats {
    pub mu: DVector<f64>,
    /// Estimate of B⁻¹.
    pub g_between: DMatrix<f64>,
    /// Estimate of W⁻¹.
    pub g_within: DMatrix<f64>,
}

pub fn m_step_stats(stats: &PosteriorStats, ds: &Dataset) -> Result<MStepStats> {
    let m = stats.speakers.len();
    if m == 0 {
        return Err(Error::Data("no speakers in posterior statistics".into()));
    }
    let d = ds.dim();
    let index: BTreeMap<&str, &[usize]> = ds.speakers().collect();

    let mut mean_sum = DVector::zeros(d);
    let mut second_sum = DMatrix::zeros(d, d);
    for p in &stats.speakers {
        mean_sum += &p.mean;
        second_sum += &p.second_moment;
    }
    let mu = mean_sum / m as f64;
    let mut g_between = second_sum / m as f64 - &mu * mu.transpose();
    linalg::symmetrize(&mut g_between);

    let per_speaker: Vec<DMatrix<f64>> = stats
        .speakers
        .par_iter()
        .map(|p| {
            let idx = index
                .get(p.spk_id.as_str())
                .ok_or_else(|| Error::Data(format!("speaker {} missing from dataset", p.spk_id)))?;
            if idx.len() != p.count {
                return Err(Error::Data(format!(
                    "posterior for {} computed on {} utterances, dataset has {}",
                    p.spk_id,
                    p.count,
                    idx.len()
                )));
            }
            let mut acc = &p.cov * p.count as f64;
            for x in ds.vectors_of(idx) {
                let r = &p.mean - x;
                acc += &r * r.transpose();
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut within_sum = DMatrix::zeros(d, d);
    let mut n_total = 0usize;
    for (acc, p) in per_speaker.iter().zip(&stats.speakers) {
        within_sum += acc;
        n_total += p.count;
    }
    let mut g_within = within_sum / n_total as f64;
    linalg::symmetrize(&mut g_within);

    Ok(MStepStats {
        mu,
        g_between,
        g_within,
    })
}

/// Turns a covariance statistic into a precision, applying `kind` when `active`.
/// `prev` is the precision from the previous M-step, the ADMM starting point.
fn regularized_precision(
    stat: &DMatrix<f64>,
    reg: &RegularizerConfig,
    active: bool,
    prev: &DMatrix<f64>,
    jitter: f64,
    what: &str,
) -> Result<DMatrix<f64>> {
    let kind = if active { reg.kind } else { RegKind::None };
    let invert = |cov: &DMatrix<f64>| -> Result<DMatrix<f64>> {
        let (cov, _) = linalg::jitter_if_singular_with(cov, jitter, what)?;
        linalg::spd_inverse(&cov, what)
    };
    match kind {
        RegKind::None => invert(stat),
        RegKind::Diag => invert(&regularize::regularize_diagonal(&RegInput::new(
            stat.clone(),
        )?)),
        RegKind::Interp => {
            let g0 = reg.g0.matrix(stat.nrows());
            invert(&regularize::regularize_interpolate(
                &RegInput::new(stat.clone())?,
                reg.gamma,
                &g0,
            )?)
        }
        RegKind::Sparse => {
            let (g, _) = linalg::jitter_if_singular_with(stat, jitter, what)?;
            let sol = regularize::sparse_admm(&RegInput::new(g)?, reg, prev)?;
            // The sparse solution is only PSD; keep the model strictly PD.
            let (b, jittered) = linalg::jitter_if_singular_with(&sol.b, jitter, what)?;
            if jittered {
                log::warn!("sparse {what} precision was semidefinite; ridge added");
            }
            Ok(b)
        }
    }
}

/// Updates `μ`, then `B⁻¹` and `W⁻¹` from `stats`, regularizing per `reg.target`.
pub fn m_step(
    stats: &PosteriorStats,
    ds: &Dataset,
    reg: &RegularizerConfig,
    prev: &PldaModel,
    apply_reg: bool,
    jitter: f64,
) -> Result<PldaModel> {
    let s = m_step_stats(stats, ds)?;
    let b = regularized_precision(
        &s.g_between,
        reg,
        apply_reg && reg.target.between(),
        &prev.b,
        jitter,
        "between-speaker statistic G",
    )?;
    let w = regularized_precision(
        &s.g_within,
        reg,
        apply_reg && reg.target.within(),
        &prev.w,
        jitter,
        "within-speaker statistic G_W",
    )?;
    Ok(PldaModel {
        mu: s.mu,
        b,
        w,
        center: prev.center.clone(),
    })
}

/// EM from `B = W = I`, `μ = 0`.
pub fn train(ds: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_from(ds, cfg, PldaModel::identity(ds.dim()))
}

/// EM from an explicit starting model (warm start).
pub fn train_from(ds: &Dataset, cfg: &TrainConfig, init: PldaModel) -> Result<TrainOutcome> {
    cfg.validate()?;
    check_labeled(ds, init.dim())?;
    if ds.num_speakers() < 2 {
        return Err(Error::Data(format!(
            "between-speaker covariance unidentifiable with {} speaker(s); need at least 2",
            ds.num_speakers()
        )));
    }
    init.validate()?;
    let every_step = cfg.schedule == RegSchedule::EveryStep;
    let tol = cfg.min_gain_per_utt * ds.len() as f64;

    let mut model = init;
    let mut trace = vec![log_likelihood(&model, ds)?];
    let mut iterations = 0;
    for _ in 0..cfg.max_iters {
        let stats = e_step(&model, ds)?;
        model = m_step(&stats, ds, &cfg.reg, &model, every_step, cfg.jitter)?;
        iterations += 1;
        let ll = log_likelihood(&model, ds)?;
        let prev = *trace.last().expect("trace starts non-empty");
        trace.push(ll);
        log::debug!("EM iteration {iterations}: log-likelihood {ll}");
        if (ll - prev).abs() < tol {
            break;
        }
    }
    if !every_step && cfg.reg.kind != RegKind::None {
        let stats = e_step(&model, ds)?;
        model = m_step(&stats, ds, &cfg.reg, &model, true, cfg.jitter)?;
        iterations += 1;
        trace.push(log_likelihood(&model, ds)?);
    }
    Ok(TrainOutcome {
        model,
        loglik_trace: trace,
        iterations,
    })
}

/// Marginal log-likelihood `Σ_m log p(x_m1..x_mn_m)`, evaluated per speaker as
/// `log p(x|ŷ) + log p(ŷ) − log p(ŷ|x)` at the posterior mean `ŷ`.
pub fn log_likelihood(model: &PldaModel, ds: &Dataset) -> Result<f64> {
    check_labeled(ds, model.dim())?;
    let d = ds.dim() as f64;
    let logdet_b = linalg::log_det(&linalg::cholesky(&model.b, "between-speaker precision")?);
    let logdet_w = linalg::log_det(&linalg::cholesky(&model.w, "within-speaker precision")?);
    let cache = precision_cache(model, ds)?;
    let logdet_l: BTreeMap<usize, f64> = cache
        .iter()
        .map(|(&n, c)| (n, linalg::log_det(c)))
        .collect();
    let b_mu = &model.b * &model.mu;
    let speakers: Vec<&[usize]> = ds.speakers().map(|(_, idx)| idx).collect();
    let terms: Vec<f64> = speakers
        .par_iter()
        .map(|idx| {
            let n = idx.len();
            let nf = n as f64;
            let rhs = &b_mu + &model.w * utterance_sum(ds, idx);
            let y = cache[&n].solve(&rhs);
            let mut resid = 0.0;
            for x in ds.vectors_of(idx) {
                resid += linalg::quad_form(&model.w, &(x - &y));
            }
            let prior = linalg::quad_form(&model.b, &(&y - &model.mu));
            -0.5 * nf * d * LN_2PI + 0.5 * nf * logdet_w + 0.5 * logdet_b
                - 0.5 * logdet_l[&n]
                - 0.5 * resid
                - 0.5 * prior
        })
        .collect();
    Ok(terms.iter().sum())
}

fn write_vector(out: &mut String, v: &DVector<f64>) {
    let row: Vec<String> = v.iter().map(|x| format!("{x:.16e}")).collect();
    let _ = writeln!(out, "{}", row.join(" "));
}

fn write_matrix(out: &mut String, m: &DMatrix<f64>) {
    for i in 0..m.nrows() {
        let row: Vec<String> = m.row(i).iter().map(|x| format!("{x:.16e}")).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
}

/// Text model format: header `plda-model v1 dim=D`, then `mu`, `B`, `W` sections
/// (row-major, 17 significant digits) and an optional `center` section.
pub fn format_model(model: &PldaModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MODEL_MAGIC} {MODEL_VERSION} dim={}", model.dim());
    out.push_str("mu\n");
    write_vector(&mut out, &model.mu);
    out.push_str("B\n");
    write_matrix(&mut out, &model.b);
    out.push_str("W\n");
    write_matrix(&mut out, &model.w);
    if let Some(c) = &model.center {
        out.push_str("center\n");
        write_vector(&mut out, c);
    }
    out
}

struct LineCursor<'a> {
    lines: Vec<(usize, &'a str)>,
    pos: usize,
    source: &'a str,
    last_line: usize,
}

impl<'a> LineCursor<'a> {
    fn new(text: &'a str, source: &'a str) -> Self {
        let lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
            .collect();
        LineCursor {
            lines,
            pos: 0,
            source,
            last_line: text.lines().count().max(1),
        }
    }

    fn next(&mut self, missing: impl FnOnce() -> String) -> Result<(usize, &'a str)> {
        let item = self.lines.get(self.pos).copied().ok_or_else(|| {
            Error::parse(
                self.source,
                self.last_line,
                format!("truncated model file: {}", missing()),
            )
        })?;
        self.pos += 1;
        Ok(item)
    }

    fn peek(&self) -> Option<(usize, &'a str)> {
        self.lines.get(self.pos).copied()
    }

    fn section(&mut self, name: &str, rows: usize, dim: usize) -> Result<Vec<f64>> {
        let (lineno, tag) = self.next(|| format!("missing {name} section"))?;
        if tag != name {
            return Err(Error::parse(
                self.source,
                lineno,
                format!("expected section {name:?}, found {tag:?}"),
            ));
        }
        let mut values = Vec::with_capacity(rows * dim);
        for r in 0..rows {
            let (lineno, line) = self.next(|| format!("{name} has {r} of {rows} rows"))?;
            for f in line.split_whitespace() {
                let v = f.parse::<f64>().map_err(|_| {
                    Error::parse(self.source, lineno, format!("non-numeric field {f:?}"))
                })?;
                values.push(v);
            }
            if values.len() != (r + 1) * dim {
                return Err(Error::parse(
                    self.source,
                    lineno,
                    format!(
                        "{name}: row {} has the wrong number of values, expected {dim}",
                        r + 1
                    ),
                ));
            }
        }
        Ok(values)
    }
}

pub fn parse_model(text: &str, source: &str) -> Result<PldaModel> {
    let mut cur = LineCursor::new(text, source);
    let (lineno, header) = cur.next(|| "empty model file".into())?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 3 || fields[0] != MODEL_MAGIC {
        return Err(Error::parse(
            source,
            lineno,
            format!("expected `{MODEL_MAGIC} {MODEL_VERSION} dim=D` header"),
        ));
    }
    if fields[1] != MODEL_VERSION {
        return Err(Error::parse(
            source,
            lineno,
            format!(
                "unsupported model version {} (expected {MODEL_VERSION})",
                fields[1]
            ),
        ));
    }
    let dim: usize = fields[2]
        .strip_prefix("dim=")
        .and_then(|d| d.parse().ok())
        .filter(|&d| d > 0)
        .ok_or_else(|| {
            Error::parse(
                source,
                lineno,
                format!("bad dimension field {:?}", fields[2]),
            )
        })?;

    let mu = DVector::from_vec(cur.section("mu", 1, dim)?);
    let b = DMatrix::from_row_slice(dim, dim, &cur.section("B", dim, dim)?);
    let w = DMatrix::from_row_slice(dim, dim, &cur.section("W", dim, dim)?);
    let center = match cur.peek() {
        Some((_, "center")) => Some(DVector::from_vec(cur.section("center", 1, dim)?)),
        _ => None,
    };
    if let Some((lineno, extra)) = cur.peek() {
        return Err(Error::parse(
            source,
            lineno,
            format!("unexpected content {extra:?}"),
        ));
    }
    let model = PldaModel { mu, b, w, center };
    model.validate()?;
    Ok(model)
}

pub fn save_model(model: &PldaModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_model(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<PldaModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_model(&text, &path.display().to_string())
}
