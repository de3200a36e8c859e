//! Speaker embeddings: the dataset abstraction, the text format, preprocessing and
//! a seeded sampler for the two-covariance generative model.
//!
//! Text format, one utterance per line:
//!
//! ```text
//! # comment
//! utt_id spk_id v1 v2 ... vD
//! ```
//!
//! `spk_id` is `-` for unlabeled data.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Generator used by every seeded operation in the crate. Written into the
/// header of generated files so a dataset can be traced back to its sampler.
pub const RNG_NAME: &str = "chacha20(rand_chacha-0.9)+ziggurat-normal(rand_distr-0.5)";

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub utt_id: String,
    pub spk_id: Option<String>,
    pub vec: DVector<f64>,
}

impl Embedding {
    pub fn new(utt_id: impl Into<String>, spk_id: Option<&str>, vec: DVector<f64>) -> Self {
        Embedding {
            utt_id: utt_id.into(),
            spk_id: spk_id.map(str::to_string),
            vec,
        }
    }
}

/// A set of embeddings sharing one dimension, indexed by speaker and utterance.
///
/// Speakers are kept in a `BTreeMap` so every reduction over speakers runs in
/// sorted speaker-id order, independent of file order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    embeddings: Vec<Embedding>,
    speakers: BTreeMap<String, Vec<usize>>,
    utt_index: HashMap<String, usize>,
    dim: usize,
}

impl Dataset {
    pub fn new(embeddings: Vec<Embedding>) -> Result<Self> {
        let first = embeddings
            .first()
            .ok_or_else(|| Error::Data("empty dataset".into()))?;
        let dim = first.vec.len();
        if dim == 0 {
            return Err(Error::Data("embeddings must have dimension >= 1".into()));
        }
        let mut speakers: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        let mut utt_index = HashMap::with_capacity(embeddings.len());
        for (i, e) in embeddings.iter().enumerate() {
            if e.vec.len() != dim {
                return Err(Error::Data(format!(
                    "dimension mismatch: {} has dimension {}, expected {dim}",
                    e.utt_id,
                    e.vec.len()
                )));
            }
            if e.vec.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data(format!("{} has non-finite values", e.utt_id)));
            }
            if utt_index.insert(e.utt_id.clone(), i).is_some() {
                return Err(Error::Data(format!("duplicate utt_id {}", e.utt_id)));
            }
            if let Some(spk) = &e.spk_id {
                speakers.entry(spk.clone()).or_default().push(i);
            }
        }
        for idx in speakers.values_mut() {
            idx.sort_by(|&a, &b| embeddings[a].utt_id.cmp(&embeddings[b].utt_id));
        }
        Ok(Dataset {
            embeddings,
            speakers,
            utt_index,
            dim,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Total number of utterances N.
    pub fn len(&self) -> usize {
        self.embeddings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.embeddings.is_empty()
    }

    /// Number of labeled speakers M.
    pub fn num_speakers(&self) -> usize {
        self.speakers.len()
    }

    pub fn embeddings(&self) -> &[Embedding] {
        &self.embeddings
    }

    pub fn get(&self, utt_id: &str) -> Option<&Embedding> {
        self.utt_index.get(utt_id).map(|&i| &self.embeddings[i])
    }

    /// Speakers in sorted id order with the indices of their utterances, each
    /// speaker's utterances sorted by utt_id.
    pub fn speakers(&self) -> impl Iterator<Item = (&str, &[usize])> {
        self.speakers
            .iter()
            .map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn speaker_ids(&self) -> Vec<&str> {
        self.speakers.keys().map(String::as_str).collect()
    }

    pub fn vectors_of<'a>(
        &'a self,
        indices: &'a [usize],
    ) -> impl Iterator<Item = &'a DVector<f64>> + 'a {
        indices.iter().map(move |&i| &self.embeddings[i].vec)
    }

    /// True when every utterance carries a speaker label.
    pub fn is_fully_labeled(&self) -> bool {
        self.embeddings.iter().all(|e| e.spk_id.is_some())
    }

    /// Restricts the dataset to the given speakers, keeping file order.
    pub fn subset_speakers(&self, spk_ids: &[&str]) -> Result<Dataset> {
        for s in spk_ids {
            if !self.speakers.contains_key(*s) {
                return Err(Error::Data(format!("unknown speaker {s}")));
            }
        }
        let keep: std::collections::HashSet<&str> = spk_ids.iter().copied().collect();
        let embeddings = self
            .embeddings
            .iter()
            .filter(|e| e.spk_id.as_deref().is_some_and(|s| keep.contains(s)))
            .cloned()
            .collect();
        Dataset::new(embeddings)
    }

    /// Applies `f` to every vector, keeping ids.
    pub fn map_vectors<F>(&self, mut f: F) -> Result<Dataset>
    where
        F: FnMut(&Embedding) -> Result<DVector<f64>>,
    {
        let embeddings = self
            .embeddings
            .iter()
            .map(|e| {
                Ok(Embedding {
                    utt_id: e.utt_id.clone(),
                    spk_id: e.spk_id.clone(),
                    vec: f(e)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(embeddings)
    }
}

pub fn parse_embeddings(text: &str, source: &str) -> Result<Dataset> {
    let mut embeddings = Vec::new();
    let mut dim: Option<usize> = None;
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split_whitespace();
        let utt = fields.next().unwrap_or_default();
        let spk = fields
            .next()
            .ok_or_else(|| Error::parse(source, lineno, "missing spk_id column"))?;
        let vec = fields
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| Error::parse(source, lineno, format!("non-numeric field {f:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if vec.is_empty() {
            return Err(Error::parse(source, lineno, "no vector values"));
        }
        if let Some(v) = vec.iter().find(|v| !v.is_finite()) {
            return Err(Error::parse(
                source,
                lineno,
                format!("non-finite value {v}"),
            ));
        }
        match dim {
            None => dim = Some(vec.len()),
            Some(d) if d != vec.len() => {
                return Err(Error::parse(
                    source,
                    lineno,
                    format!("dimension mismatch: {} values, expected {d}", vec.len()),
                ))
            }
            _ => {}
        }
        if let Some(prev) = seen.insert(utt.to_string(), lineno) {
            return Err(Error::parse(
                source,
                lineno,
                format!("duplicate utt_id {utt} (first seen on line {prev})"),
            ));
        }
        let spk_id = if spk == "-" { None } else { Some(spk) };
        embeddings.push(Embedding::new(utt, spk_id, DVector::from_vec(vec)));
    }
    if embeddings.is_empty() {
        return Err(Error::Data(format!("{source}: empty dataset")));
    }
    Dataset::new(embeddings)
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_embeddings(&text, &path.display().to_string())
}

/// Serializes with 17 significant digits so loading is lossless.
pub fn format_embeddings(ds: &Dataset, header: &[String]) -> String {
    let mut out = String::new();
    for h in header {
        let _ = writeln!(out, "# {h}");
    }
    for e in ds.embeddings() {
        out.push_str(&e.utt_id);
        out.push(' ');
        out.push_str(e.spk_id.as_deref().unwrap_or("-"));
        for v in e.vec.iter() {
            let _ = write!(out, " {v:.16e}");
        }
        out.push('\n');
    }
    out
}

pub fn save_embeddings(ds: &Dataset, header: &[String], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_embeddings(ds, header)).map_err(|e| Error::io(path, e))
}

/// Arithmetic mean over all N embeddings.
pub fn global_mean(ds: &Dataset) -> Result<DVector<f64>> {
    if ds.is_empty() {
        return Err(Error::Data("global mean of an empty dataset".into()));
    }
    let mut sum = DVector::zeros(ds.dim());
    for e in ds.embeddings() {
        sum += &e.vec;
    }
    Ok(sum / ds.len() as f64)
}

/// Replaces each vector by `(x - mean) / ‖x - mean‖₂`.
pub fn length_normalize(ds: &Dataset, mean: &DVector<f64>) -> Result<Dataset> {
    if mean.len() != ds.dim() {
        return Err(Error::Data(format!(
            "mean has dimension {}, dataset has {}",
            mean.len(),
            ds.dim()
        )));
    }
    ds.map_vectors(|e| normalize_vector(&e.vec, mean, &e.utt_id))
}

/// Preprocessing for a single vector: center then scale to unit norm.
pub fn normalize_vector(
    x: &DVector<f64>,
    mean: &DVector<f64>,
    utt_id: &str,
) -> Result<DVector<f64>> {
    let r = x - mean;
    let norm = r.norm();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::Data(format!(
            "zero-norm residual for {utt_id} after centering"
        )));
    }
    Ok(r / norm)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UttsPerSpeaker {
    Fixed(usize),
    /// Uniform over the inclusive range.
    Range(usize, usize),
}

/// Parameters of the generative model `y_m ~ N(μ, B⁻¹)`, `x_mn ~ N(y_m, W⁻¹)`.
#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub dim: usize,
    pub num_speakers: usize,
    pub utts: UttsPerSpeaker,
    pub between_cov: DMatrix<f64>,
    pub within_cov: DMatrix<f64>,
    /// Multiplies the within-speaker noise; 0 makes every utterance equal its speaker latent.
    pub within_scale: f64,
    pub mean: DVector<f64>,
    pub seed: u64,
    /// Prepended to generated speaker ids, so several domains can share trial lists.
    pub prefix: String,
}

impl SynthSpec {
    pub fn new(
        between_cov: DMatrix<f64>,
        within_cov: DMatrix<f64>,
        num_speakers: usize,
        utts: UttsPerSpeaker,
        seed: u64,
    ) -> Self {
        let dim = between_cov.nrows();
        SynthSpec {
            dim,
            num_speakers,
            utts,
            between_cov,
            within_cov,
            within_scale: 1.0,
            mean: DVector::zeros(dim),
            seed,
            prefix: String::new(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.num_speakers == 0 {
            return Err(Error::Usage(
                "SynthSpec needs dim >= 1 and >= 1 speaker".into(),
            ));
        }
        for (name, m) in [("between", &self.between_cov), ("within", &self.within_cov)] {
            if m.nrows() != self.dim || m.ncols() != self.dim {
                return Err(Error::Usage(format!(
                    "{name} covariance must be {0}x{0}",
                    self.dim
                )));
            }
        }
        if self.mean.len() != self.dim {
            return Err(Error::Usage("mean dimension mismatch".into()));
        }
        match self.utts {
            UttsPerSpeaker::Fixed(0) => {
                return Err(Error::Usage("utterances per speaker must be >= 1".into()))
            }
            UttsPerSpeaker::Range(lo, hi) if lo == 0 || lo > hi => {
                return Err(Error::Usage(format!("invalid utterance range {lo}..={hi}")))
            }
            _ => {}
        }
        if !(self.within_scale >= 0.0) {
            return Err(Error::Usage("within_scale must be >= 0".into()));
        }
        Ok(())
    }
}

fn covariance_factor(m: &DMatrix<f64>, name: &str) -> Result<DMatrix<f64>> {
    if crate::linalg::asymmetry(m) > 1e-12 * m.amax().max(1.0) {
        return Err(Error::Usage(format!("{name} covariance is not symmetric")));
    }
    nalgebra::Cholesky::new(m.clone())
        .map(|c| c.unpack())
        .ok_or_else(|| Error::Usage(format!("{name} covariance is not positive definite")))
}

fn standard_normal(rng: &mut ChaCha20Rng, dim: usize) -> DVector<f64> {
    DVector::from_iterator(dim, (0..dim).map(|_| StandardNormal.sample(rng)))
}

pub fn gen_synthetic(spec: &SynthSpec) -> Result<Dataset> {
    gen_synthetic_with_rng(spec, ChaCha20Rng::seed_from_u64(spec.seed))
}

/// Samples speakers in order; each draws its utterance count (for ranges), its
/// latent, then its utterances.
pub fn gen_synthetic_with_rng(spec: &SynthSpec, mut rng: ChaCha20Rng) -> Result<Dataset> {
    use rand::Rng;
    spec.validate()?;
    let lb = covariance_factor(&spec.between_cov, "between-speaker")?;
    let lw = covariance_factor(&spec.within_cov, "within-speaker")? * spec.within_scale;
    let mut embeddings = Vec::new();
    for m in 0..spec.num_speakers {
        let n = match spec.utts {
            UttsPerSpeaker::Fixed(n) => n,
            UttsPerSpeaker::Range(lo, hi) => rng.random_range(lo..=hi),
        };
        let spk = format!("{}spk{:05}", spec.prefix, m);
        let y = &spec.mean + &lb * standard_normal(&mut rng, spec.dim);
        for j in 0..n {
            let x = &y + &lw * standard_normal(&mut rng, spec.dim);
            embeddings.push(Embedding::new(format!("{spk}-{j:03}"), Some(&spk), x));
        }
    }
    Dataset::new(embeddings)
}
