//! `regplda`: train, adapt, score and evaluate PLDA back-ends from the command line.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use regplda::embeddings::{load_embeddings, save_embeddings, RNG_NAME};
use regplda::metrics::{self, DcfParams};
use regplda::pipeline::{self, AdaptOptions, SynthConfig};
use regplda::plda::{load_model, save_model, RegSchedule, TrainConfig, TrainOutcome};
use regplda::regularize::{RegKind, RegTarget, RegularizerConfig};
use regplda::scoring::{self, Backend, PldaScorer};
use regplda::{Error, Result};

#[derive(Parser, Debug)]
#[command(
    name = "regplda",
    version,
    about = "Regularized PLDA speaker-verification back-end"
)]
struct Cli {
    /// Worker threads; 0 uses every available core. Output does not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic source/target corpus and a trial list.
    GenSynth(GenSynthArgs),
    /// Train a PLDA model on labeled embeddings.
    Train(TrainArgs),
    /// Retrain on a random subset of in-domain speakers.
    Adapt(AdaptArgs),
    /// Score a trial list.
    Score(ScoreArgs),
    /// Compute EER and minDCF from scores and labeled trials.
    Eval(EvalArgs),
}

#[derive(Args, Debug)]
struct GenSynthArgs {
    /// Output directory for train.emb, adapt.emb, eval.emb and trials.txt.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 16)]
    dim: usize,
    /// Source-domain training speakers.
    #[arg(long, default_value_t = 500)]
    num_speakers: usize,
    #[arg(long, default_value_t = 200)]
    adapt_speakers: usize,
    #[arg(long, default_value_t = 100)]
    eval_speakers: usize,
    #[arg(long, default_value_t = 6)]
    utts_min: usize,
    #[arg(long, default_value_t = 10)]
    utts_max: usize,
    /// Target-domain rotation angle in radians.
    #[arg(long, default_value_t = std::f64::consts::FRAC_PI_3)]
    rotation: f64,
    /// Target-domain within-speaker covariance scale.
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    #[arg(long, default_value_t = 0.6)]
    correlation: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum RegArg {
    None,
    Diag,
    Interp,
    Sparse,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TargetArg {
    #[value(name = "B")]
    B,
    #[value(name = "W")]
    W,
    #[value(name = "both")]
    Both,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ScheduleArg {
    #[value(name = "every_step")]
    EveryStep,
    #[value(name = "final_step")]
    FinalStep,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BackendArg {
    Plda,
    Cosine,
}

#[derive(Args, Debug)]
struct TrainOpts {
    #[arg(long, value_enum, default_value = "none")]
    reg: RegArg,
    #[arg(long, value_enum, default_value = "B")]
    reg_target: TargetArg,
    /// Interpolation weight (interp only, default 2).
    #[arg(long)]
    gamma: Option<f64>,
    /// L1 weight (sparse only, default 1e-3).
    #[arg(long)]
    lambda: Option<f64>,
    /// ADMM penalty (sparse only, default 0.1).
    #[arg(long)]
    beta: Option<f64>,
    /// ADMM tolerance (sparse only, default 1e-6).
    #[arg(long)]
    eps: Option<f64>,
    /// Maximum EM iterations.
    #[arg(long, default_value_t = 20)]
    iters: usize,
    #[arg(long, value_enum, default_value = "every_step")]
    reg_schedule: ScheduleArg,
    /// Warm-start EM from this model.
    #[arg(long)]
    init_model: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Labeled embeddings.
    #[arg(long)]
    data: PathBuf,
    /// Output model file.
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    opts: TrainOpts,
}

#[derive(Args, Debug)]
struct AdaptArgs {
    /// Labeled in-domain embeddings.
    #[arg(long)]
    data: PathBuf,
    /// Output model file; with --repeats > 1, files `<model>.<i>` are written.
    #[arg(long)]
    model: PathBuf,
    /// Speaker subset size; omit to use every speaker.
    #[arg(long)]
    num_speakers: Option<usize>,
    /// Independent subsets, drawn with seeds `seed`, `seed + 1`, ...
    #[arg(long, default_value_t = 1)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Reuse the init model's centering mean instead of re-estimating it.
    #[arg(long)]
    keep_mean: bool,
    #[command(flatten)]
    opts: TrainOpts,
}

#[derive(Args, Debug)]
struct ScoreArgs {
    #[arg(long)]
    trials: PathBuf,
    /// Enrollment embeddings.
    #[arg(long)]
    enroll: PathBuf,
    /// Test embeddings; defaults to the enrollment file.
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "plda")]
    backend: BackendArg,
    /// Model file; required for plda, optional for cosine (supplies the centering mean).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Output score file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    scores: PathBuf,
    /// Labeled trial list in the same order as the scores.
    #[arg(long)]
    trials: PathBuf,
    #[arg(long, default_value_t = 0.01)]
    p_target: f64,
    #[arg(long, default_value_t = 1.0)]
    c_miss: f64,
    #[arg(long, default_value_t = 1.0)]
    c_fa: f64,
    /// Also write `key=value` lines to this file.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Also write the DET sweep (`threshold p_miss p_fa`) to this file.
    #[arg(long)]
    det: Option<PathBuf>,
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn train_config(opts: &TrainOpts) -> Result<TrainConfig> {
    let kind = match opts.reg {
        RegArg::None => RegKind::None,
        RegArg::Diag => RegKind::Diag,
        RegArg::Interp => RegKind::Interp,
        RegArg::Sparse => RegKind::Sparse,
    };
    if kind != RegKind::Interp && opts.gamma.is_some() {
        return Err(Error::Usage("--gamma requires --reg interp".into()));
    }
    if kind != RegKind::Sparse
        && (opts.lambda.is_some() || opts.beta.is_some() || opts.eps.is_some())
    {
        return Err(Error::Usage(
            "--lambda, --beta and --eps require --reg sparse".into(),
        ));
    }
    let target = match opts.reg_target {
        TargetArg::B => RegTarget::Between,
        TargetArg::W => RegTarget::Within,
        TargetArg::Both => RegTarget::Both,
    };
    let defaults = RegularizerConfig::default();
    let reg = RegularizerConfig {
        kind,
        target,
        gamma: opts.gamma.unwrap_or(defaults.gamma),
        lambda: opts.lambda.unwrap_or(defaults.lambda),
        beta: opts.beta.unwrap_or(defaults.beta),
        eps: opts.eps.unwrap_or(defaults.eps),
        ..defaults
    };
    let cfg = TrainConfig {
        max_iters: opts.iters,
        schedule: match opts.reg_schedule {
            ScheduleArg::EveryStep => RegSchedule::EveryStep,
            ScheduleArg::FinalStep => RegSchedule::FinalStep,
        },
        ..TrainConfig::with_reg(reg)
    };
    cfg.validate()?;
    Ok(cfg)
}

fn print_trace(outcome: &TrainOutcome) {
    for (i, ll) in outcome.loglik_trace.iter().enumerate() {
        println!("iter {i} loglik {ll:.10e}");
    }
}

fn gen_synth(args: &GenSynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        dim: args.dim,
        train_speakers: args.num_speakers,
        adapt_speakers: args.adapt_speakers,
        eval_speakers: args.eval_speakers,
        utts_min: args.utts_min,
        utts_max: args.utts_max,
        rotation: args.rotation,
        scale: args.scale,
        correlation: args.correlation,
        seed: args.seed,
    };
    let corpus = pipeline::gen_synth_corpus(&cfg)?;
    std::fs::create_dir_all(&args.out_dir).map_err(|e| Error::Io {
        path: args.out_dir.clone(),
        source: e,
    })?;
    let header = |split: &str| {
        vec![
            format!("rng={RNG_NAME}"),
            format!(
                "split={split} seed={} dim={} rotation={:e} scale={:e} correlation={:e}",
                cfg.seed, cfg.dim, cfg.rotation, cfg.scale, cfg.correlation
            ),
        ]
    };
    save_embeddings(
        &corpus.train,
        &header("train"),
        args.out_dir.join("train.emb"),
    )?;
    save_embeddings(
        &corpus.adapt,
        &header("adapt"),
        args.out_dir.join("adapt.emb"),
    )?;
    save_embeddings(&corpus.eval, &header("eval"), args.out_dir.join("eval.emb"))?;
    write_file(
        &args.out_dir.join("trials.txt"),
        &scoring::format_trials(&corpus.trials),
    )?;
    println!(
        "wrote {} train, {} adapt, {} eval embeddings and {} trials",
        corpus.train.len(),
        corpus.adapt.len(),
        corpus.eval.len(),
        corpus.trials.len()
    );
    Ok(())
}

fn train(args: &TrainArgs) -> Result<()> {
    let cfg = train_config(&args.opts)?;
    let init = args.opts.init_model.as_ref().map(load_model).transpose()?;
    let data = load_embeddings(&args.data)?;
    let outcome = pipeline::train_backend(&data, &cfg, init.as_ref(), None)?;
    print_trace(&outcome);
    save_model(&outcome.model, &args.model)
}

fn adapt(args: &AdaptArgs) -> Result<()> {
    let cfg = train_config(&args.opts)?;
    if args.repeats == 0 {
        return Err(Error::Usage("--repeats must be >= 1".into()));
    }
    if args.keep_mean && args.opts.init_model.is_none() {
        return Err(Error::Usage("--keep-mean requires --init-model".into()));
    }
    let init = args.opts.init_model.as_ref().map(load_model).transpose()?;
    let data = load_embeddings(&args.data)?;
    for i in 0..args.repeats {
        let seed = args.seed.wrapping_add(i as u64);
        let opts = AdaptOptions {
            num_speakers: args.num_speakers,
            seed,
            init: init.as_ref(),
            keep_mean: args.keep_mean,
        };
        let outcome = pipeline::adapt_backend(&data, &cfg, &opts)?;
        let path = if args.repeats == 1 {
            args.model.clone()
        } else {
            let mut name = args.model.clone().into_os_string();
            name.push(format!(".{i}"));
            PathBuf::from(name)
        };
        info!("adapted model {} with seed {seed}", path.display());
        print_trace(&outcome);
        save_model(&outcome.model, &path)?;
    }
    Ok(())
}

fn score(args: &ScoreArgs) -> Result<()> {
    let model = args.model.as_ref().map(load_model).transpose()?;
    let backend = match args.backend {
        BackendArg::Plda => {
            let model = model
                .as_ref()
                .ok_or_else(|| Error::Usage("--backend plda requires --model".into()))?;
            Backend::Plda(PldaScorer::new(model)?)
        }
        BackendArg::Cosine => Backend::Cosine,
    };
    let trials = scoring::load_trials(&args.trials)?;
    let enroll = load_embeddings(&args.enroll)?;
    let test = match &args.test {
        Some(p) => load_embeddings(p)?,
        None => enroll.clone(),
    };
    let center = model.as_ref().and_then(|m| m.center.as_ref());
    let scored = scoring::score_trials(&backend, &trials, &enroll, &test, center)?;
    write_file(&args.out, &scoring::format_scores(&scored))
}

fn eval(args: &EvalArgs) -> Result<()> {
    let params = DcfParams {
        p_target: args.p_target,
        c_miss: args.c_miss,
        c_fa: args.c_fa,
    };
    params.validate()?;
    let trials = scoring::load_trials(&args.trials)?;
    let text = std::fs::read_to_string(&args.scores).map_err(|e| Error::Io {
        path: args.scores.clone(),
        source: e,
    })?;
    let scores = scoring::parse_scores(&text, &args.scores.display().to_string())?;
    let scored = pipeline::attach_labels(&scores, &trials)?;
    let (labeled, unknown) = pipeline::labeled_scores(&scored);
    if unknown > 0 {
        warn!("excluded {unknown} trials without a target/nontarget label");
    }
    let m = metrics::evaluate(&labeled, &params)?;
    println!("EER={:.2} minDCF={:.4}", 100.0 * m.eer, m.min_dcf);
    if let Some(path) = &args.report {
        let mut out = String::new();
        let _ = writeln!(out, "eer={:.10e}", m.eer);
        let _ = writeln!(out, "eer_threshold={:.10e}", m.eer_threshold);
        let _ = writeln!(out, "min_dcf={:.10e}", m.min_dcf);
        let _ = writeln!(out, "dcf_threshold={:.10e}", m.dcf_threshold);
        let _ = writeln!(out, "targets={}", m.targets);
        let _ = writeln!(out, "nontargets={}", m.nontargets);
        let _ = writeln!(out, "excluded={unknown}");
        write_file(path, &out)?;
    }
    if let Some(path) = &args.det {
        let mut out = String::new();
        for p in metrics::det_curve(&labeled)? {
            let _ = writeln!(out, "{:.8e} {:.10e} {:.10e}", p.threshold, p.p_miss, p.p_fa);
        }
        write_file(path, &out)?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| Error::Usage(format!("cannot start {} threads: {e}", cli.threads)))?;
    pool.install(|| match &cli.command {
        Command::GenSynth(a) => gen_synth(a),
        Command::Train(a) => train(a),
        Command::Adapt(a) => adapt(a),
        Command::Score(a) => score(a),
        Command::Eval(a) => eval(a),
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
