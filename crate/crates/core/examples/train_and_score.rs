//! Train a PLDA back-end on synthetic embeddings and compare it with cosine scoring.

use regplda::metrics::DcfParams;
use regplda::pipeline::{self, SynthConfig};
use regplda::plda::TrainConfig;
use regplda::scoring::{score_trials, Backend, PldaScorer};

fn main() -> regplda::Result<()> {
    let corpus = pipeline::gen_synth_corpus(&SynthConfig {
        rotation: 0.0,
        ..SynthConfig::default()
    })?;
    let outcome = pipeline::train_backend(&corpus.train, &TrainConfig::default(), None, None)?;
    for (i, ll) in outcome.loglik_trace.iter().enumerate() {
        println!("EM iteration {i:2}: log-likelihood {ll:.3}");
    }

    let model = &outcome.model;
    let center = model.center.as_ref();
    let params = DcfParams::default();
    for (name, backend) in [
        ("plda", Backend::Plda(PldaScorer::new(model)?)),
        ("cosine", Backend::Cosine),
    ] {
        let scored = score_trials(&backend, &corpus.trials, &corpus.eval, &corpus.eval, center)?;
        let m = pipeline::evaluate_scored(&scored, &params)?;
        println!(
            "{name:>6}: EER {:.2}%  minDCF {:.4}",
            100.0 * m.eer,
            m.min_dcf
        );
    }
    Ok(())
}
