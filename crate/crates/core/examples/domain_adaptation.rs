//! Limited-speaker adaptation: a source-domain model adapted on k target-domain
//! speakers, averaged over five random subsets.
//!
//! Usage: `cargo run --release --example domain_adaptation [lambda]`

use regplda::metrics::DcfParams;
use regplda::pipeline::{self, AdaptOptions, SynthConfig};
use regplda::plda::{PldaModel, TrainConfig};
use regplda::regularize::{RegTarget, RegularizerConfig};
use regplda::scoring::{score_trials, Backend, PldaScorer};

fn main() -> regplda::Result<()> {
    let lambda: f64 = std::env::args()
        .nth(1)
        .map(|a| {
            a.parse()
                .map_err(|_| regplda::Error::Usage(format!("bad lambda {a:?}")))
        })
        .transpose()?
        .unwrap_or(1e-3);
    let corpus = pipeline::gen_synth_corpus(&SynthConfig::default())?;
    let params = DcfParams::default();
    let eer = |m: &PldaModel| -> regplda::Result<f64> {
        let backend = Backend::Plda(PldaScorer::new(m)?);
        let scored = score_trials(
            &backend,
            &corpus.trials,
            &corpus.eval,
            &corpus.eval,
            m.center.as_ref(),
        )?;
        Ok(pipeline::evaluate_scored(&scored, &params)?.eer)
    };

    let source = pipeline::train_backend(&corpus.train, &TrainConfig::default(), None, None)?;
    println!("no adapt: EER {:.2}%", 100.0 * eer(&source.model)?);

    let backends = [
        ("PLDA", RegularizerConfig::none()),
        ("D-PLDA", RegularizerConfig::diag(RegTarget::Between)),
        ("I-PLDA", RegularizerConfig::interp(RegTarget::Between, 2.0)),
        (
            "S-PLDA",
            RegularizerConfig::sparse(RegTarget::Between, lambda),
        ),
    ];
    let sizes = [10, 20, 40, 100, 200];
    print!("{:>8}", "#spk");
    for k in sizes {
        print!("{k:>8}");
    }
    println!();
    for (name, reg) in backends {
        let cfg = TrainConfig::with_reg(reg);
        print!("{name:>8}");
        for k in sizes {
            let mut total = 0.0;
            for seed in 0..5 {
                let opts = AdaptOptions {
                    num_speakers: Some(k),
                    seed,
                    ..AdaptOptions::default()
                };
                total += eer(&pipeline::adapt_backend(&corpus.adapt, &cfg, &opts)?.model)?;
            }
            print!("{:>7.2}%", 20.0 * total);
        }
        println!();
    }
    Ok(())
}
