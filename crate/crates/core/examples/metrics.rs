//! EER, minDCF and the DET sweep on a small hand-made score list.

use regplda::metrics::{det_curve, evaluate, DcfParams};

fn main() -> regplda::Result<()> {
    let scores = [
        (2.1, true),
        (1.7, true),
        (1.2, true),
        (0.4, true),
        (-0.3, true),
        (0.9, false),
        (0.1, false),
        (-0.2, false),
        (-0.8, false),
        (-1.5, false),
        (-2.0, false),
    ];
    println!("{:>10} {:>8} {:>8}", "threshold", "P_miss", "P_fa");
    for p in det_curve(&scores)? {
        println!("{:>10.2} {:>8.3} {:>8.3}", p.threshold, p.p_miss, p.p_fa);
    }
    for p_target in [0.5, 0.1, 0.01] {
        let params = DcfParams {
            p_target,
            ..DcfParams::default()
        };
        let m = evaluate(&scores, &params)?;
        println!(
            "P_target {p_target:<4}: EER {:.2}% at {:.3}, minDCF {:.4} at {:.2}",
            100.0 * m.eer,
            m.eer_threshold,
            m.min_dcf,
            m.dcf_threshold
        );
    }
    Ok(())
}
