mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use regplda::embeddings::{
    format_embeddings, gen_synthetic, global_mean, length_normalize, parse_embeddings, SynthSpec,
    UttsPerSpeaker,
};
use regplda::pipeline::preprocess;

fn spec(m: usize, seed: u64) -> SynthSpec {
    let between = DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.0, 0.5, 2.0, 0.3, 0.0, 0.3, 0.5]);
    let within = DMatrix::from_diagonal(&DVector::from_row_slice(&[0.2, 0.1, 0.3]));
    let mut s = SynthSpec::new(between, within, m, UttsPerSpeaker::Fixed(1), seed);
    s.mean = DVector::from_row_slice(&[1.0, -2.0, 0.5]);
    s
}

#[test]
fn speaker_latent_covariance_converges() {
    // With one utterance per speaker and no session noise, each vector is its latent.
    let mut s = spec(10_000, 42);
    s.within_scale = 0.0;
    let ds = gen_synthetic(&s).unwrap();
    let mean = global_mean(&ds).unwrap();
    let mut cov = DMatrix::zeros(3, 3);
    for e in ds.embeddings() {
        let r = &e.vec - &mean;
        cov += &r * r.transpose();
    }
    cov /= (ds.len() - 1) as f64;
    assert!(rel_frobenius(&cov, &s.between_cov) < 0.05, "{cov}");
    assert!((&mean - &s.mean).amax() < 0.05);
}

#[test]
fn identical_seeds_give_identical_files() {
    let a = format_embeddings(&gen_synthetic(&spec(50, 9)).unwrap(), &[]);
    let b = format_embeddings(&gen_synthetic(&spec(50, 9)).unwrap(), &[]);
    let c = format_embeddings(&gen_synthetic(&spec(50, 10)).unwrap(), &[]);
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn preprocessing_centers_before_normalizing() {
    let ds = gen_synthetic(&spec(20, 3)).unwrap();
    let (pre, center) = preprocess(&ds, None).unwrap();
    assert_eq!(center, global_mean(&ds).unwrap());
    // Checksum of the fixed dataset after center-then-normalize.
    let sum: f64 = pre.embeddings().iter().map(|e| e.vec.sum()).sum();
    let centered_first: f64 = ds
        .embeddings()
        .iter()
        .map(|e| {
            let r = &e.vec - &center;
            r.sum() / r.norm()
        })
        .sum();
    assert_eq!(sum, centered_first);
    let normalized_first = length_normalize(&ds, &DVector::zeros(3)).unwrap();
    let other: f64 = normalized_first
        .embeddings()
        .iter()
        .map(|e| e.vec.sum())
        .sum();
    assert!((sum - other).abs() > 1e-3);
    for e in pre.embeddings() {
        assert!((e.vec.norm() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn parse_errors_name_the_line() {
    let err = parse_embeddings("a s 1 2\nb s 1\n", "f.emb")
        .unwrap_err()
        .to_string();
    assert!(err.starts_with("f.emb:2:"), "{err}");
    let err = parse_embeddings("a s 1 2\na s 3 4\n", "f.emb")
        .unwrap_err()
        .to_string();
    assert!(err.contains(":2:"), "{err}");
    assert!(parse_embeddings("# only a comment\n", "f.emb").is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn format_parse_round_trip(seed in 0u64..100_000, m in 1usize..10) {
        let ds = gen_synthetic(&spec(m, seed)).unwrap();
        let text = format_embeddings(&ds, &["header".to_string()]);
        let back = parse_embeddings(&text, "t").unwrap();
        prop_assert_eq!(format_embeddings(&back, &["header".to_string()]), text);
        for (a, b) in ds.embeddings().iter().zip(back.embeddings()) {
            prop_assert_eq!(&a.vec, &b.vec);
        }
    }

    #[test]
    fn normalized_vectors_have_unit_norm(seed in 0u64..100_000) {
        let mut r = rng(seed);
        let ds = gen_synthetic(&spec(8, seed)).unwrap();
        let c = randn_vector(&mut r, 3) * 0.1;
        for e in length_normalize(&ds, &c).unwrap().embeddings() {
            prop_assert!((e.vec.norm() - 1.0).abs() < 1e-12);
        }
    }
}
