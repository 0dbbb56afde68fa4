use std::path::Path;

use cagkit_core::vlscore::{
    evaluate_corpus, load_embeddings, max_area_constant, parse_binary, parse_jsonl, triangle_area,
    vlscore, write_binary, BackboneConstants, BinaryMeta, EmbeddingFormat, EmbeddingTriple,
    LoadOptions, MaxArea, VlScoreError,
};
use cagkit_testkit::{gaussian_vec, heron_area, mat_vec, random_rotation, unit_vec};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const REL: f64 = 1e-9;

fn triple(i: &[f64], g: &[f64], r: &[f64]) -> EmbeddingTriple {
    EmbeddingTriple {
        case_id: "c".into(),
        model_id: "m".into(),
        backbone_id: "b".into(),
        i_e: i.to_vec(),
        g_e: g.to_vec(),
        r_e: r.to_vec(),
    }
}

fn unit_c() -> f64 {
    max_area_constant(MaxArea::UnitSphere).unwrap()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= REL * a.abs().max(b.abs()).max(1e-300)
}

#[test]
fn heron_agreement_on_random_triples() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for k in 0..10_000 {
        let d = [2, 8, 512][k % 3];
        let (i, g, r) = if k % 2 == 0 {
            (unit_vec(&mut rng, d), unit_vec(&mut rng, d), unit_vec(&mut rng, d))
        } else {
            let s: f64 = rng.random_range(0.1..10.0);
            let v = |rng: &mut ChaCha8Rng| gaussian_vec(rng, d).into_iter().map(|x| x * s).collect::<Vec<_>>();
            (v(&mut rng), v(&mut rng), v(&mut rng))
        };
        let t = triangle_area(&i, &g, &r).unwrap();
        let h = heron_area(&i, &g, &r);
        worst = worst.max((t - h).abs() / h);
        assert!(close(t, h), "case {k} d={d}: area {t} vs heron {h}");
    }
    eprintln!("worst relative deviation {worst:e}");
}

#[test]
fn orthonormal_scores_one_third() {
    let s = vlscore(&triple(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]), unit_c()).unwrap();
    assert_eq!(s.t, 3f64.sqrt() / 2.0);
    assert_eq!(s.score, 1.0 / 3.0);
}

#[test]
fn great_circle_equilateral_scores_zero() {
    let h = 3f64.sqrt() / 2.0;
    let s = vlscore(&triple(&[1.0, 0.0, 0.0], &[-0.5, h, 0.0], &[-0.5, -h, 0.0]), unit_c()).unwrap();
    assert!((s.t - unit_c()).abs() < 1e-12);
    assert_eq!(s.score, 0.0);
}

#[test]
fn generated_equal_to_ground_truth_scores_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for d in [2, 8, 512] {
        let i = unit_vec(&mut rng, d);
        let g = unit_vec(&mut rng, d);
        let s = vlscore(&triple(&i, &g, &g), unit_c()).unwrap();
        assert_eq!((s.t, s.score), (0.0, 1.0));
    }
}

#[test]
fn invariances() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for d in [2, 8, 64, 512] {
        let rot = random_rotation(&mut rng, d);
        for _ in 0..if d == 512 { 3 } else { 50 } {
            let (i, g, r) = (unit_vec(&mut rng, d), unit_vec(&mut rng, d), unit_vec(&mut rng, d));
            let t = triangle_area(&i, &g, &r).unwrap();

            let shift = gaussian_vec(&mut rng, d);
            let tr = |v: &[f64]| v.iter().zip(&shift).map(|(a, b)| a + b).collect::<Vec<_>>();
            assert!(close(triangle_area(&tr(&i), &tr(&g), &tr(&r)).unwrap(), t), "translation d={d}");

            let (ri, rg, rr) = (mat_vec(&rot, &i), mat_vec(&rot, &g), mat_vec(&rot, &r));
            assert!(close(triangle_area(&ri, &rg, &rr).unwrap(), t), "rotation d={d}");

            assert!(close(triangle_area(&i, &r, &g).unwrap(), t), "g/r swap d={d}");

            let a: f64 = rng.random_range(0.01..100.0);
            let sc = |v: &[f64]| v.iter().map(|x| a * x).collect::<Vec<_>>();
            assert!(close(triangle_area(&sc(&i), &sc(&g), &sc(&r)).unwrap(), a * a * t), "scaling d={d}");
        }
    }
}

#[test]
fn input_errors() {
    assert!(matches!(
        triangle_area(&[1.0, 0.0], &[0.0, 1.0, 0.0], &[1.0, 1.0]),
        Err(VlScoreError::DimensionMismatch(_))
    ));
    assert!(matches!(triangle_area(&[1.0], &[0.0], &[2.0]), Err(VlScoreError::DimensionTooSmall(1))));
    assert!(matches!(
        triangle_area(&[f64::NAN, 0.0], &[0.0, 1.0], &[1.0, 1.0]),
        Err(VlScoreError::NonFiniteInput)
    ));
    let t = triple(&[1.0, 0.0], &[0.0, 1.0], &[0.0, 1.0]);
    assert!(matches!(vlscore(&t, 0.0), Err(VlScoreError::NonPositiveConstant(_))));
}

#[test]
fn binary_fixture() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/embeddings/two_triples_d3.bin");
    let opts = LoadOptions { model_id: Some("m".into()), backbone_id: Some("b".into()), ..Default::default() };
    let triples = load_embeddings(&path, EmbeddingFormat::from_path(&path), &opts).unwrap();
    assert_eq!(triples.len(), 2);
    assert_eq!(triples[0].case_id, "0");
    assert_eq!(triples[1].r_e, vec![0.0, 1.0, 0.0]);
    let eval = evaluate_corpus(&triples, &BackboneConstants::default()).unwrap();
    let scores: Vec<f64> = eval.results.iter().map(|r| r.score).collect();
    assert_eq!(scores, [1.0 / 3.0, 1.0]);

    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(write_binary(&triples).unwrap(), bytes);
    let meta = BinaryMeta { model_id: "m".into(), backbone_id: "b".into() };
    for len in 0..bytes.len() {
        assert!(parse_binary(&bytes[..len], &meta, &opts).is_err());
    }
}

#[test]
fn jsonl_round_trip_through_evaluation() {
    let text = "{\"case_id\":\"a\",\"model_id\":\"m1\",\"backbone_id\":\"b1\",\"i_e\":[1,0,0],\"g_e\":[0,1,0],\"r_e\":[0,0,1]}\n\
                {\"case_id\":\"b\",\"model_id\":\"m1\",\"backbone_id\":\"b2\",\"i_e\":[1,0],\"g_e\":[0,1],\"r_e\":[0,1]}\n";
    let triples = parse_jsonl(text, &LoadOptions::default()).unwrap();
    let eval = evaluate_corpus(&triples, &BackboneConstants::default()).unwrap();
    assert_eq!(eval.backbones, ["b1", "b2"]);
    assert_eq!(eval.summaries.len(), 2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn score_matches_plain_form(
        seed in any::<u64>(),
        d in prop::sample::select(vec![2usize, 3, 8, 32]),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (i, g, r) = (unit_vec(&mut rng, d), unit_vec(&mut rng, d), unit_vec(&mut rng, d));
        let c = unit_c();
        let s = vlscore(&triple(&i, &g, &r), c).unwrap();
        prop_assert!((s.score - (1.0 - s.t / c).max(0.0)).abs() <= 1e-12);
        prop_assert!((0.0..=1.0).contains(&s.score));
        prop_assert!(s.t <= c * (1.0 + 1e-12));
    }
}
