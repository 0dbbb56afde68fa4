use cagkit_core::ingest::FrameStats;
use cagkit_core::sampler::{
    candidates_from_stats, find_extrema, ExtremumKind, SamplerConfig, Series,
};
use cagkit_testkit::{exhaustive_extrema, min_pairwise_gap};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn as_pairs(series: &[f64], w: usize) -> Vec<(usize, bool)> {
    find_extrema(series, w, Series::Mean)
        .unwrap()
        .into_iter()
        .map(|p| (p.index, p.kind == ExtremumKind::Max))
        .collect()
}

fn stats(means: &[f64], variances: &[f64]) -> Vec<FrameStats> {
    means
        .iter()
        .zip(variances)
        .enumerate()
        .map(|(index, (&mean, &variance))| FrameStats { index, mean, variance })
        .collect()
}

#[test]
fn matches_exhaustive_scan_on_random_series() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..1000 {
        let n = rng.random_range(0..=1000);
        let w = rng.random_range(1..=4);
        // Small integer alphabets force plateaus; wide floats do not.
        let series: Vec<f64> = if case % 2 == 0 {
            (0..n).map(|_| rng.random_range(0..4) as f64).collect()
        } else {
            (0..n).map(|_| rng.random_range(-1e3..1e3)).collect()
        };
        assert_eq!(as_pairs(&series, w), exhaustive_extrema(&series, w), "case {case}, n={n}, w={w}");
    }
}

#[test]
fn sinusoid_extrema() {
    let series: Vec<f64> = (0..60).map(|t| (std::f64::consts::TAU * t as f64 / 20.0).sin()).collect();
    let found = as_pairs(&series, 2);
    assert_eq!(found, exhaustive_extrema(&series, 2));
    let interior = |max: bool| -> Vec<usize> {
        found.iter().filter(|(i, m)| *m == max && *i > 0 && *i < 59).map(|(i, _)| *i).collect()
    };
    assert_eq!(interior(true), [5, 25, 45]);
    assert_eq!(interior(false), [15, 35, 55]);
    // Endpoints qualify through the truncated window.
    assert!(found.contains(&(0, false)));
    assert!(found.contains(&(59, true)));
    assert_eq!(found.len(), 8);
}

#[test]
fn tiny_example_includes_endpoints() {
    assert_eq!(
        as_pairs(&[0.0, 1.0, 0.0, 2.0, 0.0], 1),
        [(0, false), (1, true), (2, false), (3, true), (4, false)]
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn candidate_gap_holds(
        means in prop::collection::vec(0u16..50, 0..400),
        variances in prop::collection::vec(0u16..50, 0..400),
        w in 1usize..4,
        gap in 0usize..12,
    ) {
        let n = means.len().min(variances.len());
        let m: Vec<f64> = means[..n].iter().map(|&v| v as f64).collect();
        let v: Vec<f64> = variances[..n].iter().map(|&v| v as f64).collect();
        let config = SamplerConfig { window_radius: w, min_gap: gap };
        let set = candidates_from_stats("e", "v", &stats(&m, &v), &config).unwrap();
        if let Some(g) = min_pairwise_gap(&set.selected) {
            prop_assert!(g >= gap.max(1));
        }
        let extrema: Vec<usize> = exhaustive_extrema(&m, w)
            .into_iter()
            .chain(exhaustive_extrema(&v, w))
            .map(|(i, _)| i)
            .collect();
        for i in &set.selected {
            prop_assert!(extrema.contains(i));
            prop_assert!(set.provenance.contains_key(i));
        }
        prop_assert!(set.selected.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn affine_invariance(
        raw in prop::collection::vec(-500i32..500, 0..300),
        a in prop::sample::select(vec![-7i32, -3, -1, 1, 2, 5, 64]),
        b in -1000i32..1000,
        w in 1usize..4,
    ) {
        // Integer-valued series keep a*x + b exact in f64.
        let x: Vec<f64> = raw.iter().map(|&v| v as f64).collect();
        let y: Vec<f64> = x.iter().map(|&v| a as f64 * v + b as f64).collect();
        let base = as_pairs(&x, w);
        let expected: Vec<(usize, bool)> = base.iter().map(|&(i, m)| (i, if a > 0 { m } else { !m })).collect();
        prop_assert_eq!(as_pairs(&y, w), expected);

        let px = find_extrema(&x, w, Series::Mean).unwrap();
        let py = find_extrema(&y, w, Series::Mean).unwrap();
        for (p, q) in px.iter().zip(&py) {
            prop_assert_eq!(q.prominence, p.prominence * a.abs() as f64);
        }

        // Candidate selection only depends on order structure, so scaling
        // both series by a positive factor keeps it.
        if a > 0 {
            let config = SamplerConfig { window_radius: w, min_gap: 5 };
            let s1 = candidates_from_stats("e", "v", &stats(&x, &x), &config).unwrap();
            let s2 = candidates_from_stats("e", "v", &stats(&y, &y), &config).unwrap();
            prop_assert_eq!(s1.selected, s2.selected);
        }
    }
}
