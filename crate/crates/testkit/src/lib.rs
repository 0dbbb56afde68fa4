//! Brute-force reference implementations used as test oracles.
//!
//! Nothing here depends on `cagkit-core`; every function works on plain
//! numbers so the library under test can be checked against it.

pub mod dicom;

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;

/// Double-double number: `hi + lo` with `|lo| <= ulp(hi) / 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

#[allow(clippy::should_implement_trait)]
impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };

    pub fn from_f64(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    fn two_sum(a: f64, b: f64) -> Dd {
        let s = a + b;
        let bb = s - a;
        Dd { hi: s, lo: (a - (s - bb)) + (b - bb) }
    }

    fn quick_two_sum(a: f64, b: f64) -> Dd {
        let s = a + b;
        Dd { hi: s, lo: b - (s - a) }
    }

    pub fn add(self, o: Dd) -> Dd {
        let s = Dd::two_sum(self.hi, o.hi);
        let t = Dd::two_sum(self.lo, o.lo);
        let u = Dd::quick_two_sum(s.hi, s.lo + t.hi);
        Dd::quick_two_sum(u.hi, u.lo + t.lo)
    }

    pub fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }

    pub fn sub(self, o: Dd) -> Dd {
        self.add(o.neg())
    }

    pub fn mul(self, o: Dd) -> Dd {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p);
        Dd::quick_two_sum(p, e + (self.hi * o.lo + self.lo * o.hi))
    }

    pub fn scale(self, k: f64) -> Dd {
        self.mul(Dd::from_f64(k))
    }

    /// Nearest-ish f64 square root, one Newton correction on the double
    /// estimate.
    pub fn sqrt_f64(self) -> f64 {
        if self.hi <= 0.0 {
            return 0.0;
        }
        let s = self.hi.sqrt();
        let r = self.sub(Dd::from_f64(s).mul(Dd::from_f64(s)));
        s + (r.hi + r.lo) / (2.0 * s)
    }
}

fn squared_distance(x: &[f64], y: &[f64]) -> Dd {
    x.iter().zip(y).fold(Dd::ZERO, |acc, (&p, &q)| {
        let d = Dd::two_sum(p, -q);
        acc.add(d.mul(d))
    })
}

/// Triangle area by Heron's formula in squared-side form,
/// `16 A^2 = 4 a^2 b^2 - (a^2 + b^2 - c^2)^2`, evaluated in double-double
/// arithmetic. Plain f64 Heron loses about `ulp * side^2 / area` on needle
/// triangles; this keeps the oracle well below the tolerances it checks.
pub fn heron_area(p: &[f64], q: &[f64], r: &[f64]) -> f64 {
    let a2 = squared_distance(p, q);
    let b2 = squared_distance(q, r);
    let c2 = squared_distance(p, r);
    let m = a2.add(b2).sub(c2);
    let sixteen_a2 = a2.mul(b2).scale(4.0).sub(m.mul(m));
    0.25 * sixteen_a2.sqrt_f64()
}

/// Kahan's stable ordering of Heron's formula on f64 side lengths.
pub fn heron_area_f64(p: &[f64], q: &[f64], r: &[f64]) -> f64 {
    let dist = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let mut s = [dist(p, q), dist(q, r), dist(p, r)];
    s.sort_by(|x, y| y.total_cmp(x));
    let [x, y, z] = s;
    let prod = (x + (y + z)) * (z - (x - y)) * (z + (x - y)) * (x + (y - z));
    0.25 * prod.max(0.0).sqrt()
}

/// Gaussian vector via Box-Muller.
pub fn gaussian_vec<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    (0..d)
        .map(|_| {
            let u1: f64 = rng.random_range(f64::EPSILON..1.0);
            let u2: f64 = rng.random();
            (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
        })
        .collect()
}

pub fn unit_vec<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    loop {
        let v = gaussian_vec(rng, d);
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-3 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Random orthogonal matrix (rows) by Gram-Schmidt on Gaussian rows.
pub fn random_rotation<R: Rng>(rng: &mut R, d: usize) -> Vec<Vec<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(d);
    while rows.len() < d {
        let mut v = gaussian_vec(rng, d);
        for _ in 0..2 {
            for r in &rows {
                let p: f64 = v.iter().zip(r).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(r).for_each(|(a, b)| *a -= p * b);
            }
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            rows.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    rows
}

pub fn mat_vec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter().map(|r| r.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

/// Local extrema by scanning every index. A run of equal values counts once,
/// at its first index, when every other value within `w` of the run is
/// strictly below (max) or strictly above (min) it and at least one such
/// value exists. Series shorter than `2w + 1` have none.
/// Returns `(index, is_max)` pairs in index order.
pub fn exhaustive_extrema(series: &[f64], w: usize) -> Vec<(usize, bool)> {
    let n = series.len();
    let mut out = Vec::new();
    if n < 2 * w + 1 {
        return out;
    }
    for i in 0..n {
        if i > 0 && series[i - 1] == series[i] {
            continue;
        }
        let mut end = i;
        while end + 1 < n && series[end + 1] == series[i] {
            end += 1;
        }
        let mut others = Vec::new();
        for (j, &v) in series.iter().enumerate().take((end + w).min(n - 1) + 1).skip(i.saturating_sub(w)) {
            if !(i..=end).contains(&j) {
                others.push(v);
            }
        }
        if others.is_empty() {
            continue;
        }
        if others.iter().all(|&v| v < series[i]) {
            out.push((i, true));
        } else if others.iter().all(|&v| v > series[i]) {
            out.push((i, false));
        }
    }
    out
}

pub fn min_pairwise_gap(indices: &[usize]) -> Option<usize> {
    let mut best = None;
    for (a, &x) in indices.iter().enumerate() {
        for &y in &indices[a + 1..] {
            let g = x.abs_diff(y);
            best = Some(best.map_or(g, |b: usize| b.min(g)));
        }
    }
    best
}

/// Support-weighted F1 over classes `0..k`, counted directly from labels.
pub fn weighted_f1_bruteforce(truth: &[usize], pred: &[usize], k: usize) -> f64 {
    let n = truth.len();
    let mut total = 0.0;
    for c in 0..k {
        let tp = (0..n).filter(|&i| truth[i] == c && pred[i] == c).count() as f64;
        let fp = (0..n).filter(|&i| truth[i] != c && pred[i] == c).count() as f64;
        let fn_ = (0..n).filter(|&i| truth[i] == c && pred[i] != c).count() as f64;
        let support = tp + fn_;
        let f1 = if tp == 0.0 { 0.0 } else { 2.0 * tp / (2.0 * tp + fp + fn_) };
        total += support * f1;
    }
    total / n as f64
}

pub fn sample_sd(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    if values.len() < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Annotation event for the conflict oracle.
#[derive(Debug, Clone)]
pub struct Ann {
    pub seq: u64,
    pub video: String,
    pub frame: usize,
    pub annotator: String,
    pub label: u8,
    pub resolving: bool,
}

/// Frames in conflict, by pairwise comparison of each annotator's latest
/// label. A frame is cleared by a resolving event newer than every latest
/// plain label on it.
pub fn conflicts_bruteforce(events: &[Ann]) -> BTreeSet<(String, usize)> {
    let frames: BTreeSet<(String, usize)> = events.iter().map(|e| (e.video.clone(), e.frame)).collect();
    let mut out = BTreeSet::new();
    for (video, frame) in frames {
        let on_frame: Vec<&Ann> = events.iter().filter(|e| e.video == video && e.frame == frame).collect();
        let mut latest: BTreeMap<&str, &Ann> = BTreeMap::new();
        for e in &on_frame {
            let newer = on_frame
                .iter()
                .all(|o| o.annotator != e.annotator || o.seq <= e.seq);
            if newer {
                latest.insert(&e.annotator, e);
            }
        }
        let plain: Vec<&&Ann> = latest.values().filter(|e| !e.resolving).collect();
        let mut disagree = false;
        for a in &plain {
            for b in &plain {
                if a.label != b.label {
                    disagree = true;
                }
            }
        }
        if !disagree {
            continue;
        }
        let resolved = on_frame
            .iter()
            .any(|r| r.resolving && plain.iter().all(|p| r.seq > p.seq));
        if !resolved {
            out.insert((video, frame));
        }
    }
    out
}
