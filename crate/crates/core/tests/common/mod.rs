//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use csdwatch::dynamics::{GrazingParams, NormalStream, Trajectory, TransferFunction};
use csdwatch::indicators::{detrend_moving_average, sliding_ac1, Ac1Config, DetrendConfig};
use csdwatch::stats::median;
use rayon::prelude::*;

pub fn normals(rng: &mut NormalStream, n: usize, mean: f64, sd: f64) -> Vec<f64> {
    (0..n).map(|_| mean + sd * rng.next_normal()).collect()
}

/// `P(A > B) + P(A = B) / 2` by counting every pair.
pub fn brute_ps(a: &[f64], b: &[f64]) -> f64 {
    let mut u = 0.0;
    for x in a {
        for y in b {
            if x > y {
                u += 1.0;
            } else if x == y {
                u += 0.5;
            }
        }
    }
    u / (a.len() * b.len()) as f64
}

fn ranks_of(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[i].partial_cmp(&v[j]).unwrap());
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        for &k in &idx[i..=j] {
            r[k] = (i + j) as f64 / 2.0 + 1.0;
        }
        i = j + 1;
    }
    r
}

/// Brunner-Munzel statistic, positive when A tends to exceed B. Written
/// from the placement definition, independently of the library.
pub fn bm_statistic(pooled: &[f64], n_a: usize) -> f64 {
    let (a, b) = pooled.split_at(n_a);
    let n_b = b.len();
    let r = ranks_of(pooled);
    let (ra, rb) = r.split_at(n_a);
    let (wa, wb) = (ranks_of(a), ranks_of(b));
    let ma = ra.iter().sum::<f64>() / n_a as f64;
    let mb = rb.iter().sum::<f64>() / n_b as f64;
    let var = |pooled: &[f64], within: &[f64], mean: f64, own: usize| {
        let c = mean - (own as f64 + 1.0) / 2.0;
        pooled
            .iter()
            .zip(within)
            .map(|(p, w)| (p - w - c).powi(2))
            .sum::<f64>()
            / (own as f64 - 1.0)
    };
    let sa = var(ra, &wa, ma, n_a);
    let sb = var(rb, &wb, mb, n_b);
    let n = (n_a + n_b) as f64;
    let denom = n * (n_a as f64 * sa + n_b as f64 * sb).sqrt();
    let num = (n_a * n_b) as f64 * (ma - mb);
    if denom == 0.0 {
        return if num > 0.0 {
            f64::INFINITY
        } else if num < 0.0 {
            f64::NEG_INFINITY
        } else {
            0.0
        };
    }
    num / denom
}

/// One-sided permutation mid-p of the studentized statistic: the share of
/// label shuffles whose statistic exceeds the observed one, plus half the
/// share that ties it. The half weight matches the continuous t reference.
pub fn permutation_p(a: &[f64], b: &[f64], n_perm: usize, seed: u64) -> f64 {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let observed = bm_statistic(&pooled, a.len());
    let chunks = 16;
    let per = n_perm / chunks;
    let hits: f64 = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = NormalStream::new(seed.wrapping_mul(31).wrapping_add(c as u64));
            let mut v = pooled.clone();
            let mut hits = 0.0;
            for _ in 0..per {
                for i in (1..v.len()).rev() {
                    let j = ((i + 1) as f64 * rng.uniform()) as usize;
                    v.swap(i, j.min(i));
                }
                let t = bm_statistic(&v, a.len());
                if (t - observed).abs() <= 1e-12 {
                    hits += 0.5;
                } else if t > observed {
                    hits += 1.0;
                }
            }
            hits
        })
        .sum();
    hits / (per * chunks) as f64
}

/// Median AC1 over all defined windows of channel `ch` pooled across a batch.
pub fn batch_median_ac1(batch: &[Trajectory], ch: usize, ma: usize, window: usize) -> f64 {
    let pooled: Vec<f64> = batch
        .par_iter()
        .flat_map_iter(|tr| {
            let r = detrend_moving_average(&tr.channel(ch).unwrap(), &DetrendConfig::trailing(ma))
                .unwrap();
            sliding_ac1(&r, &Ac1Config::new(window))
                .unwrap()
                .defined_values()
        })
        .collect();
    median(&pooled).unwrap()
}

/// `max |S(jw) - 1/2|` over `n` log-spaced frequencies in [1e-4, 1e4].
pub fn dense_peak(s: &TransferFunction, n: usize) -> f64 {
    (0..n)
        .into_par_iter()
        .map(|i| {
            let w = 10f64.powf(-4.0 + 8.0 * i as f64 / (n - 1) as f64);
            let v = s.freq_response(w);
            (v.re - 0.5).hypot(v.im)
        })
        .reduce(|| 0.0, f64::max)
}

/// Fold points of the grazing drift: Newton on (f, f') = 0 in (V, c).
pub fn grazing_fold(p: &GrazingParams, v0: f64, c0: f64) -> (f64, f64) {
    let (r, k, h) = (p.r, p.capacity, p.h);
    // f/V = r(1 - V/K) - c V / (V^2 + h^2) and its V-derivative vanish
    let g = |v: f64, c: f64| r * (1.0 - v / k) - c * v / (v * v + h * h);
    let gv = |v: f64, c: f64| -r / k - c * (h * h - v * v) / (v * v + h * h).powi(2);
    let (mut v, mut c) = (v0, c0);
    for _ in 0..100 {
        let (f1, f2) = (g(v, c), gv(v, c));
        let e = 1e-7;
        let j11 = (g(v + e, c) - g(v - e, c)) / (2.0 * e);
        let j12 = (g(v, c + e) - g(v, c - e)) / (2.0 * e);
        let j21 = (gv(v + e, c) - gv(v - e, c)) / (2.0 * e);
        let j22 = (gv(v, c + e) - gv(v, c - e)) / (2.0 * e);
        let det = j11 * j22 - j12 * j21;
        let dv = (f1 * j22 - f2 * j12) / det;
        let dc = (j11 * f2 - j21 * f1) / det;
        v -= dv;
        c -= dc;
        if dv.abs() + dc.abs() < 1e-14 {
            break;
        }
    }
    (v, c)
}
