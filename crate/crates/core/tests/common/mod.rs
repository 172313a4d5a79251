//! Reference implementations used as oracles, written independently of the
//! library code: ranks by counting, chi-square from mean-rank deviations,
//! brute-force sign and permutation enumeration, two-pass moments.
#![allow(dead_code)]

use drillguide::geometry::{Pose, UnitQuat, Vec3};
use drillguide::rng::{rng_from_seed, SimRng};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> SimRng {
    rng_from_seed(seed)
}

pub fn random_pose(rng: &mut SimRng) -> Pose {
    let p =
        Vec3::new(rng.random_range(-100.0..100.0), rng.random_range(-100.0..100.0), rng.random_range(-100.0..100.0));
    Pose::new(p, UnitQuat::sample_uniform(rng))
}

pub fn angle_deg(a: Vec3, b: Vec3) -> f64 {
    a.cross(b).norm().atan2(a.dot(b)).to_degrees()
}

pub fn normals(rng: &mut SimRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Rank of each element: 1 + (# smaller) + (# other equal) / 2.
pub fn count_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .enumerate()
        .map(|(i, x)| {
            let smaller = v.iter().filter(|y| *y < x).count() as f64;
            let equal = v.iter().enumerate().filter(|(j, y)| *j != i && *y == x).count() as f64;
            1.0 + smaller + equal / 2.0
        })
        .collect()
}

fn tie_sum(v: &[f64]) -> f64 {
    let mut seen: Vec<f64> = Vec::new();
    let mut t = 0.0;
    for x in v {
        if seen.contains(x) {
            continue;
        }
        seen.push(*x);
        let c = v.iter().filter(|y| *y == x).count() as f64;
        t += c * c * c - c;
    }
    t
}

/// Tie-corrected Friedman statistic in its mean-rank deviation form.
pub fn friedman_chi2(rows: &[Vec<f64>]) -> f64 {
    let n = rows.len() as f64;
    let k = rows[0].len();
    let kf = k as f64;
    let ranks: Vec<Vec<f64>> = rows.iter().map(|r| count_ranks(r)).collect();
    let grand = (kf + 1.0) / 2.0;
    let dev: f64 = (0..k)
        .map(|j| {
            let mean = ranks.iter().map(|r| r[j]).sum::<f64>() / n;
            (mean - grand).powi(2)
        })
        .sum();
    let raw = 12.0 * n / (kf * (kf + 1.0)) * dev;
    let ties: f64 = rows.iter().map(|r| tie_sum(r)).sum();
    let c = 1.0 - ties / (n * (kf * kf * kf - kf));
    if c <= 0.0 {
        0.0
    } else {
        raw / c
    }
}

fn rank_sum_sq(ranks: &[Vec<f64>]) -> f64 {
    let k = ranks[0].len();
    (0..k).map(|j| ranks.iter().map(|r| r[j]).sum::<f64>().powi(2)).sum()
}

/// Monte-Carlo p-value of the Friedman statistic under independent uniform
/// shuffles of each subject's ranks.
pub fn friedman_permutation_p(rows: &[Vec<f64>], perms: usize, rng: &mut SimRng) -> f64 {
    let ranks: Vec<Vec<f64>> = rows.iter().map(|r| count_ranks(r)).collect();
    let observed = rank_sum_sq(&ranks);
    let mut work = ranks.clone();
    let mut hits = 0usize;
    for _ in 0..perms {
        for row in work.iter_mut() {
            row.shuffle(rng);
        }
        if rank_sum_sq(&work) >= observed - 1e-9 {
            hits += 1;
        }
    }
    hits as f64 / perms as f64
}

fn all_permutations(v: &[f64]) -> Vec<Vec<f64>> {
    if v.len() <= 1 {
        return vec![v.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..v.len() {
        let mut rest = v.to_vec();
        let head = rest.remove(i);
        for mut tail in all_permutations(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

/// Exact Friedman p-value by enumerating all `(k!)^n` rank arrangements.
pub fn friedman_enumeration_p(rows: &[Vec<f64>]) -> f64 {
    let ranks: Vec<Vec<f64>> = rows.iter().map(|r| count_ranks(r)).collect();
    let observed = rank_sum_sq(&ranks);
    let per_row: Vec<Vec<Vec<f64>>> = ranks.iter().map(|r| all_permutations(r)).collect();
    let total: usize = per_row.iter().map(|p| p.len()).product();
    let mut idx = vec![0usize; rows.len()];
    let mut hits = 0usize;
    let mut current: Vec<Vec<f64>> = per_row.iter().map(|p| p[0].clone()).collect();
    for _ in 0..total {
        if rank_sum_sq(&current) >= observed - 1e-9 {
            hits += 1;
        }
        for i in 0..idx.len() {
            idx[i] += 1;
            if idx[i] < per_row[i].len() {
                current[i] = per_row[i][idx[i]].clone();
                break;
            }
            idx[i] = 0;
            current[i] = per_row[i][0].clone();
        }
    }
    hits as f64 / total as f64
}

/// `(W+, two-sided exact p)` by enumerating all sign assignments of the
/// non-zero differences.
pub fn wilcoxon_enumeration(a: &[f64], b: &[f64]) -> (f64, f64, f64) {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    let abs: Vec<f64> = d.iter().map(|x| x.abs()).collect();
    let ranks = count_ranks(&abs);
    let w_plus: f64 = ranks.iter().zip(&d).filter(|(_, d)| **d > 0.0).map(|(r, _)| *r).sum();
    let n = d.len();
    let total = 1u64 << n;
    let (mut le, mut ge) = (0u64, 0u64);
    for mask in 0..total {
        let mut w = 0.0;
        for (i, r) in ranks.iter().enumerate() {
            if mask >> i & 1 == 1 {
                w += r;
            }
        }
        if w <= w_plus + 1e-9 {
            le += 1;
        }
        if w >= w_plus - 1e-9 {
            ge += 1;
        }
    }
    let p_le = le as f64 / total as f64;
    let p_ge = ge as f64 / total as f64;
    (w_plus, (2.0 * p_le.min(p_ge)).min(1.0), p_le)
}

pub fn pearson_two_pass(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}

/// Two-sided p-value of `r` for `n` points by simulating independent
/// Gaussian samples.
pub fn pearson_null_p(r: f64, n: usize, sims: usize, rng: &mut SimRng) -> f64 {
    let mut hits = 0usize;
    for _ in 0..sims {
        let x = normals(rng, n);
        let y = normals(rng, n);
        if pearson_two_pass(&x, &y).abs() >= r.abs() {
            hits += 1;
        }
    }
    hits as f64 / sims as f64
}

/// |a - b| within `sigmas` binomial standard errors of `p` at `n` draws.
pub fn within_se(estimate: f64, p: f64, n: usize, sigmas: f64) -> bool {
    let se = (p * (1.0 - p) / n as f64).sqrt();
    (estimate - p).abs() <= sigmas * se + 1e-12
}

/// Golden files are rewritten instead of compared when `DRILLGUIDE_BLESS`
/// is set.
pub fn bless() -> bool {
    std::env::var_os("DRILLGUIDE_BLESS").is_some()
}

pub fn data_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}
