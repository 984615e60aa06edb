// Independent reference implementations used only by tests. Kept free of
// crate imports so integration tests can include this file directly.
#![allow(dead_code)]

use rand::Rng;
use rand_distr::StandardNormal;

pub fn cost(a: f64, b: f64, p: u32) -> f64 {
    let d = (a - b).abs();
    match p {
        1 => d,
        2 => d * d,
        p => d.powi(p as i32),
    }
}

/// Minimum cumulative cost over every monotone warping path from (0,0) to
/// (n-1,m-1) whose cells satisfy `admits`, by exhaustive enumeration.
pub fn brute_force_banded_dtw_raw(
    a: &[f64],
    b: &[f64],
    p: u32,
    admits: &dyn Fn(usize, usize) -> bool,
) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn walk(
        a: &[f64],
        b: &[f64],
        p: u32,
        admits: &dyn Fn(usize, usize) -> bool,
        i: usize,
        j: usize,
        acc: f64,
        best: &mut f64,
    ) {
        if !admits(i, j) {
            return;
        }
        let acc = acc + cost(a[i], b[j], p);
        if i + 1 == a.len() && j + 1 == b.len() {
            if acc < *best {
                *best = acc;
            }
            return;
        }
        if i + 1 < a.len() {
            walk(a, b, p, admits, i + 1, j, acc, best);
        }
        if j + 1 < b.len() {
            walk(a, b, p, admits, i, j + 1, acc, best);
        }
        if i + 1 < a.len() && j + 1 < b.len() {
            walk(a, b, p, admits, i + 1, j + 1, acc, best);
        }
    }
    let mut best = f64::INFINITY;
    walk(a, b, p, admits, 0, 0, 0.0, &mut best);
    best
}

pub fn brute_force_dtw_raw(a: &[f64], b: &[f64], p: u32) -> f64 {
    brute_force_banded_dtw_raw(a, b, p, &|_, _| true)
}

/// Textbook full-matrix DP, used to cross-check the rolling-row kernel.
pub fn full_matrix_dtw_raw(
    a: &[f64],
    b: &[f64],
    admits: impl Fn(usize, usize) -> bool,
    p: u32,
) -> f64 {
    let n = a.len();
    let m = b.len();
    let mut d = vec![vec![f64::INFINITY; m + 1]; n + 1];
    d[0][0] = 0.0;
    for i in 1..=n {
        for j in 1..=m {
            if !admits(i - 1, j - 1) {
                continue;
            }
            let best = d[i - 1][j - 1].min(d[i - 1][j]).min(d[i][j - 1]);
            d[i][j] = cost(a[i - 1], b[j - 1], p) + best;
        }
    }
    d[n][m]
}

/// Full-matrix DP over segment summaries `(upper, lower, width)`, following
/// the segment-pair cost directly from its case definition.
pub fn full_matrix_segment_dp(a: &[(f64, f64, usize)], b: &[(f64, f64, usize)], p: u32) -> f64 {
    let n = a.len();
    let m = b.len();
    let mut d = vec![vec![f64::INFINITY; m + 1]; n + 1];
    d[0][0] = 0.0;
    for i in 1..=n {
        for j in 1..=m {
            let (ua, la, wa) = a[i - 1];
            let (ub, lb, wb) = b[j - 1];
            let gap = if la > ub {
                cost(la, ub, p)
            } else if lb > ua {
                cost(lb, ua, p)
            } else {
                0.0
            };
            let best = d[i - 1][j - 1].min(d[i - 1][j]).min(d[i][j - 1]);
            d[i][j] = wa.min(wb) as f64 * gap + best;
        }
    }
    d[n][m]
}

/// Max/min summaries of consecutive blocks of `size` points.
pub fn blocks(s: &[f64], size: usize) -> Vec<(f64, f64, usize)> {
    s.chunks(size)
        .map(|c| {
            let hi = c.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lo = c.iter().cloned().fold(f64::INFINITY, f64::min);
            (hi, lo, c.len())
        })
        .collect()
}

pub fn random_series<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let mut x: f64 = rng.sample(StandardNormal);
    (0..n)
        .map(|_| {
            x += rng.sample::<f64, _>(StandardNormal);
            x
        })
        .collect()
}

/// Pointwise hull of a group, computed column by column.
pub fn hull(members: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = members[0].len();
    let upper = (0..n)
        .map(|i| {
            members
                .iter()
                .map(|m| m[i])
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let lower = (0..n)
        .map(|i| members.iter().map(|m| m[i]).fold(f64::INFINITY, f64::min))
        .collect();
    (upper, lower)
}

/// Relative closeness used throughout the suites.
pub fn close(a: f64, b: f64, rel: f64) -> bool {
    if a == b {
        return true;
    }
    (a - b).abs() <= rel * a.abs().max(b.abs())
}
