//! Band-constrained dynamic time warping.

use crate::error::{check_len, Result};
use crate::series::{DistanceParams, GlobalConstraint, TimeSeries};

/// Constrained DTW distance, rooted per `params`.
pub fn dtw(
    q: &TimeSeries,
    c: &TimeSeries,
    band: &GlobalConstraint,
    params: &DistanceParams,
) -> Result<f64> {
    check_len(q.len(), c.len())?;
    check_len(q.len(), band.len())?;
    Ok(params.finish(dtw_raw(q.values(), c.values(), band, params, f64::INFINITY)))
}

/// Unrooted DTW accumulation `D(n, n)`.
///
/// Returns `f64::INFINITY` as soon as a whole row exceeds `abandon_above`
/// (every warping path crosses every row, and accumulations never decrease
/// along a path). With an infinite threshold the result is exact.
///
/// Lengths are assumed equal and covered by `band`.
pub fn dtw_raw(
    q: &[f64],
    c: &[f64],
    band: &GlobalConstraint,
    params: &DistanceParams,
    abandon_above: f64,
) -> f64 {
    let n = q.len();
    debug_assert_eq!(n, c.len());
    debug_assert_eq!(n, band.len());
    if n == 0 {
        return 0.0;
    }

    // Column 0 is the D(i, 0) border.
    let mut prev = vec![f64::INFINITY; n + 1];
    let mut curr = vec![f64::INFINITY; n + 1];
    prev[0] = 0.0;
    // Span of columns written into each buffer, so stale values can be cleared
    // without refilling the whole row.
    let mut prev_span = (1, 0);
    let mut curr_span = (1, 0);
    let max_r = band.max_radius();

    for i in 1..=n {
        if curr_span.0 <= curr_span.1 {
            curr[curr_span.0..=curr_span.1].fill(f64::INFINITY);
        }
        curr[0] = f64::INFINITY;

        let qi = q[i - 1];
        let lo = i.saturating_sub(max_r).max(1);
        let hi = (i + band.radius(i - 1)).min(n);
        let mut row_min = f64::INFINITY;
        for j in lo..=hi {
            if !band.admits(i - 1, j - 1) {
                continue;
            }
            let best = prev[j - 1].min(prev[j]).min(curr[j - 1]);
            let v = params.cost(qi, c[j - 1]) + best;
            curr[j] = v;
            if v < row_min {
                row_min = v;
            }
        }
        curr_span = (lo, hi);

        if row_min > abandon_above {
            return f64::INFINITY;
        }
        std::mem::swap(&mut prev, &mut curr);
        std::mem::swap(&mut prev_span, &mut curr_span);
    }
    prev[n]
}

/// Pointwise L_p accumulation (no warping), unrooted.
pub fn lp_raw(a: &[f64], b: &[f64], params: &DistanceParams) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| params.cost(x, y)).sum()
}
