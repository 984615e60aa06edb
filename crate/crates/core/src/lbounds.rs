//! Lower bounds for constrained DTW, both per-sequence and per-group.
//!
//! Two families are provided:
//!
//! * envelope-area bounds (`lb_keogh`, `lbg_k`), which compare a sequence
//!   pointwise against a max/min envelope widened by the warping band, and
//! * segment DP bounds (`lbs`, `lbg`), which run a coarse DTW over blockwise
//!   max/min summaries. Each cell of the coarse grid costs the gap between
//!   the two blocks' value ranges, weighted by the number of raw points the
//!   shorter block covers. These ignore the band and therefore bound
//!   unconstrained DTW, which in turn bounds any banded DTW.
//!
//! Group bounds replace the candidate with the pointwise hull of a whole
//! group, so one evaluation bounds the distance to every member at once.
//!
//! Every `*_raw` function returns the unrooted accumulation; the public
//! wrappers apply the root from [`DistanceParams`].

use crate::error::{check_len, Result, TwistError};
use crate::series::{DistanceParams, GlobalConstraint, TimeSeries};

/// Max/min of a query over its band window at each position.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryEnvelope {
    pub upper: Vec<f64>,
    pub lower: Vec<f64>,
}

/// Pointwise hull of a group of equal-length sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupEnvelope {
    pub upper: Vec<f64>,
    pub lower: Vec<f64>,
    pub member_count: u32,
}

/// A group envelope widened by the warping band.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintExpandedEnvelope {
    pub upper: Vec<f64>,
    pub lower: Vec<f64>,
}

/// Blockwise max/min summary at a fixed segment size.
///
/// The final block is shorter when the segment size does not divide the
/// sequence length.
#[derive(Debug, Clone, PartialEq)]
pub struct Segmented {
    segment_size: usize,
    len: usize,
    upper: Vec<f64>,
    lower: Vec<f64>,
}

/// Segment summary of a single sequence.
pub type SegmentedSequence = Segmented;
/// Segment summary of a group envelope (max of uppers, min of lowers).
pub type SegmentedGroupEnvelope = Segmented;

impl Segmented {
    fn from_bounds(upper: &[f64], lower: &[f64], segment_size: usize) -> Result<Self> {
        if segment_size < 1 {
            return Err(TwistError::Input("segment size must be at least 1".into()));
        }
        let seg_upper = upper
            .chunks(segment_size)
            .map(|c| c.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let seg_lower = lower
            .chunks(segment_size)
            .map(|c| c.iter().copied().fold(f64::INFINITY, f64::min))
            .collect();
        Ok(Self {
            segment_size,
            len: upper.len(),
            upper: seg_upper,
            lower: seg_lower,
        })
    }

    pub fn segment_size(&self) -> usize {
        self.segment_size
    }

    /// Number of segments.
    pub fn count(&self) -> usize {
        self.upper.len()
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    /// `(upper, lower)` pairs in order.
    pub fn pairs(&self) -> Vec<(f64, f64)> {
        self.upper
            .iter()
            .copied()
            .zip(self.lower.iter().copied())
            .collect()
    }

    /// Raw points covered by segment `b`.
    #[inline]
    pub fn width(&self, b: usize) -> usize {
        (self.len - b * self.segment_size).min(self.segment_size)
    }
}

impl GroupEnvelope {
    /// Hull of a single sequence.
    pub fn of(values: &[f64]) -> Self {
        Self {
            upper: values.to_vec(),
            lower: values.to_vec(),
            member_count: 1,
        }
    }

    pub fn len(&self) -> usize {
        self.upper.len()
    }

    pub fn is_empty(&self) -> bool {
        self.upper.is_empty()
    }

    /// True when `values` lies inside the envelope at every position.
    pub fn contains(&self, values: &[f64]) -> bool {
        values.len() == self.len()
            && values
                .iter()
                .zip(self.upper.iter().zip(&self.lower))
                .all(|(&v, (&u, &l))| l <= v && v <= u)
    }

    /// Folds one more sequence into the hull.
    pub fn absorb(&mut self, values: &[f64]) {
        for ((u, l), &v) in self.upper.iter_mut().zip(self.lower.iter_mut()).zip(values) {
            *u = u.max(v);
            *l = l.min(v);
        }
        self.member_count += 1;
    }
}

/// Sliding max/min of `upper`/`lower` over each position's band window.
fn window_extremes(upper: &[f64], lower: &[f64], band: &GlobalConstraint) -> (Vec<f64>, Vec<f64>) {
    let n = upper.len();
    let mut out_upper = Vec::with_capacity(n);
    let mut out_lower = Vec::with_capacity(n);
    for i in 0..n {
        let (lo, hi) = band.window(i);
        out_upper.push(
            upper[lo..=hi]
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max),
        );
        out_lower.push(lower[lo..=hi].iter().copied().fold(f64::INFINITY, f64::min));
    }
    (out_upper, out_lower)
}

pub fn build_query_envelope(q: &TimeSeries, band: &GlobalConstraint) -> Result<QueryEnvelope> {
    check_len(band.len(), q.len())?;
    let (upper, lower) = window_extremes(q.values(), q.values(), band);
    Ok(QueryEnvelope { upper, lower })
}

/// Area of `values` outside `[lower, upper]`, unrooted.
#[inline]
fn outside_area_raw(values: &[f64], upper: &[f64], lower: &[f64], params: &DistanceParams) -> f64 {
    let mut acc = 0.0;
    for ((&v, &u), &l) in values.iter().zip(upper).zip(lower) {
        if v > u {
            acc += params.cost(v, u);
        } else if v < l {
            acc += params.cost(l, v);
        }
    }
    acc
}

pub fn lb_keogh_raw(env: &QueryEnvelope, c: &[f64], params: &DistanceParams) -> f64 {
    outside_area_raw(c, &env.upper, &env.lower, params)
}

pub fn lb_keogh(env: &QueryEnvelope, c: &TimeSeries, params: &DistanceParams) -> Result<f64> {
    check_len(env.upper.len(), c.len())?;
    Ok(params.finish(lb_keogh_raw(env, c.values(), params)))
}

pub fn segment(s: &TimeSeries, segment_size: usize) -> Result<SegmentedSequence> {
    Segmented::from_bounds(s.values(), s.values(), segment_size)
}

/// Segment summary of raw values.
pub fn segment_values(values: &[f64], segment_size: usize) -> Result<SegmentedSequence> {
    Segmented::from_bounds(values, values, segment_size)
}

pub fn segment_group_envelope(
    eg: &GroupEnvelope,
    segment_size: usize,
) -> Result<SegmentedGroupEnvelope> {
    Segmented::from_bounds(&eg.upper, &eg.lower, segment_size)
}

/// Gap between two value ranges: zero when they overlap.
#[inline]
fn range_gap(
    a_upper: f64,
    a_lower: f64,
    b_upper: f64,
    b_lower: f64,
    params: &DistanceParams,
) -> f64 {
    if a_lower > b_upper {
        params.cost(a_lower, b_upper)
    } else if b_lower > a_upper {
        params.cost(b_lower, a_upper)
    } else {
        0.0
    }
}

/// Coarse DTW over two segment summaries, unrooted. Abandons with
/// `f64::INFINITY` once a whole row exceeds `abandon_above`.
pub fn segment_dp_raw(
    a: &Segmented,
    b: &Segmented,
    params: &DistanceParams,
    abandon_above: f64,
) -> f64 {
    let n = a.count();
    let m = b.count();
    let mut prev = vec![f64::INFINITY; m + 1];
    let mut curr = vec![f64::INFINITY; m + 1];
    prev[0] = 0.0;
    for i in 1..=n {
        curr[0] = f64::INFINITY;
        let (au, al, aw) = (a.upper[i - 1], a.lower[i - 1], a.width(i - 1));
        let mut row_min = f64::INFINITY;
        for j in 1..=m {
            let weight = aw.min(b.width(j - 1)) as f64;
            let gap = range_gap(au, al, b.upper[j - 1], b.lower[j - 1], params);
            let best = prev[j - 1].min(prev[j]).min(curr[j - 1]);
            let v = weight * gap + best;
            curr[j] = v;
            if v < row_min {
                row_min = v;
            }
        }
        if row_min > abandon_above {
            return f64::INFINITY;
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[m]
}

fn check_segments(a: &Segmented, b: &Segmented) -> Result<()> {
    if a.segment_size != b.segment_size {
        return Err(TwistError::SegmentMismatch {
            left: a.segment_size,
            right: b.segment_size,
        });
    }
    check_len(a.len, b.len)
}

pub fn lbs(
    q_seg: &SegmentedSequence,
    c_seg: &SegmentedSequence,
    params: &DistanceParams,
) -> Result<f64> {
    check_segments(q_seg, c_seg)?;
    Ok(params.finish(segment_dp_raw(q_seg, c_seg, params, f64::INFINITY)))
}

pub fn build_group_envelope<S: AsRef<[f64]>>(members: &[S]) -> Result<GroupEnvelope> {
    let (first, rest) = members
        .split_first()
        .ok_or_else(|| TwistError::Input("cannot build an envelope of an empty group".into()))?;
    let mut env = GroupEnvelope::of(first.as_ref());
    for m in rest {
        check_len(env.len(), m.as_ref().len())?;
        env.absorb(m.as_ref());
    }
    Ok(env)
}

/// Group bound: segment DP of the query against the segmented hull.
pub fn lbg(
    q_seg: &SegmentedSequence,
    eg_seg: &SegmentedGroupEnvelope,
    params: &DistanceParams,
) -> Result<f64> {
    check_segments(q_seg, eg_seg)?;
    Ok(params.finish(segment_dp_raw(q_seg, eg_seg, params, f64::INFINITY)))
}

pub fn expand_envelope_by_constraint(
    eg: &GroupEnvelope,
    band: &GlobalConstraint,
) -> Result<ConstraintExpandedEnvelope> {
    check_len(band.len(), eg.len())?;
    let (upper, lower) = window_extremes(&eg.upper, &eg.lower, band);
    Ok(ConstraintExpandedEnvelope { upper, lower })
}

pub fn lbg_k_raw(q: &[f64], egc: &ConstraintExpandedEnvelope, params: &DistanceParams) -> f64 {
    outside_area_raw(q, &egc.upper, &egc.lower, params)
}

pub fn lbg_k(
    q: &TimeSeries,
    egc: &ConstraintExpandedEnvelope,
    params: &DistanceParams,
) -> Result<f64> {
    check_len(egc.upper.len(), q.len())?;
    Ok(params.finish(lbg_k_raw(q.values(), egc, params)))
}

/// Default segment-size ladder: `n/2, n/8, n/32, n/128`, each at least 1,
/// strictly decreasing with duplicates removed.
pub fn default_ladder(n: usize) -> Vec<usize> {
    let mut ladder: Vec<usize> = [2, 8, 32, 128].iter().map(|d| (n / d).max(1)).collect();
    ladder.dedup();
    ladder
}
