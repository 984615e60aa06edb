//! Exact k-nearest-neighbour and range search.
//!
//! Every flow ranks candidates by unrooted DTW and breaks distance ties by
//! ascending sequence id, so all of them return the same hits as a
//! brute-force scan.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::{self, Write};

use crate::dtw::dtw_raw;
use crate::error::{check_len, Result, TwistError};
use crate::lbounds::{
    build_query_envelope, expand_envelope_by_constraint, lb_keogh_raw, lbg_k_raw, segment_dp_raw,
    segment_group_envelope, segment_values, QueryEnvelope, Segmented,
};
use crate::series::{DistanceParams, GlobalConstraint, SequenceId, TimeSeries};
use crate::store::{
    load_esf, page_access_count, read_dsf_sequential, AccessMode, AccessStats, PageSource,
};

/// Relative slack applied before pruning on a bound, so that a bound equal
/// to the threshold up to rounding never discards a tie.
const PRUNE_SLACK: f64 = 1e-9;

#[inline]
fn exceeds(bound: f64, threshold: f64) -> bool {
    bound > threshold + threshold.abs() * PRUNE_SLACK
}

#[inline]
fn abandon_level(threshold: f64) -> f64 {
    threshold + threshold.abs() * PRUNE_SLACK
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub sequence_id: SequenceId,
    /// Rooted per the index's distance parameters.
    pub distance: f64,
}

/// Lower-bound evaluations by bound type.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LbCounts {
    pub lbg: u64,
    pub lbg_k: u64,
    pub lbs: u64,
    pub lb_keogh: u64,
}

impl LbCounts {
    pub fn total(&self) -> u64 {
        self.lbg + self.lbg_k + self.lbs + self.lb_keogh
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryResult {
    /// Ascending by distance, then by id.
    pub hits: Vec<Hit>,
    pub stats: AccessStats,
    pub dtw_evaluations: u64,
    pub lb_evaluations: LbCounts,
    pub mode: AccessMode,
}

impl QueryResult {
    fn empty(mode: AccessMode) -> Self {
        Self {
            hits: Vec::new(),
            stats: AccessStats::default(),
            dtw_evaluations: 0,
            lb_evaluations: LbCounts::default(),
            mode,
        }
    }

    /// Modelled page accesses at the given sequential speed-up factor.
    pub fn eta(&self, speedup_factor: f64) -> f64 {
        page_access_count(&self.stats, speedup_factor, self.mode)
    }
}

#[derive(Debug, Clone, Copy)]
struct Entry {
    raw: f64,
    id: SequenceId,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.raw.total_cmp(&other.raw).then(self.id.cmp(&other.id))
    }
}

/// The k best `(distance, id)` pairs seen so far, on unrooted distances.
#[derive(Debug, Clone)]
pub struct BestSoFar {
    capacity: usize,
    heap: BinaryHeap<Entry>,
}

impl BestSoFar {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            heap: BinaryHeap::with_capacity(capacity.min(1 << 16) + 1),
        }
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.heap.len() >= self.capacity
    }

    /// k-th best distance held, `+inf` until k results are held.
    pub fn threshold(&self) -> f64 {
        if self.is_full() {
            self.heap.peek().map_or(f64::INFINITY, |e| e.raw)
        } else {
            f64::INFINITY
        }
    }

    /// Keeps `(raw, id)` if it ranks among the k best. Returns whether it did.
    pub fn offer(&mut self, raw: f64, id: SequenceId) -> bool {
        let entry = Entry { raw, id };
        if !self.is_full() {
            self.heap.push(entry);
            return true;
        }
        match self.heap.peek() {
            Some(top) if entry < *top => {
                self.heap.pop();
                self.heap.push(entry);
                true
            }
            _ => false,
        }
    }

    /// `(id, raw)` pairs, best first.
    pub fn into_sorted(self) -> Vec<(SequenceId, f64)> {
        self.heap
            .into_sorted_vec()
            .into_iter()
            .map(|e| (e.id, e.raw))
            .collect()
    }
}

fn check_query<S: PageSource + ?Sized>(source: &S, q: &TimeSeries, k: usize) -> Result<()> {
    check_len(source.config().n, q.len())?;
    if k < 1 {
        return Err(TwistError::Input("k must be at least 1".into()));
    }
    Ok(())
}

/// Per-candidate filter run before DTW inside a page scan.
enum Filter<'a> {
    None,
    Keogh(&'a QueryEnvelope),
    Segments { query: &'a Segmented, size: usize },
}

struct Scan<'a> {
    q: &'a [f64],
    band: &'a GlobalConstraint,
    params: &'a DistanceParams,
    filter: Filter<'a>,
}

impl Scan<'_> {
    /// Offers every candidate not ruled out by the filter to `best`.
    fn run(&self, candidates: &[TimeSeries], best: &mut BestSoFar, result: &mut QueryResult) {
        for c in candidates {
            let threshold = best.threshold();
            if threshold.is_finite() {
                let bound = match &self.filter {
                    Filter::None => 0.0,
                    Filter::Keogh(env) => {
                        result.lb_evaluations.lb_keogh += 1;
                        lb_keogh_raw(env, c.values(), self.params)
                    }
                    Filter::Segments { query, size } => {
                        result.lb_evaluations.lbs += 1;
                        let seg =
                            segment_values(c.values(), *size).expect("ladder sizes are validated");
                        segment_dp_raw(query, &seg, self.params, abandon_level(threshold))
                    }
                };
                if exceeds(bound, threshold) {
                    continue;
                }
            }
            result.dtw_evaluations += 1;
            let d = dtw_raw(
                self.q,
                c.values(),
                self.band,
                self.params,
                abandon_level(threshold),
            );
            if d.is_finite() {
                best.offer(d, c.id());
            }
        }
    }
}

fn finish_hits(best: BestSoFar, params: &DistanceParams) -> Vec<Hit> {
    best.into_sorted()
        .into_iter()
        .map(|(sequence_id, raw)| Hit {
            sequence_id,
            distance: params.finish(raw),
        })
        .collect()
}

fn sort_by_bound(bounds: &mut [(f64, u32)]) {
    bounds.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
}

/// Top-k with the multiresolution group bound.
///
/// A first envelope pass scores every page at the coarsest segment size and
/// fixes the visiting order. Each page is then refined level by level and
/// skipped as soon as one level exceeds the current k-th distance; members
/// of surviving pages are filtered by the finest-level segment bound before
/// DTW.
pub fn topk_lbg<S: PageSource + ?Sized>(
    source: &S,
    q: &TimeSeries,
    k: usize,
) -> Result<QueryResult> {
    check_query(source, q, k)?;
    let config = source.config();
    let params = &config.params;
    let mut result = QueryResult::empty(AccessMode::Lbg);
    let records = load_esf(source, &mut result.stats);

    let q_segs: Vec<Segmented> = config
        .ladder
        .iter()
        .map(|&t| segment_values(q.values(), t))
        .collect::<Result<_>>()?;
    let (coarse, finer) = q_segs.split_first().expect("ladder is non-empty");

    let mut order = Vec::with_capacity(records.len());
    for r in records {
        let eg = segment_group_envelope(&r.envelope, coarse.segment_size())?;
        order.push((
            segment_dp_raw(coarse, &eg, params, f64::INFINITY),
            r.page_id,
        ));
        result.lb_evaluations.lbg += 1;
    }
    sort_by_bound(&mut order);

    let finest = q_segs.last().expect("ladder is non-empty");
    let scan = Scan {
        q: q.values(),
        band: &config.constraint,
        params,
        filter: Filter::Segments {
            query: finest,
            size: finest.segment_size(),
        },
    };
    let mut best = BestSoFar::new(k);
    let by_id = |page_id| {
        let pos = records.partition_point(|r| r.page_id < page_id);
        &records[pos]
    };

    'pages: for (coarse_bound, page_id) in order {
        let threshold = best.threshold();
        if exceeds(coarse_bound, threshold) {
            break;
        }
        let envelope = &by_id(page_id).envelope;
        for q_seg in finer {
            let eg = segment_group_envelope(envelope, q_seg.segment_size())?;
            result.lb_evaluations.lbg += 1;
            if exceeds(
                segment_dp_raw(q_seg, &eg, params, abandon_level(threshold)),
                threshold,
            ) {
                continue 'pages;
            }
        }
        let page = read_dsf_sequential(source, page_id, &mut result.stats)?;
        scan.run(&page, &mut best, &mut result);
    }
    result.hits = finish_hits(best, params);
    Ok(result)
}

/// Top-k with the band-expanded group envelope bound: one envelope pass,
/// pages visited in ascending bound order until the queue is full and the
/// next bound exceeds the k-th distance.
pub fn topk_lbgk<S: PageSource + ?Sized>(
    source: &S,
    q: &TimeSeries,
    k: usize,
) -> Result<QueryResult> {
    check_query(source, q, k)?;
    let mut best = BestSoFar::new(k);
    let mut result = lbgk_flow(source, q, &mut best, None)?;
    result.hits = finish_hits(best, &source.config().params);
    Ok(result)
}

/// Band-expanded envelope flow shared by top-k and range search. With
/// `fixed_threshold` set, pruning uses it instead of the queue's threshold.
fn lbgk_flow<S: PageSource + ?Sized>(
    source: &S,
    q: &TimeSeries,
    best: &mut BestSoFar,
    fixed_threshold: Option<f64>,
) -> Result<QueryResult> {
    let config = source.config();
    let params = &config.params;
    let mut result = QueryResult::empty(AccessMode::LbgK);
    let records = load_esf(source, &mut result.stats);

    let mut order = Vec::with_capacity(records.len());
    for r in records {
        let egc = expand_envelope_by_constraint(&r.envelope, &config.constraint)?;
        order.push((lbg_k_raw(q.values(), &egc, params), r.page_id));
        result.lb_evaluations.lbg_k += 1;
    }
    sort_by_bound(&mut order);

    let q_env = build_query_envelope(q, &config.constraint)?;
    let scan = Scan {
        q: q.values(),
        band: &config.constraint,
        params,
        filter: Filter::Keogh(&q_env),
    };
    for (bound, page_id) in order {
        match fixed_threshold {
            Some(eps) if exceeds(bound, eps) => break,
            None if best.is_full() && exceeds(bound, best.threshold()) => break,
            _ => {}
        }
        let page = read_dsf_sequential(source, page_id, &mut result.stats)?;
        match fixed_threshold {
            None => scan.run(&page, best, &mut result),
            Some(eps) => range_scan(&scan, &page, eps, best, &mut result),
        }
    }
    Ok(result)
}

fn range_scan(
    scan: &Scan<'_>,
    candidates: &[TimeSeries],
    eps_raw: f64,
    best: &mut BestSoFar,
    result: &mut QueryResult,
) {
    for c in candidates {
        if let Filter::Keogh(env) = scan.filter {
            result.lb_evaluations.lb_keogh += 1;
            if exceeds(lb_keogh_raw(env, c.values(), scan.params), eps_raw) {
                continue;
            }
        }
        result.dtw_evaluations += 1;
        let d = dtw_raw(
            scan.q,
            c.values(),
            scan.band,
            scan.params,
            abandon_level(eps_raw),
        );
        if d.is_finite() {
            best.offer(d, c.id());
        }
    }
}

/// Every sequence within `epsilon` (rooted) of `q`.
pub fn range_query<S: PageSource + ?Sized>(
    source: &S,
    q: &TimeSeries,
    epsilon: f64,
) -> Result<QueryResult> {
    check_len(source.config().n, q.len())?;
    if epsilon.is_nan() || epsilon < 0.0 {
        return Err(TwistError::Input(format!(
            "epsilon must be non-negative, got {epsilon}"
        )));
    }
    let params = source.config().params;
    let mut best = BestSoFar::new(usize::MAX);
    let mut result = lbgk_flow(source, q, &mut best, Some(params.unroot(epsilon)))?;
    // Membership is decided on the reported distance so it matches a filter
    // over rooted DTW values exactly.
    result.hits = finish_hits(best, &params)
        .into_iter()
        .filter(|h| h.distance <= epsilon)
        .collect();
    Ok(result)
}

/// Sequential scan over a flat dataset stored as one file: one random
/// access, every sequence read. With `filter` off this is the brute-force
/// oracle.
pub fn scan_dataset(
    dataset: &[TimeSeries],
    q: &TimeSeries,
    k: usize,
    band: &GlobalConstraint,
    params: &DistanceParams,
    filter: bool,
) -> Result<QueryResult> {
    check_len(band.len(), q.len())?;
    if k < 1 {
        return Err(TwistError::Input("k must be at least 1".into()));
    }
    if let Some(bad) = dataset.iter().find(|c| c.len() != q.len()) {
        return Err(TwistError::Input(format!(
            "sequence {} has length {} but the query has length {}",
            bad.id(),
            bad.len(),
            q.len()
        )));
    }
    let mut result = QueryResult::empty(AccessMode::Scan);
    let q_env = build_query_envelope(q, band)?;
    let scan = Scan {
        q: q.values(),
        band,
        params,
        filter: if filter {
            Filter::Keogh(&q_env)
        } else {
            Filter::None
        },
    };
    let mut best = BestSoFar::new(k);
    result.stats.dsf_random_accesses = 1;
    result.stats.candidate_sequences_read = dataset.len() as u64;
    scan.run(dataset, &mut best, &mut result);
    result.hits = finish_hits(best, params);
    Ok(result)
}

/// Sequential scan over every page of an index, ignoring its envelopes.
pub fn scan_index<S: PageSource + ?Sized>(
    source: &S,
    q: &TimeSeries,
    k: usize,
    filter: bool,
) -> Result<QueryResult> {
    check_query(source, q, k)?;
    let config = source.config();
    let mut result = QueryResult::empty(AccessMode::Scan);
    let q_env = build_query_envelope(q, &config.constraint)?;
    let scan = Scan {
        q: q.values(),
        band: &config.constraint,
        params: &config.params,
        filter: if filter {
            Filter::Keogh(&q_env)
        } else {
            Filter::None
        },
    };
    let mut best = BestSoFar::new(k);
    for r in source.esf() {
        let page = read_dsf_sequential(source, r.page_id, &mut result.stats)?;
        scan.run(&page, &mut best, &mut result);
    }
    result.hits = finish_hits(best, &config.params);
    Ok(result)
}

pub const CSV_HEADER: &str =
    "query_id,rank,sequence_id,distance,dtw_evals,lb_evals,beta,delta,eta_sf5,eta_sf10";

/// One CSV line per hit, ranks starting at 1.
pub fn write_csv<W: Write>(out: &mut W, query_id: u64, result: &QueryResult) -> io::Result<()> {
    for (rank, hit) in result.hits.iter().enumerate() {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            query_id,
            rank + 1,
            hit.sequence_id,
            hit.distance,
            result.dtw_evaluations,
            result.lb_evaluations.total(),
            result.stats.candidate_sequences_read,
            result.stats.dsf_random_accesses,
            result.eta(5.0),
            result.eta(10.0),
        )?;
    }
    Ok(())
}
