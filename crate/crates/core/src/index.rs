//! Index maintenance: cost-based placement of new sequences into pages,
//! 2-means page splitting, envelope upkeep and deletion.

use std::borrow::Cow;
use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use crate::error::{check_len, Result, TwistError};
use crate::lbounds::{build_group_envelope, GroupEnvelope};
use crate::series::{DistanceParams, SequenceId, TimeSeries};
use crate::store::{
    self, DeletionPolicy, DsfPage, EsfRecord, IndexConfig, Manifest, PageId, PageSource, DSF_MAGIC,
};

const MAX_SPLIT_ITERATIONS: usize = 50;

/// Cost of adding `c` to a group, unrooted.
///
/// A point above the upper bound is charged its distance to the lower bound
/// and a point below the lower bound its distance to the upper bound, i.e.
/// the full width the envelope would span at that position.
pub fn insertion_cost_raw(eg: &GroupEnvelope, c: &[f64], params: &DistanceParams) -> f64 {
    let mut acc = 0.0;
    for ((&v, &u), &l) in c.iter().zip(&eg.upper).zip(&eg.lower) {
        if v > u {
            acc += params.cost(v, l);
        } else if v < l {
            acc += params.cost(u, v);
        }
    }
    acc
}

pub fn insertion_cost(eg: &GroupEnvelope, c: &TimeSeries, params: &DistanceParams) -> Result<f64> {
    check_len(eg.len(), c.len())?;
    Ok(insertion_cost_raw(eg, c.values(), params))
}

/// Hull of a page's members.
pub fn create_envelope(page: &DsfPage) -> Result<GroupEnvelope> {
    build_group_envelope(&page.sequences)
}

/// Widens `eg` to cover `c` and counts it as a member.
pub fn update_envelope(eg: &GroupEnvelope, c: &TimeSeries) -> Result<GroupEnvelope> {
    check_len(eg.len(), c.len())?;
    let mut out = eg.clone();
    out.absorb(c.values());
    Ok(out)
}

fn squared_euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn centroid(points: &[&[f64]], assign: &[bool], side: bool) -> Vec<f64> {
    let n = points[0].len();
    let mut sum = vec![0.0; n];
    let mut count = 0usize;
    for (p, &a) in points.iter().zip(assign) {
        if a == side {
            for (s, v) in sum.iter_mut().zip(p.iter()) {
                *s += v;
            }
            count += 1;
        }
    }
    sum.iter_mut().for_each(|s| *s /= count as f64);
    sum
}

/// Deterministic 2-means over raw values. Returns `true` for members of the
/// first cluster, which is seeded from the lower-indexed end of the
/// farthest pair. Both clusters are non-empty when `points.len() >= 2`.
///
/// Members that all coincide are split into two balanced halves in input
/// order.
pub fn two_means(points: &[&[f64]]) -> Vec<bool> {
    let m = points.len();
    assert!(m >= 2, "cannot split fewer than two points");

    let mut seeds = (0, 0);
    let mut widest = 0.0;
    for i in 0..m {
        for j in i + 1..m {
            let d = squared_euclidean(points[i], points[j]);
            if d > widest {
                widest = d;
                seeds = (i, j);
            }
        }
    }
    if widest == 0.0 {
        return (0..m).map(|i| i < m.div_ceil(2)).collect();
    }

    let mut centre_a = points[seeds.0].to_vec();
    let mut centre_b = points[seeds.1].to_vec();
    let mut assign = vec![false; m];
    for iteration in 0..MAX_SPLIT_ITERATIONS {
        let next: Vec<bool> = points
            .iter()
            .map(|p| squared_euclidean(p, &centre_a) <= squared_euclidean(p, &centre_b))
            .collect();
        let mut next = next;
        repair_empty(points, &mut next, &centre_a, &centre_b);
        if iteration > 0 && next == assign {
            break;
        }
        assign = next;
        centre_a = centroid(points, &assign, true);
        centre_b = centroid(points, &assign, false);
    }
    assign
}

/// Moves the point farthest from the populated cluster's centre into an
/// empty cluster.
fn repair_empty(points: &[&[f64]], assign: &mut [bool], centre_a: &[f64], centre_b: &[f64]) {
    for side in [true, false] {
        if assign.iter().all(|&a| a != side) {
            let other = if side { centre_b } else { centre_a };
            let mut far = 0;
            let mut far_d = f64::NEG_INFINITY;
            for (i, p) in points.iter().enumerate() {
                let d = squared_euclidean(p, other);
                if d > far_d {
                    far_d = d;
                    far = i;
                }
            }
            assign[far] = side;
        }
    }
}

/// Splits an overfull page into two non-empty groups, preserving member
/// order within each group.
pub fn split_dsf(members: Vec<TimeSeries>) -> Result<(Vec<TimeSeries>, Vec<TimeSeries>)> {
    if members.len() < 2 {
        return Err(TwistError::Input(
            "cannot split a page with fewer than two members".into(),
        ));
    }
    let assign = {
        let points: Vec<&[f64]> = members.iter().map(TimeSeries::values).collect();
        two_means(&points)
    };
    let (a, b): (Vec<_>, Vec<_>) = members.into_iter().zip(assign).partition(|(_, side)| *side);
    Ok((
        a.into_iter().map(|(s, _)| s).collect(),
        b.into_iter().map(|(s, _)| s).collect(),
    ))
}

/// An in-memory index: envelope records in page-id order plus the pages
/// they point to.
#[derive(Debug, Clone, PartialEq)]
pub struct TwistIndex {
    config: IndexConfig,
    esf: Vec<EsfRecord>,
    pages: BTreeMap<PageId, Vec<TimeSeries>>,
    locations: HashMap<SequenceId, PageId>,
    next_page_id: PageId,
}

impl TwistIndex {
    pub fn new(config: IndexConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            esf: Vec::new(),
            pages: BTreeMap::new(),
            locations: HashMap::new(),
            next_page_id: 0,
        })
    }

    /// Equivalent to inserting `dataset` one sequence at a time, in order.
    pub fn bulk_build(
        config: IndexConfig,
        dataset: impl IntoIterator<Item = TimeSeries>,
    ) -> Result<Self> {
        let mut index = Self::new(config)?;
        for s in dataset {
            let id = s.id();
            index.insert(s).map_err(|e| match e {
                TwistError::LengthMismatch { .. } => {
                    TwistError::Input(format!("sequence {id}: {e}"))
                }
                other => other,
            })?;
        }
        Ok(index)
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn page_count(&self) -> usize {
        self.pages.len()
    }

    pub fn next_page_id(&self) -> PageId {
        self.next_page_id
    }

    pub fn page(&self, page_id: PageId) -> Option<&[TimeSeries]> {
        self.pages.get(&page_id).map(Vec::as_slice)
    }

    pub fn pages(&self) -> impl Iterator<Item = (PageId, &[TimeSeries])> {
        self.pages.iter().map(|(&id, p)| (id, p.as_slice()))
    }

    pub fn location(&self, id: SequenceId) -> Option<PageId> {
        self.locations.get(&id).copied()
    }

    /// Every stored sequence, page by page.
    pub fn sequences(&self) -> impl Iterator<Item = &TimeSeries> {
        self.pages.values().flatten()
    }

    fn record_pos(&self, page_id: PageId) -> Result<usize> {
        self.esf
            .binary_search_by_key(&page_id, |r| r.page_id)
            .map_err(|_| TwistError::Invariant(format!("page {page_id} has no envelope record")))
    }

    /// Mutable access to a stored envelope, for fault injection in tests.
    pub fn envelope_mut(&mut self, page_id: PageId) -> Option<&mut GroupEnvelope> {
        let pos = self.record_pos(page_id).ok()?;
        Some(&mut self.esf[pos].envelope)
    }

    fn fresh_page_id(&mut self) -> PageId {
        let id = self.next_page_id;
        self.next_page_id += 1;
        id
    }

    fn add_page(&mut self, members: Vec<TimeSeries>) -> Result<PageId> {
        let page_id = self.fresh_page_id();
        let envelope = build_group_envelope(&members)?;
        for s in &members {
            self.locations.insert(s.id(), page_id);
        }
        // Fresh ids are the largest so far, so appending keeps the order.
        self.esf.push(EsfRecord { page_id, envelope });
        self.pages.insert(page_id, members);
        Ok(page_id)
    }

    /// Page whose envelope is cheapest to widen for `c`; lowest id on ties.
    fn cheapest_page(&self, c: &[f64]) -> Option<PageId> {
        let mut best: Option<(f64, PageId)> = None;
        for r in &self.esf {
            let cost = insertion_cost_raw(&r.envelope, c, &self.config.params);
            if best.is_none_or(|(b, _)| cost < b) {
                best = Some((cost, r.page_id));
            }
        }
        best.map(|(_, id)| id)
    }

    /// Places `c` and returns the id of the page now holding it.
    pub fn insert(&mut self, c: TimeSeries) -> Result<PageId> {
        check_len(self.config.n, c.len())?;
        if self.locations.contains_key(&c.id()) {
            return Err(TwistError::DuplicateId(c.id()));
        }
        let Some(page_id) = self.cheapest_page(c.values()) else {
            return self.add_page(vec![c]);
        };

        let pos = self.record_pos(page_id)?;
        self.esf[pos].envelope.absorb(c.values());
        let id = c.id();
        let page = self.pages.get_mut(&page_id).expect("record without page");
        page.push(c);
        self.locations.insert(id, page_id);
        if page.len() <= self.config.max_page_size {
            return Ok(page_id);
        }

        let members = self.pages.remove(&page_id).expect("page just updated");
        self.esf.remove(pos);
        let (a, b) = split_dsf(members)?;
        let id_a = self.add_page(a)?;
        let id_b = self.add_page(b)?;
        Ok(if self.locations[&id] == id_a {
            id_a
        } else {
            id_b
        })
    }

    /// Removes sequence `id`. An emptied page loses its envelope record
    /// under either policy.
    pub fn delete(&mut self, id: SequenceId, policy: DeletionPolicy) -> Result<()> {
        let page_id = self
            .locations
            .remove(&id)
            .ok_or_else(|| TwistError::NotFound(format!("sequence {id}")))?;
        let pos = self.record_pos(page_id)?;
        let page = self.pages.get_mut(&page_id).expect("record without page");
        page.retain(|s| s.id() != id);

        if page.is_empty() {
            self.pages.remove(&page_id);
            self.esf.remove(pos);
            return Ok(());
        }
        match policy {
            DeletionPolicy::Eager => self.esf[pos].envelope = build_group_envelope(page)?,
            DeletionPolicy::Lazy => self.esf[pos].envelope.member_count -= 1,
        }
        Ok(())
    }

    /// Describes every broken structural invariant; empty when sound.
    pub fn audit(&self) -> Vec<String> {
        let mut violations = Vec::new();
        let mut seen: HashMap<SequenceId, PageId> = HashMap::new();

        if self.esf.windows(2).any(|w| w[0].page_id >= w[1].page_id) {
            violations.push("envelope records are not in ascending page-id order".into());
        }
        if self.esf.len() != self.pages.len()
            || self
                .esf
                .iter()
                .any(|r| !self.pages.contains_key(&r.page_id))
        {
            violations.push(format!(
                "{} envelope records do not match {} pages",
                self.esf.len(),
                self.pages.len()
            ));
        }
        for r in &self.esf {
            let Some(page) = self.pages.get(&r.page_id) else {
                continue;
            };
            if page.is_empty() || page.len() > self.config.max_page_size {
                violations.push(format!(
                    "page {} holds {} sequences (allowed 1..={})",
                    r.page_id,
                    page.len(),
                    self.config.max_page_size
                ));
            }
            if r.page_id >= self.next_page_id {
                violations.push(format!("page id {} was never allocated", r.page_id));
            }
            if r.envelope.len() != self.config.n {
                violations.push(format!("envelope of page {} has wrong length", r.page_id));
            }
            if r.envelope.member_count as usize != page.len() {
                violations.push(format!(
                    "envelope of page {} counts {} members but the page holds {}",
                    r.page_id,
                    r.envelope.member_count,
                    page.len()
                ));
            }
            for s in page {
                if let Some(other) = seen.insert(s.id(), r.page_id) {
                    violations.push(format!(
                        "sequence {} appears in pages {other} and {}",
                        s.id(),
                        r.page_id
                    ));
                }
                if s.len() != self.config.n {
                    violations.push(format!("sequence {} has length {}", s.id(), s.len()));
                } else if !r.envelope.contains(s.values()) {
                    violations.push(format!(
                        "envelope of page {} does not contain sequence {}",
                        r.page_id,
                        s.id()
                    ));
                }
            }
        }
        if seen.len() != self.locations.len()
            || seen.iter().any(|(id, p)| self.locations.get(id) != Some(p))
        {
            violations.push("sequence location map disagrees with page contents".into());
        }
        violations
    }

    /// Writes pages, envelope file and manifest into `dir`, removing page
    /// files of pages that no longer exist.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| TwistError::io(dir, e))?;
        for existing in list_page_files(dir)? {
            if !self.pages.contains_key(&existing) {
                let path = store::dsf_path(dir, existing);
                fs::remove_file(&path).map_err(|e| TwistError::io(&path, e))?;
            }
        }
        for (&page_id, members) in &self.pages {
            let page = DsfPage {
                page_id,
                sequences: members.clone(),
            };
            store::write_dsf(dir, self.config.n, &page)?;
        }
        store::write_esf(dir, self.config.n, &self.esf)?;
        store::write_manifest(
            dir,
            &Manifest {
                config: self.config.clone(),
                next_page_id: self.next_page_id,
            },
        )
    }

    /// Loads an index saved by [`save`](Self::save). Structural problems are
    /// left for [`audit`](Self::audit) to report.
    pub fn open(dir: &Path) -> Result<Self> {
        let manifest = store::read_manifest(dir)?;
        let (_, esf) = store::read_esf(dir)?;
        let mut pages = BTreeMap::new();
        let mut locations = HashMap::new();
        for r in &esf {
            let page = store::read_dsf(dir, r.page_id)?;
            for s in &page.sequences {
                locations.insert(s.id(), r.page_id);
            }
            pages.insert(r.page_id, page.sequences);
        }
        Ok(Self {
            config: manifest.config,
            esf,
            pages,
            locations,
            next_page_id: manifest.next_page_id,
        })
    }
}

impl PageSource for TwistIndex {
    fn config(&self) -> &IndexConfig {
        &self.config
    }

    fn esf(&self) -> &[EsfRecord] {
        &self.esf
    }

    fn fetch_page(&self, page_id: PageId) -> Result<Cow<'_, [TimeSeries]>> {
        self.page(page_id)
            .map(Cow::Borrowed)
            .ok_or_else(|| TwistError::NotFound(format!("page {page_id}")))
    }
}

fn list_page_files(dir: &Path) -> Result<Vec<PageId>> {
    let mut ids = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| TwistError::io(dir, e))? {
        let entry = entry.map_err(|e| TwistError::io(dir, e))?;
        let name = entry.file_name();
        let name = name.to_string_lossy();
        if let Some(id) = name
            .strip_prefix("dsf_")
            .and_then(|rest| rest.strip_suffix(".bin"))
            .and_then(|digits| digits.parse().ok())
        {
            ids.push(id);
        }
    }
    ids.sort_unstable();
    Ok(ids)
}

/// Full check of an index directory: structural invariants, byte-exact
/// re-encoding of every file, and stray page files.
pub fn verify_dir(dir: &Path) -> Result<Vec<String>> {
    let index = TwistIndex::open(dir)?;
    let mut violations = index.audit();

    for (page_id, members) in index.pages() {
        let path = store::dsf_path(dir, page_id);
        let on_disk = fs::read(&path).map_err(|e| TwistError::io(&path, e))?;
        if store::encode_sequences(DSF_MAGIC, index.config.n, members)? != on_disk {
            violations.push(format!("page file {} does not round-trip", path.display()));
        }
    }
    let esf_path = dir.join(store::ESF_FILE);
    let on_disk = fs::read(&esf_path).map_err(|e| TwistError::io(&esf_path, e))?;
    if store::encode_esf(index.config.n, &index.esf) != on_disk {
        violations.push("envelope file does not round-trip".into());
    }
    for id in list_page_files(dir)? {
        if index.page(id).is_none() {
            violations.push(format!("page file for page {id} has no envelope record"));
        }
    }
    Ok(violations)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::GlobalConstraint;
    use crate::testing::{hull, random_series};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ts(id: u64, v: &[f64]) -> TimeSeries {
        TimeSeries::new(id, v.to_vec()).unwrap()
    }

    fn config(n: usize, alpha: usize) -> IndexConfig {
        IndexConfig::new(n, alpha, GlobalConstraint::sakoe_chiba(0.1, n).unwrap()).unwrap()
    }

    fn env(upper: &[f64], lower: &[f64]) -> GroupEnvelope {
        GroupEnvelope {
            upper: upper.to_vec(),
            lower: lower.to_vec(),
            member_count: 1,
        }
    }

    const P2: DistanceParams = DistanceParams {
        p: 2,
        apply_root: true,
    };

    #[test]
    fn insertion_cost_examples() {
        let eg = env(&[1.0, 1.0], &[0.0, 0.0]);
        assert_eq!(insertion_cost(&eg, &ts(0, &[0.5, 1.0]), &P2).unwrap(), 0.0);
        // Above: distance to the lower bound, 2 * (3 - 0)^2.
        assert_eq!(insertion_cost(&eg, &ts(0, &[3.0, 3.0]), &P2).unwrap(), 18.0);
        // Below: distance to the upper bound, 2 * (1 - (-2))^2.
        assert_eq!(
            insertion_cost(&eg, &ts(0, &[-2.0, -2.0]), &P2).unwrap(),
            18.0
        );
        assert!(insertion_cost(&eg, &ts(0, &[1.0]), &P2).is_err());
    }

    #[test]
    fn update_envelope_examples() {
        let eg = env(&[1.0, 1.0], &[0.0, 0.0]);
        let same = update_envelope(&eg, &ts(0, &[0.5, 0.5])).unwrap();
        assert_eq!(
            (same.upper.as_slice(), same.lower.as_slice()),
            (&[1.0, 1.0][..], &[0.0, 0.0][..])
        );
        assert_eq!(same.member_count, 2);
        let grown = update_envelope(&eg, &ts(0, &[2.0, -1.0])).unwrap();
        assert_eq!(grown.upper, vec![2.0, 1.0]);
        assert_eq!(grown.lower, vec![0.0, -1.0]);
    }

    #[test]
    fn fold_update_equals_rebuild() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..200 {
            let size = rng.random_range(1..20);
            let members: Vec<TimeSeries> = (0..size)
                .map(|i| ts(i, &random_series(&mut rng, 12)))
                .collect();
            let page = DsfPage {
                page_id: 0,
                sequences: members.clone(),
            };
            let built = create_envelope(&page).unwrap();
            let mut folded = GroupEnvelope::of(members[0].values());
            for m in &members[1..] {
                folded = update_envelope(&folded, m).unwrap();
            }
            assert_eq!(built, folded);
            let raw: Vec<Vec<f64>> = members.iter().map(|m| m.values().to_vec()).collect();
            assert_eq!((built.upper, built.lower), hull(&raw));
        }
    }

    #[test]
    fn split_examples() {
        let (a, b) = split_dsf(vec![
            ts(1, &[0.0, 0.0]),
            ts(2, &[0.0, 0.0]),
            ts(3, &[9.0, 9.0]),
        ])
        .unwrap();
        assert_eq!(a.iter().map(TimeSeries::id).collect::<Vec<_>>(), vec![1, 2]);
        assert_eq!(b.iter().map(TimeSeries::id).collect::<Vec<_>>(), vec![3]);

        let (a, b) = split_dsf(vec![ts(1, &[0.0]), ts(2, &[5.0])]).unwrap();
        assert_eq!((a.len(), b.len()), (1, 1));

        let same: Vec<_> = (0..4).map(|i| ts(i, &[3.0, 3.0])).collect();
        let (a, b) = split_dsf(same).unwrap();
        assert_eq!(a.iter().map(TimeSeries::id).collect::<Vec<_>>(), vec![0, 1]);
        assert_eq!(b.iter().map(TimeSeries::id).collect::<Vec<_>>(), vec![2, 3]);

        assert!(split_dsf(vec![ts(1, &[0.0])]).is_err());
    }

    #[test]
    fn insert_into_empty_index() {
        let mut idx = TwistIndex::new(config(3, 4)).unwrap();
        idx.insert(ts(7, &[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(idx.page_count(), 1);
        let e = &idx.esf()[0].envelope;
        assert_eq!(e.upper, vec![1.0, 2.0, 3.0]);
        assert_eq!(e.lower, vec![1.0, 2.0, 3.0]);
        assert_eq!(e.member_count, 1);
    }

    #[test]
    fn insert_picks_the_cheapest_page() {
        let mut idx = TwistIndex::new(config(2, 2)).unwrap();
        for (i, v) in [[0.0, 0.1], [100.0, 100.0], [0.2, 0.0]].iter().enumerate() {
            idx.insert(ts(i as u64, v)).unwrap();
        }
        // The third insert split the first page into {near 0} and {near 100}.
        assert_eq!(idx.page_count(), 2);
        let near_zero = idx.location(0).unwrap();
        assert_eq!(idx.location(2), Some(near_zero));
        assert_ne!(idx.location(1), Some(near_zero));
        let far = idx.location(1).unwrap();
        let placed = idx.insert(ts(3, &[0.1, 0.1])).unwrap();
        assert_ne!(placed, far);
        assert!(idx.page(far).unwrap().iter().all(|s| s.id() == 1));
    }

    #[test]
    fn third_insert_at_capacity_two_splits() {
        let mut idx = TwistIndex::new(config(2, 2)).unwrap();
        idx.insert(ts(1, &[0.0, 0.0])).unwrap();
        idx.insert(ts(2, &[0.0, 1.0])).unwrap();
        assert_eq!(idx.page_count(), 1);
        idx.insert(ts(3, &[9.0, 9.0])).unwrap();
        assert_eq!(idx.page_count(), 2);
        let ids: Vec<PageId> = idx.esf().iter().map(|r| r.page_id).collect();
        assert_eq!(ids, vec![1, 2]);
        assert_eq!(
            idx.page(1)
                .unwrap()
                .iter()
                .map(TimeSeries::id)
                .collect::<Vec<_>>(),
            vec![1, 2]
        );
        assert_eq!(
            idx.page(2)
                .unwrap()
                .iter()
                .map(TimeSeries::id)
                .collect::<Vec<_>>(),
            vec![3]
        );
        assert!(idx.audit().is_empty());
    }

    #[test]
    fn cost_ties_go_to_the_lowest_page_id() {
        let mut idx = TwistIndex::new(config(2, 2)).unwrap();
        idx.insert(ts(1, &[0.0, 0.0])).unwrap();
        idx.insert(ts(2, &[0.0, 1.0])).unwrap();
        idx.insert(ts(3, &[9.0, 9.0])).unwrap();
        // Page 1 spans [0,0]..[0,1], page 2 is the point [9,9]; both charge 40.5.
        let c = ts(4, &[4.5, 4.5]);
        for r in idx.esf() {
            assert_eq!(insertion_cost(&r.envelope, &c, &P2).unwrap(), 40.5);
        }
        idx.insert(c).unwrap();
        assert!(idx.page(1).is_none_or(|p| p.len() <= 2));
        assert_ne!(idx.location(4), Some(2));
        assert!(idx.audit().is_empty());
    }

    #[test]
    fn duplicate_and_wrong_length_are_rejected() {
        let mut idx = TwistIndex::new(config(2, 4)).unwrap();
        idx.insert(ts(1, &[0.0, 0.0])).unwrap();
        assert!(matches!(
            idx.insert(ts(1, &[1.0, 1.0])),
            Err(TwistError::DuplicateId(1))
        ));
        assert!(matches!(
            idx.insert(ts(2, &[1.0])),
            Err(TwistError::LengthMismatch { .. })
        ));
        assert_eq!(idx.len(), 1);
    }

    #[test]
    fn eager_delete_tightens() {
        let mut idx = TwistIndex::new(config(2, 8)).unwrap();
        idx.insert(ts(1, &[0.0, 0.0])).unwrap();
        idx.insert(ts(2, &[1.0, 1.0])).unwrap();
        idx.insert(ts(3, &[10.0, -5.0])).unwrap();
        idx.delete(3, DeletionPolicy::Eager).unwrap();
        let e = &idx.esf()[0].envelope;
        assert_eq!(e.upper, vec![1.0, 1.0]);
        assert_eq!(e.lower, vec![0.0, 0.0]);
        assert_eq!(e.member_count, 2);
    }

    #[test]
    fn lazy_delete_keeps_bounds() {
        let mut idx = TwistIndex::new(config(2, 8)).unwrap();
        idx.insert(ts(1, &[0.0, 0.0])).unwrap();
        idx.insert(ts(2, &[10.0, -5.0])).unwrap();
        let before = idx.esf()[0].envelope.clone();
        idx.delete(2, DeletionPolicy::Lazy).unwrap();
        let after = &idx.esf()[0].envelope;
        assert_eq!((&after.upper, &after.lower), (&before.upper, &before.lower));
        assert_eq!(after.member_count, 1);
        assert!(idx.audit().is_empty());
    }

    #[test]
    fn deleting_the_last_member_drops_the_page() {
        for policy in [DeletionPolicy::Eager, DeletionPolicy::Lazy] {
            let mut idx = TwistIndex::new(config(2, 1)).unwrap();
            idx.insert(ts(1, &[0.0, 0.0])).unwrap();
            idx.insert(ts(2, &[5.0, 5.0])).unwrap();
            assert_eq!(idx.page_count(), 2);
            let page = idx.location(2).unwrap();
            idx.delete(2, policy).unwrap();
            assert_eq!(idx.page_count(), 1);
            assert!(idx.esf().iter().all(|r| r.page_id != page));
            assert_eq!(
                idx.delete(2, policy).unwrap_err().kind(),
                crate::ErrorKind::NotFound
            );
        }
    }

    #[test]
    fn bulk_build_page_counts() {
        assert_eq!(
            TwistIndex::bulk_build(config(4, 8), vec![])
                .unwrap()
                .page_count(),
            0
        );
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data: Vec<TimeSeries> = (0..9).map(|i| ts(i, &random_series(&mut rng, 4))).collect();
        assert_eq!(
            TwistIndex::bulk_build(config(4, 8), data[..8].to_vec())
                .unwrap()
                .page_count(),
            1
        );
        assert_eq!(
            TwistIndex::bulk_build(config(4, 8), data)
                .unwrap()
                .page_count(),
            2
        );
    }

    #[test]
    fn page_size_one_gives_singletons() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let data: Vec<TimeSeries> = (0..30)
            .map(|i| ts(i, &random_series(&mut rng, 6)))
            .collect();
        let idx = TwistIndex::bulk_build(config(6, 1), data).unwrap();
        assert_eq!(idx.page_count(), 30);
        assert!(idx.pages().all(|(_, p)| p.len() == 1));
        assert!(idx.audit().is_empty());
    }

    #[test]
    fn save_open_round_trip_and_verify() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data: Vec<TimeSeries> = (0..40)
            .map(|i| ts(i, &random_series(&mut rng, 8)))
            .collect();
        let mut idx = TwistIndex::bulk_build(config(8, 5), data).unwrap();
        idx.save(dir.path()).unwrap();
        assert_eq!(TwistIndex::open(dir.path()).unwrap(), idx);
        assert!(verify_dir(dir.path()).unwrap().is_empty());

        // Deleting a whole page must also remove its file on the next save.
        let victim = idx.esf()[0].page_id;
        let ids: Vec<u64> = idx
            .page(victim)
            .unwrap()
            .iter()
            .map(TimeSeries::id)
            .collect();
        for id in ids {
            idx.delete(id, DeletionPolicy::Eager).unwrap();
        }
        idx.save(dir.path()).unwrap();
        assert!(!store::dsf_path(dir.path(), victim).exists());
        assert!(verify_dir(dir.path()).unwrap().is_empty());
    }

    #[test]
    fn audit_flags_a_shrunken_envelope() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let data: Vec<TimeSeries> = (0..10)
            .map(|i| ts(i, &random_series(&mut rng, 4)))
            .collect();
        let mut idx = TwistIndex::bulk_build(config(4, 4), data).unwrap();
        let page = idx.esf()[0].page_id;
        let low = idx
            .page(page)
            .unwrap()
            .iter()
            .map(|s| s.values()[0])
            .fold(f64::INFINITY, f64::min);
        idx.envelope_mut(page).unwrap().lower[0] = low + 1.0;
        let violations = idx.audit();
        assert!(
            violations.iter().any(|v| v.contains("does not contain")),
            "{violations:?}"
        );
    }

    #[derive(Debug, Clone)]
    enum Op {
        Insert(Vec<f64>),
        Delete(usize, bool),
    }

    fn ops() -> impl Strategy<Value = Vec<Op>> {
        prop::collection::vec(
            prop_oneof![
                3 => prop::collection::vec(-5.0f64..5.0, 5).prop_map(Op::Insert),
                1 => (any::<usize>(), any::<bool>()).prop_map(|(i, e)| Op::Delete(i, e)),
            ],
            1..120,
        )
    }

    proptest! {
        #[test]
        fn mutations_preserve_invariants(ops in ops(), alpha in 1usize..6) {
            let mut idx = TwistIndex::new(config(5, alpha)).unwrap();
            let mut live: Vec<u64> = Vec::new();
            let mut next_id = 0u64;
            for op in ops {
                match op {
                    Op::Insert(v) => {
                        idx.insert(ts(next_id, &v)).unwrap();
                        live.push(next_id);
                        next_id += 1;
                    }
                    Op::Delete(pick, eager) if !live.is_empty() => {
                        let id = live.remove(pick % live.len());
                        let policy = if eager { DeletionPolicy::Eager } else { DeletionPolicy::Lazy };
                        idx.delete(id, policy).unwrap();
                    }
                    Op::Delete(..) => {}
                }
                let violations = idx.audit();
                prop_assert!(violations.is_empty(), "{:?}", violations);
                prop_assert_eq!(idx.len(), live.len());
            }
        }

        #[test]
        fn split_parts_are_nonempty_and_complete(points in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 3), 2..30)) {
            let members: Vec<TimeSeries> = points.iter().enumerate().map(|(i, p)| ts(i as u64, p)).collect();
            let (a, b) = split_dsf(members).unwrap();
            prop_assert!(!a.is_empty() && !b.is_empty());
            prop_assert_eq!(a.len() + b.len(), points.len());
            let mut ids: Vec<u64> = a.iter().chain(&b).map(TimeSeries::id).collect();
            ids.sort_unstable();
            prop_assert_eq!(ids, (0..points.len() as u64).collect::<Vec<_>>());
        }
    }

    #[test]
    fn eager_envelope_equals_rebuild_after_each_delete() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let data: Vec<TimeSeries> = (0..60)
            .map(|i| ts(i, &random_series(&mut rng, 6)))
            .collect();
        let mut idx = TwistIndex::bulk_build(config(6, 8), data).unwrap();
        for id in (0..60).step_by(3) {
            let page = idx.location(id).unwrap();
            idx.delete(id, DeletionPolicy::Eager).unwrap();
            if let Some(members) = idx.page(page) {
                let rebuilt = build_group_envelope(members).unwrap();
                let stored = &idx.esf()[idx.record_pos(page).unwrap()].envelope;
                assert_eq!(stored, &rebuilt);
            }
        }
    }

    #[test]
    fn build_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let data: Vec<TimeSeries> = (0..100)
            .map(|i| ts(i, &random_series(&mut rng, 16)))
            .collect();
        let a = TwistIndex::bulk_build(config(16, 7), data.clone()).unwrap();
        let b = TwistIndex::bulk_build(config(16, 7), data).unwrap();
        assert_eq!(a, b);
    }
}
