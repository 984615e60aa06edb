//! On-disk layout of an index directory and I/O accounting.
//!
//! All binary files are little-endian and fixed-width:
//!
//! ```text
//! data page  (dsf_XXXXXXXX.bin)   "TWDS" | version u16 | n u32 | count u32
//!                                 | count*n f64 values | count u64 ids
//! dataset    (any path)           "TWDT" | same layout as a data page
//! envelopes  (esf.bin)            "TWES" | version u16 | n u32 | records u32
//!                                 | per record: page_id u32 | n f64 upper
//!                                 | n f64 lower | member_count u32
//! manifest   (manifest.txt)       key = value lines
//! ```

use std::borrow::Cow;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Result, TwistError};
use crate::lbounds::{default_ladder, GroupEnvelope};
use crate::series::{DistanceParams, GlobalConstraint, SequenceId, TimeSeries};

pub type PageId = u32;

pub const FORMAT_VERSION: u16 = 1;
pub const DSF_MAGIC: [u8; 4] = *b"TWDS";
pub const DATASET_MAGIC: [u8; 4] = *b"TWDT";
pub const ESF_MAGIC: [u8; 4] = *b"TWES";
/// magic + version + n + count
pub const HEADER_BYTES: u64 = 4 + 2 + 4 + 4;

pub const ESF_FILE: &str = "esf.bin";
pub const MANIFEST_FILE: &str = "manifest.txt";

/// A data page: a group of raw sequences stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct DsfPage {
    pub page_id: PageId,
    pub sequences: Vec<TimeSeries>,
}

/// One envelope-file entry: a page pointer and the hull of that page.
#[derive(Debug, Clone, PartialEq)]
pub struct EsfRecord {
    pub page_id: PageId,
    pub envelope: GroupEnvelope,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DeletionPolicy {
    /// Rebuild the page envelope after every delete.
    Eager,
    /// Leave the envelope as is; it still contains every remaining member.
    #[default]
    Lazy,
}

impl fmt::Display for DeletionPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DeletionPolicy::Eager => "eager",
            DeletionPolicy::Lazy => "lazy",
        })
    }
}

impl FromStr for DeletionPolicy {
    type Err = TwistError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eager" => Ok(DeletionPolicy::Eager),
            "lazy" => Ok(DeletionPolicy::Lazy),
            other => Err(TwistError::Input(format!(
                "unknown deletion policy {other:?} (expected eager or lazy)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexConfig {
    pub n: usize,
    pub max_page_size: usize,
    pub params: DistanceParams,
    /// Segment sizes, coarsest first.
    pub ladder: Vec<usize>,
    pub constraint: GlobalConstraint,
    pub deletion_policy: DeletionPolicy,
}

impl IndexConfig {
    /// Default ladder, L2 distances and lazy deletion.
    pub fn new(n: usize, max_page_size: usize, constraint: GlobalConstraint) -> Result<Self> {
        let config = Self {
            n,
            max_page_size,
            params: DistanceParams::default(),
            ladder: default_ladder(n),
            constraint,
            deletion_policy: DeletionPolicy::default(),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(TwistError::Input("sequence length must be positive".into()));
        }
        if self.max_page_size < 1 {
            return Err(TwistError::Input("max page size must be at least 1".into()));
        }
        if self.params.p == 0 {
            return Err(TwistError::Input("p must be a positive integer".into()));
        }
        if self.constraint.len() != self.n {
            return Err(TwistError::Input(format!(
                "constraint covers {} positions but sequences have length {}",
                self.constraint.len(),
                self.n
            )));
        }
        if self.ladder.is_empty() {
            return Err(TwistError::Input("segment ladder must not be empty".into()));
        }
        if self.ladder.iter().any(|&t| t < 1 || t > self.n) {
            return Err(TwistError::Input(format!(
                "segment sizes must lie in [1, {}], got {:?}",
                self.n, self.ladder
            )));
        }
        if self.ladder.windows(2).any(|w| w[0] <= w[1]) {
            return Err(TwistError::Input(format!(
                "segment ladder must be strictly decreasing, got {:?}",
                self.ladder
            )));
        }
        Ok(())
    }
}

/// Per-query I/O counters feeding the page-access model.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AccessStats {
    /// Envelope records read per envelope-file pass.
    pub esf_envelope_reads: u64,
    /// Raw sequences read from data pages.
    pub candidate_sequences_read: u64,
    /// Data pages opened (each one a random access).
    pub dsf_random_accesses: u64,
}

/// Which query flow produced a set of counters. Determines how many passes
/// over the envelope file the access model charges.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccessMode {
    /// Multiresolution group bound: two envelope passes.
    Lbg,
    /// Band-expanded envelope bound: one envelope pass.
    LbgK,
    /// Plain sequential scan, no envelope file.
    Scan,
}

impl AccessMode {
    pub fn esf_passes(self) -> u64 {
        match self {
            AccessMode::Lbg => 2,
            AccessMode::LbgK => 1,
            AccessMode::Scan => 0,
        }
    }
}

/// Modelled page accesses: sequential reads are `speedup_factor` times
/// cheaper than random ones, and the envelope file is charged once per pass
/// of `mode`.
pub fn page_access_count(stats: &AccessStats, speedup_factor: f64, mode: AccessMode) -> f64 {
    (mode.esf_passes() * stats.esf_envelope_reads + stats.candidate_sequences_read) as f64
        / speedup_factor
        + stats.dsf_random_accesses as f64
}

/// Read access to a committed index: configuration, envelopes and pages.
pub trait PageSource {
    fn config(&self) -> &IndexConfig;
    /// Envelope records in page-id order.
    fn esf(&self) -> &[EsfRecord];
    fn fetch_page(&self, page_id: PageId) -> Result<Cow<'_, [TimeSeries]>>;
}

/// Reads one page front to back, charging one random access and one
/// candidate read per sequence.
pub fn read_dsf_sequential<'a, S: PageSource + ?Sized>(
    source: &'a S,
    page_id: PageId,
    stats: &mut AccessStats,
) -> Result<Cow<'a, [TimeSeries]>> {
    let page = source.fetch_page(page_id)?;
    stats.dsf_random_accesses += 1;
    stats.candidate_sequences_read += page.len() as u64;
    Ok(page)
}

/// One pass over the envelope file. The file is memory-resident, so a flow
/// with several passes loads once and the model charges the extra passes.
pub fn load_esf<'a, S: PageSource + ?Sized>(
    source: &'a S,
    stats: &mut AccessStats,
) -> &'a [EsfRecord] {
    let records = source.esf();
    stats.esf_envelope_reads += records.len() as u64;
    records
}

pub fn dsf_file_size(n: usize, count: usize) -> u64 {
    HEADER_BYTES + count as u64 * (8 * n as u64 + 8)
}

pub fn esf_file_size(n: usize, records: usize) -> u64 {
    HEADER_BYTES + records as u64 * (16 * n as u64 + 8)
}

pub fn dsf_path(dir: &Path, page_id: PageId) -> PathBuf {
    dir.join(format!("dsf_{page_id:08}.bin"))
}

fn put_header(buf: &mut Vec<u8>, magic: [u8; 4], n: usize, count: usize) {
    buf.extend_from_slice(&magic);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(n as u32).to_le_bytes());
    buf.extend_from_slice(&(count as u32).to_le_bytes());
}

/// Encodes sequences in the page/dataset layout.
pub fn encode_sequences(magic: [u8; 4], n: usize, sequences: &[TimeSeries]) -> Result<Vec<u8>> {
    let mut buf = Vec::with_capacity(dsf_file_size(n, sequences.len()) as usize);
    put_header(&mut buf, magic, n, sequences.len());
    for s in sequences {
        crate::error::check_len(n, s.len())?;
        for v in s.values() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    for s in sequences {
        buf.extend_from_slice(&s.id().to_le_bytes());
    }
    Ok(buf)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(len).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| TwistError::format(self.path, "truncated"))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, count: usize) -> Result<Vec<f64>> {
        let raw = self.take(count * 8)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn header(&mut self, magic: [u8; 4]) -> Result<(usize, usize)> {
        if self.take(4)? != magic {
            return Err(TwistError::format(self.path, "bad magic"));
        }
        let version = self.u16()?;
        if version != FORMAT_VERSION {
            return Err(TwistError::format(
                self.path,
                format!("unsupported version {version}"),
            ));
        }
        Ok((self.u32()? as usize, self.u32()? as usize))
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(TwistError::format(self.path, "trailing bytes"));
        }
        Ok(())
    }
}

/// Decodes the page/dataset layout. Returns `(n, sequences)`.
pub fn decode_sequences(
    magic: [u8; 4],
    bytes: &[u8],
    path: &Path,
) -> Result<(usize, Vec<TimeSeries>)> {
    let mut cur = Cursor {
        bytes,
        pos: 0,
        path,
    };
    let (n, count) = cur.header(magic)?;
    let values = cur.f64s(n * count)?;
    let mut ids = Vec::with_capacity(count);
    for _ in 0..count {
        ids.push(cur.u64()?);
    }
    cur.finish()?;
    let sequences = if n == 0 {
        Vec::new()
    } else {
        values
            .chunks_exact(n)
            .zip(ids)
            .map(|(v, id)| {
                TimeSeries::new(id, v.to_vec()).map_err(|e| TwistError::format(path, e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?
    };
    Ok((n, sequences))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| TwistError::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| TwistError::io(path, e))
}

/// Writes (or overwrites) a page file.
pub fn write_dsf(dir: &Path, n: usize, page: &DsfPage) -> Result<PathBuf> {
    let path = dsf_path(dir, page.page_id);
    let bytes = encode_sequences(DSF_MAGIC, n, &page.sequences)
        .map_err(|e| TwistError::Input(format!("page {}: {e}", page.page_id)))?;
    write_file(&path, &bytes)?;
    Ok(path)
}

pub fn read_dsf(dir: &Path, page_id: PageId) -> Result<DsfPage> {
    let path = dsf_path(dir, page_id);
    let bytes = fs::read(&path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => TwistError::NotFound(format!("page {page_id}")),
        _ => TwistError::io(&path, e),
    })?;
    let (_, sequences) = decode_sequences(DSF_MAGIC, &bytes, &path)?;
    Ok(DsfPage { page_id, sequences })
}

pub fn write_dataset(path: &Path, sequences: &[TimeSeries]) -> Result<()> {
    let n = sequences.first().map_or(0, TimeSeries::len);
    write_file(path, &encode_sequences(DATASET_MAGIC, n, sequences)?)
}

pub fn read_dataset(path: &Path) -> Result<Vec<TimeSeries>> {
    Ok(decode_sequences(DATASET_MAGIC, &read_file(path)?, path)?.1)
}

pub fn encode_esf(n: usize, records: &[EsfRecord]) -> Vec<u8> {
    let mut buf = Vec::with_capacity(esf_file_size(n, records.len()) as usize);
    put_header(&mut buf, ESF_MAGIC, n, records.len());
    for r in records {
        buf.extend_from_slice(&r.page_id.to_le_bytes());
        for v in r.envelope.upper.iter().chain(&r.envelope.lower) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf.extend_from_slice(&r.envelope.member_count.to_le_bytes());
    }
    buf
}

pub fn decode_esf(bytes: &[u8], path: &Path) -> Result<(usize, Vec<EsfRecord>)> {
    let mut cur = Cursor {
        bytes,
        pos: 0,
        path,
    };
    let (n, count) = cur.header(ESF_MAGIC)?;
    let mut records = Vec::with_capacity(count);
    for _ in 0..count {
        let page_id = cur.u32()?;
        let upper = cur.f64s(n)?;
        let lower = cur.f64s(n)?;
        let member_count = cur.u32()?;
        records.push(EsfRecord {
            page_id,
            envelope: GroupEnvelope {
                upper,
                lower,
                member_count,
            },
        });
    }
    cur.finish()?;
    Ok((n, records))
}

pub fn write_esf(dir: &Path, n: usize, records: &[EsfRecord]) -> Result<PathBuf> {
    let path = dir.join(ESF_FILE);
    write_file(&path, &encode_esf(n, records))?;
    Ok(path)
}

pub fn read_esf(dir: &Path) -> Result<(usize, Vec<EsfRecord>)> {
    let path = dir.join(ESF_FILE);
    decode_esf(&read_file(&path)?, &path)
}

/// Contents of the manifest file.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub config: IndexConfig,
    /// Next id handed out to a new page; ids are never reused.
    pub next_page_id: PageId,
}

fn join<T: ToString>(items: &[T]) -> String {
    items
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

impl Manifest {
    pub fn to_text(&self) -> String {
        let c = &self.config;
        format!(
            "# twist index manifest\n\
             format_version = {FORMAT_VERSION}\n\
             n = {}\n\
             max_page_size = {}\n\
             p = {}\n\
             apply_root = {}\n\
             ladder = {}\n\
             deletion_policy = {}\n\
             next_page_id = {}\n\
             radii = {}\n",
            c.n,
            c.max_page_size,
            c.params.p,
            c.params.apply_root,
            join(&c.ladder),
            c.deletion_policy,
            self.next_page_id,
            join(c.constraint.radii()),
        )
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut fields = std::collections::HashMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                TwistError::format(path, format!("line {}: expected key = value", lineno + 1))
            })?;
            fields.insert(key.trim().to_string(), value.trim().to_string());
        }
        let get = |key: &str| {
            fields
                .get(key)
                .map(String::as_str)
                .ok_or_else(|| TwistError::format(path, format!("missing key {key}")))
        };
        fn num<T: FromStr>(path: &Path, key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| TwistError::format(path, format!("bad value for {key}: {v:?}")))
        }
        fn list(path: &Path, key: &str, v: &str) -> Result<Vec<usize>> {
            v.split(',').map(|x| num(path, key, x.trim())).collect()
        }

        let version: u16 = num(path, "format_version", get("format_version")?)?;
        if version != FORMAT_VERSION {
            return Err(TwistError::format(
                path,
                format!("unsupported version {version}"),
            ));
        }
        let radii = list(path, "radii", get("radii")?)?;
        let constraint =
            GlobalConstraint::new(radii).map_err(|e| TwistError::format(path, e.to_string()))?;
        let config = IndexConfig {
            n: num(path, "n", get("n")?)?,
            max_page_size: num(path, "max_page_size", get("max_page_size")?)?,
            params: DistanceParams {
                p: num(path, "p", get("p")?)?,
                apply_root: num(path, "apply_root", get("apply_root")?)?,
            },
            ladder: list(path, "ladder", get("ladder")?)?,
            constraint,
            deletion_policy: get("deletion_policy")?
                .parse()
                .map_err(|e: TwistError| TwistError::format(path, e.to_string()))?,
        };
        config
            .validate()
            .map_err(|e| TwistError::format(path, e.to_string()))?;
        Ok(Self {
            config,
            next_page_id: num(path, "next_page_id", get("next_page_id")?)?,
        })
    }
}

pub fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<()> {
    write_file(&dir.join(MANIFEST_FILE), manifest.to_text().as_bytes())
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let bytes = read_file(&path)?;
    let text = String::from_utf8(bytes).map_err(|_| TwistError::format(&path, "not UTF-8"))?;
    Manifest::parse(&text, &path)
}

/// A committed index read straight from its directory. Envelopes are held
/// in memory; pages are read from disk on every fetch.
#[derive(Debug)]
pub struct DiskIndex {
    dir: PathBuf,
    manifest: Manifest,
    esf: Vec<EsfRecord>,
}

impl DiskIndex {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        let manifest = read_manifest(&dir)?;
        let (n, esf) = read_esf(&dir)?;
        if n != manifest.config.n && !esf.is_empty() {
            return Err(TwistError::format(
                dir.join(ESF_FILE),
                format!(
                    "envelope length {n} disagrees with manifest length {}",
                    manifest.config.n
                ),
            ));
        }
        Ok(Self { dir, manifest, esf })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }
}

impl PageSource for DiskIndex {
    fn config(&self) -> &IndexConfig {
        &self.manifest.config
    }

    fn esf(&self) -> &[EsfRecord] {
        &self.esf
    }

    fn fetch_page(&self, page_id: PageId) -> Result<Cow<'_, [TimeSeries]>> {
        Ok(Cow::Owned(read_dsf(&self.dir, page_id)?.sequences))
    }
}

/// Ids of the sequences in a page, in stored order.
pub fn page_ids(page: &DsfPage) -> Vec<SequenceId> {
    page.sequences.iter().map(TimeSeries::id).collect()
}
