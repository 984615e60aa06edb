//! Synthetic datasets and the measurement harness.
//!
//! Normal variates come from `ChaCha8Rng::seed_from_u64(seed)` sampled with
//! `rand_distr::StandardNormal` (ziggurat). One stream feeds a whole dataset,
//! sequence after sequence, so a spec fully determines its output.

use std::collections::HashMap;
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TwistError};
use crate::index::TwistIndex;
use crate::query::{scan_dataset, topk_lbg, topk_lbgk, Hit, QueryResult};
use crate::series::{DistanceParams, GlobalConstraint, TimeSeries};
use crate::store::{dsf_file_size, esf_file_size, IndexConfig};

/// Recorded next to generated datasets.
pub const NORMAL_GENERATOR: &str = "chacha8-seed_from_u64/rand_distr-StandardNormal-ziggurat";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    /// `t[i+1] = t[i] + N(0,1)`
    Rw1,
    /// `t[i+1] = 2 t[i] - t[i-1] + N(0,1)`
    Rw2,
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Model::Rw1 => "rw1",
            Model::Rw2 => "rw2",
        })
    }
}

impl FromStr for Model {
    type Err = TwistError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rw1" => Ok(Model::Rw1),
            "rw2" => Ok(Model::Rw2),
            other => Err(TwistError::Input(format!(
                "unknown model {other:?} (expected rw1 or rw2)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub model: Model,
    pub count: usize,
    pub length: usize,
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.count < 1 {
            return Err(TwistError::Input("count must be at least 1".into()));
        }
        if self.length < 2 {
            return Err(TwistError::Input("length must be at least 2".into()));
        }
        Ok(())
    }
}

/// Sidecar describing how a dataset file was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    #[serde(flatten)]
    pub spec: GeneratorSpec,
    pub normal_generator: String,
    pub z_normalized: bool,
}

impl DatasetMeta {
    pub fn new(spec: GeneratorSpec) -> Self {
        Self {
            spec,
            normal_generator: NORMAL_GENERATOR.to_string(),
            z_normalized: true,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("plain struct serializes")
    }
}

fn normals(rng: &mut ChaCha8Rng) -> impl Iterator<Item = f64> + '_ {
    std::iter::repeat_with(move || rng.sample(StandardNormal))
}

/// Un-normalized walks, in generation order.
pub fn generate_raw(spec: &GeneratorSpec) -> Result<Vec<Vec<f64>>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut draws = normals(&mut rng);
    let mut next = move || draws.next().expect("infinite stream");
    let n = spec.length;
    let mut out = Vec::with_capacity(spec.count);
    for _ in 0..spec.count {
        let mut t = Vec::with_capacity(n);
        match spec.model {
            Model::Rw1 => {
                t.push(next());
                for i in 0..n - 1 {
                    t.push(t[i] + next());
                }
            }
            Model::Rw2 => {
                t.push(next());
                t.push(next());
                for i in 1..n - 1 {
                    t.push(2.0 * t[i] - t[i - 1] + next());
                }
            }
        }
        out.push(t);
    }
    Ok(out)
}

/// Z-normalized dataset with ids `0..count`.
pub fn generate(spec: &GeneratorSpec) -> Result<Vec<TimeSeries>> {
    generate_raw(spec)?
        .into_iter()
        .enumerate()
        .map(|(i, t)| TimeSeries::new(i as u64, z_normalize_values(&t)))
        .collect()
}

pub fn gen_rw1(count: usize, length: usize, seed: u64) -> Result<Vec<TimeSeries>> {
    generate(&GeneratorSpec {
        model: Model::Rw1,
        count,
        length,
        seed,
    })
}

pub fn gen_rw2(count: usize, length: usize, seed: u64) -> Result<Vec<TimeSeries>> {
    generate(&GeneratorSpec {
        model: Model::Rw2,
        count,
        length,
        seed,
    })
}

/// `(s - mean) / std` with the population standard deviation. Constant
/// input maps to zeros.
pub fn z_normalize_values(s: &[f64]) -> Vec<f64> {
    let n = s.len() as f64;
    let mean = s.iter().sum::<f64>() / n;
    let var = s.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std == 0.0 || !std.is_finite() {
        return vec![0.0; s.len()];
    }
    s.iter().map(|v| (v - mean) / std).collect()
}

pub fn z_normalize(s: &TimeSeries) -> TimeSeries {
    TimeSeries::new(s.id(), z_normalize_values(s.values())).expect("normalized values are finite")
}

/// `count` sequences spread round-robin over `groups` bundles. Each bundle
/// is a z-normalized random-walk prototype plus independent `N(0, noise^2)`
/// jitter per point.
pub fn gen_clustered(
    groups: usize,
    count: usize,
    length: usize,
    noise: f64,
    seed: u64,
) -> Result<Vec<TimeSeries>> {
    if groups < 1 {
        return Err(TwistError::Input("need at least one group".into()));
    }
    let prototypes = gen_rw1(groups, length, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    (0..count)
        .map(|i| {
            let proto = prototypes[i % groups].values();
            let values = proto
                .iter()
                .map(|&v| v + noise * rng.sample::<f64, _>(StandardNormal))
                .collect();
            TimeSeries::new(i as u64, values)
        })
        .collect()
}

/// One configuration of the five swept axes.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchPoint {
    pub count: usize,
    pub length: usize,
    /// Band radius as a fraction of the length.
    pub band: f64,
    pub k: usize,
    pub page_size: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axes {
    #[serde(default)]
    pub count: Vec<usize>,
    #[serde(default)]
    pub length: Vec<usize>,
    #[serde(default)]
    pub band: Vec<f64>,
    #[serde(default)]
    pub k: Vec<usize>,
    #[serde(default)]
    pub page_size: Vec<usize>,
}

/// A benchmark run: a base point plus axes varied one at a time.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSpec {
    pub model: Model,
    pub seed: u64,
    pub queries: usize,
    #[serde(default = "default_p")]
    pub p: u32,
    pub base: BenchPoint,
    #[serde(default)]
    pub axes: Axes,
}

fn default_p() -> u32 {
    2
}

impl BenchSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self =
            toml::from_str(text).map_err(|e| TwistError::Input(format!("bench spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    /// Desk-scale defaults over all five axes.
    pub fn desk_scale() -> Self {
        Self {
            model: Model::Rw1,
            seed: 1,
            queries: 20,
            p: 2,
            base: BenchPoint {
                count: 4096,
                length: 256,
                band: 0.10,
                k: 1,
                page_size: 128,
            },
            axes: Axes {
                count: vec![1024, 4096, 16384],
                length: vec![128, 256, 512],
                band: vec![0.05, 0.10, 0.20],
                k: vec![1, 5, 10],
                page_size: vec![16, 64, 128],
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.queries < 1 {
            return Err(TwistError::Input("queries must be at least 1".into()));
        }
        DistanceParams::new(self.p, true)?;
        for (_, _, point) in self.points() {
            if point.count < 1 || point.length < 2 || point.k < 1 || point.page_size < 1 {
                return Err(TwistError::Input(format!("invalid bench point {point:?}")));
            }
            if !(0.0..=1.0).contains(&point.band) {
                return Err(TwistError::Input(format!(
                    "band {} is outside [0, 1]",
                    point.band
                )));
            }
        }
        Ok(())
    }

    /// `(axis, value, point)` for every swept configuration; just the base
    /// point when no axis is given.
    pub fn points(&self) -> Vec<(&'static str, String, BenchPoint)> {
        let b = self.base;
        let mut out = Vec::new();
        for &v in &self.axes.count {
            out.push(("count", v.to_string(), BenchPoint { count: v, ..b }));
        }
        for &v in &self.axes.length {
            out.push(("length", v.to_string(), BenchPoint { length: v, ..b }));
        }
        for &v in &self.axes.band {
            out.push(("band", v.to_string(), BenchPoint { band: v, ..b }));
        }
        for &v in &self.axes.k {
            out.push(("k", v.to_string(), BenchPoint { k: v, ..b }));
        }
        for &v in &self.axes.page_size {
            out.push(("page_size", v.to_string(), BenchPoint { page_size: v, ..b }));
        }
        if out.is_empty() {
            out.push(("base", String::new(), b));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    TwistLbg,
    TwistLbgK,
    SeqScanLbKeogh,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::TwistLbg, Method::TwistLbgK, Method::SeqScanLbKeogh];

    pub fn name(self) -> &'static str {
        match self {
            Method::TwistLbg => "twist-lbg",
            Method::TwistLbgK => "twist-lbgk",
            Method::SeqScanLbKeogh => "seqscan-lbkeogh",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub axis: &'static str,
    pub axis_value: String,
    pub point: BenchPoint,
    pub method: Method,
    pub query_id: usize,
    pub build_ms: f64,
    pub wall_us: f64,
    pub dtw_evaluations: u64,
    pub lb_evaluations: u64,
    pub beta: u64,
    pub delta: u64,
    pub eta_sf5: f64,
    pub eta_sf10: f64,
    pub index_bytes: u64,
    pub data_bytes: u64,
}

pub const REPORT_HEADER: &str = "axis,axis_value,count,length,band,k,page_size,method,query_id,\
build_ms,wall_us,dtw_evals,lb_evals,beta,delta,eta_sf5,eta_sf10,index_bytes,data_bytes";

pub const SUMMARY_HEADER: &str = "axis,axis_value,method,queries,mean_wall_us,median_wall_us,\
mean_dtw_evals,mean_eta_sf5,mean_eta_sf10,index_data_ratio";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

impl BenchReport {
    pub fn write_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "{REPORT_HEADER}")?;
        for r in &self.rows {
            let p = r.point;
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{:.3},{:.3},{},{},{},{},{},{},{},{}",
                r.axis,
                r.axis_value,
                p.count,
                p.length,
                p.band,
                p.k,
                p.page_size,
                r.method.name(),
                r.query_id,
                r.build_ms,
                r.wall_us,
                r.dtw_evaluations,
                r.lb_evaluations,
                r.beta,
                r.delta,
                r.eta_sf5,
                r.eta_sf10,
                r.index_bytes,
                r.data_bytes,
            )?;
        }
        Ok(())
    }

    /// Mean and median per `(axis, value, method)`, in first-seen order.
    pub fn write_summary_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "{SUMMARY_HEADER}")?;
        let mut keys: Vec<(&str, &str, Method)> = Vec::new();
        let mut groups: HashMap<(&str, &str, Method), Vec<&BenchRow>> = HashMap::new();
        for r in &self.rows {
            let key = (r.axis, r.axis_value.as_str(), r.method);
            groups.entry(key).or_insert_with(|| {
                keys.push(key);
                Vec::new()
            });
            groups.get_mut(&key).unwrap().push(r);
        }
        for key in keys {
            let rows = &groups[&key];
            let col = |f: fn(&BenchRow) -> f64| rows.iter().map(|r| f(r)).collect::<Vec<_>>();
            let wall = col(|r| r.wall_us);
            writeln!(
                out,
                "{},{},{},{},{:.3},{:.3},{},{},{},{}",
                key.0,
                key.1,
                key.2.name(),
                rows.len(),
                mean(&wall),
                median(&wall),
                mean(&col(|r| r.dtw_evaluations as f64)),
                mean(&col(|r| r.eta_sf5)),
                mean(&col(|r| r.eta_sf10)),
                rows[0].index_bytes as f64 / rows[0].data_bytes as f64,
            )?;
        }
        Ok(())
    }
}

fn same_hits(a: &[Hit], b: &[Hit]) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| {
            x.sequence_id == y.sequence_id
                && (x.distance == y.distance
                    || (x.distance - y.distance).abs()
                        <= 1e-9 * x.distance.abs().max(y.distance.abs()))
        })
}

/// Runs every method on every query of every point, checking each answer
/// against an unfiltered scan. Any disagreement aborts the run with the
/// offending case in the error.
pub fn run_benchmark(spec: &BenchSpec) -> Result<BenchReport> {
    spec.validate()?;
    let params = DistanceParams::new(spec.p, true)?;
    let mut report = BenchReport::default();
    let mut datasets: HashMap<(usize, usize), (Vec<TimeSeries>, Vec<TimeSeries>)> = HashMap::new();

    for (axis, axis_value, point) in spec.points() {
        let (data, queries) = datasets
            .entry((point.count, point.length))
            .or_insert_with(|| {
                let mut all = generate(&GeneratorSpec {
                    model: spec.model,
                    count: point.count + spec.queries,
                    length: point.length,
                    seed: spec.seed,
                })
                .expect("validated spec");
                let queries = all.split_off(point.count);
                (all, queries)
            });

        let band = GlobalConstraint::sakoe_chiba(point.band, point.length)?;
        let mut config = IndexConfig::new(point.length, point.page_size, band.clone())?;
        config.params = params;
        let started = Instant::now();
        let index = TwistIndex::bulk_build(config, data.iter().cloned())?;
        let build_ms = started.elapsed().as_secs_f64() * 1e3;
        let index_bytes = esf_file_size(point.length, index.page_count());
        let data_bytes: u64 = index
            .pages()
            .map(|(_, p)| dsf_file_size(point.length, p.len()))
            .sum();

        for (query_id, q) in queries.iter().enumerate() {
            let oracle = scan_dataset(data, q, point.k, &band, &params, false)?;
            for method in Method::ALL {
                let started = Instant::now();
                let result: QueryResult = match method {
                    Method::TwistLbg => topk_lbg(&index, q, point.k)?,
                    Method::TwistLbgK => topk_lbgk(&index, q, point.k)?,
                    Method::SeqScanLbKeogh => scan_dataset(data, q, point.k, &band, &params, true)?,
                };
                let wall_us = started.elapsed().as_secs_f64() * 1e6;
                if !same_hits(&result.hits, &oracle.hits) {
                    return Err(TwistError::Invariant(format!(
                        "{} disagrees with brute force: model={} seed={} point={point:?} query={query_id} got={:?} expected={:?}",
                        method.name(),
                        spec.model,
                        spec.seed,
                        result.hits,
                        oracle.hits
                    )));
                }
                let (index_bytes, data_bytes) = match method {
                    Method::SeqScanLbKeogh => (0, dsf_file_size(point.length, data.len())),
                    _ => (index_bytes, data_bytes),
                };
                report.rows.push(BenchRow {
                    axis,
                    axis_value: axis_value.clone(),
                    point,
                    method,
                    query_id,
                    build_ms,
                    wall_us,
                    dtw_evaluations: result.dtw_evaluations,
                    lb_evaluations: result.lb_evaluations.total(),
                    beta: result.stats.candidate_sequences_read,
                    delta: result.stats.dsf_random_accesses,
                    eta_sf5: result.eta(5.0),
                    eta_sf10: result.eta(10.0),
                    index_bytes,
                    data_bytes,
                });
            }
        }
    }
    Ok(report)
}
