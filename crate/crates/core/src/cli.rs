//! Command-line front end.
//!
//! Exit codes: 0 success, 2 invalid input, 3 not found, 4 I/O or corrupt
//! file, 5 invariant violation.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::bench::{self, BenchSpec, DatasetMeta, GeneratorSpec, Model};
use crate::error::{ErrorKind, Result, TwistError};
use crate::index::{verify_dir, TwistIndex};
use crate::query::{self, QueryResult, CSV_HEADER};
use crate::series::{DistanceParams, GlobalConstraint, SequenceId};
use crate::store::{self, DeletionPolicy, DiskIndex, IndexConfig, PageSource};

#[derive(Debug, Parser)]
#[command(
    name = "twist",
    version,
    about = "Exact DTW similarity search over a grouped-envelope index"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a z-normalized random-walk dataset.
    Gen(GenArgs),
    /// Build an index directory from a dataset file.
    Build(BuildArgs),
    /// Insert the sequences of a dataset file into an index.
    Insert(InsertArgs),
    /// Delete sequences by id.
    Delete(DeleteArgs),
    /// Run top-k or range queries; CSV on standard output.
    Query(QueryArgs),
    /// Run a benchmark sweep; CSV on standard output.
    Bench(BenchArgs),
    /// Audit an index directory.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, value_enum, default_value = "rw1")]
    pub model: ModelArg,
    #[arg(long)]
    pub count: usize,
    #[arg(long)]
    pub length: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Dataset file to write; `<out>.meta` records the generator.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModelArg {
    Rw1,
    Rw2,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PolicyArg {
    Eager,
    Lazy,
}

impl From<PolicyArg> for DeletionPolicy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Eager => DeletionPolicy::Eager,
            PolicyArg::Lazy => DeletionPolicy::Lazy,
        }
    }
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub index_dir: PathBuf,
    /// Maximum sequences per data page.
    #[arg(long, default_value_t = 128)]
    pub page_size: usize,
    /// Warping band radius as a percentage of the sequence length.
    #[arg(long, default_value_t = 10.0)]
    pub band_pct: f64,
    /// Comma-separated segment sizes, coarsest first.
    #[arg(long, value_delimiter = ',')]
    pub ladder: Option<Vec<usize>>,
    #[arg(long, default_value_t = 2)]
    pub p: u32,
    /// Report unrooted accumulations instead of L_p distances.
    #[arg(long)]
    pub no_root: bool,
    /// Default deletion policy stored in the manifest.
    #[arg(long, value_enum, default_value = "lazy")]
    pub policy: PolicyArg,
}

#[derive(Debug, Args)]
pub struct InsertArgs {
    #[arg(long)]
    pub index_dir: PathBuf,
    /// Dataset file holding the sequences to insert.
    #[arg(long)]
    pub input: PathBuf,
}

#[derive(Debug, Args)]
pub struct DeleteArgs {
    #[arg(long)]
    pub index_dir: PathBuf,
    #[arg(long = "id", required = true)]
    pub ids: Vec<SequenceId>,
    /// Overrides the manifest's deletion policy.
    #[arg(long, value_enum)]
    pub policy: Option<PolicyArg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Lbg,
    Lbgk,
    Scan,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[arg(long)]
    pub index_dir: PathBuf,
    /// Dataset file of query sequences; their ids become query ids.
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long, conflicts_with = "epsilon")]
    pub k: Option<usize>,
    /// Range radius; returns every sequence within this distance.
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long, value_enum, default_value = "lbg")]
    pub method: MethodArg,
    /// Also report modelled page accesses at this speed-up factor on stderr.
    #[arg(long)]
    pub sf: Option<f64>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// TOML spec; the desk-scale sweep when omitted.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Where to write the per-configuration summary CSV.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub index_dir: PathBuf,
}

pub fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Input => 2,
        ErrorKind::NotFound => 3,
        ErrorKind::Io => 4,
        ErrorKind::Invariant => 5,
    }
}

/// Parses the process arguments, runs the command and maps errors to exit
/// codes.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(a) => cmd_gen(&a),
        Command::Build(a) => cmd_build(&a),
        Command::Insert(a) => cmd_insert(&a),
        Command::Delete(a) => cmd_delete(&a),
        Command::Query(a) => cmd_query(&a),
        Command::Bench(a) => cmd_bench(&a),
        Command::Verify(a) => cmd_verify(&a),
    }
}

type QueryFn = dyn Fn(&DiskIndex, &crate::TimeSeries) -> Result<QueryResult>;

fn stdout_error(e: io::Error) -> TwistError {
    TwistError::io("<stdout>", e)
}

pub fn cmd_gen(a: &GenArgs) -> Result<()> {
    let spec = GeneratorSpec {
        model: match a.model {
            ModelArg::Rw1 => Model::Rw1,
            ModelArg::Rw2 => Model::Rw2,
        },
        count: a.count,
        length: a.length,
        seed: a.seed,
    };
    let data = bench::generate(&spec)?;
    store::write_dataset(&a.out, &data)?;
    let mut meta_path = a.out.clone().into_os_string();
    meta_path.push(".meta");
    let meta_path = PathBuf::from(meta_path);
    fs::write(&meta_path, DatasetMeta::new(spec).to_toml())
        .map_err(|e| TwistError::io(&meta_path, e))
}

pub fn cmd_build(a: &BuildArgs) -> Result<()> {
    if !(0.0..=100.0).contains(&a.band_pct) {
        return Err(TwistError::Input(format!(
            "--band-pct must lie in [0, 100], got {}",
            a.band_pct
        )));
    }
    let data = store::read_dataset(&a.dataset)?;
    let n = data
        .first()
        .map(|s| s.len())
        .ok_or_else(|| TwistError::Input(format!("{} holds no sequences", a.dataset.display())))?;
    let mut config = IndexConfig::new(
        n,
        a.page_size,
        GlobalConstraint::sakoe_chiba(a.band_pct / 100.0, n)?,
    )?;
    config.params = DistanceParams::new(a.p, !a.no_root)?;
    config.deletion_policy = a.policy.into();
    if let Some(ladder) = &a.ladder {
        config.ladder = ladder.clone();
    }
    config.validate()?;
    let index = TwistIndex::bulk_build(config, data)?;
    index.save(&a.index_dir)
}

pub fn cmd_insert(a: &InsertArgs) -> Result<()> {
    let mut index = TwistIndex::open(&a.index_dir)?;
    for s in store::read_dataset(&a.input)? {
        index.insert(s)?;
    }
    index.save(&a.index_dir)
}

pub fn cmd_delete(a: &DeleteArgs) -> Result<()> {
    let mut index = TwistIndex::open(&a.index_dir)?;
    let policy = a.policy.map_or(index.config().deletion_policy, Into::into);
    for &id in &a.ids {
        index.delete(id, policy)?;
    }
    index.save(&a.index_dir)
}

pub fn cmd_query(a: &QueryArgs) -> Result<()> {
    if let Some(sf) = a.sf {
        if !(sf > 0.0 && sf.is_finite()) {
            return Err(TwistError::Input(format!(
                "--sf must be positive, got {sf}"
            )));
        }
    }
    if a.k == Some(0) {
        return Err(TwistError::Input("--k must be at least 1".into()));
    }
    let run: Box<QueryFn> = match (a.k, a.epsilon) {
        (Some(_), Some(_)) => unreachable!("clap rejects --k with --epsilon"),
        (None, None) => {
            return Err(TwistError::Input(
                "one of --k or --epsilon is required".into(),
            ))
        }
        (Some(k), None) => match a.method {
            MethodArg::Lbg => Box::new(move |i, q| query::topk_lbg(i, q, k)),
            MethodArg::Lbgk => Box::new(move |i, q| query::topk_lbgk(i, q, k)),
            MethodArg::Scan => Box::new(move |i, q| query::scan_index(i, q, k, false)),
        },
        (None, Some(eps)) => match a.method {
            MethodArg::Lbg => {
                return Err(TwistError::Input(
                    "range queries support --method lbgk or scan".into(),
                ))
            }
            MethodArg::Lbgk => Box::new(move |i, q| query::range_query(i, q, eps)),
            MethodArg::Scan => Box::new(move |i, q| scan_range(i, q, eps)),
        },
    };
    let index = DiskIndex::open(&a.index_dir)?;
    let queries = store::read_dataset(&a.queries)?;
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    writeln!(out, "{CSV_HEADER}").map_err(stdout_error)?;
    for q in &queries {
        let result = run(&index, q)?;
        query::write_csv(&mut out, q.id(), &result).map_err(stdout_error)?;
        if let Some(sf) = a.sf {
            eprintln!("query {}: eta(sf={sf}) = {}", q.id(), result.eta(sf));
        }
    }
    out.flush().map_err(stdout_error)
}

/// Brute-force range search used as the `scan` method for `--epsilon`.
fn scan_range(index: &DiskIndex, q: &crate::TimeSeries, epsilon: f64) -> Result<QueryResult> {
    if epsilon.is_nan() || epsilon < 0.0 {
        return Err(TwistError::Input(format!(
            "epsilon must be non-negative, got {epsilon}"
        )));
    }
    let total: usize = index
        .esf()
        .iter()
        .map(|r| r.envelope.member_count as usize)
        .sum();
    let mut result = query::scan_index(index, q, total.max(1), false)?;
    result.hits.retain(|h| h.distance <= epsilon);
    Ok(result)
}

pub fn cmd_bench(a: &BenchArgs) -> Result<()> {
    let spec = match &a.spec {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| TwistError::io(path, e))?;
            BenchSpec::from_toml(&text)?
        }
        None => BenchSpec::desk_scale(),
    };
    let report = bench::run_benchmark(&spec)?;
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    report.write_csv(&mut out).map_err(stdout_error)?;
    out.flush().map_err(stdout_error)?;
    if let Some(path) = &a.summary {
        let mut buf = Vec::new();
        report.write_summary_csv(&mut buf).map_err(stdout_error)?;
        fs::write(path, buf).map_err(|e| TwistError::io(path, e))?;
    }
    Ok(())
}

pub fn cmd_verify(a: &VerifyArgs) -> Result<()> {
    let violations = verify_dir(&a.index_dir)?;
    if violations.is_empty() {
        let index = DiskIndex::open(&a.index_dir)?;
        let sequences: u64 = index
            .esf()
            .iter()
            .map(|r| u64::from(r.envelope.member_count))
            .sum();
        println!("ok: {} pages, {sequences} sequences", index.esf().len());
        return Ok(());
    }
    for v in &violations {
        println!("violation: {v}");
    }
    Err(TwistError::Invariant(format!(
        "{} violation(s) in {}",
        violations.len(),
        a.index_dir.display()
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(TwistError::Input("x".into()).kind()), 2);
        assert_eq!(exit_code(TwistError::NotFound("x".into()).kind()), 3);
        assert_eq!(exit_code(TwistError::format("x", "y").kind()), 4);
        assert_eq!(exit_code(TwistError::Invariant("x".into()).kind()), 5);
    }

    #[test]
    fn flags_parse() {
        let cli = Cli::try_parse_from([
            "twist",
            "build",
            "--dataset",
            "d",
            "--index-dir",
            "i",
            "--page-size",
            "64",
            "--band-pct",
            "5",
            "--ladder",
            "8,2",
            "--p",
            "1",
            "--policy",
            "eager",
        ])
        .unwrap();
        let Command::Build(b) = cli.command else {
            panic!()
        };
        assert_eq!(b.ladder, Some(vec![8, 2]));
        assert_eq!(b.page_size, 64);
        assert!(Cli::try_parse_from([
            "twist",
            "query",
            "--index-dir",
            "i",
            "--queries",
            "q",
            "--k",
            "1",
            "--epsilon",
            "2"
        ])
        .is_err());
    }
}
