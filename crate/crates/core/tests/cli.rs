use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use twist::store::{self, EsfRecord};

fn twist(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_twist"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = twist(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// `query_id,rank,sequence_id,distance` of every row.
fn hit_columns(csv: &str) -> Vec<String> {
    csv.lines()
        .skip(1)
        .map(|l| l.split(',').take(4).collect::<Vec<_>>().join(","))
        .collect()
}

#[test]
fn gen_build_query_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.bin");
    let queries = dir.path().join("queries.bin");
    let index = dir.path().join("index");
    ok(&[
        "gen",
        "--model",
        "rw2",
        "--count",
        "128",
        "--length",
        "32",
        "--seed",
        "3",
        "--out",
        p(&data),
    ]);
    ok(&[
        "gen",
        "--model",
        "rw2",
        "--count",
        "4",
        "--length",
        "32",
        "--seed",
        "4",
        "--out",
        p(&queries),
    ]);
    let meta = fs::read_to_string(dir.path().join("data.bin.meta")).unwrap();
    assert!(
        meta.contains("model = \"rw2\"") && meta.contains("seed = 3"),
        "{meta}"
    );

    ok(&[
        "build",
        "--dataset",
        p(&data),
        "--index-dir",
        p(&index),
        "--page-size",
        "16",
        "--band-pct",
        "10",
    ]);
    assert!(ok(&["verify", "--index-dir", p(&index)]).starts_with("ok:"));

    let lbg = ok(&[
        "query",
        "--index-dir",
        p(&index),
        "--queries",
        p(&queries),
        "--k",
        "5",
        "--method",
        "lbg",
    ]);
    let lbgk = ok(&[
        "query",
        "--index-dir",
        p(&index),
        "--queries",
        p(&queries),
        "--k",
        "5",
        "--method",
        "lbgk",
    ]);
    let scan = ok(&[
        "query",
        "--index-dir",
        p(&index),
        "--queries",
        p(&queries),
        "--k",
        "5",
        "--method",
        "scan",
    ]);
    assert_eq!(lbg.lines().next().unwrap(), twist::query::CSV_HEADER);
    assert_eq!(hit_columns(&lbg).len(), 4 * 5);
    assert_eq!(hit_columns(&lbg), hit_columns(&scan));
    assert_eq!(hit_columns(&lbgk), hit_columns(&scan));

    let range = ok(&[
        "query",
        "--index-dir",
        p(&index),
        "--queries",
        p(&queries),
        "--epsilon",
        "6",
        "--method",
        "lbgk",
    ]);
    let range_scan = ok(&[
        "query",
        "--index-dir",
        p(&index),
        "--queries",
        p(&queries),
        "--epsilon",
        "6",
        "--method",
        "scan",
    ]);
    assert_eq!(hit_columns(&range), hit_columns(&range_scan));
}

#[test]
fn insert_and_delete_keep_the_index_sound() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.bin");
    let more = dir.path().join("more.bin");
    let index = dir.path().join("index");
    ok(&[
        "gen",
        "--count",
        "40",
        "--length",
        "16",
        "--seed",
        "1",
        "--out",
        p(&data),
    ]);
    ok(&[
        "build",
        "--dataset",
        p(&data),
        "--index-dir",
        p(&index),
        "--page-size",
        "8",
    ]);

    // Ids 0..40 are taken, so re-inserting the same file is rejected.
    let dup = twist(&["insert", "--index-dir", p(&index), "--input", p(&data)]);
    assert_eq!(dup.status.code(), Some(2));

    let shifted: Vec<_> = store::read_dataset(&data)
        .unwrap()
        .into_iter()
        .map(|s| {
            twist::TimeSeries::new(s.id() + 1000, s.values().iter().map(|v| v + 0.5).collect())
                .unwrap()
        })
        .collect();
    store::write_dataset(&more, &shifted).unwrap();
    ok(&["insert", "--index-dir", p(&index), "--input", p(&more)]);
    ok(&[
        "delete",
        "--index-dir",
        p(&index),
        "--id",
        "3",
        "--id",
        "1005",
        "--policy",
        "eager",
    ]);
    ok(&["delete", "--index-dir", p(&index), "--id", "7"]);
    assert!(ok(&["verify", "--index-dir", p(&index)]).contains("77 sequences"));

    let missing = twist(&["delete", "--index-dir", p(&index), "--id", "3"]);
    assert_eq!(missing.status.code(), Some(3));
}

#[test]
fn verify_detects_a_corrupted_envelope() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.bin");
    let index = dir.path().join("index");
    ok(&[
        "gen",
        "--count",
        "30",
        "--length",
        "12",
        "--seed",
        "9",
        "--out",
        p(&data),
    ]);
    ok(&[
        "build",
        "--dataset",
        p(&data),
        "--index-dir",
        p(&index),
        "--page-size",
        "8",
    ]);

    let (n, mut records): (usize, Vec<EsfRecord>) = store::read_esf(&index).unwrap();
    let page = store::read_dsf(&index, records[0].page_id).unwrap();
    let member_min = page
        .sequences
        .iter()
        .map(|s| s.values()[4])
        .fold(f64::INFINITY, f64::min);
    // Push the lower bound above a member's value at one position.
    records[0].envelope.lower[4] = member_min + 0.25;
    store::write_esf(&index, n, &records).unwrap();

    let out = twist(&["verify", "--index-dir", p(&index)]);
    assert_eq!(out.status.code(), Some(5));
    assert!(String::from_utf8_lossy(&out.stdout).contains("does not contain"));
}

#[test]
fn error_categories_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope");
    assert_eq!(
        twist(&["verify", "--index-dir", p(&missing)]).status.code(),
        Some(3)
    );

    let garbage = dir.path().join("garbage.bin");
    fs::write(&garbage, b"not a dataset").unwrap();
    let out = twist(&[
        "build",
        "--dataset",
        p(&garbage),
        "--index-dir",
        p(&dir.path().join("i")),
    ]);
    assert_eq!(out.status.code(), Some(4));

    let data = dir.path().join("data.bin");
    ok(&["gen", "--count", "4", "--length", "8", "--out", p(&data)]);
    let out = twist(&[
        "build",
        "--dataset",
        p(&data),
        "--index-dir",
        p(&dir.path().join("i")),
        "--band-pct",
        "150",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let out = twist(&["gen", "--count", "0", "--length", "8", "--out", p(&data)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bench_with_a_small_spec() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.toml");
    let summary = dir.path().join("summary.csv");
    fs::write(
        &spec,
        "model = \"rw1\"\nseed = 2\nqueries = 2\n[base]\ncount = 50\nlength = 16\nband = 0.1\nk = 1\npage_size = 8\n[axes]\nk = [1, 3]\n",
    )
    .unwrap();
    let csv = ok(&["bench", "--spec", p(&spec), "--summary", p(&summary)]);
    assert_eq!(csv.lines().count(), 1 + 2 * 2 * 3);
    assert_eq!(
        fs::read_to_string(&summary).unwrap().lines().count(),
        1 + 2 * 3
    );
}
