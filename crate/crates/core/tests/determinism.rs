use std::fs;
use std::path::Path;

fn run(dir: &Path, args: &[&str]) -> i32 {
    let mut argv = vec!["franklin", "--out"];
    let out = dir.to_str().unwrap();
    argv.push(out);
    argv.extend_from_slice(args);
    franklin::cli::run(argv)
}

fn csvs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn same_seed_gives_identical_csv() {
    let commands: [&[&str]; 5] = [
        &["--seed", "9", "verify", "x5", "--k", "5", "--trials", "30"],
        &["--seed", "9", "verify", "x1", "--trials", "20"],
        &["--seed", "9", "verify", "x10", "--functions", "6"],
        &["--seed", "9", "estimate-an", "--basis", "haar", "--mode", "sng", "--n-max", "32"],
        &["--seed", "9", "demo-convergence", "--blocks", "5", "--system", "rearranged"],
    ];
    for cmd in commands {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        run(a.path(), cmd);
        run(b.path(), cmd);
        let (ca, cb) = (csvs(a.path()), csvs(b.path()));
        assert!(!ca.is_empty(), "{cmd:?} wrote no CSV");
        assert_eq!(ca, cb, "{cmd:?}");
    }
}

#[test]
fn different_seed_changes_random_tables() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run(a.path(), &["--seed", "1", "verify", "x5", "--k", "4", "--trials", "30"]);
    run(b.path(), &["--seed", "2", "verify", "x5", "--k", "4", "--trials", "30"]);
    assert_ne!(csvs(a.path()), csvs(b.path()));
}
