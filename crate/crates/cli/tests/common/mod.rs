#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lasso_hmm::data::{write_csv, PenaltyRecord};

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lasso-hmm"))
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

pub fn run_ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn write_records(path: &Path, recs: &[PenaltyRecord]) {
    write_csv(recs, std::fs::File::create(path).unwrap()).unwrap();
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Header and rows of a CSV file.
pub fn read_table(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

pub fn column(path: &Path, name: &str) -> Vec<String> {
    let (h, rows) = read_table(path);
    let j = h.iter().position(|c| c == name).unwrap_or_else(|| panic!("no column {name}"));
    rows.into_iter().map(|r| r[j].clone()).collect()
}

/// File contents with wall-clock fields blanked: the `seconds` column of
/// CSV tables and `wall_time_seconds` in the manifest.
pub fn masked(path: &Path) -> Vec<u8> {
    let bytes = std::fs::read(path).unwrap();
    let name = path.file_name().unwrap().to_string_lossy();
    if name == "manifest.toml" {
        let text = String::from_utf8(bytes).unwrap();
        return text
            .lines()
            .filter(|l| !l.starts_with("wall_time_seconds"))
            .collect::<Vec<_>>()
            .join("\n")
            .into_bytes();
    }
    if name.ends_with(".csv") {
        let (h, rows) = read_table(path);
        if let Some(j) = h.iter().position(|c| c == "seconds") {
            let mut out = h.join(",");
            for mut r in rows {
                r[j].clear();
                out.push('\n');
                out.push_str(&r.join(","));
            }
            return out.into_bytes();
        }
    }
    bytes
}

pub fn sorted_files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v
}

/// Names of files whose masked contents differ between two output
/// directories, plus any file present in only one of them.
pub fn differing_files(a: &Path, b: &Path) -> Vec<String> {
    let fa = sorted_files(a);
    let fb = sorted_files(b);
    let names = |v: &[PathBuf]| -> Vec<String> {
        v.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect()
    };
    let (na, nb) = (names(&fa), names(&fb));
    if na != nb {
        return vec![format!("file sets differ: {na:?} vs {nb:?}")];
    }
    fa.iter()
        .zip(&fb)
        .filter(|(x, y)| masked(x) != masked(y))
        .map(|(x, _)| x.file_name().unwrap().to_string_lossy().into_owned())
        .collect()
}
