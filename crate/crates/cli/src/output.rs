//! CSV and JSON emission.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use nhgeo_core::integrate::Trajectory;
use serde::Serialize;

use crate::CliError;

/// Shortest decimal string that parses back to the same `f64`.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

pub fn trajectory_header(coords: &[String], n: usize, l: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend(coords.iter().cloned());
    h.extend((1..=n).map(|i| format!("alpha{i}")));
    h.extend((1..=l).map(|a| format!("nu{a}")));
    h
}

pub fn trajectory_csv(traj: &Trajectory, coords: &[String], n: usize, l: usize) -> String {
    let mut s = trajectory_header(coords, n, l).join(",");
    s.push('\n');
    for (t, st) in traj.times.iter().zip(&traj.states) {
        s.push_str(&num(*t));
        for v in st.x.iter().chain(&st.alpha).chain(&st.nu) {
            s.push(',');
            s.push_str(&num(*v));
        }
        s.push('\n');
    }
    s
}

/// Two-column table.
pub fn pairs_csv(head: [&str; 2], rows: impl IntoIterator<Item = (f64, f64)>) -> String {
    let mut s = format!("{},{}\n", head[0], head[1]);
    for (a, b) in rows {
        let _ = writeln!(s, "{},{}", num(a), num(b));
    }
    s
}

pub fn json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report serializes");
    s.push('\n');
    s
}

pub fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Writes to `path`, or stdout when absent.
pub fn emit(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Io(format!("cannot write {}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).and_then(|_| out.flush()).map_err(|e| CliError::Io(e.to_string()))
        }
    }
}
