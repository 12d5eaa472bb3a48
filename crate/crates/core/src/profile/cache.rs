//! Versioned text cache for [`ProfileTable`]s.
//!
//! ```text
//! segkernel-profile v1
//! T N newton_tol A B c_fit
//! x v1 dv1 v2 dv2        (N lines)
//! ```
//!
//! Numbers are written with 17 significant digits, so a round trip through
//! the file is bit-exact.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{extract_asymptotics, solve_profile, ProfileTable};
use crate::error::{Error, Result};

pub const HEADER: &str = "segkernel-profile v1";

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn to_string(p: &ProfileTable) -> String {
    let mut out = String::with_capacity(p.len() * 120);
    out.push_str(HEADER);
    out.push('\n');
    let a = &p.asymptotics;
    let _ = writeln!(
        out,
        "{} {} {} {} {} {}",
        num(p.half_length),
        p.len(),
        num(p.newton_tol),
        num(a.slope),
        num(a.intercept),
        num(a.c_fit)
    );
    for j in 0..p.len() {
        let _ = writeln!(
            out,
            "{} {} {} {} {}",
            num(p.nodes[j]),
            num(p.v1[j]),
            num(p.dv1[j]),
            num(p.v2[j]),
            num(p.dv2[j])
        );
    }
    out
}

fn parse_f64(tok: Option<&str>, what: &str, line: usize) -> Result<f64> {
    let tok = tok.ok_or_else(|| Error::Cache(format!("line {line}: missing {what}")))?;
    tok.parse()
        .map_err(|_| Error::Cache(format!("line {line}: bad {what} '{tok}'")))
}

pub fn from_str(text: &str) -> Result<ProfileTable> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == HEADER => {}
        other => {
            return Err(Error::Cache(format!(
                "expected header '{HEADER}', found {other:?}"
            )))
        }
    }
    let meta = lines
        .next()
        .ok_or_else(|| Error::Cache("missing parameter line".into()))?;
    let mut it = meta.split_whitespace();
    let half_length = parse_f64(it.next(), "T", 2)?;
    let n: usize = it
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::Cache("line 2: bad N".into()))?;
    let newton_tol = parse_f64(it.next(), "newton_tol", 2)?;
    let slope = parse_f64(it.next(), "A", 2)?;
    let intercept = parse_f64(it.next(), "B", 2)?;
    let c_fit = parse_f64(it.next(), "c_fit", 2)?;

    let mut cols: [Vec<f64>; 5] = Default::default();
    for (k, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let mut it = line.split_whitespace();
        for (c, name) in cols.iter_mut().zip(["x", "v1", "dv1", "v2", "dv2"]) {
            c.push(parse_f64(it.next(), name, k + 3)?);
        }
    }
    if cols[0].len() != n {
        return Err(Error::Cache(format!(
            "expected {n} rows, found {}",
            cols[0].len()
        )));
    }
    let [nodes, v1, dv1, v2, dv2] = cols;
    let mut table = ProfileTable {
        half_length,
        newton_tol,
        nodes,
        v1,
        dv1,
        v2,
        dv2,
        asymptotics: super::AsymptoticConstants {
            slope,
            intercept,
            c_fit,
            fit_residual: 0.0,
        },
    };
    // fit_residual is not stored; recompute it on the default window
    let fit = extract_asymptotics(&table, half_length / 2.0, half_length)?;
    table.asymptotics.fit_residual = fit.fit_residual;
    Ok(table)
}

/// File name used for a given `(T, N, newton_tol)` key.
pub fn file_name(half_length: f64, nodes: usize, newton_tol: f64) -> String {
    format!("profile_T{half_length}_N{nodes}_tol{newton_tol:e}.txt")
}

pub fn write(p: &ProfileTable, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, to_string(p))?;
    Ok(())
}

pub fn read(path: &Path) -> Result<ProfileTable> {
    from_str(&fs::read_to_string(path)?)
}

/// Loads the table keyed by `(T, N, newton_tol)` from `dir`, solving and
/// persisting it on a miss. Returns the table and the cache path.
pub fn load_or_solve(
    dir: &Path,
    half_length: f64,
    nodes: usize,
    newton_tol: f64,
) -> Result<(ProfileTable, PathBuf)> {
    let path = dir.join(file_name(half_length, nodes, newton_tol));
    if path.exists() {
        if let Ok(p) = read(&path) {
            if p.len() == nodes && p.half_length == half_length && p.newton_tol == newton_tol {
                return Ok((p, path));
            }
        }
    }
    let p = solve_profile(half_length, nodes, newton_tol)?;
    write(&p, &path)?;
    Ok((p, path))
}
