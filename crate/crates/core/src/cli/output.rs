//! CSV and JSON writers shared by the subcommands.

use std::f64::consts::LN_2;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::envs::MazeSpec;
use crate::error::{Error, Result};
use crate::model::{FiniteMdp, HistorySpace, MemoryPolicy};
use crate::oracle::sig12;

pub const POLICY_HEADER: [&str; 5] = ["t", "history", "state", "action", "probability"];
pub const TRADEOFF_HEADER: [&str; 11] =
    ["beta", "J", "I_nats", "I_bits", "total", "residual", "iterations", "converged", "best_seed", "flag", "error"];
pub const SNAPSHOT_HEADER: [&str; 4] = ["row", "col", "cell", "probability"];
pub const INFORMATION_HEADER: [&str; 3] = ["t", "I_nats", "I_bits"];
pub const ROUTES_HEADER: [&str; 5] = ["t", "route", "length", "cells", "mass"];
pub const VI_POLICY_HEADER: [&str; 4] = ["t", "state", "action", "cost_to_go"];

pub fn bits(nats: f64) -> f64 {
    nats / LN_2
}

pub(crate) fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse(format!("{other:?}")),
    }
}

/// Creates `dir` if needed and returns `dir/name`.
pub fn output_path(dir: &Path, name: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    Ok(dir.join(name))
}

pub fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(BufWriter::new(File::create(path)?)))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

/// Dense policy table, one row per `(t, history, state, action)` with `t`
/// counted from 1 and the history written as its controls joined by `:`
/// (oldest first, empty when there is none).
pub fn write_policy_csv(path: &Path, mdp: &FiniteMdp, policy: &MemoryPolicy) -> Result<()> {
    let space = HistorySpace::new(mdp, policy.degree())?;
    let mut w = csv_writer(path)?;
    w.write_record(POLICY_HEADER).map_err(csv_error)?;
    for t in 0..mdp.horizon() {
        let layout = space.layout(t);
        for h in 0..space.count(t) {
            let history = layout.decode(h).iter().map(usize::to_string).collect::<Vec<_>>().join(":");
            for x in 0..mdp.n_states(t) {
                for (u, &p) in policy.row(mdp, t, h, x).iter().enumerate() {
                    w.write_record([(t + 1).to_string(), history.clone(), x.to_string(), u.to_string(), sig12(p)])
                        .map_err(csv_error)?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// State distribution over the maze grid.
pub fn write_snapshot_csv(path: &Path, spec: &MazeSpec, probs: &[f64]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(SNAPSHOT_HEADER).map_err(csv_error)?;
    for (cell, &p) in probs.iter().enumerate() {
        let (row, col) = spec.coords(cell);
        w.write_record([row.to_string(), col.to_string(), cell.to_string(), sig12(p)]).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-step information usage with `t` counted from 1.
pub fn write_information_csv(path: &Path, terms: &[f64]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(INFORMATION_HEADER).map_err(csv_error)?;
    for (t, &i) in terms.iter().enumerate() {
        w.write_record([(t + 1).to_string(), sig12(i), sig12(bits(i))]).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}
