//! CSV trajectories and JSON reports.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use pbvp_core::linear::Trajectory;
use serde::Serialize;

use crate::error::CliError;

/// 17 significant digits.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Header `t,x1,y1,…,xN,yN`, one row per grid node.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let n = traj.n_modes();
    let mut out = String::from("t");
    for k in 1..=n {
        let _ = write!(out, ",x{k},y{k}");
    }
    out.push('\n');
    for (j, s) in traj.states.iter().enumerate() {
        out.push_str(&fmt_num(traj.grid.node(j)));
        for p in s.pairs() {
            let _ = write!(out, ",{},{}", fmt_num(p.x), fmt_num(p.y));
        }
        out.push('\n');
    }
    out
}

/// Rows of already formatted cells under `header`.
pub fn table_csv(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    out
}

/// Output directory that records the names of the files it writes.
pub struct OutDir {
    root: PathBuf,
    pub files: Vec<String>,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|source| CliError::Io { path: root.to_path_buf(), source })?;
        Ok(Self { root: root.to_path_buf(), files: Vec::new() })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.root.join(name);
        fs::write(&path, contents).map_err(|source| CliError::Io { path, source })?;
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        Ok(())
    }

    pub fn trajectory(&mut self, name: &str, traj: &Trajectory) -> Result<(), CliError> {
        self.write(name, &trajectory_csv(traj))
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value).expect("report serializes");
        self.write(name, &(text + "\n"))
    }
}
