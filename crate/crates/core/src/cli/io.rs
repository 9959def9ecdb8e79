use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::CliError;
use crate::polytope::Polytope;

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io { path: path.to_owned(), source: e })?;
    serde_json::from_str(&text).map_err(|e| CliError::Parse {
        path: path.to_owned(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| CliError::Io { path: dir.to_owned(), source: e })?;
        }
    }
    fs::write(path, text).map_err(|e| CliError::Io { path: path.to_owned(), source: e })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("in-memory values serialize");
    text.push('\n');
    write_text(path, &text)
}

/// 17 significant digits, enough to round-trip every `f64`.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn csv_line(cells: impl IntoIterator<Item = String>) -> String {
    let mut s = cells.into_iter().collect::<Vec<_>>().join(",");
    s.push('\n');
    s
}

/// Vertices of a 2-D set, clipped to `clip` when the set is unbounded.
pub fn vertices_csv(sets: &[(String, &Polytope)], clip: &Polytope) -> Result<String, CliError> {
    let mut out = csv_line(["set", "vertex", "x0", "x1"].map(String::from));
    for (name, set) in sets {
        let bounded = if set.bounding_box().is_ok() { (*set).clone() } else { set.stack(clip)? };
        for (i, v) in bounded.vertices_2d()?.iter().enumerate() {
            let _ = write!(out, "{}", csv_line([name.clone(), i.to_string(), fmt_float(v[0]), fmt_float(v[1])]));
        }
    }
    Ok(out)
}

pub fn out_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}
