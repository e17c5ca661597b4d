//! Program corpora: `name.prog` files with sibling `name.points` files.
//!
//! A points line is `x1,x2,...` optionally followed by `| v1,v2,...`.
//! Components are decimals or `p/q` rationals; `#` starts a comment.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::dsl::{parse_program_with, ParseError, ParseOptions, ParsedProgram};
use crate::library::LibraryRegistry;
use crate::scalar::{parse_rational, Scalar};

/// A query point with an optional direction.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryPoint {
    pub x: Vec<f64>,
    pub v: Option<Vec<f64>>,
    /// 1-based line in the points file, 0 when not read from a file.
    pub line: usize,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: ParseError },
    #[error("{path}, line {line}: {source}")]
    Points { path: PathBuf, line: usize, source: PointsError },
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum PointsError {
    #[error("{0}")]
    Syntax(String),
    #[error("{what} has {found} component(s), expected {expected}")]
    Dimension { what: &'static str, expected: usize, found: usize },
}

#[derive(Clone, Debug)]
pub struct CorpusEntry {
    /// File stem of the program.
    pub name: String,
    pub path: PathBuf,
    pub source: String,
    pub parsed: ParsedProgram,
    pub points: Vec<QueryPoint>,
}

impl CorpusEntry {
    pub fn input_arity(&self) -> usize {
        self.parsed.program.input_arity
    }

    pub fn is_smooth(&self) -> bool {
        self.parsed.program.is_smooth()
    }
}

/// Parses one number: a decimal literal or `p/q`.
pub fn parse_number(s: &str) -> Option<f64> {
    let s = s.trim();
    if s.contains('/') {
        return parse_rational(s).map(|r| r.to_f64()).filter(|x| x.is_finite());
    }
    s.parse::<f64>().ok().filter(|x| x.is_finite())
}

/// Parses a comma-separated vector.
pub fn parse_vector(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| parse_number(t).ok_or_else(|| format!("invalid number {:?}", t.trim())))
        .collect()
}

/// Parses a points file for a program with `dim` inputs. Errors carry the
/// 1-based line.
pub fn parse_points(text: &str, dim: usize) -> Result<Vec<QueryPoint>, (usize, PointsError)> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (xs, vs) = match line.split_once('|') {
            Some((a, b)) => (a, Some(b)),
            None => (line, None),
        };
        let syntax = |m| (i + 1, PointsError::Syntax(m));
        let x = parse_vector(xs).map_err(syntax)?;
        if x.len() != dim {
            return Err((i + 1, PointsError::Dimension { what: "point", expected: dim, found: x.len() }));
        }
        let v = match vs {
            Some(vs) => {
                let v = parse_vector(vs).map_err(syntax)?;
                if v.len() != dim {
                    return Err((i + 1, PointsError::Dimension { what: "direction", expected: dim, found: v.len() }));
                }
                Some(v)
            }
            None => None,
        };
        out.push(QueryPoint { x, v, line: i + 1 });
    }
    Ok(out)
}

fn read(path: &Path) -> Result<String, CorpusError> {
    fs::read_to_string(path).map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })
}

/// Loads one program and its sibling points file, if any.
pub fn load_entry(
    path: &Path,
    registry: &LibraryRegistry,
    opts: &ParseOptions,
) -> Result<CorpusEntry, CorpusError> {
    let source = read(path)?;
    let parsed = parse_program_with(&source, registry, opts)
        .map_err(|source| CorpusError::Parse { path: path.to_path_buf(), source })?;
    let points_path = path.with_extension("points");
    let points = if points_path.exists() {
        parse_points(&read(&points_path)?, parsed.program.input_arity).map_err(|(line, source)| {
            CorpusError::Points { path: points_path.clone(), line, source }
        })?
    } else {
        Vec::new()
    };
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(CorpusEntry { name, path: path.to_path_buf(), source, parsed, points })
}

/// Every `*.prog` directly inside `dir`, sorted by name.
pub fn load_corpus(
    dir: &Path,
    registry: &LibraryRegistry,
    opts: &ParseOptions,
) -> Result<Vec<CorpusEntry>, CorpusError> {
    let entries = fs::read_dir(dir).map_err(|source| CorpusError::Io { path: dir.to_path_buf(), source })?;
    let mut paths = Vec::new();
    for e in entries {
        let e = e.map_err(|source| CorpusError::Io { path: dir.to_path_buf(), source })?;
        let p = e.path();
        if p.is_file() && p.extension().is_some_and(|x| x == "prog") {
            paths.push(p);
        }
    }
    paths.sort();
    paths.iter().map(|p| load_entry(p, registry, opts)).collect()
}
