//! Text file formats and atomic file writes.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{FundamentalMatrix, Vec2};
use crate::irls::MatchSet;
use crate::matching::FeatureSet;

/// Writes through a temporary file in the target directory and renames it
/// into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Reads a text file. A missing file is an input error rather than an I/O
/// failure.
pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::Input(format!("missing input file {}", path.display()))
        } else {
            Error::io(path, e)
        }
    })
}

fn parse_f64(tok: &str, what: &str, line: usize) -> Result<f64> {
    let v: f64 = tok
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("line {line}: bad {what} '{tok}'")))?;
    if !v.is_finite() {
        return Err(Error::Parse(format!("line {line}: non-finite {what}")));
    }
    Ok(v)
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

/// Three lines of three whitespace-separated numbers, row-major.
pub fn parse_fundamental(text: &str) -> Result<FundamentalMatrix> {
    let mut rows = Vec::new();
    for (ln, line) in content_lines(text) {
        let vals = line
            .split_whitespace()
            .map(|t| parse_f64(t, "matrix entry", ln))
            .collect::<Result<Vec<_>>>()?;
        if vals.len() != 3 {
            return Err(Error::Parse(format!("line {ln}: expected 3 entries, got {}", vals.len())));
        }
        rows.push([vals[0], vals[1], vals[2]]);
    }
    if rows.len() != 3 {
        return Err(Error::Parse(format!("expected 3 matrix rows, got {}", rows.len())));
    }
    FundamentalMatrix::from_rows([rows[0], rows[1], rows[2]])
}

pub fn format_fundamental(f: &FundamentalMatrix) -> String {
    f.rows()
        .iter()
        .map(|r| format!("{} {} {}\n", r[0], r[1], r[2]))
        .collect()
}

pub const MATCH_HEADER: &str = "x1,y1,x2,y2";

pub fn parse_matches(text: &str) -> Result<MatchSet> {
    let mut lines = content_lines(text);
    match lines.next() {
        Some((_, h)) if h.replace(' ', "") == MATCH_HEADER => {}
        Some((ln, h)) => {
            return Err(Error::Parse(format!("line {ln}: expected header '{MATCH_HEADER}', got '{h}'")))
        }
        None => return Err(Error::Parse("empty match file".into())),
    }
    let mut pairs = Vec::new();
    for (ln, line) in lines {
        let vals = line
            .split(',')
            .map(|t| parse_f64(t, "coordinate", ln))
            .collect::<Result<Vec<_>>>()?;
        if vals.len() != 4 {
            return Err(Error::Parse(format!("line {ln}: expected 4 fields, got {}", vals.len())));
        }
        pairs.push((Vec2::new(vals[0], vals[1]), Vec2::new(vals[2], vals[3])));
    }
    Ok(MatchSet::new(pairs))
}

/// Shortest round-trip decimal form, so rereading gives identical bits.
pub fn format_matches(m: &MatchSet) -> String {
    let mut s = String::from(MATCH_HEADER);
    s.push('\n');
    for (p, q) in &m.pairs {
        s.push_str(&format!("{},{},{},{}\n", p.x, p.y, q.x, q.y));
    }
    s
}

/// Header `dim D`, then `x y d1 … dD` per feature.
pub fn parse_features(text: &str) -> Result<FeatureSet> {
    let mut lines = content_lines(text);
    let (ln, header) = lines.next().ok_or_else(|| Error::Parse("empty feature file".into()))?;
    let mut h = header.split_whitespace();
    let dim = match (h.next(), h.next(), h.next()) {
        (Some("dim"), Some(d), None) => d
            .parse::<usize>()
            .map_err(|_| Error::Parse(format!("line {ln}: bad dimension '{d}'")))?,
        _ => return Err(Error::Parse(format!("line {ln}: expected header 'dim D'"))),
    };
    let mut keypoints = Vec::new();
    let mut descriptors = Vec::new();
    for (ln, line) in lines {
        let vals = line
            .split_whitespace()
            .map(|t| parse_f64(t, "value", ln))
            .collect::<Result<Vec<_>>>()?;
        if vals.len() != dim + 2 {
            return Err(Error::Parse(format!(
                "line {ln}: expected {} values, got {}",
                dim + 2,
                vals.len()
            )));
        }
        keypoints.push(Vec2::new(vals[0], vals[1]));
        descriptors.push(vals[2..].to_vec());
    }
    FeatureSet::new(dim, keypoints, descriptors).map_err(|e| Error::Parse(e.to_string()))
}

pub fn format_features(f: &FeatureSet) -> String {
    let mut s = format!("dim {}\n", f.dim);
    for (k, d) in f.keypoints.iter().zip(&f.descriptors) {
        s.push_str(&format!("{} {}", k.x, k.y));
        for v in d {
            s.push_str(&format!(" {v}"));
        }
        s.push('\n');
    }
    s
}
