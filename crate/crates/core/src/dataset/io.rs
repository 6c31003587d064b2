//! Trajectory CSV.
//!
//! ```text
//! glean-trajectories,1,<T>,2
//! id,t,x,y,label,seed
//! 0,0,0.0031,0.0047,left,42
//! ...
//! ```
//!
//! The first line carries the format version, the sequence length and the
//! number of position dimensions. The second line names the columns. Every
//! trajectory then contributes exactly `T` rows with `t = 0..T` in order;
//! floats are written in shortest round-trip form.

use std::fmt::Write as _;
use std::path::Path;

use super::geometry::Label;
use super::trajectory::Trajectory;
use crate::error::{Error, Result};

pub const MAGIC: &str = "glean-trajectories";
pub const VERSION: u32 = 1;
const COLUMNS: &str = "id,t,x,y,label,seed";

pub fn to_csv(set: &[Trajectory]) -> Result<String> {
    let steps = set.first().map_or(0, Trajectory::len);
    let mut out = format!("{MAGIC},{VERSION},{steps},2\n{COLUMNS}\n");
    for tr in set {
        if tr.len() != steps {
            return Err(Error::DimensionMismatch {
                op: "trajectory file length",
                expected: steps,
                got: tr.len(),
            });
        }
        for (t, p) in tr.points.iter().enumerate() {
            writeln!(out, "{},{t},{},{},{},{}", tr.id, p[0], p[1], tr.label.name(), tr.seed)
                .expect("writing to a String cannot fail");
        }
    }
    Ok(out)
}

pub fn save_trajectories(path: &Path, set: &[Trajectory]) -> Result<()> {
    std::fs::write(path, to_csv(set)?).map_err(|e| Error::io(path, e))
}

pub fn load_trajectories(path: &Path) -> Result<Vec<Trajectory>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, path)
}

pub fn parse_csv(text: &str, path: &Path) -> Result<Vec<Trajectory>> {
    let err = |line: usize, msg: String| Error::parse(path, line, msg);
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));

    let (ln, header) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
    let fields: Vec<&str> = header.split(',').collect();
    if fields.len() != 4 || fields[0] != MAGIC {
        return Err(err(ln, format!("expected `{MAGIC},<version>,<T>,<dims>` header")));
    }
    let version: u32 = fields[1].parse().map_err(|_| err(ln, "bad version".into()))?;
    if version != VERSION {
        return Err(err(ln, format!("unsupported version {version}")));
    }
    let steps: usize = fields[2].parse().map_err(|_| err(ln, "bad sequence length".into()))?;
    if fields[3] != "2" {
        return Err(err(ln, format!("only 2 dimensions are supported, got {}", fields[3])));
    }
    match lines.next() {
        Some((_, c)) if c == COLUMNS => {}
        Some((ln, _)) => return Err(err(ln, format!("expected column line `{COLUMNS}`"))),
        None => return Err(err(ln + 1, "missing column line".into())),
    }

    let mut set: Vec<Trajectory> = Vec::new();
    let mut last_line = 2;
    for (ln, line) in lines {
        last_line = ln;
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(err(ln, format!("expected 6 fields, got {}", f.len())));
        }
        let id: usize = f[0].parse().map_err(|_| err(ln, format!("bad id `{}`", f[0])))?;
        let t: usize = f[1].parse().map_err(|_| err(ln, format!("bad step `{}`", f[1])))?;
        let num = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(ln, format!("bad coordinate `{s}`")))
        };
        let (x, y) = (num(f[2])?, num(f[3])?);
        let label = Label::from_name(f[4]).ok_or_else(|| err(ln, format!("bad label `{}`", f[4])))?;
        let seed: u64 = f[5].parse().map_err(|_| err(ln, format!("bad seed `{}`", f[5])))?;

        if t == 0 {
            if let Some(prev) = set.last() {
                if prev.len() != steps {
                    return Err(err(ln, format!("trajectory {} has {} of {steps} rows", prev.id, prev.len())));
                }
            }
            set.push(Trajectory {
                id,
                label,
                seed,
                points: Vec::with_capacity(steps),
            });
        }
        let cur = set
            .last_mut()
            .ok_or_else(|| err(ln, "first row of a trajectory must have t = 0".into()))?;
        if cur.id != id || cur.label != label || cur.seed != seed {
            return Err(err(ln, "row does not continue the current trajectory".into()));
        }
        if t != cur.points.len() || t >= steps {
            return Err(err(ln, format!("expected step {}, got {t}", cur.points.len())));
        }
        cur.points.push([x, y]);
    }
    if let Some(last) = set.last() {
        if last.len() != steps {
            return Err(err(
                last_line,
                format!("truncated: trajectory {} has {} of {steps} rows", last.id, last.len()),
            ));
        }
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_dataset, TaskGeometry, DEFAULT_NOISE_SCALE};

    fn sample() -> Vec<Trajectory> {
        generate_dataset(5, 6, 30, &TaskGeometry::default(), DEFAULT_NOISE_SCALE).unwrap()
    }

    #[test]
    fn roundtrip() {
        let set = sample();
        let text = to_csv(&set).unwrap();
        assert_eq!(parse_csv(&text, Path::new("mem")).unwrap(), set);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let text = to_csv(&sample()).unwrap();
        let cut: Vec<&str> = text.lines().collect();
        let cut = cut[..cut.len() - 3].join("\n");
        assert!(matches!(parse_csv(&cut, Path::new("mem")), Err(Error::Parse { .. })));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let mut text = to_csv(&sample()).unwrap();
        text = text.replacen("left", "lefty", 1);
        match parse_csv(&text, Path::new("mem")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn other_lengths_are_accepted() {
        let set = generate_dataset(5, 2, 12, &TaskGeometry::default(), 0.0).unwrap();
        let back = parse_csv(&to_csv(&set).unwrap(), Path::new("mem")).unwrap();
        assert_eq!(back[0].len(), 12);
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let set = sample();
        save_trajectories(&p, &set).unwrap();
        assert_eq!(load_trajectories(&p).unwrap(), set);
    }
}
