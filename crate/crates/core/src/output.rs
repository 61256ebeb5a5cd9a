//! CSV artifacts. Every file starts with `#` comment lines carrying the
//! artifact version, configuration hash and seed, followed by a header row.

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::imaging::{DensityProfile, ProfileMeta};
use crate::units;

/// Artifact format version, bumped when column layouts change.
pub const ARTIFACT_VERSION: &str = concat!("latcoh-", env!("CARGO_PKG_VERSION"), "/1");

/// Provenance stamped into every artifact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stamp {
    pub config_hash: String,
    pub seed: u64,
}

/// A rectangular table of already formatted cells.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    /// Extra `key=value` comment lines written after the stamp.
    pub notes: Vec<String>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            ..Self::default()
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn note(&mut self, key: &str, value: impl std::fmt::Display) {
        self.notes.push(format!("{key}={value}"));
    }

    /// Column `name` parsed as numbers (`NaN` for empty cells).
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[j].parse().unwrap_or(f64::NAN)).collect())
    }

    pub fn to_csv(&self, stamp: &Stamp) -> Result<String> {
        let mut out = Vec::new();
        writeln!(out, "# version={ARTIFACT_VERSION}").expect("in-memory write");
        writeln!(out, "# config_hash={}", stamp.config_hash).expect("in-memory write");
        writeln!(out, "# seed={}", stamp.seed).expect("in-memory write");
        for n in &self.notes {
            writeln!(out, "# {n}").expect("in-memory write");
        }
        {
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(&self.columns).map_err(csv_error)?;
            for r in &self.rows {
                w.write_record(r).map_err(csv_error)?;
            }
            w.flush().map_err(|e| Error::io("<csv>", e))?;
        }
        Ok(String::from_utf8(out).expect("csv output is UTF-8"))
    }

    pub fn write(&self, path: &Path, stamp: &Stamp) -> Result<PathBuf> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(path, self.to_csv(stamp)?).map_err(|e| Error::io(path, e))?;
        Ok(path.to_path_buf())
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io {
        path: "<csv>".into(),
        source: std::io::Error::other(e.to_string()),
    }
}

/// Shortest round-trip representation; empty for NaN.
pub fn num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Profile as a two-column table (`x_um`, `density`).
pub fn profile_table(profile: &DensityProfile) -> Table {
    let mut t = Table::new(&["x_um", "density"]);
    for (x, d) in profile.positions.iter().zip(&profile.density) {
        t.push(vec![num(units::to_um(*x)), num(*d)]);
    }
    t.note("n_samples", profile.meta.n_samples);
    t
}

/// Read a profile CSV with `x_um` and `density` columns; `#` lines are
/// comments. Positions must be strictly increasing.
pub fn read_profile_csv(path: &Path) -> Result<DensityProfile> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Config(format!("{}: missing column {name}", path.display())))
    };
    let (jx, jd) = (find("x_um")?, find("density")?);
    let mut positions = Vec::new();
    let mut density = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_error)?;
        let parse = |j: usize| -> Result<f64> {
            rec.get(j)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Config(format!("{}: row {} has an unreadable number", path.display(), line + 1)))
        };
        positions.push(units::um(parse(jx)?));
        density.push(parse(jd)?);
    }
    if positions.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config(format!(
            "{}: x_um must increase strictly",
            path.display()
        )));
    }
    Ok(DensityProfile {
        positions,
        density,
        meta: ProfileMeta::default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stamp() -> Stamp {
        Stamp {
            config_hash: "abc".into(),
            seed: 7,
        }
    }

    #[test]
    fn header_and_rows() {
        let mut t = Table::new(&["a", "b"]);
        t.push(vec![num(1.5), num(f64::NAN)]);
        t.note("tau_ms", 14.2);
        let s = t.to_csv(&stamp()).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert!(lines[0].starts_with("# version=latcoh-"));
        assert_eq!(lines[1], "# config_hash=abc");
        assert_eq!(lines[2], "# seed=7");
        assert_eq!(lines[3], "# tau_ms=14.2");
        assert_eq!(lines[4], "a,b");
        assert_eq!(lines[5], "1.5,");
        assert_eq!(t.column("a").unwrap(), vec![1.5]);
    }

    #[test]
    fn profile_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = DensityProfile {
            positions: vec![-1e-6, 0.0, 1.25e-6],
            density: vec![0.5, 2.0, 0.25],
            meta: ProfileMeta::default(),
        };
        let path = profile_table(&p).write(&dir.path().join("p.csv"), &stamp()).unwrap();
        let back = read_profile_csv(&path).unwrap();
        assert_eq!(back.density, p.density);
        for (a, b) in back.positions.iter().zip(&p.positions) {
            assert!((a - b).abs() < 1e-18);
        }
    }

    #[test]
    fn missing_column_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "x,y\n1,2\n").unwrap();
        let err = read_profile_csv(&path).unwrap_err();
        assert!(err.to_string().contains("x_um"));
    }
}
