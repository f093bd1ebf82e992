//! Snapshot files and CSV number formatting.
//!
//! A snapshot is a small CSV: four `key,value` header rows describing the mesh
//! and time level, one row of column names, then one row per cell in row-major
//! order (x fastest). Floats carry 17 significant digits, so a write/read
//! round trip is bit-exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::forward::EpidemicState;
use crate::mesh::{Field, Mesh};

/// Shortest form that still has 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Join already-formatted cells into a CSV line.
pub fn csv_line<I, S>(cells: I) -> String
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut out = String::new();
    for (k, c) in cells.into_iter().enumerate() {
        if k > 0 {
            out.push(',');
        }
        out.push_str(c.as_ref());
    }
    out.push('\n');
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub dimension: usize,
    pub cells: Vec<usize>,
    pub lengths: Vec<f64>,
    pub level: usize,
    pub columns: Vec<String>,
    /// `values[column][cell]`
    pub values: Vec<Vec<f64>>,
}

impl Snapshot {
    pub fn new(mesh: &Mesh, level: usize, columns: &[(&str, &[f64])]) -> Result<Self> {
        for (name, v) in columns {
            if v.len() != mesh.num_cells() {
                return Err(Error::Format(format!(
                    "column {name} has {} values for {} cells",
                    v.len(),
                    mesh.num_cells()
                )));
            }
        }
        Ok(Self {
            dimension: mesh.dimension(),
            cells: mesh.cells_per_axis().to_vec(),
            lengths: mesh.domain_lengths().to_vec(),
            level,
            columns: columns.iter().map(|(n, _)| n.to_string()).collect(),
            values: columns.iter().map(|(_, v)| v.to_vec()).collect(),
        })
    }

    pub fn of_field(mesh: &Mesh, level: usize, name: &str, field: &[f64]) -> Result<Self> {
        Self::new(mesh, level, &[(name, field)])
    }

    pub fn of_state(mesh: &Mesh, level: usize, state: &EpidemicState) -> Result<Self> {
        Self::new(mesh, level, &[("s", &state.s), ("e", &state.e), ("i", &state.i), ("r", &state.r)])
    }

    pub fn column(&self, name: &str) -> Option<Field> {
        self.columns
            .iter()
            .position(|c| c == name)
            .map(|k| Field::from(self.values[k].clone()))
    }

    /// Error unless the header describes exactly this mesh.
    pub fn check_mesh(&self, mesh: &Mesh) -> Result<()> {
        if self.dimension != mesh.dimension()
            || self.cells != mesh.cells_per_axis()
            || self.lengths != mesh.domain_lengths()
        {
            return Err(Error::Format(format!(
                "snapshot mesh (dimension {}, cells {:?}, lengths {:?}) does not match (dimension {}, cells {:?}, lengths {:?})",
                self.dimension,
                self.cells,
                self.lengths,
                mesh.dimension(),
                mesh.cells_per_axis(),
                mesh.domain_lengths()
            )));
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let join = |xs: Vec<String>| xs.join(" ");
        let mut out = String::new();
        let _ = writeln!(out, "dimension,{}", self.dimension);
        let _ = writeln!(out, "cells,{}", join(self.cells.iter().map(|c| c.to_string()).collect()));
        let _ = writeln!(out, "lengths,{}", join(self.lengths.iter().map(|&l| fmt_f64(l)).collect()));
        let _ = writeln!(out, "level,{}", self.level);
        out.push_str(&csv_line(&self.columns));
        let n = self.values.first().map_or(0, |v| v.len());
        for c in 0..n {
            out.push_str(&csv_line(self.values.iter().map(|col| fmt_f64(col[c]))));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let mut header = |key: &str| -> Result<String> {
            let line = lines
                .next()
                .ok_or_else(|| Error::Format(format!("missing header row {key}")))?;
            match line.split_once(',') {
                Some((k, v)) if k == key => Ok(v.to_string()),
                _ => Err(Error::Format(format!("expected header row {key}, found {line:?}"))),
            }
        };
        let bad = |what: &str, v: &str| Error::Format(format!("invalid {what}: {v:?}"));
        let dim_s = header("dimension")?;
        let dimension: usize = dim_s.trim().parse().map_err(|_| bad("dimension", &dim_s))?;
        let cells_s = header("cells")?;
        let cells = cells_s
            .split_whitespace()
            .map(|c| c.parse::<usize>().map_err(|_| bad("cells", &cells_s)))
            .collect::<Result<Vec<_>>>()?;
        let lengths_s = header("lengths")?;
        let lengths = lengths_s
            .split_whitespace()
            .map(|c| c.parse::<f64>().map_err(|_| bad("lengths", &lengths_s)))
            .collect::<Result<Vec<_>>>()?;
        let level_s = header("level")?;
        let level: usize = level_s.trim().parse().map_err(|_| bad("level", &level_s))?;
        if cells.len() != dimension || lengths.len() != dimension {
            return Err(Error::Format(format!(
                "header lists {} cell counts and {} lengths for dimension {dimension}",
                cells.len(),
                lengths.len()
            )));
        }
        let columns: Vec<String> = lines
            .next()
            .ok_or_else(|| Error::Format("missing column names".into()))?
            .split(',')
            .map(|c| c.trim().to_string())
            .collect();
        let expected: usize = cells.iter().product();
        let mut values = vec![Vec::with_capacity(expected); columns.len()];
        for (row, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != columns.len() {
                return Err(Error::Format(format!(
                    "row {row} has {} values, expected {}",
                    parts.len(),
                    columns.len()
                )));
            }
            for (col, p) in values.iter_mut().zip(parts) {
                col.push(p.trim().parse::<f64>().map_err(|_| bad("value", p))?);
            }
        }
        if values.iter().any(|v| v.len() != expected) {
            return Err(Error::Format(format!(
                "expected {expected} data rows, found {}",
                values.first().map_or(0, |v| v.len())
            )));
        }
        Ok(Self {
            dimension,
            cells,
            lengths,
            level,
            columns,
            values,
        })
    }
}

pub fn write_snapshot(snapshot: &Snapshot, path: &Path) -> Result<()> {
    fs::write(path, snapshot.to_csv())?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    let text = fs::read_to_string(path)?;
    Snapshot::parse(&text).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Read a single-column field file and check it against `mesh`.
pub fn read_field(path: &Path, mesh: &Mesh) -> Result<Field> {
    let snap = read_snapshot(path)?;
    snap.check_mesh(mesh)?;
    if snap.columns.len() != 1 {
        return Err(Error::Format(format!(
            "{}: expected one value column, found {}",
            path.display(),
            snap.columns.len()
        )));
    }
    Ok(Field::from(snap.values.into_iter().next().unwrap_or_default()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bitwise() {
        let mesh = Mesh::new(2, &[8, 8], &[1.0, 0.3]).unwrap();
        let f = Field::from_fn(&mesh, |x| (x[0] * 7.1).sin() / 3.0 + x[1].exp() * 1e-17);
        let snap = Snapshot::of_field(&mesh, 12, "u", &f).unwrap();
        let text = snap.to_csv();
        assert_eq!(text.lines().count(), 5 + 64);
        let back = Snapshot::parse(&text).unwrap();
        assert_eq!(back, snap);
        for (a, b) in back.values[0].iter().zip(f.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn mesh_mismatch_is_format_error() {
        let mesh = Mesh::uniform_1d(4, 1.0).unwrap();
        let snap = Snapshot::of_field(&mesh, 0, "u", &[1.0; 4]).unwrap();
        let other = Mesh::uniform_1d(5, 1.0).unwrap();
        assert!(matches!(snap.check_mesh(&other), Err(Error::Format(_))));
        let broken = snap.to_csv().replacen("dimension", "dim", 1);
        assert!(matches!(Snapshot::parse(&broken), Err(Error::Format(_))));
    }
}
