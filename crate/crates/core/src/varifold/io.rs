//! CSV serialization of discrete varifolds.
//!
//! Layout: a two-line preamble `n,m,mesh_scale` followed by its values, then
//! a column header and one row per atom with the position, the tangent basis
//! (`n` orthonormal rows of length `n+m`, flattened), multiplicity, weight
//! and mean curvature. Floats use 17 significant digits, so a write/read
//! cycle reproduces every atom bit for bit.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{Plane, Point};
use crate::numeric::{fmt_f64, parse_f64};

use super::{Atom, DiscreteVarifold};

fn column_names(n: usize, m: usize) -> Vec<String> {
    let d = n + m;
    let mut cols: Vec<String> = (1..=d).map(|i| format!("x_{i}")).collect();
    for r in 1..=n {
        cols.extend((1..=d).map(|i| format!("t{r}_{i}")));
    }
    cols.push("multiplicity".into());
    cols.push("weight".into());
    cols.extend((1..=d).map(|i| format!("H_{i}")));
    cols
}

/// Writes the varifold in CSV form.
pub fn write_varifold<W: Write>(v: &DiscreteVarifold, writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(writer);
    let (n, m) = (v.n(), v.m());
    w.write_record(["n", "m", "mesh_scale"]).map_err(Error::from)?;
    w.write_record([n.to_string(), m.to_string(), fmt_f64(v.mesh_scale())])
        .map_err(Error::from)?;
    w.write_record(column_names(n, m)).map_err(Error::from)?;
    for a in v.atoms() {
        let mut row: Vec<String> = a.position.iter().map(|x| fmt_f64(*x)).collect();
        for e in a.tangent.basis() {
            row.extend(e.iter().map(|x| fmt_f64(*x)));
        }
        row.push(a.multiplicity.to_string());
        row.push(fmt_f64(a.weight));
        row.extend(a.mean_curvature.iter().map(|x| fmt_f64(*x)));
        w.write_record(row).map_err(Error::from)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_varifold_csv(v: &DiscreteVarifold, path: impl AsRef<Path>) -> Result<()> {
    write_varifold(v, BufWriter::new(File::create(path)?))
}

/// Reads a varifold written by [`write_varifold`].
pub fn read_varifold<R: Read>(reader: R) -> Result<DiscreteVarifold> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = r.records();
    let mut next = |what: &str, line: usize| -> Result<csv::StringRecord> {
        records
            .next()
            .ok_or_else(|| Error::Parse {
                line,
                msg: format!("missing {what}"),
            })?
            .map_err(Error::from)
    };
    let _ = next("preamble header", 1)?;
    let pre = next("preamble values", 2)?;
    if pre.len() < 3 {
        return Err(Error::Parse {
            line: 2,
            msg: "expected n,m,mesh_scale".into(),
        });
    }
    let parse_usize = |s: &str, line: usize| -> Result<usize> {
        s.parse().map_err(|_| Error::Parse {
            line,
            msg: format!("not an integer: {s:?}"),
        })
    };
    let n = parse_usize(&pre[0], 2)?;
    let m = parse_usize(&pre[1], 2)?;
    let mesh_scale = parse_f64(&pre[2])?;
    let d = n + m;
    let width = d + n * d + 2 + d;
    let header = next("column header", 3)?;
    if header.len() != width {
        return Err(Error::Parse {
            line: 3,
            msg: format!("expected {width} columns, found {}", header.len()),
        });
    }
    let mut atoms = Vec::new();
    for (k, rec) in records.enumerate() {
        let line = k + 4;
        let rec = rec.map_err(Error::from)?;
        if rec.len() != width {
            return Err(Error::Parse {
                line,
                msg: format!("expected {width} columns, found {}", rec.len()),
            });
        }
        let nums = |range: std::ops::Range<usize>| -> Result<Vec<f64>> {
            range
                .map(|i| {
                    parse_f64(&rec[i]).map_err(|e| Error::Parse {
                        line,
                        msg: e.to_string(),
                    })
                })
                .collect()
        };
        let position = Point::from_vec(nums(0..d)?);
        let flat = nums(d..d + n * d)?;
        let basis: Vec<Point> = flat.chunks(d).map(Point::from_column_slice).collect();
        let tangent = Plane::from_orthonormal_basis(basis)?;
        let multiplicity: u32 = rec[d + n * d].parse().map_err(|_| Error::Parse {
            line,
            msg: format!("bad multiplicity {:?}", &rec[d + n * d]),
        })?;
        let weight = nums(d + n * d + 1..d + n * d + 2)?[0];
        let h = Point::from_vec(nums(d + n * d + 2..width)?);
        atoms.push(Atom::with_curvature(position, tangent, multiplicity, weight, h)?);
    }
    DiscreteVarifold::new(n, m, atoms, mesh_scale)
}

pub fn read_varifold_csv(path: impl AsRef<Path>) -> Result<DiscreteVarifold> {
    read_varifold(BufReader::new(File::open(path)?))
}
