//! Plain-text tables: mesh node/element files and `x,y,z[,value]` data files.
//!
//! Fields are separated by commas and/or whitespace; `#` starts a comment.
//! Data files may begin with one non-numeric header line.

use std::io::{BufRead, Write};

use crate::mesh::{Point3, TetMesh};
use crate::{Error, Result};

fn records<R: BufRead>(src: R) -> impl Iterator<Item = Result<(usize, Vec<String>)>> {
    src.lines().enumerate().filter_map(|(i, line)| {
        let line = match line {
            Ok(l) => l,
            Err(e) => return Some(Err(Error::Io(e))),
        };
        let body = line.split('#').next().unwrap_or("");
        let fields: Vec<String> = body
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(str::to_owned)
            .collect();
        (!fields.is_empty()).then_some(Ok((i + 1, fields)))
    })
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.parse::<f64>().map_err(|_| Error::Parse {
        line,
        msg: format!("expected a number, found {s:?}"),
    })
}

pub fn parse_nodes<R: BufRead>(src: R) -> Result<Vec<Point3>> {
    records(src)
        .map(|r| {
            let (line, f) = r?;
            if f.len() != 3 {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected 3 coordinates, found {} fields", f.len()),
                });
            }
            Ok(Point3::new(
                parse_f64(&f[0], line)?,
                parse_f64(&f[1], line)?,
                parse_f64(&f[2], line)?,
            ))
        })
        .collect()
}

pub fn parse_elems<R: BufRead>(src: R, index_base: usize) -> Result<Vec<[usize; 4]>> {
    if index_base > 1 {
        return Err(Error::InvalidInput(format!("index base must be 0 or 1, got {index_base}")));
    }
    records(src)
        .map(|r| {
            let (line, f) = r?;
            if f.len() != 4 {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected 4 node indices, found {} fields", f.len()),
                });
            }
            let mut tet = [0usize; 4];
            for (slot, s) in f.iter().enumerate() {
                let v: usize = s.parse().map_err(|_| Error::Parse {
                    line,
                    msg: format!("expected a nonnegative integer, found {s:?}"),
                })?;
                tet[slot] = v.checked_sub(index_base).ok_or_else(|| Error::Parse {
                    line,
                    msg: format!("index {v} below index base {index_base}"),
                })?;
            }
            Ok(tet)
        })
        .collect()
}

/// Reads a mesh from a node table and an element table.
pub fn load_mesh<R1: BufRead, R2: BufRead>(nodes: R1, elems: R2, index_base: usize) -> Result<TetMesh> {
    TetMesh::new(parse_nodes(nodes)?, parse_elems(elems, index_base)?)
}

pub fn load_mesh_files(
    nodes: &std::path::Path,
    elems: &std::path::Path,
    index_base: usize,
) -> Result<TetMesh> {
    let open = |p: &std::path::Path| -> Result<std::io::BufReader<std::fs::File>> {
        Ok(std::io::BufReader::new(std::fs::File::open(p).map_err(|e| {
            Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", p.display())))
        })?))
    };
    load_mesh(open(nodes)?, open(elems)?, index_base)
}

pub fn write_mesh<W1: Write, W2: Write>(mesh: &TetMesh, mut nodes: W1, mut elems: W2) -> Result<()> {
    for p in mesh.nodes() {
        writeln!(nodes, "{} {} {}", p.x, p.y, p.z)?;
    }
    for t in mesh.tets() {
        writeln!(elems, "{} {} {} {}", t[0], t[1], t[2], t[3])?;
    }
    Ok(())
}

/// Reads rows of `width` numbers, skipping a leading header line if it is not numeric.
fn parse_table<R: BufRead>(src: R, width: usize) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::new();
    for (n, r) in records(src).enumerate() {
        let (line, f) = r?;
        if f.len() != width {
            return Err(Error::Parse {
                line,
                msg: format!("expected {width} fields, found {}", f.len()),
            });
        }
        let parsed: Result<Vec<f64>> = f.iter().map(|s| parse_f64(s, line)).collect();
        match parsed {
            Ok(row) => out.push(row),
            Err(_) if n == 0 => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// `x,y,z,value` rows.
pub fn parse_data<R: BufRead>(src: R) -> Result<(Vec<Point3>, Vec<f64>)> {
    let rows = parse_table(src, 4)?;
    Ok(rows
        .into_iter()
        .map(|r| (Point3::new(r[0], r[1], r[2]), r[3]))
        .unzip())
}

/// `x,y,z` rows.
pub fn parse_points<R: BufRead>(src: R) -> Result<Vec<Point3>> {
    Ok(parse_table(src, 3)?
        .into_iter()
        .map(|r| Point3::new(r[0], r[1], r[2]))
        .collect())
}

pub fn write_data<W: Write>(mut out: W, points: &[Point3], values: &[f64]) -> Result<()> {
    writeln!(out, "x,y,z,value")?;
    for (p, v) in points.iter().zip(values) {
        writeln!(out, "{},{},{},{}", p.x, p.y, p.z, v)?;
    }
    Ok(())
}

/// `x,y,z,prediction`; the prediction field is empty for points outside the domain.
pub fn write_predictions<W: Write>(mut out: W, points: &[Point3], preds: &[Option<f64>]) -> Result<()> {
    writeln!(out, "x,y,z,prediction")?;
    for (p, v) in points.iter().zip(preds) {
        match v {
            Some(v) => writeln!(out, "{},{},{},{}", p.x, p.y, p.z, v)?,
            None => writeln!(out, "{},{},{},", p.x, p.y, p.z)?,
        }
    }
    Ok(())
}
