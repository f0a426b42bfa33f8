//! Grid function serialization: a flat little-endian binary layout and CSV.
//!
//! Both formats store `n`, `extent` and the rank ahead of the values, which are
//! row-major by cell index with components interleaved. Values are written as
//! `f64`, so round trips are bit-exact for `f32` and `f64` fields alike.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};

use super::{Grid, GridFunction, Rank};
use crate::error::{Error, Result};
use crate::scalar::Real;

const MAGIC: &[u8; 4] = b"DGF1";

fn rank_code(rank: Rank) -> u8 {
    match rank {
        Rank::Scalar => 0,
        Rank::Vector => 1,
        Rank::Matrix => 2,
    }
}

fn rank_from_code(code: u8) -> Result<Rank> {
    match code {
        0 => Ok(Rank::Scalar),
        1 => Ok(Rank::Vector),
        2 => Ok(Rank::Matrix),
        _ => Err(Error::Format(format!("unknown rank code {code}"))),
    }
}

pub fn write_binary<T: Real, W: Write>(f: &GridFunction<T>, w: W) -> Result<()> {
    let mut w = BufWriter::new(w);
    w.write_all(MAGIC)?;
    w.write_all(&(f.grid().n() as u64).to_le_bytes())?;
    w.write_all(&f.grid().extent().f64().to_le_bytes())?;
    w.write_all(&[rank_code(f.rank())])?;
    for v in f.values() {
        w.write_all(&v.f64().to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_binary<T: Real, R: Read>(r: R) -> Result<GridFunction<T>> {
    let mut r = BufReader::new(r);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a grid function file".into()));
    }
    let mut word = [0u8; 8];
    r.read_exact(&mut word)?;
    let n = usize::try_from(u64::from_le_bytes(word))
        .map_err(|_| Error::Format("grid size overflows usize".into()))?;
    r.read_exact(&mut word)?;
    let extent = f64::from_le_bytes(word);
    let mut code = [0u8; 1];
    r.read_exact(&mut code)?;
    let rank = rank_from_code(code[0])?;
    let grid = Grid::new(n, T::of(extent))?;
    let len = grid.len() * rank.components();
    let mut values = Vec::with_capacity(len);
    for _ in 0..len {
        r.read_exact(&mut word)?;
        values.push(T::of(f64::from_le_bytes(word)));
    }
    if r.read(&mut code)? != 0 {
        return Err(Error::Format("trailing bytes after payload".into()));
    }
    GridFunction::from_values(grid, rank, values)
}

/// CSV layout: a `n,extent,rank` header row and its values, then one row per
/// cell `index,c0[,c1,...]`.
pub fn write_csv<T: Real, W: Write>(f: &GridFunction<T>, w: W) -> Result<()> {
    let mut w = BufWriter::new(w);
    writeln!(w, "n,extent,rank")?;
    writeln!(
        w,
        "{},{:?},{}",
        f.grid().n(),
        f.grid().extent().f64(),
        f.rank().name()
    )?;
    let c = f.components();
    write!(w, "index")?;
    for k in 0..c {
        write!(w, ",c{k}")?;
    }
    writeln!(w)?;
    for (idx, chunk) in f.values().chunks_exact(c).enumerate() {
        write!(w, "{idx}")?;
        for v in chunk {
            write!(w, ",{:?}", v.f64())?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: Real, R: Read>(r: R) -> Result<GridFunction<T>> {
    let mut lines = BufReader::new(r).lines();
    let mut next = |what: &str| -> Result<String> {
        lines
            .next()
            .ok_or_else(|| Error::Format(format!("missing {what}")))?
            .map_err(Error::from)
    };
    if next("header")?.trim() != "n,extent,rank" {
        return Err(Error::Format("bad CSV header".into()));
    }
    let meta = next("grid description")?;
    let parts: Vec<&str> = meta.trim().split(',').collect();
    if parts.len() != 3 {
        return Err(Error::Format(format!("bad grid description {meta:?}")));
    }
    let n: usize = parts[0]
        .parse()
        .map_err(|_| Error::Format(format!("bad n {:?}", parts[0])))?;
    let extent: f64 = parts[1]
        .parse()
        .map_err(|_| Error::Format(format!("bad extent {:?}", parts[1])))?;
    let rank = Rank::from_name(parts[2])
        .ok_or_else(|| Error::Format(format!("unknown rank {:?}", parts[2])))?;
    let grid = Grid::new(n, T::of(extent))?;
    next("column header")?;
    let c = rank.components();
    let mut values = Vec::with_capacity(grid.len() * c);
    for (row, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.trim().split(',');
        let idx: usize = fields
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format(format!("bad index on data row {row}")))?;
        if idx != row {
            return Err(Error::Format(format!("rows out of order at {row}")));
        }
        for _ in 0..c {
            let v: f64 = fields
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Format(format!("bad value on data row {row}")))?;
            values.push(T::of(v));
        }
    }
    GridFunction::from_values(grid, rank, values)
}
