//! Versioned plain-text formats for fields, kicks and dense matrices.
//!
//! Numbers are written with the shortest representation that parses back
//! to the same value, so `read(write(x)) == x` bit for bit.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::basis::SpectralField;
use crate::error::{Error, Result};
use crate::noise::KickPath;
use crate::scalar::Real;

pub const FIELD_MAGIC: &str = "KICKFLOW-FIELD";
pub const KICK_MAGIC: &str = "KICKFLOW-KICK";
pub const MATRIX_MAGIC: &str = "KICKFLOW-MATRIX";
pub const FORMAT_VERSION: &str = "v1";

/// Parsed header `MAGIC vN,key=value,...`.
#[derive(Clone, Debug, PartialEq)]
pub struct Header {
    pub magic: String,
    pub version: String,
    pub fields: Vec<(String, String)>,
}

impl Header {
    pub fn parse(line: &str) -> Result<Self> {
        let (head, rest) = line
            .trim_end()
            .split_once(',')
            .map_or((line.trim_end(), ""), |(a, b)| (a, b));
        let (magic, version) = head
            .split_once(' ')
            .ok_or_else(|| Error::Format(format!("malformed header {line:?}")))?;
        let mut fields = Vec::new();
        for part in rest.split(',').filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("malformed header entry {part:?}")))?;
            fields.push((k.to_string(), v.to_string()));
        }
        Ok(Header {
            magic: magic.to_string(),
            version: version.to_string(),
            fields,
        })
    }

    /// Checks magic and version.
    pub fn expect(&self, magic: &str) -> Result<()> {
        if self.magic != magic {
            return Err(Error::Format(format!(
                "expected {magic}, found {}",
                self.magic
            )));
        }
        if self.version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                expected: FORMAT_VERSION.into(),
                found: self.version.clone(),
            });
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Result<&str> {
        self.fields
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::Format(format!("header lacks {key}")))
    }

    pub fn get_usize(&self, key: &str) -> Result<usize> {
        self.get(key)?
            .parse()
            .map_err(|_| Error::Format(format!("header entry {key} is not a count")))
    }
}

pub fn parse_number<T: Real>(s: &str) -> Result<T> {
    s.trim()
        .parse::<T>()
        .map_err(|_| Error::Format(format!("not a number: {s:?}")))
}

fn parse_row<T: Real>(line: &str, expect: usize) -> Result<Vec<T>> {
    let row: Vec<T> = line.split(',').map(parse_number).collect::<Result<_>>()?;
    if row.len() != expect {
        return Err(Error::Format(format!(
            "row has {} entries, expected {expect}",
            row.len()
        )));
    }
    Ok(row)
}

fn join<T: Real>(out: &mut String, values: impl Iterator<Item = T>) {
    let mut first = true;
    for v in values {
        if !first {
            out.push(',');
        }
        first = false;
        let _ = write!(out, "{v}");
    }
    out.push('\n');
}

/// `KICKFLOW-FIELD v1,K=<K>` followed by one coefficient per line.
pub fn write_field<T: Real>(u: &SpectralField<T>) -> String {
    let mut out = format!("{FIELD_MAGIC} {FORMAT_VERSION},K={}\n", u.len());
    for c in u.as_slice() {
        let _ = writeln!(out, "{c}");
    }
    out
}

pub fn read_field<T: Real>(text: &str) -> Result<SpectralField<T>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = Header::parse(
        lines
            .next()
            .ok_or_else(|| Error::Format("empty field file".into()))?,
    )?;
    header.expect(FIELD_MAGIC)?;
    let k = header.get_usize("K")?;
    let coeffs: Vec<T> = lines.map(parse_number).collect::<Result<_>>()?;
    Error::check_dim(k, coeffs.len())?;
    Ok(SpectralField::from_vec(coeffs))
}

/// `KICKFLOW-KICK v1,P=<P>,K=<K>` followed by `P` comma-separated rows.
pub fn write_kick<T: Real>(eta: &KickPath<T>) -> String {
    let mut out = format!(
        "{KICK_MAGIC} {FORMAT_VERSION},P={},K={}\n",
        eta.time_modes(),
        eta.space_modes()
    );
    for p in 0..eta.time_modes() {
        join(&mut out, eta.coeffs.row(p).iter().copied());
    }
    out
}

pub fn read_kick<T: Real>(text: &str) -> Result<KickPath<T>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = Header::parse(
        lines
            .next()
            .ok_or_else(|| Error::Format("empty kick file".into()))?,
    )?;
    header.expect(KICK_MAGIC)?;
    let p = header.get_usize("P")?;
    let k = header.get_usize("K")?;
    let mut flat = Vec::with_capacity(p * k);
    for line in lines {
        flat.extend(parse_row::<T>(line, k)?);
    }
    Error::check_dim(p * k, flat.len())?;
    KickPath::from_flat(p, k, &flat)
}

/// `KICKFLOW-MATRIX v1,rows=<R>,cols=<C>` followed by `R` rows.
pub fn write_matrix<T: Real>(m: &DMatrix<T>) -> String {
    let mut out = format!(
        "{MATRIX_MAGIC} {FORMAT_VERSION},rows={},cols={}\n",
        m.nrows(),
        m.ncols()
    );
    for r in 0..m.nrows() {
        join(&mut out, m.row(r).iter().copied());
    }
    out
}

pub fn read_matrix<T: Real>(text: &str) -> Result<DMatrix<T>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = Header::parse(
        lines
            .next()
            .ok_or_else(|| Error::Format("empty matrix file".into()))?,
    )?;
    header.expect(MATRIX_MAGIC)?;
    let rows = header.get_usize("rows")?;
    let cols = header.get_usize("cols")?;
    let mut flat = Vec::with_capacity(rows * cols);
    for line in lines {
        flat.extend(parse_row::<T>(line, cols)?);
    }
    Error::check_dim(rows * cols, flat.len())?;
    Ok(DMatrix::from_row_slice(rows, cols, &flat))
}
