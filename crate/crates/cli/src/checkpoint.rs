//! Resumable state of a mixing run.
//!
//! ```text
//! KICKFLOW-CKPT v1,config=<sha256>,kick=<k>,K=<K>,m1=<x>,rows=<r>,window=<w>
//! row,<k>,<dist>,<floor>,<tail>,<mean_norm>          (r lines)
//! ensemble,<kick_index>,<n>                          (2 + 2 w blocks)
//! <lineage>,<weight>,<c_0>,...,<c_{K-1}>              (n lines)
//! sha256=<hash of everything above>
//! ```

use std::fmt::Write as _;

use kickflow::io::{parse_number, Header, FORMAT_VERSION};
use kickflow::{Ensemble, Error, Field};

use crate::output::sha256_hex;

pub const CKPT_MAGIC: &str = "KICKFLOW-CKPT";

#[derive(Clone, Debug, PartialEq)]
pub struct MixRow {
    pub k: usize,
    pub dist: f64,
    pub floor: f64,
    pub tail_max: f64,
    pub mean_norm: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixState {
    pub config: String,
    pub kick: usize,
    pub dim: usize,
    pub m1: f64,
    pub rows: Vec<MixRow>,
    pub small: Ensemble,
    pub large: Ensemble,
    /// Recent post-burn-in snapshots of both ensembles.
    pub window: Vec<(Ensemble, Ensemble)>,
}

fn write_ensemble(out: &mut String, e: &Ensemble) {
    let _ = writeln!(out, "ensemble,{},{}", e.kick_index, e.len());
    for ((p, w), l) in e.particles.iter().zip(&e.weights).zip(&e.lineages) {
        let _ = write!(out, "{l},{w}");
        for c in p.as_slice() {
            let _ = write!(out, ",{c}");
        }
        out.push('\n');
    }
}

impl MixState {
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{CKPT_MAGIC} {FORMAT_VERSION},config={},kick={},K={},m1={},rows={},window={}\n",
            self.config,
            self.kick,
            self.dim,
            self.m1,
            self.rows.len(),
            self.window.len()
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "row,{},{},{},{},{}",
                r.k, r.dist, r.floor, r.tail_max, r.mean_norm
            );
        }
        write_ensemble(&mut out, &self.small);
        write_ensemble(&mut out, &self.large);
        for (a, b) in &self.window {
            write_ensemble(&mut out, a);
            write_ensemble(&mut out, b);
        }
        let hash = sha256_hex(out.as_bytes());
        let _ = writeln!(out, "sha256={hash}");
        out
    }

    pub fn from_text(text: &str) -> kickflow::Result<Self> {
        let body_end = text
            .trim_end()
            .rfind('\n')
            .map(|i| i + 1)
            .ok_or_else(|| Error::Format("checkpoint is truncated".into()))?;
        let (body, tail) = text.split_at(body_end);
        let header_line = body.lines().next().unwrap_or_default();
        let header = Header::parse(header_line)?;
        header.expect(CKPT_MAGIC)?;
        let stored = tail
            .trim()
            .strip_prefix("sha256=")
            .ok_or_else(|| Error::Format("checkpoint lacks its hash".into()))?;
        let computed = sha256_hex(body.as_bytes());
        if stored != computed {
            return Err(Error::Checksum {
                stored: stored.to_string(),
                computed,
            });
        }
        let dim = header.get_usize("K")?;
        let n_rows = header.get_usize("rows")?;
        let n_window = header.get_usize("window")?;
        let mut lines = body.lines().skip(1);
        let mut next = || {
            lines
                .next()
                .ok_or_else(|| Error::Format("checkpoint is truncated".into()))
        };
        let mut rows = Vec::with_capacity(n_rows);
        for _ in 0..n_rows {
            let line = next()?;
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != 6 || parts[0] != "row" {
                return Err(Error::Format(format!("bad row line {line:?}")));
            }
            rows.push(MixRow {
                k: parse_count(parts[1])?,
                dist: parse_number(parts[2])?,
                floor: parse_number(parts[3])?,
                tail_max: parse_number(parts[4])?,
                mean_norm: parse_number(parts[5])?,
            });
        }
        let mut read_ensemble = || -> kickflow::Result<Ensemble> {
            let head = next()?;
            let parts: Vec<&str> = head.split(',').collect();
            if parts.len() != 3 || parts[0] != "ensemble" {
                return Err(Error::Format(format!("bad ensemble line {head:?}")));
            }
            let kick_index = parse_count(parts[1])? as u64;
            let n = parse_count(parts[2])?;
            let mut ens = Ensemble {
                particles: Vec::with_capacity(n),
                weights: Vec::with_capacity(n),
                kick_index,
                lineages: Vec::with_capacity(n),
            };
            for _ in 0..n {
                let line = next()?;
                let mut it = line.split(',');
                let lineage = it
                    .next()
                    .and_then(|s| s.parse::<u64>().ok())
                    .ok_or_else(|| Error::Format(format!("bad particle line {line:?}")))?;
                let weight: f64 = parse_number(it.next().unwrap_or(""))?;
                let coeffs: Vec<f64> = it.map(parse_number).collect::<kickflow::Result<_>>()?;
                Error::check_dim(dim, coeffs.len())?;
                ens.lineages.push(lineage);
                ens.weights.push(weight);
                ens.particles.push(Field::from_vec(coeffs));
            }
            Ok(ens)
        };
        let small = read_ensemble()?;
        let large = read_ensemble()?;
        let mut window = Vec::with_capacity(n_window);
        for _ in 0..n_window {
            let a = read_ensemble()?;
            let b = read_ensemble()?;
            window.push((a, b));
        }
        Ok(MixState {
            config: header.get("config")?.to_string(),
            kick: header.get_usize("kick")?,
            dim,
            m1: parse_number(header.get("m1")?)?,
            rows,
            small,
            large,
            window,
        })
    }
}

fn parse_count(s: &str) -> kickflow::Result<usize> {
    s.parse()
        .map_err(|_| Error::Format(format!("not a count: {s:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> MixState {
        let a = Ensemble::uniform(
            vec![
                Field::from_vec(vec![0.1, -2.5]),
                Field::from_vec(vec![1e-300, 3.0]),
            ],
            7,
        );
        let mut b = a.clone();
        b.kick_index = 4;
        MixState {
            config: "abc".into(),
            kick: 4,
            dim: 2,
            m1: 9.000000000000002,
            rows: vec![MixRow {
                k: 0,
                dist: 0.25,
                floor: 1e-3,
                tail_max: 0.1,
                mean_norm: 2.0,
            }],
            small: a.clone(),
            large: b.clone(),
            window: vec![(a, b)],
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let s = sample();
        assert_eq!(MixState::from_text(&s.to_text()).unwrap(), s);
    }

    #[test]
    fn tampering_and_versions_are_detected() {
        let text = sample().to_text();
        let corrupt = text.replacen("0.25", "0.26", 1);
        assert!(matches!(
            MixState::from_text(&corrupt),
            Err(Error::Checksum { .. })
        ));
        let old = text.replacen("KICKFLOW-CKPT v1", "KICKFLOW-CKPT v0", 1);
        assert!(matches!(
            MixState::from_text(&old),
            Err(Error::VersionMismatch { .. })
        ));
        let cut = &text[..text.len() / 2];
        assert!(MixState::from_text(cut).is_err());
    }
}
