use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shortest probe that still binds its intended region.
pub const MIN_PROBE_LEN: usize = 4;

/// A target region `[start, end]`, 1-based and inclusive.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Probe {
    pub start: usize,
    pub end: usize,
}

impl Probe {
    pub fn new(start: usize, end: usize) -> Result<Self> {
        let bad = |reason: &str| Error::InvalidProbe {
            start,
            end,
            reason: reason.to_string(),
        };
        if start == 0 {
            return Err(bad("positions are 1-based"));
        }
        if start > end {
            return Err(bad("start must not exceed end"));
        }
        if end - start + 1 < MIN_PROBE_LEN {
            return Err(bad("probe must span at least 4 nucleotides"));
        }
        Ok(Self { start, end })
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn within(&self, lo: usize, hi: usize) -> bool {
        self.start >= lo && self.end <= hi
    }
}

impl fmt::Display for Probe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}]", self.start, self.end)
    }
}

impl FromStr for Probe {
    type Err = Error;

    /// Accepts `i,j`, `[i,j]`, or `i-j`.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().trim_start_matches('[').trim_end_matches(']');
        let (a, b) = t
            .split_once(',')
            .or_else(|| t.split_once('-'))
            .ok_or_else(|| Error::Parse(format!("expected `start,end`, got {s:?}")))?;
        let parse = |x: &str| {
            x.trim()
                .parse::<usize>()
                .map_err(|_| Error::Parse(format!("invalid probe position {x:?}")))
        };
        Probe::new(parse(a)?, parse(b)?)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ProbeRecord {
    name: String,
    start: usize,
    end: usize,
}

/// Reads a probe library CSV with columns `name,start,end`.
pub fn read_probe_library(path: &Path) -> Result<Vec<(String, Probe)>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        let rec: ProbeRecord = rec?;
        out.push((rec.name, Probe::new(rec.start, rec.end)?));
    }
    if out.is_empty() {
        return Err(Error::invalid("library", "probe library is empty"));
    }
    Ok(out)
}

pub fn write_probe_library(path: &Path, probes: &[Probe]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for (i, p) in probes.iter().enumerate() {
        w.serialize(ProbeRecord {
            name: format!("probe{}", i + 1),
            start: p.start,
            end: p.end,
        })?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(Probe::new(1, 4).is_ok());
        assert!(Probe::new(1, 3).is_err());
        assert!(Probe::new(0, 5).is_err());
        assert!(Probe::new(9, 5).is_err());
    }

    #[test]
    fn parsing() {
        assert_eq!("10,20".parse::<Probe>().unwrap(), Probe::new(10, 20).unwrap());
        assert_eq!("[5, 8]".parse::<Probe>().unwrap(), Probe::new(5, 8).unwrap());
        assert!("20,10".parse::<Probe>().is_err());
        assert!("abc".parse::<Probe>().is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lib.csv");
        let probes = vec![Probe::new(1, 8).unwrap(), Probe::new(5, 16).unwrap()];
        write_probe_library(&path, &probes).unwrap();
        let back: Vec<Probe> = read_probe_library(&path).unwrap().into_iter().map(|(_, p)| p).collect();
        assert_eq!(back, probes);
    }
}
