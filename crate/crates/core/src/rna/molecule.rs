use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Nucleotide {
    A,
    C,
    G,
    U,
}

impl Nucleotide {
    pub const ALL: [Nucleotide; 4] = [Nucleotide::A, Nucleotide::C, Nucleotide::G, Nucleotide::U];

    pub fn index(self) -> usize {
        match self {
            Nucleotide::A => 0,
            Nucleotide::C => 1,
            Nucleotide::G => 2,
            Nucleotide::U => 3,
        }
    }

    pub fn from_char(c: char) -> Option<Self> {
        match c.to_ascii_uppercase() {
            'A' => Some(Nucleotide::A),
            'C' => Some(Nucleotide::C),
            'G' => Some(Nucleotide::G),
            'U' => Some(Nucleotide::U),
            _ => None,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Nucleotide::A => 'A',
            Nucleotide::C => 'C',
            Nucleotide::G => 'G',
            Nucleotide::U => 'U',
        }
    }
}

/// Minimum sequence length accepted for a target.
pub const MIN_MOLECULE_LEN: usize = 4;

/// A target RNA sequence, or a contiguous window of one.
///
/// Positions are 1-based in the coordinates of the full molecule; `offset`
/// is the position of `sequence[0]`, so windows keep the original numbering.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetMolecule {
    pub name: String,
    pub sequence: Vec<Nucleotide>,
    #[serde(default = "one")]
    pub offset: usize,
}

fn one() -> usize {
    1
}

impl TargetMolecule {
    pub fn new(name: impl Into<String>, sequence: Vec<Nucleotide>) -> Result<Self> {
        if sequence.len() < MIN_MOLECULE_LEN {
            return Err(Error::invalid(
                "sequence",
                format!("molecule must have at least {MIN_MOLECULE_LEN} nucleotides"),
            ));
        }
        Ok(Self {
            name: name.into(),
            sequence,
            offset: 1,
        })
    }

    /// Parses a bare sequence string (whitespace ignored, T read as U).
    pub fn from_sequence_str(name: &str, seq: &str) -> Result<Self> {
        let (sequence, _) = parse_sequence(seq)?;
        Self::new(name, sequence)
    }

    /// Parses FASTA-style text: an optional `>` header followed by sequence
    /// lines. Thymine is normalized to uracil with a warning.
    pub fn parse_fasta(text: &str) -> Result<Self> {
        let mut name = String::from("unnamed");
        let mut body = String::new();
        let mut seen_header = false;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with(';') {
                continue;
            }
            if let Some(h) = line.strip_prefix('>') {
                if seen_header {
                    // Only the first record is used.
                    break;
                }
                seen_header = true;
                name = h.trim().to_string();
                continue;
            }
            body.push_str(line);
        }
        let (sequence, converted) = parse_sequence(&body)?;
        if converted > 0 {
            log::warn!("{name}: normalized {converted} T nucleotides to U");
        }
        Self::new(name, sequence)
    }

    pub fn read_fasta(path: &std::path::Path) -> Result<Self> {
        Self::parse_fasta(&std::fs::read_to_string(path)?)
    }

    pub fn to_fasta(&self) -> String {
        let mut out = format!(">{}\n", self.name);
        let seq: String = self.sequence.iter().map(|n| n.as_char()).collect();
        for chunk in seq.as_bytes().chunks(60) {
            out.push_str(std::str::from_utf8(chunk).expect("ascii"));
            out.push('\n');
        }
        out
    }

    pub fn len(&self) -> usize {
        self.sequence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequence.is_empty()
    }

    pub fn first_position(&self) -> usize {
        self.offset
    }

    pub fn last_position(&self) -> usize {
        self.offset + self.sequence.len() - 1
    }

    /// Nucleotide at a 1-based position in full-molecule coordinates.
    pub fn at(&self, position: usize) -> Option<Nucleotide> {
        position
            .checked_sub(self.offset)
            .and_then(|i| self.sequence.get(i).copied())
    }

    /// Coefficient column for a position, if the position lies in this window.
    pub fn column(&self, position: usize) -> Option<usize> {
        let c = position.checked_sub(self.offset)?;
        (c < self.sequence.len()).then_some(c)
    }

    /// The sub-sequence `start..=end` (full-molecule coordinates).
    pub fn window(&self, start: usize, end: usize) -> Result<Self> {
        if start < self.first_position() || end > self.last_position() || start > end {
            return Err(Error::invalid(
                "region",
                format!(
                    "[{start}, {end}] is outside [{}, {}]",
                    self.first_position(),
                    self.last_position()
                ),
            ));
        }
        let lo = start - self.offset;
        let hi = end - self.offset;
        let mut w = Self::new(self.name.clone(), self.sequence[lo..=hi].to_vec())?;
        w.offset = start;
        Ok(w)
    }
}

impl fmt::Display for TargetMolecule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for n in &self.sequence {
            write!(f, "{}", n.as_char())?;
        }
        Ok(())
    }
}

fn parse_sequence(text: &str) -> Result<(Vec<Nucleotide>, usize)> {
    let mut out = Vec::with_capacity(text.len());
    let mut converted = 0;
    for (i, c) in text.chars().filter(|c| !c.is_whitespace()).enumerate() {
        let n = match c.to_ascii_uppercase() {
            'T' => {
                converted += 1;
                Nucleotide::U
            }
            other => Nucleotide::from_char(other)
                .ok_or_else(|| Error::Parse(format!("invalid nucleotide {c:?} at sequence position {}", i + 1)))?,
        };
        out.push(n);
    }
    Ok((out, converted))
}
