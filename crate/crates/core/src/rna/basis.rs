//! Energetic basis rows mapping nucleotide accessibility to probe signal.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::molecule::{Nucleotide, TargetMolecule};
use super::probe::Probe;
use crate::error::{Error, Result};

const BUNDLED_STACKS: &str = include_str!("../../data/nn_stacks.csv");

/// Watson-Crick nearest-neighbor stacking free energies (kcal/mol), indexed
/// by the ordered dinucleotide on the target strand.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyTable {
    values: [[f64; 4]; 4],
}

impl EnergyTable {
    /// The bundled 37 °C stacking table.
    pub fn bundled() -> Self {
        Self::parse_csv(BUNDLED_STACKS).expect("bundled stacking table is valid")
    }

    pub fn uniform(value: f64) -> Self {
        Self {
            values: [[value; 4]; 4],
        }
    }

    /// Parses a `pair,energy` CSV. All 16 ordered pairs must be present.
    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut values = [[f64::NAN; 4]; 4];
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        for rec in rdr.records() {
            let rec = rec?;
            let pair = rec.get(0).unwrap_or("").trim().to_ascii_uppercase().replace('T', "U");
            let energy: f64 = rec
                .get(1)
                .unwrap_or("")
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad energy for pair {pair:?}")))?;
            let mut chars = pair.chars();
            let (a, b) = match (chars.next(), chars.next(), chars.next()) {
                (Some(a), Some(b), None) => (a, b),
                _ => return Err(Error::Parse(format!("bad dinucleotide {pair:?}"))),
            };
            let (a, b) = match (Nucleotide::from_char(a), Nucleotide::from_char(b)) {
                (Some(a), Some(b)) => (a, b),
                _ => return Err(Error::Parse(format!("bad dinucleotide {pair:?}"))),
            };
            if !energy.is_finite() {
                return Err(Error::Parse(format!("non-finite energy for {pair}")));
            }
            values[a.index()][b.index()] = energy;
        }
        for a in Nucleotide::ALL {
            for b in Nucleotide::ALL {
                if values[a.index()][b.index()].is_nan() {
                    return Err(Error::invalid(
                        "energy_table",
                        format!("missing pair {}{}", a.as_char(), b.as_char()),
                    ));
                }
            }
        }
        Ok(Self { values })
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        Self::parse_csv(&std::fs::read_to_string(path)?)
    }

    pub fn energy(&self, a: Nucleotide, b: Nucleotide) -> f64 {
        self.values[a.index()][b.index()]
    }
}

/// The M×p matrix Φ plus per-alternative intercepts Φ₀.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisMatrix {
    pub rows: DMatrix<f64>,
    pub intercepts: DVector<f64>,
}

impl BasisMatrix {
    pub fn new(rows: DMatrix<f64>) -> Result<Self> {
        let m = rows.nrows();
        Self::with_intercepts(rows, DVector::zeros(m))
    }

    pub fn with_intercepts(rows: DMatrix<f64>, intercepts: DVector<f64>) -> Result<Self> {
        if intercepts.len() != rows.nrows() {
            return Err(Error::dim("basis intercepts", rows.nrows(), intercepts.len()));
        }
        if rows.iter().chain(intercepts.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("basis", "entries must be finite"));
        }
        Ok(Self { rows, intercepts })
    }

    pub fn num_alternatives(&self) -> usize {
        self.rows.nrows()
    }

    pub fn num_coefficients(&self) -> usize {
        self.rows.ncols()
    }

    pub fn row(&self, m: usize) -> DVector<f64> {
        self.rows.row(m).transpose()
    }

    /// Appends one alternative.
    pub fn push_row(&self, row: &DVector<f64>, intercept: f64) -> Result<Self> {
        if row.len() != self.num_coefficients() {
            return Err(Error::dim("basis row", self.num_coefficients(), row.len()));
        }
        let m = self.num_alternatives();
        let rows = self.rows.clone().insert_row(m, 0.0);
        let mut rows = rows;
        rows.row_mut(m).copy_from(&row.transpose());
        let intercepts = self.intercepts.clone().insert_row(m, intercept);
        Self::with_intercepts(rows, intercepts)
    }

    /// Reads an M×(p+1) CSV (header row required; last column is the intercept).
    pub fn read_override_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let vals: std::result::Result<Vec<f64>, _> = rec.iter().map(|v| v.trim().parse::<f64>()).collect();
            let vals = vals.map_err(|_| Error::Parse(format!("basis row {} has a non-numeric entry", i + 1)))?;
            rows.push(vals);
        }
        let m = rows.len();
        if m == 0 {
            return Err(Error::invalid("basis", "override matrix has no rows"));
        }
        let width = rows[0].len();
        if width < 2 || rows.iter().any(|r| r.len() != width) {
            return Err(Error::invalid(
                "basis",
                "override rows must share a width of at least 2",
            ));
        }
        let p = width - 1;
        let phi = DMatrix::from_fn(m, p, |r, c| rows[r][c]);
        let intercepts = DVector::from_iterator(m, rows.iter().map(|r| r[p]));
        Self::with_intercepts(phi, intercepts)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let p = self.num_coefficients();
        let mut header: Vec<String> = (1..=p).map(|k| format!("phi{k}")).collect();
        header.push("intercept".into());
        w.write_record(&header)?;
        for r in 0..self.num_alternatives() {
            let mut rec: Vec<String> = self.rows.row(r).iter().map(|v| format!("{v:?}")).collect();
            rec.push(format!("{:?}", self.intercepts[r]));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Where basis rows come from.
#[derive(Clone, Debug)]
pub enum BasisSource {
    /// Nearest-neighbor stacking energies.
    Energy(EnergyTable),
    /// A user-supplied Φ used verbatim.
    Override(BasisMatrix),
}

/// Basis row for one probe: entry k (for `start ≤ k < end`) is the stacking
/// energy magnitude of the dinucleotide starting at k; the last position of
/// the span and every position outside it contribute zero.
pub fn basis_row(molecule: &TargetMolecule, probe: &Probe, table: &EnergyTable) -> Result<DVector<f64>> {
    check_bounds(molecule, probe)?;
    let p = molecule.len();
    let mut row = DVector::zeros(p);
    for k in probe.start..probe.end {
        let a = molecule.at(k).expect("bounds checked");
        let b = molecule.at(k + 1).expect("bounds checked");
        let col = molecule.column(k).expect("bounds checked");
        row[col] = table.energy(a, b).abs();
    }
    Ok(row)
}

fn check_bounds(molecule: &TargetMolecule, probe: &Probe) -> Result<()> {
    if !probe.within(molecule.first_position(), molecule.last_position()) {
        return Err(Error::InvalidProbe {
            start: probe.start,
            end: probe.end,
            reason: format!(
                "outside molecule positions [{}, {}]",
                molecule.first_position(),
                molecule.last_position()
            ),
        });
    }
    Ok(())
}

/// Builds Φ for a probe library.
pub fn build_basis(molecule: &TargetMolecule, probes: &[Probe], source: &BasisSource) -> Result<BasisMatrix> {
    for probe in probes {
        check_bounds(molecule, probe)?;
    }
    match source {
        BasisSource::Override(b) => {
            if b.num_alternatives() != probes.len() {
                return Err(Error::dim("override basis rows", probes.len(), b.num_alternatives()));
            }
            if b.num_coefficients() != molecule.len() {
                return Err(Error::dim(
                    "override basis columns",
                    molecule.len(),
                    b.num_coefficients(),
                ));
            }
            Ok(b.clone())
        }
        BasisSource::Energy(table) => {
            let p = molecule.len();
            let mut rows = DMatrix::zeros(probes.len(), p);
            for (m, probe) in probes.iter().enumerate() {
                let r = basis_row(molecule, probe, table)?;
                rows.row_mut(m).copy_from(&r.transpose());
            }
            BasisMatrix::new(rows)
        }
    }
}
