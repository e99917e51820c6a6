//! RNA target, probes and the mapping from probes to coefficient space.

pub mod basis;
pub mod library;
pub mod molecule;
pub mod mutagenesis;
pub mod probe;

pub use basis::{basis_row, build_basis, BasisMatrix, BasisSource, EnergyTable};
pub use library::{generate_probe_library, LibrarySpec, EXPERT_PROBES};
pub use molecule::{Nucleotide, TargetMolecule};
pub use mutagenesis::{
    expand_library, expanded_candidates, mutagenesis_neighbors, mutagenesis_neighbors_within, ExpandedCandidates,
    ExpansionContext, ExpansionPick,
};
pub use probe::{read_probe_library, write_probe_library, Probe, MIN_PROBE_LEN};
