//! Wire types of the campaign advisor API.
//!
//! | method | path | body | response |
//! |---|---|---|---|
//! | GET | `/healthz` | | [`Health`] |
//! | POST | `/sessions` | [`CreateSession`] | [`SessionCreated`] |
//! | GET | `/sessions` | | `Vec<`[`SessionInfo`]`>` |
//! | GET | `/sessions/{id}` | | [`SessionInfo`] |
//! | POST | `/sessions/{id}/suggest` | [`SuggestRequest`] | [`SuggestResponse`] |
//! | POST | `/sessions/{id}/observations` | [`ObservationRequest`] | [`ObservationResponse`] |
//! | GET | `/sessions/{id}/posterior` | | [`PosteriorResponse`] |
//! | GET | `/sessions/{id}/history` | | [`HistoryResponse`] |
//! | GET | `/sessions/{id}/replay` | | [`ReplayResponse`] |
//!
//! Failures carry an [`ErrorBody`] with status 404 (unknown session),
//! 409 (version conflict), 422 (invalid input) or 500.

use serde::{Deserialize, Serialize};

pub use spkg_core::belief::{BeliefSnapshot, SparsityPattern};
pub use spkg_core::campaign::{
    BeliefModel, HistoryEntry, ObservationRecord, PolicyConfig, Posterior, PosteriorDelta, SuggestMode, Suggestion,
};
pub use spkg_core::prior::PriorBundle;
pub use spkg_core::rna::{LibrarySpec, Probe};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
}

impl Health {
    pub fn ok() -> Self {
        Self { status: "ok".into() }
    }
}

/// Target molecule as FASTA text, optionally restricted to `[start, end]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MoleculeInput {
    pub fasta: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub molecule: MoleculeInput,
    /// Must have one coefficient per nucleotide of the (windowed) molecule.
    pub prior: PriorBundle,
    pub library: LibrarySpec,
    pub policy: PolicyConfig,
    /// `pair,energy` CSV replacing the bundled stacking table.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy_table: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionCreated {
    pub id: String,
    pub version: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub id: String,
    pub version: u64,
    pub molecule: String,
    pub first_position: usize,
    pub num_coefficients: usize,
    pub library: Vec<Probe>,
    pub policy: PolicyConfig,
    pub observations: usize,
    pub suggestion_counter: u64,
    pub pending: Option<Suggestion>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuggestRequest {
    pub mode: SuggestMode,
    /// Rejected with 409 when it differs from the session version.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_version: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuggestResponse {
    pub id: String,
    pub version: u64,
    pub suggestion: Suggestion,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationRequest {
    pub probe: Probe,
    pub value: f64,
    /// Defaults to the session's configured noise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_sd: Option<f64>,
    pub expected_version: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationResponse {
    pub id: String,
    pub version: u64,
    pub delta: PosteriorDelta,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorResponse {
    pub id: String,
    pub version: u64,
    #[serde(flatten)]
    pub posterior: Posterior,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryResponse {
    pub id: String,
    pub version: u64,
    pub history: Vec<HistoryEntry>,
}

/// The belief rebuilt from the prior and the history, compared with the live one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayResponse {
    pub id: String,
    pub version: u64,
    pub matches: bool,
    pub belief: BeliefSnapshot,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorDetail {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: ErrorDetail,
}

impl ErrorBody {
    pub fn new(code: impl Into<String>, message: impl Into<String>, field: Option<String>) -> Self {
        Self {
            error: ErrorDetail {
                code: code.into(),
                message: message.into(),
                field,
            },
        }
    }
}

pub mod codes {
    pub const NOT_FOUND: &str = "not_found";
    pub const VERSION_CONFLICT: &str = "version_conflict";
    pub const INVALID: &str = "invalid_input";
    pub const MALFORMED: &str = "malformed_request";
    pub const INTERNAL: &str = "internal";
}
