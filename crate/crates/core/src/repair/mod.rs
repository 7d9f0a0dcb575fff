//! Rule-based error detection, suggested corrections, and the flag ledger
//! through which every automated change awaits human validation.

mod detect;
mod fix;
mod infer;
mod ledger;
mod resolve;

use thiserror::Error;

use crate::access::{DenyReason, Role};
use crate::geometry::GeometryError;
use crate::model::ModelError;

pub use detect::{
    check_valve_degree, circle_fit, dangling_nodes, detect_dangling_ends, detect_duplicate_nodes,
    detect_symbol_circles, SymbolParams,
};
pub use fix::{apply_suggestion, merge_duplicate_nodes, replace_symbol, revert_suggestion};
pub use infer::{infer_missing_edges, repair_building_boundaries, InferenceParams, StreetCorridor};
pub use ledger::{
    AppliedEdit, EntityState, Flag, FlagLedger, FlagStatus, FlagTarget, Resolution, Rule,
    Suggestion, SuggestionAction, Verdict, LEDGER_VERSION,
};
pub use resolve::{audit_unflagged, record_manual_edit, resolve_flag};

#[derive(Debug, Error, PartialEq)]
pub enum RepairError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("unknown flag `{0}`")]
    UnknownFlag(String),
    #[error("unknown suggestion `{0}`")]
    UnknownSuggestion(String),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("role `{role}` may not resolve flags here ({})", .reason.as_str())]
    Unauthorized { role: Role, reason: DenyReason },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
