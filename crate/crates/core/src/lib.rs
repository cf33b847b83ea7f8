//! Control-flow based error-resilience analysis.
//!
//! The pipeline runs from execution traces (either produced by the toy
//! fault-injection [`harness`] or supplied by external tools in the text
//! [`trace`] format) to per-function loop sensitive graphs ([`lsg`]), golden
//! versus faulty differences ([`diff`]), campaign-wide critical vector graphs
//! ([`cvg`]) and finally render-ready layered layouts ([`layout`]) that can be
//! exported as JSON, SVG or DOT ([`export`]). A [`workspace`] persists every
//! intermediate artifact as canonical JSON so that the service layer can
//! serve them verbatim.

pub mod canonical;
pub mod cvg;
pub mod diff;
pub mod export;
pub mod harness;
pub mod layout;
pub mod lsg;
pub mod manifest;
pub mod node;
pub mod trace;
pub mod workspace;

pub use cvg::{accumulate, criticality_ranking, Cvg, CvgError, EdgeVector, RankedEdge};
pub use diff::{
    affected_count, diff_lsg, function_statuses, DiffEdge, DiffError, DiffLsg, FunctionStatus,
    Status,
};
pub use layout::{anomaly_map, layout, LayoutGraph, LayoutOptions, StyledGraph};
pub use lsg::{build_all_lsgs, build_lsg, Lsg, LsgError};
pub use node::NodeId;
pub use trace::{
    parse_trace, validate_run, BlockAddr, FunctionRecord, InjectionSite, RunKind, RunTrace,
    TraceError, TraceEvent, ValidationReport,
};
