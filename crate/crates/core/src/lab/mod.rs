//! Synthetic checks of the stopping-time bounds, plus deterministic audits of
//! the Case-2 schedule, the converse root equation and Fano's inequality.

mod audit;
mod fano;
mod roots;
mod walk;

pub use audit::{audit_schedule, AuditError, SchemeAudit};
pub use fano::{fano_check, fano_rhs, FanoReport};
pub use roots::{converse_roots, critical_b, ConverseRoots, RootsError};
pub use walk::{simulate_stopping, DriftWalkSpec, StepLaw, TwoRegime, WalkError, WalkResult, STEP_GUARD};
