//! Feedback structure and comparative statics.

mod equilibrium;
mod graph;
mod loops;

use thiserror::Error;

use crate::engine::Fault;

pub use equilibrium::{identify_schedules, solve_linear_equilibrium, EquilibriumPoint, PRICE_TOLERANCE};
pub use graph::{build_causal_graph, CausalGraph, Link, LinkKind, Polarity, ABSOLUTE_FLOOR, RELATIVE_STEP};
pub use loops::{enumerate_loops, enumerate_loops_with_cap, FeedbackLoop, LoopLink, LoopPolarity, LoopReport, DEFAULT_LOOP_CAP};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("more than {cap} feedback loops")]
    LoopExplosion { cap: usize },
    #[error("supply and demand never cross (shift {shift})")]
    NoCrossing { shift: f64 },
    #[error("`{name}` is not a table")]
    NotATable { name: String },
    #[error("expected exactly one table with `{needle}` in its name, found {found}")]
    SchedulesNotIdentified { needle: String, found: usize },
    #[error(transparent)]
    Fault(#[from] Fault),
}
