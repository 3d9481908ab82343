//! Deterministic simulator of closed-loop governance for scholarly publishing.
//!
//! Submissions flow through triage, reviewer assignment, noisy review,
//! meta-review, bounded escalation and a fixed decision rule. A bounded
//! controller adjusts the triage threshold, the AI reviewer fraction and the
//! escalation flag from aggregate signals. Every run is reproducible from its
//! seed and resolved configuration and leaves a hash-chained audit log.

pub mod adversary;
pub mod audit;
pub mod config;
pub mod engine;
pub mod error;
pub mod governance;
pub mod metrics;
pub mod pipeline;
pub mod postpub;
pub mod report;
pub mod rng;
pub mod summary;
pub mod world;

pub use config::{load_scenario, ScenarioConfig};
pub use engine::{run, run_in_memory, RunOutput, Simulation, StepOutput};
pub use error::{Error, Result};
pub use summary::Summary;
