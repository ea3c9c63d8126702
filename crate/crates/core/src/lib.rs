//! Repair of Android layout compatibility bugs: a layout model, a simulated
//! rendering oracle driven by an attribute knowledge base, fitness-guided
//! patch search, a three-agent LLM loop and an evaluation harness.

pub mod agents;
pub mod eval;
pub mod fitness;
pub mod kb;
pub mod orchestrator;
pub mod xml;
