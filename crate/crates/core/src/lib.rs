//! CEGAR-based 2QBF solving with ranking heuristics.
//!
//! * [`formula`]: 2QBF/CNF types and QDIMACS I/O
//! * [`sat`]: CDCL engine, enumeration, model counting, group cores
//! * [`cegar`]: the propose/refute/refine loop
//! * [`ranking`]: candidate and counterexample ranking heuristics
//! * [`gnn`]: graph encoding and message-passing inference
//! * [`datagen`]: formula families and training labels
//! * [`eval`]: dataset evaluation reports

pub mod formula;
pub mod sat;
pub mod cegar;
pub mod gnn;
pub mod ranking;
pub mod datagen;
pub mod eval;

pub use ndarray;
