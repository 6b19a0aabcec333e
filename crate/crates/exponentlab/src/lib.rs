//! Loss-exponent analysis for multihypothesis social learning.
//!
//! The library computes asymptotic loss decay exponents for a network of
//! "expert" agents observing independent information sources, plus a final
//! agent that observes raw data and one expert's decision. It also solves for
//! optimal observation policies (time allocation across sources), picks the
//! best expert to follow, and cross-validates everything with a Monte Carlo
//! simulator.

pub mod agent_opt;
pub mod expert_opt;
pub mod fenchel;
pub mod linalg;
pub mod linprog;
pub mod mgf;
pub mod reference;
pub mod regions;
pub mod report;
pub mod scenario;
pub mod simulate;
pub mod study;
