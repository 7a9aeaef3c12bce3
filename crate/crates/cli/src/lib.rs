//! Scenario-driven front end: planning, MPC execution, reduction checks and
//! plotting.

pub mod commands;
pub mod svg;
