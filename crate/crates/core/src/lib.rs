//! Systolic array simulation and cost modelling for FuSe convolutions.
//!
//! * [`ops`]: reference operators and MAC/parameter counting.
//! * [`ria`]: regular iterative algorithm analysis of recurrence systems.
//! * [`netmodel`]: network descriptions and the FuSe transformation pass.
//! * [`sim`]: cycle-level output-stationary array simulator.
//! * [`cost`]: closed-form latency model mirroring the simulator.
//! * [`cli`]: the `fuseconv` command line.

pub mod cli;
pub mod cost;
pub mod netmodel;
pub mod ops;
pub mod ria;
pub mod sim;
