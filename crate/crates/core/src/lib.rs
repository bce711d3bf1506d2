//! Exact simulation and verification of the Clebsch-Gordan based quantum
//! algorithm for the hidden subgroup and hidden subgroup conjugacy problems
//! over the Heisenberg group `H_p`.

pub mod field;
pub mod group;
pub mod linalg;
pub mod reps;
pub mod states;
pub mod cg;
pub mod pipeline;
pub mod pgm;
