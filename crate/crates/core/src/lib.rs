//! Exact-arithmetic laboratory for slowly converging ergodic averages.
//!
//! Finite measure-preserving systems are single-cycle permutations on equal
//! mass atoms, described symbolically by [`cycle_ir::SystemIR`]. On top of
//! that sit an exact sliding-window engine for Birkhoff averages, a finite
//! tower-partition solver, and the two witness builders with their
//! inequality checks. No floating point enters any verification.

pub mod alpern;
pub mod check;
pub mod cli;
pub mod cycle_ir;
pub mod krengel;
pub mod podvigin;
pub mod rates;
pub mod rational;
pub mod report;
pub mod windows;
