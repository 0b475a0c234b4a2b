//! Competitive equilibria for dividing chores.
//!
//! Agents are paid to do chores. At an equilibrium every agent earns its
//! budget doing only chores with minimum pain per buck (disutility divided
//! by price) and every chore gets done. The crate checks the structural
//! conditions that guarantee existence, verifies candidate equilibria,
//! enumerates all equilibria of small markets exactly, searches for one by
//! fixed-point iteration, and builds the hardness gadgets from 3-SAT and
//! polymatrix games.

pub mod check;
pub mod cli;
pub mod enumerate;
pub mod fixedpoint;
pub mod graph;
pub mod lp;
pub mod model;
pub mod polymatrix;
pub mod sat;

pub use model::{AnyCandidate, Candidate, ExactCandidate, FloatCandidate, Instance, Market, Rational};
