//! Language-model planning grounded by value functions.
//!
//! At each step a scorer rates every skill label as the continuation of a
//! few-shot prompt, an affordance source rates how likely each skill is to
//! succeed from the current state, and the planner executes the skill with
//! the best product.

pub mod affordance;
pub mod assets;
pub mod domain;
pub mod embedding;
pub mod evalharness;
pub mod langsim;
pub mod planner;
pub mod prompting;
pub mod rng;
pub mod scoring;
pub mod simenv;
