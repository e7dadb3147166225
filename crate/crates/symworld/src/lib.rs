//! A symbolic world-model learning and planning engine: it learns
//! first-order predicates and lifted operators from autonomous interaction
//! with object-centric simulators, and plans hierarchically with the
//! learned abstractions.

pub mod abstraction;
pub mod domain;
pub mod dsl;
pub mod learner;
pub mod listing;
pub mod envs;
pub mod model;
pub mod online;
pub mod proposer;
pub mod perceive;
pub mod planner;
