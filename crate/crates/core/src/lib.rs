//! Evolutionary multi-objective optimization of LLM prompts.
//!
//! Prompts are evolved with LLM-driven crossover and mutation so that the
//! texts they induce score high on two conflicting emotions at once.
//! Survivors are chosen by NSGA-II or SMS-EMOA and progress is measured by
//! the 2-D hypervolume of the population.

pub mod backends;
pub mod cli;
pub mod config;
pub mod domain;
pub mod moea;
pub mod report;
pub mod runner;
mod serde_ext;
pub mod variation;
