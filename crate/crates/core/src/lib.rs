pub mod cli;
pub mod config;
pub mod expr;
pub mod grid;
pub mod morphism;
pub mod obstruction;
pub mod poisson;
pub mod resolution;
