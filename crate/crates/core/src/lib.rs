pub mod error;
pub mod flow;
pub mod grid;
pub mod noise;
pub mod operators;
pub mod splitting;
pub mod reference;
pub mod experiment;
