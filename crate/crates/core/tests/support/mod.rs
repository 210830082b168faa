//! Oracles shared by the integration tests and the acceptance target.
#![allow(dead_code)]

pub mod gradcheck;
pub mod protocol;
pub mod shapes;
pub mod shapley_oracle;
