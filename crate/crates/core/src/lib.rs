//! Estimation of ultimate years of schooling (UYS) from right-censored
//! household-survey microdata.

pub mod aggregate;
pub mod data;
pub mod delta;
pub mod design;
pub mod glm;
mod linalg;
pub mod sim;
pub mod spatial;
pub mod weighted;
