//! The two allocation environments and price-data plumbing.

pub mod portfolio;
pub mod prices;
pub mod synthetic;
