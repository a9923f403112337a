//! Benchmark environments.

pub mod baird;
pub mod cartpole;
pub mod tiles;

pub use baird::Baird;
pub use cartpole::{CartPole, CartPoleParams, CartPoleTask};
pub use tiles::TileCoder;
