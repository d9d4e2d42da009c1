//! A small CNN trained jointly with a fuzzy logic network extracted from
//! its decision stage.
//!
//! The perception side ([`perception`]) maps an image to 32 feature maps
//! and a linear decision layer. The logic side ([`logic`]) turns recurring
//! feature maps into predicates, wires them into one clause group per
//! class, and solves for decision values that trade closeness to the
//! network's outputs against clause satisfaction. [`game`] alternates the
//! two; [`experiments`] runs the four studies end to end.

pub mod data;
pub mod divergence;
pub mod error;
pub mod experiments;
pub mod game;
pub mod logic;
pub mod nn;
pub mod perception;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;

// The guide's code blocks run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/overview.md")]
    mod overview {}
    #[doc = include_str!("../../../book/src/perception.md")]
    mod perception {}
    #[doc = include_str!("../../../book/src/divergence.md")]
    mod divergence {}
    #[doc = include_str!("../../../book/src/logic.md")]
    mod logic {}
    #[doc = include_str!("../../../book/src/game.md")]
    mod game {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
