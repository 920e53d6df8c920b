//! Numerical model of content communities on a one-dimensional torus.
//!
//! Agents live on a ring of content types. Each agent has an interest kernel
//! (how likely content at some distance is worth reading) and an ability
//! kernel (how relevant the content it produces at some distance is). Interval
//! communities aggregate member interest into a demand profile, producers
//! concentrate their output on the single type that maximizes relevance times
//! demand, and the resulting supply is a pushforward density on a
//! sub-interval. The crate constructs covering equilibrium partitions of the
//! ring, verifies them by deviation search, and analyzes content-filtering
//! schemes (central filter agent, threshold filter, expert pre-filtering).

pub mod demand;
pub mod equilibrium;
pub mod error;
pub mod filtering;
pub mod geometry;
pub mod kernels;
pub mod numerics;
pub mod production;
pub mod supply;
pub mod utility;

pub use error::{Error, Result};
