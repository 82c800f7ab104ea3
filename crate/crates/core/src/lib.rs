//! Facial-expression recognition from landmark renderings, a robot board game
//! session engine, study statistics, and an HTTP service around them.

pub mod augment;
pub mod fer;
pub mod landmark;
pub mod nn;
pub mod service;
pub mod sessions;
pub mod stats;
