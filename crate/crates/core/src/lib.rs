//! Multi-scene, language-guided absolute camera pose regression.
//!
//! A single network reads an image and a scene caption, classifies which of
//! `K` scenes the image came from, and regresses a 6-DoF pose with the
//! matching per-scene head. Everything runs on a small `f64` tensor engine
//! with reverse-mode differentiation ([`numerics`]).

pub mod data;
pub mod geometry;
pub mod loss;
pub mod model;
pub mod numerics;
pub mod training;
