//! Grasp candidate generation and hybrid physical grasp scoring on triangle meshes.

pub mod mesh;
pub mod candidates;
pub mod config;
pub mod eval;
pub mod force_closure;
pub mod gripper;
pub mod labels;
pub mod metrics;
pub mod pipeline;
pub mod scene;
