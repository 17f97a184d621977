//! Hybrid neural path planning for grid-world logistics.
//!
//! The crate bundles the grid world and its movingai parsers, optimal search
//! baselines, a small autodiff tensor library, three learned planners
//! (Transformer sequence planner, GCN cost shaper, conditional path GAN),
//! prioritized multi-agent coordination, and the evaluation/ablation kit.

pub mod datagen;
pub mod evalkit;
pub mod fixtures;
pub mod gan;
pub mod gcn;
pub mod graph_env;
pub mod gridworld;
pub mod planners;
pub mod tensor;
pub mod transformer;
