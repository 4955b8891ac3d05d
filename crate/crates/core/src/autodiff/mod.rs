//! Dense tensors with reverse-mode automatic differentiation and Adam.

mod gradcheck;
mod graph;
mod optim;
mod params;

pub use gradcheck::{
    all_coordinates, gradient_check, relative_error, sample_coordinates, Coordinate,
    REL_ERROR_FLOOR,
};
pub use graph::{sigmoid, ChunkStats, Graph, NodeId, BCE_CLAMP};
pub use optim::{adam_step, AdamConfig, AdamState};
pub use params::{ParamId, ParamStore, Parameter};
