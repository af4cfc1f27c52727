//! HTTP and command-line front end for the shelter accessibility engine.

pub mod api;
pub mod workspace;

pub use api::{router, AppState};
pub use workspace::{
    ComputeRequest, ComputeResponse, PlacementMethod, PlacementRequest, PlacementResponse, ServiceError, Workspace,
};
