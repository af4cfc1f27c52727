#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod access;
pub mod demand;
pub mod equity;
pub mod geojson;
pub mod geometry;
pub mod placement;
pub mod road;
pub mod scenario;
