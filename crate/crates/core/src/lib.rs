//! Geometry-first indoor scene scaffolding.
//!
//! The library turns a JSON floor-plan layout into a watertight structural mesh,
//! plans synthesis cameras over it, renders depth and condition images with a
//! software rasterizer, projects generated imagery back onto wall/floor/ceiling
//! texture atlases, places reconstructed objects, verifies generated images
//! against scaffold depth edges, and back-projects validated views into a point
//! cloud for splat initialization. Every stage is deterministic for a fixed
//! config and seed; generative models are reached only through adapter traits
//! with deterministic mocks for offline runs.

pub mod adapters;
pub mod cameras;
pub mod floorplan;
pub mod geom;
pub mod glb;
pub mod imgio;
pub mod objects;
pub mod pipeline;
pub mod recon;
pub mod render;
pub mod structmesh;
pub mod texproj;
pub mod verify;
