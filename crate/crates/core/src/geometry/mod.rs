//! Triangle meshes and the geometric kernels built on them.

mod bvh;
mod contact;
pub mod footprint;
mod mesh;
pub mod occupancy;
mod pose;
pub mod stl;
pub mod tritri;

use thiserror::Error;

pub use bvh::{ray_triangle, raycast_linear, Bvh, BvhNode, BvhNodeKind, Hit, MAX_LEAF_SIZE};
pub use contact::{contact_count, contact_count_objects, CollisionObject};
pub use footprint::{
    convex_hull, enclosing_polygon, enclosing_polygon_with, enclosing_rectangle, FootprintParams,
    FootprintPolygon, Rect2D,
};
pub use mesh::{box_mesh, centered_box, uv_sphere, Aabb, AssetId, TriMesh, DEGENERATE_AREA, WELD_TOLERANCE};
pub use occupancy::{rasterize_occupancy, CellState, OccupancyGrid2D};
pub use pose::Pose;
pub use stl::{load_stl, write_stl_binary, StlError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
}
