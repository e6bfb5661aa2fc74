//! Point cloud container, exact k-NN index and PCA normal estimation.

mod cloud;
mod knn;
mod normals;

pub use cloud::{PointCloud, Vec3, NORMAL_LENGTH_TOLERANCE};
pub use knn::NeighborIndex;
pub use normals::{
    canonical_orientation, estimate_normals, pca_normal, DEFAULT_NORMAL_K, DEGENERATE_NORMAL,
};
