//! Pinhole projection of world points into posed frames, with a depth-buffer
//! visibility test.
//!
//! Cameras follow the usual computer-vision convention: +z looks forward,
//! +x points right and +y points down in the image. Poses are stored
//! camera-to-world and inverted once at construction.

use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Matrix4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, Vec3};
use crate::partition::Partition;

/// Points closer than this to the image plane are treated as behind the camera.
pub const MIN_DEPTH: f64 = 1e-6;

pub const DEFAULT_DEPTH_TOLERANCE_M: f64 = 0.05;

const ORTHONORMAL_TOLERANCE: f64 = 1e-4;

/// On-disk camera description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraFile {
    pub frame_id: i64,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    /// Row-major 4x4 camera-to-world transform.
    pub cam_to_world: [f64; 16],
}

#[derive(Clone, Debug, PartialEq)]
pub struct CameraFrame {
    pub frame_id: i64,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub cam_to_world: Matrix4<f64>,
    world_to_cam_rot: Matrix3<f64>,
    world_to_cam_trans: Vec3,
}

impl CameraFrame {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        frame_id: i64,
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
        cam_to_world: Matrix4<f64>,
    ) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0) {
            return Err(Error::Camera(format!("frame {frame_id}: focal lengths must be positive")));
        }
        if width == 0 || height == 0 {
            return Err(Error::Camera(format!("frame {frame_id}: raster size must be positive")));
        }
        if !cam_to_world.iter().all(|v| v.is_finite()) {
            return Err(Error::Camera(format!("frame {frame_id}: pose is not finite")));
        }
        let rot: Matrix3<f64> = cam_to_world.fixed_view::<3, 3>(0, 0).into_owned();
        let gram = rot.transpose() * rot;
        if (gram - Matrix3::identity()).amax() > ORTHONORMAL_TOLERANCE {
            return Err(Error::Camera(format!(
                "frame {frame_id}: pose rotation is not orthonormal"
            )));
        }
        let trans: Vec3 = cam_to_world.fixed_view::<3, 1>(0, 3).into_owned();
        let world_to_cam_rot = rot.transpose();
        let world_to_cam_trans = -(world_to_cam_rot * trans);
        Ok(CameraFrame {
            frame_id,
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            cam_to_world,
            world_to_cam_rot,
            world_to_cam_trans,
        })
    }

    pub fn from_file(file: &CameraFile) -> Result<Self> {
        let m = Matrix4::from_row_slice(&file.cam_to_world);
        CameraFrame::new(
            file.frame_id,
            file.fx,
            file.fy,
            file.cx,
            file.cy,
            file.width,
            file.height,
            m,
        )
    }

    pub fn to_file(&self) -> CameraFile {
        let mut cam_to_world = [0.0; 16];
        for r in 0..4 {
            for c in 0..4 {
                cam_to_world[r * 4 + c] = self.cam_to_world[(r, c)];
            }
        }
        CameraFile {
            frame_id: self.frame_id,
            fx: self.fx,
            fy: self.fy,
            cx: self.cx,
            cy: self.cy,
            width: self.width,
            height: self.height,
            cam_to_world,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: CameraFile = serde_json::from_str(&text)
            .map_err(|e| Error::Camera(format!("{}: {e}", path.display())))?;
        CameraFrame::from_file(&file)
    }

    pub fn world_to_camera(&self, p: &Vec3) -> Vec3 {
        self.world_to_cam_rot * p + self.world_to_cam_trans
    }

    pub fn camera_to_world(&self, p: &Vec3) -> Vec3 {
        let rot = self.cam_to_world.fixed_view::<3, 3>(0, 0);
        let trans = self.cam_to_world.fixed_view::<3, 1>(0, 3);
        rot * p + trans
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vec3 {
        self.cam_to_world.fixed_view::<3, 1>(0, 3).into_owned()
    }
}

/// Per-pixel depth in meters; 0 marks an invalid pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthRaster {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl DepthRaster {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::Dimension(format!(
                "depth raster {width}x{height} has {} values",
                values.len()
            )));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Raster("depth values must be finite and >= 0".into()));
        }
        Ok(DepthRaster {
            width,
            height,
            values,
        })
    }

    #[inline]
    pub fn at(&self, u: usize, v: usize) -> f64 {
        self.values[v * self.width + u]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection {
    pub u: f64,
    pub v: f64,
    pub z: f64,
}

/// Project a world point; `None` when it is behind (or on) the image plane.
pub fn project_point(p: &Vec3, cam: &CameraFrame) -> Option<Projection> {
    let c = cam.world_to_camera(p);
    if c.z <= MIN_DEPTH {
        return None;
    }
    Some(Projection {
        u: cam.fx * c.x / c.z + cam.cx,
        v: cam.fy * c.y / c.z + cam.cy,
        z: c.z,
    })
}

/// Inverse of [`project_point`] for a known depth.
pub fn back_project(u: f64, v: f64, depth: f64, cam: &CameraFrame) -> Vec3 {
    let c = Vec3::new((u - cam.cx) * depth / cam.fx, (v - cam.cy) * depth / cam.fy, depth);
    cam.camera_to_world(&c)
}

/// Nearest pixel for continuous coordinates, rounding halves up.
pub fn pixel_of(u: f64, v: f64, width: usize, height: usize) -> Option<(usize, usize)> {
    let pu = (u + 0.5).floor();
    let pv = (v + 0.5).floor();
    if pu >= 0.0 && pv >= 0.0 && pu < width as f64 && pv < height as f64 {
        Some((pu as usize, pv as usize))
    } else {
        None
    }
}

pub fn visibility_test(u: f64, v: f64, z: f64, depth: &DepthRaster, tol: f64) -> bool {
    match pixel_of(u, v, depth.width, depth.height) {
        Some((pu, pv)) => {
            let d = depth.at(pu, pv);
            d > 0.0 && (z - d).abs() <= tol
        }
        None => false,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FootprintEntry {
    pub point: usize,
    pub u: usize,
    pub v: usize,
    pub visible: bool,
}

/// In-frustum points of a cloud in one frame, in ascending point order.
#[derive(Clone, Debug, PartialEq)]
pub struct PixelFootprint {
    pub frame_id: i64,
    pub width: usize,
    pub height: usize,
    pub entries: Vec<FootprintEntry>,
}

/// `partition` is only checked for length; the footprint depends on the cloud alone.
pub fn footprint(
    cloud: &PointCloud,
    partition: &Partition,
    cam: &CameraFrame,
    depth: &DepthRaster,
    tol: f64,
) -> Result<PixelFootprint> {
    if partition.len() != cloud.len() {
        return Err(Error::Dimension(format!(
            "partition has {} labels for {} points",
            partition.len(),
            cloud.len()
        )));
    }
    if depth.width != cam.width || depth.height != cam.height {
        return Err(Error::Dimension(format!(
            "frame {}: depth raster is {}x{} but camera is {}x{}",
            cam.frame_id, depth.width, depth.height, cam.width, cam.height
        )));
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::Config(format!("depth tolerance must be > 0 (got {tol})")));
    }
    let entries = cloud
        .positions
        .iter()
        .enumerate()
        .filter_map(|(i, p)| {
            let proj = project_point(p, cam)?;
            let (u, v) = pixel_of(proj.u, proj.v, cam.width, cam.height)?;
            let d = depth.at(u, v);
            Some(FootprintEntry {
                point: i,
                u,
                v,
                visible: d > 0.0 && (proj.z - d).abs() <= tol,
            })
        })
        .collect();
    Ok(PixelFootprint {
        frame_id: cam.frame_id,
        width: cam.width,
        height: cam.height,
        entries,
    })
}
