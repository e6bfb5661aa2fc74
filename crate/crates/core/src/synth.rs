//! Synthetic multi-view scenes with exact ground truth.
//!
//! Scenes are built from axis-aligned boxes and rectangular plane patches.
//! Surface points are sampled uniformly per face; depth and mask rasters are
//! rendered per camera by casting one ray through every pixel center. Mask
//! rasters can be corrupted by splitting objects into two parts or by
//! jittering mask boundaries, which mimics part-level 2D segmenters.

use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Matrix4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::affinity::MaskRaster;
use crate::error::{Error, Result};
use crate::frames::{save_frames, Frame, FrameSet, DEPTH_UNITS_PER_METER};
use crate::geometry::{PointCloud, Vec3};
use crate::io::ply::{color_to_u8, save_ply};
use crate::merging::{boxes_to_json, Box3D};
use crate::partition::{write_labels, Partition};
use crate::projection::{CameraFrame, DepthRaster};

const SURFACE_EPS: f64 = 1e-6;
const RAY_EPS: f64 = 1e-9;
/// Padding applied to the flat axis of plane patches when boxing them.
const FLAT_BOX_PAD: f64 = 0.01;
const ORBIT_ATTEMPTS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObjectSpec {
    /// Axis-aligned solid box.
    Box {
        center: [f64; 3],
        size: [f64; 3],
        color: [f64; 3],
    },
    /// Rectangle perpendicular to `normal`; `size` spans the two other axes
    /// in x, y, z order.
    Plane {
        center: [f64; 3],
        normal: Axis,
        size: [f64; 2],
        color: [f64; 3],
    },
}

impl ObjectSpec {
    fn color(&self) -> [f64; 3] {
        match self {
            ObjectSpec::Box { color, .. } | ObjectSpec::Plane { color, .. } => *color,
        }
    }

    fn bounds(&self) -> ([f64; 3], [f64; 3]) {
        match self {
            ObjectSpec::Box { center, size, .. } => {
                let lo = [0, 1, 2].map(|a| center[a] - size[a] / 2.0);
                let hi = [0, 1, 2].map(|a| center[a] + size[a] / 2.0);
                (lo, hi)
            }
            ObjectSpec::Plane {
                center,
                normal,
                size,
                ..
            } => {
                let n = normal.index();
                let mut lo = *center;
                let mut hi = *center;
                for (k, a) in other_axes(n).into_iter().enumerate() {
                    lo[a] -= size[k] / 2.0;
                    hi[a] += size[k] / 2.0;
                }
                (lo, hi)
            }
        }
    }
}

fn other_axes(n: usize) -> [usize; 2] {
    match n {
        0 => [1, 2],
        1 => [0, 2],
        _ => [0, 1],
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoomBounds {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Intrinsics {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Default for Intrinsics {
    fn default() -> Self {
        Intrinsics {
            width: 640,
            height: 480,
            fx: 525.0,
            fy: 525.0,
            cx: 319.5,
            cy: 239.5,
        }
    }
}

/// Cameras on a horizontal circle around `target`, all looking at it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Orbit {
    pub radius: f64,
    /// Camera height (world z).
    pub height: f64,
    pub count: usize,
    #[serde(default)]
    pub target: [f64; 3],
    /// Angle of the first camera, degrees.
    #[serde(default)]
    pub phase_deg: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraSpec {
    #[serde(default)]
    pub intrinsics: Intrinsics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orbit: Option<Orbit>,
    /// Explicit row-major camera-to-world poses.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub poses: Vec<[f64; 16]>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitAxisPolicy {
    /// Split across the longer side of the object's image-space bounding box.
    #[default]
    Longer,
    Horizontal,
    Vertical,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskCorruption {
    #[serde(default)]
    pub part_split_prob: f64,
    #[serde(default)]
    pub split_axis_policy: SplitAxisPolicy,
    #[serde(default)]
    pub boundary_noise_px: u32,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    #[serde(default)]
    pub color_sigma: f64,
    #[serde(default)]
    pub position_sigma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub objects: Vec<ObjectSpec>,
    pub room: RoomBounds,
    pub points_per_m2: f64,
    pub cameras: CameraSpec,
    #[serde(default)]
    pub mask_corruption: MaskCorruption,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub seed: u64,
}

const PALETTE: [[f64; 3]; 7] = [
    [0.85, 0.15, 0.15],
    [0.15, 0.7, 0.2],
    [0.15, 0.3, 0.85],
    [0.9, 0.8, 0.1],
    [0.75, 0.2, 0.75],
    [0.1, 0.75, 0.8],
    [0.95, 0.5, 0.1],
];

impl SceneSpec {
    /// The "room-8" family: a gray floor and seven well-separated boxes
    /// with distinct colors, seen by twelve 640x480 orbit cameras.
    pub fn room8(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x524f_4f4d_0008);
        let half = 1.25;
        let gap = 0.25;
        let mut placed: Vec<([f64; 2], [f64; 2])> = Vec::new();
        let mut objects = vec![ObjectSpec::Plane {
            center: [0.0, 0.0, 0.0],
            normal: Axis::Z,
            size: [3.2, 3.2],
            color: [0.55, 0.55, 0.55],
        }];
        let mut k = 0;
        while placed.len() < 7 {
            // Fall back to smaller boxes if the floor gets crowded.
            let shrink = if k > 2000 { 0.6 } else { 1.0 };
            k += 1;
            let sx = rng.gen_range(0.25..0.55) * shrink;
            let sy = rng.gen_range(0.25..0.55) * shrink;
            let sz = rng.gen_range(0.2..0.6);
            let cx = rng.gen_range(-half + sx / 2.0..half - sx / 2.0);
            let cy = rng.gen_range(-half + sy / 2.0..half - sy / 2.0);
            let lo = [cx - sx / 2.0, cy - sy / 2.0];
            let hi = [cx + sx / 2.0, cy + sy / 2.0];
            let clear = placed.iter().all(|(plo, phi)| {
                lo[0] > phi[0] + gap || hi[0] < plo[0] - gap || lo[1] > phi[1] + gap || hi[1] < plo[1] - gap
            });
            if !clear {
                continue;
            }
            let color = PALETTE[placed.len()];
            placed.push((lo, hi));
            objects.push(ObjectSpec::Box {
                center: [cx, cy, sz / 2.0],
                size: [sx, sy, sz],
                color,
            });
        }
        SceneSpec {
            objects,
            room: RoomBounds {
                min: [-1.6, -1.6, -0.1],
                max: [1.6, 1.6, 2.5],
            },
            points_per_m2: 2000.0,
            cameras: CameraSpec {
                intrinsics: Intrinsics::default(),
                orbit: Some(Orbit {
                    radius: 2.6,
                    height: 1.9,
                    count: 12,
                    target: [0.0, 0.0, 0.2],
                    phase_deg: 0.0,
                }),
                poses: Vec::new(),
            },
            mask_corruption: MaskCorruption::default(),
            noise: NoiseSpec {
                color_sigma: 0.01,
                position_sigma: 0.0,
            },
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Scene(m));
        if self.objects.is_empty() {
            return bad("scene needs at least one object".into());
        }
        if !(self.points_per_m2 > 0.0 && self.points_per_m2.is_finite()) {
            return bad("points_per_m2 must be > 0".into());
        }
        for (i, o) in self.objects.iter().enumerate() {
            if o.color().iter().any(|c| !(0.0..=1.0).contains(c)) {
                return bad(format!("object {i}: color outside [0,1]"));
            }
            let positive = match o {
                ObjectSpec::Box { size, .. } => size.iter().all(|s| *s > 0.0),
                ObjectSpec::Plane { size, .. } => size.iter().all(|s| *s > 0.0),
            };
            if !positive {
                return bad(format!("object {i}: sizes must be positive"));
            }
        }
        let c = &self.cameras;
        let count = c.poses.len() + c.orbit.as_ref().map_or(0, |o| o.count);
        if count == 0 {
            return bad("scene needs at least one camera".into());
        }
        let m = &self.mask_corruption;
        if !(0.0..=1.0).contains(&m.part_split_prob) {
            return bad("part_split_prob must lie in [0, 1]".into());
        }
        if self.noise.color_sigma < 0.0 || self.noise.position_sigma < 0.0 {
            return bad("noise sigmas must be >= 0".into());
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Scene(format!("{}: {e}", path.display())))
    }
}

/// A generated scene and its ground truth.
#[derive(Clone, Debug)]
pub struct SynthScene {
    /// Cloud with the ground-truth labels attached.
    pub cloud: PointCloud,
    pub gt: Partition,
    /// Tight box per object, in object order.
    pub boxes: Vec<Box3D>,
    pub frames: FrameSet,
}

#[derive(Clone, Copy, Debug)]
struct Face {
    object: usize,
    axis: usize,
    offset: f64,
    lo: [f64; 2],
    hi: [f64; 2],
}

impl Face {
    fn area(&self) -> f64 {
        (self.hi[0] - self.lo[0]) * (self.hi[1] - self.lo[1])
    }
}

fn faces_of(object: usize, spec: &ObjectSpec) -> Vec<Face> {
    let (lo, hi) = spec.bounds();
    let mut faces = Vec::new();
    let axes: Vec<usize> = match spec {
        ObjectSpec::Box { .. } => vec![0, 1, 2],
        ObjectSpec::Plane { normal, .. } => vec![normal.index()],
    };
    for axis in axes {
        let [a, b] = other_axes(axis);
        let offsets: Vec<f64> = if lo[axis] == hi[axis] {
            vec![lo[axis]]
        } else {
            vec![lo[axis], hi[axis]]
        };
        for offset in offsets {
            faces.push(Face {
                object,
                axis,
                offset,
                lo: [lo[a], lo[b]],
                hi: [hi[a], hi[b]],
            });
        }
    }
    faces
}

/// Whether `p` lies in the closed volume of object `o` (a plane counts as
/// a thin slab).
fn inside_object(p: &Vec3, o: &ObjectSpec) -> bool {
    let (lo, hi) = o.bounds();
    (0..3).all(|a| p[a] >= lo[a] - SURFACE_EPS && p[a] <= hi[a] + SURFACE_EPS)
}

/// Ray hit distance against one object, `None` on a miss.
fn intersect(origin: &Vec3, dir: &Vec3, o: &ObjectSpec) -> Option<f64> {
    let (lo, hi) = o.bounds();
    match o {
        ObjectSpec::Box { .. } => {
            let mut t_near = f64::NEG_INFINITY;
            let mut t_far = f64::INFINITY;
            for a in 0..3 {
                if dir[a].abs() < RAY_EPS {
                    if origin[a] < lo[a] || origin[a] > hi[a] {
                        return None;
                    }
                    continue;
                }
                let t1 = (lo[a] - origin[a]) / dir[a];
                let t2 = (hi[a] - origin[a]) / dir[a];
                t_near = t_near.max(t1.min(t2));
                t_far = t_far.min(t1.max(t2));
            }
            (t_near <= t_far && t_near > RAY_EPS).then_some(t_near)
        }
        ObjectSpec::Plane { normal, .. } => {
            let n = normal.index();
            if dir[n].abs() < RAY_EPS {
                return None;
            }
            let t = (lo[n] - origin[n]) / dir[n];
            if t <= RAY_EPS {
                return None;
            }
            let hit = origin + dir * t;
            let [a, b] = other_axes(n);
            let inside = hit[a] >= lo[a] && hit[a] <= hi[a] && hit[b] >= lo[b] && hit[b] <= hi[b];
            inside.then_some(t)
        }
    }
}

/// Nearest surface along a ray: `(distance, object index)`.
pub fn cast_ray(origin: &Vec3, dir: &Vec3, objects: &[ObjectSpec]) -> Option<(f64, usize)> {
    let mut best: Option<(f64, usize)> = None;
    for (i, o) in objects.iter().enumerate() {
        if let Some(t) = intersect(origin, dir, o) {
            if best.map_or(true, |(bt, _)| t < bt) {
                best = Some((t, i));
            }
        }
    }
    best
}

/// Camera-to-world pose at `eye` looking at `target` with world +z up.
pub fn look_at(eye: Vec3, target: Vec3) -> Result<Matrix4<f64>> {
    let forward = (target - eye)
        .try_normalize(1e-12)
        .ok_or_else(|| Error::Scene("camera coincides with its target".into()))?;
    let right = forward
        .cross(&Vec3::z())
        .try_normalize(1e-12)
        .ok_or_else(|| Error::Scene("camera looks straight up or down".into()))?;
    let down = forward.cross(&right);
    let rot = Matrix3::from_columns(&[right, down, forward]);
    let mut m = Matrix4::identity();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&rot);
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(&eye);
    Ok(m)
}

fn cameras_for(spec: &SceneSpec, attempt: usize) -> Result<Vec<CameraFrame>> {
    let k = &spec.cameras.intrinsics;
    let mut poses: Vec<Matrix4<f64>> = spec
        .cameras
        .poses
        .iter()
        .map(|p| Matrix4::from_row_slice(p))
        .collect();
    if let Some(orbit) = &spec.cameras.orbit {
        let target = Vec3::from(orbit.target);
        let step = 360.0 / orbit.count.max(1) as f64;
        let phase = orbit.phase_deg + step * attempt as f64 / ORBIT_ATTEMPTS as f64;
        for i in 0..orbit.count {
            let angle = (phase + step * i as f64).to_radians();
            let eye = Vec3::new(
                target.x + orbit.radius * angle.cos(),
                target.y + orbit.radius * angle.sin(),
                orbit.height,
            );
            poses.push(look_at(eye, target)?);
        }
    }
    poses
        .into_iter()
        .enumerate()
        .map(|(i, pose)| CameraFrame::new(i as i64, k.fx, k.fy, k.cx, k.cy, k.width, k.height, pose))
        .collect()
}

/// Render analytic depth (meters, quantized to millimeters) and object masks
/// (object index + 1, 0 where the ray escapes).
pub fn render_frame(cam: &CameraFrame, objects: &[ObjectSpec]) -> (DepthRaster, MaskRaster) {
    let (w, h) = (cam.width, cam.height);
    let origin = cam.center();
    let rot = cam.cam_to_world.fixed_view::<3, 3>(0, 0).into_owned();
    let mut depth = vec![0.0; w * h];
    let mut ids = vec![0u32; w * h];
    for v in 0..h {
        for u in 0..w {
            let d_cam = Vec3::new((u as f64 - cam.cx) / cam.fx, (v as f64 - cam.cy) / cam.fy, 1.0);
            let dir = rot * d_cam;
            if let Some((t, obj)) = cast_ray(&origin, &dir, objects) {
                let mm = (t * DEPTH_UNITS_PER_METER).round();
                if mm > 0.0 && mm <= u16::MAX as f64 {
                    depth[v * w + u] = mm / DEPTH_UNITS_PER_METER;
                    ids[v * w + u] = obj as u32 + 1;
                }
            }
        }
    }
    (
        DepthRaster {
            width: w,
            height: h,
            values: depth,
        },
        MaskRaster {
            width: w,
            height: h,
            ids,
        },
    )
}

/// Split every object mask (with probability `prob`) into two parts with
/// distinct ids. The second part of object `k` gets id `num_objects + k + 1`.
fn split_parts(masks: &mut MaskRaster, num_objects: usize, prob: f64, policy: SplitAxisPolicy, rng: &mut ChaCha8Rng) {
    let (w, h) = (masks.width, masks.height);
    let mut bounds = vec![(usize::MAX, usize::MAX, 0usize, 0usize); num_objects];
    for v in 0..h {
        for u in 0..w {
            let id = masks.ids[v * w + u] as usize;
            if id == 0 || id > num_objects {
                continue;
            }
            let b = &mut bounds[id - 1];
            b.0 = b.0.min(u);
            b.1 = b.1.min(v);
            b.2 = b.2.max(u);
            b.3 = b.3.max(v);
        }
    }
    for (k, &(u0, v0, u1, v1)) in bounds.iter().enumerate() {
        let draw: f64 = rng.gen();
        if u0 == usize::MAX || draw >= prob {
            continue;
        }
        let across_u = match policy {
            SplitAxisPolicy::Longer => u1 - u0 >= v1 - v0,
            SplitAxisPolicy::Vertical => true,
            SplitAxisPolicy::Horizontal => false,
        };
        let (lo, hi) = if across_u { (u0, u1) } else { (v0, v1) };
        if hi == lo {
            continue;
        }
        let mid = (lo + hi) as f64 / 2.0;
        let part = (num_objects + k + 1) as u32;
        for v in v0..=v1 {
            for u in u0..=u1 {
                let i = v * w + u;
                let coord = if across_u { u } else { v };
                if masks.ids[i] == k as u32 + 1 && coord as f64 > mid {
                    masks.ids[i] = part;
                }
            }
        }
    }
}

/// Randomly move mask boundaries by up to `radius` pixels. Pixels without
/// depth never receive a nonzero id.
fn jitter_boundaries(masks: &mut MaskRaster, depth: &DepthRaster, radius: u32, rng: &mut ChaCha8Rng) {
    let (w, h) = (masks.width, masks.height);
    for _ in 0..radius {
        let snapshot = masks.ids.clone();
        for v in 0..h {
            for u in 0..w {
                let i = v * w + u;
                let mut options = [0u32; 4];
                let mut n = 0;
                let neighbors = [
                    (u > 0).then(|| i - 1),
                    (u + 1 < w).then(|| i + 1),
                    (v > 0).then(|| i - w),
                    (v + 1 < h).then(|| i + w),
                ];
                for j in neighbors.into_iter().flatten() {
                    if snapshot[j] != snapshot[i] {
                        options[n] = snapshot[j];
                        n += 1;
                    }
                }
                if n == 0 {
                    continue;
                }
                let flip: bool = rng.gen();
                let pick = options[rng.gen_range(0..n)];
                if flip && (pick == 0 || depth.values[i] > 0.0) {
                    masks.ids[i] = pick;
                }
            }
        }
    }
}

fn frame_seed(seed: u64, frame: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (frame as u64).wrapping_add(0xF00D)
}

/// Sample points, render all frames and derive ground truth.
pub fn generate_scene(spec: &SceneSpec) -> Result<SynthScene> {
    spec.validate()?;
    let objects = &spec.objects;

    // Surface sampling, single-threaded in object order.
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let pos_noise = Normal::new(0.0, spec.noise.position_sigma.max(0.0))
        .map_err(|e| Error::Scene(e.to_string()))?;
    let col_noise = Normal::new(0.0, spec.noise.color_sigma.max(0.0))
        .map_err(|e| Error::Scene(e.to_string()))?;
    let mut positions = Vec::new();
    let mut colors = Vec::new();
    let mut labels = Vec::new();
    for (oi, o) in objects.iter().enumerate() {
        let base = o.color();
        for face in faces_of(oi, o) {
            let count = (face.area() * spec.points_per_m2).round() as usize;
            let [a, b] = other_axes(face.axis);
            for _ in 0..count {
                let mut p = Vec3::zeros();
                p[face.axis] = face.offset;
                p[a] = rng.gen_range(face.lo[0]..=face.hi[0]);
                p[b] = rng.gen_range(face.lo[1]..=face.hi[1]);
                let jitter = Vec3::new(pos_noise.sample(&mut rng), pos_noise.sample(&mut rng), pos_noise.sample(&mut rng));
                let cj = [col_noise.sample(&mut rng), col_noise.sample(&mut rng), col_noise.sample(&mut rng)];
                let hidden = objects
                    .iter()
                    .enumerate()
                    .any(|(j, other)| j != face.object && inside_object(&p, other));
                if hidden {
                    continue;
                }
                let p = p + jitter;
                // Store exactly what a PLY round trip would give back.
                positions.push(p.map(|c| c as f32 as f64));
                colors.push(Vec3::from([0, 1, 2].map(|k| color_to_u8(base[k] + cj[k]) as f64 / 255.0)));
                labels.push(oi as i64);
            }
        }
    }
    if positions.is_empty() {
        return Err(Error::Scene("no points were sampled".into()));
    }

    // Camera validity and rendering.
    let mut chosen = None;
    for attempt in 0..ORBIT_ATTEMPTS {
        let cams = cameras_for(spec, attempt)?;
        for cam in &cams {
            let c = cam.center();
            if let Some(i) = objects.iter().position(|o| matches!(o, ObjectSpec::Box { .. }) && inside_object(&c, o)) {
                return Err(Error::Scene(format!("camera {} is inside object {i}", cam.frame_id)));
            }
        }
        let rendered: Vec<(DepthRaster, MaskRaster)> =
            cams.par_iter().map(|cam| render_frame(cam, objects)).collect();
        let mut seen = vec![false; objects.len()];
        for (_, m) in &rendered {
            for &id in &m.ids {
                if id > 0 {
                    seen[id as usize - 1] = true;
                }
            }
        }
        if seen.iter().all(|s| *s) {
            chosen = Some((cams, rendered));
            break;
        }
        if spec.cameras.orbit.is_none() {
            let missing = seen.iter().position(|s| !s).unwrap_or_default();
            return Err(Error::Scene(format!("object {missing} is not visible from any camera")));
        }
    }
    let (cams, rendered) = chosen.ok_or_else(|| {
        Error::Scene(format!("some object stays invisible after {ORBIT_ATTEMPTS} orbit placements"))
    })?;

    let corruption = &spec.mask_corruption;
    let frames: Vec<Frame> = cams
        .into_iter()
        .zip(rendered)
        .enumerate()
        .map(|(f, (cam, (depth, mut masks)))| {
            let mut frng = ChaCha8Rng::seed_from_u64(frame_seed(spec.seed, f));
            if corruption.part_split_prob > 0.0 {
                split_parts(&mut masks, objects.len(), corruption.part_split_prob, corruption.split_axis_policy, &mut frng);
            }
            if corruption.boundary_noise_px > 0 {
                jitter_boundaries(&mut masks, &depth, corruption.boundary_noise_px, &mut frng);
            }
            Frame::new(cam, depth, masks)
        })
        .collect::<Result<_>>()?;

    let pad = 3.0 * spec.noise.position_sigma + 1e-3;
    let boxes = objects
        .iter()
        .map(|o| {
            let (mut lo, mut hi) = o.bounds();
            for a in 0..3 {
                let extra = if hi[a] - lo[a] <= 0.0 { FLAT_BOX_PAD } else { pad };
                lo[a] -= extra;
                hi[a] += extra;
            }
            Box3D::new(lo, hi)
        })
        .collect::<Result<Vec<_>>>()?;

    let gt = Partition::renumbered(&labels);
    let mut cloud = PointCloud::new(positions, colors)?;
    cloud.labels = Some(labels);
    Ok(SynthScene {
        cloud,
        gt,
        boxes,
        frames: FrameSet::new(frames)?,
    })
}

/// Write `scene.ply` (with labels), `frames/`, `boxes.json` and `gt_labels.txt`.
pub fn export_scene(scene: &SynthScene, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let colors: Vec<[u8; 3]> = scene
        .cloud
        .colors
        .iter()
        .map(|c| [color_to_u8(c.x), color_to_u8(c.y), color_to_u8(c.z)])
        .collect();
    let labels = scene.cloud.labels.as_deref().unwrap_or(&scene.gt.labels);
    save_ply(dir.join("scene.ply"), &scene.cloud.positions, &colors, Some(labels))?;
    save_frames(dir.join("frames"), &scene.frames)?;
    let boxes_path = dir.join("boxes.json");
    fs::write(&boxes_path, boxes_to_json(&scene.boxes)).map_err(|e| Error::io(&boxes_path, e))?;
    write_labels(dir.join("gt_labels.txt"), &scene.gt.labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube_scene(corruption: MaskCorruption) -> SceneSpec {
        SceneSpec {
            objects: vec![ObjectSpec::Box {
                center: [0.0, 0.0, 0.5],
                size: [1.0, 1.0, 1.0],
                color: [0.8, 0.2, 0.2],
            }],
            room: RoomBounds {
                min: [-3.0; 3],
                max: [3.0; 3],
            },
            points_per_m2: 500.0,
            cameras: CameraSpec {
                intrinsics: Intrinsics {
                    width: 64,
                    height: 48,
                    fx: 50.0,
                    fy: 50.0,
                    cx: 31.5,
                    cy: 23.5,
                },
                orbit: Some(Orbit {
                    radius: 3.0,
                    height: 1.5,
                    count: 4,
                    target: [0.0, 0.0, 0.5],
                    phase_deg: 10.0,
                }),
                poses: Vec::new(),
            },
            mask_corruption: corruption,
            noise: NoiseSpec::default(),
            seed: 5,
        }
    }

    #[test]
    fn single_cube() {
        let scene = generate_scene(&cube_scene(MaskCorruption::default())).unwrap();
        assert_eq!(scene.gt.num_segments, 1);
        assert_eq!(scene.frames.len(), 4);
        for f in &scene.frames.frames {
            let mut ids: Vec<u32> = f.masks.ids.iter().copied().filter(|&i| i > 0).collect();
            ids.dedup();
            ids.sort_unstable();
            ids.dedup();
            assert_eq!(ids, vec![1]);
        }
    }

    #[test]
    fn full_split_gives_two_ids_per_object() {
        let corruption = MaskCorruption {
            part_split_prob: 1.0,
            ..MaskCorruption::default()
        };
        let scene = generate_scene(&cube_scene(corruption)).unwrap();
        for f in &scene.frames.frames {
            let mut ids: Vec<u32> = f.masks.ids.iter().copied().filter(|&i| i > 0).collect();
            ids.sort_unstable();
            ids.dedup();
            assert_eq!(ids, vec![1, 2]);
        }
    }

    #[test]
    fn boundary_noise_keeps_depth_consistent() {
        let corruption = MaskCorruption {
            boundary_noise_px: 2,
            ..MaskCorruption::default()
        };
        let scene = generate_scene(&cube_scene(corruption)).unwrap();
        for f in &scene.frames.frames {
            for (d, m) in f.depth.values.iter().zip(&f.masks.ids) {
                assert!(*m == 0 || *d > 0.0);
            }
        }
    }

    #[test]
    fn hidden_faces_are_not_sampled() {
        let mut spec = cube_scene(MaskCorruption::default());
        spec.objects.insert(
            0,
            ObjectSpec::Plane {
                center: [0.0, 0.0, 0.0],
                normal: Axis::Z,
                size: [4.0, 4.0],
                color: [0.5, 0.5, 0.5],
            },
        );
        let scene = generate_scene(&spec).unwrap();
        let labels = scene.cloud.labels.as_ref().unwrap();
        for (p, &l) in scene.cloud.positions.iter().zip(labels) {
            let under_cube = p.x.abs() < 0.5 && p.y.abs() < 0.5 && p.z.abs() < 1e-9;
            assert!(!under_cube, "point {p:?} of object {l} is hidden");
        }
    }

    #[test]
    fn camera_inside_box_is_rejected() {
        let mut spec = cube_scene(MaskCorruption::default());
        spec.cameras.orbit = None;
        spec.cameras.poses = vec![look_at(Vec3::new(0.0, 0.0, 0.5), Vec3::new(1.0, 0.0, 0.5))
            .unwrap()
            .transpose()
            .as_slice()
            .try_into()
            .unwrap()];
        assert!(matches!(generate_scene(&spec), Err(Error::Scene(_))));
    }

    #[test]
    fn room8_spec_is_valid_json() {
        let spec = SceneSpec::room8(3);
        assert_eq!(spec.objects.len(), 8);
        let json = serde_json::to_string(&spec).unwrap();
        let back: SceneSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
    }
}
