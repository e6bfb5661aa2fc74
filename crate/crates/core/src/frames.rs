//! Posed frames (camera, depth, masks) and their directory layout:
//! `<id>.json`, `<id>.depth.pgm` and `<id>.mask.pgm` per frame.

use std::fs;
use std::path::{Path, PathBuf};

use crate::affinity::MaskRaster;
use crate::error::{Error, Result};
use crate::io::pgm::{read_pgm16, write_pgm16, Raster16};
use crate::projection::{CameraFrame, DepthRaster};

/// Depth PGM samples are millimeters.
pub const DEPTH_UNITS_PER_METER: f64 = 1000.0;

#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub camera: CameraFrame,
    pub depth: DepthRaster,
    pub masks: MaskRaster,
}

impl Frame {
    pub fn new(camera: CameraFrame, depth: DepthRaster, masks: MaskRaster) -> Result<Self> {
        let (w, h) = (camera.width, camera.height);
        if depth.width != w || depth.height != h {
            return Err(Error::Dimension(format!(
                "frame {}: depth raster is {}x{} but camera is {w}x{h}",
                camera.frame_id, depth.width, depth.height
            )));
        }
        if masks.width != w || masks.height != h {
            return Err(Error::Dimension(format!(
                "frame {}: mask raster is {}x{} but camera is {w}x{h}",
                camera.frame_id, masks.width, masks.height
            )));
        }
        Ok(Frame {
            camera,
            depth,
            masks,
        })
    }
}

/// Frames sorted by ascending, unique frame id.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FrameSet {
    pub frames: Vec<Frame>,
}

impl FrameSet {
    pub fn new(mut frames: Vec<Frame>) -> Result<Self> {
        frames.sort_by_key(|f| f.camera.frame_id);
        if let Some(w) = frames
            .windows(2)
            .find(|w| w[0].camera.frame_id == w[1].camera.frame_id)
        {
            return Err(Error::Invalid(format!("duplicate frame id {}", w[0].camera.frame_id)));
        }
        Ok(FrameSet { frames })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

pub fn depth_from_raster(r: &Raster16) -> Result<DepthRaster> {
    DepthRaster::new(
        r.width,
        r.height,
        r.data.iter().map(|&v| v as f64 / DEPTH_UNITS_PER_METER).collect(),
    )
}

pub fn depth_to_raster(d: &DepthRaster) -> Result<Raster16> {
    let data = d
        .values
        .iter()
        .map(|&v| {
            let mm = (v * DEPTH_UNITS_PER_METER).round();
            if mm > u16::MAX as f64 {
                Err(Error::Raster(format!("depth {v} m does not fit in 16-bit millimeters")))
            } else {
                Ok(mm as u16)
            }
        })
        .collect::<Result<_>>()?;
    Ok(Raster16 {
        width: d.width,
        height: d.height,
        data,
    })
}

pub fn masks_to_raster(m: &MaskRaster) -> Result<Raster16> {
    let data = m
        .ids
        .iter()
        .map(|&id| {
            u16::try_from(id).map_err(|_| Error::Raster(format!("mask id {id} exceeds 65535")))
        })
        .collect::<Result<_>>()?;
    Ok(Raster16 {
        width: m.width,
        height: m.height,
        data,
    })
}

/// Paths of the three files making up a frame.
pub fn frame_paths(dir: &Path, frame_id: i64) -> (PathBuf, PathBuf, PathBuf) {
    (
        dir.join(format!("{frame_id}.json")),
        dir.join(format!("{frame_id}.depth.pgm")),
        dir.join(format!("{frame_id}.mask.pgm")),
    )
}

/// Every file path that makes up the frame set in `dir`, in load order.
pub fn frame_files(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(Error::MissingFrame(dir.to_path_buf()));
    }
    let mut ids = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if let Some(stem) = name.strip_suffix(".json") {
            let id: i64 = stem
                .parse()
                .map_err(|_| Error::Camera(format!("{}: file stem is not a frame id", path.display())))?;
            ids.push(id);
        }
    }
    ids.sort_unstable();
    let mut files = Vec::with_capacity(ids.len() * 3);
    for id in ids {
        let (cam, depth, mask) = frame_paths(dir, id);
        files.extend([cam, depth, mask]);
    }
    Ok(files)
}

pub fn load_frames(dir: impl AsRef<Path>) -> Result<FrameSet> {
    let dir = dir.as_ref();
    let files = frame_files(dir)?;
    if files.is_empty() {
        return Err(Error::MissingFrame(dir.join("<id>.json")));
    }
    let mut frames = Vec::with_capacity(files.len() / 3);
    for triple in files.chunks(3) {
        let [cam_path, depth_path, mask_path] = triple else {
            unreachable!("frame files come in triples");
        };
        for p in [depth_path, mask_path] {
            if !p.is_file() {
                return Err(Error::MissingFrame(p.clone()));
            }
        }
        let camera = CameraFrame::load(cam_path)?;
        let depth = depth_from_raster(&read_pgm16(depth_path)?)?;
        let mr = read_pgm16(mask_path)?;
        let masks = MaskRaster::new(mr.width, mr.height, mr.data.iter().map(|&v| v as u32).collect())?;
        frames.push(Frame::new(camera, depth, masks)?);
    }
    FrameSet::new(frames)
}

pub fn save_frames(dir: impl AsRef<Path>, frames: &FrameSet) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for f in &frames.frames {
        let (cam, depth, mask) = frame_paths(dir, f.camera.frame_id);
        let json = serde_json::to_string_pretty(&f.camera.to_file())?;
        fs::write(&cam, json + "\n").map_err(|e| Error::io(&cam, e))?;
        write_pgm16(&depth, &depth_to_raster(&f.depth)?)?;
        write_pgm16(&mask, &masks_to_raster(&f.masks)?)?;
    }
    Ok(())
}
