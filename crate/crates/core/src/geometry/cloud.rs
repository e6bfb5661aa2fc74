use nalgebra::Vector3;

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Tolerance on normal length accepted by [`PointCloud::validate`].
pub const NORMAL_LENGTH_TOLERANCE: f64 = 1e-6;

/// Colored point cloud with optional per-point normals.
///
/// Positions are in meters (world frame), colors are normalized to `[0, 1]`.
/// Ground-truth labels ride along when the source file carries them.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    pub positions: Vec<Vec3>,
    pub colors: Vec<Vec3>,
    pub normals: Option<Vec<Vec3>>,
    pub labels: Option<Vec<i64>>,
}

impl PointCloud {
    pub fn new(positions: Vec<Vec3>, colors: Vec<Vec3>) -> Result<Self> {
        let cloud = PointCloud {
            positions,
            colors,
            normals: None,
            labels: None,
        };
        cloud.validate()?;
        Ok(cloud)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn has_normals(&self) -> bool {
        self.normals.is_some()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.positions.len();
        if n == 0 {
            return Err(Error::Invalid("empty cloud".into()));
        }
        if self.colors.len() != n {
            return Err(Error::Dimension(format!(
                "{} positions but {} colors",
                n,
                self.colors.len()
            )));
        }
        if let Some(i) = self.positions.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::Invalid(format!("point {i} has a non-finite coordinate")));
        }
        if let Some(i) = self
            .colors
            .iter()
            .position(|c| !c.iter().all(|v| (0.0..=1.0).contains(v)))
        {
            return Err(Error::Invalid(format!("point {i} has a color channel outside [0,1]")));
        }
        if let Some(normals) = &self.normals {
            if normals.len() != n {
                return Err(Error::Dimension(format!(
                    "{} positions but {} normals",
                    n,
                    normals.len()
                )));
            }
            if let Some(i) = normals
                .iter()
                .position(|v| (v.norm() - 1.0).abs() > NORMAL_LENGTH_TOLERANCE)
            {
                return Err(Error::Invalid(format!("normal {i} is not unit length")));
            }
        }
        if let Some(labels) = &self.labels {
            if labels.len() != n {
                return Err(Error::Dimension(format!(
                    "{} positions but {} labels",
                    n,
                    labels.len()
                )));
            }
        }
        Ok(())
    }
}
