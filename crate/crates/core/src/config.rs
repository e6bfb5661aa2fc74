//! Pipeline configuration: every tunable in one flat JSON object.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::affinity::{AffinityConfig, DEFAULT_MIN_GAMMA};
use crate::error::{Error, Result};
use crate::evaluation::ConfidenceProxy;
use crate::geometry::DEFAULT_NORMAL_K;
use crate::merging::MergeConfig;
use crate::primitives::PrimitiveConfig;
use crate::projection::DEFAULT_DEPTH_TOLERANCE_M;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub knn_k: usize,
    pub w_n: f64,
    pub w_c: f64,
    pub fzs_k: f64,
    pub min_segment_size: usize,
    pub graph_knn: usize,
    pub depth_tolerance_m: f64,
    pub min_gamma: f64,
    pub delta1_schedule: Vec<f64>,
    pub delta2: f64,
    pub distance_floor: f64,
    pub ascending_boxes: bool,
    pub exclusion_after_claim: bool,
    pub confidence_proxy: ConfidenceProxy,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let p = PrimitiveConfig::default();
        let m = MergeConfig::default();
        PipelineConfig {
            knn_k: DEFAULT_NORMAL_K,
            w_n: p.w_n,
            w_c: p.w_c,
            fzs_k: p.fzs_k,
            min_segment_size: p.min_segment_size,
            graph_knn: p.graph_knn,
            depth_tolerance_m: DEFAULT_DEPTH_TOLERANCE_M,
            min_gamma: DEFAULT_MIN_GAMMA,
            delta1_schedule: m.delta1_schedule,
            delta2: m.delta2,
            distance_floor: m.distance_floor,
            ascending_boxes: m.ascending_boxes,
            exclusion_after_claim: m.exclusion_after_claim,
            confidence_proxy: ConfidenceProxy::PointCount,
        }
    }
}

impl PipelineConfig {
    pub fn primitives(&self) -> PrimitiveConfig {
        PrimitiveConfig {
            w_n: self.w_n,
            w_c: self.w_c,
            fzs_k: self.fzs_k,
            min_segment_size: self.min_segment_size,
            graph_knn: self.graph_knn,
            normal_knn: self.knn_k,
        }
    }

    pub fn affinity(&self) -> AffinityConfig {
        AffinityConfig {
            depth_tolerance_m: self.depth_tolerance_m,
            min_gamma: self.min_gamma,
        }
    }

    pub fn merging(&self) -> MergeConfig {
        MergeConfig {
            delta1_schedule: self.delta1_schedule.clone(),
            delta2: self.delta2,
            distance_floor: self.distance_floor,
            ascending_boxes: self.ascending_boxes,
            exclusion_after_claim: self.exclusion_after_claim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.knn_k < 3 {
            return Err(Error::Config("knn_k must be >= 3".into()));
        }
        self.primitives().validate()?;
        self.affinity().validate()?;
        self.merging().validate()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: PipelineConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = PipelineConfig::default();
        cfg.validate().unwrap();
        let back = PipelineConfig::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_json_fills_defaults() {
        let cfg = PipelineConfig::from_json(r#"{"w_n": 0.5, "w_c": 0.5}"#).unwrap();
        assert_eq!(cfg.w_n, 0.5);
        assert_eq!(cfg.delta2, 0.75);
    }

    #[test]
    fn rejects_unknown_and_bad_values() {
        assert!(matches!(PipelineConfig::from_json(r#"{"wn": 1}"#), Err(Error::Config(_))));
        assert!(PipelineConfig::from_json(r#"{"delta2": 1.5}"#).is_err());
        assert!(PipelineConfig::from_json(r#"{"delta1_schedule": [0.5, 0.7]}"#).is_err());
        assert!(PipelineConfig::from_json(r#"{"w_n": -1}"#).is_err());
    }
}
