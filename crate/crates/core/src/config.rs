//! Pipeline configuration, loaded from TOML with one section per stage.
//!
//! ```toml
//! [dataset]
//! root = "seq00"        # relative paths resolve against the config file
//! name = "seq00"
//!
//! [output]
//! dir = "out"
//!
//! [flowlabel]
//! nstd_threshold = 0.12
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::camera::ImageSize;
use crate::discrepancy::ContradictionParams;
use crate::error::PipelineError;
use crate::eval::Protocol;
use crate::flowlabel::FlowLabelParams;
use crate::preprocess::PreprocessParams;
use crate::transfer::RefineParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub root: PathBuf,
    /// Group key used for the per-dataset report row.
    pub name: String,
    /// Class table TOML; the bundled SemanticKITTI table when absent.
    pub class_table: Option<PathBuf>,
    pub image_width: u32,
    pub image_height: u32,
    pub poses_frame: PosesFrame,
}

/// Sensor the poses in `poses.txt` refer to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PosesFrame {
    #[default]
    Lidar,
    /// KITTI odometry ground truth: left camera poses, converted with `Tr`.
    Camera,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            root: PathBuf::from("."),
            name: "dataset".into(),
            class_table: None,
            image_width: ImageSize::KITTI.width,
            image_height: ImageSize::KITTI.height,
            poses_frame: PosesFrame::Lidar,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub protocols: Vec<Protocol>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            protocols: vec![Protocol::AllPoints, Protocol::BothLabeled],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct RunConfig {
    /// Worker threads for frame-parallel stages; 0 picks the core count.
    pub jobs: usize,
}


#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub dataset: DatasetConfig,
    pub output: OutputConfig,
    pub preprocess: PreprocessParams,
    pub flowlabel: FlowLabelParams,
    pub discrepancy: ContradictionParams,
    pub transfer: RefineParams,
    pub eval: EvalConfig,
    pub run: RunConfig,
}

/// Parameters only, used for hashing so the digest does not depend on
/// where the data lives.
#[derive(Serialize)]
struct HashedParams<'a> {
    dataset_name: &'a str,
    class_table: Option<String>,
    image_width: u32,
    image_height: u32,
    poses_frame: PosesFrame,
    preprocess: &'a PreprocessParams,
    flowlabel: &'a FlowLabelParams,
    discrepancy: &'a ContradictionParams,
    transfer: &'a RefineParams,
    eval: &'a EvalConfig,
}

fn config_err(key: &str, reason: impl Into<String>) -> PipelineError {
    PipelineError::Config {
        key: key.into(),
        reason: reason.into(),
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| {
            let key = e.span().map_or_else(|| "<config>".to_string(), |s| format!("byte {}..{}", s.start, s.end));
            config_err(&key, e.message().to_string())
        })
    }

    /// Loads a config and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(&path.display().to_string(), e.to_string()))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_relative_to(base);
        Ok(cfg)
    }

    pub fn resolve_relative_to(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.dataset.root);
        fix(&mut self.output.dir);
        if let Some(t) = self.dataset.class_table.as_mut() {
            fix(t);
        }
    }

    pub fn image_size(&self) -> ImageSize {
        ImageSize {
            width: self.dataset.image_width,
            height: self.dataset.image_height,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.dataset.image_width == 0 || self.dataset.image_height == 0 {
            return Err(config_err("dataset.image_width", "image size must be positive"));
        }
        if !(self.preprocess.max_range_m > 0.0) {
            return Err(config_err("preprocess.max_range_m", "must be positive"));
        }
        if self.preprocess.downsample == Some(0) {
            return Err(config_err("preprocess.downsample", "budget must be positive"));
        }
        self.flowlabel
            .validate()
            .map_err(|e| config_err("flowlabel", e.to_string()))?;
        if !(self.discrepancy.eps_m > 0.0) || self.discrepancy.min_pts == 0 {
            return Err(config_err("discrepancy", "eps_m and min_pts must be positive"));
        }
        if !(self.transfer.eps_m > 0.0) || self.transfer.min_pts == 0 {
            return Err(config_err("transfer", "eps_m and min_pts must be positive"));
        }
        if self.eval.protocols.is_empty() {
            return Err(config_err("eval.protocols", "at least one protocol is required"));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 over the parameter sections (paths excluded).
    pub fn params_digest(&self) -> String {
        let hashed = HashedParams {
            dataset_name: &self.dataset.name,
            class_table: self
                .dataset
                .class_table
                .as_ref()
                .map(|p| p.file_name().map_or_else(String::new, |f| f.to_string_lossy().into_owned())),
            image_width: self.dataset.image_width,
            image_height: self.dataset.image_height,
            poses_frame: self.dataset.poses_frame,
            preprocess: &self.preprocess,
            flowlabel: &self.flowlabel,
            discrepancy: &self.discrepancy,
            transfer: &self.transfer,
            eval: &self.eval,
        };
        let text = toml::to_string(&hashed).expect("params serialize");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}
