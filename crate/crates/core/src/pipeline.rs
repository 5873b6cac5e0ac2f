//! Batch pipeline over a dataset directory.
//!
//! Dataset layout (under `dataset.root`):
//!
//! | path | content | needed by |
//! |---|---|---|
//! | `velodyne/NNNNNN.bin` | scans | all stages |
//! | `labels/NNNNNN.label` | supervised semantic labels | fuse |
//! | `motion/NNNNNN.label` | supervised motion labels | fuse |
//! | `ground/NNNNNN.ground` | ground mask | flowlabel, `ground = "mask"` |
//! | `flow/NNNNNN.flow` | scene flow on preprocessed points | flowlabel, all but the last frame |
//! | `poses.txt` | one lidar pose per scan | flowlabel |
//! | `calib.txt` | camera calibration | flowlabel, transfer |
//! | `anomalies.txt` | 2D anomaly boxes (optional) | transfer, eval |
//! | `image_2/NNNNNN.png` | camera images (optional) | review server |
//!
//! Every stage reads only files and writes only files, so stages can be run
//! one by one or together with identical results.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::config::{Config, PosesFrame};
use crate::geometry::RigidTransform;
use crate::discrepancy::{aggregate, classify, extract_clusters, format_manifest, FrameDiscrepancyStats, ManifestRecord};
use crate::error::{Error, IngestError, PipelineError};
use crate::eval::{aggregate_by, confusion, format_csv, format_table, GroupSample, Protocol, ReportRow};
use crate::flowlabel::{compensate, label_motion};
use crate::fusion::fuse;
use crate::io::{self, frame_file_name, AnomalyBoxSet, Superclass};
use crate::labels::{DiscrepancyCategory, Motion, SemanticClassTable};
use crate::preprocess::{preprocess, scatter, GroundMode};
use crate::transfer::{sensitivity_masks, transfer_boxes, AnomalyPoint};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Fuse,
    FlowLabel,
    Discrepancy,
    Transfer,
    Eval,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Fuse, Stage::FlowLabel, Stage::Discrepancy, Stage::Transfer, Stage::Eval];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Fuse => "fuse",
            Stage::FlowLabel => "flowlabel",
            Stage::Discrepancy => "discrepancy",
            Stage::Transfer => "transfer",
            Stage::Eval => "eval",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetLayout {
    pub root: PathBuf,
}

impl DatasetLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    fn frame(&self, dir: &str, frame: u32, ext: &str) -> PathBuf {
        self.root.join(dir).join(frame_file_name(frame, ext))
    }

    pub fn scan_dir(&self) -> PathBuf {
        self.root.join("velodyne")
    }

    pub fn scan(&self, frame: u32) -> PathBuf {
        self.frame("velodyne", frame, "bin")
    }

    pub fn semantic(&self, frame: u32) -> PathBuf {
        self.frame("labels", frame, "label")
    }

    pub fn motion(&self, frame: u32) -> PathBuf {
        self.frame("motion", frame, "label")
    }

    pub fn ground(&self, frame: u32) -> PathBuf {
        self.frame("ground", frame, "ground")
    }

    pub fn flow(&self, frame: u32) -> PathBuf {
        self.frame("flow", frame, "flow")
    }

    pub fn image(&self, frame: u32) -> PathBuf {
        self.frame("image_2", frame, "png")
    }

    pub fn poses(&self) -> PathBuf {
        self.root.join("poses.txt")
    }

    pub fn calib(&self) -> PathBuf {
        self.root.join("calib.txt")
    }

    pub fn anomalies(&self) -> PathBuf {
        self.root.join("anomalies.txt")
    }

    /// Frame ids of the scans, ascending.
    pub fn frames(&self) -> Result<Vec<u32>, PipelineError> {
        let dir = self.scan_dir();
        let entries = fs::read_dir(&dir).map_err(|_| PipelineError::MissingInput { path: dir.clone() })?;
        let mut ids = Vec::new();
        for entry in entries {
            let path = entry.map_err(|e| IngestError::io(&dir, e))?.path();
            if path.extension().is_some_and(|e| e == "bin") {
                if let Some(id) = io::frame_id_from_path(&path) {
                    ids.push(id);
                }
            }
        }
        if ids.is_empty() {
            return Err(PipelineError::MissingInput { path: dir.join("*.bin") });
        }
        ids.sort_unstable();
        Ok(ids)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputLayout {
    pub dir: PathBuf,
}

impl OutputLayout {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    fn frame(&self, dir: &str, frame: u32, ext: &str) -> PathBuf {
        self.dir.join(dir).join(frame_file_name(frame, ext))
    }

    pub fn fused(&self, frame: u32) -> PathBuf {
        self.frame("fused", frame, "fused")
    }

    pub fn predictive(&self, frame: u32) -> PathBuf {
        self.frame("pred", frame, "pred")
    }

    /// Two-stage cluster provenance for one frame.
    pub fn clusters(&self, frame: u32) -> PathBuf {
        self.frame("clusters", frame, "txt")
    }

    pub fn discrepancy(&self, frame: u32) -> PathBuf {
        self.frame("disc", frame, "disc")
    }

    pub fn anomaly(&self, frame: u32) -> PathBuf {
        self.frame("anomaly", frame, "anom")
    }

    pub fn contradictions(&self) -> PathBuf {
        self.dir.join("contradictions.txt")
    }

    pub fn stats(&self) -> PathBuf {
        self.dir.join("discrepancy_stats.txt")
    }

    pub fn report(&self, protocol: Protocol, ext: &str) -> PathBuf {
        self.dir.join(format!("eval_{}.{ext}", protocol.name()))
    }

    pub fn manifest(&self, stage: Stage) -> PathBuf {
        self.dir.join("manifests").join(format!("{}.txt", stage.name()))
    }

    /// Resolved configuration of the latest run. Contains absolute paths, so
    /// it is not part of the reproducible output set.
    pub fn run_config(&self) -> PathBuf {
        self.dir.join(RUN_CONFIG)
    }
}

pub const RUN_CONFIG: &str = "run.toml";

#[derive(Debug, Clone, PartialEq)]
pub struct StageSummary {
    pub stage: Stage,
    pub frames: usize,
    pub outputs: Vec<PathBuf>,
}

/// Files a stage touched, for its manifest.
#[derive(Default)]
struct FrameIo {
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

fn require(path: PathBuf) -> Result<PathBuf, PipelineError> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(PipelineError::MissingInput { path })
    }
}

fn at_frame(frame: u32) -> impl Fn(Error) -> PipelineError {
    move |source| PipelineError::Frame { frame, source }
}

pub struct Pipeline {
    cfg: Config,
    table: SemanticClassTable,
    pub dataset: DatasetLayout,
    pub output: OutputLayout,
    frames: Vec<u32>,
    pool: rayon::ThreadPool,
}

impl Pipeline {
    pub fn new(cfg: Config) -> Result<Self, PipelineError> {
        cfg.validate()?;
        let table = match &cfg.dataset.class_table {
            Some(p) => SemanticClassTable::load(p)?,
            None => SemanticClassTable::semantic_kitti(),
        };
        let dataset = DatasetLayout::new(&cfg.dataset.root);
        let frames = dataset.frames()?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.run.jobs)
            .build()
            .map_err(|e| PipelineError::Config {
                key: "run.jobs".into(),
                reason: e.to_string(),
            })?;
        Ok(Self {
            output: OutputLayout::new(&cfg.output.dir),
            cfg,
            table,
            dataset,
            frames,
            pool,
        })
    }

    pub fn config(&self) -> &Config {
        &self.cfg
    }

    pub fn frames(&self) -> &[u32] {
        &self.frames
    }

    /// Runs `f` for every frame in parallel; results keep frame order and the
    /// first failing frame (in order) wins.
    fn per_frame<T: Send>(
        &self,
        f: impl Fn(usize, u32) -> Result<T, PipelineError> + Send + Sync,
    ) -> Result<Vec<T>, PipelineError> {
        let results: Vec<Result<T, PipelineError>> = self.pool.install(|| {
            self.frames
                .par_iter()
                .enumerate()
                .map(|(k, &id)| f(k, id))
                .collect()
        });
        results.into_iter().collect()
    }

    fn read_scan(&self, frame: u32) -> Result<(PathBuf, crate::cloud::PointCloud), PipelineError> {
        let path = require(self.dataset.scan(frame))?;
        let mut cloud = io::read_scan(&path)?;
        cloud.frame_id = frame;
        Ok((path, cloud))
    }

    fn read_boxes(&self) -> Result<(Option<PathBuf>, AnomalyBoxSet), PipelineError> {
        let path = self.dataset.anomalies();
        if path.is_file() {
            let boxes = io::read_anomaly_boxes(&path)?;
            Ok((Some(path), boxes))
        } else {
            Ok((None, AnomalyBoxSet::default()))
        }
    }

    fn finish(&self, stage: Stage, io: Vec<FrameIo>) -> Result<StageSummary, PipelineError> {
        let inputs: Vec<PathBuf> = io.iter().flat_map(|f| f.inputs.iter().cloned()).collect();
        let outputs: Vec<PathBuf> = io.iter().flat_map(|f| f.outputs.iter().cloned()).collect();
        let hash_all = |paths: &[PathBuf]| -> Result<Vec<String>, PipelineError> {
            self.pool
                .install(|| paths.par_iter().map(|p| sha256_file(p)).collect::<Result<Vec<_>, _>>())
                .map_err(PipelineError::from)
        };
        let in_hashes = hash_all(&inputs)?;
        let out_hashes = hash_all(&outputs)?;
        let mut text = format!(
            "stage {}\nversion {}\nparams_sha256 {}\nframes {}\n",
            stage.name(),
            VERSION,
            self.cfg.params_digest(),
            self.frames.len()
        );
        for (p, h) in inputs.iter().zip(&in_hashes) {
            text.push_str(&format!("input {} {h}\n", self.display_path(p)));
        }
        for (p, h) in outputs.iter().zip(&out_hashes) {
            text.push_str(&format!("output {} {h}\n", self.display_path(p)));
        }
        io::write_atomic(&self.output.manifest(stage), text.as_bytes())?;
        io::write_atomic(&self.output.run_config(), self.cfg.to_toml().as_bytes())?;
        tracing::info!(stage = stage.name(), frames = self.frames.len(), outputs = outputs.len(), "stage done");
        Ok(StageSummary {
            stage,
            frames: self.frames.len(),
            outputs,
        })
    }

    /// Path relative to the dataset root (`dataset:`) or the output dir
    /// (`run:`), so manifests do not depend on where things live.
    fn display_path(&self, p: &Path) -> String {
        let rel = |base: &Path, tag: &str| {
            p.strip_prefix(base)
                .ok()
                .map(|r| format!("{tag}:{}", r.to_string_lossy().replace('\\', "/")))
        };
        rel(&self.output.dir, "run")
            .or_else(|| rel(&self.dataset.root, "dataset"))
            .unwrap_or_else(|| p.display().to_string())
    }

    pub fn run(&self, stage: Stage) -> Result<StageSummary, PipelineError> {
        match stage {
            Stage::Fuse => self.run_fuse(),
            Stage::FlowLabel => self.run_flowlabel(),
            Stage::Discrepancy => self.run_discrepancy(),
            Stage::Transfer => self.run_transfer(),
            Stage::Eval => self.run_eval(),
        }
    }

    pub fn run_all(&self) -> Result<Vec<StageSummary>, PipelineError> {
        Stage::ALL.iter().map(|&s| self.run(s)).collect()
    }

    pub fn run_fuse(&self) -> Result<StageSummary, PipelineError> {
        let io = self.per_frame(|_, id| {
            let (scan_path, cloud) = self.read_scan(id)?;
            let n = cloud.len();
            let sem_path = require(self.dataset.semantic(id))?;
            let mot_path = require(self.dataset.motion(id))?;
            let semantic = io::read_semantic_labels(&sem_path, n)?;
            let motion = io::read_motion_labels(&mot_path, n)?;
            let fused = fuse(&semantic.class_ids, &motion, &self.table).map_err(at_frame(id))?;
            let out = self.output.fused(id);
            io::write_fused(&out, &semantic.class_ids, &fused.labels)?;
            Ok(FrameIo {
                inputs: vec![scan_path, sem_path, mot_path],
                outputs: vec![out],
            })
        })?;
        self.finish(Stage::Fuse, io)
    }

    pub fn run_flowlabel(&self) -> Result<StageSummary, PipelineError> {
        let poses_path = require(self.dataset.poses())?;
        let calib_path = require(self.dataset.calib())?;
        let poses = io::read_poses(&poses_path)?;
        if poses.len() != self.frames.len() {
            return Err(PipelineError::FrameCountMismatch {
                what: poses_path.display().to_string(),
                expected: self.frames.len(),
                actual: poses.len(),
            });
        }
        let calib = io::read_calibration(&calib_path)?;
        let poses: Vec<RigidTransform> = match self.cfg.dataset.poses_frame {
            PosesFrame::Lidar => poses,
            PosesFrame::Camera => {
                let tr = &calib.lidar_to_cam;
                let tr_inv = tr.inverse();
                poses.iter().map(|p| tr_inv.compose(p).compose(tr)).collect()
            }
        };
        let params = &self.cfg.flowlabel;
        let last = self.frames.len() - 1;
        let mut io = self.per_frame(|k, id| {
            let (scan_path, cloud) = self.read_scan(id)?;
            let n = cloud.len();
            let mut inputs = vec![scan_path];
            let ground = match self.cfg.preprocess.ground {
                GroundMode::Mask => {
                    let p = require(self.dataset.ground(id))?;
                    let mask = io::read_ground_mask(&p, n)?;
                    inputs.push(p);
                    Some(mask)
                }
                _ => None,
            };
            let pre = preprocess(&cloud, &calib, self.cfg.image_size(), ground.as_deref(), &self.cfg.preprocess)
                .map_err(at_frame(id))?;
            let mut provenance = format!(
                "# frame {id}: kept {} of {n} points, ground: {:?}\n",
                pre.kept_indices.len(),
                pre.ground_mask_source
            );
            let raw: Vec<Option<Motion>> = if k < last {
                let p = require(self.dataset.flow(id))?;
                let flow = io::read_flow(&p, pre.cloud.len())?;
                inputs.push(p);
                let next_to_current = poses[k].inverse().compose(&poses[k + 1]);
                let comp = compensate(&pre.cloud, &flow, &next_to_current, params.frame_interval_s)
                    .map_err(at_frame(id))?;
                let labeling = label_motion(&pre.cloud, &comp, params).map_err(at_frame(id))?;
                provenance.push_str(&labeling.provenance(id));
                let kept: Vec<Option<Motion>> = labeling.labels.iter().copied().map(Some).collect();
                scatter(&pre.kept_indices, &kept, n, None)
            } else {
                provenance.push_str("# last frame has no successor; no labels\n");
                vec![None; n]
            };
            let pred_path = self.output.predictive(id);
            let clusters_path = self.output.clusters(id);
            io::write_predictive_labels(&pred_path, &raw)?;
            io::write_atomic(&clusters_path, provenance.as_bytes())?;
            Ok(FrameIo {
                inputs,
                outputs: vec![pred_path, clusters_path],
            })
        })?;
        io.insert(
            0,
            FrameIo {
                inputs: vec![poses_path, calib_path],
                outputs: Vec::new(),
            },
        );
        self.finish(Stage::FlowLabel, io)
    }

    pub fn run_discrepancy(&self) -> Result<StageSummary, PipelineError> {
        let per_frame = self.per_frame(|_, id| {
            let (scan_path, cloud) = self.read_scan(id)?;
            let n = cloud.len();
            let fused_path = require(self.output.fused(id))?;
            let pred_path = require(self.output.predictive(id))?;
            let fused = io::read_fused(&fused_path, n)?;
            let ssv = io::read_predictive_labels(&pred_path, n)?;
            let sv: Vec<Option<Motion>> = fused.iter().map(|l| l.map(|l| l.motion)).collect();
            let (categories, mut stats) = classify(&sv, &ssv).map_err(at_frame(id))?;
            stats.frame_id = id;
            let classes: Vec<u16> = fused.iter().map(|l| l.map_or(0, |l| l.class_id)).collect();
            let clusters =
                extract_clusters(&cloud, &categories, Some(&classes), &self.cfg.discrepancy).map_err(at_frame(id))?;
            let disc_path = self.output.discrepancy(id);
            io::write_discrepancy(&disc_path, &categories)?;
            let records: Vec<ManifestRecord> = clusters.iter().map(ManifestRecord::from).collect();
            Ok((
                FrameIo {
                    inputs: vec![scan_path, fused_path, pred_path],
                    outputs: vec![disc_path],
                },
                stats,
                records,
            ))
        })?;
        let mut io = Vec::with_capacity(per_frame.len() + 1);
        let mut stats = Vec::with_capacity(per_frame.len());
        let mut records = Vec::new();
        for (f, s, r) in per_frame {
            io.push(f);
            stats.push(s);
            records.extend(r);
        }
        io::write_atomic(&self.output.contradictions(), format_manifest(&records).as_bytes())?;
        io::write_atomic(&self.output.stats(), format_stats(&stats).as_bytes())?;
        io.push(FrameIo {
            inputs: Vec::new(),
            outputs: vec![self.output.contradictions(), self.output.stats()],
        });
        self.finish(Stage::Discrepancy, io)
    }

    pub fn run_transfer(&self) -> Result<StageSummary, PipelineError> {
        let calib_path = require(self.dataset.calib())?;
        let calib = io::read_calibration(&calib_path)?;
        let (boxes_path, boxes) = self.read_boxes()?;
        let mut io = self.per_frame(|_, id| {
            let (scan_path, cloud) = self.read_scan(id)?;
            let labels = transfer_boxes(&cloud, boxes.boxes(id), &calib, self.cfg.image_size(), &self.cfg.transfer)
                .map_err(at_frame(id))?;
            let out = self.output.anomaly(id);
            io::write_anomaly_labels(&out, &labels)?;
            Ok(FrameIo {
                inputs: vec![scan_path],
                outputs: vec![out],
            })
        })?;
        io.insert(
            0,
            FrameIo {
                inputs: std::iter::once(calib_path).chain(boxes_path).collect(),
                outputs: Vec::new(),
            },
        );
        self.finish(Stage::Transfer, io)
    }

    pub fn run_eval(&self) -> Result<StageSummary, PipelineError> {
        let (boxes_path, boxes) = self.read_boxes()?;
        let protocols = self.cfg.eval.protocols.clone();
        let per_frame = self.per_frame(|_, id| {
            let (scan_path, cloud) = self.read_scan(id)?;
            let n = cloud.len();
            let disc_path = require(self.output.discrepancy(id))?;
            let anom_path = require(self.output.anomaly(id))?;
            let disc = io::read_discrepancy(&disc_path, Some(n))?;
            let anomaly = io::read_anomaly_labels(&anom_path, n)?;
            let samples = protocols
                .iter()
                .map(|&p| frame_samples(&self.cfg.dataset.name, &disc, &anomaly, boxes.boxes(id), p))
                .collect::<Result<Vec<_>, _>>()
                .map_err(at_frame(id))?;
            Ok((
                FrameIo {
                    inputs: vec![scan_path, disc_path, anom_path],
                    outputs: Vec::new(),
                },
                samples,
            ))
        })?;
        let mut io: Vec<FrameIo> = Vec::new();
        io.push(FrameIo {
            inputs: boxes_path.into_iter().collect(),
            outputs: Vec::new(),
        });
        let mut by_protocol: Vec<(Vec<GroupSample>, Vec<GroupSample>)> = vec![Default::default(); protocols.len()];
        for (f, samples) in per_frame {
            io.push(f);
            for (acc, (dataset, superclass)) in by_protocol.iter_mut().zip(samples) {
                acc.0.push(dataset);
                acc.1.extend(superclass);
            }
        }
        let mut outputs = Vec::new();
        for (&protocol, (dataset_samples, class_samples)) in protocols.iter().zip(&by_protocol) {
            let dataset_rows = aggregate_by(std::slice::from_ref(&self.cfg.dataset.name), dataset_samples)?;
            let present: Vec<String> = Superclass::ALL
                .iter()
                .map(|s| s.name().to_string())
                .filter(|name| class_samples.iter().any(|s| &s.key == name))
                .collect();
            let class_rows: Vec<ReportRow> = if present.is_empty() {
                Vec::new()
            } else {
                aggregate_by(&present, class_samples)?
            };
            let title = format!("anomaly sensitivity, dataset {}", self.cfg.dataset.name);
            let mut text = format_table(&title, protocol, "dataset", "#frames", &dataset_rows);
            text.push('\n');
            text.push_str(&format_table(&title, protocol, "superclass", "#instances", &class_rows));
            let all_rows: Vec<ReportRow> = dataset_rows.into_iter().chain(class_rows).collect();
            let txt = self.output.report(protocol, "txt");
            let csv = self.output.report(protocol, "csv");
            io::write_atomic(&txt, text.as_bytes())?;
            io::write_atomic(&csv, format_csv(&all_rows).as_bytes())?;
            outputs.extend([txt, csv]);
        }
        io.push(FrameIo {
            inputs: Vec::new(),
            outputs,
        });
        self.finish(Stage::Eval, io)
    }
}

/// Evaluation mask for one protocol.
pub fn protocol_mask(protocol: Protocol, both_labeled: &[bool]) -> Vec<bool> {
    match protocol {
        Protocol::AllPoints => vec![true; both_labeled.len()],
        Protocol::BothLabeled => both_labeled.to_vec(),
    }
}

/// Samples contributed by one frame: the dataset-level sample (any anomaly
/// is positive) and one sample per superclass with an instance in the frame.
/// In a superclass sample, points of other superclasses' anomalies are left
/// out so they count neither as positives nor as false alarms.
pub fn frame_samples(
    dataset: &str,
    disc: &[Option<DiscrepancyCategory>],
    anomaly: &[AnomalyPoint],
    boxes: &[io::AnomalyBox],
    protocol: Protocol,
) -> Result<(GroupSample, Vec<GroupSample>), Error> {
    let masks = sensitivity_masks(anomaly, disc)?;
    let mask = protocol_mask(protocol, &masks.both_labeled);
    let dataset_sample = GroupSample {
        key: dataset.to_string(),
        counts: confusion(&masks.pred, &masks.gt, &mask)?,
        units: 1,
    };
    let mut per_class = Vec::new();
    for class in Superclass::ALL {
        let instances = boxes.iter().filter(|b| b.superclass == class).count() as u64;
        if instances == 0 {
            continue;
        }
        let gt: Vec<bool> = anomaly.iter().map(|a| a.superclass() == Some(class)).collect();
        let class_mask: Vec<bool> = mask
            .iter()
            .zip(anomaly)
            .map(|(&m, a)| m && a.superclass().is_none_or(|s| s == class))
            .collect();
        per_class.push(GroupSample {
            key: class.name().to_string(),
            counts: confusion(&masks.pred, &gt, &class_mask)?,
            units: instances,
        });
    }
    Ok((dataset_sample, per_class))
}

/// Per-frame category counts, totals and corpus fractions.
pub fn format_stats(stats: &[FrameDiscrepancyStats]) -> String {
    let mut out = String::from("# frame_id green blue red yellow both_valid total\n");
    let mut total = FrameDiscrepancyStats::default();
    for s in stats {
        let c = s.counts;
        out.push_str(&format!(
            "{} {} {} {} {} {} {}\n",
            s.frame_id, c[0], c[1], c[2], c[3], s.n_both_valid, s.n_total
        ));
        total = total.merge(s);
    }
    let c = total.counts;
    out.push_str(&format!(
        "total {} {} {} {} {} {}\n",
        c[0], c[1], c[2], c[3], total.n_both_valid, total.n_total
    ));
    match aggregate(stats) {
        Ok(f) => out.push_str(&format!(
            "fractions {:.6} {:.6} {:.6} {:.6}\n",
            f[0], f[1], f[2], f[3]
        )),
        Err(_) => out.push_str("fractions n/a\n"),
    }
    out
}

pub fn sha256_file(path: &Path) -> Result<String, IngestError> {
    let bytes = fs::read(path).map_err(|e| IngestError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// SHA-256 of every file under `dir` except the run config, keyed by
/// slash-separated relative path.
pub fn output_digests(dir: &Path) -> Result<BTreeMap<String, String>, IngestError> {
    let mut out = BTreeMap::new();
    for entry in walkdir::WalkDir::new(dir) {
        let entry = entry.map_err(|e| IngestError::io(dir, e.into()))?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry
            .path()
            .strip_prefix(dir)
            .expect("walk stays under its root")
            .to_string_lossy()
            .replace('\\', "/");
        if rel != RUN_CONFIG {
            out.insert(rel, sha256_file(entry.path())?);
        }
    }
    Ok(out)
}
