//! Readers and writers for scans, labels, flow, poses, calibration and
//! anomaly boxes.
//!
//! Binary layouts (all little-endian, one record per point):
//!
//! | file          | bytes | content                                         |
//! |---------------|-------|-------------------------------------------------|
//! | `.bin`        | 16    | x, y, z, intensity as `f32`                     |
//! | `.label`      | 4     | `u32`: semantic id in bits 0–15, instance above |
//! | `.flow`       | 12    | dx, dy, dz as `f32`                             |
//! | `.disc`       | 1     | category 0–3, 255 = not labeled by both streams |
//! | `.pred`       | 1     | 0 static, 1 dynamic, 255 = not labeled          |
//! | `.fused`      | 4     | class id bits 0–15, motion bit 16, valid bit 17 |
//! | `.anom`       | 1     | 0 normal, 1–7 superclass, 255 = unlabeled       |
//! | `.ground`     | 1     | 0 / 1                                           |
//!
//! Every writer goes through a temp file in the destination directory and
//! renames it into place.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{Matrix3, Matrix3x4};

use crate::camera::{CalibrationSet, ImageSize};
use crate::cloud::{FlowField, PointCloud};
use crate::error::IngestError;
use crate::geometry::{split_row_major, RigidTransform};
use crate::labels::{DiscrepancyCategory, Motion, SemanticMotionLabel};
use crate::transfer::AnomalyPoint;

/// Poses and calibration rotations are accepted within this tolerance and
/// then snapped to the nearest rotation.
pub const FILE_ROTATION_TOLERANCE: f64 = 1e-4;

pub const INVALID_BYTE: u8 = 255;

/// Writes `bytes` to `path` via a sibling temp file and an atomic rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IngestError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| IngestError::io(dir, e))?;
    let mut builder = tempfile::Builder::new();
    // temp files default to owner-only; results should be readable like any other file
    #[cfg(unix)]
    builder.permissions(std::os::unix::fs::PermissionsExt::from_mode(0o644));
    let mut tmp = builder.tempfile_in(dir).map_err(|e| IngestError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| IngestError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| IngestError::io(path, e))?;
    tmp.persist(path).map_err(|e| IngestError::io(path, e.error))?;
    Ok(())
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, IngestError> {
    std::fs::read(path).map_err(|e| IngestError::io(path, e))
}

fn read_text(path: &Path) -> Result<String, IngestError> {
    std::fs::read_to_string(path).map_err(|e| IngestError::io(path, e))
}

fn records<'a>(path: &Path, bytes: &'a [u8], record: usize) -> Result<std::slice::ChunksExact<'a, u8>, IngestError> {
    if !bytes.len().is_multiple_of(record) {
        return Err(IngestError::TruncatedFile {
            path: path.to_path_buf(),
            len: bytes.len() as u64,
            record,
        });
    }
    Ok(bytes.chunks_exact(record))
}

fn expect_count(path: &Path, expected: usize, actual: usize) -> Result<(), IngestError> {
    if expected == actual {
        Ok(())
    } else {
        Err(IngestError::LengthMismatch {
            path: path.to_path_buf(),
            expected,
            actual,
        })
    }
}

fn f32_at(chunk: &[u8], k: usize) -> f32 {
    f32::from_le_bytes(chunk[4 * k..4 * k + 4].try_into().unwrap())
}

fn u32_at(chunk: &[u8]) -> u32 {
    u32::from_le_bytes(chunk[..4].try_into().unwrap())
}

// ---------------------------------------------------------------- scans

pub fn read_scan(path: &Path) -> Result<PointCloud, IngestError> {
    let bytes = read_bytes(path)?;
    let mut points = Vec::with_capacity(bytes.len() / 16);
    let mut intensity = Vec::with_capacity(bytes.len() / 16);
    for (i, rec) in records(path, &bytes, 16)?.enumerate() {
        let p = [f32_at(rec, 0), f32_at(rec, 1), f32_at(rec, 2)];
        let r = f32_at(rec, 3);
        if !p.iter().all(|v| v.is_finite()) || !r.is_finite() {
            return Err(IngestError::NonFiniteValue {
                path: path.to_path_buf(),
                index: i,
            });
        }
        points.push(p);
        intensity.push(r);
    }
    Ok(PointCloud {
        points,
        intensity: Some(intensity),
        frame_id: frame_id_from_path(path).unwrap_or(0),
        timestamp: None,
    })
}

/// Writes a scan; missing intensity is stored as 0.
pub fn write_scan(path: &Path, cloud: &PointCloud) -> Result<(), IngestError> {
    let mut out = Vec::with_capacity(cloud.len() * 16);
    for (i, p) in cloud.points.iter().enumerate() {
        for v in p {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let r = cloud.intensity.as_ref().map_or(0.0, |v| v[i]);
        out.extend_from_slice(&r.to_le_bytes());
    }
    write_atomic(path, &out)
}

/// Frame index from a file stem such as `000042.bin`.
pub fn frame_id_from_path(path: &Path) -> Option<u32> {
    path.file_stem()?.to_str()?.parse().ok()
}

pub fn frame_file_name(frame: u32, ext: &str) -> String {
    format!("{frame:06}.{ext}")
}

// --------------------------------------------------------------- labels

/// SemanticKITTI-style label layer.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SemanticLabels {
    pub class_ids: Vec<u16>,
    pub instance_ids: Vec<u16>,
}

impl SemanticLabels {
    pub fn from_raw(raw: &[u32]) -> Self {
        Self {
            class_ids: raw.iter().map(|v| (v & 0xFFFF) as u16).collect(),
            instance_ids: raw.iter().map(|v| (v >> 16) as u16).collect(),
        }
    }

    pub fn to_raw(&self) -> Vec<u32> {
        self.class_ids
            .iter()
            .zip(&self.instance_ids)
            .map(|(&c, &i)| ((i as u32) << 16) | c as u32)
            .collect()
    }

    pub fn len(&self) -> usize {
        self.class_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class_ids.is_empty()
    }
}

fn read_u32_layer(path: &Path, n_points: usize) -> Result<Vec<u32>, IngestError> {
    let bytes = read_bytes(path)?;
    let recs = records(path, &bytes, 4)?;
    expect_count(path, n_points, recs.len())?;
    Ok(recs.map(u32_at).collect())
}

fn write_u32_layer(path: &Path, values: impl Iterator<Item = u32>) -> Result<(), IngestError> {
    let out: Vec<u8> = values.flat_map(u32::to_le_bytes).collect();
    write_atomic(path, &out)
}

pub fn read_semantic_labels(path: &Path, n_points: usize) -> Result<SemanticLabels, IngestError> {
    Ok(SemanticLabels::from_raw(&read_u32_layer(path, n_points)?))
}

pub fn write_labels(path: &Path, labels: &SemanticLabels) -> Result<(), IngestError> {
    write_u32_layer(path, labels.to_raw().into_iter())
}

/// Motion-segmentation labels in the SemanticKITTI moving-object convention:
/// 0 unlabeled, 9 static, 251–259 moving. Instance bits are ignored.
pub fn read_motion_labels(path: &Path, n_points: usize) -> Result<Vec<Option<Motion>>, IngestError> {
    read_u32_layer(path, n_points)?
        .into_iter()
        .enumerate()
        .map(|(index, raw)| match raw & 0xFFFF {
            0 => Ok(None),
            9 => Ok(Some(Motion::Static)),
            251..=259 => Ok(Some(Motion::Dynamic)),
            _ => Err(IngestError::InvalidLabel {
                path: path.to_path_buf(),
                index,
                value: raw,
            }),
        })
        .collect()
}

pub fn write_motion_labels(path: &Path, motion: &[Option<Motion>]) -> Result<(), IngestError> {
    write_u32_layer(
        path,
        motion.iter().map(|m| match m {
            None => 0,
            Some(Motion::Static) => 9,
            Some(Motion::Dynamic) => 251,
        }),
    )
}

const FUSED_MOTION_BIT: u32 = 1 << 16;
const FUSED_VALID_BIT: u32 = 1 << 17;

/// Fused semantic motion labels; `None` marks points outside the
/// supervised validity mask. Invalid points keep their class id.
pub fn write_fused(path: &Path, class_ids: &[u16], fused: &[Option<SemanticMotionLabel>]) -> Result<(), IngestError> {
    write_u32_layer(
        path,
        class_ids.iter().zip(fused).map(|(&class, f)| match f {
            None => class as u32,
            Some(l) => {
                let motion = if l.motion.is_dynamic() { FUSED_MOTION_BIT } else { 0 };
                l.class_id as u32 | motion | FUSED_VALID_BIT
            }
        }),
    )
}

pub fn read_fused(path: &Path, n_points: usize) -> Result<Vec<Option<SemanticMotionLabel>>, IngestError> {
    read_u32_layer(path, n_points)?
        .into_iter()
        .enumerate()
        .map(|(index, raw)| {
            if raw >> 18 != 0 {
                return Err(IngestError::InvalidLabel {
                    path: path.to_path_buf(),
                    index,
                    value: raw,
                });
            }
            Ok((raw & FUSED_VALID_BIT != 0).then_some(SemanticMotionLabel {
                class_id: (raw & 0xFFFF) as u16,
                motion: if raw & FUSED_MOTION_BIT != 0 { Motion::Dynamic } else { Motion::Static },
            }))
        })
        .collect()
}

// ----------------------------------------------------------------- flow

pub fn read_flow(path: &Path, n_points: usize) -> Result<FlowField, IngestError> {
    let bytes = read_bytes(path)?;
    let recs = records(path, &bytes, 12)?;
    expect_count(path, n_points, recs.len())?;
    let mut vectors = Vec::with_capacity(n_points);
    for (i, rec) in recs.enumerate() {
        let v = [f32_at(rec, 0), f32_at(rec, 1), f32_at(rec, 2)];
        if !v.iter().all(|x| x.is_finite()) {
            return Err(IngestError::NonFiniteValue {
                path: path.to_path_buf(),
                index: i,
            });
        }
        vectors.push(v);
    }
    let source = frame_id_from_path(path).unwrap_or(0);
    Ok(FlowField {
        vectors,
        source_frame: source,
        target_frame: source + 1,
    })
}

pub fn write_flow(path: &Path, flow: &FlowField) -> Result<(), IngestError> {
    let out: Vec<u8> = flow
        .vectors
        .iter()
        .flat_map(|v| v.iter().flat_map(|x| x.to_le_bytes()))
        .collect();
    write_atomic(path, &out)
}

// ------------------------------------------------------ byte-per-point

fn read_byte_layer(path: &Path, n_points: Option<usize>) -> Result<Vec<u8>, IngestError> {
    let bytes = read_bytes(path)?;
    if let Some(n) = n_points {
        expect_count(path, n, bytes.len())?;
    }
    Ok(bytes)
}

pub fn write_discrepancy(path: &Path, categories: &[Option<DiscrepancyCategory>]) -> Result<(), IngestError> {
    let out: Vec<u8> = categories
        .iter()
        .map(|c| c.map_or(INVALID_BYTE, DiscrepancyCategory::code))
        .collect();
    write_atomic(path, &out)
}

/// Reads a discrepancy layer; pass `None` to accept any length.
pub fn read_discrepancy(path: &Path, n_points: Option<usize>) -> Result<Vec<Option<DiscrepancyCategory>>, IngestError> {
    read_byte_layer(path, n_points)?
        .into_iter()
        .enumerate()
        .map(|(index, b)| match b {
            INVALID_BYTE => Ok(None),
            _ => DiscrepancyCategory::from_code(b).map(Some).ok_or(IngestError::InvalidCategory {
                path: path.to_path_buf(),
                index,
                value: b,
            }),
        })
        .collect()
}

pub fn write_predictive_labels(path: &Path, labels: &[Option<Motion>]) -> Result<(), IngestError> {
    let out: Vec<u8> = labels
        .iter()
        .map(|m| match m {
            None => INVALID_BYTE,
            Some(Motion::Static) => 0,
            Some(Motion::Dynamic) => 1,
        })
        .collect();
    write_atomic(path, &out)
}

pub fn read_predictive_labels(path: &Path, n_points: usize) -> Result<Vec<Option<Motion>>, IngestError> {
    read_byte_layer(path, Some(n_points))?
        .into_iter()
        .enumerate()
        .map(|(index, b)| match b {
            0 => Ok(Some(Motion::Static)),
            1 => Ok(Some(Motion::Dynamic)),
            INVALID_BYTE => Ok(None),
            _ => Err(IngestError::InvalidCategory {
                path: path.to_path_buf(),
                index,
                value: b,
            }),
        })
        .collect()
}

pub fn read_ground_mask(path: &Path, n_points: usize) -> Result<Vec<bool>, IngestError> {
    read_byte_layer(path, Some(n_points))?
        .into_iter()
        .enumerate()
        .map(|(index, b)| match b {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(IngestError::InvalidCategory {
                path: path.to_path_buf(),
                index,
                value: b,
            }),
        })
        .collect()
}

pub fn write_ground_mask(path: &Path, mask: &[bool]) -> Result<(), IngestError> {
    let out: Vec<u8> = mask.iter().map(|&g| g as u8).collect();
    write_atomic(path, &out)
}

pub fn write_anomaly_labels(path: &Path, labels: &[AnomalyPoint]) -> Result<(), IngestError> {
    let out: Vec<u8> = labels.iter().map(|a| a.code()).collect();
    write_atomic(path, &out)
}

pub fn read_anomaly_labels(path: &Path, n_points: usize) -> Result<Vec<AnomalyPoint>, IngestError> {
    read_byte_layer(path, Some(n_points))?
        .into_iter()
        .enumerate()
        .map(|(index, b)| {
            AnomalyPoint::from_code(b).ok_or(IngestError::InvalidCategory {
                path: path.to_path_buf(),
                index,
                value: b,
            })
        })
        .collect()
}

// ---------------------------------------------------------------- text

fn parse_numbers(path: &Path, line_no: usize, text: &str, expected: usize) -> Result<Vec<f64>, IngestError> {
    let malformed = |reason: String| IngestError::MalformedLine {
        path: path.to_path_buf(),
        line: line_no,
        reason,
    };
    let values = text
        .split_whitespace()
        .map(|tok| {
            tok.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| malformed(format!("{tok:?} is not a finite number")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if values.len() != expected {
        return Err(malformed(format!("expected {expected} numbers, found {}", values.len())));
    }
    Ok(values)
}

fn rigid_from_values(path: &Path, line: usize, values: &[f64]) -> Result<RigidTransform, IngestError> {
    let arr: [f64; 12] = values.try_into().expect("12 values");
    let (rotation, translation) = split_row_major(&arr);
    RigidTransform::new_orthonormalized(rotation, translation, FILE_ROTATION_TOLERANCE).map_err(|e| match e {
        crate::error::GeometryError::NonOrthonormal { deviation } => IngestError::NonOrthonormalRotation {
            path: path.to_path_buf(),
            line,
            deviation,
        },
        crate::error::GeometryError::NonFinite => IngestError::MalformedLine {
            path: path.to_path_buf(),
            line,
            reason: "non-finite transform".into(),
        },
    })
}

/// KITTI odometry poses: one row-major 3×4 matrix per non-empty line.
pub fn read_poses(path: &Path) -> Result<Vec<RigidTransform>, IngestError> {
    let text = read_text(path)?;
    let mut poses = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let values = parse_numbers(path, i + 1, line, 12)?;
        poses.push(rigid_from_values(path, i + 1, &values)?);
    }
    Ok(poses)
}

fn join_numbers(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:e}")).collect::<Vec<_>>().join(" ")
}

pub fn write_poses(path: &Path, poses: &[RigidTransform]) -> Result<(), IngestError> {
    let mut out = String::new();
    for p in poses {
        out.push_str(&join_numbers(&p.to_row_major()));
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

/// Reads `P2:`, `R0_rect:` and `Tr:` (or `Tr_velo_to_cam:`); other keys are
/// ignored. `R0_rect` is optional (odometry calibration files are already
/// rectified) and defaults to the identity.
pub fn read_calibration(path: &Path) -> Result<CalibrationSet, IngestError> {
    let text = read_text(path)?;
    let (mut p2, mut r0, mut tr) = (None, None, None);
    for (i, line) in text.lines().enumerate() {
        let Some((key, rest)) = line.split_once(':') else {
            continue;
        };
        match key.trim() {
            "P2" => p2 = Some(parse_numbers(path, i + 1, rest, 12)?),
            "R0_rect" => r0 = Some(parse_numbers(path, i + 1, rest, 9)?),
            "Tr" | "Tr_velo_to_cam" => tr = Some((i + 1, parse_numbers(path, i + 1, rest, 12)?)),
            _ => {}
        }
    }
    let missing = |key: &str| IngestError::InvalidConfig {
        path: path.to_path_buf(),
        reason: format!("missing key {key}"),
    };
    let p2 = p2.ok_or_else(|| missing("P2"))?;
    let (tr_line, tr) = tr.ok_or_else(|| missing("Tr"))?;
    let projection = Matrix3x4::from_row_slice(&p2);
    let rect = r0.map_or_else(Matrix3::identity, |r| Matrix3::from_row_slice(&r));
    let lidar_to_cam = rigid_from_values(path, tr_line, &tr)?;
    CalibrationSet::new(projection, rect, lidar_to_cam).map_err(|reason| IngestError::InvalidConfig {
        path: path.to_path_buf(),
        reason,
    })
}

pub fn write_calibration(path: &Path, calib: &CalibrationSet) -> Result<(), IngestError> {
    let p: Vec<f64> = (0..3).flat_map(|r| (0..4).map(move |c| (r, c))).map(|(r, c)| calib.projection[(r, c)]).collect();
    let rect = calib.rect_rotation();
    let r: Vec<f64> = (0..3).flat_map(|i| (0..3).map(move |j| (i, j))).map(|(i, j)| rect[(i, j)]).collect();
    let out = format!(
        "P2: {}\nR0_rect: {}\nTr: {}\n",
        join_numbers(&p),
        join_numbers(&r),
        join_numbers(&calib.lidar_to_cam.to_row_major())
    );
    write_atomic(path, out.as_bytes())
}

// ------------------------------------------------------ anomaly boxes

/// Anomaly superclasses, in reporting order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Superclass {
    Pedestrian,
    Cyclist,
    Vehicle,
    Animal,
    TrafficFacility,
    Obstruction,
    Misc,
}

impl Superclass {
    pub const ALL: [Superclass; 7] = [
        Superclass::Pedestrian,
        Superclass::Cyclist,
        Superclass::Vehicle,
        Superclass::Animal,
        Superclass::TrafficFacility,
        Superclass::Obstruction,
        Superclass::Misc,
    ];

    /// Point-label code, 1–7.
    pub fn code(self) -> u8 {
        self as u8 + 1
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get((code as usize).wrapping_sub(1)).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Superclass::Pedestrian => "pedestrian",
            Superclass::Cyclist => "cyclist",
            Superclass::Vehicle => "vehicle",
            Superclass::Animal => "animal",
            Superclass::TrafficFacility => "traffic_facility",
            Superclass::Obstruction => "obstruction",
            Superclass::Misc => "misc",
        }
    }
}

impl fmt::Display for Superclass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Superclass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown superclass {s:?}"))
    }
}

/// Axis-aligned pixel rectangle, corners inclusive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl PixelBox {
    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= self.x1 && u <= self.x2 && v >= self.y1 && v <= self.y2
    }

    pub fn area(&self) -> f64 {
        (self.x2 - self.x1).max(0.0) * (self.y2 - self.y1).max(0.0)
    }

    pub fn within(&self, size: ImageSize) -> bool {
        self.x1 >= 0.0 && self.y1 >= 0.0 && self.x2 <= size.width as f64 && self.y2 <= size.height as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnomalyBox {
    pub rect: PixelBox,
    pub superclass: Superclass,
    pub instance_id: u32,
}

/// Anomaly boxes grouped by image (frame) id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnomalyBoxSet {
    pub images: BTreeMap<u32, Vec<AnomalyBox>>,
}

impl AnomalyBoxSet {
    pub fn boxes(&self, image_id: u32) -> &[AnomalyBox] {
        self.images.get(&image_id).map_or(&[], Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.images.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn push(&mut self, image_id: u32, b: AnomalyBox) {
        self.images.entry(image_id).or_default().push(b);
    }

    pub fn all_within(&self, size: ImageSize) -> bool {
        self.images.values().flatten().all(|b| b.rect.within(size))
    }
}

/// Line records `image_id x1 y1 x2 y2 superclass instance_id`; blank lines and
/// `#` comments are skipped.
pub fn read_anomaly_boxes(path: &Path) -> Result<AnomalyBoxSet, IngestError> {
    let text = read_text(path)?;
    let mut set = AnomalyBoxSet::default();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let malformed = |reason: String| IngestError::MalformedLine {
            path: path.to_path_buf(),
            line: line_no,
            reason,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 7 {
            return Err(malformed(format!("expected 7 fields, found {}", fields.len())));
        }
        let image_id: u32 = fields[0].parse().map_err(|_| malformed(format!("bad image id {:?}", fields[0])))?;
        let coords = parse_numbers(path, line_no, &fields[1..5].join(" "), 4)?;
        let superclass: Superclass = fields[5].parse().map_err(|_| IngestError::UnknownSuperclass {
            path: path.to_path_buf(),
            line: line_no,
            name: fields[5].to_string(),
        })?;
        let instance_id: u32 = fields[6].parse().map_err(|_| malformed(format!("bad instance id {:?}", fields[6])))?;
        let rect = PixelBox {
            x1: coords[0].min(coords[2]),
            y1: coords[1].min(coords[3]),
            x2: coords[0].max(coords[2]),
            y2: coords[1].max(coords[3]),
        };
        if rect.area() <= 0.0 {
            return Err(IngestError::DegenerateBox {
                path: path.to_path_buf(),
                line: line_no,
            });
        }
        set.push(image_id, AnomalyBox { rect, superclass, instance_id });
    }
    Ok(set)
}

pub fn write_anomaly_boxes(path: &Path, set: &AnomalyBoxSet) -> Result<(), IngestError> {
    let mut out = String::new();
    for (image, boxes) in &set.images {
        for b in boxes {
            out.push_str(&format!(
                "{image} {} {} {} {} {} {}\n",
                b.rect.x1, b.rect.y1, b.rect.x2, b.rect.y2, b.superclass, b.instance_id
            ));
        }
    }
    write_atomic(path, out.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use tempfile::TempDir;

    fn write_raw(dir: &TempDir, name: &str, bytes: &[u8]) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, bytes).unwrap();
        p
    }

    #[test]
    fn scan_known_values() {
        let dir = TempDir::new().unwrap();
        let mut bytes = Vec::new();
        for v in [1.0f32, 2.0, 3.0, 0.5, -4.25, 0.0, 1e-3, 1.0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let p = write_raw(&dir, "000007.bin", &bytes);
        let cloud = read_scan(&p).unwrap();
        assert_eq!(cloud.points, vec![[1.0, 2.0, 3.0], [-4.25, 0.0, 1e-3]]);
        assert_eq!(cloud.intensity, Some(vec![0.5, 1.0]));
        assert_eq!(cloud.frame_id, 7);
    }

    #[test]
    fn scan_empty_and_truncated() {
        let dir = TempDir::new().unwrap();
        assert!(read_scan(&write_raw(&dir, "e.bin", &[])).unwrap().is_empty());
        assert!(matches!(
            read_scan(&write_raw(&dir, "t.bin", &[0u8; 33])),
            Err(IngestError::TruncatedFile { len: 33, record: 16, .. })
        ));
    }

    #[test]
    fn scan_rejects_nan() {
        let dir = TempDir::new().unwrap();
        let mut bytes = Vec::new();
        for v in [0.0f32, f32::NAN, 0.0, 0.0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        assert!(matches!(
            read_scan(&write_raw(&dir, "n.bin", &bytes)),
            Err(IngestError::NonFiniteValue { index: 0, .. })
        ));
    }

    #[test]
    fn label_bit_split() {
        let dir = TempDir::new().unwrap();
        let p = write_raw(&dir, "l.label", &0x0001_000Au32.to_le_bytes());
        let labels = read_semantic_labels(&p, 1).unwrap();
        assert_eq!(labels.class_ids, vec![10]);
        assert_eq!(labels.instance_ids, vec![1]);
        let p = write_raw(&dir, "short.label", &[0u8; 8]);
        assert!(matches!(
            read_semantic_labels(&p, 3),
            Err(IngestError::LengthMismatch { expected: 3, actual: 2, .. })
        ));
    }

    #[test]
    fn motion_label_convention() {
        let dir = TempDir::new().unwrap();
        let raw: Vec<u8> = [0u32, 9, 251, 0x0003_00FC].iter().flat_map(|v| v.to_le_bytes()).collect();
        let p = write_raw(&dir, "m.label", &raw);
        assert_eq!(
            read_motion_labels(&p, 4).unwrap(),
            vec![None, Some(Motion::Static), Some(Motion::Dynamic), Some(Motion::Dynamic)]
        );
        let p = write_raw(&dir, "bad.label", &40u32.to_le_bytes());
        assert!(matches!(read_motion_labels(&p, 1), Err(IngestError::InvalidLabel { value: 40, .. })));
    }

    #[test]
    fn poses_parse_and_reject() {
        let dir = TempDir::new().unwrap();
        let p = write_raw(&dir, "poses.txt", b"1 0 0 0 0 1 0 0 0 0 1 0\n");
        let poses = read_poses(&p).unwrap();
        assert_eq!(poses, vec![RigidTransform::identity()]);

        let p = write_raw(&dir, "short.txt", b"1 0 0 0 0 1 0 0 0 0 1\n");
        assert!(matches!(read_poses(&p), Err(IngestError::MalformedLine { line: 1, .. })));

        let p = write_raw(&dir, "skew.txt", b"1 0 0 0 0 1 0 0 0 0 1 0\n1 0.1 0 0 0 1 0 0 0 0 1 0\n");
        assert!(matches!(read_poses(&p), Err(IngestError::NonOrthonormalRotation { line: 2, .. })));
    }

    #[test]
    fn discrepancy_bytes() {
        let dir = TempDir::new().unwrap();
        let p = write_raw(&dir, "a.disc", &[255, 255, 255]);
        assert_eq!(read_discrepancy(&p, Some(3)).unwrap(), vec![None; 3]);
        let p = write_raw(&dir, "b.disc", &[0, 7]);
        assert!(matches!(
            read_discrepancy(&p, Some(2)),
            Err(IngestError::InvalidCategory { index: 1, value: 7, .. })
        ));
    }

    #[test]
    fn anomaly_box_records() {
        let dir = TempDir::new().unwrap();
        let p = write_raw(&dir, "boxes.txt", b"3 100 100 200 300 vehicle 1\n");
        let set = read_anomaly_boxes(&p).unwrap();
        assert_eq!(set.len(), 1);
        let b = set.boxes(3)[0];
        assert_eq!(b.superclass, Superclass::Vehicle);
        assert_eq!(b.rect, PixelBox { x1: 100.0, y1: 100.0, x2: 200.0, y2: 300.0 });

        let p = write_raw(&dir, "two.txt", b"# c\n5 0 0 10 10 animal 1\n\n5 20 20 30 40 misc 2\n");
        let set = read_anomaly_boxes(&p).unwrap();
        assert_eq!(set.images.len(), 1);
        assert_eq!(set.boxes(5).len(), 2);

        let p = write_raw(&dir, "ufo.txt", b"1 0 0 10 10 spaceship 1\n");
        assert!(matches!(read_anomaly_boxes(&p), Err(IngestError::UnknownSuperclass { ref name, .. }) if name == "spaceship"));

        let p = write_raw(&dir, "flat.txt", b"1 5 0 5 10 misc 1\n");
        assert!(matches!(read_anomaly_boxes(&p), Err(IngestError::DegenerateBox { line: 1, .. })));
    }

    #[test]
    fn superclass_codes() {
        for (i, s) in Superclass::ALL.iter().enumerate() {
            assert_eq!(s.code() as usize, i + 1);
            assert_eq!(Superclass::from_code(s.code()), Some(*s));
        }
        assert_eq!(Superclass::from_code(0), None);
        assert_eq!(Superclass::from_code(8), None);
    }

    #[test]
    fn calibration_requires_keys() {
        let dir = TempDir::new().unwrap();
        let p = write_raw(&dir, "calib.txt", b"P2: 700 0 600 0 0 700 180 0 0 0 1 0\n");
        assert!(matches!(read_calibration(&p), Err(IngestError::InvalidConfig { .. })));
    }

    fn finite_f32() -> impl Strategy<Value = f32> {
        prop::num::f32::NORMAL | prop::num::f32::ZERO | prop::num::f32::SUBNORMAL
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn scan_round_trip(pts in prop::collection::vec((prop::array::uniform3(finite_f32()), finite_f32()), 0..64)) {
            let dir = TempDir::new().unwrap();
            let p = dir.path().join("x.bin");
            let cloud = PointCloud::with_intensity(pts.iter().map(|x| x.0).collect(), pts.iter().map(|x| x.1).collect()).unwrap();
            write_scan(&p, &cloud).unwrap();
            let bytes = std::fs::read(&p).unwrap();
            let back = read_scan(&p).unwrap();
            write_scan(&p, &back).unwrap();
            prop_assert_eq!(std::fs::read(&p).unwrap(), bytes);
            prop_assert_eq!(back.points.iter().flatten().map(|v| v.to_bits()).collect::<Vec<_>>(),
                            cloud.points.iter().flatten().map(|v| v.to_bits()).collect::<Vec<_>>());
        }

        #[test]
        fn label_round_trip(raw in prop::collection::vec(any::<u32>(), 0..64)) {
            let dir = TempDir::new().unwrap();
            let p = dir.path().join("x.label");
            let labels = SemanticLabels::from_raw(&raw);
            write_labels(&p, &labels).unwrap();
            prop_assert_eq!(read_semantic_labels(&p, raw.len()).unwrap(), labels);
            prop_assert_eq!(std::fs::read(&p).unwrap(), raw.iter().flat_map(|v| v.to_le_bytes()).collect::<Vec<_>>());
        }

        #[test]
        fn flow_round_trip(v in prop::collection::vec(prop::array::uniform3(finite_f32()), 0..64)) {
            let dir = TempDir::new().unwrap();
            let p = dir.path().join("000003.flow");
            write_flow(&p, &FlowField::new(v.clone())).unwrap();
            let back = read_flow(&p, v.len()).unwrap();
            prop_assert_eq!(back.source_frame, 3);
            prop_assert_eq!(back.vectors.iter().flatten().map(|x| x.to_bits()).collect::<Vec<_>>(),
                            v.iter().flatten().map(|x| x.to_bits()).collect::<Vec<_>>());
        }

        #[test]
        fn byte_layers_round_trip(codes in prop::collection::vec(prop::sample::select(vec![0u8, 1, 2, 3, 255]), 0..64)) {
            let dir = TempDir::new().unwrap();
            let p = dir.path().join("x.disc");
            let cats: Vec<_> = codes.iter().map(|&c| DiscrepancyCategory::from_code(c)).collect();
            write_discrepancy(&p, &cats).unwrap();
            prop_assert_eq!(std::fs::read(&p).unwrap(), codes.clone());
            prop_assert_eq!(read_discrepancy(&p, Some(codes.len())).unwrap(), cats);

            let pred: Vec<_> = codes.iter().map(|&c| match c { 0 => Some(Motion::Static), 1 => Some(Motion::Dynamic), _ => None }).collect();
            let q = dir.path().join("x.pred");
            write_predictive_labels(&q, &pred).unwrap();
            prop_assert_eq!(read_predictive_labels(&q, pred.len()).unwrap(), pred);
        }

        #[test]
        fn fused_round_trip(items in prop::collection::vec((any::<u16>(), any::<bool>(), any::<bool>()), 0..64)) {
            let dir = TempDir::new().unwrap();
            let p = dir.path().join("x.fused");
            let classes: Vec<u16> = items.iter().map(|x| x.0).collect();
            let fused: Vec<_> = items.iter().map(|&(c, dyn_, valid)| valid.then_some(SemanticMotionLabel {
                class_id: c, motion: if dyn_ { Motion::Dynamic } else { Motion::Static } })).collect();
            write_fused(&p, &classes, &fused).unwrap();
            let bytes = std::fs::read(&p).unwrap();
            let back = read_fused(&p, items.len()).unwrap();
            prop_assert_eq!(&back, &fused);
            write_fused(&p, &classes, &back).unwrap();
            prop_assert_eq!(std::fs::read(&p).unwrap(), bytes);
        }

        #[test]
        fn anomaly_labels_round_trip(codes in prop::collection::vec(prop::sample::select(vec![0u8, 1, 2, 3, 4, 5, 6, 7, 255]), 0..64)) {
            let dir = TempDir::new().unwrap();
            let p = dir.path().join("x.anom");
            let labels: Vec<_> = codes.iter().map(|&c| AnomalyPoint::from_code(c).unwrap()).collect();
            write_anomaly_labels(&p, &labels).unwrap();
            prop_assert_eq!(std::fs::read(&p).unwrap(), codes.clone());
            prop_assert_eq!(read_anomaly_labels(&p, codes.len()).unwrap(), labels);
        }

        #[test]
        fn pose_round_trip(angle in -3.1..3.1f64, axis in prop::array::uniform3(0.1..1.0f64),
                           t in prop::array::uniform3(-500.0..500.0f64)) {
            let dir = TempDir::new().unwrap();
            let p = dir.path().join("poses.txt");
            let pose = RigidTransform::from_axis_angle(nalgebra::Vector3::from(axis), angle)
                .with_translation(nalgebra::Vector3::from(t));
            write_poses(&p, &[pose, RigidTransform::identity()]).unwrap();
            let back = read_poses(&p).unwrap();
            prop_assert_eq!(back.len(), 2);
            prop_assert!(back[0].max_abs_diff(&pose) <= 1e-9);
        }

        #[test]
        fn box_round_trip(boxes in prop::collection::vec((0u32..5, 0.0..600.0f64, 0.0..180.0f64, 1.0..600.0f64, 1.0..190.0f64, 0usize..7, any::<u32>()), 0..12)) {
            let dir = TempDir::new().unwrap();
            let p = dir.path().join("boxes.txt");
            let mut set = AnomalyBoxSet::default();
            for (img, x, y, w, h, c, inst) in boxes {
                set.push(img, AnomalyBox { rect: PixelBox { x1: x, y1: y, x2: x + w, y2: y + h },
                    superclass: Superclass::ALL[c], instance_id: inst });
            }
            write_anomaly_boxes(&p, &set).unwrap();
            prop_assert_eq!(read_anomaly_boxes(&p).unwrap(), set);
        }
    }

    #[test]
    fn calibration_round_trip() {
        let dir = TempDir::new().unwrap();
        let p = dir.path().join("calib.txt");
        let calib = crate::synth::kitti_calibration();
        write_calibration(&p, &calib).unwrap();
        let back = read_calibration(&p).unwrap();
        assert_eq!(back.projection, calib.projection);
        assert!((back.rect - calib.rect).abs().max() < 1e-12);
        assert!(back.lidar_to_cam.max_abs_diff(&calib.lidar_to_cam) < 1e-12);
    }
}
