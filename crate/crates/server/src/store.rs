//! Append-only verdict log (one JSON object per line).

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// The supervised model missed or invented motion.
    SvFailure,
    /// The flow-derived labels are wrong.
    SsvFailure,
    BothFailed,
    FalseAlarm,
    Unsure,
}

impl Verdict {
    pub const ALL: [Verdict; 5] = [
        Verdict::SvFailure,
        Verdict::SsvFailure,
        Verdict::BothFailed,
        Verdict::FalseAlarm,
        Verdict::Unsure,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Verdict::SvFailure => "sv_failure",
            Verdict::SsvFailure => "ssv_failure",
            Verdict::BothFailed => "both_failed",
            Verdict::FalseAlarm => "false_alarm",
            Verdict::Unsure => "unsure",
        }
    }

    /// Verdicts that make a frame a retraining query for the supervised model.
    pub fn is_sv_query(self) -> bool {
        matches!(self, Verdict::SvFailure | Verdict::BothFailed)
    }
}

impl FromStr for Verdict {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| format!("unknown verdict {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub id: u64,
    pub frame: u32,
    pub cluster_id: u32,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reviewer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    /// Seconds since the Unix epoch.
    pub recorded_at: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed verdict record: {reason}")]
    Malformed { path: PathBuf, line: usize, reason: String },
}

#[derive(Debug)]
pub struct VerdictStore {
    path: PathBuf,
    file: File,
    records: Vec<VerdictRecord>,
}

impl VerdictStore {
    /// Opens (or creates) the log and replays existing records.
    pub fn open(path: &Path) -> Result<Self, StoreError> {
        let io_err = |source| StoreError::Io {
            path: path.to_path_buf(),
            source,
        };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(io_err)?;
        }
        let mut records = Vec::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path).map_err(io_err)?);
            for (n, line) in reader.lines().enumerate() {
                let line = line.map_err(io_err)?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: VerdictRecord = serde_json::from_str(&line).map_err(|e| StoreError::Malformed {
                    path: path.to_path_buf(),
                    line: n + 1,
                    reason: e.to_string(),
                })?;
                records.push(rec);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(io_err)?;
        Ok(Self {
            path: path.to_path_buf(),
            file,
            records,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn next_id(&self) -> u64 {
        self.records.iter().map(|r| r.id + 1).max().unwrap_or(1)
    }

    /// Assigns an id, writes the record durably, then makes it visible.
    pub fn append(
        &mut self,
        frame: u32,
        cluster_id: u32,
        verdict: Verdict,
        reviewer: Option<String>,
        note: Option<String>,
    ) -> Result<VerdictRecord, StoreError> {
        let rec = VerdictRecord {
            id: self.next_id(),
            frame,
            cluster_id,
            verdict,
            reviewer,
            note,
            recorded_at: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
        };
        let mut line = serde_json::to_string(&rec).expect("record serializes");
        line.push('\n');
        let io_err = |source| StoreError::Io {
            path: self.path.clone(),
            source,
        };
        self.file.write_all(line.as_bytes()).map_err(io_err)?;
        self.file.sync_data().map_err(io_err)?;
        self.records.push(rec.clone());
        Ok(rec)
    }

    pub fn get(&self, id: u64) -> Option<&VerdictRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    /// Most recent verdict for a cluster.
    pub fn latest(&self, frame: u32, cluster_id: u32) -> Option<&VerdictRecord> {
        self.records
            .iter()
            .rev()
            .find(|r| r.frame == frame && r.cluster_id == cluster_id)
    }

    pub fn records(&self) -> &[VerdictRecord] {
        &self.records
    }
}
