//! Run records and their JSON-lines encoding.
//!
//! A record file has one header object (`fingerprint`, `seed`, `config`), one
//! object per logged interval with the metric keys, and a closing object with
//! `status` (plus `error` for failed runs). A file without the closing line is
//! read back as a failed run.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Completed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub step: u64,
    pub episode_return_mean: f64,
    pub intrinsic_mean: f64,
    pub intrinsic_std: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub idm_loss: Option<f64>,
    pub steps_per_second: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    fingerprint: String,
    seed: u64,
    config: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Footer {
    status: RunStatus,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    error: Option<String>,
}

/// First line of a record file, newline-terminated.
pub fn header_line(fingerprint: &str, seed: u64, config: &BTreeMap<String, String>) -> Result<String> {
    let header = Header {
        fingerprint: fingerprint.to_string(),
        seed,
        config: config.clone(),
    };
    Ok(serde_json::to_string(&header)? + "\n")
}

pub fn row_line(row: &MetricRow) -> Result<String> {
    Ok(serde_json::to_string(row)? + "\n")
}

pub fn footer_line(status: RunStatus, error: Option<&str>) -> Result<String> {
    let footer = Footer {
        status,
        error: error.map(str::to_string),
    };
    Ok(serde_json::to_string(&footer)? + "\n")
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub fingerprint: String,
    pub seed: u64,
    pub status: RunStatus,
    pub error: Option<String>,
    /// Canonical key/value pairs of the run config.
    pub config: BTreeMap<String, String>,
    pub metrics: Vec<MetricRow>,
}

impl RunRecord {
    pub fn algo(&self) -> &str {
        self.config.get("algo").map(String::as_str).unwrap_or("unknown")
    }

    pub fn env(&self) -> &str {
        self.config.get("env").map(String::as_str).unwrap_or("unknown")
    }

    /// Label used to group runs for aggregation: `label` if set, else `algo`.
    pub fn label(&self) -> &str {
        self.config
            .get("label")
            .map(String::as_str)
            .unwrap_or_else(|| self.algo())
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = header_line(&self.fingerprint, self.seed, &self.config)?;
        for m in &self.metrics {
            out.push_str(&row_line(m)?);
        }
        out.push_str(&footer_line(self.status, self.error.as_deref())?);
        Ok(out)
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        Self::read(text.as_bytes())
    }

    pub fn read(reader: impl BufRead) -> Result<Self> {
        let mut lines = reader.lines();
        let first = lines.next().ok_or_else(|| invalid("record file is empty"))??;
        let header: Header = serde_json::from_str(&first)?;
        let mut metrics = Vec::new();
        let mut footer = None;
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            if footer.is_some() {
                return Err(invalid("content after the status line"));
            }
            let value: serde_json::Value = serde_json::from_str(&line)?;
            if value.get("status").is_some() {
                footer = Some(serde_json::from_value::<Footer>(value)?);
            } else {
                let row: MetricRow = serde_json::from_value(value)?;
                if let Some(prev) = metrics.last() {
                    let prev: &MetricRow = prev;
                    if row.step <= prev.step {
                        return Err(invalid(format!("metric steps not increasing at step {}", row.step)));
                    }
                }
                metrics.push(row);
            }
        }
        let footer = footer.unwrap_or(Footer {
            status: RunStatus::Failed,
            error: Some("record truncated (no status line)".into()),
        });
        Ok(Self {
            fingerprint: header.fingerprint,
            seed: header.seed,
            status: footer.status,
            error: footer.error,
            config: header.config,
            metrics,
        })
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_jsonl()?.as_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read(std::io::BufReader::new(f))
    }

    /// Mean `episode_return_mean` over the last `fraction` of logged
    /// intervals (at least one interval).
    pub fn final_score(&self, fraction: f64) -> Option<f64> {
        if self.metrics.is_empty() {
            return None;
        }
        let k = ((self.metrics.len() as f64 * fraction).ceil() as usize).clamp(1, self.metrics.len());
        let tail = &self.metrics[self.metrics.len() - k..];
        Some(tail.iter().map(|m| m.episode_return_mean).sum::<f64>() / k as f64)
    }
}
