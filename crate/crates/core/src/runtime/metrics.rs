use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::trainer::UpdateStats;

/// One line of the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum MetricRecord {
    Update {
        step: u64,
        version: u64,
        receptions: u64,
        elapsed_secs: f64,
        samples_per_sec: f64,
        buffer_fill: f64,
        #[serde(flatten)]
        stats: UpdateStats,
    },
    Checkpoint {
        step: u64,
        path: PathBuf,
    },
    Eval {
        step: u64,
        opponent: String,
        games: usize,
        winrate: f64,
        ci95: (f64, f64),
    },
    Stall {
        idle_secs: f64,
    },
    Dropped {
        total: u64,
        reason: String,
    },
}

/// Appends JSON lines to a file, flushing after each record.
pub struct MetricsWriter {
    out: BufWriter<File>,
}

impl MetricsWriter {
    pub fn append(path: &Path) -> std::io::Result<MetricsWriter> {
        let f = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(MetricsWriter { out: BufWriter::new(f) })
    }

    pub fn write(&mut self, r: &MetricRecord) -> std::io::Result<()> {
        serde_json::to_writer(&mut self.out, r)?;
        self.out.write_all(b"\n")?;
        self.out.flush()
    }
}

pub fn read_metrics(path: &Path) -> std::io::Result<Vec<MetricRecord>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(std::io::Error::from))
        .collect()
}
