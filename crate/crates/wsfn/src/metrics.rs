//! Append-only metrics log: one `step, split, metric, value` line per record.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub step: u64,
    pub split: String,
    pub metric: String,
    pub value: f64,
}

impl Record {
    pub fn render(&self) -> String {
        format!(
            "{}, {}, {}, {:?}",
            self.step, self.split, self.metric, self.value
        )
    }

    pub fn parse(line: &str) -> Option<Self> {
        let mut parts = line.split(',').map(str::trim);
        let step = parts.next()?.parse().ok()?;
        let split = parts.next()?.to_string();
        let metric = parts.next()?.to_string();
        let value = parts.next()?.parse().ok()?;
        parts.next().is_none().then_some(Self {
            step,
            split,
            metric,
            value,
        })
    }
}

pub struct MetricsLog {
    path: PathBuf,
    file: File,
}

impl MetricsLog {
    pub fn open(path: &Path) -> Result<Self> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(Error::io(path))?;
        Ok(Self {
            path: path.to_path_buf(),
            file,
        })
    }

    pub fn log(&mut self, step: u64, split: &str, metric: &str, value: f64) -> Result<()> {
        let r = Record {
            step,
            split: split.into(),
            metric: metric.into(),
            value,
        };
        writeln!(self.file, "{}", r.render()).map_err(Error::io(&self.path))
    }
}

/// All well-formed records of a log, in file order.
pub fn read(path: &Path) -> Result<Vec<Record>> {
    let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
    Ok(text.lines().filter_map(Record::parse).collect())
}

/// Drops records past `step` so a resumed run can append without
/// duplicating history.
pub fn truncate_after(path: &Path, step: u64) -> Result<()> {
    if !path.exists() {
        return Ok(());
    }
    let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
    let kept: String = text
        .lines()
        .filter(|l| Record::parse(l).is_some_and(|r| r.step <= step))
        .map(|l| format!("{l}\n"))
        .collect();
    std::fs::write(path, kept).map_err(Error::io(path))
}

/// Last value of every `(split, metric)` pair, in first-seen order.
pub fn latest(records: &[Record]) -> Vec<Record> {
    let mut out: Vec<Record> = Vec::new();
    for r in records {
        match out
            .iter_mut()
            .find(|o| o.split == r.split && o.metric == r.metric)
        {
            Some(o) => *o = r.clone(),
            None => out.push(r.clone()),
        }
    }
    out
}
