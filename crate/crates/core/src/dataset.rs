//! Replay dataset: JSON lines. The first line is a header
//! `{"format":"ppgema-dataset","version":1,...}`; every following line is
//! `{"sample": <payload>, "script": <scripted response or null>}`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::SamplePayload;
use crate::simulator::ScriptedResponse;

pub const DATASET_FORMAT: &str = "ppgema-dataset";
pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unsupported dataset {format} v{version}")]
    Format { format: String, version: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format: String,
    pub version: u32,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub subjects: Vec<String>,
}

impl DatasetHeader {
    pub fn new(seed: Option<u64>, subjects: Vec<String>) -> Self {
        Self {
            format: DATASET_FORMAT.into(),
            version: DATASET_VERSION,
            seed,
            subjects,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub sample: SamplePayload,
    #[serde(default)]
    pub script: Option<ScriptedResponse>,
}

/// Rounds every payload value to `decimals` places to keep files small.
pub fn round_payload(p: &mut SamplePayload, decimals: i32) {
    let scale = 10f64.powi(decimals);
    let r = |v: &mut f64| *v = (*v * scale).round() / scale;
    p.ppg.iter_mut().for_each(r);
    for ch in [&mut p.acc, &mut p.gyro, &mut p.grav] {
        ch.iter_mut().flat_map(|row| row.iter_mut()).for_each(r);
    }
}

pub struct DatasetWriter<W: Write> {
    out: W,
    decimals: Option<i32>,
}

impl DatasetWriter<BufWriter<File>> {
    pub fn create(path: &Path, header: &DatasetHeader, decimals: Option<i32>) -> Result<Self, DatasetError> {
        let file = File::create(path).map_err(|e| io_err(path, e))?;
        Self::new(BufWriter::new(file), header, decimals).map_err(|e| io_err(path, e))
    }
}

impl<W: Write> DatasetWriter<W> {
    pub fn new(mut out: W, header: &DatasetHeader, decimals: Option<i32>) -> std::io::Result<Self> {
        serde_json::to_writer(&mut out, header)?;
        out.write_all(b"\n")?;
        Ok(Self { out, decimals })
    }

    pub fn write(&mut self, record: &DatasetRecord) -> std::io::Result<()> {
        match self.decimals {
            Some(d) => {
                let mut r = record.clone();
                round_payload(&mut r.sample, d);
                serde_json::to_writer(&mut self.out, &r)?;
            }
            None => serde_json::to_writer(&mut self.out, record)?,
        }
        self.out.write_all(b"\n")
    }

    pub fn finish(mut self) -> std::io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

fn io_err(path: &Path, source: std::io::Error) -> DatasetError {
    DatasetError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Streams records from a dataset. An empty input yields no header and no
/// records.
pub struct DatasetReader<R: BufRead> {
    lines: std::io::Lines<R>,
    line: usize,
    pub header: Option<DatasetHeader>,
}

impl DatasetReader<BufReader<File>> {
    pub fn open(path: &Path) -> Result<Self, DatasetError> {
        let file = File::open(path).map_err(|e| io_err(path, e))?;
        Self::new(BufReader::new(file))
    }
}

impl<R: BufRead> DatasetReader<R> {
    pub fn new(input: R) -> Result<Self, DatasetError> {
        let mut lines = input.lines();
        let mut line = 0;
        let header = loop {
            match lines.next() {
                None => break None,
                Some(text) => {
                    line += 1;
                    let text = text.map_err(|e| DatasetError::Parse {
                        line,
                        message: e.to_string(),
                    })?;
                    if text.trim().is_empty() {
                        continue;
                    }
                    let header: DatasetHeader = serde_json::from_str(&text).map_err(|e| DatasetError::Parse {
                        line,
                        message: format!("bad header: {e}"),
                    })?;
                    if header.format != DATASET_FORMAT || header.version != DATASET_VERSION {
                        return Err(DatasetError::Format {
                            format: header.format,
                            version: header.version,
                        });
                    }
                    break Some(header);
                }
            }
        };
        Ok(Self { lines, line, header })
    }
}

impl<R: BufRead> Iterator for DatasetReader<R> {
    type Item = Result<DatasetRecord, DatasetError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let text = self.lines.next()?;
            self.line += 1;
            let line = self.line;
            let text = match text {
                Ok(t) => t,
                Err(e) => {
                    return Some(Err(DatasetError::Parse {
                        line,
                        message: e.to_string(),
                    }))
                }
            };
            if text.trim().is_empty() {
                continue;
            }
            return Some(serde_json::from_str(&text).map_err(|e| DatasetError::Parse {
                line,
                message: e.to_string(),
            }));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Emotion, ReportedActivity, StressLevel};

    fn record(t: i64) -> DatasetRecord {
        DatasetRecord {
            sample: SamplePayload {
                subject_id: "S01".into(),
                t_start_ms: t,
                fs: 20.0,
                ppg: vec![0.123456789; 4],
                acc: vec![[1.0 / 3.0; 3]; 4],
                gyro: vec![[0.0; 3]; 4],
                grav: vec![[0.0, 0.0, 9.81]; 4],
            },
            script: (t > 0).then_some(ScriptedResponse {
                latency_ms: 60_000,
                stress: StressLevel::new(2).unwrap(),
                emotion: Emotion::Neutral,
                activity: ReportedActivity::Sitting,
            }),
        }
    }

    #[test]
    fn round_trip_with_rounding() {
        let mut w = DatasetWriter::new(Vec::new(), &DatasetHeader::new(Some(3), vec!["S01".into()]), Some(4)).unwrap();
        w.write(&record(0)).unwrap();
        w.write(&record(900_000)).unwrap();
        let bytes = w.finish().unwrap();
        let r = DatasetReader::new(bytes.as_slice()).unwrap();
        assert_eq!(r.header.as_ref().unwrap().seed, Some(3));
        let recs: Vec<_> = r.collect::<Result<_, _>>().unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].sample.ppg[0], 0.1235);
        assert_eq!(recs[1].script, record(900_000).script);
    }

    #[test]
    fn empty_input_has_no_records() {
        let mut r = DatasetReader::new("".as_bytes()).unwrap();
        assert!(r.header.is_none());
        assert!(r.next().is_none());
    }

    #[test]
    fn foreign_header_rejected() {
        assert!(matches!(
            DatasetReader::new(r#"{"format":"other","version":1}"#.as_bytes()),
            Err(DatasetError::Format { .. })
        ));
    }
}
