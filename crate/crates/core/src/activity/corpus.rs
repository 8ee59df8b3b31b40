//! Labelled-corpus CSV: `subject_id,label` followed by the 66 motion
//! feature columns in their documented order. Labels outside the five
//! classes are folded into `others`.

use std::io::{Read, Write};

use super::features::motion_feature_names;
use super::{ActivityError, ActivityLabel, LabeledSample, Result};

fn corpus_err(e: impl std::fmt::Display) -> ActivityError {
    ActivityError::Corpus(e.to_string())
}

pub fn read_labeled_csv<R: Read>(reader: R) -> Result<Vec<LabeledSample>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers().map_err(corpus_err)?.clone();
    let names = motion_feature_names();
    let expected: Vec<&str> = ["subject_id", "label"]
        .into_iter()
        .chain(names.iter().map(String::as_str))
        .collect();
    let got: Vec<&str> = header.iter().map(str::trim).collect();
    if got != expected {
        let at = got
            .iter()
            .zip(&expected)
            .position(|(a, b)| a != b)
            .unwrap_or(got.len().min(expected.len()));
        return Err(corpus_err(format!(
            "header column {} is {:?}, expected {:?}",
            at + 1,
            got.get(at).copied().unwrap_or(""),
            expected.get(at).copied().unwrap_or("")
        )));
    }
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row.map_err(corpus_err)?;
        let line = i + 2;
        let features = row
            .iter()
            .skip(2)
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| corpus_err(format!("line {line}: {e}")))?;
        if features.iter().any(|v| !v.is_finite()) {
            return Err(corpus_err(format!("line {line}: non-finite feature")));
        }
        out.push(LabeledSample {
            subject_id: row[0].trim().to_string(),
            label: ActivityLabel::parse(&row[1]).unwrap_or(ActivityLabel::Others),
            features,
        });
    }
    Ok(out)
}

pub fn write_labeled_csv<W: Write>(writer: W, samples: &[LabeledSample]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let names = motion_feature_names();
    w.write_record(["subject_id", "label"].into_iter().chain(names.iter().map(String::as_str)))
        .map_err(corpus_err)?;
    for s in samples {
        if s.features.len() != names.len() {
            return Err(corpus_err(format!("row for {} has {} features", s.subject_id, s.features.len())));
        }
        let mut rec = vec![s.subject_id.clone(), s.label.as_str().to_string()];
        rec.extend(s.features.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(corpus_err)?;
    }
    w.flush().map_err(corpus_err)
}
