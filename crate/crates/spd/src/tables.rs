//! CSV tables (manifests, splits, scores, curves) and JSON metric reports.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use spd_core::metrics::{Curve, CurveKind, MetricReport};
use spd_core::protocol::{Aggregate, Label, ManifestRow, SplitRole};

use crate::error::{invalid, CliError, Result};
use crate::pnm::write_bytes;

fn writer(buf: &mut Vec<u8>) -> csv::Writer<&mut Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(buf)
}

fn finish(w: csv::Writer<&mut Vec<u8>>) -> Result<()> {
    w.into_inner()
        .map_err(|e| CliError::Runtime(format!("CSV flush failed: {e}")))?;
    Ok(())
}

fn opt(s: &Option<String>) -> &str {
    s.as_deref().unwrap_or("")
}

/// `id,path,object,label,mask_path,split,run` with a header line and LF
/// line endings; absent values are empty fields.
pub fn encode_rows(rows: &[ManifestRow]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    let mut w = writer(&mut buf);
    w.write_record(ManifestRow::HEADER)?;
    for r in rows {
        let run = r.run.map(|v| v.to_string()).unwrap_or_default();
        w.write_record([
            r.id.as_str(),
            r.path.as_str(),
            r.object.as_str(),
            r.label.as_str(),
            opt(&r.mask_path),
            r.split.map(SplitRole::as_str).unwrap_or(""),
            run.as_str(),
        ])?;
    }
    finish(w)?;
    Ok(buf)
}

pub fn decode_rows(bytes: &[u8]) -> Result<Vec<ManifestRow>> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let header = rd.headers()?.clone();
    if header.iter().ne(ManifestRow::HEADER) {
        return Err(invalid!(
            "expected header '{}', found '{}'",
            ManifestRow::HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        ));
    }
    let mut rows = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let field = |k: usize| rec.get(k).unwrap_or("");
        let non_empty = |k: usize| Some(field(k).to_string()).filter(|s| !s.is_empty());
        let label = Label::parse(field(3)).map_err(|e| invalid!("line {line}: {e}"))?;
        let split = match field(5) {
            "" => None,
            s => Some(SplitRole::parse(s).map_err(|e| invalid!("line {line}: {e}"))?),
        };
        let run = match field(6) {
            "" => None,
            s => Some(s.parse().map_err(|_| invalid!("line {line}: run '{s}' is not a number"))?),
        };
        rows.push(ManifestRow {
            id: field(0).to_string(),
            path: field(1).to_string(),
            object: field(2).to_string(),
            label,
            mask_path: non_empty(4),
            split,
            run,
        });
    }
    Ok(rows)
}

pub fn write_rows(path: &Path, rows: &[ManifestRow]) -> Result<()> {
    write_bytes(path, &encode_rows(rows)?)
}

pub fn read_rows(path: &Path) -> Result<Vec<ManifestRow>> {
    let bytes = fs::read(path).map_err(CliError::io(path))?;
    decode_rows(&bytes).map_err(|e| e.in_file(path))
}

/// One scored image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub id: String,
    pub label: String,
    pub score: f64,
}

pub fn write_scores(path: &Path, rows: &[ScoreRow]) -> Result<()> {
    let mut buf = Vec::new();
    let mut w = writer(&mut buf);
    for r in rows {
        w.serialize(r)?;
    }
    finish(w)?;
    write_bytes(path, &buf)
}

pub fn read_scores(path: &Path) -> Result<Vec<ScoreRow>> {
    let bytes = fs::read(path).map_err(CliError::io(path))?;
    let mut rd = csv::Reader::from_reader(&bytes[..]);
    let rows: std::result::Result<Vec<ScoreRow>, _> = rd.deserialize().collect();
    let rows = rows.map_err(|e| CliError::from(e).in_file(path))?;
    for r in &rows {
        Label::parse(&r.label).map_err(|e| CliError::from(e).in_file(path))?;
    }
    Ok(rows)
}

/// JSON form of a [`MetricReport`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsJson {
    pub auroc: f64,
    pub aupr: f64,
    pub aupr_trapezoid: f64,
    pub max_f1: f64,
    pub threshold: f64,
    pub n_pos: u64,
    pub n_neg: u64,
}

impl From<&MetricReport> for MetricsJson {
    fn from(r: &MetricReport) -> Self {
        Self {
            auroc: r.auroc,
            aupr: r.aupr,
            aupr_trapezoid: r.aupr_trapezoid,
            max_f1: r.max_f1,
            threshold: r.threshold,
            n_pos: r.n_pos,
            n_neg: r.n_neg,
        }
    }
}

pub fn metrics_json(r: &MetricReport) -> Result<String> {
    let mut s = serde_json::to_string_pretty(&MetricsJson::from(r))?;
    s.push('\n');
    Ok(s)
}

pub fn write_metrics(path: &Path, r: &MetricReport) -> Result<()> {
    write_bytes(path, metrics_json(r)?.as_bytes())
}

#[derive(Serialize)]
struct AggregateJson<'a> {
    protocol: &'a str,
    runs: usize,
    mean: BTreeMap<&'a str, f64>,
    std: BTreeMap<&'a str, f64>,
    per_run: Vec<MetricsJson>,
}

pub fn write_aggregate(
    path: &Path,
    protocol: &str,
    agg: &BTreeMap<String, Aggregate>,
    per_run: &[MetricReport],
) -> Result<()> {
    let out = AggregateJson {
        protocol,
        runs: per_run.len(),
        mean: agg.iter().map(|(k, a)| (k.as_str(), a.mean)).collect(),
        std: agg.iter().map(|(k, a)| (k.as_str(), a.std)).collect(),
        per_run: per_run.iter().map(MetricsJson::from).collect(),
    };
    let mut s = serde_json::to_string_pretty(&out)?;
    s.push('\n');
    write_bytes(path, s.as_bytes())
}

fn fmt_threshold(t: f64) -> String {
    if t.is_infinite() {
        if t > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        t.to_string()
    }
}

/// Curve points as CSV: `fpr,tpr,threshold` or `recall,precision,threshold`.
pub fn encode_curve(c: &Curve) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    let mut w = writer(&mut buf);
    w.write_record(match c.kind {
        CurveKind::Roc => ["fpr", "tpr", "threshold"],
        CurveKind::Pr => ["recall", "precision", "threshold"],
    })?;
    for &(x, y, t) in &c.points {
        w.write_record([x.to_string(), y.to_string(), fmt_threshold(t)])?;
    }
    finish(w)?;
    Ok(buf)
}

pub fn write_curve(path: &Path, c: &Curve) -> Result<()> {
    write_bytes(path, &encode_curve(c)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_round_trip_with_empty_fields() {
        let rows = vec![ManifestRow {
            id: "a".into(),
            path: "o/normal/a.ppm".into(),
            object: "o".into(),
            label: Label::Normal,
            mask_path: None,
            split: Some(SplitRole::Train),
            run: Some(3),
        }];
        let bytes = encode_rows(&rows).unwrap();
        assert_eq!(
            String::from_utf8(bytes.clone()).unwrap(),
            "id,path,object,label,mask_path,split,run\na,o/normal/a.ppm,o,normal,,train,3\n"
        );
        assert_eq!(decode_rows(&bytes).unwrap(), rows);
    }

    #[test]
    fn header_is_mandatory() {
        assert!(decode_rows(b"a,o/normal/a.ppm,o,normal,,,\n").is_err());
        assert!(decode_rows(b"id,path,object,label,mask_path,split\n").is_err());
    }
}
