//! Feature vectors and their CSV ingestion.

use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One weighted feature point for one detected object in one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub frame_id: u64,
    pub object_id: u64,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(frame_id: u64, object_id: u64, values: Vec<f64>) -> Self {
        Self { frame_id, object_id, values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Relative importance of the motion, location and appearance groups.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureWeights {
    pub motion: f64,
    pub location: f64,
    pub appearance: f64,
}

impl Default for FeatureWeights {
    fn default() -> Self {
        Self { motion: 1.0, location: 0.4, appearance: 0.9 }
    }
}

impl FeatureWeights {
    pub fn new(motion: f64, location: f64, appearance: f64) -> Result<Self> {
        let w = Self { motion, location, appearance };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("motion", self.motion), ("location", self.location), ("appearance", self.appearance)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("{name} weight must be finite and non-negative, got {v}")));
            }
        }
        Ok(())
    }
}

/// Raw per-object measurements before weighting.
#[derive(Debug, Clone, PartialEq)]
pub struct RawObject {
    pub mse: f64,
    pub center_x: f64,
    pub center_y: f64,
    pub area: f64,
    pub class_probs: Vec<f64>,
}

/// Builds `[w₁·mse, w₂·cx, w₂·cy, w₂·area, w₃·p₁, …, w₃·pₙ]`, length `n + 4`.
pub fn assemble_feature(raw: &RawObject, weights: &FeatureWeights) -> Result<Vec<f64>> {
    weights.validate()?;
    let scalars = [("mse", raw.mse), ("center_x", raw.center_x), ("center_y", raw.center_y), ("area", raw.area)];
    for (name, v) in scalars {
        if !v.is_finite() {
            return Err(Error::Data(format!("non-finite {name}: {v}")));
        }
    }
    if raw.mse < 0.0 {
        return Err(Error::Data(format!("mse must be non-negative, got {}", raw.mse)));
    }
    if raw.area < 0.0 {
        return Err(Error::Data(format!("area must be non-negative, got {}", raw.area)));
    }
    for (i, &p) in raw.class_probs.iter().enumerate() {
        if !p.is_finite() {
            return Err(Error::Data(format!("non-finite class probability p{}: {p}", i + 1)));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Data(format!("class probability p{} = {p} outside [0, 1]", i + 1)));
        }
    }
    let mut out = Vec::with_capacity(raw.class_probs.len() + 4);
    out.push(weights.motion * raw.mse);
    out.push(weights.location * raw.center_x);
    out.push(weights.location * raw.center_y);
    out.push(weights.location * raw.area);
    out.extend(raw.class_probs.iter().map(|p| weights.appearance * p));
    Ok(out)
}

/// Column layout detected from a CSV header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsvLayout {
    /// `frame_id,object_id,f1,...,fm` with pre-weighted features.
    Weighted { m: usize },
    /// `frame_id,object_id,mse,center_x,center_y,area,p1,...,pn`.
    Raw { n_classes: usize },
}

impl CsvLayout {
    pub fn dim(&self) -> usize {
        match *self {
            CsvLayout::Weighted { m } => m,
            CsvLayout::Raw { n_classes } => n_classes + 4,
        }
    }
}

/// One CSV row: either an object or a marker for a frame with no detections.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureRow {
    Object(FeatureVector),
    EmptyFrame(u64),
}

fn detect_layout(header: &csv::StringRecord) -> Result<CsvLayout> {
    let cols: Vec<String> = header.iter().map(|c| c.trim().to_ascii_lowercase()).collect();
    if cols.len() < 3 || cols[0] != "frame_id" || cols[1] != "object_id" {
        return Err(Error::Data(
            "line 1: header must start with frame_id,object_id followed by feature columns".into(),
        ));
    }
    if cols[2] == "mse" {
        let expected = ["mse", "center_x", "center_y", "area"];
        if cols.len() < 6 || cols[2..6] != expected {
            return Err(Error::Data(
                "line 1: raw layout requires mse,center_x,center_y,area after object_id".into(),
            ));
        }
        Ok(CsvLayout::Raw { n_classes: cols.len() - 6 })
    } else {
        Ok(CsvLayout::Weighted { m: cols.len() - 2 })
    }
}

fn parse_field<T: std::str::FromStr>(field: &str, line: u64, column: &str) -> Result<T> {
    field
        .trim()
        .parse::<T>()
        .map_err(|_| Error::Data(format!("line {line}: cannot parse {column} value {field:?}")))
}

/// Reads a feature CSV. Raw-layout rows are weighted through [`assemble_feature`].
///
/// A row whose `object_id` and feature cells are all blank marks an empty frame.
pub fn read_feature_csv<R: Read>(reader: R, weights: &FeatureWeights) -> Result<(CsvLayout, Vec<FeatureRow>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(reader);
    let header = match rdr.headers() {
        Ok(h) if !h.is_empty() && !(h.len() == 1 && h[0].trim().is_empty()) => h.clone(),
        Ok(_) => return Err(Error::Data("empty dataset".into())),
        Err(e) => return Err(Error::Data(format!("line 1: {e}"))),
    };
    let layout = detect_layout(&header)?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::Data(format!("line {line}: {e}"))
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let frame_id: u64 = parse_field(&rec[0], line, "frame_id")?;
        if rec.iter().skip(1).all(|c| c.trim().is_empty()) {
            rows.push(FeatureRow::EmptyFrame(frame_id));
            continue;
        }
        let object_id: u64 = parse_field(&rec[1], line, "object_id")?;
        let mut nums = Vec::with_capacity(rec.len() - 2);
        for (j, cell) in rec.iter().enumerate().skip(2) {
            let v: f64 = parse_field(cell, line, &header[j])?;
            if !v.is_finite() {
                return Err(Error::Data(format!("line {line}: non-finite value in column {}", &header[j])));
            }
            nums.push(v);
        }
        let values = match layout {
            CsvLayout::Weighted { .. } => nums,
            CsvLayout::Raw { .. } => {
                let raw = RawObject {
                    mse: nums[0],
                    center_x: nums[1],
                    center_y: nums[2],
                    area: nums[3],
                    class_probs: nums[4..].to_vec(),
                };
                assemble_feature(&raw, weights).map_err(|e| Error::Data(format!("line {line}: {e}")))?
            }
        };
        rows.push(FeatureRow::Object(FeatureVector::new(frame_id, object_id, values)));
    }
    Ok((layout, rows))
}

/// Reads a training dataset: every row must be an object.
pub fn read_dataset<R: Read>(reader: R, weights: &FeatureWeights) -> Result<Vec<FeatureVector>> {
    let (_, rows) = read_feature_csv(reader, weights)?;
    let out: Vec<FeatureVector> = rows
        .into_iter()
        .filter_map(|r| match r {
            FeatureRow::Object(v) => Some(v),
            FeatureRow::EmptyFrame(_) => None,
        })
        .collect();
    if out.is_empty() {
        return Err(Error::Data("empty dataset".into()));
    }
    Ok(out)
}

/// Writes pre-weighted vectors in the `frame_id,object_id,f1..fm` layout.
pub fn write_feature_csv<W: std::io::Write>(writer: W, vectors: &[FeatureVector]) -> Result<()> {
    let m = vectors.first().map_or(0, FeatureVector::dim);
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["frame_id".to_string(), "object_id".to_string()];
    header.extend((1..=m).map(|i| format!("f{i}")));
    w.write_record(&header).map_err(csv_io)?;
    for v in vectors {
        let mut rec = vec![v.frame_id.to_string(), v.object_id.to_string()];
        rec.extend(v.values.iter().map(|x| x.to_string()));
        w.write_record(&rec).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(mse: f64, cx: f64, cy: f64, area: f64, probs: &[f64]) -> RawObject {
        RawObject { mse, center_x: cx, center_y: cy, area, class_probs: probs.to_vec() }
    }

    #[test]
    fn zero_input_gives_zero_vector() {
        let v = assemble_feature(&raw(0.0, 0.0, 0.0, 0.0, &[0.0, 0.0]), &FeatureWeights::new(1.0, 1.0, 1.0).unwrap())
            .unwrap();
        assert_eq!(v, vec![0.0; 6]);
    }

    #[test]
    fn default_weights_hand_multiplication() {
        let v = assemble_feature(&raw(2.0, 10.0, 20.0, 5.0, &[0.9]), &FeatureWeights::default()).unwrap();
        let want = [2.0, 4.0, 8.0, 2.0, 0.81];
        assert_eq!(v.len(), 5);
        for (a, b) in v.iter().zip(want) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn zero_weights_annihilate() {
        let w = FeatureWeights::new(0.0, 0.0, 0.0).unwrap();
        let v = assemble_feature(&raw(3.0, -4.0, 7.5, 9.0, &[0.1, 0.2, 0.7]), &w).unwrap();
        assert_eq!(v, vec![0.0; 7]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let w = FeatureWeights::default();
        assert!(assemble_feature(&raw(f64::NAN, 0.0, 0.0, 0.0, &[]), &w).is_err());
        assert!(assemble_feature(&raw(0.0, f64::INFINITY, 0.0, 0.0, &[]), &w).is_err());
        assert!(assemble_feature(&raw(0.0, 0.0, 0.0, 0.0, &[1.5]), &w).is_err());
        assert!(FeatureWeights::new(-1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn csv_weighted_and_raw_layouts() {
        let text = "frame_id,object_id,f1,f2\n0,0,1.5,2\n0,1,3,4\n1,,,\n";
        let (layout, rows) = read_feature_csv(text.as_bytes(), &FeatureWeights::default()).unwrap();
        assert_eq!(layout, CsvLayout::Weighted { m: 2 });
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[2], FeatureRow::EmptyFrame(1));

        let text = "frame_id,object_id,mse,center_x,center_y,area,p1\n4,0,2,10,20,5,0.9\n";
        let (layout, rows) = read_feature_csv(text.as_bytes(), &FeatureWeights::default()).unwrap();
        assert_eq!(layout, CsvLayout::Raw { n_classes: 1 });
        match &rows[0] {
            FeatureRow::Object(v) => {
                assert_eq!(v.frame_id, 4);
                assert!((v.values[4] - 0.81).abs() < 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn csv_errors_carry_line_numbers() {
        let text = "frame_id,object_id,f1\n0,0,1\n1,0,abc\n";
        let err = read_feature_csv(text.as_bytes(), &FeatureWeights::default()).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");

        let err = read_dataset("".as_bytes(), &FeatureWeights::default()).unwrap_err();
        assert!(err.to_string().contains("empty dataset"));
        let err = read_dataset("frame_id,object_id,f1\n".as_bytes(), &FeatureWeights::default()).unwrap_err();
        assert!(err.to_string().contains("empty dataset"));
    }

    #[test]
    fn csv_write_read_round_trip() {
        let vs = vec![FeatureVector::new(0, 0, vec![0.1, 1e-300]), FeatureVector::new(3, 2, vec![-5.25, 7.0])];
        let mut buf = Vec::new();
        write_feature_csv(&mut buf, &vs).unwrap();
        let back = read_dataset(buf.as_slice(), &FeatureWeights::default()).unwrap();
        assert_eq!(back, vs);
    }
}
