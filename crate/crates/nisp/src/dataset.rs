//! CSV datasets: a header `x0,...,x{d-1}` with an optional trailing `label`
//! column, one sample per row. Spatial inputs are stored flattened
//! (channel-major) and declare their shape in a sidecar
//! `<stem>.manifest.json` of the form `{"shape": {"channels": c, "size": s}}`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use nisp_core::{Sample, Shape};

use crate::io::read_text;
use crate::model_format::ShapeDoc;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub dim: usize,
    /// Shape from the sidecar manifest, when there is one.
    pub shape: Option<Shape>,
}

impl Dataset {
    pub fn is_labeled(&self) -> bool {
        self.samples.iter().all(|s| s.label.is_some())
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    shape: ShapeDoc,
}

pub fn manifest_path(data: &Path) -> PathBuf {
    let stem = data.file_stem().unwrap_or_default().to_string_lossy();
    data.with_file_name(format!("{}.manifest.json", stem))
}

fn header(dim: usize, labeled: bool) -> Vec<String> {
    let mut h: Vec<String> = (0..dim).map(|i| format!("x{}", i)).collect();
    if labeled {
        h.push("label".into());
    }
    h
}

/// Parses CSV text. `path` only labels error messages.
pub fn parse_dataset(text: &str, path: &Path) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let head = rdr.headers().map_err(|e| Error::parse(path, e))?.clone();
    let labeled = head.iter().next_back() == Some("label");
    let dim = head.len() - labeled as usize;
    if dim == 0 {
        return Err(Error::parse(path, "no feature columns"));
    }
    if head.iter().ne(header(dim, labeled).iter().map(String::as_str)) {
        return Err(Error::parse(
            path,
            format!("header must be x0..x{}{}", dim - 1, if labeled { ",label" } else { "" }),
        ));
    }
    let mut samples = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(path, e))?;
        let line = row + 2;
        let mut input = Vec::with_capacity(dim);
        for field in rec.iter().take(dim) {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::parse(path, format!("line {}: bad number {:?}", line, field)))?;
            if !v.is_finite() {
                return Err(Error::parse(path, format!("line {}: non-finite value", line)));
            }
            input.push(v);
        }
        let label = if labeled {
            let field = rec.get(dim).unwrap_or_default().trim();
            Some(
                field
                    .parse::<usize>()
                    .map_err(|_| Error::parse(path, format!("line {}: bad label {:?}", line, field)))?,
            )
        } else {
            None
        };
        samples.push(Sample::new(input, label));
    }
    Ok(Dataset {
        samples,
        dim,
        shape: None,
    })
}

/// Loads a dataset and its manifest, if present.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let mut data = parse_dataset(&read_text(path)?, path)?;
    let mpath = manifest_path(path);
    if mpath.exists() {
        let m: Manifest = serde_json::from_str(&read_text(&mpath)?).map_err(|e| Error::parse(&mpath, e))?;
        let shape = Shape::from(m.shape);
        if shape.len() != data.dim {
            return Err(Error::parse(
                &mpath,
                format!("shape {} has {} values but rows have {}", shape, shape.len(), data.dim),
            ));
        }
        data.shape = Some(shape);
    }
    Ok(data)
}

/// CSV text of a dataset; the label column is written when every sample
/// has a label.
pub fn dataset_csv(samples: &[Sample]) -> Result<String> {
    let dim = samples.first().map_or(0, |s| s.input.len());
    if samples.iter().any(|s| s.input.len() != dim) {
        return Err(Error::Format("samples differ in length".into()));
    }
    let labeled = !samples.is_empty() && samples.iter().all(|s| s.label.is_some());
    let mut w = csv::Writer::from_writer(Vec::new());
    let to_format = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(header(dim, labeled)).map_err(to_format)?;
    for s in samples {
        let mut rec: Vec<String> = s.input.iter().map(|v| v.to_string()).collect();
        if labeled {
            rec.push(s.label.unwrap_or_default().to_string());
        }
        w.write_record(&rec).map_err(to_format)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is ASCII"))
}

pub fn manifest_json(shape: Shape) -> String {
    let mut s = serde_json::to_string(&Manifest { shape: shape.into() }).expect("manifest serializes");
    s.push('\n');
    s
}

/// Checks that every sample fits the model input and, when both are known,
/// that the declared shape matches.
pub fn check_input(data: &Dataset, input: Shape, path: &Path) -> Result<()> {
    if data.dim != input.len() {
        return Err(Error::parse(
            path,
            format!("rows have {} values, model input {} needs {}", data.dim, input, input.len()),
        ));
    }
    if let Some(shape) = data.shape {
        if shape != input {
            return Err(Error::parse(
                path,
                format!("manifest shape {} does not match model input {}", shape, input),
            ));
        }
    }
    Ok(())
}
