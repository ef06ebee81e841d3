//! JSON files for parameters, datasets and verdict reports.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sosp_core::numerics::{Matrix, Vector};
use sosp_core::orchestrator::Diagnostics;
use sosp_core::{Activation, Dataset, NetworkParams, Perturbation, Stage, Verdict, VerdictKind};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: String, source: serde_json::Error },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Core(#[from] sosp_core::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct ParamsFile {
    pub d_x: usize,
    pub d_h: usize,
    pub d_y: usize,
    pub s_plus: f64,
    pub s_minus: f64,
    pub W1: Vec<Vec<f64>>,
    pub b1: Vec<f64>,
    pub W2: Vec<Vec<f64>>,
    pub b2: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetFile {
    pub inputs: Vec<Vec<f64>>,
    pub labels: Vec<Vec<f64>>,
}

fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix(name: &str, rows: &[Vec<f64>], nrows: usize, ncols: usize) -> Result<Matrix, IoError> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(IoError::Invalid(format!("{name} must be {nrows}x{ncols}")));
    }
    Ok(Matrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn vector(name: &str, v: &[f64], len: usize) -> Result<Vector, IoError> {
    if v.len() != len {
        return Err(IoError::Invalid(format!("{name} must have length {len}")));
    }
    Ok(Vector::from_column_slice(v))
}

impl ParamsFile {
    pub fn from_params(p: &NetworkParams) -> Self {
        let dims = p.dims();
        Self {
            d_x: dims.input,
            d_h: dims.hidden,
            d_y: dims.output,
            s_plus: p.activation.s_plus(),
            s_minus: p.activation.s_minus(),
            W1: rows(&p.w1),
            b1: p.b1.iter().copied().collect(),
            W2: rows(&p.w2),
            b2: p.b2.iter().copied().collect(),
        }
    }

    pub fn to_params(&self) -> Result<NetworkParams, IoError> {
        let activation = Activation::new(self.s_plus, self.s_minus)?;
        Ok(NetworkParams::new(
            matrix("W1", &self.W1, self.d_h, self.d_x)?,
            vector("b1", &self.b1, self.d_h)?,
            matrix("W2", &self.W2, self.d_y, self.d_h)?,
            vector("b2", &self.b2, self.d_y)?,
            activation,
        )?)
    }
}

impl DatasetFile {
    pub fn from_dataset(d: &Dataset) -> Self {
        let list = |vs: &[Vector]| vs.iter().map(|v| v.iter().copied().collect()).collect();
        Self {
            inputs: list(d.inputs()),
            labels: list(d.labels()),
        }
    }

    pub fn to_dataset(&self) -> Result<Dataset, IoError> {
        let list = |vs: &[Vec<f64>]| vs.iter().map(|v| Vector::from_column_slice(v)).collect();
        Ok(Dataset::new(list(&self.inputs), list(&self.labels))?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub schema_version: u32,
    /// `local_minimum`, `sosp` or `descent`.
    pub kind: String,
    pub stage: Stage,
    pub step: Option<f64>,
    pub direction: Option<Perturbation>,
    pub flat_witness: Option<Perturbation>,
    pub diagnostics: Diagnostics,
}

impl ReportFile {
    pub fn from_verdict(v: &Verdict) -> Self {
        let kind = match v.kind {
            VerdictKind::LocalMinimum => "local_minimum",
            VerdictKind::Sosp => "sosp",
            VerdictKind::DescentDirection => "descent",
        };
        Self {
            schema_version: SCHEMA_VERSION,
            kind: kind.into(),
            stage: v.stage.clone(),
            step: v.step,
            direction: v.direction.clone(),
            flat_witness: v.flat_witness.clone(),
            diagnostics: v.diagnostics.clone(),
        }
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let name = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| IoError::File {
        path: name.clone(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| IoError::Json { path: name, source })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let name = path.display().to_string();
    let text = serde_json::to_string_pretty(value).map_err(|source| IoError::Json {
        path: name.clone(),
        source,
    })?;
    fs::write(path, text + "\n").map_err(|source| IoError::File { path: name, source })
}

pub fn read_params(path: &Path) -> Result<NetworkParams, IoError> {
    read_json::<ParamsFile>(path)?.to_params()
}

pub fn read_dataset(path: &Path) -> Result<Dataset, IoError> {
    read_json::<DatasetFile>(path)?.to_dataset()
}

pub fn write_params(path: &Path, p: &NetworkParams) -> Result<(), IoError> {
    write_json(path, &ParamsFile::from_params(p))
}

pub fn write_dataset(path: &Path, d: &Dataset) -> Result<(), IoError> {
    write_json(path, &DatasetFile::from_dataset(d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use sosp_core::Dims;

    #[test]
    fn params_round_trip_exactly() {
        let mut p = NetworkParams::zeros(Dims::new(2, 3, 1), Activation::leaky(0.1).unwrap());
        p.w1[(1, 0)] = 0.1 + 0.2;
        p.b2[0] = -1.0 / 3.0;
        let text = serde_json::to_string(&ParamsFile::from_params(&p)).unwrap();
        let back: ParamsFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back.to_params().unwrap(), p);
    }

    #[test]
    fn shape_errors() {
        let mut f = ParamsFile::from_params(&NetworkParams::zeros(Dims::new(2, 1, 1), Activation::relu()));
        f.b1.push(0.0);
        assert!(matches!(f.to_params(), Err(IoError::Invalid(_))));
    }
}
