//! File formats.
//!
//! A model file is JSON with these fields:
//!
//! | field         | content                                                  |
//! |---------------|----------------------------------------------------------|
//! | `format`      | always `"mtensor-model"`                                 |
//! | `version`     | schema version, currently `1`                            |
//! | `maps`        | `{entries: [{axis, basis}], scale, mode}`                |
//! | `samples`     | retained raw samples, one array per row                  |
//! | `dual`        | dual weights `Z`, one array per retained row             |
//! | `regularizer` | `{kind, ...}` as used for the fit                        |
//! | `diagnostics` | fit diagnostics                                          |
//!
//! The operator cores are rebuilt from `samples` and `maps` on load.
//! Reports are the JSON form of [`ExperimentReport`]; trajectories are CSV with
//! header `t,x1,…,xn`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::experiments::ExperimentReport;
use crate::features::{FeatureMapSet, MapSpec};
use crate::regression::{Diagnostics, RegressionModel, Regularizer};
use crate::scalar::Scalar;

pub const MODEL_FORMAT: &str = "mtensor-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub maps: MapSpec,
    pub samples: Vec<Vec<f64>>,
    pub dual: Vec<Vec<f64>>,
    pub regularizer: Regularizer,
    pub diagnostics: Diagnostics,
}

fn rows_of<T: Scalar>(a: &Array2<T>) -> Vec<Vec<f64>> {
    a.rows()
        .into_iter()
        .map(|r| r.iter().map(|v| v.as_f64()).collect())
        .collect()
}

fn matrix_of<T: Scalar>(rows: &[Vec<f64>], what: &str) -> Result<Array2<T>> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::dim(format!("{what} rows have unequal lengths")));
    }
    let flat: Vec<T> = rows.iter().flatten().map(|&v| T::of(v)).collect();
    Array2::from_shape_vec((rows.len(), cols), flat).map_err(|e| Error::dim(e.to_string()))
}

impl ModelFile {
    pub fn from_model<T: Scalar>(model: &RegressionModel<T>) -> Result<Self> {
        Ok(Self {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            maps: model.maps().to_spec()?,
            samples: rows_of(model.samples()),
            dual: rows_of(model.dual()),
            regularizer: *model.regularizer(),
            diagnostics: model.diagnostics().clone(),
        })
    }

    pub fn into_model<T: Scalar>(self) -> Result<RegressionModel<T>> {
        if self.format != MODEL_FORMAT {
            return Err(Error::arg(format!(
                "not a model file (format '{}')",
                self.format
            )));
        }
        if self.version != MODEL_VERSION {
            return Err(Error::arg(format!(
                "unsupported model version {}",
                self.version
            )));
        }
        RegressionModel::from_parts(
            FeatureMapSet::from_spec(&self.maps)?,
            matrix_of(&self.samples, "sample")?,
            matrix_of(&self.dual, "dual")?,
            self.regularizer,
            self.diagnostics,
        )
    }
}

pub fn save_model<T: Scalar>(model: &RegressionModel<T>, path: &Path) -> Result<()> {
    write_json(path, &ModelFile::from_model(model)?)
}

pub fn load_model<T: Scalar>(path: &Path) -> Result<RegressionModel<T>> {
    let file: ModelFile = serde_json::from_reader(File::open(path)?)?;
    file.into_model()
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn write_report(path: &Path, report: &ExperimentReport) -> Result<()> {
    write_json(path, report)
}

pub fn read_report(path: &Path) -> Result<ExperimentReport> {
    Ok(serde_json::from_reader(File::open(path)?)?)
}

pub fn write_trajectory_csv(path: &Path, traj: &Trajectory, stride: usize) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    traj.write_csv(&mut w, stride)?;
    w.flush()?;
    Ok(())
}
