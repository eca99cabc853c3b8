use std::path::Path;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use super::{read_to_string, write_atomic};
use crate::calibration::{CalibrationMatrix, Weighting};
use crate::error::{Error, Result};
use crate::noise_model::{FitMetadata, NoiseModel, Provenance};

pub const FORMAT_VERSION: u32 = 1;

const MODEL_KIND: &str = "noise_model";
const MATRIX_KIND: &str = "calibration_matrix";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDocument {
    format_version: u32,
    kind: String,
    a: f64,
    ratio: f64,
    provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fit: Option<FitMetadata>,
}

/// A calibration matrix plus where it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixDocument {
    pub format_version: u32,
    pub kind: String,
    pub weighting: Weighting,
    /// Row-major m11, m12, ..., m33.
    pub matrix: [f64; 9],
    pub fit_pairs: usize,
    pub condition_number: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_panel: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_panel: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fit_colors: Vec<String>,
}

impl MatrixDocument {
    pub fn new(calib: &CalibrationMatrix) -> Self {
        MatrixDocument {
            format_version: FORMAT_VERSION,
            kind: MATRIX_KIND.into(),
            weighting: calib.weighting,
            matrix: calib.row_major(),
            fit_pairs: calib.fit_pairs,
            condition_number: calib.condition_number,
            source_panel: None,
            reference_panel: None,
            fit_colors: Vec::new(),
        }
    }

    pub fn calibration(&self) -> CalibrationMatrix {
        CalibrationMatrix {
            matrix: Matrix3::from_row_slice(&self.matrix),
            weighting: self.weighting,
            fit_pairs: self.fit_pairs,
            condition_number: self.condition_number,
        }
    }
}

fn check_header(path: &Path, version: u32, kind: &str, expected: &str) -> Result<()> {
    if version != FORMAT_VERSION {
        return Err(Error::Validation(format!(
            "{}: unsupported format_version {version} (expected {FORMAT_VERSION})",
            path.display()
        )));
    }
    if kind != expected {
        return Err(Error::Validation(format!(
            "{}: document kind is `{kind}`, expected `{expected}`",
            path.display()
        )));
    }
    Ok(())
}

fn parse_toml<T: for<'de> Deserialize<'de>>(path: &Path, text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| {
        let line = e
            .span()
            .map(|s| text[..s.start.min(text.len())].lines().count().max(1) as u64)
            .unwrap_or(0);
        Error::Parse {
            path: path.to_owned(),
            line,
            column: "-".into(),
            reason: e.message().to_owned(),
        }
    })
}

pub fn model_to_string(model: &NoiseModel) -> String {
    let doc = ModelDocument {
        format_version: FORMAT_VERSION,
        kind: MODEL_KIND.into(),
        a: model.a(),
        ratio: model.ratio(),
        provenance: model.provenance,
        fit: model.fit.clone(),
    };
    toml::to_string(&doc).expect("model document serializes")
}

pub fn model_from_str(path: &Path, text: &str) -> Result<NoiseModel> {
    let doc: ModelDocument = parse_toml(path, text)?;
    check_header(path, doc.format_version, &doc.kind, MODEL_KIND)?;
    let mut model = NoiseModel::new(doc.a, doc.ratio, doc.provenance)?;
    model.fit = doc.fit;
    Ok(model)
}

pub fn write_model(path: &Path, model: &NoiseModel) -> Result<()> {
    write_atomic(path, model_to_string(model).as_bytes())
}

pub fn read_model(path: &Path) -> Result<NoiseModel> {
    model_from_str(path, &read_to_string(path)?)
}

pub fn write_matrix(path: &Path, doc: &MatrixDocument) -> Result<()> {
    let text = toml::to_string(doc).expect("matrix document serializes");
    write_atomic(path, text.as_bytes())
}

pub fn read_matrix(path: &Path) -> Result<MatrixDocument> {
    let text = read_to_string(path)?;
    let doc: MatrixDocument = parse_toml(path, &text)?;
    check_header(path, doc.format_version, &doc.kind, MATRIX_KIND)?;
    if doc.matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation(format!("{}: matrix entries must be finite", path.display())));
    }
    Ok(doc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise_model::{fit_noise_model, DirectionalStd};

    #[test]
    fn model_round_trip() {
        let stds = vec![DirectionalStd {
            panel_id: "P1".into(),
            color_id: "white".into(),
            brightness: 1.0,
            sum_xyz: 300.0,
            sample_count: 12,
            sigma: [0.1, 0.2, 0.3, 0.75, 0.16, 0.14],
        }];
        let model = fit_noise_model(&stds).unwrap();
        let text = model_to_string(&model);
        assert!(text.contains("format_version = 1"));
        assert!(text.contains("provenance = \"fitted\""));
        let back = model_from_str(Path::new("m.toml"), &text).unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn model_version_and_kind_checked() {
        let text = model_to_string(&NoiseModel::within_panel());
        let bumped = text.replace("format_version = 1", "format_version = 2");
        assert!(matches!(model_from_str(Path::new("m"), &bumped), Err(Error::Validation(_))));
        let wrong = text.replace("noise_model", "calibration_matrix");
        assert!(model_from_str(Path::new("m"), &wrong).is_err());
        assert!(matches!(
            model_from_str(Path::new("m"), "format_version = \"x\""),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn matrix_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.toml");
        let calib = CalibrationMatrix {
            matrix: Matrix3::new(1.0, 0.1, -0.2, 0.0, 0.9, 1e-17, 0.3, 0.0, 1.1),
            weighting: Weighting::Proposed,
            fit_pairs: 4,
            condition_number: 1234.5,
        };
        let mut doc = MatrixDocument::new(&calib);
        doc.fit_colors = vec!["red".into(), "white".into()];
        write_matrix(&path, &doc).unwrap();
        let back = read_matrix(&path).unwrap();
        assert_eq!(back, doc);
        assert_eq!(back.calibration(), calib);
    }
}
