//! Cross-display calibration experiment: map one source panel onto each other
//! panel using a fit color set, then score both weightings on held-out colors.

use std::collections::BTreeSet;

use crate::calibration::{evaluate, fit_matrix, CalibrationMatrix, Evaluation, MeasurementPair, Weighting};
use crate::colorspace::Tristimulus;
use crate::error::{Error, Result};
use crate::noise_model::{sample_mean, NoiseModel};
use crate::record::MeasurementRecord;

/// Mean of all repeats of `color_id` at `brightness` on `panel_id`.
pub fn panel_color_mean(
    records: &[MeasurementRecord],
    panel_id: &str,
    color_id: &str,
    brightness: f64,
) -> Result<Tristimulus> {
    let samples: Vec<Tristimulus> = records
        .iter()
        .filter(|r| r.panel_id == panel_id && r.color_id == color_id && r.brightness == brightness)
        .map(|r| r.xyz)
        .collect();
    if samples.is_empty() {
        return Err(Error::UnknownColor(format!("{color_id} on panel {panel_id} at brightness {brightness}")));
    }
    sample_mean(&samples)
}

pub fn measurement_pairs(
    records: &[MeasurementRecord],
    source_panel: &str,
    reference_panel: &str,
    colors: &[String],
    brightness: f64,
) -> Result<Vec<MeasurementPair>> {
    colors
        .iter()
        .map(|c| {
            MeasurementPair::new(
                c.clone(),
                panel_color_mean(records, source_panel, c, brightness)?,
                panel_color_mean(records, reference_panel, c, brightness)?,
            )
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DevicePairResult {
    pub reference_panel: String,
    pub proposed_matrix: CalibrationMatrix,
    pub uniform_matrix: CalibrationMatrix,
    pub proposed: Evaluation,
    pub uniform: Evaluation,
}

impl DevicePairResult {
    pub fn proposed_wins(&self) -> bool {
        self.proposed.mean < self.uniform.mean
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightingComparison {
    pub source_panel: String,
    pub fit_colors: Vec<String>,
    pub holdout_colors: Vec<String>,
    pub brightness: f64,
    pub pairs: Vec<DevicePairResult>,
}

impl WeightingComparison {
    pub fn wins(&self) -> usize {
        self.pairs.iter().filter(|p| p.proposed_wins()).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolOptions {
    /// Defaults to the lexicographically first panel.
    pub source_panel: Option<String>,
    pub fit_colors: Vec<String>,
    pub holdout_colors: Vec<String>,
    pub brightness: f64,
}

/// Calibrates the source panel against every other panel with both weightings.
pub fn compare_weightings(
    records: &[MeasurementRecord],
    options: &ProtocolOptions,
    model: &NoiseModel,
) -> Result<WeightingComparison> {
    let panels: BTreeSet<&str> = records.iter().map(|r| r.panel_id.as_str()).collect();
    let source = match &options.source_panel {
        Some(p) if panels.contains(p.as_str()) => p.clone(),
        Some(p) => return Err(Error::Validation(format!("source panel `{p}` not found"))),
        None => panels
            .first()
            .map(|p| p.to_string())
            .ok_or(Error::Empty("calibration protocol needs measurements"))?,
    };
    if panels.len() < 2 {
        return Err(Error::Validation("calibration protocol needs at least two panels".into()));
    }
    let pairs = panels
        .iter()
        .filter(|p| **p != source)
        .map(|reference| {
            let fit = measurement_pairs(records, &source, reference, &options.fit_colors, options.brightness)?;
            let holdout = measurement_pairs(records, &source, reference, &options.holdout_colors, options.brightness)?;
            let proposed_matrix = fit_matrix(&fit, model, Weighting::Proposed)?;
            let uniform_matrix = fit_matrix(&fit, model, Weighting::Uniform)?;
            Ok(DevicePairResult {
                reference_panel: reference.to_string(),
                proposed: evaluate(&proposed_matrix, &holdout)?,
                uniform: evaluate(&uniform_matrix, &holdout)?,
                proposed_matrix,
                uniform_matrix,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(WeightingComparison {
        source_panel: source,
        fit_colors: options.fit_colors.clone(),
        holdout_colors: options.holdout_colors.clone(),
        brightness: options.brightness,
        pairs,
    })
}
