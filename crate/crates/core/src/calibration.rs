//! Linear cross-display calibration.
//!
//! Finds the 3×3 matrix `M` with `reference ≈ M · source` by weighted linear
//! least squares. Under the proposed weighting each pair contributes with
//! weight `(2 P̂)⁻¹`, where `P̂` is the noise covariance at the reference
//! measurement. The uniform weighting uses the identity.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, Matrix3, SMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::colorspace::Tristimulus;
use crate::error::{Error, Result};
use crate::noise_model::{whitening, NoiseModel};

/// Fits whose normal matrix is worse conditioned than this are refused.
pub const MAX_CONDITION: f64 = 1e12;

/// Relative singular-value threshold for the rank test on source colors.
const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementPair {
    pub color_id: String,
    /// Measurement from the display being calibrated.
    pub source: Tristimulus,
    /// Measurement of the same color from the target display.
    pub reference: Tristimulus,
}

impl MeasurementPair {
    pub fn new(color_id: impl Into<String>, source: Tristimulus, reference: Tristimulus) -> Result<Self> {
        source.require_positive_sum()?;
        reference.require_positive_sum()?;
        Ok(MeasurementPair {
            color_id: color_id.into(),
            source,
            reference,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// Inverse noise-model covariance at the reference measurement.
    Proposed,
    /// Identity weights, i.e. ordinary least squares.
    Uniform,
}

impl Weighting {
    pub fn label(self) -> &'static str {
        match self {
            Weighting::Proposed => "proposed",
            Weighting::Uniform => "uniform",
        }
    }
}

impl fmt::Display for Weighting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Weighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "proposed" => Ok(Weighting::Proposed),
            "uniform" => Ok(Weighting::Uniform),
            other => Err(Error::Validation(format!("unknown weighting `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationMatrix {
    pub matrix: Matrix3<f64>,
    pub weighting: Weighting,
    pub fit_pairs: usize,
    /// Condition number of the weighted normal matrix HᵀWH.
    pub condition_number: f64,
}

impl CalibrationMatrix {
    pub fn identity() -> Self {
        CalibrationMatrix {
            matrix: Matrix3::identity(),
            weighting: Weighting::Uniform,
            fit_pairs: 0,
            condition_number: 1.0,
        }
    }

    /// `M · c`. Components may come out slightly negative.
    pub fn apply(&self, c: &Tristimulus) -> Vector3<f64> {
        self.matrix * c.to_vector()
    }

    /// Entries in row-major order, m11, m12, ..., m33.
    pub fn row_major(&self) -> [f64; 9] {
        let mut out = [0.0; 9];
        for r in 0..3 {
            for c in 0..3 {
                out[3 * r + c] = self.matrix[(r, c)];
            }
        }
        out
    }
}

/// Rows of the stacked system for one pair: `reference = H · vec(M)` with
/// `vec(M)` row-major.
pub fn build_design_row(pair: &MeasurementPair) -> (SMatrix<f64, 3, 9>, Vector3<f64>) {
    let c = pair.source.to_array();
    let mut h = SMatrix::<f64, 3, 9>::zeros();
    for block in 0..3 {
        for (j, v) in c.iter().enumerate() {
            h[(block, 3 * block + j)] = *v;
        }
    }
    (h, pair.reference.to_vector())
}

fn source_rank(pairs: &[MeasurementPair]) -> usize {
    let sources = DMatrix::from_fn(3, pairs.len(), |r, c| pairs[c].source.to_array()[r]);
    let sv = sources.singular_values();
    let max = sv.max();
    sv.iter().filter(|s| **s > max * RANK_TOLERANCE).count()
}

/// Square root of the per-pair weight, so that `Sᵀ S = W_i`.
fn weight_root(model: &NoiseModel, weighting: Weighting, pair: &MeasurementPair) -> Result<Matrix3<f64>> {
    match weighting {
        Weighting::Uniform => Ok(Matrix3::identity()),
        Weighting::Proposed => Ok(whitening(model, &pair.reference)? * std::f64::consts::FRAC_1_SQRT_2),
    }
}

/// Solves the weighted normal equations `(HᵀWH) m = HᵀW ĉ`.
///
/// The system is whitened pair by pair and solved through an SVD of the
/// stacked 3n×9 design, which avoids squaring the condition number.
pub fn fit_matrix(pairs: &[MeasurementPair], model: &NoiseModel, weighting: Weighting) -> Result<CalibrationMatrix> {
    if pairs.len() < 3 {
        return Err(Error::TooFewSamples {
            needed: 3,
            got: pairs.len(),
        });
    }
    let rank = source_rank(pairs);
    if rank < 3 {
        return Err(Error::RankDeficient { rank });
    }

    let rows = 3 * pairs.len();
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    let mut b = DVector::<f64>::zeros(rows);
    for (i, pair) in pairs.iter().enumerate() {
        let (h, target) = build_design_row(pair);
        let s = weight_root(model, weighting, pair)?;
        a.view_mut((3 * i, 0), (3, 9)).copy_from(&(s * h));
        b.rows_mut(3 * i, 3).copy_from(&(s * target));
    }

    let svd = a.svd(true, true);
    let max = svd.singular_values.max();
    let min = svd.singular_values.min();
    let condition_number = if min > 0.0 { (max / min).powi(2) } else { f64::INFINITY };
    if !(condition_number <= MAX_CONDITION) {
        return Err(Error::IllConditioned {
            condition: condition_number,
            limit: MAX_CONDITION,
        });
    }
    let matrix = if pairs.len() == 3 {
        // Square system: every weighting interpolates the three pairs exactly.
        let source = Matrix3::from_columns(&[
            pairs[0].source.to_vector(),
            pairs[1].source.to_vector(),
            pairs[2].source.to_vector(),
        ]);
        let reference = Matrix3::from_columns(&[
            pairs[0].reference.to_vector(),
            pairs[1].reference.to_vector(),
            pairs[2].reference.to_vector(),
        ]);
        let inverse = source
            .try_inverse()
            .ok_or(Error::Degenerate("source colors are not invertible"))?;
        reference * inverse
    } else {
        let m = svd
            .solve(&b, 0.0)
            .map_err(|_| Error::Degenerate("weighted normal equations could not be solved"))?;
        Matrix3::from_row_slice(m.as_slice())
    };
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate("calibration produced non-finite entries"));
    }
    Ok(CalibrationMatrix {
        matrix,
        weighting,
        fit_pairs: pairs.len(),
        condition_number,
    })
}

/// `Σ (ĉ − M c)ᵀ (2 P̂)⁻¹ (ĉ − M c)` over the pairs.
pub fn weighted_objective(matrix: &Matrix3<f64>, pairs: &[MeasurementPair], model: &NoiseModel) -> Result<f64> {
    pairs.iter().try_fold(0.0, |acc, pair| {
        let r = pair.reference.to_vector() - matrix * pair.source.to_vector();
        let s = weight_root(model, Weighting::Proposed, pair)?;
        Ok(acc + (s * r).norm_squared())
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairError {
    pub color_id: String,
    /// Σ |ĉ − M c| over X, Y, Z.
    pub abs_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub per_pair: Vec<PairError>,
    pub mean: f64,
}

pub fn evaluate(calib: &CalibrationMatrix, holdout: &[MeasurementPair]) -> Result<Evaluation> {
    if holdout.is_empty() {
        return Err(Error::Empty("evaluation needs at least one holdout pair"));
    }
    let per_pair: Vec<PairError> = holdout
        .iter()
        .map(|pair| {
            let r = pair.reference.to_vector() - calib.apply(&pair.source);
            PairError {
                color_id: pair.color_id.clone(),
                abs_error: r.abs().sum(),
            }
        })
        .collect();
    let mean = per_pair.iter().map(|p| p.abs_error).sum::<f64>() / per_pair.len() as f64;
    Ok(Evaluation { per_pair, mean })
}
