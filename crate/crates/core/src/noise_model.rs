//! Anisotropic noise model for tristimulus measurements.
//!
//! Noise is decomposed in a frame anchored at the measured color: `v1` points
//! along the XYZ vector itself and `v2`, `v3` complete a right-handed
//! orthonormal frame. The standard deviation along each direction grows
//! linearly with X+Y+Z, and the spread along `v1` is `ratio` times the spread
//! along either perpendicular direction:
//!
//! ```text
//! P = a² (X+Y+Z)² U diag(ratio², 1, 1) Uᵀ,   U = [v1 v2 v3]
//! ```

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::colorspace::Tristimulus;
use crate::error::{Error, Result};

/// Scale multiplier for repeated measurements of one region of one panel.
pub const WITHIN_PANEL_A: f64 = 1.0 / 2000.0;
/// Scale multiplier for measurements of the same color across panels.
pub const BETWEEN_PANEL_A: f64 = 1.0 / 400.0;
/// Standard deviation along the XYZ direction relative to the perpendicular ones.
pub const DEFAULT_RATIO: f64 = 5.0;

const UNIT_TOLERANCE: f64 = 1e-9;

/// Orthonormal frame anchored at a tristimulus direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectionBasis {
    pub v1: Vector3<f64>,
    pub v2: Vector3<f64>,
    pub v3: Vector3<f64>,
    pub anchor: Tristimulus,
    /// Set when Y = Z = 0 and `v2` had to be chosen as (0, 1, 0).
    pub fallback: bool,
}

impl DirectionBasis {
    /// Columns are `v1`, `v2`, `v3`.
    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::from_columns(&[self.v1, self.v2, self.v3])
    }

    pub fn vector(&self, direction: Direction) -> Vector3<f64> {
        match direction {
            Direction::X => Vector3::x(),
            Direction::Y => Vector3::y(),
            Direction::Z => Vector3::z(),
            Direction::V1 => self.v1,
            Direction::V2 => self.v2,
            Direction::V3 => self.v3,
        }
    }
}

pub fn direction_basis(anchor: &Tristimulus) -> Result<DirectionBasis> {
    anchor
        .require_positive_sum()
        .map_err(|_| Error::Degenerate("direction anchor must be nonzero"))?;
    let c = anchor.to_vector();
    let v1 = c / c.norm();
    let yz = (anchor.y() * anchor.y() + anchor.z() * anchor.z()).sqrt();
    let (v2, fallback) = if yz > 0.0 {
        (Vector3::new(0.0, -anchor.z() / yz, anchor.y() / yz), false)
    } else {
        (Vector3::y(), true)
    };
    let cross = v1.cross(&v2);
    let v3 = cross / cross.norm();
    Ok(DirectionBasis {
        v1,
        v2,
        v3,
        anchor: *anchor,
        fallback,
    })
}

/// Axes along which spread is reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    X,
    Y,
    Z,
    #[serde(rename = "v1")]
    V1,
    #[serde(rename = "v2")]
    V2,
    #[serde(rename = "v3")]
    V3,
}

impl Direction {
    pub const ALL: [Direction; 6] = [
        Direction::X,
        Direction::Y,
        Direction::Z,
        Direction::V1,
        Direction::V2,
        Direction::V3,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Direction::X => "X",
            Direction::Y => "Y",
            Direction::Z => "Z",
            Direction::V1 => "v1",
            Direction::V2 => "v2",
            Direction::V3 => "v3",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Direction::ALL
            .into_iter()
            .find(|d| d.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Validation(format!("unknown direction `{s}`")))
    }
}

pub fn sample_mean(samples: &[Tristimulus]) -> Result<Tristimulus> {
    if samples.is_empty() {
        return Err(Error::Empty("sample mean of no samples"));
    }
    let total = samples
        .iter()
        .fold(Vector3::zeros(), |acc, s| acc + s.to_vector());
    Tristimulus::from_vector(&(total / samples.len() as f64))
}

fn require_unit(v: &Vector3<f64>) -> Result<()> {
    let norm = v.norm();
    if (norm - 1.0).abs() > UNIT_TOLERANCE {
        return Err(Error::NonUnitVector { norm });
    }
    Ok(())
}

fn projected_std(samples: &[Tristimulus], mean: &Vector3<f64>, v: &Vector3<f64>) -> f64 {
    let m = samples.len() as f64;
    let ss: f64 = samples
        .iter()
        .map(|c| {
            let d = v.dot(&(c.to_vector() - mean));
            d * d
        })
        .sum();
    (ss / m).sqrt()
}

/// Population standard deviation (divisor m) of the samples projected on `v`.
pub fn directional_std(samples: &[Tristimulus], v: &Vector3<f64>) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: samples.len(),
        });
    }
    require_unit(v)?;
    let mean = sample_mean(samples)?.to_vector();
    Ok(projected_std(samples, &mean, v))
}

/// Spread of one group of repeated measurements along every reported direction.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionalStd {
    pub panel_id: String,
    pub color_id: String,
    pub brightness: f64,
    /// X+Y+Z of the sample mean.
    pub sum_xyz: f64,
    pub sample_count: usize,
    /// Indexed in the order of [`Direction::ALL`].
    pub sigma: [f64; 6],
}

impl DirectionalStd {
    pub fn get(&self, direction: Direction) -> f64 {
        self.sigma[direction as usize]
    }

    pub fn sigma_v1(&self) -> f64 {
        self.get(Direction::V1)
    }

    pub fn sigma_v2(&self) -> f64 {
        self.get(Direction::V2)
    }

    pub fn sigma_v3(&self) -> f64 {
        self.get(Direction::V3)
    }
}

/// Computes [`DirectionalStd`] with the frame anchored at the sample mean.
pub fn directional_stats(
    samples: &[Tristimulus],
    panel_id: &str,
    color_id: &str,
    brightness: f64,
) -> Result<DirectionalStd> {
    if samples.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: samples.len(),
        });
    }
    let mean = sample_mean(samples)?;
    let basis = direction_basis(&mean)?;
    let mean_v = mean.to_vector();
    let mut sigma = [0.0; 6];
    for (slot, direction) in sigma.iter_mut().zip(Direction::ALL) {
        *slot = projected_std(samples, &mean_v, &basis.vector(direction));
    }
    Ok(DirectionalStd {
        panel_id: panel_id.to_owned(),
        color_id: color_id.to_owned(),
        brightness,
        sum_xyz: mean.sum(),
        sample_count: samples.len(),
        sigma,
    })
}

/// Least-squares fit of `sigma ≈ k · (X+Y+Z)` through the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub k: f64,
    pub direction: Direction,
    pub residual_rms: f64,
    pub n: usize,
}

/// `points` are `(X+Y+Z, sigma)` pairs.
pub fn fit_k(direction: Direction, points: &[(f64, f64)]) -> Result<FitResult> {
    if points.is_empty() {
        return Err(Error::Empty("fit_k needs at least one point"));
    }
    if let Some((s, _)) = points.iter().find(|(s, _)| !(*s > 0.0)) {
        return Err(Error::Validation(format!(
            "X+Y+Z must be positive in every fitted point, got {s}"
        )));
    }
    let num: f64 = points.iter().map(|(s, sigma)| s * sigma).sum();
    let den: f64 = points.iter().map(|(s, _)| s * s).sum();
    let k = num / den;
    let ss: f64 = points
        .iter()
        .map(|(s, sigma)| (sigma - k * s).powi(2))
        .sum();
    Ok(FitResult {
        k,
        direction,
        residual_rms: (ss / points.len() as f64).sqrt(),
        n: points.len(),
    })
}

pub fn fit_direction(direction: Direction, stds: &[DirectionalStd]) -> Result<FitResult> {
    let points: Vec<(f64, f64)> = stds.iter().map(|d| (d.sum_xyz, d.get(direction))).collect();
    fit_k(direction, &points)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    WithinPanel,
    BetweenPanel,
    Fitted,
}

impl Provenance {
    pub fn label(self) -> &'static str {
        match self {
            Provenance::WithinPanel => "within_panel",
            Provenance::BetweenPanel => "between_panel",
            Provenance::Fitted => "fitted",
        }
    }
}

impl FromStr for Provenance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "within_panel" => Ok(Provenance::WithinPanel),
            "between_panel" => Ok(Provenance::BetweenPanel),
            "fitted" => Ok(Provenance::Fitted),
            other => Err(Error::Validation(format!("unknown provenance `{other}`"))),
        }
    }
}

/// Per-direction fits that produced a [`Provenance::Fitted`] model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMetadata {
    pub fits: Vec<FitResult>,
    pub groups: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    a: f64,
    ratio: f64,
    pub provenance: Provenance,
    pub fit: Option<FitMetadata>,
}

impl NoiseModel {
    pub fn new(a: f64, ratio: f64, provenance: Provenance) -> Result<Self> {
        if !(a.is_finite() && a > 0.0) {
            return Err(Error::InvalidModel(format!("a must be positive, got {a}")));
        }
        if !(ratio.is_finite() && ratio >= 1.0) {
            return Err(Error::InvalidModel(format!("ratio must be >= 1, got {ratio}")));
        }
        Ok(NoiseModel {
            a,
            ratio,
            provenance,
            fit: None,
        })
    }

    pub fn within_panel() -> Self {
        NoiseModel::new(WITHIN_PANEL_A, DEFAULT_RATIO, Provenance::WithinPanel).unwrap()
    }

    pub fn between_panel() -> Self {
        NoiseModel::new(BETWEEN_PANEL_A, DEFAULT_RATIO, Provenance::BetweenPanel).unwrap()
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    /// Standard deviations along (v1, v2, v3) at `c`.
    pub fn principal_stds(&self, c: &Tristimulus) -> [f64; 3] {
        let base = self.a * c.sum();
        [base * self.ratio, base, base]
    }
}

fn from_eigen(basis: &DirectionBasis, eigenvalues: [f64; 3]) -> Matrix3<f64> {
    // Sum of outer products keeps the result exactly symmetric.
    [basis.v1, basis.v2, basis.v3]
        .iter()
        .zip(eigenvalues)
        .fold(Matrix3::zeros(), |acc, (v, lambda)| {
            acc + (v * v.transpose()) * lambda
        })
}

/// Covariance of a measurement at `c` under `model`.
pub fn covariance(model: &NoiseModel, c: &Tristimulus) -> Result<Matrix3<f64>> {
    let basis = direction_basis(c)?;
    let [s1, s2, s3] = model.principal_stds(c);
    Ok(from_eigen(&basis, [s1 * s1, s2 * s2, s3 * s3]))
}

/// Symmetric inverse square root of [`covariance`]; maps residuals to unit variance.
pub fn whitening(model: &NoiseModel, c: &Tristimulus) -> Result<Matrix3<f64>> {
    let basis = direction_basis(c)?;
    let [s1, s2, s3] = model.principal_stds(c);
    Ok(from_eigen(&basis, [1.0 / s1, 1.0 / s2, 1.0 / s3]))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrincipalAxis {
    /// Unit eigenvector of the largest sample-covariance eigenvalue, oriented so `axis·v1 >= 0`.
    pub axis: Vector3<f64>,
    pub angle_to_v1_deg: f64,
    pub eigenvalues: [f64; 3],
}

/// Population covariance of the samples about their mean.
pub fn sample_covariance(samples: &[Tristimulus]) -> Result<Matrix3<f64>> {
    let mean = sample_mean(samples)?.to_vector();
    let m = samples.len() as f64;
    Ok(samples.iter().fold(Matrix3::zeros(), |acc, c| {
        let d = c.to_vector() - mean;
        acc + d * d.transpose()
    }) / m)
}

pub fn principal_axis(samples: &[Tristimulus]) -> Result<PrincipalAxis> {
    if samples.len() < 3 {
        return Err(Error::TooFewSamples {
            needed: 3,
            got: samples.len(),
        });
    }
    let cov = sample_covariance(samples)?;
    if cov.trace() <= 0.0 {
        return Err(Error::ZeroVariance);
    }
    let eig = SymmetricEigen::new(cov);
    let (imax, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &l)| {
            if l > best.1 {
                (i, l)
            } else {
                best
            }
        });
    let v1 = direction_basis(&sample_mean(samples)?)?.v1;
    let mut axis: Vector3<f64> = eig.eigenvectors.column(imax).into_owned();
    axis /= axis.norm();
    if axis.dot(&v1) < 0.0 {
        axis = -axis;
    }
    let angle = axis.dot(&v1).clamp(-1.0, 1.0).acos().to_degrees();
    let mut eigenvalues = [eig.eigenvalues[0], eig.eigenvalues[1], eig.eigenvalues[2]];
    eigenvalues.sort_by(|a, b| b.total_cmp(a));
    Ok(PrincipalAxis {
        axis,
        angle_to_v1_deg: angle,
        eigenvalues,
    })
}

/// Fits `a` and `ratio` from per-group directional spreads.
///
/// Each of v1, v2, v3 gets its own through-origin fit of sigma against X+Y+Z.
/// The ratio is `k_v1` over the mean perpendicular `k`, and `a = k_v1 / ratio`.
pub fn fit_noise_model(stds: &[DirectionalStd]) -> Result<NoiseModel> {
    if stds.is_empty() {
        return Err(Error::Empty("noise model fit needs directional spreads"));
    }
    let fits = Direction::ALL
        .into_iter()
        .map(|d| fit_direction(d, stds))
        .collect::<Result<Vec<_>>>()?;
    let k = |d: Direction| fits[d as usize].k;
    let perpendicular = 0.5 * (k(Direction::V2) + k(Direction::V3));
    if !(perpendicular > 0.0) {
        return Err(Error::ZeroPerpendicularVariance);
    }
    let ratio = k(Direction::V1) / perpendicular;
    let mut model = NoiseModel::new(k(Direction::V1) / ratio, ratio, Provenance::Fitted)?;
    model.fit = Some(FitMetadata {
        fits,
        groups: stds.len(),
    });
    Ok(model)
}
