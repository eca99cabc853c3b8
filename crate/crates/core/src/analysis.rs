//! Campaign statistics: per-panel k tables, between-panel spreads, drift
//! checks, principal-axis summaries and ΔE histograms.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use log::info;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::colorspace::{delta_e76, xyz_to_lab, LabColor, Tristimulus};
use crate::error::{Error, Result};
use crate::noise_model::{
    directional_stats, fit_direction, principal_axis, sample_mean, Direction, DirectionalStd, FitResult, NoiseModel,
};
use crate::record::MeasurementRecord;

/// Records of one (color, brightness) group.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorGroup {
    pub color_id: String,
    pub brightness: f64,
    pub records: Vec<MeasurementRecord>,
}

impl ColorGroup {
    pub fn samples(&self) -> Vec<Tristimulus> {
        self.records.iter().map(|r| r.xyz).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    pub panel_id: String,
    /// Sorted by color id, then brightness.
    pub groups: Vec<ColorGroup>,
}

type Key = (String, u64);

fn color_key(color_id: &str, brightness: f64) -> Key {
    // Positive finite floats order the same as their bit patterns.
    (color_id.to_owned(), brightness.to_bits())
}

impl PanelDataset {
    /// Splits records by panel, then by (color, brightness). Panels are sorted by id.
    pub fn from_records(records: &[MeasurementRecord]) -> Vec<PanelDataset> {
        let mut panels: BTreeMap<String, BTreeMap<Key, ColorGroup>> = BTreeMap::new();
        for r in records {
            panels
                .entry(r.panel_id.clone())
                .or_default()
                .entry(color_key(&r.color_id, r.brightness))
                .or_insert_with(|| ColorGroup {
                    color_id: r.color_id.clone(),
                    brightness: r.brightness,
                    records: Vec::new(),
                })
                .records
                .push(r.clone());
        }
        panels
            .into_iter()
            .map(|(panel_id, groups)| {
                let groups = groups
                    .into_values()
                    .map(|mut g| {
                        g.records.sort_by_key(|r| r.repeat_index);
                        g
                    })
                    .collect();
                PanelDataset { panel_id, groups }
            })
            .collect()
    }

    pub fn group(&self, color_id: &str, brightness: f64) -> Option<&ColorGroup> {
        self.groups
            .iter()
            .find(|g| g.color_id == color_id && g.brightness == brightness)
    }

    /// Directional spreads of every group with at least two repeats.
    pub fn directional_stds(&self) -> Result<Vec<DirectionalStd>> {
        self.groups
            .iter()
            .filter(|g| g.records.len() >= 2)
            .map(|g| directional_stats(&g.samples(), &self.panel_id, &g.color_id, g.brightness))
            .collect()
    }
}

/// Directional spreads of all repeat groups of all panels.
pub fn within_panel_stds(datasets: &[PanelDataset]) -> Result<Vec<DirectionalStd>> {
    let mut out = Vec::new();
    for d in datasets {
        out.extend(d.directional_stds()?);
    }
    if out.is_empty() {
        return Err(Error::InsufficientRepeats("no group has two or more repeats".into()));
    }
    Ok(out)
}

/// Per-panel `k` fits for every direction.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelFits {
    pub panel_id: String,
    /// Indexed in the order of [`Direction::ALL`].
    pub fits: Vec<FitResult>,
}

/// Rows of `k × 1000` per direction with the across-panel mean and spread.
#[derive(Debug, Clone, PartialEq)]
pub struct KTable {
    pub panels: Vec<PanelFits>,
    /// Across-panel mean of `k × 1000`, per direction.
    pub mean: [f64; 6],
    /// Across-panel population standard deviation of `k × 1000`, per direction.
    pub std: [f64; 6],
}

impl KTable {
    pub fn k_times_1000(&self, panel: usize, direction: Direction) -> f64 {
        self.panels[panel].fits[direction as usize].k * 1000.0
    }

    pub fn row(&self, direction: Direction) -> Vec<f64> {
        (0..self.panels.len()).map(|p| self.k_times_1000(p, direction)).collect()
    }

    pub fn mean_of(&self, direction: Direction) -> f64 {
        self.mean[direction as usize]
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn panel_k_table(datasets: &[PanelDataset]) -> Result<KTable> {
    if datasets.is_empty() {
        return Err(Error::Empty("k table needs at least one panel"));
    }
    let mut offending = Vec::new();
    let mut panels = Vec::with_capacity(datasets.len());
    for d in datasets {
        let stds = d.directional_stds()?;
        if stds.is_empty() {
            offending.extend(
                d.groups
                    .iter()
                    .map(|g| format!("{}/{}@{}", d.panel_id, g.color_id, g.brightness)),
            );
            continue;
        }
        let fits = Direction::ALL
            .into_iter()
            .map(|dir| fit_direction(dir, &stds))
            .collect::<Result<Vec<_>>>()?;
        panels.push(PanelFits {
            panel_id: d.panel_id.clone(),
            fits,
        });
    }
    if !offending.is_empty() {
        return Err(Error::InsufficientRepeats(offending.join(", ")));
    }
    let mut mean = [0.0; 6];
    let mut std = [0.0; 6];
    for dir in Direction::ALL {
        let row: Vec<f64> = panels.iter().map(|p| p.fits[dir as usize].k * 1000.0).collect();
        (mean[dir as usize], std[dir as usize]) = mean_std(&row);
    }
    Ok(KTable { panels, mean, std })
}

/// One record per panel for every (color, brightness): the lowest repeat index.
fn first_repeats(records: &[MeasurementRecord]) -> BTreeMap<Key, BTreeMap<String, MeasurementRecord>> {
    let mut out: BTreeMap<Key, BTreeMap<String, MeasurementRecord>> = BTreeMap::new();
    let mut dropped = 0usize;
    for r in records {
        let by_panel = out.entry(color_key(&r.color_id, r.brightness)).or_default();
        match by_panel.get(&r.panel_id) {
            Some(existing) => {
                dropped += 1;
                if r.repeat_index < existing.repeat_index {
                    by_panel.insert(r.panel_id.clone(), r.clone());
                }
            }
            None => {
                by_panel.insert(r.panel_id.clone(), r.clone());
            }
        }
    }
    if dropped > 0 {
        info!("between-panel statistics use the first repeat only; ignored {dropped} later repeat(s)");
    }
    out
}

/// Spread of one measurement per panel about the cross-panel mean, per color.
/// The returned `panel_id` is `"*"`.
pub fn between_panel_std(records: &[MeasurementRecord]) -> Result<Vec<DirectionalStd>> {
    let groups = first_repeats(records);
    if groups.is_empty() {
        return Err(Error::Empty("between-panel statistics need records"));
    }
    groups
        .into_values()
        .map(|by_panel| {
            let first = by_panel.values().next().expect("group is non-empty");
            let (color_id, brightness) = (first.color_id.clone(), first.brightness);
            if by_panel.len() < 2 {
                return Err(Error::TooFewPanels {
                    color: color_id,
                    got: by_panel.len(),
                });
            }
            let samples: Vec<Tristimulus> = by_panel.values().map(|r| r.xyz).collect();
            directional_stats(&samples, "*", &color_id, brightness)
        })
        .collect()
}

/// A color whose perpendicular spread exceeds the model prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviationFlag {
    pub color_id: String,
    pub brightness: f64,
    pub direction: Direction,
    pub observed: f64,
    pub predicted: f64,
}

/// Flags groups whose v2 or v3 spread exceeds `factor` times `a · (X+Y+Z)`.
pub fn flag_deviating_colors(stds: &[DirectionalStd], model: &NoiseModel, factor: f64) -> Vec<DeviationFlag> {
    let mut flags = Vec::new();
    for d in stds {
        let predicted = model.a() * d.sum_xyz;
        for dir in [Direction::V2, Direction::V3] {
            let observed = d.get(dir);
            if observed > factor * predicted {
                flags.push(DeviationFlag {
                    color_id: d.color_id.clone(),
                    brightness: d.brightness,
                    direction: dir,
                    observed,
                    predicted,
                });
            }
        }
    }
    flags
}

/// X+Y+Z over time with an ordinary least-squares trend.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub panel_id: String,
    pub color_id: String,
    pub brightness: f64,
    /// `(timestamp, X+Y+Z)`, ordered by time.
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    /// Two-sided p-value of the slope t-test; `None` with fewer than three points.
    pub p_value: Option<f64>,
}

impl TimeSeries {
    pub fn significant(&self, alpha: f64) -> bool {
        self.p_value.is_some_and(|p| p < alpha)
    }
}

/// Time series of the highest-brightness group of `color_id` in `dataset`.
pub fn time_series(dataset: &PanelDataset, color_id: &str) -> Result<TimeSeries> {
    let group = dataset
        .groups
        .iter()
        .filter(|g| g.color_id == color_id)
        .max_by(|a, b| a.brightness.total_cmp(&b.brightness))
        .ok_or_else(|| Error::UnknownColor(color_id.to_owned()))?;
    let mut points = group
        .records
        .iter()
        .map(|r| {
            r.timestamp.map(|t| (t, r.xyz.sum())).ok_or_else(|| {
                Error::MissingTimestamps(format!("{}/{} repeat {}", dataset.panel_id, color_id, r.repeat_index))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (slope, intercept, p_value) = linear_trend(&points)?;
    Ok(TimeSeries {
        panel_id: dataset.panel_id.clone(),
        color_id: color_id.to_owned(),
        brightness: group.brightness,
        points,
        slope,
        intercept,
        p_value,
    })
}

/// OLS line with a two-sided t-test on the slope.
pub fn linear_trend(points: &[(f64, f64)]) -> Result<(f64, f64, Option<f64>)> {
    if points.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: points.len(),
        });
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::Degenerate("timestamps do not vary"));
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    if points.len() < 3 {
        return Ok((slope, intercept, None));
    }
    let dof = n - 2.0;
    let ssr: f64 = points.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let se = (ssr / dof / sxx).sqrt();
    let p = if se > 0.0 {
        let dist = StudentsT::new(0.0, 1.0, dof).map_err(|_| Error::Degenerate("invalid t distribution"))?;
        2.0 * (1.0 - dist.cdf((slope / se).abs()))
    } else if slope == 0.0 {
        1.0
    } else {
        0.0
    };
    Ok((slope, intercept, Some(p)))
}

/// Principal axis of one repeat group.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisSummary {
    pub panel_id: String,
    pub color_id: String,
    pub brightness: f64,
    pub angle_to_v1_deg: f64,
    pub angle_to_y_deg: f64,
}

/// Principal-axis angles of every group with at least three repeats and nonzero spread.
pub fn principal_axes(datasets: &[PanelDataset]) -> Result<Vec<AxisSummary>> {
    let mut out = Vec::new();
    for d in datasets {
        for g in d.groups.iter().filter(|g| g.records.len() >= 3) {
            let pa = match principal_axis(&g.samples()) {
                Ok(pa) => pa,
                Err(Error::ZeroVariance) => continue,
                Err(e) => return Err(e),
            };
            out.push(AxisSummary {
                panel_id: d.panel_id.clone(),
                color_id: g.color_id.clone(),
                brightness: g.brightness,
                angle_to_v1_deg: pa.angle_to_v1_deg,
                angle_to_y_deg: pa.axis.y.abs().clamp(0.0, 1.0).acos().to_degrees(),
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Grouping {
    /// Repeats of one color on one panel against their own average.
    WithinRegion,
    /// One measurement per panel against the cross-panel average.
    BetweenPanels,
    /// Histogram supplied from outside, e.g. spatial variation across a panel.
    ExternalBetweenRegions,
}

impl Grouping {
    pub fn label(self) -> &'static str {
        match self {
            Grouping::WithinRegion => "within_region",
            Grouping::BetweenPanels => "between_panels",
            Grouping::ExternalBetweenRegions => "external_between_regions",
        }
    }
}

impl fmt::Display for Grouping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Grouping {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "within_region" => Ok(Grouping::WithinRegion),
            "between_panels" => Ok(Grouping::BetweenPanels),
            "external_between_regions" => Ok(Grouping::ExternalBetweenRegions),
            other => Err(Error::Validation(format!("unknown grouping `{other}`"))),
        }
    }
}

/// Equal-width bins over `[0, max)` plus an overflow bin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bins {
    pub width: f64,
    pub max: f64,
}

impl Default for Bins {
    fn default() -> Self {
        Bins { width: 0.25, max: 10.0 }
    }
}

impl Bins {
    pub fn validate(&self) -> Result<()> {
        if !(self.width > 0.0 && self.max > self.width && (self.max / self.width).is_finite()) {
            return Err(Error::Validation(format!(
                "histogram bins need 0 < width < max, got width {} max {}",
                self.width, self.max
            )));
        }
        Ok(())
    }

    pub fn count(&self) -> usize {
        (self.max / self.width).round() as usize
    }

    /// Regular bin edges; the overflow bin is `[max, ∞)`.
    pub fn edges(&self) -> Vec<f64> {
        (0..=self.count()).map(|i| i as f64 * self.width).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeltaEHistogram {
    pub grouping: Grouping,
    pub edges: Vec<f64>,
    /// One count per regular bin followed by the overflow count.
    pub counts: Vec<u64>,
    pub mean: f64,
    /// Raw ΔE values; empty for externally supplied histograms.
    pub values: Vec<f64>,
}

impl DeltaEHistogram {
    pub fn from_values(grouping: Grouping, values: Vec<f64>, bins: Bins) -> Result<Self> {
        bins.validate()?;
        if values.is_empty() {
            return Err(Error::Empty("ΔE histogram of no values"));
        }
        let n = bins.count();
        let mut counts = vec![0u64; n + 1];
        for v in &values {
            let idx = ((v / bins.width).floor() as usize).min(n);
            counts[idx] += 1;
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        Ok(DeltaEHistogram {
            grouping,
            edges: bins.edges(),
            counts,
            mean,
            values,
        })
    }

    /// Histogram known only by its bins; the mean uses bin centers.
    /// `bins` are `(start, end, count)`.
    pub fn from_bins(grouping: Grouping, bins: &[(f64, f64, u64)]) -> Result<Self> {
        let total: u64 = bins.iter().map(|b| b.2).sum();
        if total == 0 {
            return Err(Error::Empty("external histogram has no counts"));
        }
        let mut edges: Vec<f64> = bins.iter().map(|b| b.0).collect();
        edges.extend(bins.last().map(|b| b.1));
        let mean = bins.iter().map(|b| 0.5 * (b.0 + b.1) * b.2 as f64).sum::<f64>() / total as f64;
        Ok(DeltaEHistogram {
            grouping,
            edges,
            counts: bins.iter().map(|b| b.2).collect(),
            mean,
            values: Vec::new(),
        })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

fn lab_mean(labs: &[LabColor]) -> LabColor {
    let n = labs.len() as f64;
    LabColor {
        l: labs.iter().map(|c| c.l).sum::<f64>() / n,
        a: labs.iter().map(|c| c.a).sum::<f64>() / n,
        b: labs.iter().map(|c| c.b).sum::<f64>() / n,
        white: labs[0].white,
    }
}

fn deviations_from_mean(samples: &[Tristimulus], white: &Tristimulus, out: &mut Vec<f64>) -> Result<()> {
    let labs = samples
        .iter()
        .map(|c| xyz_to_lab(c, white))
        .collect::<Result<Vec<_>>>()?;
    let avg = lab_mean(&labs);
    for lab in &labs {
        out.push(delta_e76(lab, &avg)?);
    }
    Ok(())
}

/// ΔE (CIE76) of each measurement against its group average in L*a*b*.
pub fn delta_e_histogram(
    records: &[MeasurementRecord],
    grouping: Grouping,
    white: &Tristimulus,
    bins: Bins,
) -> Result<DeltaEHistogram> {
    let mut values = Vec::new();
    match grouping {
        Grouping::WithinRegion => {
            for d in PanelDataset::from_records(records) {
                for g in &d.groups {
                    deviations_from_mean(&g.samples(), white, &mut values)?;
                }
            }
        }
        Grouping::BetweenPanels => {
            for by_panel in first_repeats(records).into_values() {
                let samples: Vec<Tristimulus> = by_panel.values().map(|r| r.xyz).collect();
                deviations_from_mean(&samples, white, &mut values)?;
            }
        }
        Grouping::ExternalBetweenRegions => {
            return Err(Error::Validation(
                "external histograms are read from file, not computed from records".into(),
            ))
        }
    }
    DeltaEHistogram::from_values(grouping, values, bins)
}

/// Reference white for L*a*b*: the mean of all `white` measurements at the
/// highest brightness present, else the mean of the brightest color group.
pub fn reference_white(records: &[MeasurementRecord]) -> Result<Tristimulus> {
    if records.is_empty() {
        return Err(Error::Empty("reference white needs records"));
    }
    let mut groups: BTreeMap<Key, Vec<Tristimulus>> = BTreeMap::new();
    for r in records {
        groups.entry(color_key(&r.color_id, r.brightness)).or_default().push(r.xyz);
    }
    let means = groups
        .iter()
        .map(|((color, bits), samples)| Ok((color.as_str(), f64::from_bits(*bits), sample_mean(samples)?)))
        .collect::<Result<Vec<_>>>()?;
    let chosen = means
        .iter()
        .filter(|(color, _, _)| color.eq_ignore_ascii_case("white"))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .or_else(|| means.iter().max_by(|a, b| a.2.y().total_cmp(&b.2.y())))
        .map(|m| m.2)
        .expect("records are non-empty");
    if chosen.x() > 0.0 && chosen.y() > 0.0 && chosen.z() > 0.0 {
        Ok(chosen)
    } else {
        Err(Error::Degenerate("reference white must be strictly positive"))
    }
}
