//! Scenario configuration (TOML). Every field has a default, so an empty file
//! describes the default scenario.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::Bins;
use crate::colorspace::Tristimulus;
use crate::error::{Error, Result};
use crate::io::read_to_string;
use crate::noise_model::{NoiseModel, Provenance, BETWEEN_PANEL_A, DEFAULT_RATIO, WITHIN_PANEL_A};
use crate::simulator::{CampaignSpec, NamedColor, Primaries, DEFAULT_PALETTE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub campaign: CampaignConfig,
    pub model: ModelConfig,
    pub primaries: PrimariesConfig,
    /// Population colors; empty means the built-in 20-color palette.
    pub colors: Vec<ColorConfig>,
    pub calibration: CalibrationConfig,
    pub report: ReportConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            seed: 2017,
            campaign: CampaignConfig::default(),
            model: ModelConfig::default(),
            primaries: PrimariesConfig::default(),
            colors: Vec::new(),
            calibration: CalibrationConfig::default(),
            report: ReportConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignConfig {
    pub panels: usize,
    pub repeats: usize,
    pub brightness: Vec<f64>,
    /// Seconds between consecutive measurements on one panel.
    pub measurement_interval: f64,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            panels: 13,
            repeats: 12,
            brightness: vec![1.0],
            measurement_interval: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub within_a: f64,
    pub between_a: f64,
    pub ratio: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            within_a: WITHIN_PANEL_A,
            between_a: BETWEEN_PANEL_A,
            ratio: DEFAULT_RATIO,
        }
    }
}

impl ModelConfig {
    pub fn within(&self) -> Result<NoiseModel> {
        NoiseModel::new(self.within_a, self.ratio, Provenance::WithinPanel)
    }

    pub fn between(&self) -> Result<NoiseModel> {
        NoiseModel::new(self.between_a, self.ratio, Provenance::BetweenPanel)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrimariesConfig {
    pub red: [f64; 3],
    pub green: [f64; 3],
    pub blue: [f64; 3],
}

impl Default for PrimariesConfig {
    fn default() -> Self {
        let p = Primaries::srgb();
        PrimariesConfig {
            red: p.red.to_array(),
            green: p.green.to_array(),
            blue: p.blue.to_array(),
        }
    }
}

impl PrimariesConfig {
    pub fn primaries(&self) -> Result<Primaries> {
        Ok(Primaries {
            red: Tristimulus::try_from(self.red)?,
            green: Tristimulus::try_from(self.green)?,
            blue: Tristimulus::try_from(self.blue)?,
        })
    }
}

/// A population color given either as linear drive values or directly as XYZ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColorConfig {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rgb: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xyz: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    pub fit: Vec<String>,
    pub holdout: Vec<String>,
    /// Panel whose measurements are mapped onto every other panel; defaults to the first.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source_panel: Option<String>,
    pub brightness: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        let ids = |v: &[&str]| v.iter().map(|s| s.to_string()).collect();
        CalibrationConfig {
            fit: ids(&["red", "green", "blue", "white"]),
            holdout: ids(&["cyan", "magenta", "yellow"]),
            source_panel: None,
            brightness: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    pub histogram_bin_width: f64,
    pub histogram_max: f64,
    /// Perpendicular spread above this multiple of the model prediction is flagged.
    pub deviation_factor: f64,
    pub trend_alpha: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub external_histogram: Option<PathBuf>,
    /// Color whose drift over time is tested on every panel.
    pub time_series_color: String,
    pub svg: bool,
}

impl Default for ReportConfig {
    fn default() -> Self {
        let bins = Bins::default();
        ReportConfig {
            histogram_bin_width: bins.width,
            histogram_max: bins.max,
            deviation_factor: 2.0,
            trend_alpha: 0.05,
            external_histogram: None,
            time_series_color: "white".into(),
            svg: true,
        }
    }
}

impl ReportConfig {
    pub fn bins(&self) -> Bins {
        Bins {
            width: self.histogram_bin_width,
            max: self.histogram_max,
        }
    }
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = read_to_string(path)?;
        let mut config: ScenarioConfig = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_owned(),
            line: e
                .span()
                .map(|s| text[..s.start.min(text.len())].lines().count().max(1) as u64)
                .unwrap_or(0),
            column: "-".into(),
            reason: e.message().to_owned(),
        })?;
        if let Some(ext) = &config.report.external_histogram {
            if ext.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                config.report.external_histogram = Some(base.join(ext));
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn population(&self) -> Result<Vec<NamedColor>> {
        let primaries = self.primaries.primaries()?;
        if self.colors.is_empty() {
            return DEFAULT_PALETTE
                .iter()
                .map(|(id, rgb)| Ok(NamedColor::new(*id, primaries.color(*rgb)?)))
                .collect();
        }
        self.colors
            .iter()
            .map(|c| match (c.rgb, c.xyz) {
                (Some(rgb), None) => Ok(NamedColor::new(c.id.clone(), primaries.color(rgb)?)),
                (None, Some(xyz)) => Ok(NamedColor::new(c.id.clone(), Tristimulus::try_from(xyz)?)),
                _ => Err(Error::Validation(format!(
                    "color `{}` needs exactly one of `rgb` or `xyz`",
                    c.id
                ))),
            })
            .collect()
    }

    pub fn campaign_spec(&self) -> Result<CampaignSpec> {
        let mut spec = CampaignSpec::new(self.campaign.panels, self.campaign.repeats, self.population()?, self.seed);
        spec.brightness_levels = self.campaign.brightness.clone();
        spec.measurement_interval = self.campaign.measurement_interval;
        spec.static_model = self.model.between()?;
        spec.temporal_model = self.model.within()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let spec = self.campaign_spec()?;
        spec.validate()?;
        let known = |id: &String| spec.colors.iter().any(|c| &c.id == id);
        let cal = &self.calibration;
        if cal.fit.len() < 3 {
            return Err(Error::Validation(format!(
                "calibration fit set needs at least 3 colors, got {}",
                cal.fit.len()
            )));
        }
        if cal.holdout.is_empty() {
            return Err(Error::Validation("calibration holdout set is empty".into()));
        }
        if let Some(id) = cal.fit.iter().chain(&cal.holdout).find(|id| !known(id)) {
            return Err(Error::UnknownColor(id.clone()));
        }
        if !spec.brightness_levels.contains(&cal.brightness) {
            return Err(Error::Validation(format!(
                "calibration brightness {} is not a campaign brightness level",
                cal.brightness
            )));
        }
        self.report.bins().validate()?;
        if !(self.report.deviation_factor > 0.0) {
            return Err(Error::Validation("deviation_factor must be positive".into()));
        }
        if !(self.report.trend_alpha > 0.0 && self.report.trend_alpha < 1.0) {
            return Err(Error::Validation("trend_alpha must lie in (0, 1)".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario config serializes")
    }

    /// SHA-256 of the canonical TOML rendering, as lowercase hex.
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_toml().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
