//! Monte-Carlo measurement campaigns under the anisotropic noise model.
//!
//! Every panel owns an independent ChaCha stream derived from the master seed
//! (stream index = panel index), so panels can be generated in parallel and the
//! output does not depend on scheduling. Within a panel stream the static
//! per-color offsets are drawn first, then the measurements in record order.

use log::warn;
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::colorspace::Tristimulus;
use crate::error::{Error, Result};
use crate::noise_model::{direction_basis, NoiseModel};
use crate::record::MeasurementRecord;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedColor {
    pub id: String,
    pub xyz: Tristimulus,
}

impl NamedColor {
    pub fn new(id: impl Into<String>, xyz: Tristimulus) -> Self {
        NamedColor { id: id.into(), xyz }
    }
}

/// Linear display: a drive triple maps to `r·R + g·G + b·B`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Primaries {
    pub red: Tristimulus,
    pub green: Tristimulus,
    pub blue: Tristimulus,
}

impl Primaries {
    /// sRGB / Rec. 709 primaries with a D65 white of Y = 100.
    pub fn srgb() -> Self {
        let t = |x, y, z| Tristimulus::new(x, y, z).unwrap();
        Primaries {
            red: t(41.24564, 21.26729, 1.93339),
            green: t(35.75761, 71.51522, 11.91920),
            blue: t(18.04375, 7.21750, 95.03041),
        }
    }

    pub fn color(&self, rgb: [f64; 3]) -> Result<Tristimulus> {
        if rgb.iter().any(|v| !(v.is_finite() && (0.0..=1.0).contains(v))) {
            return Err(Error::Validation(format!("drive values must lie in [0, 1], got {rgb:?}")));
        }
        let v = self.red.to_vector() * rgb[0] + self.green.to_vector() * rgb[1] + self.blue.to_vector() * rgb[2];
        Tristimulus::from_vector(&v)
    }
}

/// Drive values for the default 20-color set.
pub const DEFAULT_PALETTE: [(&str, [f64; 3]); 20] = [
    ("red", [1.0, 0.0, 0.0]),
    ("green", [0.0, 1.0, 0.0]),
    ("blue", [0.0, 0.0, 1.0]),
    ("white", [1.0, 1.0, 1.0]),
    ("cyan", [0.0, 1.0, 1.0]),
    ("magenta", [1.0, 0.0, 1.0]),
    ("yellow", [1.0, 1.0, 0.0]),
    ("gray75", [0.75, 0.75, 0.75]),
    ("gray50", [0.5, 0.5, 0.5]),
    ("gray25", [0.25, 0.25, 0.25]),
    ("gray10", [0.1, 0.1, 0.1]),
    ("orange", [1.0, 0.5, 0.0]),
    ("pink", [1.0, 0.5, 0.75]),
    ("purple", [0.5, 0.0, 1.0]),
    ("teal", [0.0, 0.5, 0.5]),
    ("olive", [0.5, 0.5, 0.0]),
    ("navy", [0.0, 0.0, 0.5]),
    ("maroon", [0.5, 0.0, 0.0]),
    ("darkgreen", [0.0, 0.5, 0.0]),
    ("skyblue", [0.5, 0.75, 1.0]),
];

pub fn default_palette() -> Vec<NamedColor> {
    let primaries = Primaries::srgb();
    DEFAULT_PALETTE
        .iter()
        .map(|(id, rgb)| NamedColor::new(*id, primaries.color(*rgb).unwrap()))
        .collect()
}

/// Zero-mean Gaussian draw with covariance `covariance(model, c)`.
///
/// Sampled in the model's own eigenframe, so no factorization is needed.
pub fn draw_noise<R: Rng + ?Sized>(model: &NoiseModel, c: &Tristimulus, rng: &mut R) -> Result<Vector3<f64>> {
    let basis = direction_basis(c)?;
    let stds = model.principal_stds(c);
    let z: [f64; 3] = [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)];
    Ok(basis.v1 * (stds[0] * z[0]) + basis.v2 * (stds[1] * z[1]) + basis.v3 * (stds[2] * z[2]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PanelSpec {
    pub panel_id: String,
    /// Noise-free outputs at full brightness.
    pub true_colors: Vec<NamedColor>,
    pub static_model: NoiseModel,
    pub temporal_model: NoiseModel,
    /// Number of true colors whose static offset had to be clamped at zero.
    pub clamped: usize,
}

impl PanelSpec {
    pub fn true_color(&self, color_id: &str) -> Result<Tristimulus> {
        self.true_colors
            .iter()
            .find(|c| c.id == color_id)
            .map(|c| c.xyz)
            .ok_or_else(|| Error::UnknownColor(color_id.to_owned()))
    }
}

/// Draws one panel: each population color gets a static offset that stays
/// fixed for every later measurement of this panel.
pub fn sample_panel<R: Rng + ?Sized>(
    panel_id: &str,
    population: &[NamedColor],
    static_model: &NoiseModel,
    temporal_model: &NoiseModel,
    rng: &mut R,
) -> Result<PanelSpec> {
    let mut clamped = 0;
    let true_colors = population
        .iter()
        .map(|c| {
            let v = c.xyz.to_vector() + draw_noise(static_model, &c.xyz, rng)?;
            let (xyz, was_clamped) = Tristimulus::from_vector_clamped(&v);
            clamped += usize::from(was_clamped);
            xyz.require_positive_sum()?;
            Ok(NamedColor::new(c.id.clone(), xyz))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PanelSpec {
        panel_id: panel_id.to_owned(),
        true_colors,
        static_model: static_model.clone(),
        temporal_model: temporal_model.clone(),
        clamped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Draw {
    pub value: Tristimulus,
    pub clamped: bool,
}

/// One noisy measurement of `color_id` at `brightness` from `panel`.
pub fn sample_measurement<R: Rng + ?Sized>(
    panel: &PanelSpec,
    color_id: &str,
    brightness: f64,
    rng: &mut R,
) -> Result<Draw> {
    let truth = panel.true_color(color_id)? * brightness;
    let v = truth.to_vector() + draw_noise(&panel.temporal_model, &truth, rng)?;
    let (value, clamped) = Tristimulus::from_vector_clamped(&v);
    Ok(Draw { value, clamped })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignSpec {
    pub n_panels: usize,
    pub repeats_per_color: usize,
    /// Population mean colors at full brightness.
    pub colors: Vec<NamedColor>,
    pub brightness_levels: Vec<f64>,
    pub static_model: NoiseModel,
    pub temporal_model: NoiseModel,
    /// Seconds between consecutive measurements of one panel.
    pub measurement_interval: f64,
    pub seed: u64,
}

impl CampaignSpec {
    pub fn new(n_panels: usize, repeats_per_color: usize, colors: Vec<NamedColor>, seed: u64) -> Self {
        CampaignSpec {
            n_panels,
            repeats_per_color,
            colors,
            brightness_levels: vec![1.0],
            static_model: NoiseModel::between_panel(),
            temporal_model: NoiseModel::within_panel(),
            measurement_interval: 5.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_panels == 0 {
            return Err(Error::Validation("campaign needs at least one panel".into()));
        }
        if self.repeats_per_color == 0 {
            return Err(Error::Validation("repeats per color must be at least 1".into()));
        }
        if self.colors.is_empty() {
            return Err(Error::Validation("campaign needs at least one color".into()));
        }
        if self.brightness_levels.is_empty() {
            return Err(Error::Validation("campaign needs at least one brightness level".into()));
        }
        if let Some(b) = self.brightness_levels.iter().find(|b| !(**b > 0.0 && **b <= 1.0)) {
            return Err(Error::Validation(format!("brightness {b} outside (0, 1]")));
        }
        if !(self.measurement_interval.is_finite() && self.measurement_interval >= 0.0) {
            return Err(Error::Validation("measurement interval must be >= 0".into()));
        }
        for (i, c) in self.colors.iter().enumerate() {
            c.xyz.require_positive_sum()?;
            if self.colors[..i].iter().any(|o| o.id == c.id) {
                return Err(Error::Validation(format!("duplicate color id `{}`", c.id)));
            }
        }
        Ok(())
    }

    pub fn panel_id(&self, index: usize) -> String {
        let width = self.n_panels.to_string().len().max(2);
        format!("P{:0width$}", index + 1)
    }

    pub fn panel_rng(&self, index: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index as u64);
        rng
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Campaign {
    pub records: Vec<MeasurementRecord>,
    pub panels: Vec<PanelSpec>,
    /// Measurements with at least one component clamped at zero.
    pub clamped_measurements: usize,
}

fn run_panel(spec: &CampaignSpec, index: usize) -> Result<(PanelSpec, Vec<MeasurementRecord>, usize)> {
    let mut rng = spec.panel_rng(index);
    let panel_id = spec.panel_id(index);
    let panel = sample_panel(&panel_id, &spec.colors, &spec.static_model, &spec.temporal_model, &mut rng)?;
    let mut records = Vec::with_capacity(spec.colors.len() * spec.brightness_levels.len() * spec.repeats_per_color);
    let mut clamped = 0;
    let mut sequence = 0usize;
    for &brightness in &spec.brightness_levels {
        for color in &spec.colors {
            for repeat in 0..spec.repeats_per_color {
                let draw = sample_measurement(&panel, &color.id, brightness, &mut rng)?;
                clamped += usize::from(draw.clamped);
                records.push(MeasurementRecord {
                    panel_id: panel_id.clone(),
                    color_id: color.id.clone(),
                    brightness,
                    repeat_index: repeat as u32,
                    timestamp: Some(sequence as f64 * spec.measurement_interval),
                    xyz: draw.value,
                });
                sequence += 1;
            }
        }
    }
    Ok((panel, records, clamped))
}

/// Runs the campaign: panels × brightness levels × colors × repeats.
pub fn run_campaign(spec: &CampaignSpec) -> Result<Campaign> {
    spec.validate()?;
    let per_panel = (0..spec.n_panels)
        .into_par_iter()
        .map(|i| run_panel(spec, i))
        .collect::<Result<Vec<_>>>()?;
    let mut campaign = Campaign {
        records: Vec::with_capacity(per_panel.iter().map(|p| p.1.len()).sum()),
        panels: Vec::with_capacity(spec.n_panels),
        clamped_measurements: 0,
    };
    for (panel, records, clamped) in per_panel {
        campaign.clamped_measurements += clamped;
        campaign.panels.push(panel);
        campaign.records.extend(records);
    }
    let clamped_colors: usize = campaign.panels.iter().map(|p| p.clamped).sum();
    if campaign.clamped_measurements > 0 || clamped_colors > 0 {
        warn!(
            "clamped negative components: {} measurement(s), {} panel color(s)",
            campaign.clamped_measurements, clamped_colors
        );
    }
    Ok(campaign)
}
