use crate::colorspace::Tristimulus;

/// One tristimulus measurement with its campaign coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementRecord {
    pub panel_id: String,
    pub color_id: String,
    /// Relative panel brightness in (0, 1].
    pub brightness: f64,
    pub repeat_index: u32,
    /// Seconds since the start of the campaign, when known.
    pub timestamp: Option<f64>,
    pub xyz: Tristimulus,
}

/// Identifies a group of repeated measurements.
#[derive(Debug, Clone, PartialEq, PartialOrd)]
pub struct GroupKey {
    pub panel_id: String,
    pub color_id: String,
    pub brightness: f64,
}

impl MeasurementRecord {
    pub fn group_key(&self) -> GroupKey {
        GroupKey {
            panel_id: self.panel_id.clone(),
            color_id: self.color_id.clone(),
            brightness: self.brightness,
        }
    }
}
