//! Campaign-level analysis runs and their CSV / SVG / Markdown renderings.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::info;

use crate::analysis::{
    between_panel_std, delta_e_histogram, flag_deviating_colors, panel_k_table, principal_axes, reference_white,
    time_series, within_panel_stds, AxisSummary, Bins, DeltaEHistogram, DeviationFlag, Grouping, KTable,
    PanelDataset, TimeSeries,
};
use crate::colorspace::Tristimulus;
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::noise_model::{fit_noise_model, Direction, DirectionalStd, NoiseModel};
use crate::protocol::WeightingComparison;
use crate::record::MeasurementRecord;

/// Just-noticeable difference in CIE76 ΔE units.
pub const DELTA_E_JND: f64 = 2.3;

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisOptions {
    pub bins: Bins,
    /// Used to flag colors with excess perpendicular between-panel spread.
    pub between_model: NoiseModel,
    pub deviation_factor: f64,
    pub trend_alpha: f64,
    pub time_series_color: String,
    /// Overrides the data-driven reference white.
    pub white: Option<Tristimulus>,
    pub external_histogram: Option<DeltaEHistogram>,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            bins: Bins::default(),
            between_model: NoiseModel::between_panel(),
            deviation_factor: 2.0,
            trend_alpha: 0.05,
            time_series_color: "white".into(),
            white: None,
            external_histogram: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BetweenPanel {
    pub stds: Vec<DirectionalStd>,
    pub model: NoiseModel,
    pub flags: Vec<DeviationFlag>,
    pub histogram: DeltaEHistogram,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisReport {
    pub within_stds: Vec<DirectionalStd>,
    pub k_table: KTable,
    pub within_model: NoiseModel,
    pub axes: Vec<AxisSummary>,
    pub time_series: Vec<TimeSeries>,
    pub white: Tristimulus,
    pub within_histogram: DeltaEHistogram,
    /// Present when the data covers at least two panels.
    pub between: Option<BetweenPanel>,
    pub external_histogram: Option<DeltaEHistogram>,
    pub trend_alpha: f64,
}

impl AnalysisReport {
    pub fn mean_angle_to_v1(&self) -> Option<f64> {
        mean(self.axes.iter().map(|a| a.angle_to_v1_deg))
    }

    pub fn mean_angle_to_y(&self) -> Option<f64> {
        mean(self.axes.iter().map(|a| a.angle_to_y_deg))
    }

    pub fn significant_trends(&self) -> usize {
        self.time_series.iter().filter(|t| t.significant(self.trend_alpha)).count()
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

pub fn analyze(records: &[MeasurementRecord], options: &AnalysisOptions) -> Result<AnalysisReport> {
    if records.is_empty() {
        return Err(Error::Empty("analysis needs measurements"));
    }
    let datasets = PanelDataset::from_records(records);
    let within_stds = within_panel_stds(&datasets)?;
    let k_table = panel_k_table(&datasets)?;
    let within_model = fit_noise_model(&within_stds)?;
    let axes = principal_axes(&datasets)?;

    let mut series = Vec::new();
    for d in &datasets {
        if !d.groups.iter().any(|g| g.color_id == options.time_series_color) {
            continue;
        }
        match time_series(d, &options.time_series_color) {
            Ok(ts) => series.push(ts),
            Err(e @ (Error::MissingTimestamps(_) | Error::Degenerate(_) | Error::TooFewSamples { .. })) => {
                info!("skipping time series for {}: {e}", d.panel_id)
            }
            Err(e) => return Err(e),
        }
    }

    let white = match options.white {
        Some(w) => w,
        None => reference_white(records)?,
    };
    let within_histogram = delta_e_histogram(records, Grouping::WithinRegion, &white, options.bins)?;

    let between = if datasets.len() >= 2 {
        let stds = between_panel_std(records)?;
        let model = fit_noise_model(&stds)?;
        let flags = flag_deviating_colors(&stds, &options.between_model, options.deviation_factor);
        let histogram = delta_e_histogram(records, Grouping::BetweenPanels, &white, options.bins)?;
        Some(BetweenPanel {
            stds,
            model,
            flags,
            histogram,
        })
    } else {
        None
    };

    Ok(AnalysisReport {
        within_stds,
        k_table,
        within_model,
        axes,
        time_series: series,
        white,
        within_histogram,
        between,
        external_histogram: options.external_histogram.clone(),
        trend_alpha: options.trend_alpha,
    })
}

pub fn k_table_csv(table: &KTable) -> String {
    let mut out = String::from("direction");
    for p in &table.panels {
        let _ = write!(out, ",{}", p.panel_id);
    }
    out.push_str(",mean,std\n");
    for dir in Direction::ALL {
        out.push_str(dir.label());
        for v in table.row(dir) {
            let _ = write!(out, ",{v}");
        }
        let _ = writeln!(out, ",{},{}", table.mean[dir as usize], table.std[dir as usize]);
    }
    out
}

pub fn directional_std_csv(stds: &[DirectionalStd]) -> String {
    let mut out = String::from("panel_id,color_id,brightness,sum_xyz,sample_count");
    for dir in Direction::ALL {
        let _ = write!(out, ",sigma_{dir}");
    }
    out.push('\n');
    for d in stds {
        let _ = write!(out, "{},{},{},{},{}", d.panel_id, d.color_id, d.brightness, d.sum_xyz, d.sample_count);
        for s in d.sigma {
            let _ = write!(out, ",{s}");
        }
        out.push('\n');
    }
    out
}

pub fn histograms_csv(histograms: &[&DeltaEHistogram]) -> String {
    let mut out = String::from("grouping,bin_start,bin_end,count\n");
    for h in histograms {
        for (i, count) in h.counts.iter().enumerate() {
            let start = h.edges[i.min(h.edges.len() - 1)];
            let end = h.edges.get(i + 1).map_or("inf".to_string(), |e| e.to_string());
            let _ = writeln!(out, "{},{start},{end},{count}", h.grouping);
        }
    }
    out
}

pub fn time_series_csv(series: &[TimeSeries]) -> String {
    let mut out = String::from("panel_id,color_id,brightness,timestamp,sum_xyz\n");
    for s in series {
        for (t, v) in &s.points {
            let _ = writeln!(out, "{},{},{},{t},{v}", s.panel_id, s.color_id, s.brightness);
        }
    }
    out
}

pub fn trends_csv(series: &[TimeSeries], alpha: f64) -> String {
    let mut out = String::from("panel_id,color_id,brightness,slope,intercept,p_value,significant\n");
    for s in series {
        let p = s.p_value.map(|p| p.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{p},{}",
            s.panel_id,
            s.color_id,
            s.brightness,
            s.slope,
            s.intercept,
            s.significant(alpha)
        );
    }
    out
}

pub fn axes_csv(axes: &[AxisSummary]) -> String {
    let mut out = String::from("panel_id,color_id,brightness,angle_to_v1_deg,angle_to_y_deg\n");
    for a in axes {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            a.panel_id, a.color_id, a.brightness, a.angle_to_v1_deg, a.angle_to_y_deg
        );
    }
    out
}

pub fn flags_csv(flags: &[DeviationFlag]) -> String {
    let mut out = String::from("color_id,brightness,direction,observed,predicted\n");
    for f in flags {
        let _ = writeln!(out, "{},{},{},{},{}", f.color_id, f.brightness, f.direction, f.observed, f.predicted);
    }
    out
}

pub fn comparison_csv(cmp: &WeightingComparison) -> String {
    let mut out = String::from("source_panel,reference_panel,weighting,mean_abs_error");
    for c in &cmp.holdout_colors {
        let _ = write!(out, ",{c}");
    }
    out.push('\n');
    for pair in &cmp.pairs {
        for (label, eval) in [("proposed", &pair.proposed), ("uniform", &pair.uniform)] {
            let _ = write!(out, "{},{},{label},{}", cmp.source_panel, pair.reference_panel, eval.mean);
            for e in &eval.per_pair {
                let _ = write!(out, ",{}", e.abs_error);
            }
            out.push('\n');
        }
    }
    out
}

/// Markdown table of proposed vs uniform holdout errors.
pub fn comparison_markdown(cmp: &WeightingComparison) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "Source panel `{}`, fit on {}, evaluated on {} (brightness {}).\n",
        cmp.source_panel,
        cmp.fit_colors.join("/"),
        cmp.holdout_colors.join("/"),
        cmp.brightness
    );
    out.push_str("| reference | proposed | uniform | proposed better |\n|---|---|---|---|\n");
    for p in &cmp.pairs {
        let _ = writeln!(
            out,
            "| {} | {:.6} | {:.6} | {} |",
            p.reference_panel,
            p.proposed.mean,
            p.uniform.mean,
            if p.proposed_wins() { "yes" } else { "no" }
        );
    }
    let _ = writeln!(
        out,
        "\nProposed weighting has the lower mean absolute XYZ error in {} of {} pairs.",
        cmp.wins(),
        cmp.pairs.len()
    );
    out
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

pub struct Series<'a> {
    pub label: &'a str,
    pub points: Vec<(f64, f64)>,
    /// Draws `y = slope · x` across the plot when set.
    pub slope: Option<f64>,
    pub connect: bool,
}

/// Minimal standalone SVG scatter/line chart.
pub fn svg_chart(title: &str, x_label: &str, y_label: &str, series: &[Series<'_>]) -> String {
    let (w, h, left, right, top, bottom) = (640.0, 420.0, 70.0, 150.0, 40.0, 50.0);
    let all = series.iter().flat_map(|s| s.points.iter());
    let (mut x_max, mut y_max) = all.fold((0.0f64, 0.0f64), |(x, y), p| (x.max(p.0), y.max(p.1)));
    let x_min = series
        .iter()
        .flat_map(|s| s.points.iter())
        .fold(f64::INFINITY, |m, p| m.min(p.0))
        .min(0.0);
    if x_max <= x_min {
        x_max = x_min + 1.0;
    }
    if y_max <= 0.0 {
        y_max = 1.0;
    }
    y_max *= 1.05;
    let pw = w - left - right;
    let ph = h - top - bottom;
    let sx = |x: f64| left + (x - x_min) / (x_max - x_min) * pw;
    let sy = |y: f64| top + ph - y / y_max * ph;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, left + pw / 2.0, escape(title));
    let _ = writeln!(
        svg,
        r#"<path d="M{left} {top} V{} H{}" fill="none" stroke="black"/>"#,
        top + ph,
        left + pw
    );
    for i in 0..=4 {
        let fx = x_min + (x_max - x_min) * i as f64 / 4.0;
        let fy = y_max * i as f64 / 4.0;
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, sx(fx), top + ph + 16.0, tick(fx));
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, left - 6.0, sy(fy) + 4.0, tick(fy));
    }
    let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, left + pw / 2.0, h - 10.0, escape(x_label));
    let _ = writeln!(
        svg,
        r#"<text transform="translate(16 {:.1}) rotate(-90)" text-anchor="middle">{}</text>"#,
        top + ph / 2.0,
        escape(y_label)
    );
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if s.connect && s.points.len() > 1 {
            let d: Vec<String> = s.points.iter().map(|p| format!("{:.2},{:.2}", sx(p.0), sy(p.1))).collect();
            let _ = writeln!(svg, r#"<polyline points="{}" fill="none" stroke="{color}"/>"#, d.join(" "));
        } else {
            for p in &s.points {
                let _ = writeln!(svg, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}"/>"#, sx(p.0), sy(p.1));
            }
        }
        if let Some(k) = s.slope {
            let x_end = if k * x_max > y_max { y_max / k } else { x_max };
            let _ = writeln!(
                svg,
                r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-dasharray="4 3"/>"#,
                sx(0.0f64.max(x_min)),
                sy(k * 0.0f64.max(x_min)),
                sx(x_end),
                sy(k * x_end)
            );
        }
        let ly = top + 14.0 + 18.0 * i as f64;
        let _ = writeln!(svg, r#"<rect x="{}" y="{}" width="10" height="10" fill="{color}"/>"#, w - right + 14.0, ly - 9.0);
        let _ = writeln!(svg, r#"<text x="{}" y="{ly}">{}</text>"#, w - right + 30.0, escape(s.label));
    }
    svg.push_str("</svg>\n");
    svg
}

fn tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 100.0 {
        format!("{v:.0}")
    } else if v.abs() >= 1.0 {
        format!("{v:.2}")
    } else {
        format!("{v:.3e}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Directional spread against X+Y+Z with the fitted through-origin lines.
pub fn std_curve_svg(title: &str, stds: &[DirectionalStd], model: &NoiseModel) -> String {
    let fits = model.fit.as_ref().map(|f| f.fits.clone()).unwrap_or_default();
    let series: Vec<Series<'_>> = Direction::ALL
        .iter()
        .map(|&dir| Series {
            label: dir.label(),
            points: stds.iter().map(|d| (d.sum_xyz, d.get(dir))).collect(),
            slope: fits.iter().find(|f| f.direction == dir).map(|f| f.k),
            connect: false,
        })
        .collect();
    svg_chart(title, "X+Y+Z", "standard deviation", &series)
}

pub fn histogram_svg(histograms: &[&DeltaEHistogram]) -> String {
    let series: Vec<Series<'_>> = histograms
        .iter()
        .map(|h| {
            let total = h.total().max(1) as f64;
            let points = h
                .counts
                .iter()
                .zip(h.edges.windows(2))
                .map(|(c, e)| (0.5 * (e[0] + e[1]), *c as f64 / total))
                .collect();
            Series {
                label: h.grouping.label(),
                points,
                slope: None,
                connect: true,
            }
        })
        .collect();
    svg_chart("ΔE (CIE76) histograms", "ΔE", "fraction of measurements", &series)
}

pub fn time_series_svg(series: &[TimeSeries]) -> String {
    let s: Vec<Series<'_>> = series
        .iter()
        .map(|t| Series {
            label: &t.panel_id,
            points: t.points.clone(),
            slope: None,
            connect: true,
        })
        .collect();
    svg_chart("X+Y+Z over time", "time (s)", "X+Y+Z", &s)
}

/// Writes every table (and optionally the plots) into `dir`; returns the written paths.
pub fn write_analysis(dir: &Path, report: &AnalysisReport, svg: bool) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files: Vec<(&str, String)> = vec![
        ("k_table.csv", k_table_csv(&report.k_table)),
        ("within_panel_std.csv", directional_std_csv(&report.within_stds)),
        ("principal_axes.csv", axes_csv(&report.axes)),
        ("time_series.csv", time_series_csv(&report.time_series)),
        ("trends.csv", trends_csv(&report.time_series, report.trend_alpha)),
    ];
    let mut hists = vec![&report.within_histogram];
    if let Some(b) = &report.between {
        hists.push(&b.histogram);
        files.push(("between_panel_std.csv", directional_std_csv(&b.stds)));
        files.push(("deviating_colors.csv", flags_csv(&b.flags)));
    }
    if let Some(e) = &report.external_histogram {
        hists.push(e);
    }
    files.push(("delta_e_histograms.csv", histograms_csv(&hists)));
    if svg {
        files.push((
            "within_panel_std.svg",
            std_curve_svg("Within-panel directional spread", &report.within_stds, &report.within_model),
        ));
        if let Some(b) = &report.between {
            files.push((
                "between_panel_std.svg",
                std_curve_svg("Between-panel directional spread", &b.stds, &b.model),
            ));
        }
        files.push(("delta_e_histograms.svg", histogram_svg(&hists)));
        if !report.time_series.is_empty() {
            files.push(("time_series.svg", time_series_svg(&report.time_series)));
        }
    }
    files
        .into_iter()
        .map(|(name, contents)| {
            let path = dir.join(name);
            write_atomic(&path, contents.as_bytes())?;
            Ok(path)
        })
        .collect()
}

fn model_line(model: &NoiseModel) -> String {
    let k = |d: Direction| {
        model
            .fit
            .as_ref()
            .and_then(|f| f.fits.iter().find(|r| r.direction == d))
            .map_or(f64::NAN, |r| r.k * 1000.0)
    };
    format!(
        "a = {:.6e}, ratio = {:.3} (k×1000: v1 {:.3}, v2 {:.3}, v3 {:.3})",
        model.a(),
        model.ratio(),
        k(Direction::V1),
        k(Direction::V2),
        k(Direction::V3)
    )
}

/// Markdown summary of an analysis run, stamped with the configuration hash and seed.
pub fn summary_markdown(
    report: &AnalysisReport,
    comparison: Option<&WeightingComparison>,
    config_hash: &str,
    seed: u64,
) -> String {
    let mut out = String::from("# Tristimulus noise report\n\n");
    let _ = writeln!(out, "- config hash: `{config_hash}`\n- seed: {seed}\n");

    out.push_str("## Noise model\n\n");
    let _ = writeln!(out, "- within panel: {}", model_line(&report.within_model));
    if let Some(b) = &report.between {
        let _ = writeln!(out, "- between panels: {}", model_line(&b.model));
        let within = report.within_model.a() * report.within_model.ratio();
        let between = b.model.a() * b.model.ratio();
        let _ = writeln!(out, "- between/within k_v1 factor: {:.3}", between / within);
        if !b.flags.is_empty() {
            let colors: Vec<String> = b.flags.iter().map(|f| format!("{} ({})", f.color_id, f.direction)).collect();
            let _ = writeln!(out, "- colors above the perpendicular-spread threshold: {}", colors.join(", "));
        }
    }
    out.push_str("\n## Per-panel k × 1000\n\n| direction | mean | std |\n|---|---|---|\n");
    for dir in Direction::ALL {
        let _ = writeln!(
            out,
            "| {dir} | {:.3} | {:.3} |",
            report.k_table.mean[dir as usize], report.k_table.std[dir as usize]
        );
    }
    out.push_str("\n## Principal axes\n\n");
    match (report.mean_angle_to_v1(), report.mean_angle_to_y()) {
        (Some(v1), Some(y)) => {
            let _ = writeln!(
                out,
                "Mean angle to the XYZ direction {v1:.2}°, to the Y axis {y:.2}° over {} groups.",
                report.axes.len()
            );
        }
        _ => out.push_str("No group has three or more repeats.\n"),
    }
    out.push_str("\n## Drift\n\n");
    let _ = writeln!(
        out,
        "{} of {} time series show a significant linear trend at α = {}.",
        report.significant_trends(),
        report.time_series.len(),
        report.trend_alpha
    );
    out.push_str("\n## ΔE (CIE76)\n\n");
    let w = report.white;
    let _ = writeln!(out, "Reference white XYZ = ({:.4}, {:.4}, {:.4}).\n", w.x(), w.y(), w.z());
    let mut hists = vec![&report.within_histogram];
    if let Some(b) = &report.between {
        hists.push(&b.histogram);
    }
    if let Some(e) = &report.external_histogram {
        hists.push(e);
    }
    for h in hists {
        let _ = writeln!(out, "- {}: mean {:.4} over {} values", h.grouping, h.mean, h.total());
    }
    let _ = writeln!(out, "- just-noticeable difference: {DELTA_E_JND}");
    if let Some(cmp) = comparison {
        out.push_str("\n## Calibration\n\n");
        out.push_str(&comparison_markdown(cmp));
    }
    out
}
