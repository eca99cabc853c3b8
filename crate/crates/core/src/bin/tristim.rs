use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use tristim::analysis::{between_panel_std, within_panel_stds, PanelDataset};
use tristim::calibration::{evaluate, fit_matrix, Weighting};
use tristim::config::ScenarioConfig;
use tristim::io::{
    read_external_histogram, read_matrix, read_measurements, read_model, write_atomic, write_matrix,
    write_measurements, write_model, MatrixDocument,
};
use tristim::noise_model::{fit_noise_model, NoiseModel};
use tristim::protocol::{compare_weightings, measurement_pairs, ProtocolOptions, WeightingComparison};
use tristim::record::MeasurementRecord;
use tristim::report::{analyze, comparison_csv, comparison_markdown, summary_markdown, write_analysis, AnalysisOptions};
use tristim::simulator::run_campaign;
use tristim::{Error, Result};

/// Noise modeling, simulation and weighted calibration of display XYZ measurements.
///
/// Exit codes: 0 success, 1 I/O failure, 2 parse error (including bad
/// command-line usage), 3 validation error, 4 numerical failure.
#[derive(Parser, Debug)]
#[command(name = "tristim", version)]
struct Cli {
    /// Scenario configuration (TOML). Defaults apply to every missing field.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Master seed; overrides the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a measurement campaign and write it as CSV.
    Simulate(SimulateArgs),
    /// Fit the noise model (a, ratio) to measured spreads.
    FitNoise(FitNoiseArgs),
    /// Write per-panel tables, ΔE histograms, drift tests and plots.
    Analyze(AnalyzeArgs),
    /// Fit a calibration matrix mapping one panel onto another.
    Calibrate(CalibrateArgs),
    /// Compare proposed and uniform weighting on holdout colors.
    Evaluate(EvaluateArgs),
    /// Run the whole pipeline and write an aggregate report.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct CampaignOverrides {
    /// Number of panels.
    #[arg(long)]
    panels: Option<usize>,
    /// Repeats per color and brightness.
    #[arg(long)]
    repeats: Option<usize>,
    /// Brightness levels in (0, 1], comma separated.
    #[arg(long, value_delimiter = ',')]
    brightness: Option<Vec<f64>>,
    /// Seconds between consecutive measurements.
    #[arg(long)]
    interval: Option<f64>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    campaign: CampaignOverrides,
    /// Output measurement CSV.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Scope {
    /// Repeat-to-repeat spread on each panel.
    Within,
    /// Panel-to-panel spread of the same color.
    Between,
}

#[derive(Args, Debug)]
struct FitNoiseArgs {
    /// Measurement CSV.
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "within")]
    scope: Scope,
    /// Output model document.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    /// Measurement CSV.
    #[arg(long, short)]
    input: PathBuf,
    /// Directory for tables and plots.
    #[arg(long, short)]
    out_dir: PathBuf,
    /// Skip SVG plots.
    #[arg(long)]
    no_svg: bool,
}

#[derive(Args, Debug)]
struct PanelSelection {
    /// Panel whose measurements are mapped; defaults to the configured or first panel.
    #[arg(long)]
    source: Option<String>,
    /// Noise model document used for weighting; defaults to the configured between-panel model.
    #[arg(long, value_name = "FILE")]
    model: Option<PathBuf>,
    /// Brightness level of the calibration measurements.
    #[arg(long)]
    brightness: Option<f64>,
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    /// Measurement CSV.
    #[arg(long, short)]
    input: PathBuf,
    #[command(flatten)]
    panels: PanelSelection,
    /// Target panel; defaults to the first panel other than the source.
    #[arg(long)]
    reference: Option<String>,
    /// Fit colors, comma separated; defaults to the configured fit set (red, green, blue, white).
    #[arg(long, value_delimiter = ',')]
    colors: Option<Vec<String>>,
    #[arg(long, default_value = "proposed", value_parser = parse_weighting)]
    weighting: Weighting,
    /// Output matrix document.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Measurement CSV.
    #[arg(long, short)]
    input: PathBuf,
    #[command(flatten)]
    panels: PanelSelection,
    /// Fit colors, comma separated; defaults to the configured fit set.
    #[arg(long, value_delimiter = ',')]
    fit: Option<Vec<String>>,
    /// Holdout colors, comma separated; defaults to the configured holdout set (cyan, magenta, yellow).
    #[arg(long, value_delimiter = ',')]
    holdout: Option<Vec<String>>,
    /// Evaluate this matrix document instead of fitting both weightings per panel pair.
    #[arg(long, value_name = "FILE", requires = "reference")]
    matrix: Option<PathBuf>,
    /// Target panel of `--matrix`.
    #[arg(long)]
    reference: Option<String>,
    /// Also write the comparison as CSV.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Measurement CSV; when absent the configured campaign is simulated.
    #[arg(long, short)]
    input: Option<PathBuf>,
    #[command(flatten)]
    campaign: CampaignOverrides,
    /// Output directory.
    #[arg(long, short)]
    out_dir: PathBuf,
    /// Skip SVG plots.
    #[arg(long)]
    no_svg: bool,
}

fn parse_weighting(s: &str) -> std::result::Result<Weighting, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn load_config(cli: &Cli, overrides: Option<&CampaignOverrides>) -> Result<ScenarioConfig> {
    let mut config = match &cli.config {
        Some(path) => ScenarioConfig::load(path)?,
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(o) = overrides {
        if let Some(n) = o.panels {
            config.campaign.panels = n;
        }
        if let Some(n) = o.repeats {
            config.campaign.repeats = n;
        }
        if let Some(b) = &o.brightness {
            config.campaign.brightness = b.clone();
            if !b.contains(&config.calibration.brightness) {
                config.calibration.brightness = b.iter().copied().fold(f64::MIN, f64::max);
            }
        }
        if let Some(t) = o.interval {
            config.campaign.measurement_interval = t;
        }
    }
    config.validate()?;
    Ok(config)
}

fn weighting_model(config: &ScenarioConfig, path: Option<&Path>) -> Result<NoiseModel> {
    match path {
        Some(p) => read_model(p),
        None => config.model.between(),
    }
}

fn panel_ids(records: &[MeasurementRecord]) -> BTreeSet<&str> {
    records.iter().map(|r| r.panel_id.as_str()).collect()
}

fn resolve_source(config: &ScenarioConfig, sel: &PanelSelection, records: &[MeasurementRecord]) -> Result<String> {
    let panels = panel_ids(records);
    match sel.source.as_ref().or(config.calibration.source_panel.as_ref()) {
        Some(p) if panels.contains(p.as_str()) => Ok(p.clone()),
        Some(p) => Err(Error::Validation(format!("source panel `{p}` not found"))),
        None => panels
            .first()
            .map(|p| p.to_string())
            .ok_or(Error::Empty("no measurements")),
    }
}

fn analysis_options(config: &ScenarioConfig) -> Result<AnalysisOptions> {
    let external_histogram = match &config.report.external_histogram {
        Some(p) => Some(read_external_histogram(p)?),
        None => None,
    };
    Ok(AnalysisOptions {
        bins: config.report.bins(),
        between_model: config.model.between()?,
        deviation_factor: config.report.deviation_factor,
        trend_alpha: config.report.trend_alpha,
        time_series_color: config.report.time_series_color.clone(),
        white: None,
        external_histogram,
    })
}

fn protocol_options(config: &ScenarioConfig, source: String, brightness: Option<f64>) -> ProtocolOptions {
    ProtocolOptions {
        source_panel: Some(source),
        fit_colors: config.calibration.fit.clone(),
        holdout_colors: config.calibration.holdout.clone(),
        brightness: brightness.unwrap_or(config.calibration.brightness),
    }
}

fn simulate(cli: &Cli, args: &SimulateArgs) -> Result<()> {
    let config = load_config(cli, Some(&args.campaign))?;
    let campaign = run_campaign(&config.campaign_spec()?)?;
    write_measurements(&args.out, &campaign.records)?;
    println!(
        "wrote {} measurements from {} panels to {} (seed {}, {} clamped)",
        campaign.records.len(),
        campaign.panels.len(),
        args.out.display(),
        config.seed,
        campaign.clamped_measurements
    );
    Ok(())
}

fn fit_noise(cli: &Cli, args: &FitNoiseArgs) -> Result<()> {
    load_config(cli, None)?;
    let records = read_measurements(&args.input)?;
    let stds = match args.scope {
        Scope::Within => within_panel_stds(&PanelDataset::from_records(&records))?,
        Scope::Between => between_panel_std(&records)?,
    };
    let model = fit_noise_model(&stds)?;
    write_model(&args.out, &model)?;
    println!(
        "a = {:.6e}, ratio = {:.4} from {} groups; wrote {}",
        model.a(),
        model.ratio(),
        stds.len(),
        args.out.display()
    );
    Ok(())
}

fn analyze_cmd(cli: &Cli, args: &AnalyzeArgs) -> Result<()> {
    let config = load_config(cli, None)?;
    let records = read_measurements(&args.input)?;
    let report = analyze(&records, &analysis_options(&config)?)?;
    let files = write_analysis(&args.out_dir, &report, config.report.svg && !args.no_svg)?;
    for f in files {
        println!("{}", f.display());
    }
    Ok(())
}

fn calibrate(cli: &Cli, args: &CalibrateArgs) -> Result<()> {
    let config = load_config(cli, None)?;
    let records = read_measurements(&args.input)?;
    let source = resolve_source(&config, &args.panels, &records)?;
    let reference = match &args.reference {
        Some(r) if panel_ids(&records).contains(r.as_str()) => r.clone(),
        Some(r) => return Err(Error::Validation(format!("reference panel `{r}` not found"))),
        None => panel_ids(&records)
            .into_iter()
            .find(|p| *p != source)
            .map(str::to_owned)
            .ok_or_else(|| Error::Validation("calibration needs a second panel".into()))?,
    };
    let colors = args.colors.clone().unwrap_or_else(|| config.calibration.fit.clone());
    let brightness = args.panels.brightness.unwrap_or(config.calibration.brightness);
    let pairs = measurement_pairs(&records, &source, &reference, &colors, brightness)?;
    let model = weighting_model(&config, args.panels.model.as_deref())?;
    let calib = fit_matrix(&pairs, &model, args.weighting)?;
    let mut doc = MatrixDocument::new(&calib);
    doc.source_panel = Some(source.clone());
    doc.reference_panel = Some(reference.clone());
    doc.fit_colors = colors;
    write_matrix(&args.out, &doc)?;
    info!("condition number {:.3e}", calib.condition_number);
    println!(
        "{} matrix {source} -> {reference} from {} colors; wrote {}",
        calib.weighting,
        calib.fit_pairs,
        args.out.display()
    );
    Ok(())
}

fn evaluate_cmd(cli: &Cli, args: &EvaluateArgs) -> Result<()> {
    let config = load_config(cli, None)?;
    let records = read_measurements(&args.input)?;
    let source = resolve_source(&config, &args.panels, &records)?;
    let mut options = protocol_options(&config, source, args.panels.brightness);
    if let Some(fit) = &args.fit {
        options.fit_colors = fit.clone();
    }
    if let Some(holdout) = &args.holdout {
        options.holdout_colors = holdout.clone();
    }

    if let (Some(path), Some(reference)) = (&args.matrix, &args.reference) {
        let doc = read_matrix(path)?;
        let source = doc.source_panel.clone().or(options.source_panel).unwrap_or_default();
        let pairs = measurement_pairs(&records, &source, reference, &options.holdout_colors, options.brightness)?;
        let eval = evaluate(&doc.calibration(), &pairs)?;
        let mut csv = String::from("color_id,abs_error\n");
        for e in &eval.per_pair {
            println!("{:<12} {:.6}", e.color_id, e.abs_error);
            csv.push_str(&format!("{},{}\n", e.color_id, e.abs_error));
        }
        println!("{:<12} {:.6}", "mean", eval.mean);
        if let Some(out) = &args.out {
            write_atomic(out, csv.as_bytes())?;
        }
        return Ok(());
    }

    let model = weighting_model(&config, args.panels.model.as_deref())?;
    let cmp = compare_weightings(&records, &options, &model)?;
    print!("{}", comparison_markdown(&cmp));
    if let Some(out) = &args.out {
        write_atomic(out, comparison_csv(&cmp).as_bytes())?;
    }
    Ok(())
}

fn report(cli: &Cli, args: &ReportArgs) -> Result<()> {
    let config = load_config(cli, Some(&args.campaign))?;
    std::fs::create_dir_all(&args.out_dir).map_err(|e| Error::Io {
        path: args.out_dir.clone(),
        source: e,
    })?;
    let records = match &args.input {
        Some(path) => read_measurements(path)?,
        None => {
            let campaign = run_campaign(&config.campaign_spec()?)?;
            write_measurements(&args.out_dir.join("measurements.csv"), &campaign.records)?;
            campaign.records
        }
    };
    let analysis = analyze(&records, &analysis_options(&config)?)?;
    write_analysis(&args.out_dir, &analysis, config.report.svg && !args.no_svg)?;
    write_model(&args.out_dir.join("within_model.toml"), &analysis.within_model)?;
    if let Some(b) = &analysis.between {
        write_model(&args.out_dir.join("between_model.toml"), &b.model)?;
    }

    let comparison: Option<WeightingComparison> = if panel_ids(&records).len() >= 2 {
        let source = resolve_source(
            &config,
            &PanelSelection {
                source: None,
                model: None,
                brightness: None,
            },
            &records,
        )?;
        let cmp = compare_weightings(&records, &protocol_options(&config, source, None), &config.model.between()?)?;
        write_atomic(&args.out_dir.join("calibration_comparison.csv"), comparison_csv(&cmp).as_bytes())?;
        Some(cmp)
    } else {
        None
    };

    let mut summary = summary_markdown(&analysis, comparison.as_ref(), &config.hash(), config.seed);
    summary.push_str("\n## Configuration\n\n```toml\n");
    summary.push_str(&config.to_toml());
    summary.push_str("```\n");
    let path = args.out_dir.join("summary.md");
    write_atomic(&path, summary.as_bytes())?;
    println!("wrote report to {}", path.display());
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate(a) => simulate(cli, a),
        Command::FitNoise(a) => fit_noise(cli, a),
        Command::Analyze(a) => analyze_cmd(cli, a),
        Command::Calibrate(a) => calibrate(cli, a),
        Command::Evaluate(a) => evaluate_cmd(cli, a),
        Command::Report(a) => report(cli, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let class = e.class();
            eprintln!("error[{}]: {e}", class.label());
            ExitCode::from(class.exit_code() as u8)
        }
    }
}
