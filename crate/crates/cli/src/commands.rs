//! Command-line verbs.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use ehe_core::events::compute_threshold;
use ehe_core::mcmc::{fit, fit_baseline, PosteriorChain, SamplerConfig, TwoStateChain};
use ehe_core::model::{ModelConfig, ModelData, ParameterState};
use ehe_core::predict::scenario::{Scenario, ScenarioConfig};
use ehe_core::predict::{
    resolve_sites, score_held_out, simulate_dataset, summarize_ehe, SimulationSettings, SiteTarget,
};
use ehe_core::series::StationSeries;
use ehe_core::spatial::Site;
use serde::Serialize;

use crate::chain_io::{read_chain, write_chain, ChainKind, FieldsFormat};
use crate::config::Settings;
use crate::io::{read_thresholds, write_thresholds, Dataset, ThresholdRow};
use crate::manifest::{check_out_file, prepare_out_dir, ManifestBuilder};
use crate::report::{
    write_acceptance, write_deep_persistence, write_diagnostics, write_ehe_summary, write_error_rates,
    write_fit_report, write_trajectories, StationScores,
};

/// Offset between the prediction seed and its kriging streams.
const KRIGING_STREAM_OFFSET: u64 = 0x6b72_6967;

#[derive(Debug, Parser)]
#[command(name = "ehe", version, about = "Two-state threshold-switching models of daily maximum temperature")]
pub struct Cli {
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, env = "EHE_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-station exceedance thresholds from a baseline period.
    Thresholds(ThresholdsArgs),
    /// Fit the two-state model and write the posterior chain.
    Fit(FitArgs),
    /// Leave-out validation against the single-state baseline.
    Validate(ValidateArgs),
    /// Posterior-predictive EHE summaries at a fitted or new site.
    Predict(PredictArgs),
    /// Inference tables from a fitted chain.
    Report(ReportArgs),
    /// Synthetic data from the demo design or a stored parameter state.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub stations: PathBuf,
    #[arg(long)]
    pub obs: PathBuf,
}

#[derive(Debug, Args)]
pub struct ThresholdsArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub baseline_start: i32,
    #[arg(long)]
    pub baseline_end: i32,
    #[arg(long, value_delimiter = ',', default_value = "6,7,8")]
    pub months: Vec<u32>,
    #[arg(long, default_value_t = 0.95)]
    pub p: f64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub thresholds: PathBuf,
    /// TOML file of settings; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub settings: Settings,
    /// Store the spatial fields as little-endian f64 instead of CSV.
    #[arg(long)]
    pub binary_fields: bool,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub thresholds: PathBuf,
    /// Station ids to hold out, comma-separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub holdout: Vec<String>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub settings: Settings,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Directory written by `fit`.
    #[arg(long)]
    pub chain: PathBuf,
    /// Predict at a fitted station.
    #[arg(long, conflicts_with_all = ["lon", "lat", "elev", "q"])]
    pub station: Option<String>,
    #[arg(long, requires_all = ["lat", "elev", "q"], allow_negative_numbers = true)]
    pub lon: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub lat: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub elev: Option<f64>,
    /// Threshold (°C) at the new site.
    #[arg(long, allow_negative_numbers = true)]
    pub q: Option<f64>,
    #[arg(long)]
    pub start: NaiveDate,
    #[arg(long)]
    pub end: NaiveDate,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub settings: Settings,
    /// Sanity box min_lon,min_lat,max_lon,max_lat; defaults to the fitted
    /// stations' extent padded by one degree.
    #[arg(long, value_delimiter = ',', num_args = 4, allow_negative_numbers = true)]
    pub bbox: Option<Vec<f64>>,
    /// Also write every simulated trajectory.
    #[arg(long)]
    pub trajectories: bool,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub chain: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// TOML file of demo-design settings.
    #[arg(long, conflicts_with = "params")]
    pub scenario: Option<PathBuf>,
    /// Chain directory whose draw supplies the parameter state and sites.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long, default_value_t = 0, requires = "params")]
    pub draw: usize,
    /// Defaults to January 1 of the first fitted or design year.
    #[arg(long)]
    pub start: Option<NaiveDate>,
    /// Defaults to December 31 of the last fitted or design year.
    #[arg(long)]
    pub end: Option<NaiveDate>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("cannot configure the thread pool")?;
    }
    match cli.command {
        Command::Thresholds(a) => thresholds(a),
        Command::Fit(a) => fit_cmd(a),
        Command::Validate(a) => validate(a),
        Command::Predict(a) => predict(a),
        Command::Report(a) => report(a),
        Command::Simulate(a) => simulate(a),
    }
}

#[derive(Serialize)]
struct RunConfig<'a> {
    settings: &'a Settings,
    sampler: &'a SamplerConfig,
    model: &'a ModelConfig,
}

fn thresholds(a: ThresholdsArgs) -> Result<()> {
    check_out_file(&a.out, a.force)?;
    let data = Dataset::read(&a.data.stations, &a.data.obs)?;
    let series = data.series()?;
    let baseline = (a.baseline_start, a.baseline_end);
    let mut rows = Vec::new();
    for st in &data.stations {
        let row = match series.iter().find(|s| s.station.id == st.id) {
            Some(s) => match compute_threshold(s, baseline, &a.months, a.p) {
                Ok(t) => ThresholdRow {
                    station_id: st.id.clone(),
                    q: Some(t.q),
                    n_baseline_days: t.n_baseline_days,
                },
                Err(e) => {
                    eprintln!("warning: {}: {e}", st.id);
                    ThresholdRow {
                        station_id: st.id.clone(),
                        q: None,
                        n_baseline_days: 0,
                    }
                }
            },
            None => {
                eprintln!("warning: {}: no observations", st.id);
                ThresholdRow {
                    station_id: st.id.clone(),
                    q: None,
                    n_baseline_days: 0,
                }
            }
        };
        rows.push(row);
    }
    let file = File::create(&a.out).with_context(|| format!("cannot create {}", a.out.display()))?;
    write_thresholds(&rows, BufWriter::new(file))?;
    if rows.iter().all(|r| r.q.is_none()) {
        bail!("no station has baseline data in {}-{}", a.baseline_start, a.baseline_end);
    }
    Ok(())
}

/// Series and thresholds of every station with data; a station whose
/// threshold is missing or flagged is an error.
fn load_model_inputs(data: &DataArgs, thresholds: &Path) -> Result<(Vec<StationSeries>, Vec<ThresholdRow>)> {
    let dataset = Dataset::read(&data.stations, &data.obs)?;
    let series = dataset.series()?;
    let rows = read_thresholds(thresholds)?;
    for s in &series {
        match rows.iter().find(|r| r.station_id == s.station.id) {
            Some(r) if r.q.is_some() => {}
            Some(_) => bail!("station {} has a flagged (empty) threshold", s.station.id),
            None => bail!("no threshold for station {}", s.station.id),
        }
    }
    Ok((series, rows))
}

fn model_data(series: &[StationSeries], rows: &[ThresholdRow], model: &ModelConfig) -> Result<ModelData> {
    let thresholds: Vec<_> = rows.iter().filter_map(ThresholdRow::threshold).collect();
    let stations: Vec<_> = series.iter().map(|s| s.station.clone()).collect();
    Ok(ModelData::new(series, &thresholds, model.resolve_scaling(&stations))?)
}

fn fit_cmd(a: FitArgs) -> Result<()> {
    let settings = Settings::layered(a.config.as_deref(), &a.settings)?;
    let sampler = settings.sampler()?;
    let model = settings.model()?;
    let (series, rows) = load_model_inputs(&a.data, &a.thresholds)?;
    let data = model_data(&series, &rows, &model)?;
    prepare_out_dir(&a.out, a.force)?;
    let mut manifest = ManifestBuilder::start("fit");
    for p in [&a.data.stations, &a.data.obs, &a.thresholds] {
        manifest.input(p)?;
    }
    if let Some(p) = &a.config {
        manifest.input(p)?;
    }
    manifest.seed(sampler.seed);
    manifest.config(&RunConfig {
        settings: &settings,
        sampler: &sampler,
        model: &model,
    })?;
    let chain = fit(&data, &model, &sampler).context("fit failed")?;
    let format = if a.binary_fields { FieldsFormat::Binary } else { FieldsFormat::Csv };
    write_chain(&chain, ChainKind::TwoState, format, &a.out.join("chain"))?;
    write_diagnostics(&chain, &a.out.join("diagnostics.csv"))?;
    write_acceptance(&chain, &a.out.join("acceptance.csv"))?;
    crate::report::write_coefficients(&chain, &a.out.join("coefficients.csv"))?;
    manifest.finish(&a.out)?;
    Ok(())
}

fn validate(a: ValidateArgs) -> Result<()> {
    let settings = Settings::layered(a.config.as_deref(), &a.settings)?;
    let sampler = settings.sampler()?;
    let model = settings.model()?;
    let window = settings.window()?;
    let (series, rows) = load_model_inputs(&a.data, &a.thresholds)?;
    for id in &a.holdout {
        if !series.iter().any(|s| &s.station.id == id) {
            bail!("unknown or empty held-out station {id}");
        }
    }
    let (held, train): (Vec<_>, Vec<_>) = series.into_iter().partition(|s| a.holdout.contains(&s.station.id));
    if train.len() < 2 {
        bail!("at least two training stations must remain after holding out {}", a.holdout.join(","));
    }
    let data = model_data(&train, &rows, &model)?;
    prepare_out_dir(&a.out, a.force)?;
    let mut manifest = ManifestBuilder::start("validate");
    for p in [&a.data.stations, &a.data.obs, &a.thresholds] {
        manifest.input(p)?;
    }
    if let Some(p) = &a.config {
        manifest.input(p)?;
    }
    manifest.seed(sampler.seed);
    manifest.config(&RunConfig {
        settings: &settings,
        sampler: &sampler,
        model: &model,
    })?;
    let two_state = fit(&data, &model, &sampler).context("two-state fit failed")?;
    let baseline = fit_baseline(&data, &model, &sampler).context("baseline fit failed")?;
    let mut scores = Vec::new();
    for s in &held {
        let q = rows
            .iter()
            .find(|r| r.station_id == s.station.id)
            .and_then(|r| r.q)
            .expect("checked on load");
        let (t, b) = score_held_out(&two_state, &baseline, s, q, &window)?;
        scores.push(StationScores {
            station_id: s.station.id.clone(),
            two_state: t,
            baseline: b,
        });
    }
    write_error_rates(&scores, &a.out.join("error_rates.csv"))?;
    write_deep_persistence(&scores, &a.out.join("deep_persistence.csv"))?;
    write_diagnostics(&two_state, &a.out.join("diagnostics_two_state.csv"))?;
    write_diagnostics(&baseline, &a.out.join("diagnostics_baseline.csv"))?;
    manifest.finish(&a.out)?;
    Ok(())
}

fn warn_outside_bbox(chain: &TwoStateChain, site: &Site, bbox: Option<&[f64]>) {
    let (lo_lon, lo_lat, hi_lon, hi_lat) = match bbox {
        Some(b) => (b[0], b[1], b[2], b[3]),
        None => {
            let sites = &chain.layout.sites;
            let fold = |f: fn(f64, f64) -> f64, init: f64, g: fn(&Site) -> f64| sites.iter().map(g).fold(init, f);
            (
                fold(f64::min, f64::INFINITY, |s| s.lon) - 1.0,
                fold(f64::min, f64::INFINITY, |s| s.lat) - 1.0,
                fold(f64::max, f64::NEG_INFINITY, |s| s.lon) + 1.0,
                fold(f64::max, f64::NEG_INFINITY, |s| s.lat) + 1.0,
            )
        }
    };
    if !(lo_lon..=hi_lon).contains(&site.lon) || !(lo_lat..=hi_lat).contains(&site.lat) {
        eprintln!(
            "warning: site ({}, {}) lies outside [{lo_lon}, {hi_lon}] x [{lo_lat}, {hi_lat}]; predictions extrapolate",
            site.lon, site.lat
        );
    }
}

fn predict(a: PredictArgs) -> Result<()> {
    if a.end < a.start {
        bail!("end date {} precedes start date {}", a.end, a.start);
    }
    let settings = Settings::layered(a.config.as_deref(), &a.settings)?;
    let summary_cfg = settings.summary()?;
    let chain: TwoStateChain = read_chain(&a.chain, ChainKind::TwoState)?;
    if chain.draws.is_empty() {
        bail!("chain in {} has no draws", a.chain.display());
    }
    let seed = settings.seed.unwrap_or(chain.sampler.seed);
    let target = match (&a.station, a.lon, a.lat, a.elev, a.q) {
        (Some(id), ..) => SiteTarget::Observed(
            chain
                .layout
                .station_index(id)
                .ok_or_else(|| anyhow!("station {id} is not part of the fitted chain"))?,
        ),
        (None, Some(lon), Some(lat), Some(elev), Some(q)) => {
            let site = Site::new(lon, lat, elev);
            if !(-180.0..=180.0).contains(&lon) || !(-90.0..=90.0).contains(&lat) || !elev.is_finite() {
                bail!("invalid coordinates ({lon}, {lat}, {elev})");
            }
            warn_outside_bbox(&chain, &site, a.bbox.as_deref());
            SiteTarget::New { site, q }
        }
        _ => bail!("give either --station or all of --lon, --lat, --elev and --q"),
    };
    prepare_out_dir(&a.out, a.force)?;
    let mut manifest = ManifestBuilder::start("predict");
    manifest.input(&a.chain)?;
    if let Some(p) = &a.config {
        manifest.input(p)?;
    }
    manifest.seed(seed);
    manifest.config(&(&settings, &summary_cfg, &target))?;
    let sites = resolve_sites(&chain, &target, seed.wrapping_add(KRIGING_STREAM_OFFSET))?;
    let (summary, paths) = summarize_ehe(&chain, &sites, a.start, a.end, &summary_cfg, seed)?;
    if summary.extrapolated {
        eprintln!("warning: dates outside the fitted years use annual effects drawn from their prior");
    }
    write_ehe_summary(&summary, &a.out)?;
    if a.trajectories {
        write_trajectories(&paths, &a.out.join("trajectories.csv"))?;
    }
    manifest.finish(&a.out)?;
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let chain: TwoStateChain = read_chain(&a.chain, ChainKind::TwoState)?;
    if chain.draws.is_empty() {
        bail!("chain in {} has no draws", a.chain.display());
    }
    prepare_out_dir(&a.out, a.force)?;
    let mut manifest = ManifestBuilder::start("report");
    manifest.input(&a.chain)?;
    write_fit_report(&chain, &a.out)?;
    manifest.finish(&a.out)?;
    Ok(())
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let (params, layout, model) = match &a.params {
        Some(dir) => {
            let chain: PosteriorChain<ParameterState> = read_chain(dir, ChainKind::TwoState)?;
            let params = chain
                .draws
                .get(a.draw)
                .cloned()
                .ok_or_else(|| anyhow!("draw {} out of range ({} draws)", a.draw, chain.draws.len()))?;
            (params, chain.layout, chain.model)
        }
        None => {
            let cfg = match &a.scenario {
                Some(p) => {
                    let text = std::fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
                    toml::from_str::<ScenarioConfig>(&text)
                        .with_context(|| format!("invalid scenario in {}", p.display()))?
                }
                None => ScenarioConfig::default(),
            };
            let model = ModelConfig::default();
            let sc = Scenario::new(&cfg, &model)?;
            (sc.params, sc.layout, model)
        }
    };
    let year_start = NaiveDate::from_ymd_opt(layout.first_year, 1, 1).expect("valid year");
    let year_end =
        NaiveDate::from_ymd_opt(layout.first_year + layout.n_years as i32 - 1, 12, 31).expect("valid year");
    let start = a.start.unwrap_or(year_start);
    let end = a.end.unwrap_or(year_end);
    if end < start {
        bail!("end date {end} precedes start date {start}");
    }
    prepare_out_dir(&a.out, a.force)?;
    let mut manifest = ManifestBuilder::start("simulate");
    if let Some(p) = a.params.as_ref().or(a.scenario.as_ref()) {
        manifest.input(p)?;
    }
    manifest.seed(a.seed);
    let settings = SimulationSettings::new(&layout, &model);
    let series = simulate_dataset(&params, &layout, &settings, start, end, a.seed)?;
    let dataset = Dataset::from_series(&series);
    dataset.write_stations(BufWriter::new(File::create(a.out.join("stations.csv"))?))?;
    dataset.write_observations(BufWriter::new(File::create(a.out.join("obs.csv"))?))?;
    let rows: Vec<ThresholdRow> = layout
        .stations
        .iter()
        .zip(&layout.thresholds)
        .map(|(s, q)| ThresholdRow {
            station_id: s.id.clone(),
            q: Some(*q),
            n_baseline_days: 0,
        })
        .collect();
    write_thresholds(&rows, BufWriter::new(File::create(a.out.join("thresholds.csv"))?))?;
    let truth = PosteriorChain {
        draws: vec![params],
        acceptance: Vec::new(),
        sampler: SamplerConfig::default(),
        model,
        layout,
    };
    write_chain(&truth, ChainKind::TwoState, FieldsFormat::Csv, &a.out.join("truth"))?;
    manifest.finish(&a.out)?;
    Ok(())
}
