//! Command-line toolkit for the three-layer recovery simulator.
//!
//! Verbs: `gen-synth` (synthetic inputs), `build-net` (network summary),
//! `fit-curve` (logistic curve fit), `fit-dyn` (MAP fit of growth-rule
//! parameters), `simulate` (one scenario), `sweep` (all nine scenarios).
//!
//! Exit codes: 0 success, 2 validation or input error, 3 convergence or fit
//! quality failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use pdrsim_core::dynamics::HumanUpdateMode;
use pdrsim_core::engine::{self, Scenario, SimulationConfig};
use pdrsim_core::estimation::{self, EstimationError, PriorSpec};
use pdrsim_core::io::{self, ExportOptions, NodeIds};
use pdrsim_core::net::build_network;
use pdrsim_core::synth::{self, SyntheticSpec};

const EXIT_VALIDATION: u8 = 2;
const EXIT_CONVERGENCE: u8 = 3;

struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn validation(message: impl Into<String>) -> Self {
        CliError { code: EXIT_VALIDATION, message: message.into() }
    }
}

/// Fit-quality and optimizer failures exit 3; every other error is a
/// validation failure.
impl From<EstimationError> for CliError {
    fn from(e: EstimationError) -> Self {
        let code = match e {
            EstimationError::NotConverged { .. }
            | EstimationError::QualityBelowGate { .. }
            | EstimationError::Degenerate(_) => EXIT_CONVERGENCE,
            _ => EXIT_VALIDATION,
        };
        CliError { code, message: e.to_string() }
    }
}

macro_rules! validation_from {
    ($($ty:ty),*) => {
        $(impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::validation(e.to_string())
            }
        })*
    };
}

validation_from!(
    pdrsim_core::io::IoError,
    pdrsim_core::net::NetError,
    pdrsim_core::engine::EngineError,
    pdrsim_core::synth::SynthError,
    std::io::Error,
    serde_json::Error
);

#[derive(Parser)]
#[command(name = "pdrsim", version, about = "Multilayer post-disaster recovery simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic homes, POIs, and county parameters
    GenSynth(GenSynthArgs),
    /// Build the three-layer network and print its structural summary
    BuildNet(BuildNetArgs),
    /// Fit a four-parameter logistic curve to an observation series
    FitCurve(FitCurveArgs),
    /// Fit growth-rule parameters to county series by MAP estimation
    FitDyn(FitDynArgs),
    /// Run one scenario and export results
    Simulate(SimulateArgs),
    /// Run all nine scenarios and export a comparison table
    Sweep(SweepArgs),
}

#[derive(Args)]
struct GenSynthArgs {
    /// Synthetic recipe JSON; omit for the built-in two-county default
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for homes.csv, pois.csv, physical-params.json
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct InputArgs {
    /// Homes CSV (home_id, lat, lon, county, income_usd, owns_house, initial_level)
    #[arg(long)]
    homes: PathBuf,
    /// POIs CSV (poi_id, lat, lon, county, baseline_daily_visits, initial_level)
    #[arg(long)]
    pois: PathBuf,
    /// Per-county JSON: coordinates, curve, dynamics, decision model
    #[arg(long = "physical-params")]
    physical_params: PathBuf,
    /// Neighborhood radius in kilometers for intra-layer edges
    #[arg(long, default_value_t = 1.0)]
    delta_km: f64,
}

#[derive(Args)]
struct BuildNetArgs {
    #[command(flatten)]
    inputs: InputArgs,
    /// Write the summary JSON here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FitCurveArgs {
    /// Observation CSV with columns day,level
    #[arg(long)]
    observations: PathBuf,
    /// Write the fit JSON here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FitDynArgs {
    /// Social-layer observation CSV (day,level)
    #[arg(long)]
    social: PathBuf,
    /// Physical-layer observation CSV (day,level)
    #[arg(long)]
    physical: PathBuf,
    /// Mean human-layer degree of the county
    #[arg(long)]
    n_bar: f64,
    /// Half-Cauchy scale for the rate priors
    #[arg(long, default_value_t = 1.0)]
    beta_scale: f64,
    /// Lower bound of the capacity prior
    #[arg(long, default_value_t = 0.5)]
    k_lower: f64,
    /// Upper bound of the capacity prior
    #[arg(long, default_value_t = 1.0)]
    k_upper: f64,
    /// Observation noise standard deviation
    #[arg(long, default_value_t = estimation::DEFAULT_NOISE_SIGMA)]
    noise_sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the fit JSON here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    /// Daily probability P/M
    Paper,
    /// Daily probability 1-(1-P)^(1/M)
    Exact,
}

impl From<ModeArg> for HumanUpdateMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Paper => HumanUpdateMode::PerDayShare,
            ModeArg::Exact => HumanUpdateMode::CompoundExact,
        }
    }
}

/// Optional run-settings file loaded via --config; command-line flags win.
#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RunSettings {
    total_days: Option<u32>,
    start_label: Option<String>,
    seed: Option<u64>,
    mode: Option<HumanUpdateMode>,
    freeze_probability: Option<bool>,
    strict_eq7: Option<bool>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    inputs: InputArgs,
    /// Run-settings JSON (total_days, start_label, seed, mode,
    /// freeze_probability, strict_eq7)
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Recorded days including day zero
    #[arg(long)]
    total_days: Option<u32>,
    /// Daily-trial rule for household returns
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Read all layers at the previous day in social and human updates
    #[arg(long)]
    strict_eq7: bool,
    /// Compute each household's return probability once at day zero
    #[arg(long)]
    freeze_probability: bool,
    /// Restrict output files; omit to write both CSV and JSON
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Compress the per-node history file
    #[arg(long)]
    gzip_history: bool,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Built-in scenario id 1-9, or a JSON file with lambda_p and lambda_s
    #[arg(long, default_value = "1")]
    scenario: String,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Days sampled by the comparison table
    #[arg(long, value_delimiter = ',', default_values_t = io::DEFAULT_COMPARISON_DAYS)]
    days: Vec<u32>,
}

fn write_json_or_stdout<T: Serialize>(out: Option<&Path>, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn gen_synth(args: &GenSynthArgs) -> Result<(), CliError> {
    let spec = match &args.spec {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            serde_json::from_str::<SyntheticSpec>(&text)?
        }
        None => SyntheticSpec::default(),
    };
    let data = synth::generate(&spec, args.seed)?;
    std::fs::create_dir_all(&args.out)?;
    let homes = args.out.join("homes.csv");
    let pois = args.out.join("pois.csv");
    let params = args.out.join("physical-params.json");
    io::write_homes_csv(&homes, &data.homes)?;
    io::write_pois_csv(&pois, &data.pois)?;
    io::write_county_params(&params, &data.params)?;
    for p in [&homes, &pois, &params] {
        println!("{}", p.display());
    }
    Ok(())
}

fn load_network(
    inputs: &InputArgs,
) -> Result<(pdrsim_core::net::MultilayerNetwork, io::LoadedInputs), CliError> {
    let loaded = io::load_inputs(&inputs.homes, &inputs.pois, &inputs.physical_params)?;
    let net = build_network(
        loaded.humans.clone(),
        loaded.socials.clone(),
        loaded.physicals.clone(),
        inputs.delta_km,
    )?;
    Ok((net, loaded))
}

fn build_net(args: &BuildNetArgs) -> Result<(), CliError> {
    let (net, _loaded) = load_network(&args.inputs)?;
    write_json_or_stdout(args.out.as_deref(), &net.summary()?)
}

#[derive(Serialize)]
struct CurveFitReport {
    a: f64,
    b: f64,
    c: f64,
    d: f64,
    rho: f64,
    sse: f64,
}

fn fit_curve(args: &FitCurveArgs) -> Result<(), CliError> {
    let series = io::read_observations(&args.observations)?;
    let fit = estimation::fit_generalized_logistic(&series)?;
    write_json_or_stdout(
        args.out.as_deref(),
        &CurveFitReport {
            a: fit.curve.a(),
            b: fit.curve.b(),
            c: fit.curve.c(),
            d: fit.curve.d(),
            rho: fit.rho,
            sse: fit.sse,
        },
    )
}

#[derive(Serialize)]
struct DynFitReport {
    beta_s: f64,
    k_s: f64,
    beta_p: f64,
    k_p: f64,
    neg_log_posterior: f64,
    gradient_sup_norm: f64,
    pinned: Vec<&'static str>,
}

fn fit_dyn(args: &FitDynArgs) -> Result<(), CliError> {
    let social = io::read_observations(&args.social)?;
    let physical = io::read_observations(&args.physical)?;
    let prior =
        PriorSpec { beta_scale: args.beta_scale, k_lower: args.k_lower, k_upper: args.k_upper };
    let fit = estimation::fit_dynamic_params(
        &social,
        &physical,
        args.n_bar,
        &prior,
        args.noise_sigma,
        args.seed,
    )?;
    write_json_or_stdout(
        args.out.as_deref(),
        &DynFitReport {
            beta_s: fit.params.beta_s,
            k_s: fit.params.k_s,
            beta_p: fit.params.beta_p,
            k_p: fit.params.k_p,
            neg_log_posterior: fit.neg_log_posterior,
            gradient_sup_norm: fit.gradient_sup_norm,
            pinned: fit.pinned,
        },
    )
}

fn parse_scenario(text: &str) -> Result<Scenario, CliError> {
    if let Ok(id) = text.parse::<u8>() {
        return Ok(Scenario::builtin(id)?);
    }
    let path = Path::new(text);
    if !path.exists() {
        return Err(CliError::validation(format!(
            "scenario '{text}' is neither a number 1-9 nor an existing file"
        )));
    }
    let body = std::fs::read_to_string(path)?;
    let scenario: Scenario = serde_json::from_str(&body)?;
    scenario.validate()?;
    Ok(scenario)
}

fn assemble_config(
    run: &RunArgs,
    counties: Vec<engine::CountyConfig>,
) -> Result<SimulationConfig, CliError> {
    let settings = match &run.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            serde_json::from_str::<RunSettings>(&text)?
        }
        None => RunSettings::default(),
    };
    let mut config = SimulationConfig::new(counties, 0);
    if let Some(v) = settings.total_days {
        config.total_days = v;
    }
    if let Some(v) = settings.start_label {
        config.start_label = v;
    }
    if let Some(v) = settings.seed {
        config.seed = v;
    }
    if let Some(v) = settings.mode {
        config.mode = v;
    }
    if let Some(v) = settings.freeze_probability {
        config.freeze_probability = v;
    }
    if let Some(v) = settings.strict_eq7 {
        config.strict_eq7 = v;
    }
    // Command-line flags override the settings file.
    if let Some(v) = run.seed {
        config.seed = v;
    }
    if let Some(v) = run.total_days {
        config.total_days = v;
    }
    if let Some(v) = run.mode {
        config.mode = v.into();
    }
    if run.strict_eq7 {
        config.strict_eq7 = true;
    }
    if run.freeze_probability {
        config.freeze_probability = true;
    }
    Ok(config)
}

fn export_options(run: &RunArgs) -> ExportOptions {
    ExportOptions {
        csv: !matches!(run.format, Some(FormatArg::Json)),
        json: !matches!(run.format, Some(FormatArg::Csv)),
        gzip_history: run.gzip_history,
    }
}

fn node_ids(loaded: &io::LoadedInputs) -> NodeIds {
    NodeIds {
        home: loaded.home_ids.clone(),
        poi: loaded.poi_ids.clone(),
        county: loaded.physicals.iter().map(|p| p.county).collect(),
    }
}

fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let scenario = parse_scenario(&args.scenario)?;
    let (net, loaded) = load_network(&args.run.inputs)?;
    let config = assemble_config(&args.run, loaded.county_configs.clone())?;
    let output = engine::run(&net, &config, &scenario, &loaded.initial)?;
    let written = io::export_results(
        &args.run.out,
        &output,
        &config,
        &node_ids(&loaded),
        &export_options(&args.run),
    )?;
    for p in &written {
        println!("{}", p.display());
    }
    let last = output.summary.layer_means.last().expect("at least day zero");
    log::info!(
        "final day means: human {:.4}, social {:.4}, physical {:.4}",
        last.human,
        last.social,
        last.physical
    );
    Ok(())
}

fn sweep(args: &SweepArgs) -> Result<(), CliError> {
    let (net, loaded) = load_network(&args.run.inputs)?;
    let config = assemble_config(&args.run, loaded.county_configs.clone())?;
    let ids = node_ids(&loaded);

    // Scenarios share only the immutable network; run them in parallel.
    use rayon::prelude::*;
    let outputs: Result<Vec<_>, CliError> = (1..=9u8)
        .into_par_iter()
        .map(|id| {
            let scenario = Scenario::builtin(id).map_err(CliError::from)?;
            let output =
                engine::run(&net, &config, &scenario, &loaded.initial).map_err(CliError::from)?;
            Ok((id, output))
        })
        .collect();
    let outputs = outputs?;

    let mut written = Vec::new();
    for (id, output) in &outputs {
        let dir = args.run.out.join(format!("scenario_{id}"));
        written.extend(io::export_results(
            &dir,
            output,
            &config,
            &ids,
            &export_options(&args.run),
        )?);
    }
    let summaries: Vec<_> = outputs.iter().map(|(_, o)| o.summary.clone()).collect();
    let rows = io::comparison_table(&summaries, &args.days);
    let comparison = args.run.out.join("comparison.csv");
    io::write_comparison_csv(&comparison, &rows)?;
    written.push(comparison);

    for p in &written {
        println!("{}", p.display());
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::GenSynth(args) => gen_synth(args),
        Command::BuildNet(args) => build_net(args),
        Command::FitCurve(args) => fit_curve(args),
        Command::FitDyn(args) => fit_dyn(args),
        Command::Simulate(args) => simulate(args),
        Command::Sweep(args) => sweep(args),
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
