//! Input table schemas, result export, and their validation.
//!
//! Inputs are three files: a homes CSV, a POIs CSV, and a per-county
//! parameter JSON (baseline curve, growth-rule parameters, decision model,
//! and the county's physical-node coordinates). Row order defines node
//! indices. Exports are layer-mean curves, stratified means, the full
//! per-node history (optionally gzip-compressed), a scenario comparison
//! table, and a summary JSON that embeds the full configuration so a run can
//! be reproduced from its outputs.
//!
//! CSV dialect: UTF-8, comma separator, mandatory header row, `.` decimal
//! point. Floats are printed in their shortest round-trip form, so re-parsing
//! an exported file recovers bit-identical values.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use flate2::write::GzEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::DynamicParams;
use crate::dynamics::LogisticCurve;
use crate::engine::{
    CountyConfig, InitialLevels, ModelChoice, PhysicalInit, RunOutput, RunSummary, Scenario,
    SimulationConfig,
};
use crate::estimation::{EstimationError, ObservationSeries};
use crate::geo::GeoPoint;
use crate::net::{CountyId, HumanNode, Layer, NodeId, PhysicalNode, SocialNode};

/// Days sampled by the scenario comparison table when none are requested.
pub const DEFAULT_COMPARISON_DAYS: [u32; 4] = [0, 7, 30, 60];

/// Errors raised while reading inputs or writing results.
#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Malformed { path: PathBuf, message: String },
    /// Data row numbers are 1-based and exclude the header.
    #[error("{path}, row {row}, column {column}: {message}")]
    Row { path: PathBuf, row: usize, column: &'static str, message: String },
    #[error("{path}, row {row}: duplicate id {id}")]
    DuplicateId { path: PathBuf, row: usize, id: u32 },
    #[error("{path}, row {row}, column county: county {county} has no parameter entry")]
    UnknownCounty { path: PathBuf, row: usize, county: CountyId },
    #[error("{path}: duplicate county {county} in parameter file")]
    DuplicateCounty { path: PathBuf, county: CountyId },
    #[error(transparent)]
    Estimation(#[from] EstimationError),
}

fn file_err(path: &Path, source: std::io::Error) -> IoError {
    IoError::File { path: path.to_path_buf(), source }
}

/// One homes-table row. `owns_house` and `initial_level` are 0/1 flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomeRow {
    pub home_id: u32,
    pub lat: f64,
    pub lon: f64,
    pub county: CountyId,
    pub income_usd: f64,
    pub owns_house: u8,
    pub initial_level: u8,
}

/// One POIs-table row. `initial_level` is day-0 visits divided by baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoiRow {
    pub poi_id: u32,
    pub lat: f64,
    pub lon: f64,
    pub county: CountyId,
    pub baseline_daily_visits: f64,
    pub initial_level: f64,
}

/// Per-county parameter entry: physical-node coordinates, growth-rule
/// parameters, baseline recovery curve, and household decision model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountyParams {
    pub county: CountyId,
    pub lat: f64,
    pub lon: f64,
    pub dynamics: DynamicParams,
    pub curve: LogisticCurve,
    pub model: ModelChoice,
}

/// Validated node lists plus day-zero levels, ready for network construction.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedInputs {
    pub humans: Vec<HumanNode>,
    pub socials: Vec<SocialNode>,
    pub physicals: Vec<PhysicalNode>,
    pub county_configs: Vec<CountyConfig>,
    pub initial: InitialLevels,
    /// Original ids by node index, used to label exported histories.
    pub home_ids: Vec<u32>,
    pub poi_ids: Vec<u32>,
}

fn read_csv_rows<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, IoError> {
    let file = File::open(path).map_err(|e| file_err(path, e))?;
    let mut reader = csv::Reader::from_reader(BufReader::new(file));
    let mut rows = Vec::new();
    for (i, record) in reader.deserialize::<T>().enumerate() {
        match record {
            Ok(row) => rows.push(row),
            Err(e) => {
                return Err(IoError::Malformed {
                    path: path.to_path_buf(),
                    message: format!("row {}: {e}", i + 1),
                })
            }
        }
    }
    Ok(rows)
}

fn write_csv_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), IoError> {
    let file = File::create(path).map_err(|e| file_err(path, e))?;
    let mut writer = csv::Writer::from_writer(BufWriter::new(file));
    for row in rows {
        writer.serialize(row).map_err(|e| IoError::Malformed {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    }
    writer.flush().map_err(|e| file_err(path, e))?;
    Ok(())
}

pub fn read_homes_csv(path: &Path) -> Result<Vec<HomeRow>, IoError> {
    read_csv_rows(path)
}

pub fn write_homes_csv(path: &Path, rows: &[HomeRow]) -> Result<(), IoError> {
    write_csv_rows(path, rows)
}

pub fn read_pois_csv(path: &Path) -> Result<Vec<PoiRow>, IoError> {
    read_csv_rows(path)
}

pub fn write_pois_csv(path: &Path, rows: &[PoiRow]) -> Result<(), IoError> {
    write_csv_rows(path, rows)
}

pub fn read_county_params(path: &Path) -> Result<Vec<CountyParams>, IoError> {
    let file = File::open(path).map_err(|e| file_err(path, e))?;
    let params: Vec<CountyParams> =
        serde_json::from_reader(BufReader::new(file)).map_err(|e| IoError::Malformed {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    let mut seen = std::collections::BTreeSet::new();
    for p in &params {
        if !seen.insert(p.county) {
            return Err(IoError::DuplicateCounty { path: path.to_path_buf(), county: p.county });
        }
    }
    Ok(params)
}

pub fn write_county_params(path: &Path, params: &[CountyParams]) -> Result<(), IoError> {
    let mut bytes = serde_json::to_vec_pretty(params).expect("county params serialize");
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|e| file_err(path, e))
}

/// Reads and cross-validates the three input files. Row order becomes node
/// index order; original ids are kept for export labeling.
pub fn load_inputs(
    homes_path: &Path,
    pois_path: &Path,
    params_path: &Path,
) -> Result<LoadedInputs, IoError> {
    let params = read_county_params(params_path)?;
    let counties: std::collections::BTreeSet<CountyId> =
        params.iter().map(|p| p.county).collect();

    let home_rows = read_homes_csv(homes_path)?;
    let poi_rows = read_pois_csv(pois_path)?;

    let mut humans = Vec::with_capacity(home_rows.len());
    let mut home_ids = Vec::with_capacity(home_rows.len());
    let mut human_levels = Vec::with_capacity(home_rows.len());
    let mut seen_home = std::collections::BTreeSet::new();
    for (i, row) in home_rows.iter().enumerate() {
        let rownum = i + 1;
        if !seen_home.insert(row.home_id) {
            return Err(IoError::DuplicateId {
                path: homes_path.to_path_buf(),
                row: rownum,
                id: row.home_id,
            });
        }
        let location = GeoPoint::new(row.lat, row.lon).map_err(|e| IoError::Row {
            path: homes_path.to_path_buf(),
            row: rownum,
            column: "lat",
            message: e.to_string(),
        })?;
        if !counties.contains(&row.county) {
            return Err(IoError::UnknownCounty {
                path: homes_path.to_path_buf(),
                row: rownum,
                county: row.county,
            });
        }
        if !row.income_usd.is_finite() || row.income_usd < 0.0 {
            return Err(IoError::Row {
                path: homes_path.to_path_buf(),
                row: rownum,
                column: "income_usd",
                message: format!("income {} must be finite and non-negative", row.income_usd),
            });
        }
        if row.owns_house > 1 {
            return Err(IoError::Row {
                path: homes_path.to_path_buf(),
                row: rownum,
                column: "owns_house",
                message: format!("value {} must be 0 or 1", row.owns_house),
            });
        }
        if row.initial_level > 1 {
            return Err(IoError::Row {
                path: homes_path.to_path_buf(),
                row: rownum,
                column: "initial_level",
                message: format!("value {} must be 0 or 1", row.initial_level),
            });
        }
        humans.push(HumanNode {
            id: NodeId { layer: Layer::Human, index: i as u32 },
            location,
            county: row.county,
            income_usd: row.income_usd,
            owns_house: row.owns_house == 1,
        });
        home_ids.push(row.home_id);
        human_levels.push(f64::from(row.initial_level));
    }

    let mut socials = Vec::with_capacity(poi_rows.len());
    let mut poi_ids = Vec::with_capacity(poi_rows.len());
    let mut social_levels = Vec::with_capacity(poi_rows.len());
    let mut seen_poi = std::collections::BTreeSet::new();
    for (i, row) in poi_rows.iter().enumerate() {
        let rownum = i + 1;
        if !seen_poi.insert(row.poi_id) {
            return Err(IoError::DuplicateId {
                path: pois_path.to_path_buf(),
                row: rownum,
                id: row.poi_id,
            });
        }
        let location = GeoPoint::new(row.lat, row.lon).map_err(|e| IoError::Row {
            path: pois_path.to_path_buf(),
            row: rownum,
            column: "lat",
            message: e.to_string(),
        })?;
        if !counties.contains(&row.county) {
            return Err(IoError::UnknownCounty {
                path: pois_path.to_path_buf(),
                row: rownum,
                county: row.county,
            });
        }
        if !row.baseline_daily_visits.is_finite() || row.baseline_daily_visits <= 0.0 {
            return Err(IoError::Row {
                path: pois_path.to_path_buf(),
                row: rownum,
                column: "baseline_daily_visits",
                message: format!("value {} must be positive", row.baseline_daily_visits),
            });
        }
        if !row.initial_level.is_finite() || !(0.0..=1.0).contains(&row.initial_level) {
            return Err(IoError::Row {
                path: pois_path.to_path_buf(),
                row: rownum,
                column: "initial_level",
                message: format!("value {} must lie in [0, 1]", row.initial_level),
            });
        }
        socials.push(SocialNode {
            id: NodeId { layer: Layer::Social, index: i as u32 },
            location,
            county: row.county,
            baseline_daily_visits: row.baseline_daily_visits,
        });
        poi_ids.push(row.poi_id);
        social_levels.push(row.initial_level);
    }

    let mut physicals = Vec::with_capacity(params.len());
    let mut county_configs = Vec::with_capacity(params.len());
    for (i, p) in params.iter().enumerate() {
        let location = GeoPoint::new(p.lat, p.lon).map_err(|e| IoError::Malformed {
            path: params_path.to_path_buf(),
            message: format!("county {}: {e}", p.county),
        })?;
        physicals.push(PhysicalNode {
            id: NodeId { layer: Layer::Physical, index: i as u32 },
            county: p.county,
            location,
        });
        county_configs.push(CountyConfig {
            county: p.county,
            dynamics: p.dynamics,
            curve: p.curve,
            model: p.model.clone(),
        });
    }

    Ok(LoadedInputs {
        humans,
        socials,
        physicals,
        county_configs,
        initial: InitialLevels {
            human: human_levels,
            social: social_levels,
            physical: PhysicalInit::FromCurve,
        },
        home_ids,
        poi_ids,
    })
}

/// Reads an observation series CSV with columns `day,level`.
pub fn read_observations(path: &Path) -> Result<ObservationSeries, IoError> {
    #[derive(Deserialize)]
    struct ObsRow {
        day: u32,
        level: f64,
    }
    let rows: Vec<ObsRow> = read_csv_rows(path)?;
    let points: Vec<(u32, f64)> = rows.into_iter().map(|r| (r.day, r.level)).collect();
    Ok(ObservationSeries::new(points)?)
}

/// Writes an observation series CSV with columns `day,level`.
pub fn write_observations(path: &Path, series: &ObservationSeries) -> Result<(), IoError> {
    #[derive(Serialize)]
    struct ObsRow {
        day: u32,
        level: f64,
    }
    let rows: Vec<ObsRow> =
        series.points().iter().map(|&(day, level)| ObsRow { day, level }).collect();
    write_csv_rows(path, &rows)
}

/// Original node ids by index, used to label per-node history rows.
/// Physical nodes are labeled by county id.
#[derive(Debug, Clone, Default)]
pub struct NodeIds {
    pub home: Vec<u32>,
    pub poi: Vec<u32>,
    pub county: Vec<u32>,
}

/// Which result files to write.
#[derive(Debug, Clone)]
pub struct ExportOptions {
    pub csv: bool,
    pub json: bool,
    /// Compress the per-node history file (it dwarfs the other outputs).
    pub gzip_history: bool,
}

impl Default for ExportOptions {
    fn default() -> Self {
        ExportOptions { csv: true, json: true, gzip_history: false }
    }
}

/// Summary document: the full configuration plus aggregate results, enough
/// to reproduce the run given the same input tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryDocument {
    pub config: SimulationConfig,
    pub scenario: Scenario,
    pub summary: RunSummary,
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    fs::write(path, bytes).map_err(|e| file_err(path, e))
}

fn curves_csv(summary: &RunSummary) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["day", "layer", "county", "mean"]).expect("header");
    for layer in [Layer::Human, Layer::Social, Layer::Physical] {
        for (day, means) in summary.layer_means.iter().enumerate() {
            let v = match layer {
                Layer::Human => means.human,
                Layer::Social => means.social,
                Layer::Physical => means.physical,
            };
            w.write_record([
                day.to_string(),
                layer.to_string(),
                "all".to_string(),
                v.to_string(),
            ])
            .expect("record");
        }
        for (county, means) in &summary.county_means {
            let series = match layer {
                Layer::Human => &means.human,
                Layer::Social => &means.social,
                Layer::Physical => &means.physical,
            };
            for (day, v) in series.iter().enumerate() {
                w.write_record([
                    day.to_string(),
                    layer.to_string(),
                    county.to_string(),
                    v.to_string(),
                ])
                .expect("record");
            }
        }
    }
    w.into_inner().expect("csv buffer")
}

fn strata_csv(summary: &RunSummary) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["day", "stratum", "group", "mean"]).expect("header");
    for (group, series) in &summary.tenure_means {
        for (day, v) in series.iter().enumerate() {
            w.write_record([
                day.to_string(),
                "housing_tenure".to_string(),
                group.clone(),
                v.to_string(),
            ])
            .expect("record");
        }
    }
    for (group, series) in &summary.income_band_means {
        for (day, v) in series.iter().enumerate() {
            w.write_record([
                day.to_string(),
                "income_band".to_string(),
                group.clone(),
                v.to_string(),
            ])
            .expect("record");
        }
    }
    w.into_inner().expect("csv buffer")
}

fn history_csv(output: &RunOutput, ids: &NodeIds) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["day", "layer", "node", "level"]).expect("header");
    let label = |ids: &[u32], i: usize| -> u32 {
        ids.get(i).copied().unwrap_or(i as u32)
    };
    for (day, levels) in output.history.human.iter().enumerate() {
        for (i, v) in levels.iter().enumerate() {
            w.write_record([
                day.to_string(),
                Layer::Human.to_string(),
                label(&ids.home, i).to_string(),
                v.to_string(),
            ])
            .expect("record");
        }
    }
    for (day, levels) in output.history.social.iter().enumerate() {
        for (i, v) in levels.iter().enumerate() {
            w.write_record([
                day.to_string(),
                Layer::Social.to_string(),
                label(&ids.poi, i).to_string(),
                v.to_string(),
            ])
            .expect("record");
        }
    }
    for (day, levels) in output.history.physical.iter().enumerate() {
        for (i, v) in levels.iter().enumerate() {
            w.write_record([
                day.to_string(),
                Layer::Physical.to_string(),
                label(&ids.county, i).to_string(),
                v.to_string(),
            ])
            .expect("record");
        }
    }
    w.into_inner().expect("csv buffer")
}

/// Writes result files into `out_dir` and returns the paths written:
/// `curves.csv`, `strata.csv`, `history.csv[.gz]` when CSV output is on,
/// `summary.json` when JSON output is on.
pub fn export_results(
    out_dir: &Path,
    output: &RunOutput,
    config: &SimulationConfig,
    ids: &NodeIds,
    options: &ExportOptions,
) -> Result<Vec<PathBuf>, IoError> {
    fs::create_dir_all(out_dir).map_err(|e| file_err(out_dir, e))?;
    let mut written = Vec::new();

    if options.csv {
        let curves = out_dir.join("curves.csv");
        write_bytes(&curves, &curves_csv(&output.summary))?;
        written.push(curves);

        let strata = out_dir.join("strata.csv");
        write_bytes(&strata, &strata_csv(&output.summary))?;
        written.push(strata);

        let history = history_csv(output, ids);
        if options.gzip_history {
            let path = out_dir.join("history.csv.gz");
            let file = File::create(&path).map_err(|e| file_err(&path, e))?;
            let mut enc = GzEncoder::new(BufWriter::new(file), Compression::default());
            enc.write_all(&history).map_err(|e| file_err(&path, e))?;
            enc.finish().map_err(|e| file_err(&path, e))?;
            written.push(path);
        } else {
            let path = out_dir.join("history.csv");
            write_bytes(&path, &history)?;
            written.push(path);
        }
    }

    if options.json {
        let path = out_dir.join("summary.json");
        let doc = SummaryDocument {
            config: config.clone(),
            scenario: output.summary.scenario,
            summary: output.summary.clone(),
        };
        let mut bytes = serde_json::to_vec_pretty(&doc).expect("summary serialize");
        bytes.push(b'\n');
        write_bytes(&path, &bytes)?;
        written.push(path);
    }

    Ok(written)
}

pub fn read_summary(path: &Path) -> Result<SummaryDocument, IoError> {
    let file = File::open(path).map_err(|e| file_err(path, e))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| IoError::Malformed {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// One row of the scenario comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub scenario: String,
    pub lambda_p: f64,
    pub lambda_s: f64,
    pub day: u32,
    pub human_mean: f64,
    pub social_mean: f64,
    pub physical_mean: f64,
}

/// Builds the cross-scenario table, sampling each summary at the requested
/// days (default 0, 7, 30, 60). Days beyond the recorded horizon clamp to
/// the last recorded day, which is then the day value written.
pub fn comparison_table(summaries: &[RunSummary], days: &[u32]) -> Vec<ComparisonRow> {
    let mut rows = Vec::new();
    for summary in summaries {
        let last = summary.layer_means.len().saturating_sub(1) as u32;
        let mut sampled: Vec<u32> = days.iter().map(|&d| d.min(last)).collect();
        sampled.dedup();
        let name = match summary.scenario.id {
            Some(id) => id.to_string(),
            None => "custom".to_string(),
        };
        for day in sampled {
            let means = &summary.layer_means[day as usize];
            rows.push(ComparisonRow {
                scenario: name.clone(),
                lambda_p: summary.scenario.lambda_p,
                lambda_s: summary.scenario.lambda_s,
                day,
                human_mean: means.human,
                social_mean: means.social,
                physical_mean: means.physical,
            });
        }
    }
    rows
}

pub fn write_comparison_csv(path: &Path, rows: &[ComparisonRow]) -> Result<(), IoError> {
    write_csv_rows(path, rows)
}

/// Reads a possibly gzip-compressed file fully into memory.
pub fn read_maybe_gzip(path: &Path) -> Result<Vec<u8>, IoError> {
    let bytes = fs::read(path).map_err(|e| file_err(path, e))?;
    if path.extension().is_some_and(|e| e == "gz") {
        let mut out = Vec::new();
        flate2::read::GzDecoder::new(&bytes[..])
            .read_to_end(&mut out)
            .map_err(|e| file_err(path, e))?;
        Ok(out)
    } else {
        Ok(bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics;
    use crate::engine::{self, StratumKind};
    use crate::net::build_network;
    use tempfile::TempDir;

    fn sample_params() -> Vec<CountyParams> {
        vec![
            CountyParams {
                county: 0,
                lat: 29.4,
                lon: -95.6,
                dynamics: DynamicParams::harris(),
                curve: LogisticCurve::new(0.07, 0.24, 1.2, 1.5).unwrap(),
                model: ModelChoice::Harris,
            },
            CountyParams {
                county: 1,
                lat: 29.7,
                lon: -95.6,
                dynamics: DynamicParams::other(dynamics::N_BAR_GALVESTON),
                curve: LogisticCurve::new(0.08, 0.22, 1.0, 2.0).unwrap(),
                model: ModelChoice::Other,
            },
        ]
    }

    fn sample_homes() -> Vec<HomeRow> {
        vec![
            HomeRow {
                home_id: 10,
                lat: 29.40,
                lon: -95.60,
                county: 0,
                income_usd: 52_500.0,
                owns_house: 1,
                initial_level: 0,
            },
            HomeRow {
                home_id: 11,
                lat: 29.41,
                lon: -95.60,
                county: 0,
                income_usd: 15_000.0,
                owns_house: 0,
                initial_level: 1,
            },
            HomeRow {
                home_id: 12,
                lat: 29.70,
                lon: -95.61,
                county: 1,
                income_usd: 97_500.0,
                owns_house: 1,
                initial_level: 0,
            },
        ]
    }

    fn sample_pois() -> Vec<PoiRow> {
        vec![
            PoiRow {
                poi_id: 5,
                lat: 29.402,
                lon: -95.601,
                county: 0,
                baseline_daily_visits: 120.0,
                initial_level: 0.45,
            },
            PoiRow {
                poi_id: 6,
                lat: 29.701,
                lon: -95.612,
                county: 1,
                baseline_daily_visits: 60.0,
                initial_level: 0.50,
            },
        ]
    }

    fn write_sample_inputs(dir: &Path) -> (PathBuf, PathBuf, PathBuf) {
        let homes = dir.join("homes.csv");
        let pois = dir.join("pois.csv");
        let params = dir.join("params.json");
        write_homes_csv(&homes, &sample_homes()).unwrap();
        write_pois_csv(&pois, &sample_pois()).unwrap();
        write_county_params(&params, &sample_params()).unwrap();
        (homes, pois, params)
    }

    #[test]
    fn well_formed_homes_load_as_nodes() {
        let dir = TempDir::new().unwrap();
        let (homes, pois, params) = write_sample_inputs(dir.path());
        let loaded = load_inputs(&homes, &pois, &params).unwrap();
        assert_eq!(loaded.humans.len(), 3);
        assert_eq!(loaded.socials.len(), 2);
        assert_eq!(loaded.physicals.len(), 2);
        assert_eq!(loaded.home_ids, vec![10, 11, 12]);
        // Row order becomes node index order.
        assert_eq!(loaded.humans[2].id.index, 2);
        assert_eq!(loaded.humans[2].county, 1);
        assert!(loaded.humans[0].owns_house);
        assert_eq!(loaded.initial.human, vec![0.0, 1.0, 0.0]);
        assert_eq!(loaded.initial.social, vec![0.45, 0.50]);
        assert_eq!(loaded.initial.physical, PhysicalInit::FromCurve);
    }

    #[test]
    fn invalid_owns_house_names_row_and_column() {
        let dir = TempDir::new().unwrap();
        let mut rows = sample_homes();
        rows[1].owns_house = 2;
        let homes = dir.path().join("homes.csv");
        write_homes_csv(&homes, &rows).unwrap();
        let pois = dir.path().join("pois.csv");
        write_pois_csv(&pois, &sample_pois()).unwrap();
        let params = dir.path().join("params.json");
        write_county_params(&params, &sample_params()).unwrap();

        let err = load_inputs(&homes, &pois, &params).unwrap_err();
        match err {
            IoError::Row { row, column, .. } => {
                assert_eq!(row, 2);
                assert_eq!(column, "owns_house");
            }
            other => panic!("expected row error, got {other}"),
        }
    }

    #[test]
    fn duplicate_and_unknown_ids_are_rejected() {
        let dir = TempDir::new().unwrap();
        let pois = dir.path().join("pois.csv");
        write_pois_csv(&pois, &sample_pois()).unwrap();
        let params = dir.path().join("params.json");
        write_county_params(&params, &sample_params()).unwrap();

        let mut dup = sample_homes();
        dup[2].home_id = 10;
        let homes = dir.path().join("homes.csv");
        write_homes_csv(&homes, &dup).unwrap();
        assert!(matches!(
            load_inputs(&homes, &pois, &params),
            Err(IoError::DuplicateId { row: 3, id: 10, .. })
        ));

        let mut stray = sample_homes();
        stray[0].county = 9;
        write_homes_csv(&homes, &stray).unwrap();
        assert!(matches!(
            load_inputs(&homes, &pois, &params),
            Err(IoError::UnknownCounty { row: 1, county: 9, .. })
        ));
    }

    #[test]
    fn tables_round_trip_through_disk() {
        let dir = TempDir::new().unwrap();
        let homes_path = dir.path().join("homes.csv");
        let pois_path = dir.path().join("pois.csv");
        let params_path = dir.path().join("params.json");

        write_homes_csv(&homes_path, &sample_homes()).unwrap();
        write_pois_csv(&pois_path, &sample_pois()).unwrap();
        write_county_params(&params_path, &sample_params()).unwrap();

        assert_eq!(read_homes_csv(&homes_path).unwrap(), sample_homes());
        assert_eq!(read_pois_csv(&pois_path).unwrap(), sample_pois());
        assert_eq!(read_county_params(&params_path).unwrap(), sample_params());
    }

    #[test]
    fn observation_csv_round_trips() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("obs.csv");
        let series =
            ObservationSeries::new(vec![(0, 0.25), (7, 0.4), (30, 0.81), (59, 0.93)]).unwrap();
        write_observations(&path, &series).unwrap();
        let back = read_observations(&path).unwrap();
        assert_eq!(back.points(), series.points());
    }

    fn small_run() -> (crate::net::MultilayerNetwork, SimulationConfig, RunOutput, NodeIds) {
        let dir = TempDir::new().unwrap();
        let (homes, pois, params) = write_sample_inputs(dir.path());
        let loaded = load_inputs(&homes, &pois, &params).unwrap();
        let net = build_network(
            loaded.humans.clone(),
            loaded.socials.clone(),
            loaded.physicals.clone(),
            5.0,
        )
        .unwrap();
        let mut config = engine::SimulationConfig::new(loaded.county_configs.clone(), 3);
        config.total_days = 10;
        let scenario = Scenario::builtin(1).unwrap();
        let output = engine::run(&net, &config, &scenario, &loaded.initial).unwrap();
        let ids = NodeIds {
            home: loaded.home_ids.clone(),
            poi: loaded.poi_ids.clone(),
            county: loaded.physicals.iter().map(|p| p.county).collect(),
        };
        (net, config, output, ids)
    }

    #[test]
    fn exports_are_reproducible_byte_for_byte() {
        let (_net, config, output, ids) = small_run();
        let dir_a = TempDir::new().unwrap();
        let dir_b = TempDir::new().unwrap();
        let opts = ExportOptions { csv: true, json: true, gzip_history: true };
        let a = export_results(dir_a.path(), &output, &config, &ids, &opts).unwrap();
        let b = export_results(dir_b.path(), &output, &config, &ids, &opts).unwrap();
        assert_eq!(a.len(), b.len());
        for (pa, pb) in a.iter().zip(b.iter()) {
            let ba = fs::read(pa).unwrap();
            let bb = fs::read(pb).unwrap();
            assert_eq!(ba, bb, "{} differs", pa.display());
        }
    }

    #[test]
    fn summary_json_reloads_and_reruns_identically() {
        let (net, config, output, ids) = small_run();
        let dir = TempDir::new().unwrap();
        export_results(dir.path(), &output, &config, &ids, &ExportOptions::default()).unwrap();

        let doc = read_summary(&dir.path().join("summary.json")).unwrap();
        assert_eq!(doc.config, config);

        // Re-running from the embedded config reproduces the files.
        let loaded_initial = InitialLevels {
            human: output.history.human[0].clone(),
            social: output.history.social[0].clone(),
            physical: PhysicalInit::Explicit(output.history.physical[0].clone()),
        };
        let rerun = engine::run(&net, &doc.config, &doc.scenario, &loaded_initial).unwrap();
        let dir2 = TempDir::new().unwrap();
        export_results(dir2.path(), &rerun, &doc.config, &ids, &ExportOptions::default()).unwrap();
        for name in ["curves.csv", "strata.csv", "history.csv", "summary.json"] {
            let a = fs::read(dir.path().join(name)).unwrap();
            let b = fs::read(dir2.path().join(name)).unwrap();
            assert_eq!(a, b, "{name} differs after rerun");
        }
    }

    #[test]
    fn single_day_run_exports_one_row_per_series() {
        let (net, mut config, _output, ids) = small_run();
        config.total_days = 1;
        let loaded_initial = InitialLevels {
            human: vec![0.0, 1.0, 0.0],
            social: vec![0.45, 0.50],
            physical: PhysicalInit::FromCurve,
        };
        let output =
            engine::run(&net, &config, &Scenario::builtin(1).unwrap(), &loaded_initial).unwrap();
        let dir = TempDir::new().unwrap();
        export_results(dir.path(), &output, &config, &ids, &ExportOptions::default()).unwrap();

        let curves = fs::read_to_string(dir.path().join("curves.csv")).unwrap();
        let mut day_values = std::collections::BTreeSet::new();
        for line in curves.lines().skip(1) {
            day_values.insert(line.split(',').next().unwrap().to_string());
        }
        assert_eq!(day_values.len(), 1);
        assert!(day_values.contains("0"));
    }

    /// Exported means must equal a recomputation from the exported raw
    /// history; shortest round-trip float printing makes this exact.
    #[test]
    fn exported_means_match_history_recount() {
        let (_net, config, output, ids) = small_run();
        let dir = TempDir::new().unwrap();
        export_results(dir.path(), &output, &config, &ids, &ExportOptions::default()).unwrap();

        let history = fs::read_to_string(dir.path().join("history.csv")).unwrap();
        let mut by_day_layer: std::collections::BTreeMap<(String, String), Vec<f64>> =
            std::collections::BTreeMap::new();
        for line in history.lines().skip(1) {
            let parts: Vec<&str> = line.split(',').collect();
            by_day_layer
                .entry((parts[0].to_string(), parts[1].to_string()))
                .or_default()
                .push(parts[3].parse().unwrap());
        }

        let curves = fs::read_to_string(dir.path().join("curves.csv")).unwrap();
        let mut checked = 0;
        for line in curves.lines().skip(1) {
            let parts: Vec<&str> = line.split(',').collect();
            if parts[2] != "all" {
                continue;
            }
            let levels = &by_day_layer[&(parts[0].to_string(), parts[1].to_string())];
            let mean: f64 = levels.iter().sum::<f64>() / levels.len() as f64;
            let exported: f64 = parts[3].parse().unwrap();
            assert_eq!(exported, mean, "day {} layer {}", parts[0], parts[1]);
            checked += 1;
        }
        assert_eq!(checked, 30);
    }

    #[test]
    fn gzip_history_round_trips() {
        let (_net, config, output, ids) = small_run();
        let dir = TempDir::new().unwrap();
        let plain =
            export_results(dir.path().join("p").as_path(), &output, &config, &ids, &ExportOptions {
                gzip_history: false,
                ..ExportOptions::default()
            })
            .unwrap();
        let zipped =
            export_results(dir.path().join("z").as_path(), &output, &config, &ids, &ExportOptions {
                gzip_history: true,
                ..ExportOptions::default()
            })
            .unwrap();
        let plain_bytes = fs::read(&plain[2]).unwrap();
        let unzipped = read_maybe_gzip(&zipped[2]).unwrap();
        assert_eq!(plain_bytes, unzipped);
    }

    #[test]
    fn comparison_table_defaults_and_clamps() {
        assert_eq!(DEFAULT_COMPARISON_DAYS, [0, 7, 30, 60]);
        let (_net, _config, output, _ids) = small_run();
        // The sample run records 10 days, so 30 and 60 clamp to day 9.
        let rows = comparison_table(
            std::slice::from_ref(&output.summary),
            &DEFAULT_COMPARISON_DAYS,
        );
        let days: Vec<u32> = rows.iter().map(|r| r.day).collect();
        assert_eq!(days, vec![0, 7, 9]);
        assert_eq!(rows[0].scenario, "1");
        assert_eq!(rows[0].lambda_p, 1.0);
        // Sampled values match the summary directly.
        assert_eq!(rows[1].social_mean, output.summary.layer_means[7].social);
    }

    #[test]
    fn stratified_export_covers_every_group() {
        let (net, config, output, ids) = small_run();
        let dir = TempDir::new().unwrap();
        export_results(dir.path(), &output, &config, &ids, &ExportOptions::default()).unwrap();
        let strata = fs::read_to_string(dir.path().join("strata.csv")).unwrap();
        let mut groups = std::collections::BTreeSet::new();
        for line in strata.lines().skip(1) {
            let parts: Vec<&str> = line.split(',').collect();
            groups.insert((parts[1].to_string(), parts[2].to_string()));
        }
        let tenure = engine::stratified_means(&net, &output.history.human, StratumKind::HousingTenure);
        let bands = engine::stratified_means(&net, &output.history.human, StratumKind::IncomeBand);
        assert_eq!(groups.len(), tenure.len() + bands.len());
    }
}
