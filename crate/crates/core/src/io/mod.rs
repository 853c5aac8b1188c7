//! Dataset files, persistence, the metadata catalog and a seeded scenario
//! generator with recorded ground truth.
//!
//! Every file starts with a version line (`# mobikg-<kind> v1` for CSV, a
//! `"format"` member for JSON). Loaders accept files without one but reject
//! a mismatching version.

mod bench;
mod catalog;
mod features;
mod load;
mod pipeline;
mod scenario;

pub use bench::{bench_pkg, BenchRow, BENCH_QUERIES};
pub use catalog::{read_catalog, resolve_uri, write_catalog, CatalogEntry};
pub use features::{build_region_samples, class_counts, daily_times, SampleConfig};
pub use load::{
    load_dataset, write_cases_csv, write_places_csv, write_regions_geojson, write_routes_csv, write_trajectories_csv,
    write_users_csv, Dataset, DatasetPaths, Schema,
};
pub use pipeline::{context_events, dataset_start, derive_pkg, locator, mine_patterns, DeriveCounts};
pub use scenario::{
    read_scenario_dir, synthesize_scenario, DeriveSettings, FlowPlant, GroundTruth, GroupPlant, HotspotPlant,
    PlantedFlow, PlantedGroup, PlantedHotspot, Scenario, ScenarioConfig, SCENARIO_FILES, TRUTH_FORMAT,
};

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::pkg::{Pkg, PkgError};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{}:{line}: {msg}", file.display())]
    Parse { file: PathBuf, line: u64, msg: String },
    #[error("{}: unknown {kind} ids: {}", file.display(), ids.join(", "))]
    Dangling { file: PathBuf, kind: &'static str, ids: Vec<String> },
    #[error("{}: expected version line {expected:?}, found {found:?}", file.display())]
    Version { file: PathBuf, expected: String, found: String },
    #[error("invalid scenario config: {0}")]
    Config(String),
    #[error("inconsistent plant: {0}")]
    Plant(String),
    #[error("{}: {source}", path.display())]
    File { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Pkg(#[from] PkgError),
    #[error(transparent)]
    Miner(#[from] crate::mining::MinerError),
    #[error(transparent)]
    Geo(#[from] crate::geo::GeoError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn file_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::File { path: path.to_path_buf(), source }
}

/// Writes the store in the line-delimited fact format.
pub fn save_pkg(pkg: &Pkg, path: &Path) -> Result<(), IoError> {
    let f = std::fs::File::create(path).map_err(file_err(path))?;
    let mut w = std::io::BufWriter::new(f);
    pkg.save(&mut w)?;
    std::io::Write::flush(&mut w).map_err(file_err(path))?;
    Ok(())
}

/// Loads a fact file; a file holding only the version line is an empty store.
pub fn load_pkg(path: &Path) -> Result<Pkg, IoError> {
    let f = std::fs::File::open(path).map_err(file_err(path))?;
    Pkg::load(std::io::BufReader::new(f)).map_err(|e| match e {
        PkgError::Parse { line, msg } => IoError::Parse { file: path.to_path_buf(), line: line as u64, msg },
        other => other.into(),
    })
}

/// `# mobikg-<kind> v1`
pub fn version_line(kind: &str) -> String {
    format!("# mobikg-{kind} v1")
}

#[cfg(test)]
mod tests;
